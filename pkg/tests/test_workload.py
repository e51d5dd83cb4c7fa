import numpy as np
import pytest

from cimsim.workload import OpCount, TransformerConfig, count_ops, preset_config


def matmul_flops(m, k, n):
    # one multiply + one add per MAC
    return 2 * m * k * n


def brute_force_ops(cfg):
    """Flop counter over the explicit matrix shapes of one encoder stack."""
    l, d, h, h_ff = cfg.seq_len, cfg.d, cfg.h, cfg.h_ff
    dk = d // h
    per_layer = 0
    per_layer += matmul_flops(l, d, 3 * d)            # fused Q/K/V projection
    per_layer += h * matmul_flops(l, dk, l)           # logits per head
    per_layer += h * matmul_flops(l, l, dk)           # attention-value product
    per_layer += matmul_flops(l, d, d)                # output projection
    per_layer += matmul_flops(l, d, h_ff)             # feed-forward up
    per_layer += matmul_flops(l, h_ff, d)             # feed-forward down
    return cfg.batch * cfg.n_layers * per_layer


def test_tiny_layer_hand_count():
    cfg = TransformerConfig(d=2, h=1, n_layers=1, h_ff=2, seq_len=1)
    got = count_ops(cfg)
    # 24 (QKV) + 4 (logits) + 4 (attend) + 8 (out) + 16 (ffn)
    assert got.total == 56
    assert got.total == brute_force_ops(cfg)


def test_bert_base_matches_flop_counter():
    cfg = preset_config("bert-base", seq_len=512)
    assert count_ops(cfg).total == brute_force_ops(cfg)


def test_bert_large_matches_flop_counter():
    cfg = preset_config("bert-large", seq_len=384, batch=2)
    assert count_ops(cfg).total == brute_force_ops(cfg)


def test_presets_pin_published_shapes():
    base = preset_config("bert-base", seq_len=128)
    assert (base.d, base.h, base.n_layers, base.h_ff) == (768, 12, 12, 3072)
    large = preset_config("bert-large", seq_len=128)
    assert (large.d, large.h, large.n_layers, large.h_ff) == (1024, 16, 24, 4096)


def test_rejects_degenerate_dims():
    with pytest.raises(ValueError):
        TransformerConfig(d=2, h=1, n_layers=1, h_ff=2, seq_len=0)
    with pytest.raises(ValueError):
        TransformerConfig(d=0, h=1, n_layers=1, h_ff=2, seq_len=4)
    with pytest.raises(ValueError):
        TransformerConfig(d=6, h=4, n_layers=1, h_ff=8, seq_len=4)  # d % h != 0
    with pytest.raises(ValueError):
        preset_config("bert-huge", seq_len=4)


def test_linear_in_batch_and_layers():
    base = count_ops(TransformerConfig(d=64, h=2, n_layers=1, h_ff=128, seq_len=32))
    for b, n in [(2, 1), (1, 3), (4, 5)]:
        cfg = TransformerConfig(d=64, h=2, n_layers=n, h_ff=128, seq_len=32, batch=b)
        assert count_ops(cfg).total == b * n * base.total


def test_doubling_seq_len_quadruples_only_attention_blocks():
    small = count_ops(TransformerConfig(d=64, h=2, n_layers=2, h_ff=128, seq_len=32))
    big = count_ops(TransformerConfig(d=64, h=2, n_layers=2, h_ff=128, seq_len=64))
    for blk in ("logits", "attend"):
        assert big.per_block[blk] == 4 * small.per_block[blk]
    for blk in ("qkv_proj", "out_proj", "ffn"):
        assert big.per_block[blk] == 2 * small.per_block[blk]


def test_opcount_total_invariant():
    with pytest.raises(ValueError):
        OpCount(total=5, per_block={"a": 1, "b": 3})
