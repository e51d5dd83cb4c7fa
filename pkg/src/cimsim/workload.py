"""Encoder workload descriptions and analytical operation counts.

The operation count is the throughput numerator: multiplies and adds of
the matrix multiplications only, with one multiply-accumulate counted as
two operations.  Element-wise work (softmax, GELU, LayerNorm, residual
adds) is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class TransformerConfig:
    """Shape of a BERT-style encoder stack."""

    d: int              # embedding dimension
    h: int              # attention heads
    n_layers: int
    h_ff: int           # feed-forward hidden dimension
    seq_len: int
    batch: int = 1

    def __post_init__(self):
        for name in ("d", "h", "n_layers", "h_ff", "seq_len", "batch"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.d % self.h != 0:
            raise ValueError(f"d={self.d} not divisible by h={self.h}")

    @property
    def d_k(self):
        return self.d // self.h


#: Named presets for the evaluated encoder models.
PRESETS = {
    "bert-base": dict(d=768, h=12, n_layers=12, h_ff=3072),
    "bert-large": dict(d=1024, h=16, n_layers=24, h_ff=4096),
}


def preset_config(name, seq_len, batch=1, n_layers=None):
    key = name.lower()
    if key not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; valid presets: {sorted(PRESETS)}")
    base = dict(PRESETS[key])
    if n_layers is not None:
        base["n_layers"] = n_layers
    return TransformerConfig(seq_len=seq_len, batch=batch, **base)


@dataclass(frozen=True)
class OpCount:
    """Multiply+add totals with a per-block breakdown."""

    total: int
    per_block: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.total != sum(self.per_block.values()):
            raise ValueError("total must equal the sum of per-block counts")


def count_ops(cfg: TransformerConfig) -> OpCount:
    """Matmul multiply+add operations of the encoder stack.

    Per layer: QKV projection 2*l*d*3d, logits 2*l^2*d, attention-value
    product 2*l^2*d, output projection 2*l*d^2 and the two feed-forward
    matmuls 4*l*d*h_ff; scaled by layers and batch.
    """
    l, d, h_ff = cfg.seq_len, cfg.d, cfg.h_ff
    rep = cfg.batch * cfg.n_layers
    per_block = {
        "qkv_proj": rep * 2 * l * d * 3 * d,
        "logits": rep * 2 * l * l * d,
        "attend": rep * 2 * l * l * d,
        "out_proj": rep * 2 * l * d * d,
        "ffn": rep * 4 * l * d * h_ff,
    }
    return OpCount(total=sum(per_block.values()), per_block=per_block)
