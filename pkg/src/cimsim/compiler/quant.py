"""Static quantization plan and deterministic model parameter generation.

Every matmul stage gets a compile-time requantization rule (optional
fixed-point multiplier plus a rounded right shift) derived from a simple
variance estimate of random 8-bit data.  The softmax output is the one
dynamically scaled tensor; its per-row rule lives in ``numerics``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import FixedTensor, round_shift

X_SCALE = -5          # input activations
LN_SCALE = -5         # layernorm outputs
TARGET_SIGMA = 24.0   # aimed std of requantized int8 values
SQRT_MULT_BITS = 14   # fixed-point bits of the 1/sqrt(d_k) factor


def weight_scale(fan_in):
    """Weight scale chosen so random weights behave like ~1/sqrt(fan_in) init."""
    return -7 - round(0.5 * math.log2(fan_in))


@dataclass(frozen=True)
class StageQuant:
    """Requantize a 32-bit accumulator to int8: (acc * mult) >> shift."""

    mult: int            # 1 means no multiplier
    shift: int
    out_scale: int

    def apply(self, acc_data):
        v = np.asarray(acc_data, dtype=np.int64)
        if self.mult != 1:
            v = v * self.mult
        v = round_shift(v, self.shift)
        return np.clip(v, -128, 127)


def _requant(acc_sigma, acc_scale, mult=1, mult_bits=0):
    eff_sigma = acc_sigma * mult / (1 << mult_bits) if mult_bits else acc_sigma
    shift = max(0, round(math.log2(max(1.0, eff_sigma / TARGET_SIGMA))))
    return StageQuant(mult=mult, shift=shift + mult_bits, out_scale=acc_scale + shift), \
        eff_sigma / (1 << shift)


def _mm_sigma(k, sig_a, sig_w):
    return math.sqrt(k) * sig_a * sig_w


@dataclass(frozen=True)
class QuantPlan:
    """All static scales/shifts of one encoder configuration."""

    x_scale: int
    w_scale: int
    w_ffn_scale: int
    qkv: StageQuant
    logit: StageQuant
    sv_out_scale: int
    out_proj: StageQuant
    ff1: StageQuant
    ff2: StageQuant
    ln_scale: int

    @classmethod
    def build(cls, cfg):
        d, h_ff, dk, l = cfg.d, cfg.h_ff, cfg.d_k, cfg.seq_len
        sig8 = 127.0 / math.sqrt(3.0)
        ws = weight_scale(d)
        wf = weight_scale(h_ff)

        qkv, sig_q = _requant(_mm_sigma(d, sig8, sig8), X_SCALE + ws)
        # logits: q . k / sqrt(dk); the multiplier realizes the scaling
        mult = round((1 << SQRT_MULT_BITS) / math.sqrt(dk))
        logit, _ = _requant(_mm_sigma(dk, sig_q, sig_q), 2 * qkv.out_scale,
                            mult=mult, mult_bits=SQRT_MULT_BITS)
        # attention-value product: probabilities average the value rows, so
        # outputs sit a little under the value magnitude
        sv_out_scale = qkv.out_scale - 2
        out_proj, _ = _requant(_mm_sigma(d, sig8, sig8), LN_SCALE + ws)
        ff1, _ = _requant(_mm_sigma(d, sig8, sig8), LN_SCALE + ws)
        ff2, _ = _requant(_mm_sigma(h_ff, sig8, sig8), LN_SCALE + wf)
        return cls(x_scale=X_SCALE, w_scale=ws, w_ffn_scale=wf, qkv=qkv,
                   logit=logit, sv_out_scale=sv_out_scale,
                   out_proj=out_proj, ff1=ff1, ff2=ff2, ln_scale=LN_SCALE)

    def describe(self):
        return {
            "x_scale": self.x_scale, "w_scale": self.w_scale,
            "w_ffn_scale": self.w_ffn_scale,
            "qkv": (self.qkv.mult, self.qkv.shift, self.qkv.out_scale),
            "logit": (self.logit.mult, self.logit.shift, self.logit.out_scale),
            "sv": self.sv_out_scale,
            "out_proj": (self.out_proj.mult, self.out_proj.shift, self.out_proj.out_scale),
            "ff1": (self.ff1.mult, self.ff1.shift, self.ff1.out_scale),
            "ff2": (self.ff2.mult, self.ff2.shift, self.ff2.out_scale),
        }


def sv_shift_for_row(plan, row_shift):
    """Dynamic shift for the attention-value accumulator of one row.

    The accumulator scale is (-30 + row_shift) + qkv.out_scale and the
    output scale is fixed, so the shift absorbs the per-row softmax scale.
    """
    return plan.sv_out_scale - ((-30 + row_shift) + plan.qkv.out_scale)


# ---------------------------------------------------------------------------
# Deterministic parameters
# ---------------------------------------------------------------------------

MATRIX_IDS = {"wq": 0, "wk": 1, "wv": 2, "wo": 3, "w1": 4, "w2": 5}


def gen_matrix(seed, layer, name, shape, scale):
    rng = np.random.default_rng([seed, layer, MATRIX_IDS[name]])
    data = rng.integers(-127, 128, shape, dtype=np.int64)
    return FixedTensor(data, bit_width=8, scale=scale)


def gen_weights(cfg, plan, seed):
    """Per-layer weight tensors, reproducible from the seed alone."""
    layers = []
    for ell in range(cfg.n_layers):
        layers.append({
            "wq": gen_matrix(seed, ell, "wq", (cfg.d, cfg.d), plan.w_scale),
            "wk": gen_matrix(seed, ell, "wk", (cfg.d, cfg.d), plan.w_scale),
            "wv": gen_matrix(seed, ell, "wv", (cfg.d, cfg.d), plan.w_scale),
            "wo": gen_matrix(seed, ell, "wo", (cfg.d, cfg.d), plan.w_scale),
            "w1": gen_matrix(seed, ell, "w1", (cfg.d, cfg.h_ff), plan.w_scale),
            "w2": gen_matrix(seed, ell, "w2", (cfg.h_ff, cfg.d), plan.w_ffn_scale),
        })
    return layers


def gen_inputs(cfg, plan, seed):
    rng = np.random.default_rng([seed, 0xBEEF])
    data = rng.integers(-127, 128, (cfg.batch, cfg.seq_len, cfg.d), dtype=np.int64)
    return FixedTensor(data, bit_width=8, scale=plan.x_scale)
