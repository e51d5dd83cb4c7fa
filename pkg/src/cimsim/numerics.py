"""Bit-accurate fixed-point arithmetic for the accelerator's datapath.

Everything the hardware computes is defined here as deterministic integer
arithmetic: quantized tensors with power-of-two scales, the 128-entry
base-2 exponent table and its shift/residual evaluation, numerically
stable softmax with reciprocal-multiply division, bit-serial crossbar
matrix-vector multiplication with ADC saturation, and the GELU/LayerNorm
reference functions used by the vector unit.

Rounding is round-half-away-from-zero throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf

LN2 = math.log(2.0)

#: Q1.15 value of 1.0; the exponent pipeline works in this format.
EXP_ONE = 1 << 15

#: Fractional bits of the softmax probability output (Q0.30 in int32).
SOFTMAX_FRAC_BITS = 30


class ResidualPolicy(Enum):
    """How the residual factor e^r of the exponent decomposition is applied."""

    ONE = "one"            # drop the residual (approximate e^r by 1)
    ONE_PLUS_R = "one+r"   # first-order residual (approximate e^r by 1+r)
    MACLAURIN4 = "mac4"    # range-reduced 4-term series, no table involved


def round_half_away(x):
    """Round to nearest integer, halves away from zero. Works on arrays."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def round_shift(v, shift):
    """Arithmetic right shift by `shift` >= 0 with round-half-away-from-zero.

    Implemented on integer arrays without float round-off.
    """
    if shift <= 0:
        return v << (-shift) if shift < 0 else v
    half = 1 << (shift - 1)
    v = np.asarray(v)
    mag = (np.abs(v) + half) >> shift
    return np.where(v < 0, -mag, mag)


@dataclass(frozen=True)
class FixedTensor:
    """Quantized tensor: integer payload plus a power-of-two scale.

    Real value of an element is ``data * 2**scale``.  ``bit_width`` is the
    storage width the integers must fit (8 for activations/weights, 16 for
    exponent values, 32 for accumulators); exponent values are the one
    unsigned format in the pipeline.
    """

    data: np.ndarray
    bit_width: int
    scale: int
    signed: bool = True

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.int64)
        lo, hi = self.range(self.bit_width, self.signed)
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ValueError(
                f"values outside {self.bit_width}-bit range "
                f"[{lo}, {hi}]: min={arr.min()} max={arr.max()}"
            )
        if not isinstance(self.scale, int):
            raise ValueError("scale must be an integer exponent")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @staticmethod
    def range(bit_width, signed=True):
        if signed:
            return -(1 << (bit_width - 1)), (1 << (bit_width - 1)) - 1
        return 0, (1 << bit_width) - 1

    @property
    def dims(self):
        return self.data.shape

    def to_real(self):
        return self.data.astype(np.float64) * math.pow(2.0, self.scale)

    @classmethod
    def from_real(cls, values, bit_width, scale, signed=True):
        """Quantize real values: round-half-away then saturate."""
        q = round_half_away(np.asarray(values, dtype=np.float64) / math.pow(2.0, scale))
        lo, hi = cls.range(bit_width, signed)
        return cls(np.clip(q, lo, hi).astype(np.int64), bit_width, scale, signed)


# ---------------------------------------------------------------------------
# Exponent decomposition and lookup table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpDecomposition:
    """e^x split as 2^n * 2^(d/K) * e^r with 0 <= r < ln(2)/K."""

    n: int
    d: int
    r: float
    K: int

    def reconstruct(self):
        return math.ldexp(math.pow(2.0, self.d / self.K) * math.exp(self.r), self.n)


def exp_decompose(x, K=128):
    """Split a finite real x into (n, d, r) such that e^x = 2^n 2^(d/K) e^r.

    n = floor(x/ln2), d = floor((x/ln2 - n)*K) and the residual is taken
    against the full quantized grid, r = x - (n*K + d)*ln2/K, so the
    reconstruction is exact to double precision.
    """
    if not math.isfinite(x):
        raise ValueError(f"exp_decompose requires finite input, got {x!r}")
    t = x / LN2
    n = math.floor(t)
    d = math.floor((t - n) * K)
    if d >= K:  # guard float round-up at bin edges
        d = K - 1
    if d < 0:
        d = 0
    r = x - (n * K + d) * (LN2 / K)
    step = LN2 / K
    r = min(max(r, 0.0), math.nextafter(step, 0.0))
    return ExpDecomposition(n=n, d=d, r=r, K=K)


@dataclass(frozen=True)
class ExpLut:
    """K-entry table of 2^(k/K) in unsigned 16-bit with 15 fractional bits."""

    K: int
    entries: np.ndarray
    entry_scale: int = 15

    @classmethod
    def build(cls, K=128):
        k = np.arange(K, dtype=np.float64)
        entries = round_half_away(np.power(2.0, k / K) * (1 << 15)).astype(np.int64)
        entries.setflags(write=False)
        return cls(K=K, entries=entries)

    def check(self):
        """Return list of entry indices violating the construction bound."""
        k = np.arange(self.K, dtype=np.float64)
        err = np.abs(self.entries / float(1 << 15) - np.power(2.0, k / self.K))
        bad = list(np.nonzero(err > 2.0 ** -16)[0])
        if np.any(np.diff(self.entries) < 0):
            bad.append(-1)
        return bad

    def image_int8(self):
        """Entries packed little-endian into a 64x64 int8 array image."""
        raw = self.entries.astype(np.uint16).astype("<u2").tobytes()
        img = np.zeros(64 * 64, dtype=np.int8)
        img[: len(raw)] = np.frombuffer(raw, dtype=np.int8)
        return img.reshape(64, 64)


#: Shifts at or below this leave no representable bits in the Q1.15 result.
EXP_UNDERFLOW_N = -16


def _lut_exp_raw(x_real, lut, policy):
    """Vectorized exponent over non-positive real inputs -> Q1.15 integers."""
    x = np.asarray(x_real, dtype=np.float64)
    if np.any(x > 0):
        raise ValueError("exponent operand must be <= 0 (max-subtraction missing?)")
    K = lut.K
    if policy is ResidualPolicy.MACLAURIN4:
        # range reduction to (-ln2, 0], then a 4-term series on the residual
        n = np.floor(x / LN2)
        y = x - n * LN2
        series = 1.0 + y * (1.0 + y * (0.5 + y * (1.0 / 6.0)))
        val = series * np.exp2(n) * EXP_ONE
        out = round_half_away(val).astype(np.int64)
        return np.where(n <= EXP_UNDERFLOW_N, 0, out)
    t = x / LN2
    n = np.floor(t)
    d = np.floor((t - n) * K)
    d = np.clip(d, 0, K - 1)
    r = x - (n * K + d) * (LN2 / K)
    r = np.clip(r, 0.0, None)
    base = lut.entries[d.astype(np.int64)].astype(np.float64)
    if policy is ResidualPolicy.ONE_PLUS_R:
        base = base * (1.0 + r)
    out = round_half_away(base * np.exp2(n)).astype(np.int64)
    return np.where(n <= EXP_UNDERFLOW_N, 0, out)


def lut_exp(x_fixed, lut, policy=ResidualPolicy.ONE_PLUS_R):
    """Exponent of a non-positive fixed-point operand.

    Evaluates e^x via table entry, arithmetic shift by n (rounded, clamped
    to zero once n <= -16) and the chosen residual factor.  Returns a
    Q1.15 ``FixedTensor`` with unsigned 16-bit payload.
    """
    vals = _lut_exp_raw(x_fixed.to_real(), lut, policy)
    return FixedTensor(vals, bit_width=16, scale=-15, signed=False)


# ---------------------------------------------------------------------------
# Reciprocal and softmax
# ---------------------------------------------------------------------------

_RECIP_TABLE_BITS = 8
_RECIP_TABLE = None


def _recip_table():
    global _RECIP_TABLE
    if _RECIP_TABLE is None:
        idx = np.arange(1 << _RECIP_TABLE_BITS, dtype=np.float64)
        mid = (2.0 ** 30 + (idx + 0.5) * 2.0 ** (30 - _RECIP_TABLE_BITS)) / 2.0 ** 31
        _RECIP_TABLE = round_half_away((1.0 / mid) * 2.0 ** 30).astype(np.int64)
        _RECIP_TABLE.setflags(write=False)
    return _RECIP_TABLE


def fixed_recip(s, newton_iters=2):
    """Reciprocal of a positive integer via table seed plus Newton steps.

    Returns (y, e) with 1/s ~= y * 2^-(30+e); y is a Q1.30 integer in
    (2^30, 2^31].  Two refinement steps bring the estimate to the
    rounding floor of the iteration (~2^-30 relative).
    """
    s = int(s)
    if s <= 0:
        raise ValueError("reciprocal operand must be positive")
    e = s.bit_length()
    m = s << (31 - e) if e <= 31 else s >> (e - 31)  # Q0.31 in [2^30, 2^31)
    idx = (m >> (30 - _RECIP_TABLE_BITS)) & ((1 << _RECIP_TABLE_BITS) - 1)
    y = int(_recip_table()[idx])  # Q1.30 estimate of 1/m
    for _ in range(newton_iters):
        t = (m * y + (1 << 30)) >> 31          # Q0.30 ~= m*y
        u = (1 << 31) - t                      # Q0.30 ~= 2 - m*y
        y = (y * u + (1 << 29)) >> 30          # Q1.30
    return y, e


def softmax_stable(v, lut, policy=ResidualPolicy.ONE_PLUS_R, newton_iters=2):
    """Max-subtracted fixed-point softmax of a 1-D tensor.

    exp via the lookup pipeline, integer sum, then reciprocal-multiply
    division.  Output is a Q0.30 ``FixedTensor`` of probabilities.
    """
    if v.data.ndim != 1 or v.data.size == 0:
        raise ValueError("softmax operand must be a non-empty 1-D tensor")
    shifted = FixedTensor(v.data - int(v.data.max()), bit_width=v.bit_width + 1,
                          scale=v.scale)
    exps = lut_exp(shifted, lut, policy)
    total = int(exps.data.sum())
    probs = softmax_divide(exps.data, total, newton_iters)
    return FixedTensor(probs, bit_width=32, scale=-SOFTMAX_FRAC_BITS)


def softmax_divide(exp_ints, total, newton_iters=2):
    """exp/sum as reciprocal-multiply; the common Q1.15 scales cancel.

    prob = exp * (1/total) with 1/total ~= y * 2^-(30+e), so the Q0.30
    ratio is (exp * y) >> e with one final rounding.
    """
    y, e = fixed_recip(total, newton_iters)
    prod = np.asarray(exp_ints, dtype=np.int64) * y
    return np.asarray(round_shift(prod, e), dtype=np.int64)


def softmax_requant8(probs, total):
    """Requantize Q0.30 probabilities to signed 8-bit with a per-vector scale.

    The scale is derived from the largest representable output, which every
    participant can compute locally from the broadcast sum.
    """
    y, e = fixed_recip(int(total))
    top = int(round_shift(np.int64(EXP_ONE) * y, e))
    shift = max(0, top.bit_length() - 7)
    if int(round_shift(np.int64(top), shift)) > 127:  # rounding crossed full scale
        shift += 1
    vals = round_shift(np.asarray(probs, dtype=np.int64), shift)
    vals = np.clip(vals, -128, 127)
    return FixedTensor(vals, bit_width=8, scale=-SOFTMAX_FRAC_BITS + shift)


# ---------------------------------------------------------------------------
# Bit-serial matrix-vector multiplication
# ---------------------------------------------------------------------------

def bit_planes(values, bits=8):
    """Unsigned bit planes of two's-complement integers, LSB first.

    Shape (..., bits) of {0,1}; the top plane is the sign plane.
    """
    u = np.asarray(values, dtype=np.int64) & ((1 << bits) - 1)
    return ((u[..., None] >> np.arange(bits)) & 1).astype(np.int64)


def plane_weights(bits=8):
    """Signed positional weights of two's-complement planes."""
    w = 1 << np.arange(bits, dtype=np.int64)
    w[-1] = -w[-1]
    return w


def adc_quantize(psums, adc_bits):
    """Unit-step ADC staircase saturating at full scale 2^adc_bits - 1.

    Partial sums are integer row counts; the converter preserves them
    exactly up to its full-scale code and clips beyond it.
    """
    if adc_bits is None:
        return psums
    return np.minimum(psums, (1 << adc_bits) - 1)


def mvm_bit_serial(inp, weights, adc_bits=6, in_bits=8, w_bits=8):
    """Crossbar MVM computed the way the array does it.

    Input bits stream one plane at a time through 1-bit row drivers while
    each weight bit lives in its own plane array; every per-column analog
    count passes through the ADC staircase before the shift-and-add
    reconstruction into 32-bit accumulators.  ``adc_bits=None`` disables
    quantization entirely.
    """
    if inp.data.ndim != 1 or weights.data.ndim != 2:
        raise ValueError("expected 1-D input and 2-D weights")
    rows, cols = weights.data.shape
    if inp.data.shape[0] != rows:
        raise ValueError(f"shape mismatch: input {inp.data.shape} vs weights {weights.data.shape}")
    if inp.bit_width != in_bits or weights.bit_width != w_bits:
        raise ValueError("bit-width mismatch with the declared plane counts")
    ip = bit_planes(inp.data, in_bits)          # (rows, in_bits)
    wp = bit_planes(weights.data, w_bits)       # (rows, cols, w_bits)
    # per-column analog counts for every (input plane, weight plane) pair
    psums = np.tensordot(ip, wp, axes=([0], [0]))   # (in_bits, cols, w_bits)
    psums = adc_quantize(psums, adc_bits)
    si = plane_weights(in_bits)
    sw = plane_weights(w_bits)
    acc = np.einsum("icj,i,j->c", psums, si, sw)
    return FixedTensor(acc.astype(np.int64), bit_width=32,
                       scale=inp.scale + weights.scale)


def mvm_exact(inp, weights):
    """Plain integer matmul; the independent reference for the bit-serial path."""
    acc = weights.data.T.astype(np.int64) @ inp.data.astype(np.int64)
    return FixedTensor(acc, bit_width=32, scale=inp.scale + weights.scale)


def mvm_clip_possible(weights, adc_bits, in_bits=8, w_bits=8):
    """True if any ADC code could saturate for some input.

    With the unit-step staircase, saturation needs a column count above
    full scale; for a 64-row array that requires an all-ones weight plane
    column when full scale is 63, and becomes data-dependent below that.
    """
    if adc_bits is None:
        return False
    rows = weights.data.shape[0]
    full = (1 << adc_bits) - 1
    if full >= rows:
        return False
    if full < rows - 1:
        return True  # cheap conservative answer; callers fall back to planes
    wp = bit_planes(weights.data, w_bits)
    return bool((wp.sum(axis=0) == rows).any())


# ---------------------------------------------------------------------------
# Vector-unit reference functions
# ---------------------------------------------------------------------------

def gelu_ref(v, out_scale=None):
    """Exact (erf-based) GELU evaluated in double, requantized to 8-bit."""
    if v.data.size == 0:
        raise ValueError("empty vector")
    x = v.to_real()
    y = 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))
    return FixedTensor.from_real(y, 8, v.scale if out_scale is None else out_scale)


def layernorm_ref(v, out_scale=-5, eps=1e-5):
    """Standardize by per-vector mean/variance in double, requantize to 8-bit."""
    if v.data.size == 0:
        raise ValueError("empty vector")
    x = v.to_real()
    mu = x.mean()
    var = x.var()
    y = (x - mu) / math.sqrt(var + eps)
    return FixedTensor.from_real(y, 8, out_scale)


def requant8(acc, shift, out_scale):
    """32-bit accumulator -> saturating signed 8-bit by rounded right shift."""
    vals = np.clip(round_shift(acc.data, shift), -128, 127)
    return FixedTensor(vals, bit_width=8, scale=out_scale)
