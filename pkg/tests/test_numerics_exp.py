import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cimsim.numerics import (
    LN2,
    ExpLut,
    FixedTensor,
    ResidualPolicy,
    exp_decompose,
    lut_exp,
)


@pytest.fixture(scope="module")
def lut():
    return ExpLut.build()


# ---------------------------------------------------------------- decompose

def test_decompose_zero():
    d = exp_decompose(0.0)
    assert (d.n, d.d, d.r) == (0, 0, 0.0)


def test_decompose_ln2():
    d = exp_decompose(LN2)
    assert (d.n, d.d) == (1, 0)
    assert d.r == pytest.approx(0.0, abs=1e-15)


def test_decompose_reconstructs_minus_3_7():
    d = exp_decompose(-3.7)
    true = math.exp(-3.7)
    assert abs(d.reconstruct() - true) / true < 1e-12


def test_decompose_rejects_nonfinite():
    for bad in (math.inf, -math.inf, math.nan):
        with pytest.raises(ValueError):
            exp_decompose(bad)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=-700.0, max_value=700.0, allow_nan=False))
def test_decompose_invariants_hold(x):
    d = exp_decompose(x)
    assert 0.0 <= d.r < LN2 / d.K
    assert 0 <= d.d < d.K
    true = math.exp(x)
    assert abs(d.reconstruct() - true) <= 1e-12 * true


# ----------------------------------------------------------------- LUT form

def test_lut_entries_construction_bound(lut):
    k = np.arange(lut.K)
    err = np.abs(lut.entries / 2.0 ** 15 - np.power(2.0, k / lut.K))
    assert err.max() <= 2.0 ** -16
    assert lut.check() == []


def test_lut_entries_monotone_and_in_range(lut):
    assert np.all(np.diff(lut.entries) >= 0)
    assert lut.entries[0] == 1 << 15
    assert lut.entries[-1] < 1 << 16


def test_tampered_lut_detected():
    bad = ExpLut.build()
    entries = bad.entries.copy()
    entries[40] += 7
    assert ExpLut(K=128, entries=entries).check() != []


# ------------------------------------------------------------------ lut_exp

def q115(x, scale=-15):
    return FixedTensor(np.atleast_1d(np.round(np.asarray(x) * 2.0 ** -scale)).astype(np.int64),
                       24, scale)


def test_exp_of_zero_is_exactly_one(lut):
    for pol in (ResidualPolicy.ONE, ResidualPolicy.ONE_PLUS_R):
        out = lut_exp(q115(0.0), lut, pol)
        assert out.data[0] == 1 << 15


def test_exp_of_minus_ln2_is_half_within_lsb(lut):
    out = lut_exp(q115(-LN2), lut, ResidualPolicy.ONE_PLUS_R)
    assert abs(int(out.data[0]) - (1 << 14)) <= 1


def test_exp_rejects_positive_input(lut):
    with pytest.raises(ValueError):
        lut_exp(q115(0.5), lut)


def test_exp_underflow_clamps_to_zero(lut):
    out = lut_exp(q115(-16.5 * LN2), lut)
    assert out.data[0] == 0


def test_exp_error_bound_sweep(lut):
    """Error against double-precision exp: rel bound plus one output LSB."""
    t = FixedTensor.from_real(np.linspace(-20.0, 0.0, 100_000), 32, -24)
    true = np.exp(t.to_real())
    lsb = 2.0 ** -15
    for pol, tol in [(ResidualPolicy.ONE, 0.0054), (ResidualPolicy.ONE_PLUS_R, 1.6e-5)]:
        got = lut_exp(t, lut, pol).to_real()
        assert np.all(np.abs(got - true) <= tol * true + lsb)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=-(1 << 19), max_value=0),
       st.integers(min_value=-(1 << 19), max_value=0),
       st.sampled_from([ResidualPolicy.ONE, ResidualPolicy.ONE_PLUS_R]))
def test_exp_monotone(a, b, pol):
    lut = ExpLut.build()
    lo, hi = sorted((a, b))
    t = FixedTensor(np.array([lo, hi]), 24, -15)
    out = lut_exp(t, lut, pol).data
    assert out[0] <= out[1]
