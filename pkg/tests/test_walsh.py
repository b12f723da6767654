import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fwxeb import walsh
from fwxeb.errors import ValidationError
from fwxeb.walsh import ProbabilityTable, SpectralTable

from conftest import brute_convolve, brute_forward


def _vec(draw_n=8):
    return st.integers(1, draw_n).flatmap(
        lambda n: arrays(np.float64, 1 << n, elements=st.floats(-10, 10, allow_nan=False))
    )


@given(_vec())
@settings(max_examples=60, deadline=None)
def test_forward_matches_explicit_basis(f):
    assert np.allclose(walsh.wht_forward(f).coeffs, brute_forward(f), atol=1e-12)


@given(_vec(12))
@settings(max_examples=60, deadline=None)
def test_round_trip_and_parseval(f):
    c = walsh.wht_forward(f)
    assert np.max(np.abs(walsh.wht_inverse(c) - f), initial=0) <= 1e-12 * max(1, np.abs(f).max())
    lhs, rhs = np.sum(f * f) / f.size, np.sum(c.coeffs ** 2)
    assert math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-300)


def test_small_examples():
    # n=1: f = (a, b) -> ((a+b)/2, (a-b)/2)
    assert np.allclose(walsh.wht_forward([3.0, 1.0]).coeffs, [2.0, 1.0])
    # the delta at 0 has a flat spectrum
    d = ProbabilityTable.delta(3)
    assert np.allclose(walsh.wht_forward(d).coeffs, 1 / 8)
    # the uniform table lives entirely at S = empty
    u = walsh.wht_forward(ProbabilityTable.uniform(4)).coeffs
    assert u[0] == pytest.approx(1 / 16) and np.all(u[1:] == 0)


def test_bit_convention_lsb_first():
    # indicator of x_1 = 1 (bit 0); its only non-constant coefficient is S = {1}
    f = np.array([0.0, 1.0, 0.0, 1.0])
    assert np.allclose(walsh.wht_forward(f).coeffs, [0.5, -0.5, 0.0, 0.0])


@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_convolution_theorem(n, seed):
    rng = np.random.default_rng(seed)
    f = ProbabilityTable(n, rng.random(1 << n), normalized=False)
    g = ProbabilityTable(n, rng.random(1 << n), normalized=False)
    assert np.allclose(walsh.convolve(f, g), brute_convolve(f.values, g.values), atol=1e-14)


@given(
    st.integers(1, 10), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32 - 1)
)
@settings(max_examples=50, deadline=None)
def test_noise_operator_semigroup(n, r1, r2, seed):
    c = walsh.wht_forward(np.random.default_rng(seed).random(1 << n))
    two = walsh.apply_noise_operator(walsh.apply_noise_operator(c, r1), r2)
    one = walsh.apply_noise_operator(c, r1 * r2)
    assert np.max(np.abs(two.coeffs - one.coeffs)) <= 1e-15


def test_noise_operator_edges():
    c = walsh.wht_forward(np.arange(8.0))
    assert np.array_equal(walsh.apply_noise_operator(c, 1.0).coeffs, c.coeffs)
    zero = walsh.apply_noise_operator(c, 0.0).coeffs
    assert zero[0] == c.coeffs[0] and np.all(zero[1:] == 0)
    with pytest.raises(ValidationError):
        walsh.apply_noise_operator(c, 1.5)


def test_noise_operator_is_bit_keeping_average():
    # T_rho f(x) = E f(y), y_i = x_i with prob (1+rho)/2 independently
    n, rho = 3, 0.3
    f = np.random.default_rng(1).random(1 << n)
    keep = (1 + rho) / 2
    expected = np.zeros_like(f)
    for x in range(8):
        for y in range(8):
            d = bin(x ^ y).count("1")
            expected[x] += f[y] * keep ** (n - d) * (1 - keep) ** d
    got = walsh.wht_inverse(walsh.apply_noise_operator(walsh.wht_forward(f), rho))
    assert np.allclose(got, expected, atol=1e-14)


def test_degree_helpers():
    assert list(walsh.degree_counts(4)) == [1, 4, 6, 4, 1]
    assert list(walsh.popcounts(3)) == [0, 1, 1, 2, 1, 2, 2, 3]
    c = SpectralTable(2, [1.0, 2.0, 3.0, 4.0])
    assert list(walsh.degree_energies(c)) == [1.0, 13.0, 16.0]
    assert list(walsh.scale_by_degree(c, [1, 0, 2]).coeffs) == [1.0, 0.0, 0.0, 8.0]


def test_table_validation():
    with pytest.raises(ValidationError):
        ProbabilityTable(2, [0.5, 0.5, 0.0])
    with pytest.raises(ValidationError):
        ProbabilityTable(1, [1.5, -0.5])
    with pytest.raises(ValidationError):
        ProbabilityTable(1, [0.4, 0.4])
    with pytest.raises(ValidationError):
        ProbabilityTable(1, [np.nan, 1.0], normalized=False)
    with pytest.raises(ValidationError):
        walsh.wht_forward(np.ones(6))
    t = ProbabilityTable(1, [0.25, 0.75])
    with pytest.raises(ValueError):
        t.values[0] = 1.0


def test_qubit_cap(monkeypatch):
    monkeypatch.setattr(walsh, "MAX_QUBITS", 4)
    with pytest.raises(ValidationError):
        ProbabilityTable.uniform(5)
    walsh.set_max_qubits(5)
    assert ProbabilityTable.uniform(5).M == 32
