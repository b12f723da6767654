import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fwxeb import noise, walsh
from fwxeb.errors import ValidationError
from fwxeb.noise import (
    AsymmetricReadout,
    GoogleNoise,
    SampleSet,
    SpectralScaling,
    SymmetricReadout,
)
from fwxeb.walsh import ProbabilityTable

from conftest import brute_bitflip


def test_parse_specs():
    assert noise.parse_noise_spec("google:phi=0.4") == GoogleNoise(0.4)
    assert noise.parse_noise_spec(" symro: s=0.5 , q=0.038") == SymmetricReadout(0.5, 0.038)
    assert noise.parse_noise_spec("asymro:phig=0.5,q1=0.055,q2=0.023") == AsymmetricReadout(
        0.5, 0.055, 0.023
    )
    assert noise.parse_noise_spec("spectral:alpha=1/0.5/0.25").alpha == (1.0, 0.5, 0.25)
    for spec in (GoogleNoise(0.3), SymmetricReadout(0.2, 0.1), AsymmetricReadout(0.1, 0.2, 0.3)):
        assert noise.parse_noise_spec(spec.to_string()) == spec


@pytest.mark.parametrize(
    "text",
    ["google", "google:phi=2", "symro:s=0.5", "asymro:phig=1,q1=0.1", "foo:x=1",
     "google:phi=abc", "spectral:alpha=0.9/0.8", "symro:s=0.5,q=0.7", "google:phi"],
)
def test_parse_rejects(text):
    with pytest.raises(ValidationError):
        noise.parse_noise_spec(text)


def test_porter_thomas_statistics():
    P = noise.generate_porter_thomas(14, 5)
    assert P.values.sum() == pytest.approx(1.0, abs=1e-12)
    x = P.values * P.M
    # Exp(1): mean 1, second moment 2; KS against the exponential law
    assert abs(x.mean() - 1) < 1e-12
    assert abs(np.mean(x * x) - 2) < 0.1
    assert stats.kstest(x, "expon").pvalue > 1e-3


def test_porter_thomas_is_seeded():
    a = noise.generate_porter_thomas(6, 11).values
    assert np.array_equal(a, noise.generate_porter_thomas(6, 11).values)
    assert not np.array_equal(a, noise.generate_porter_thomas(6, 12).values)


@pytest.mark.parametrize("n", [1, 3, 5])
def test_symmetric_readout_matches_explicit_flips(n):
    P = noise.generate_porter_thomas(n, n)
    s, q = 0.7, 0.13
    got = noise.apply_noise_model(P, SymmetricReadout(s, q)).values
    expected = s * brute_bitflip(P.values, n, q, q) + (1 - s) / P.M
    assert np.allclose(got, expected, atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_asymmetric_readout_matches_explicit_flips(n):
    P = noise.generate_porter_thomas(n, 100 + n)
    spec = AsymmetricReadout(0.6, q1=0.055, q2=0.023)
    got = noise.apply_noise_model(P, spec).values
    # q1 flips a true 1, q2 flips a true 0
    expected = 0.6 * brute_bitflip(P.values, n, 0.023, 0.055) + 0.4 / P.M
    assert np.allclose(got, expected, atol=1e-15)


def test_asymmetric_with_equal_rates_is_symmetric():
    P = noise.generate_porter_thomas(8, 3)
    a = noise.apply_noise_model(P, AsymmetricReadout(0.5, 0.04, 0.04)).values
    b = noise.apply_noise_model(P, SymmetricReadout(0.5, 0.04)).values
    assert np.allclose(a, b, atol=1e-15)


@given(st.integers(1, 10), st.floats(0, 1), st.floats(0, 0.5, exclude_max=True), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_symmetric_spectral_action(n, s, q, seed):
    P = noise.generate_porter_thomas(n, seed)
    out = noise.apply_noise_model(P, SymmetricReadout(s, q))
    ratio = np.concatenate([[1.0], s * (1 - 2 * q) ** np.arange(1, n + 1)])
    expected = walsh.wht_forward(P).coeffs * ratio[walsh.popcounts(n)]
    assert np.allclose(walsh.wht_forward(out).coeffs, expected, rtol=0, atol=1e-15)
    assert out.values.sum() == pytest.approx(1.0, abs=1e-12)


def test_google_composition():
    P = noise.generate_porter_thomas(6, 8)
    twice = noise.apply_noise_model(
        noise.apply_noise_model(P, GoogleNoise(0.5)), GoogleNoise(0.6)
    )
    once = noise.apply_noise_model(P, GoogleNoise(0.3))
    assert np.allclose(twice.values, once.values, atol=1e-16)


def test_spectral_scaling():
    P = noise.generate_porter_thomas(3, 1)
    alpha = (1.0, 0.0, 0.0, 0.0)
    assert np.allclose(noise.apply_noise_model(P, SpectralScaling(alpha)).values, 1 / 8)
    with pytest.raises(ValidationError):
        SpectralScaling((0.9, 0.5))
    with pytest.raises(ValidationError):
        noise.apply_noise_model(P, SpectralScaling((1.0, 0.5)))


def test_spectral_scaling_negative_output_is_rejected():
    # doubling the top-degree part of a delta gives -1/8 at odd parity
    P = ProbabilityTable.delta(3)
    with pytest.raises(ValidationError):
        noise.apply_noise_model(P, SpectralScaling((1.0, 0.0, 0.0, 2.0)))


def _chi2_p(counts, probs):
    keep = probs > 0
    return stats.chisquare(counts[keep], counts.sum() * probs[keep]).pvalue


@pytest.mark.parametrize("method", ["alias", "cdf"])
def test_sampler_goodness_of_fit(method):
    P = noise.generate_porter_thomas(8, 21)
    S = noise.draw_samples(P, 200_000, 4, method=method)
    assert S.N == 200_000 and S.meta["method"] == method
    assert _chi2_p(S.counts.astype(float), P.values) > 1e-3


def test_alias_table_exact_probabilities():
    # implied probability of each column should equal the input exactly
    p = np.array([0.5, 0.25, 0.125, 0.125, 0.0])
    a = noise.AliasTable(p)
    K = len(p)
    implied = a.accept / K
    np.add.at(implied, a.alias, (1 - a.accept) / K)
    assert np.allclose(implied, p, atol=1e-15)


def test_sampling_is_deterministic_and_auto_switches():
    P = noise.generate_porter_thomas(10, 2)
    a = noise.draw_samples(P, 1000, 9)
    b = noise.draw_samples(P, 1000, 9)
    assert np.array_equal(a.stream, b.stream)
    assert a.meta["method"] == "alias"
    assert noise.draw_samples(P, 100, 9).meta["method"] == "cdf"
    assert noise.draw_samples(P, 0, 9).N == 0


def test_bitflip_route_agrees_with_exact_route():
    P = noise.generate_porter_thomas(6, 30)
    spec = AsymmetricReadout(0.5, 0.055, 0.023)
    exact = noise.apply_noise_model(P, spec).values
    S = noise.simulate_noisy_samples(P, spec, 300_000, 31)
    assert _chi2_p(S.counts.astype(float), exact) > 1e-3


def test_sample_set_validation():
    with pytest.raises(ValidationError):
        SampleSet(2, [1, 2, 3])
    with pytest.raises(ValidationError):
        SampleSet(1, [1, -1])
    with pytest.raises(ValidationError):
        SampleSet(1, [1, 1], stream=[0, 0])
    s = SampleSet(2, [0, 2, 0, 1])
    assert sorted(s.ordered(0)) == [1, 1, 3]
    idx, c = s.nonzero()
    assert list(idx) == [1, 3] and list(c) == [2, 1]
