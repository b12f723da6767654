"""Degree-resolved analysis of samples against an ideal table."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import least_squares, minimize_scalar

from . import rng as _rng
from .errors import DegenerateEstimate, ValidationError
from .estimators import mixture_weight_mle
from .noise import SampleSet
from .walsh import (
    ProbabilityTable,
    SpectralTable,
    apply_noise_operator,
    degree_counts,
    degree_energies,
    degree_sums,
    popcounts,
    wht_forward,
    wht_inverse,
)

JACKKNIFE_BLOCKS = 50
MIN_SUBSETS = 8
_GAMMA_FLOOR = 1e-20  # relative to gamma_0


@dataclass(frozen=True)
class DegreeProfile:
    """``lambdas[k-1]`` estimates the attenuation of degree ``k``.

    Calibrated so that fractional counts ``A = N P`` give 1 at every degree.
    ``lambda_n_parity`` is the top degree recomputed from the even/odd
    parity split of the samples.
    """

    n: int
    lambdas: np.ndarray
    stderr: np.ndarray
    unstable: np.ndarray
    gamma: np.ndarray = field(repr=False)
    degenerate: np.ndarray = field(repr=False)
    lambda_n_parity: float = math.nan
    N: int = 0

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.n + 1)

    def xeb(self) -> float:
        """XEB recomposed from the degrees: ``sum_k lambda_k M**2 gamma_k``."""
        M = float(1 << self.n)
        lam = np.where(self.degenerate, 0.0, self.lambdas)
        return float(np.sum(lam * M * M * self.gamma[1:]))


def _cross_by_degree(ah: np.ndarray, ph: SpectralTable) -> np.ndarray:
    return degree_sums(ph, ah * ph.coeffs)


def lambda_profile(
    P: ProbabilityTable,
    samples: SampleSet,
    blocks: int = JACKKNIFE_BLOCKS,
    seed=0,
) -> DegreeProfile:
    """Per-degree ratios ``sum_{|S|=k} A^(S) P^(S) / (N gamma_k)`` with jackknife errors.

    ``A`` is the count function of the samples.  Blocks are consecutive runs
    of the sample stream (counts are expanded and shuffled with ``seed`` when
    no stream is stored).
    """
    if P.n != samples.n:
        raise ValidationError(f"table has n={P.n} but samples have n={samples.n}")
    N = samples.N
    if N < 1:
        raise DegenerateEstimate("empty-samples", "sample set is empty")
    n = P.n
    ph = wht_forward(P)
    gamma = degree_energies(ph)
    degenerate = gamma[1:] <= _GAMMA_FLOOR * gamma[0]
    if np.all(degenerate):
        raise DegenerateEstimate("uniform-table", "table has no non-constant spectrum")
    safe_gamma = np.where(degenerate, 1.0, gamma[1:])

    ah = wht_forward(samples.counts.astype(np.float64)).coeffs
    cross = _cross_by_degree(ah, ph)[1:]
    lambdas = np.where(degenerate, np.nan, cross / (N * safe_gamma))

    top = float(ph.coeffs[-1])
    if abs(top) > 0 and not degenerate[-1]:
        parity = popcounts(n) & 1
        even = int(samples.counts[parity == 0].sum())
        parity_top = (even - (N - even)) / (N * P.M * top)
    else:
        parity_top = math.nan

    stderr = np.full(n, np.nan)
    nb = min(blocks, N)
    if nb >= 2:
        stream = samples.ordered(seed)
        parts = np.array_split(stream, nb)
        sizes = np.array([p.size for p in parts], dtype=np.float64)
        per_block = np.empty((nb, n))
        for b, part in enumerate(parts):
            cb = np.bincount(part, minlength=P.M).astype(np.float64)
            per_block[b] = _cross_by_degree(wht_forward(cb).coeffs, ph)[1:]
        total = per_block.sum(axis=0)
        loo = (total[None, :] - per_block) / ((N - sizes)[:, None] * safe_gamma[None, :])
        spread = loo - loo.mean(axis=0)
        stderr = np.sqrt((nb - 1) / nb * np.sum(spread * spread, axis=0))
        stderr = np.where(degenerate, np.nan, stderr)

    few = degree_counts(n)[1:] < MIN_SUBSETS
    with np.errstate(invalid="ignore"):
        noisy = stderr > 0.5 * np.abs(lambdas)
    unstable = few | noisy | degenerate

    return DegreeProfile(
        n, lambdas, stderr, unstable, gamma, degenerate, parity_top, N
    )


def reference_curve(s: float, q: float, n: int) -> np.ndarray:
    """``s (1 - 2q)**k`` for ``k = 1..n``."""
    return s * (1.0 - 2.0 * q) ** np.arange(1, n + 1)


# --------------------------------------------------------------------------
# two-parameter (s, q) fit


@dataclass(frozen=True)
class SQFit:
    s: float
    q: float
    log_likelihood: float
    status: str
    reason: str = ""
    gradient: tuple = (math.nan, math.nan)
    oracle_gap: float | None = None


class _SQLikelihood:
    """Log-likelihood of ``s T_{1-2q} P + (1-s)/M`` over the observed counts."""

    def __init__(self, P: ProbabilityTable, samples: SampleSet):
        self.M = P.M
        self.ph = wht_forward(P)
        self.idx, c = samples.nonzero()
        self.c = c.astype(np.float64)
        self.N = float(self.c.sum())
        self._cache: dict[float, np.ndarray] = {}

    def table(self, q: float) -> np.ndarray:
        t = self._cache.get(q)
        if t is None:
            t = wht_inverse(apply_noise_operator(self.ph, 1.0 - 2.0 * q))[self.idx]
            self._cache[q] = t
        return t

    def loglik(self, s, q) -> float:
        pi = s * self.table(q) + (1.0 - s) / self.M
        if np.any(pi <= 0):
            return -math.inf
        return float(np.sum(self.c * np.log(pi)))

    def loglik_grid(self, s_values: np.ndarray, q: float) -> np.ndarray:
        t = self.table(q)
        pi = s_values[:, None] * t[None, :] + (1.0 - s_values[:, None]) / self.M
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = np.sum(self.c * np.log(np.maximum(pi, 0.0)), axis=1)
        return np.where(np.all(pi > 0, axis=1), ll, -np.inf)

    def profile(self, q: float) -> tuple[float, float]:
        s = mixture_weight_mle(self.table(q), self.c, self.M).phi
        return s, self.loglik(s, q)

    def gradient(self, s, q) -> np.ndarray:
        """Gradient per sample, ``(d/ds, d/dq) / N``."""
        n = self.ph.n
        t = self.table(q)
        pi = s * t + (1.0 - s) / self.M
        rho = 1.0 - 2.0 * q
        k = np.arange(n + 1, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            dk = np.where(k > 0, -2.0 * k * rho ** np.maximum(k - 1, 0), 0.0)
        dt = wht_inverse(SpectralTable(n, self.ph.coeffs * dk[popcounts(n)]))[self.idx]
        ds = float(np.sum(self.c * (t - 1.0 / self.M) / pi))
        dq = float(np.sum(self.c * s * dt / pi))
        return np.array([ds, dq]) / self.N


def _degenerate_sq(P: ProbabilityTable, samples: SampleSet) -> str | None:
    if P.n != samples.n:
        raise ValidationError(f"table has n={P.n} but samples have n={samples.n}")
    if samples.N == 0:
        return "empty-samples"
    gamma = degree_energies(wht_forward(P))
    if np.all(gamma[1:] <= _GAMMA_FLOOR * gamma[0]):
        return "uniform-table"
    return None


def sq_grid_oracle(P: ProbabilityTable, samples: SampleSet, size: int = 200):
    """Exhaustive ``size x size`` grid over ``s in [0,1]``, ``q in [0, 1/2)``.

    Returns ``(s, q, log_likelihood)`` of the best grid point.
    """
    lik = _SQLikelihood(P, samples)
    s_values = np.linspace(0.0, 1.0, size)
    q_values = np.arange(size) * (0.5 / size)
    best = (math.nan, math.nan, -math.inf)
    for q in q_values:
        ll = lik.loglik_grid(s_values, float(q))
        j = int(np.argmax(ll))
        if ll[j] > best[2]:
            best = (float(s_values[j]), float(q), float(ll[j]))
    return best


def fit_sq(
    P: ProbabilityTable,
    samples: SampleSet,
    q_max: float = 0.45,
    s_step: float = 0.02,
    q_step: float = 0.005,
    oracle: bool = False,
    grad_tol: float = 1e-6,
) -> SQFit:
    """MLE of ``(s, q)`` in ``s T_{1-2q}(P) + (1 - s)/M``.

    A coarse grid localizes the maximum; the profile likelihood (exact
    ``s`` for each ``q``) is then maximized over ``q`` in the neighbouring
    cells.  Never raises on bad data: problems come back as ``status="failed"``.
    """
    reason = _degenerate_sq(P, samples)
    if reason:
        return SQFit(math.nan, math.nan, math.nan, "failed", reason)
    lik = _SQLikelihood(P, samples)

    s_values = np.linspace(0.0, 1.0, int(round(1.0 / s_step)) + 1)
    q_values = np.arange(int(round(q_max / q_step)) + 1) * q_step
    best_ll, bi, bj = -math.inf, 0, 0
    for j, q in enumerate(q_values):
        ll = lik.loglik_grid(s_values, float(q))
        i = int(np.argmax(ll))
        if ll[i] > best_ll:
            best_ll, bi, bj = float(ll[i]), i, j
    if not math.isfinite(best_ll):
        return SQFit(math.nan, math.nan, math.nan, "failed", "no-finite-likelihood")

    lo = q_values[max(bj - 1, 0)]
    hi = min(q_values[min(bj + 1, len(q_values) - 1)], 0.5 - 1e-9)
    candidates = [(float(q_values[bj]),) + lik.profile(float(q_values[bj]))]
    if hi > lo:
        res = minimize_scalar(
            lambda q: -lik.profile(float(q))[1],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        candidates.append((float(res.x),) + lik.profile(float(res.x)))
    if lo == 0.0:
        candidates.append((0.0,) + lik.profile(0.0))
    q_hat, s_hat, ll_hat = max(candidates, key=lambda c: c[2])

    g = lik.gradient(s_hat, q_hat)
    free = [s_hat not in (0.0, 1.0), q_hat > 0.0]
    free_norm = float(np.linalg.norm(g[free])) if any(free) else 0.0
    if bj == len(q_values) - 1:
        status, why = "failed", "maximum at the q grid edge"
    elif free_norm >= grad_tol:
        status, why = "failed", f"gradient norm {free_norm:.2e}"
    elif not all(free):
        status, why = "boundary", ""
    else:
        status, why = "converged", ""

    gap = None
    if oracle:
        gap = ll_hat - sq_grid_oracle(P, samples)[2]
    return SQFit(s_hat, q_hat, ll_hat, status, why, tuple(g), gap)


def fit_sq_weighted(profile: DegreeProfile) -> tuple[float, float]:
    """Least-squares fit of ``s (1-2q)**k`` to the profile, weights ``binomial(n, k)``.

    Diagnostic only; :func:`fit_sq` maximizes the exact likelihood.
    """
    ok = ~profile.degenerate & np.isfinite(profile.lambdas)
    k = profile.k[ok].astype(np.float64)
    lam = profile.lambdas[ok]
    wts = np.sqrt(degree_counts(profile.n)[1:][ok].astype(np.float64))

    def resid(x):
        return wts * (lam - x[0] * (1.0 - 2.0 * x[1]) ** k)

    res = least_squares(resid, x0=[0.5, 0.05], bounds=([0.0, 0.0], [1.0, 0.5]))
    return float(res.x[0]), float(res.x[1])


# --------------------------------------------------------------------------
# non-stationarity


@dataclass(frozen=True)
class DriftReport:
    """Per-degree squared spectral distance between the two halves.

    ``chronological[k-1]`` compares first and second half of the stream;
    ``random`` holds one row per random equal split; ``p_values`` is the
    fraction of random splits at least as far apart (with the +1 correction).
    """

    n: int
    chronological: np.ndarray
    random: np.ndarray = field(repr=False)
    p_values: np.ndarray
    u_halves: tuple = (math.nan, math.nan)


def _half_distance(a1: np.ndarray, a2: np.ndarray, n: int) -> np.ndarray:
    diff = wht_forward(a1 - a2)
    return degree_energies(diff)[1:]


def split_half_drift(
    P: ProbabilityTable, samples: SampleSet, trials: int = 200, seed=0
) -> DriftReport:
    """Chronological vs random half-splits, compared degree by degree.

    Random splits draw ``N/2`` of the samples without replacement
    (multivariate hypergeometric on the counts); trial ``i`` uses the
    ``i``-th spawned child of ``seed`` so results do not depend on scheduling.
    """
    if samples.stream is None:
        raise ValidationError("drift analysis needs the ordered sample stream")
    if P.n != samples.n:
        raise ValidationError(f"table has n={P.n} but samples have n={samples.n}")
    N = samples.N
    if N == 0 or N % 2:
        raise ValidationError(f"drift analysis needs an even, positive N (got {N})")
    n, M, half = P.n, P.M, N // 2
    first = np.bincount(samples.stream[:half], minlength=M).astype(np.float64)
    second = np.bincount(samples.stream[half:], minlength=M).astype(np.float64)
    chrono = _half_distance(first, second, n)

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    counts = samples.counts
    rand = np.empty((trials, n))
    for i, child in enumerate(root.spawn(trials)):
        g = _rng.generator(child)
        a1 = g.multivariate_hypergeometric(counts, half).astype(np.float64)
        rand[i] = _half_distance(a1, counts - a1, n)
    p = (1.0 + np.sum(rand >= chrono[None, :], axis=0)) / (trials + 1.0)

    uh = (
        M / half * float(np.sum(first * P.values)) - 1.0,
        M / half * float(np.sum(second * P.values)) - 1.0,
    )
    return DriftReport(n, chrono, rand, p, uh)


# --------------------------------------------------------------------------
# coefficient histogram


@dataclass(frozen=True)
class CoefficientHistogram:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    var: float
    skew: float
    kurtosis: float  # excess


def coefficient_histogram(P: ProbabilityTable, bins: int = 50) -> CoefficientHistogram:
    """Histogram of ``M P^(S)`` over non-empty ``S`` with moment summary."""
    if bins < 2:
        raise ValidationError("need at least two bins")
    vals = P.M * wht_forward(P).coeffs[1:]
    counts, edges = np.histogram(vals, bins=bins)
    var = float(np.var(vals))
    if var > 0:
        sk, ku = float(stats.skew(vals)), float(stats.kurtosis(vals))
    else:
        sk = ku = math.nan
    return CoefficientHistogram(edges, counts, float(np.mean(vals)), var, sk, ku)
