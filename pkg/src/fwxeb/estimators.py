"""Fidelity and readout estimators computed from an ideal table and samples.

All estimators depend on the samples only through their counts.  Estimators
that are undefined for an input raise :class:`DegenerateEstimate`;
:func:`estimate_all` turns those into ``nan`` plus a status entry.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateEstimate, ValidationError
from .noise import SampleSet
from .walsh import ProbabilityTable, SpectralTable, apply_noise_operator, wht_forward, wht_inverse

MLE_BRACKET = (-0.2, 1.2)
MLE_TOL = 1e-8
MLE_MAX_ITER = 200
DEFAULT_Q = 0.038


def _check_pair(P: ProbabilityTable, samples: SampleSet):
    if P.n != samples.n:
        raise ValidationError(f"table has n={P.n} but samples have n={samples.n}")


def _sampled(P: ProbabilityTable, samples: SampleSet):
    _check_pair(P, samples)
    idx, c = samples.nonzero()
    N = int(c.sum())
    if N == 0:
        raise DegenerateEstimate("empty-samples", "sample set is empty")
    return P.values[idx], c.astype(np.float64), N


def second_moment(P: ProbabilityTable) -> float:
    """``w^(2) = sum_x P(x)**2``."""
    return float(np.sum(P.values * P.values))


def xeb_u(P: ProbabilityTable, samples: SampleSet) -> float:
    """Linear cross-entropy ``U = (M/N) sum_j P(z_j) - 1``."""
    w, c, N = _sampled(P, samples)
    return P.M / N * float(np.sum(c * w)) - 1.0


def xeb_v(P: ProbabilityTable, samples: SampleSet) -> float:
    """``V = U / (M w^(2) - 1)``, unbiased for a single circuit under the Google model."""
    denom = P.M * second_moment(P) - 1.0
    if denom <= 1e-12:
        raise DegenerateEstimate("uniform-table", f"M*w2 - 1 = {denom:.3e}")
    return xeb_u(P, samples) / denom


@dataclass(frozen=True)
class MixtureFit:
    """Root of the mixture-weight score; ``raw`` is the unclamped root."""

    phi: float
    status: str
    raw: float
    iterations: int


def _mixture_score(phi, d, c, M):
    return float(np.sum(c * d / (phi * d + 1.0 / M)))


def mixture_weight_mle(t: np.ndarray, c: np.ndarray, M: int) -> MixtureFit:
    """Maximize ``sum c log(phi t + (1 - phi)/M)`` over ``phi``.

    The score is strictly decreasing where every term is positive, so the
    root is found by bisection on ``MLE_BRACKET`` cut to that region, then
    clamped to [0, 1].
    """
    d = np.asarray(t, dtype=np.float64) - 1.0 / M
    c = np.asarray(c, dtype=np.float64)
    live = (c > 0) & (np.abs(d * M) > 1e-12)
    d, c = d[live], c[live]
    if d.size == 0:
        raise DegenerateEstimate(
            "constant-sampled-probabilities", "every sampled probability equals 1/M"
        )
    lo, hi = MLE_BRACKET
    lo_pole = hi_pole = False
    if np.any(d > 0):
        pole = float(np.max(-1.0 / (M * d[d > 0])))
        if pole >= lo:
            lo, lo_pole = pole, True
    if np.any(d < 0):
        pole = float(np.min(-1.0 / (M * d[d < 0])))
        if pole <= hi:
            hi, hi_pole = pole, True
    f_lo = math.inf if lo_pole else _mixture_score(lo, d, c, M)
    f_hi = -math.inf if hi_pole else _mixture_score(hi, d, c, M)
    it = 0
    if f_lo <= 0:
        root = lo
    elif f_hi >= 0:
        root = hi
    else:
        a, b = lo, hi
        while b - a > MLE_TOL and it < MLE_MAX_ITER:
            mid = 0.5 * (a + b)
            if _mixture_score(mid, d, c, M) > 0:
                a = mid
            else:
                b = mid
            it += 1
        root = 0.5 * (a + b)
    phi = min(1.0, max(0.0, root))
    status = "converged" if phi == root else "clamped"
    return MixtureFit(phi, status, root, it)


def mle_phi(P: ProbabilityTable, samples: SampleSet) -> MixtureFit:
    """Maximum-likelihood fidelity under ``phi P + (1 - phi)/M``."""
    w, c, _ = _sampled(P, samples)
    return mixture_weight_mle(w, c, P.M)


def mle_score(P: ProbabilityTable, samples: SampleSet, phi: float) -> float:
    """Derivative of the Google-model log-likelihood at ``phi``."""
    w, c, _ = _sampled(P, samples)
    return _mixture_score(phi, w - 1.0 / P.M, c, P.M)


def _repeat_statistic(samples: SampleSet) -> tuple[float, int]:
    N = samples.N
    if N < 2:
        raise DegenerateEstimate("too-few-samples", f"need N >= 2, got {N}")
    c = samples.counts.astype(np.float64)
    sum_sq = float(np.sum(c * c))
    return sum_sq - N - (float(N) * N - N) / samples.M, N


def t_estimator(samples: SampleSet) -> float:
    """``T^2``, the repeat-count estimate of ``phi**2``; needs no probabilities."""
    excess, N = _repeat_statistic(samples)
    M = float(samples.M)
    return M * (M + 1.0) / ((float(N) * N - N) * (M - 1.0)) * excess


def s_estimator(P: ProbabilityTable, samples: SampleSet) -> float:
    """``S^2``: ``T^2`` normalized by the table's own second moment."""
    _check_pair(P, samples)
    spread = second_moment(P) - 1.0 / P.M
    if spread <= 1e-15:
        raise DegenerateEstimate("uniform-table", f"w2 - 1/M = {spread:.3e}")
    excess, N = _repeat_statistic(samples)
    return excess / ((float(N) * N - N) * spread)


def clamped_root(square: float) -> float:
    return max(0.0, math.sqrt(max(0.0, square)))


def formula77(e1=(), e2=(), eq=()) -> float:
    """A-priori fidelity: product of ``1 - e`` over gates and qubit readouts."""
    out = 1.0
    for rates in (e1, e2, eq):
        for e in rates:
            e = float(e)
            if not 0.0 <= e <= 1.0:
                raise ValidationError(f"error rate {e} outside [0, 1]")
            out *= 1.0 - e
    return out


# --------------------------------------------------------------------------
# readout ("secondary") signal


@dataclass(frozen=True)
class SecondarySignal:
    """Outcome distribution given no gate error and at least one readout flip.

    ``norm2`` is ``sum_x table(x)**2`` (counting measure, like ``w^(2)``).
    """

    n: int
    q: float
    table: np.ndarray = field(repr=False)
    spectrum: SpectralTable = field(repr=False)
    norm2: float

    @property
    def D(self) -> float:
        return 1.0 - (1.0 - self.q) ** self.n


def _check_q(q):
    if not 0.0 < q < 0.5:
        raise ValidationError(f"readout rate q must lie in (0, 0.5), got {q}")


def secondary_signal(P: ProbabilityTable, q: float) -> SecondarySignal:
    """``(T_{1-2q} P - (1-q)**n P) / (1 - (1-q)**n)``, built spectrally."""
    _check_q(q)
    n, M = P.n, P.M
    none_flipped = (1.0 - q) ** n
    D = 1.0 - none_flipped
    ph = wht_forward(P)
    noisy = apply_noise_operator(ph, 1.0 - 2.0 * q)
    coeffs = (noisy.coeffs - none_flipped * ph.coeffs) / D
    spec = SpectralTable(n, coeffs)
    table = wht_inverse(spec)
    # norm2 via Parseval
    norm2 = M * float(np.sum(coeffs * coeffs))
    return SecondarySignal(n, float(q), table, spec, norm2)


def _count_spectrum(samples: SampleSet) -> SpectralTable:
    return wht_forward(samples.counts.astype(np.float64))


@dataclass(frozen=True)
class ReadoutMoments:
    """Centered correlations of the samples with the ideal and readout signals.

    ``gram`` holds ``M sum f g - 1`` for the pairs (P, P), (P, Nro), (Nro, Nro);
    ``corr`` holds ``(M/N) sum_j f(z_j) - 1`` for f = P, Nro.
    """

    gram: np.ndarray
    corr: np.ndarray


def readout_moments(P: ProbabilityTable, samples: SampleSet, q: float) -> ReadoutMoments:
    _check_pair(P, samples)
    N = samples.N
    if N == 0:
        raise DegenerateEstimate("empty-samples", "sample set is empty")
    M = P.M
    sig = secondary_signal(P, q)
    ph = wht_forward(P).coeffs[1:]
    nh = sig.spectrum.coeffs[1:]
    ah = _count_spectrum(samples).coeffs[1:]
    m2 = float(M) * M
    gram = m2 * np.array(
        [
            [np.sum(ph * ph), np.sum(ph * nh)],
            [np.sum(ph * nh), np.sum(nh * nh)],
        ]
    )
    corr = m2 / N * np.array([np.sum(ah * ph), np.sum(ah * nh)])
    return ReadoutMoments(gram, corr)


def phi_ro_moments(P: ProbabilityTable, samples: SampleSet, q: float = DEFAULT_Q):
    """``(phi, phi_ro)`` solving the 2x2 correlation system; no optimization."""
    mom = readout_moments(P, samples, q)
    g = mom.gram
    det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
    if g[1, 1] <= 1e-12 or det <= 1e-12 * g[0, 0] * g[1, 1]:
        raise DegenerateEstimate("degenerate-readout-gram", f"gram determinant {det:.3e}")
    phi, phi_ro = np.linalg.solve(g, mom.corr)
    return float(phi), float(phi_ro)


def phi_ro_corr(
    P: ProbabilityTable,
    samples: SampleSet,
    q: float = DEFAULT_Q,
    assume_orthogonal: bool = False,
) -> float:
    """Correlation-style estimate of ``phi_ro``.

    With ``assume_orthogonal`` the readout correlation is divided by
    ``M sum Nro**2 - 1`` alone, which is biased per circuit by the residual
    overlap between ``P`` and ``Nro``; the default removes that overlap by
    solving jointly for ``(phi, phi_ro)``.
    """
    if assume_orthogonal:
        mom = readout_moments(P, samples, q)
        if mom.gram[1, 1] <= 1e-12:
            raise DegenerateEstimate("uniform-table", "readout signal has no spread")
        return float(mom.corr[1] / mom.gram[1, 1])
    return phi_ro_moments(P, samples, q)[1]


@dataclass(frozen=True)
class PhiRoFit:
    phi: float
    phi_ro: float
    log_likelihood: float
    status: str
    active: tuple = ()
    message: str = ""


# rows a, offsets b of the feasible set a.x <= b
_SIMPLEX_A = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
_SIMPLEX_B = np.array([0.0, 0.0, 1.0])
_SIMPLEX_NAMES = ("phi>=0", "phi_ro>=0", "phi+phi_ro<=1")


def _kkt_ok(grad, active, tol):
    # maximization: grad must be a non-negative combination of active normals
    if not active:
        return float(np.linalg.norm(grad)) < tol
    A = _SIMPLEX_A[list(active)].T
    lam, *_ = np.linalg.lstsq(A, grad, rcond=None)
    resid = float(np.linalg.norm(A @ lam - grad))
    return resid < tol and bool(np.all(lam > -tol))


def phi_ro_mle(
    P: ProbabilityTable, samples: SampleSet, q: float = DEFAULT_Q, grid: int = 100
) -> PhiRoFit:
    """Joint MLE of ``(phi, phi_ro)`` on ``phi, phi_ro >= 0, phi + phi_ro <= 1``.

    The model probability of a bitstring is
    ``phi (P - 1/M) + phi_ro (Nro - 1/M) + 1/M``.  A ``(grid+1)``-point
    lattice over the simplex picks the start, SLSQP refines it, and a KKT
    check decides the status.
    """
    w, c, N = _sampled(P, samples)
    M = P.M
    sig = secondary_signal(P, q)
    if sig.norm2 * M - 1.0 <= 1e-12:
        raise DegenerateEstimate("uniform-table", "readout signal has no spread")
    idx, _ = samples.nonzero()
    a = w - 1.0 / M
    b = sig.table[idx] - 1.0 / M
    cw = c / N

    def loglik(x):
        pi = x[0] * a + x[1] * b + 1.0 / M
        if np.any(pi <= 0):
            return -math.inf
        return float(np.sum(cw * np.log(pi)))

    def grad(x):
        pi = x[0] * a + x[1] * b + 1.0 / M
        r = cw / pi
        return np.array([np.sum(r * a), np.sum(r * b)])

    steps = np.arange(grid + 1) / grid
    best, best_x = -math.inf, (0.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i, phi in enumerate(steps):
            ro = steps[: grid + 1 - i]
            pi = phi * a[None, :] + ro[:, None] * b[None, :] + 1.0 / M
            ll = np.where(np.all(pi > 0, axis=1), np.sum(cw * np.log(np.maximum(pi, 1e-300)), axis=1), -np.inf)
            j = int(np.argmax(ll))
            if ll[j] > best:
                best, best_x = float(ll[j]), (float(phi), float(ro[j]))

    res = minimize(
        lambda x: -loglik(x),
        np.array(best_x),
        jac=lambda x: -grad(x),
        method="SLSQP",
        bounds=[(0.0, 1.0), (0.0, 1.0)],
        constraints=[{"type": "ineq", "fun": lambda x: 1.0 - x[0] - x[1],
                      "jac": lambda x: np.array([-1.0, -1.0])}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    x = np.clip(res.x, 0.0, 1.0)
    if x.sum() > 1.0:
        x = x / x.sum()
    ll = loglik(x)
    if not ll >= best:
        x, ll = np.array(best_x), best
    active = tuple(i for i in range(3) if _SIMPLEX_A[i] @ x - _SIMPLEX_B[i] > -1e-9)
    g = grad(x)
    if _kkt_ok(g, active, 1e-6):
        status = "boundary" if active else "converged"
    else:
        status = "failed"
    return PhiRoFit(
        float(x[0]), float(x[1]), ll * N, status,
        tuple(_SIMPLEX_NAMES[i] for i in active), str(res.message),
    )


def phi_ro_from_phi(phi: float, q: float, n: int) -> float:
    """Readout share implied by a fidelity: ``phi ((1-q)**-n - 1)``."""
    _check_q(q)
    if n < 1:
        raise ValidationError("n must be >= 1")
    return phi * ((1.0 - q) ** (-n) - 1.0)


def alt_phi(phi_ro: float, q: float, n: int) -> float:
    """Fidelity implied by a readout share: ``phi_ro / ((1-q)**-n - 1)``."""
    _check_q(q)
    if n < 1:
        raise ValidationError("n must be >= 1")
    return phi_ro / ((1.0 - q) ** (-n) - 1.0)


# --------------------------------------------------------------------------
# combined report


@dataclass
class EstimatorReport:
    u: float = math.nan
    v: float = math.nan
    mle: float = math.nan
    t_squared: float = math.nan
    t: float = math.nan
    s_squared: float = math.nan
    s: float = math.nan
    phi_ro_corr: float = math.nan
    phi_ro_mle: float = math.nan
    phi_joint_mle: float = math.nan
    alt_phi: float = math.nan
    formula77: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _status(report, name, fn):
    try:
        value = fn()
    except DegenerateEstimate as exc:
        report.diagnostics[name] = {"status": "degenerate", "reason": exc.reason}
        return None
    report.diagnostics.setdefault(name, {"status": "converged"})
    return value


def estimate_all(
    P: ProbabilityTable,
    samples: SampleSet,
    q: float = DEFAULT_Q,
    formula77_value: float | None = None,
    readout: bool = True,
) -> EstimatorReport:
    """Every scalar estimator for one (table, samples) pair."""
    _check_pair(P, samples)
    r = EstimatorReport()
    M, N = P.M, samples.N
    if formula77_value is not None:
        r.formula77 = float(formula77_value)

    u = _status(r, "u", lambda: xeb_u(P, samples))
    if u is not None:
        r.u = u
        w, c, _ = _sampled(P, samples)
        mw = M * w
        var = float(np.sum(c * (mw - (u + 1.0)) ** 2)) / max(N - 1, 1)
        r.diagnostics["u"]["stderr"] = math.sqrt(var / N)
    v = _status(r, "v", lambda: xeb_v(P, samples))
    if v is not None:
        r.v = v
        r.diagnostics["v"]["stderr"] = r.diagnostics["u"]["stderr"] / (M * second_moment(P) - 1.0)

    fit = _status(r, "mle", lambda: mle_phi(P, samples))
    if fit is not None:
        r.mle = fit.phi
        r.diagnostics["mle"] = {"status": fit.status, "raw_root": fit.raw}
        w, c, _ = _sampled(P, samples)
        d = w - 1.0 / M
        info = float(np.sum(c * (d / (fit.phi * d + 1.0 / M)) ** 2))
        if info > 0:
            r.diagnostics["mle"]["stderr"] = 1.0 / math.sqrt(info)

    t2 = _status(r, "t", lambda: t_estimator(samples))
    if t2 is not None:
        r.t_squared, r.t = t2, clamped_root(t2)
        if t2 < 0:
            r.diagnostics["t"]["status"] = "clamped"
    s2 = _status(r, "s", lambda: s_estimator(P, samples))
    if s2 is not None:
        r.s_squared, r.s = s2, clamped_root(s2)
        if s2 < 0:
            r.diagnostics["s"]["status"] = "clamped"

    if readout:
        ro = _status(r, "phi_ro_corr", lambda: phi_ro_corr(P, samples, q))
        if ro is not None:
            r.phi_ro_corr = ro
        joint = _status(r, "phi_ro_mle", lambda: phi_ro_mle(P, samples, q))
        if joint is not None:
            r.diagnostics["phi_ro_mle"] = {
                "status": joint.status,
                "active": list(joint.active),
                "log_likelihood": joint.log_likelihood,
            }
            if joint.status != "failed":
                r.phi_ro_mle, r.phi_joint_mle = joint.phi_ro, joint.phi
                r.alt_phi = alt_phi(joint.phi_ro, q, P.n)
            else:
                r.diagnostics["phi_ro_mle"]["reason"] = "optimizer-not-converged"
    return r
