"""Dense Fourier-Walsh transforms over functions on the discrete n-cube.

Bit convention: bit ``i`` (LSB first) of a table index is the coordinate
``x_{i+1}``; subset masks use the same convention, so ``W_S(x)`` is
``(-1) ** popcount(S & x)``.

The forward transform carries the ``2**-n`` factor, the inverse carries none.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MAX_QUBITS = int(os.environ.get("FWXEB_MAX_QUBITS", 26))


def set_max_qubits(n: int) -> None:
    """Override the dense-table cap (default 26, i.e. 512 MiB of float64)."""
    global MAX_QUBITS
    if n < 1:
        raise ValidationError(f"qubit cap must be >= 1, got {n}")
    MAX_QUBITS = int(n)


def qubits_for_length(length: int) -> int:
    if length < 2 or length & (length - 1):
        raise ValidationError(f"table length {length} is not a power of two >= 2")
    n = length.bit_length() - 1
    check_qubits(n)
    return n


def check_qubits(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise ValidationError(f"qubit count {n} outside [1, {MAX_QUBITS}]")


_POPCOUNT_CACHE: dict[int, np.ndarray] = {}


def popcounts(n: int) -> np.ndarray:
    """Read-only array of ``popcount(i)`` for ``i < 2**n``."""
    pc = _POPCOUNT_CACHE.get(n)
    if pc is None:
        pc = np.zeros(1, dtype=np.int8)
        for _ in range(n):
            pc = np.concatenate([pc, pc + 1])
        pc.setflags(write=False)
        _POPCOUNT_CACHE[n] = pc
    return pc


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProbabilityTable:
    """A real function on ``{0,1}^n`` stored densely, usually a distribution.

    ``clamped`` counts entries in ``[-1e-12, 0)`` that were zeroed by the
    operation that produced the table.
    """

    n: int
    values: np.ndarray
    normalized: bool = True
    clamped: int = 0

    def __post_init__(self):
        check_qubits(self.n)
        values = _frozen(self.values)
        if values.shape != (1 << self.n,):
            raise ValidationError(
                f"table for n={self.n} needs {1 << self.n} values, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("table contains NaN or infinite entries")
        if self.normalized:
            if np.any(values < 0):
                raise ValidationError("probability table has negative entries")
            total = float(np.sum(values))
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(f"probability table sums to {total!r}, not 1")
        object.__setattr__(self, "values", values)

    @property
    def M(self) -> int:
        return 1 << self.n

    @classmethod
    def uniform(cls, n: int) -> "ProbabilityTable":
        return cls(n, np.full(1 << n, 1.0 / (1 << n)))

    @classmethod
    def delta(cls, n: int, index: int = 0) -> "ProbabilityTable":
        v = np.zeros(1 << n)
        v[index] = 1.0
        return cls(n, v)


@dataclass(frozen=True)
class SpectralTable:
    """Fourier-Walsh coefficients ``f^(S)`` indexed by subset mask."""

    n: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_qubits(self.n)
        coeffs = _frozen(self.coeffs)
        if coeffs.shape != (1 << self.n,):
            raise ValidationError(
                f"spectrum for n={self.n} needs {1 << self.n} coefficients, got {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def M(self) -> int:
        return 1 << self.n


def _fwht_inplace(a: np.ndarray) -> None:
    # Unnormalized butterfly; stage h handles bit log2(h). Elementwise numpy
    # ops keep a fixed summation order for every input.
    M = a.shape[0]
    buf = np.empty(M // 2, dtype=a.dtype)
    h = 1
    while h < M:
        v = a.reshape(-1, 2, h)
        x = v[:, 0, :]
        y = v[:, 1, :]
        tmp = buf.reshape(-1, h)
        np.copyto(tmp, x)
        x += y
        np.subtract(tmp, y, out=y)
        h <<= 1


def _as_vector(f) -> np.ndarray:
    if isinstance(f, ProbabilityTable):
        return f.values
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError("expected a one-dimensional table")
    return arr


def wht_forward(f) -> SpectralTable:
    """Return ``f^(S) = 2**-n * sum_x f(x) W_S(x)`` for every mask ``S``.

    Accepts a :class:`ProbabilityTable` or any real vector of length ``2**n``.
    """
    vec = _as_vector(f)
    n = qubits_for_length(vec.shape[0])
    a = np.array(vec, dtype=np.float64, copy=True)
    _fwht_inplace(a)
    a *= 1.0 / a.shape[0]
    return SpectralTable(n, a)


def wht_inverse(c: SpectralTable) -> np.ndarray:
    """Synthesis ``f(x) = sum_S f^(S) W_S(x)``."""
    check_qubits(c.n)
    a = np.array(c.coeffs, dtype=np.float64, copy=True)
    _fwht_inplace(a)
    return a


def scale_by_degree(c: SpectralTable, factors) -> SpectralTable:
    """Multiply each ``c[S]`` by ``factors[|S|]`` (length ``n + 1``)."""
    factors = np.asarray(factors, dtype=np.float64)
    if factors.shape != (c.n + 1,):
        raise ValidationError(f"need {c.n + 1} degree factors, got {factors.shape}")
    return SpectralTable(c.n, c.coeffs * factors[popcounts(c.n)])


def _rho_powers(rho: float, n: int) -> np.ndarray:
    # Repeated multiplication, not rho**k: keeps rho1-then-rho2 equal to
    # rho1*rho2 to within one rounding per degree.
    out = np.empty(n + 1)
    out[0] = 1.0
    for k in range(1, n + 1):
        out[k] = out[k - 1] * rho
    return out


def apply_noise_operator(c: SpectralTable, rho: float) -> SpectralTable:
    """Spectral action of ``T_rho``: ``c[S] -> rho**|S| * c[S]``."""
    rho = float(rho)
    if not 0.0 <= rho <= 1.0:
        raise ValidationError(f"rho must lie in [0, 1], got {rho}")
    return scale_by_degree(c, _rho_powers(rho, c.n))


def convolve(f: ProbabilityTable, g: ProbabilityTable) -> np.ndarray:
    """``(f*g)(x) = 2**-n sum_z f(z) g(x xor z)`` via the convolution theorem."""
    if f.n != g.n:
        raise ValidationError(f"cannot convolve tables with n={f.n} and n={g.n}")
    fh = wht_forward(f)
    gh = wht_forward(g)
    return wht_inverse(SpectralTable(f.n, fh.coeffs * gh.coeffs))


def degree_sums(c: SpectralTable, weights: np.ndarray) -> np.ndarray:
    """Sum ``weights[S]`` over each degree ``|S| = 0..n``."""
    return np.bincount(popcounts(c.n), weights=weights, minlength=c.n + 1)


def degree_energies(c: SpectralTable) -> np.ndarray:
    """``gamma_k = sum_{|S|=k} c[S]**2`` for ``k = 0..n``."""
    return degree_sums(c, c.coeffs * c.coeffs)


def degree_counts(n: int) -> np.ndarray:
    """Number of subsets at each degree, i.e. binomial(n, k)."""
    return np.bincount(popcounts(n), minlength=n + 1)
