"""Porter-Thomas tables, distribution-level noise channels and sampling."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import rng as _rng
from .errors import ValidationError
from .walsh import (
    ProbabilityTable,
    check_qubits,
    scale_by_degree,
    wht_forward,
    wht_inverse,
)

NEGATIVE_TOLERANCE = 1e-12


# --------------------------------------------------------------------------
# noise model descriptions


@dataclass(frozen=True)
class GoogleNoise:
    """``phi * P + (1 - phi) / M``."""

    phi: float

    def __post_init__(self):
        _check_unit("phi", self.phi)

    def to_string(self) -> str:
        return f"google:phi={self.phi!r}"


@dataclass(frozen=True)
class SymmetricReadout:
    """``s * T_{1-2q} P + (1 - s) / M``: every bit flips with probability ``q``."""

    s: float
    q: float

    def __post_init__(self):
        _check_unit("s", self.s)
        if not 0.0 <= self.q < 0.5:
            raise ValidationError(f"q must lie in [0, 0.5), got {self.q}")

    @property
    def rho(self) -> float:
        return 1.0 - 2.0 * self.q

    def to_string(self) -> str:
        return f"symro:s={self.s!r},q={self.q!r}"


@dataclass(frozen=True)
class AsymmetricReadout:
    """Readout where a true 1 reads as 0 w.p. ``q1`` and a true 0 reads as 1 w.p. ``q2``."""

    phi_g: float
    q1: float
    q2: float

    def __post_init__(self):
        _check_unit("phi_g", self.phi_g)
        for name in ("q1", "q2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1), got {v}")

    def to_string(self) -> str:
        return f"asymro:phig={self.phi_g!r},q1={self.q1!r},q2={self.q2!r}"


@dataclass(frozen=True)
class SpectralScaling:
    """Multiply degree-``k`` coefficients by ``alpha[k]``; ``alpha[0]`` must be 1."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) < 2:
            raise ValidationError("alpha needs at least two entries")
        if alpha[0] != 1.0:
            raise ValidationError(f"alpha[0] must be 1 to preserve mass, got {alpha[0]}")
        object.__setattr__(self, "alpha", alpha)

    def to_string(self) -> str:
        return "spectral:alpha=" + "/".join(repr(a) for a in self.alpha)


NoiseModelSpec = Union[GoogleNoise, SymmetricReadout, AsymmetricReadout, SpectralScaling]


def _check_unit(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")


_SPEC_KEYS = {
    "google": (GoogleNoise, {"phi": "phi"}),
    "symro": (SymmetricReadout, {"s": "s", "q": "q"}),
    "asymro": (AsymmetricReadout, {"phig": "phi_g", "q1": "q1", "q2": "q2"}),
}


def parse_noise_spec(text: str) -> NoiseModelSpec:
    """Parse ``google:phi=0.4``, ``symro:s=0.5,q=0.038``,
    ``asymro:phig=0.5,q1=0.055,q2=0.023`` or ``spectral:alpha=1/0.9/0.8``.
    """
    m = re.fullmatch(r"\s*(\w+)\s*:\s*(.*?)\s*", text)
    if not m:
        raise ValidationError(f"malformed noise spec {text!r}")
    kind, body = m.group(1).lower(), m.group(2)
    params = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"malformed parameter {item!r} in {text!r}")
        params[key.strip().lower()] = value.strip()
    if kind == "spectral":
        if set(params) != {"alpha"}:
            raise ValidationError("spectral spec takes exactly one parameter, alpha")
        try:
            alpha = tuple(float(a) for a in params["alpha"].split("/"))
        except ValueError as exc:
            raise ValidationError(f"bad alpha list in {text!r}") from exc
        return SpectralScaling(alpha)
    if kind not in _SPEC_KEYS:
        raise ValidationError(f"unknown noise model {kind!r}")
    cls, names = _SPEC_KEYS[kind]
    if set(params) != set(names):
        raise ValidationError(
            f"{kind} needs parameters {sorted(names)}, got {sorted(params)}"
        )
    try:
        kwargs = {names[k]: float(v) for k, v in params.items()}
    except ValueError as exc:
        raise ValidationError(f"non-numeric parameter in {text!r}") from exc
    return cls(**kwargs)


# --------------------------------------------------------------------------
# tables


def generate_porter_thomas(n: int, seed) -> ProbabilityTable:
    """iid Exp(1) weights via ``-log(1 - u)``, normalized to a distribution."""
    check_qubits(n)
    gen = _rng.generator(seed)
    u = gen.random(1 << n)
    u = np.minimum(u, np.nextafter(1.0, 0.0))
    e = -np.log1p(-u)
    return ProbabilityTable(n, e / np.sum(e))


def _finish(n: int, values: np.ndarray) -> ProbabilityTable:
    low = values < 0
    if np.any(values < -NEGATIVE_TOLERANCE):
        raise ValidationError(
            f"noise model produced entries down to {values.min():.3e}; not a distribution"
        )
    clamped = int(np.count_nonzero(low))
    if clamped:
        values = np.where(low, 0.0, values)
    return ProbabilityTable(n, values, clamped=clamped)


def _asymmetric_transfer(values: np.ndarray, n: int, q1: float, q2: float) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    for i in range(n):
        v = out.reshape(-1, 2, 1 << i)
        p0 = v[:, 0, :].copy()
        p1 = v[:, 1, :]
        v[:, 0, :] = (1.0 - q2) * p0 + q1 * p1
        v[:, 1, :] = q2 * p0 + (1.0 - q1) * p1
    return out


def apply_noise_model(P: ProbabilityTable, spec: NoiseModelSpec) -> ProbabilityTable:
    """Exact output distribution of the channel ``spec`` applied to ``P``."""
    if not P.normalized:
        raise ValidationError("noise models act on normalized probability tables")
    n, M = P.n, P.M
    if isinstance(spec, GoogleNoise):
        return _finish(n, spec.phi * P.values + (1.0 - spec.phi) / M)
    if isinstance(spec, SymmetricReadout):
        alpha = np.empty(n + 1)
        alpha[0] = 1.0
        alpha[1:] = spec.s * spec.rho ** np.arange(1, n + 1)
        return _finish(n, wht_inverse(scale_by_degree(wht_forward(P), alpha)))
    if isinstance(spec, AsymmetricReadout):
        k = _asymmetric_transfer(P.values, n, spec.q1, spec.q2)
        return _finish(n, spec.phi_g * k + (1.0 - spec.phi_g) / M)
    if isinstance(spec, SpectralScaling):
        if len(spec.alpha) != n + 1:
            raise ValidationError(f"alpha has {len(spec.alpha)} entries, need {n + 1}")
        return _finish(n, wht_inverse(scale_by_degree(wht_forward(P), spec.alpha)))
    raise ValidationError(f"unsupported noise spec {spec!r}")


# --------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class SampleSet:
    """Observed bitstrings as counts, optionally with the ordered stream."""

    n: int
    counts: np.ndarray
    stream: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        check_qubits(self.n)
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.shape != (1 << self.n,):
            raise ValidationError(f"counts for n={self.n} need length {1 << self.n}")
        if np.any(counts < 0):
            raise ValidationError("negative counts")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if self.stream is not None:
            stream = np.array(self.stream, dtype=np.int64, copy=True)
            if stream.ndim != 1:
                raise ValidationError("stream must be one-dimensional")
            if stream.size and (stream.min() < 0 or stream.max() >= 1 << self.n):
                raise ValidationError("stream index out of range")
            if not np.array_equal(np.bincount(stream, minlength=1 << self.n), counts):
                raise ValidationError("stream does not match counts")
            stream.setflags(write=False)
            object.__setattr__(self, "stream", stream)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    @property
    def M(self) -> int:
        return 1 << self.n

    @classmethod
    def from_stream(cls, n: int, stream, meta=None) -> "SampleSet":
        stream = np.asarray(stream, dtype=np.int64)
        counts = np.bincount(stream, minlength=1 << n) if stream.size else np.zeros(1 << n, np.int64)
        return cls(n, counts, stream, dict(meta or {}))

    def nonzero(self):
        """``(indices, counts)`` of the bitstrings that occur."""
        idx = np.flatnonzero(self.counts)
        return idx, self.counts[idx]

    def ordered(self, seed=0) -> np.ndarray:
        """The stream if present, else counts expanded and shuffled with ``seed``."""
        if self.stream is not None:
            return self.stream
        idx = np.repeat(np.arange(self.M, dtype=np.int64), self.counts)
        _rng.generator(seed).shuffle(idx)
        return idx


class AliasTable:
    """Vose alias table, built with batched pairing of small and large columns."""

    def __init__(self, probs: np.ndarray):
        probs = np.asarray(probs, dtype=np.float64)
        K = probs.shape[0]
        scaled = probs * (K / probs.sum())
        accept = np.ones(K)
        alias = np.arange(K, dtype=np.int64)
        small = np.flatnonzero(scaled < 1.0)
        large = np.flatnonzero(scaled >= 1.0)
        while small.size and large.size:
            k = min(small.size, large.size)
            s, l = small[:k], large[:k]
            accept[s] = scaled[s]
            alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            now_small = scaled[l] < 1.0
            small = np.concatenate([small[k:], l[now_small]])
            large = np.concatenate([l[~now_small], large[k:]])
        # leftovers are 1 up to rounding
        self.accept = accept
        self.alias = alias

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        cols = gen.integers(0, self.accept.shape[0], size=size)
        u = gen.random(size)
        return np.where(u < self.accept[cols], cols, self.alias[cols])


def _inverse_cdf_draw(probs: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
    cdf = np.cumsum(probs)
    u = gen.random(size) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), probs.shape[0] - 1)


def draw_samples(
    P: ProbabilityTable,
    N: int,
    seed,
    keep_stream: bool = True,
    method: str = "auto",
) -> SampleSet:
    """``N`` iid draws from ``P``.

    ``method="auto"`` uses the alias table when ``N > M / 8`` and inverse-CDF
    binary search otherwise; ``"alias"`` or ``"cdf"`` force one route.
    """
    if not P.normalized:
        raise ValidationError("can only sample from a normalized table")
    N = int(N)
    if N < 0:
        raise ValidationError(f"sample count must be >= 0, got {N}")
    if method == "auto":
        method = "alias" if N > P.M / 8 else "cdf"
    gen = _rng.generator(seed)
    if N == 0:
        stream = np.zeros(0, dtype=np.int64)
    elif method == "alias":
        stream = AliasTable(P.values).draw(gen, N)
    elif method == "cdf":
        stream = _inverse_cdf_draw(P.values, gen, N)
    else:
        raise ValidationError(f"unknown sampling method {method!r}")
    meta = {"N": N, "method": method}
    if isinstance(seed, (int, np.integer)):
        meta["seed"] = int(seed)
    counts = np.bincount(stream, minlength=P.M).astype(np.int64)
    return SampleSet(P.n, counts, stream if keep_stream else None, meta)


def simulate_noisy_samples(P: ProbabilityTable, spec: NoiseModelSpec, N: int, seed) -> SampleSet:
    """Sample ideal bitstrings, then corrupt each one by explicit random flips.

    Distributionally identical to ``draw_samples(apply_noise_model(P, spec))``;
    kept for cross-validation of the exact route.
    """
    gen = _rng.generator(seed)
    ideal = draw_samples(P, N, gen).stream.copy()
    n, M = P.n, P.M
    if isinstance(spec, GoogleNoise):
        keep = spec.phi
    elif isinstance(spec, SymmetricReadout):
        keep = spec.s
        flip = (spec.q, spec.q)
    elif isinstance(spec, AsymmetricReadout):
        keep = spec.phi_g
        flip = (spec.q2, spec.q1)  # indexed by the true bit value
    else:
        raise ValidationError(f"no bit-flip simulation for {type(spec).__name__}")
    if not isinstance(spec, GoogleNoise):
        for i in range(n):
            bit = (ideal >> i) & 1
            p = np.where(bit == 1, flip[1], flip[0])
            ideal ^= (gen.random(N) < p).astype(np.int64) << i
    scrambled = gen.random(N) >= keep
    ideal[scrambled] = gen.integers(0, M, size=int(scrambled.sum()))
    return SampleSet.from_stream(n, ideal, {"N": N, "route": "bitflip"})
