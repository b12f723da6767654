"""End-to-end experiment runs and report emission."""
from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as _rng
from .analysis import fit_sq, lambda_profile, split_half_drift
from .errors import DegenerateEstimate, FwxebError, ValidationError
from .estimators import DEFAULT_Q, estimate_all, formula77
from .io import load_probability_table, load_samples
from .noise import apply_noise_model, draw_samples, generate_porter_thomas, parse_noise_spec

SCHEMA_VERSION = 1
ESTIMATORS = ("fidelity", "readout", "lambda", "fit_sq", "drift")
CSV_COLUMNS = (
    "n", "file", "formula77", "U", "V", "MLE", "T", "S",
    "alt_phi", "phi_ro", "s_fit", "q_fit",
)
PROFILE_COLUMNS = ("file", "k", "lambda", "stderr", "unstable")


class PipelineError(FwxebError):
    def __init__(self, circuit: int, stage: str, cause: Exception):
        self.circuit, self.stage, self.cause = circuit, stage, cause
        super().__init__(f"circuit {circuit}, stage {stage}: {cause}")


@dataclass
class ExperimentConfig:
    """One experiment.  ``seed`` is mandatory; nothing is seeded from the clock.

    ``threads`` only affects scheduling and is left out of the report.
    """

    n: int
    seed: int
    circuits: int = 10
    noise: str = "google:phi=0.4"
    shots: int = 500_000
    estimators: tuple = ESTIMATORS
    q: float = DEFAULT_Q
    jackknife_blocks: int = 50
    drift_trials: int = 200
    sampling: str = "auto"
    formula77: dict | None = None
    table_paths: list | None = None
    sample_paths: list | None = None
    out_dir: str | None = None
    formats: tuple = ("json", "csv")
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.estimators, str):
            self.estimators = (self.estimators,)
        est = tuple(self.estimators)
        if est == ("all",):
            est = ESTIMATORS
        unknown = set(est) - set(ESTIMATORS)
        if unknown:
            raise ValidationError(f"unknown estimator groups {sorted(unknown)}")
        self.estimators = est
        self.formats = tuple([self.formats] if isinstance(self.formats, str) else self.formats)
        if set(self.formats) - {"json", "csv"}:
            raise ValidationError(f"unknown formats {self.formats}")
        if self.seed is None:
            raise ValidationError("a master seed is required")
        if self.circuits < 0 or self.shots < 0 or self.threads < 1:
            raise ValidationError("circuits and shots must be >= 0, threads >= 1")
        parse_noise_spec(self.noise)
        for paths in (self.table_paths, self.sample_paths):
            if paths is not None and len(paths) != self.circuits:
                raise ValidationError("one table/sample path per circuit is required")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def identity(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("threads")
        d["estimators"] = list(self.estimators)
        d["formats"] = list(self.formats)
        return d


@dataclass
class RunReport:
    config: dict
    circuits: list
    aggregate: dict
    provenance: dict
    schema_version: int = SCHEMA_VERSION

    def rows(self) -> list[dict]:
        return [c["row"] for c in self.circuits]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "provenance": self.provenance,
            "circuits": self.circuits,
            "aggregate": self.aggregate,
        }


# --------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def mean_std(values) -> tuple[float, float]:
    """Mean and sample std (n - 1) of the finite values; std of one value is 0."""
    vals = [float(v) for v in values if v is not None and math.isfinite(float(v))]
    if not vals:
        return math.nan, math.nan
    mean = math.fsum(vals) / len(vals)
    if len(vals) == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1))


def aggregate_rows(rows: list[dict]) -> dict:
    mean, std = {}, {}
    for col in CSV_COLUMNS[2:]:
        mean[col], std[col] = mean_std(r.get(col) for r in rows)
    return {"mean": mean, "std": std}


def _formula77_value(cfg: ExperimentConfig):
    if not cfg.formula77:
        return None
    f = cfg.formula77
    return formula77(f.get("e1", ()), f.get("e2", ()), f.get("eq", ()))


def circuit_inputs(cfg: ExperimentConfig, i: int, _stage=None):
    """``(label, ideal table, samples)`` for circuit ``i``, exactly as a run sees them."""
    stage = _stage if _stage is not None else [None]
    seeds = _rng.circuit_seeds(cfg.seed, i)
    label = f"circuit_{i:03d}"
    stage[0] = "table"
    if cfg.table_paths:
        P = load_probability_table(cfg.table_paths[i])
        label = Path(cfg.table_paths[i]).stem
    else:
        P = generate_porter_thomas(cfg.n, seeds[_rng.TABLE])
    if P.n != cfg.n:
        raise ValidationError(f"table has n={P.n}, config says n={cfg.n}")
    if cfg.sample_paths:
        stage[0] = "load-samples"
        samples = load_samples(cfg.sample_paths[i], n=cfg.n)
    else:
        stage[0] = "noise"
        noisy = apply_noise_model(P, parse_noise_spec(cfg.noise))
        stage[0] = "sampling"
        samples = draw_samples(noisy, cfg.shots, seeds[_rng.SAMPLING], method=cfg.sampling)
    return label, P, samples


def _run_circuit(cfg: ExperimentConfig, i: int) -> dict:
    seeds = _rng.circuit_seeds(cfg.seed, i)
    where = ["table"]
    stage = "inputs"
    try:
        label, P, samples = circuit_inputs(cfg, i, where)
        out: dict = {"index": i, "file": label, "n": P.n, "N": samples.N}
        analysis_seeds = seeds[_rng.ANALYSIS].spawn(2)

        stage = "estimators"
        rep = estimate_all(
            P, samples, q=cfg.q, formula77_value=_formula77_value(cfg),
            readout="readout" in cfg.estimators,
        )
        out["estimators"] = rep.to_dict()

        if "lambda" in cfg.estimators:
            stage = "lambda"
            try:
                prof = lambda_profile(
                    P, samples, blocks=cfg.jackknife_blocks,
                    seed=_rng.derive_int(analysis_seeds[0]),
                )
                out["profile"] = {
                    "status": "converged",
                    "k": prof.k, "lambda": prof.lambdas, "stderr": prof.stderr,
                    "unstable": prof.unstable, "gamma": prof.gamma,
                    "lambda_n_parity": prof.lambda_n_parity,
                    "xeb_recomposed": prof.xeb(),
                }
            except DegenerateEstimate as exc:
                out["profile"] = {"status": "degenerate", "reason": exc.reason}

        if "fit_sq" in cfg.estimators:
            stage = "fit_sq"
            out["sq_fit"] = dataclasses.asdict(fit_sq(P, samples))

        if "drift" in cfg.estimators:
            stage = "drift"
            if samples.stream is None or samples.N == 0 or samples.N % 2:
                out["drift"] = {"status": "degenerate", "reason": "needs-even-stream"}
            else:
                d = split_half_drift(P, samples, cfg.drift_trials, analysis_seeds[1])
                out["drift"] = {
                    "status": "converged", "chronological": d.chronological,
                    "p_values": d.p_values, "u_halves": d.u_halves,
                }
    except (FwxebError, OSError) as exc:
        if isinstance(exc, PipelineError):
            raise
        if stage == "inputs":
            stage = where[0]
        raise PipelineError(i, stage, exc) from exc

    est = out["estimators"]
    sq = out.get("sq_fit", {})
    out["row"] = {
        "n": P.n, "file": label, "formula77": est["formula77"],
        "U": est["u"], "V": est["v"], "MLE": est["mle"], "T": est["t"], "S": est["s"],
        "alt_phi": est["alt_phi"], "phi_ro": est["phi_ro_mle"],
        "s_fit": sq.get("s", math.nan), "q_fit": sq.get("q", math.nan),
    }
    return _clean(out)


def run_pipeline(config: ExperimentConfig, timestamp: str | None = None) -> RunReport:
    """Run every circuit; identical for any ``threads`` setting."""
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            circuits = list(pool.map(lambda i: _run_circuit(config, i), range(config.circuits)))
    else:
        circuits = [_run_circuit(config, i) for i in range(config.circuits)]
    ident = _clean(config.identity())
    config_hash = hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()
    report = RunReport(
        config=ident,
        circuits=circuits,
        aggregate=_clean(aggregate_rows([c["row"] for c in circuits])),
        provenance={
            "master_seed": config.seed,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "config_hash": config_hash,
        },
    )
    report.provenance["report_hash"] = report_hash(report)
    report.provenance["timestamp"] = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()
    return report


def report_hash(report: RunReport) -> str:
    d = report.to_dict()
    prov = {k: v for k, v in d["provenance"].items() if k not in ("timestamp", "report_hash")}
    d["provenance"] = prov
    return hashlib.sha256(json.dumps(_clean(d), sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# emission


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(report: RunReport, format: str, path, profile_path=None) -> list[Path]:
    """Write the report as ``json`` or ``csv``.

    The CSV has one row per circuit and ``Avg``/``Std`` footer rows (omitted
    when there are no circuits).  Degree profiles go to a long-form CSV next
    to it (``<stem>_profiles.csv`` unless ``profile_path`` is given).
    """
    path = Path(path)
    written = []
    if format == "json":
        with open(path, "w") as fh:
            json.dump(_clean(report.to_dict()), fh, sort_keys=True, indent=1, allow_nan=False)
            fh.write("\n")
        written.append(path)
    elif format == "csv":
        rows = report.rows()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
            if rows:
                agg = aggregate_rows(rows)
                n = rows[0]["n"]
                for name, key in (("Avg", "mean"), ("Std", "std")):
                    w.writerow([n, name] + [_fmt(agg[key][c]) for c in CSV_COLUMNS[2:]])
        written.append(path)
        profile_path = Path(profile_path) if profile_path else path.with_name(path.stem + "_profiles.csv")
        with open(profile_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(PROFILE_COLUMNS)
            for c in report.circuits:
                prof = c.get("profile") or {}
                if prof.get("status") != "converged":
                    continue
                for k, lam, se, bad in zip(prof["k"], prof["lambda"], prof["stderr"], prof["unstable"]):
                    w.writerow([c["file"], k, _fmt(lam), _fmt(se), int(bad)])
        written.append(profile_path)
    else:
        raise ValidationError(f"unknown report format {format!r}")
    return written
