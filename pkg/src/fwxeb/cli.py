"""Command-line interface.

Stages communicate through files, e.g.::

    fwxeb gen-pt --n 12 --seed 1 --out ideal.txt
    fwxeb corrupt --table ideal.txt --noise symro:s=0.5,q=0.038 --out noisy.txt
    fwxeb sample --table noisy.txt --shots 500000 --seed 2 --out samples.txt
    fwxeb estimate --table ideal.txt --samples samples.txt

Exit codes: 0 success (estimators may still be degenerate), 1 usage error,
2 I/O error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, estimators, io, noise, pipeline
from .errors import FormatError, InvariantViolation, ValidationError

log = logging.getLogger("fwxeb")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(obj, out):
    text = json.dumps(pipeline._clean(obj), indent=1, sort_keys=True, allow_nan=False)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_pair(args):
    P = io.load_probability_table(args.table)
    S = io.load_samples(args.samples, format=args.samples_format, n=P.n)
    return P, S


def cmd_gen_pt(args):
    P = noise.generate_porter_thomas(args.n, args.seed)
    io.save_probability_table(P, args.out, args.format)


def cmd_corrupt(args):
    P = io.load_probability_table(args.table)
    out = noise.apply_noise_model(P, noise.parse_noise_spec(args.noise))
    if out.clamped:
        log.warning("clamped %d slightly negative entries to 0", out.clamped)
    io.save_probability_table(out, args.out, args.format)


def cmd_sample(args):
    P = io.load_probability_table(args.table)
    if args.bitflip:
        S = noise.simulate_noisy_samples(P, noise.parse_noise_spec(args.bitflip), args.shots, args.seed)
    else:
        S = noise.draw_samples(P, args.shots, args.seed, method=args.method)
    io.save_samples(S, args.out, args.format)


def cmd_estimate(args):
    P, S = _load_pair(args)
    rep = estimators.estimate_all(P, S, q=args.q)
    _write_json(rep.to_dict(), args.out)


def cmd_fourier(args):
    P, S = _load_pair(args)
    result = {}
    try:
        prof = analysis.lambda_profile(P, S, blocks=args.blocks, seed=args.seed)
        result.update(
            status="converged", k=prof.k, reference=analysis.reference_curve(args.s, args.q, P.n),
            **{"lambda": prof.lambdas}, stderr=prof.stderr, unstable=prof.unstable,
            gamma=prof.gamma, lambda_n_parity=prof.lambda_n_parity,
        )
    except estimators.DegenerateEstimate as exc:
        result.update(status="degenerate", reason=exc.reason)
    if args.histogram:
        h = analysis.coefficient_histogram(P, args.histogram)
        result["histogram"] = dataclasses.asdict(h)
    if args.csv and result["status"] == "converged":
        with open(args.csv, "w") as fh:
            fh.write("k,lambda,stderr,unstable\n")
            for k, lam, se, bad in zip(prof.k, prof.lambdas, prof.stderr, prof.unstable):
                fh.write(f"{k},{lam!r},{se!r},{int(bad)}\n")
    _write_json(result, args.out)


def cmd_fit_sq(args):
    P, S = _load_pair(args)
    fit = analysis.fit_sq(P, S, oracle=args.oracle)
    _write_json(dataclasses.asdict(fit), args.out)


def cmd_drift(args):
    P = io.load_probability_table(args.table)
    S = io.load_samples(args.samples, format="bitstrings", n=P.n)
    d = analysis.split_half_drift(P, S, trials=args.trials, seed=args.seed)
    _write_json(
        {"k": np.arange(1, P.n + 1), "chronological": d.chronological,
         "p_values": d.p_values, "u_halves": d.u_halves},
        args.out,
    )


def cmd_pipeline(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    overrides = {
        "n": args.n, "seed": args.seed, "circuits": args.circuits, "shots": args.shots,
        "noise": args.noise, "threads": args.threads, "out_dir": args.out,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.format:
        data["formats"] = args.format.split(",")
    if "n" not in data or "seed" not in data:
        raise ValidationError("pipeline needs --n and --seed (or a config providing them)")
    cfg = pipeline.ExperimentConfig.from_dict(data)
    report = pipeline.run_pipeline(cfg)
    for c in report.circuits:
        gap = c.get("profile", {}).get("xeb_recomposed")
        u = c["estimators"]["u"]
        if gap is not None and u is not None and abs(gap - u) > 1e-10:
            raise InvariantViolation(f"{c['file']}: XEB recomposition off by {gap - u:.3e}")
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    for fmt in cfg.formats:
        for p in pipeline.emit_report(report, fmt, out / f"report.{fmt}"):
            log.info("wrote %s", p)
    agg = report.aggregate
    print(json.dumps({"mean": agg["mean"], "std": agg["std"]}, indent=1, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fwxeb", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def pair(sp):
        sp.add_argument("--table", required=True, help="ideal probability table")
        sp.add_argument("--samples", required=True)
        sp.add_argument("--samples-format", default="auto", choices=["auto", "bitstrings", "counts"])
        sp.add_argument("--out", help="output JSON (default: stdout)")

    sp = sub.add_parser("gen-pt", help="Porter-Thomas table")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="text", choices=["text", "binary"])
    sp.set_defaults(func=cmd_gen_pt)

    sp = sub.add_parser("corrupt", help="apply a noise channel to a table")
    sp.add_argument("--table", required=True)
    sp.add_argument("--noise", required=True, help="e.g. asymro:phig=0.5,q1=0.055,q2=0.023")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="text", choices=["text", "binary"])
    sp.set_defaults(func=cmd_corrupt)

    sp = sub.add_parser("sample", help="draw bitstrings from a table")
    sp.add_argument("--table", required=True)
    sp.add_argument("--shots", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="bitstrings", choices=["bitstrings", "counts"])
    sp.add_argument("--method", default="auto", choices=["auto", "alias", "cdf"])
    sp.add_argument("--bitflip", metavar="SPEC", help="corrupt ideal draws by explicit flips")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("estimate", help="scalar fidelity and readout estimators")
    pair(sp)
    sp.add_argument("--q", type=float, default=estimators.DEFAULT_Q)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("fourier", help="per-degree lambda profile")
    pair(sp)
    sp.add_argument("--blocks", type=int, default=analysis.JACKKNIFE_BLOCKS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--s", type=float, default=1.0, help="reference curve s")
    sp.add_argument("--q", type=float, default=estimators.DEFAULT_Q, help="reference curve q")
    sp.add_argument("--histogram", type=int, metavar="BINS")
    sp.add_argument("--csv", help="long-form profile CSV")
    sp.set_defaults(func=cmd_fourier)

    sp = sub.add_parser("fit-sq", help="effective readout fit (s, q)")
    pair(sp)
    sp.add_argument("--oracle", action="store_true", help="also run the 200x200 grid check")
    sp.set_defaults(func=cmd_fit_sq)

    sp = sub.add_parser("drift", help="split-half non-stationarity check")
    sp.add_argument("--table", required=True)
    sp.add_argument("--samples", required=True, help="bitstrings file (order matters)")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_drift)

    sp = sub.add_parser("pipeline", help="full synthetic or file-driven run")
    sp.add_argument("--config", help="JSON experiment config")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--circuits", type=int)
    sp.add_argument("--shots", type=int)
    sp.add_argument("--noise")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--format", help="comma list of json,csv")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (FormatError, OSError) as exc:
        print(f"fwxeb: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except pipeline.PipelineError as exc:
        print(f"fwxeb: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (FormatError, OSError)):
            return EXIT_IO
        if isinstance(exc.cause, ValidationError):
            return EXIT_USAGE
        return EXIT_INTERNAL
    except ValidationError as exc:
        print(f"fwxeb: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"fwxeb: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
