"""Command-line front end: run, sweep, oracle, check.

Exit codes: 0 success, 1 model or assertion failure, 2 usage error,
3 I/O error.  Flags override values from ``--config`` (a JSON object keyed by
long option names), which override the built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .alloc import ALGORITHMS
from .engine import CHUNK, N_FCOLS, N_ICOLS, RunConfig, initial_fill, run, trace_lines
from .oracle import CrossCheckFailure, PrecisionLoss, expected_r
from .spectrum import CorruptState

EXIT_OK, EXIT_MODEL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

SWEEP_COLUMNS = (
    "alpha", "alg", "mean_r", "mean_g", "mean_f", "frags_per_channel", "g_over_r",
    "type0_frac", "type1_frac", "type2_frac", "mean_gap_size", "mean_frag_size",
    "first_gap_lo", "beta_hat", "theta_hat", "ks",
)

REFERENCE_ALPHAS = tuple(round(0.05 * i, 2) for i in range(1, 21))

DEFAULTS = {
    "alpha": 0.1,
    "alg": "ls",
    "events": 2_000_000,
    "warmup": 1_000_000,
    "seed": 0,
    "out": None,
    "format": "json",
    "workers": 1,
    "trace": None,
    "alphas": None,
    "algs": None,
    "replications": 1,
    "method": "auto",
    "samples": 10**7,
    "tol": 1e-6,
    "compare": None,
    "compare_tol": 0.01,
    "check_level": 1,
    "inject_fault": None,
}

# per-command defaults that differ from the common ones
COMMAND_DEFAULTS = {
    "check": {"events": 100_000, "alphas": "0.05,0.3,0.8", "algs": "ls,cs,lfs"},
    "sweep": {"alphas": "0.05,0.1,0.2", "algs": "ls,cs,lfs"},
    "oracle": {"alphas": ",".join(map(repr, REFERENCE_ALPHAS))},
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def derive_seed(base_seed: int, alpha_index: int, alg_index: int, replication: int) -> int:
    """Seed of one sweep cell: first 64-bit word of SeedSequence([base, ai, gi, r])."""
    ss = np.random.SeedSequence([base_seed, alpha_index, alg_index, replication])
    return int(ss.generate_state(1, np.uint64)[0])


def _floats(text: str) -> list[float]:
    try:
        values = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError("empty list")
    return values


def _algs(text: str) -> list[str]:
    algs = [x.strip().lower() for x in str(text).split(",") if x.strip()]
    bad = [a for a in algs if a not in ALGORITHMS]
    if bad or not algs:
        raise UsageError(f"unknown algorithm(s) {bad}; choose from {sorted(ALGORITHMS)}")
    return algs


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(x) if isinstance(x, float) else str(x)


def _write_text(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _summary_text(summary, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"
    rows = [line.split("=", 1) for line in summary.to_flat().splitlines()]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([k for k, _ in rows])
    w.writerow([v for _, v in rows])
    return buf.getvalue()


def _config(args, alpha=None, alg=None, seed=None) -> RunConfig:
    try:
        return RunConfig(
            alpha=args.alpha if alpha is None else alpha,
            algorithm=args.alg if alg is None else alg,
            seed=args.seed if seed is None else seed,
            total_events=args.events,
            warmup_events=args.warmup,
            record_trace=args.trace is not None,
            check_level=args.check_level,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- run


def cmd_run(args) -> int:
    config = _config(args)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as trace:
            summary = run(config, trace=trace)
    else:
        summary = run(config)
    _write_text(args.out, _summary_text(summary, args.format))
    return EXIT_OK


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepSpec:
    alphas: tuple[float, ...]
    algorithms: tuple[str, ...]
    replications: int
    base_seed: int
    events: int
    warmup: int
    workers: int = 1
    check_level: int = 1

    def cells(self) -> list[tuple[int, int, int, RunConfig]]:
        out = []
        for ai, alpha in enumerate(self.alphas):
            for gi, alg in enumerate(self.algorithms):
                for r in range(self.replications):
                    cfg = RunConfig(alpha=alpha, algorithm=alg,
                                    seed=derive_seed(self.base_seed, ai, gi, r),
                                    total_events=self.events, warmup_events=self.warmup,
                                    check_level=self.check_level)
                    out.append((ai, gi, r, cfg))
        return out


def _run_cell(config: RunConfig):
    try:
        return run(config), None
    except CorruptState as exc:
        return None, f"{exc}"


def sweep_row(alpha: float, alg: str, summaries: list) -> dict:
    """One sweep.csv row: the mean over replications of each column."""

    def avg(get):
        vals = [get(s) for s in summaries]
        vals = [v for v in vals if v is not None and not math.isnan(v)]
        return sum(vals) / len(vals) if vals else math.nan

    def nf(attr):
        return lambda s: getattr(s.normal_fit, attr) if s.normal_fit is not None else None

    return {
        "alpha": alpha, "alg": alg,
        "mean_r": avg(lambda s: s.mean_r),
        "mean_g": avg(lambda s: s.mean_g),
        "mean_f": avg(lambda s: s.mean_f),
        "frags_per_channel": avg(lambda s: s.mean_frags_per_channel),
        "g_over_r": avg(lambda s: s.mean_g_over_r),
        "type0_frac": avg(lambda s: s.type_fractions[0]),
        "type1_frac": avg(lambda s: s.type_fractions[1]),
        "type2_frac": avg(lambda s: s.type_fractions[2]),
        "mean_gap_size": avg(lambda s: s.mean_gap_size),
        "mean_frag_size": avg(lambda s: s.mean_fragment_size),
        "first_gap_lo": avg(lambda s: s.mean_first_gap_lo),
        "beta_hat": avg(nf("beta_hat")),
        "theta_hat": avg(nf("theta_hat")),
        "ks": avg(nf("ks_distance")),
    }


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def run_sweep(spec: SweepSpec, out_dir: str | None = None, fmt: str = "json"):
    """Run every cell; returns (rows, failures).  Results never depend on ``workers``."""
    cells = spec.cells()
    configs = [c[3] for c in cells]
    if spec.workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_cell, configs))
    else:
        results = [_run_cell(c) for c in configs]

    failures = []
    grouped: dict[tuple[int, int], list] = {}
    for (ai, gi, r, cfg), (summary, err) in zip(cells, results):
        if err is not None:
            failures.append(f"alpha={cfg.alpha!r} alg={cfg.algorithm} rep={r}: {err}")
            continue
        grouped.setdefault((ai, gi), []).append(summary)
        if out_dir is not None:
            name = f"alpha{cfg.alpha!r}_{cfg.algorithm}_rep{r}.{fmt}"
            _write_text(os.path.join(out_dir, name), _summary_text(summary, fmt))

    rows = [sweep_row(spec.alphas[ai], spec.algorithms[gi], grouped[(ai, gi)])
            for ai in range(len(spec.alphas)) for gi in range(len(spec.algorithms))
            if (ai, gi) in grouped]
    if out_dir is not None:
        _write_text(os.path.join(out_dir, "sweep.csv"), sweep_csv(rows))
    return rows, failures


def cmd_sweep(args) -> int:
    if args.replications < 1 or args.workers < 1:
        raise UsageError("replications and workers must be positive")
    spec = SweepSpec(
        alphas=tuple(_floats(args.alphas)), algorithms=tuple(_algs(args.algs)),
        replications=args.replications, base_seed=args.seed,
        events=args.events, warmup=args.warmup, workers=args.workers,
        check_level=args.check_level,
    )
    # validate every cell before spending time on any
    try:
        spec.cells()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    rows, failures = run_sweep(spec, out_dir, args.format)
    for f in failures:
        print(f"cell failed: {f}", file=sys.stderr)
    return EXIT_MODEL if failures else EXIT_OK


# ---------------------------------------------------------------- oracle


def _read_sweep(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_oracle(args) -> int:
    alphas = _floats(args.alphas)
    for a in alphas:
        if not 0 < a <= 1:
            raise UsageError(f"alpha must be in (0, 1], got {a!r}")
    results = {}
    for a in alphas:
        try:
            results[a] = expected_r(a, tol=args.tol, method=args.method,
                                    samples=args.samples, seed=args.seed)
        except (CrossCheckFailure, PrecisionLoss) as exc:
            print(f"oracle failed at alpha={a!r}: {exc}", file=sys.stderr)
            return EXIT_MODEL

    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "expected_r", "method", "std_error", "terms_used"])
        for r in results.values():
            w.writerow([repr(r.alpha), repr(r.expected_r), r.method, repr(r.std_error), r.terms_used])
        text = buf.getvalue()
    else:
        text = "".join(r.line() + "\n" for r in results.values())
    _write_text(args.out, text)

    if args.compare:
        worst = 0.0
        for row in _read_sweep(args.compare):
            a = float(row["alpha"])
            ref = results.get(a)
            if ref is None:
                ref = expected_r(a, tol=args.tol, method=args.method, samples=args.samples, seed=args.seed)
            rel = abs(float(row["mean_r"]) - ref.expected_r) / ref.expected_r
            worst = max(worst, rel)
            print(f"compare alpha={a!r} alg={row['alg']} sim={float(row['mean_r'])!r} "
                  f"oracle={ref.expected_r!r} rel={rel:.4%}", file=sys.stderr)
        if worst >= args.compare_tol:
            return EXIT_MODEL
    return EXIT_OK


# ---------------------------------------------------------------- check


def check_one(alpha: float, alg: str, events: int, seed: int, inject_fault: int | None = None) -> None:
    """Run with every checker enabled; raises CorruptState on the first violation."""
    cfg = RunConfig(alpha=alpha, algorithm=alg, seed=seed, total_events=events,
                    warmup_events=0, check_level=2, recount_every=10_000)
    eng = initial_fill(cfg)
    rec_i = np.zeros((min(CHUNK, events), N_ICOLS), dtype=np.int64)
    rec_f = np.zeros((min(CHUNK, events), N_FCOLS))
    done = 0
    while done < events:
        n = min(rec_i.shape[0], events - done)
        if inject_fault is not None and done <= inject_fault < done + n:
            n = inject_fault - done
            if n == 0:
                eng.corrupt_for_test()
                inject_fault = None
                continue
        eng.advance(n, rec_i, rec_f)
        done += n


def cmd_check(args) -> int:
    alphas = _floats(args.alphas)
    algs = _algs(args.algs)
    for a in alphas:
        if not 0 < a <= 1:
            raise UsageError(f"alpha must be in (0, 1], got {a!r}")
    if args.events < 1:
        raise UsageError("events must be positive")
    failed = False
    for alpha in alphas:
        for alg in algs:
            try:
                check_one(alpha, alg, args.events, args.seed, args.inject_fault)
            except CorruptState as exc:
                failed = True
                print(f"FAIL alpha={alpha!r} alg={alg}: {exc}", file=sys.stderr)
                if exc.trace_line:
                    print(exc.trace_line, file=sys.stderr)
                continue
            print(f"ok alpha={alpha!r} alg={alg} events={args.events} violations=0")
    return EXIT_MODEL if failed else EXIT_OK


# ---------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values")
    common.add_argument("--alpha", type=float, help="maximum request size in (0, 1]")
    common.add_argument("--alg", choices=sorted(ALGORITHMS), help="gap scan")
    common.add_argument("--events", type=int, help="departures to simulate")
    common.add_argument("--warmup", type=int, help="departures discarded before measuring")
    common.add_argument("--seed", type=int, help="64-bit seed (base seed for sweeps)")
    common.add_argument("--out", help="output file (directory for sweep); default stdout")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--workers", type=int, help="worker processes for sweeps")
    common.add_argument("--trace", help="write one line per departure to this file")
    common.add_argument("--check-level", type=int, choices=(0, 1, 2),
                        help="0 none, 1 identities every event, 2 also full structure")

    p = argparse.ArgumentParser(prog="fragsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="simulate one configuration")

    sw = sub.add_parser("sweep", parents=[common], help="simulate an alpha x algorithm grid")
    sw.add_argument("--alphas", help="comma-separated alpha values")
    sw.add_argument("--algs", help="comma-separated algorithms")
    sw.add_argument("--replications", type=int)

    orc = sub.add_parser("oracle", parents=[common], help="expected channel count E(R)")
    orc.add_argument("--alphas", help="comma-separated alpha values")
    orc.add_argument("--method", choices=("auto", "exact", "monte_carlo"))
    orc.add_argument("--samples", type=int, help="Monte Carlo samples")
    orc.add_argument("--tol", type=float)
    orc.add_argument("--compare", help="sweep.csv to compare mean_r against")
    orc.add_argument("--compare-tol", type=float, help="largest accepted relative error")

    ck = sub.add_parser("check", parents=[common], help="run the invariant checkers")
    ck.add_argument("--alphas", help="comma-separated alpha values")
    ck.add_argument("--algs", help="comma-separated algorithms")
    ck.add_argument("--inject-fault", type=int, help=argparse.SUPPRESS)
    return p


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from the defaults."""
    file_values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad config file {args.config}: {exc}") from None
        if not isinstance(file_values, dict):
            raise UsageError("config file must hold a JSON object")
        file_values = {k.replace("-", "_"): v for k, v in file_values.items()}
    defaults = dict(DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {}))
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, file_values.get(key, default))
    return args


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "check": cmd_check}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = resolve(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fragsim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorruptState as exc:
        print(f"fragsim: {exc}", file=sys.stderr)
        if exc.trace_line:
            print(exc.trace_line, file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"fragsim: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
