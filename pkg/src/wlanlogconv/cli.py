"""Command-line front end.

    wlanlogconv --config two.cfg region --grid 201
    wlanlogconv --config two.cfg witness --t1 0.5,0.5 --t2 0.1667,0.1667
    wlanlogconv --config two.cfg verify --trials 200 --seed 3
    wlanlogconv --config two.cfg fair --alpha 1
    wlanlogconv --config two.cfg simulate --tau 0.3,0.2 --slots 1000000 --seed 7
    wlanlogconv --manifest out/manifest.json      # replay a previous run

Every run writes its CSV files plus ``manifest.json`` into ``--out-dir``
(default ``$RATEREGION_OUT`` or ``./out``).  Exit codes: 0 success, 1 usage
or input error, 2 numerical failure (non-convergence, residual breach, failed
simulation check).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config, params_from_values
from .csvfmt import to_csv
from .fairness import ConvergenceError, FairnessProblem, maxmin_fair, solve_fair
from .logconv import (
    CSV_HEADER,
    RESIDUAL_TOL,
    BoundaryPointError,
    RootFindingError,
    midpoint_witness,
    verify_segment,
)
from .model import AttemptVector, SaturatedCapError
from .rateregion import GridSpec, pareto_mask, region_csv, sample_region, figure_data
from .simulate import SimConfig, compare

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
# execution settings that never change results and are left out of manifests
_NOT_ECHOED = ("out_dir", "manifest", "config", "threads")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    def __init__(self, message, outputs=None):
        super().__init__(message)
        self.outputs = outputs or {}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(parser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", metavar="PATH", default=d(None), help="key=value parameter file")
    parser.add_argument("--out-dir", metavar="PATH", default=d(None),
                        help="output directory (default $RATEREGION_OUT or ./out)")
    parser.add_argument("--threads", type=int, metavar="N", default=d(1))
    parser.add_argument("--seed", type=int, metavar="N", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wlanlogconv", description="802.11e rate region toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--manifest", metavar="PATH", help="replay the run recorded in a manifest")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("region", help="sample the rate region and its frontier")
    _common(p, suppress=True)
    p.add_argument("--grid", type=int, default=201, help="points per axis")
    p.add_argument("--normalize", choices=("phy-rate", "raw"), default="phy-rate")

    p = sub.add_parser("witness", help="build one log-convexity witness")
    _common(p, suppress=True)
    p.add_argument("--t1", type=_floats, required=True)
    p.add_argument("--t2", type=_floats, required=True)
    p.add_argument("--alpha", type=float, default=0.5, help="mixing weight in [0, 1]")
    p.add_argument("--branch", choices=("upper", "lower"), default="upper")

    p = sub.add_parser("verify", help="check witnesses along segments")
    _common(p, suppress=True)
    p.add_argument("--t1", type=_floats)
    p.add_argument("--t2", type=_floats)
    p.add_argument("--trials", type=int, default=100, help="random pairs when --t1/--t2 are absent")
    p.add_argument("--alphas", type=int, default=11)
    p.add_argument("--tol", type=float, default=RESIDUAL_TOL)

    p = sub.add_parser("fair", help="alpha-fair or max-min fair allocation")
    _common(p, suppress=True)
    p.add_argument("--alpha", type=float, default=None, help="fairness exponent >= 1")
    p.add_argument("--weights", type=_floats, default=None)
    p.add_argument("--maxmin", action="store_true")

    p = sub.add_parser("simulate", help="Monte Carlo check of the analytic model")
    _common(p, suppress=True)
    p.add_argument("--tau", type=_floats, required=True)
    p.add_argument("--slots", type=int, default=1_000_000)
    p.add_argument("--batches", type=int, default=20)
    return parser


def _attempts(values, p, flag):
    if len(values) != p.n:
        raise UsageError(f"{flag} needs {p.n} values, got {len(values)}")
    try:
        return AttemptVector.from_tau(values)
    except SaturatedCapError:
        raise UsageError(f"{flag}: tau = 1 has no finite operating point; the saturated "
                         "station's throughput is the analytic limit L/t_s") from None
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from None


def cmd_region(args, values):
    p = params_from_values(values)
    if args.grid < 2:
        raise UsageError("--grid must be >= 2")
    if p.n == 2:
        files = figure_data(p, args.grid, args.threads, normalization=args.normalize)
    else:
        sample = sample_region(p, GridSpec(points=args.grid), args.normalize, args.threads)
        files = {"region.csv": region_csv(sample, pareto_mask(sample.values))}
    lines = [f"{name}: {text.count(chr(10)) - 1} rows" for name, text in files.items()]
    return files, lines


def _witness_row(w):
    return (w.alpha, w.delta_lower, w.delta_star, w.delta_upper, w.residual)


def cmd_witness(args, values):
    p = params_from_values(values)
    t1, t2 = _attempts(args.t1, p, "--t1"), _attempts(args.t2, p, "--t2")
    if not 0.0 <= args.alpha <= 1.0:
        raise UsageError("--alpha must lie in [0, 1]")
    try:
        w = midpoint_witness(t1, t2, args.alpha, p, args.branch)
    except BoundaryPointError as exc:
        raise UsageError(str(exc)) from None
    in_box = w.in_box(p.tau_bar)
    header = CSV_HEADER + tuple(f"tau_star_{i + 1}" for i in range(p.n))
    files = {"witness.csv": to_csv(header, [_witness_row(w) + (int(in_box),) + tuple(w.t_star.tau)])}
    lines = [
        f"delta roots: lower={w.delta_lower:.12g} upper={w.delta_upper:.12g} (minimiser {w.delta_star:.12g})",
        f"chosen delta={w.delta:.12g} branch={args.branch}",
        "tau*=" + ",".join("%.12g" % t for t in w.t_star.tau),
        f"residual={w.residual:.3g} in_box={int(in_box)}",
    ]
    if w.near_tangent:
        lines.append("note: roots nearly coincide (near tangency)")
    if w.residual > RESIDUAL_TOL:
        raise NumericalFailure(f"residual {w.residual:.3g} exceeds {RESIDUAL_TOL:g}", files)
    return files, lines


def cmd_verify(args, values):
    p = params_from_values(values)
    if (args.t1 is None) != (args.t2 is None):
        raise UsageError("give both --t1 and --t2, or neither")
    if args.t1 is not None:
        pairs = [(_attempts(args.t1, p, "--t1"), _attempts(args.t2, p, "--t2"))]
    else:
        if args.trials < 1:
            raise UsageError("--trials must be >= 1")
        rng = np.random.default_rng(args.seed)
        caps = np.minimum(p.tau_bar, 1.0 - 1e-9)
        pairs = []
        for _ in range(args.trials):
            a = AttemptVector.from_tau(caps * (1.0 - rng.uniform(size=p.n)))
            b = AttemptVector.from_tau(caps * (1.0 - rng.uniform(size=p.n)))
            pairs.append((a, b))
    rows, worst, all_in = [], 0.0, True
    for k, (t1, t2) in enumerate(pairs):
        try:
            rep = verify_segment(t1, t2, p, args.alphas, args.tol)
        except BoundaryPointError as exc:
            raise UsageError(str(exc)) from None
        rows.extend((k,) + row for row in rep.csv_rows())
        worst = max(worst, rep.max_residual)
        all_in = all_in and rep.all_in_box
    files = {"verify.csv": to_csv(("trial",) + CSV_HEADER, rows)}
    lines = [f"segments={len(pairs)} witnesses={len(rows)} max_residual={worst:.3g} all_in_box={int(all_in)}"]
    if worst > args.tol or not all_in:
        raise NumericalFailure("witness check failed", files)
    return files, lines


def cmd_fair(args, values):
    p = params_from_values(values)
    weights = args.weights if args.weights is not None else values.get("weights")
    fair_alpha = args.alpha if args.alpha is not None else values.get("fair_alpha", 1.0)
    if weights is not None and len(weights) != p.n:
        raise UsageError(f"--weights needs {p.n} values, got {len(weights)}")
    if fair_alpha < 1:
        raise UsageError("fairness exponent must be >= 1")
    try:
        if args.maxmin:
            alloc = maxmin_fair(p)
        else:
            alloc = solve_fair(FairnessProblem(p, weights, fair_alpha))
    except ConvergenceError as exc:
        raise NumericalFailure(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = p.n
    header = ([f"tau_{i + 1}" for i in range(n)] + [f"s_{i + 1}" for i in range(n)]
              + ["objective", "kkt_residual", "iterations"])
    row = (list(alloc.tau_opt.tau) + list(alloc.s_opt.s)
           + [alloc.objective, alloc.kkt_residual, alloc.iterations])
    files = {"fair.csv": to_csv(header, [row])}
    lines = ["tau=" + ",".join("%.12g" % t for t in alloc.tau_opt.tau),
             "s=" + ",".join("%.12g" % s for s in alloc.s_opt.s),
             f"objective={alloc.objective:.12g} kkt_residual={alloc.kkt_residual:.3g} "
             f"iterations={alloc.iterations}"]
    if alloc.off:
        lines.append("effectively off: " + ",".join(str(i + 1) for i in alloc.off))
    if alloc.grid_check is not None:
        gc = alloc.grid_check
        lines.append(f"grid check: min rate {gc.solver_value:.6g} vs grid {gc.grid_value:.6g} "
                     f"(tolerance {gc.tolerance:.3g}) {'ok' if gc.passed else 'MISMATCH'}")
        if not gc.passed:
            raise NumericalFailure("max-min solution disagrees with the grid oracle", files)
    return files, lines


def cmd_simulate(args, values):
    p = params_from_values(values)
    T = _attempts(args.tau, p, "--tau")
    try:
        cfg = SimConfig(args.slots, args.seed, args.batches)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = compare(p, T, cfg, threads=args.threads)
    files = {"simulate.csv": report.to_csv()}
    lines = [f"station {i + 1}: analytic={report.s_analytic[i]:.6g} simulated={report.s_hat[i]:.6g} "
             f"z={report.z[i]:+.2f}" for i in range(p.n)]
    lines.append("PASS" if report.passed else "FAIL")
    if not report.passed:
        raise NumericalFailure("simulation disagrees with the analytic model", files)
    return files, lines


COMMANDS = {"region": cmd_region, "witness": cmd_witness, "verify": cmd_verify,
            "fair": cmd_fair, "simulate": cmd_simulate}


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _write(out_dir: Path, files: dict, manifest: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        with open(out_dir / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    manifest = dict(manifest, outputs=sorted(files))
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _replay(args):
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            recorded = json.load(fh)
        replay = argparse.Namespace(**recorded["parameters"])
        values = recorded["config"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"unreadable manifest {args.manifest}: {exc}") from None
    if replay.command not in COMMANDS:
        raise UsageError(f"manifest names unknown command {replay.command!r}")
    replay.threads, replay.out_dir = args.threads, args.out_dir
    return replay, values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.manifest:
            args, values = _replay(args)
        else:
            if args.command is None:
                parser.print_usage(sys.stderr)
                return EXIT_USAGE
            if args.config is None:
                raise UsageError("--config is required")
            values = load_config(args.config)
        files, lines = COMMANDS[args.command](args, values)
        status = EXIT_OK
    except (UsageError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, RootFindingError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        files, lines = getattr(exc, "outputs", {}), []
        status = EXIT_NUMERIC
    out_dir = Path(args.out_dir or os.environ.get("RATEREGION_OUT") or "out")
    manifest = {"command": args.command, "parameters": _echo(args), "config": values,
                "seed": args.seed, "version": __version__}
    if files:
        _write(out_dir, files, manifest)
    for line in lines:
        print(line)
    return status


if __name__ == "__main__":
    sys.exit(main())
