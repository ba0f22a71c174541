"""Command-line front end: curve, lp, simulate, figure and bound data.

Exit codes: 0 success, 2 usage, 3 verification failure, 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import analytic, bell_lp, quantum, sim
from .model import GameSpec
from .simplex import LpError

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_SOLVER = 0, 2, 3, 4
FIG1_N = (1, 2, 5, 20)
SQRT8 = 2.0 * math.sqrt(2.0)

CURVE_HEADER = ("N", "P", "S", "lprime", "kind")
LP_HEADER = ("game", "N", "M1", "S", "status", "series")


class UsageError(ValueError):
    pass


class VerificationFailure(RuntimeError):
    pass


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{float(value):.12g}"
    return str(value)


def parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, count = text.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError:
        raise UsageError(f"grid must be start:stop:count, got {text!r}") from None
    if count < 2 or not start < stop:
        raise UsageError(f"grid needs count >= 2 and start < stop, got {text!r}")
    return np.linspace(start, stop, count)


def _json_value(value):
    if isinstance(value, (float, np.floating)):
        return fmt(value) if math.isinf(value) else float(fmt(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def render(rows: list[dict], header, fmt_kind: str) -> str:
    if fmt_kind == "json":
        return json.dumps([{h: _json_value(r.get(h)) for h in header} for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(r.get(h)) for h in header])
    return buf.getvalue()


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


# --- data builders (shared with `figure`) ---------------------------------------------

def classical_rows(N: int, grid: np.ndarray) -> list[dict]:
    lo, hi = grid.min(), grid.max()
    rows = [{"N": N, "P": float(P), "S": analytic.max_score(N, float(P)), "lprime": None,
             "kind": "classical"} for P in grid]
    for pt in analytic.breakpoints(N).points:
        if lo <= pt.md <= hi:
            rows.append({"N": N, "P": pt.md, "S": pt.S, "lprime": pt.lprime, "kind": "classical"})
    if lo <= analytic.crossing_P(N, SQRT8) <= hi:
        P = analytic.crossing_P(N, SQRT8)
        rows.append({"N": N, "P": P, "S": analytic.max_score(N, P), "lprime": None, "kind": "classical"})
    rows.sort(key=lambda r: (r["P"], r["S"]))
    return rows


def quantum_rows(classical: list[dict]) -> list[dict]:
    return [dict(r, S=quantum.sq_from_sc(r["S"]), lprime=None, kind="quantum") for r in classical]


def asymptotic_rows(count: int, with_quantum: bool) -> list[dict]:
    ls = list(np.linspace(0.75, 1.0, count)) + [(SQRT8 + 4.0) / 8.0]
    pts = sorted((analytic.asymptotic_parametric(float(l)) for l in ls), key=lambda p: p.md)
    rows = [{"N": math.inf, "P": p.md, "S": p.S, "lprime": None, "kind": "asymptotic"} for p in pts]
    if with_quantum:
        rows += [dict(r, S=quantum.sq_from_sc(r["S"]), kind="quantum") for r in rows]
    return rows


def curve_rows(Ns, grid, with_quantum: bool, with_asymptote: bool, asymptote_points: int) -> list[dict]:
    rows, qrows = [], []
    for N in Ns:
        c = classical_rows(N, grid)
        rows += c
        if with_quantum:
            qrows += quantum_rows(c)
    rows += qrows
    if with_asymptote:
        rows += asymptotic_rows(asymptote_points, with_quantum)
    return rows


def lp_rows(game: str, N: int, grid, compare: bool) -> list[dict]:
    g = GameSpec.from_name(game)
    if g.m == 2:
        pts = bell_lp.solve_chsh_m1_curve(N, grid)
    else:
        pts = bell_lp.solve_imm22_curve(g.m, N, grid)
    rows = [{"game": game, "N": N, "M1": p.md, "S": p.S, "status": p.status, "series": "correlated"}
            for p in pts]
    bad = [p for p in pts if p.status != "optimal"]
    if bad:
        raise LpError(f"{game} N={N}: solver status {bad[0].status} at M1={bad[0].md:g}")
    if compare:
        from ._util import parallel_map

        rep = parallel_map(lambda M1: bell_lp.repeated_one_shot(g, N, float(M1)), grid)
        rows += [{"game": game, "N": N, "M1": p.md, "S": p.S, "status": p.status, "series": "repeated"}
                 for p in rep]
    return rows


# --- commands -----------------------------------------------------------------------

def cmd_curve(args) -> int:
    if args.game != "chsh":
        raise UsageError("the P-measure curve is defined for chsh only")
    grid = parse_grid(args.grid) if args.grid else np.linspace(0.25, 1.0 / 3.0, 101)
    if grid.min() < 0.25 - 1e-12 or grid.max() > 1.0:
        raise UsageError("P grid must lie in [1/4, 1]")
    rows = curve_rows(args.N, grid, args.quantum, args.asymptote, args.asymptote_points)
    emit(render(rows, CURVE_HEADER, args.format), args.out)
    return EXIT_OK


def _m1_grid(args, game: str, N: int) -> np.ndarray:
    top = bell_lp.m_max(game, N)
    if args.m1 is not None:
        values = [top if v == "max" else float(v) for v in args.m1]
        grid = np.array(values, dtype=float)
    elif args.grid:
        grid = parse_grid(args.grid.replace("max", repr(top)))
    else:
        grid = np.linspace(0.0, top, args.points)
    if (grid < 0).any():
        raise UsageError("M1 must be non-negative")
    return grid


def cmd_lp(args) -> int:
    grid = _m1_grid(args, args.game, args.N)
    rows = lp_rows(args.game, args.N, grid, args.compare)
    emit(render(rows, LP_HEADER, args.format), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    profile = analytic.optimal_profile(args.N, args.P)
    report = sim.estimate(profile, trials=args.trials, seed=args.seed)
    if args.out:
        write_atomic(args.out, report.to_json() + "\n")
    if args.format == "json" and not args.out:
        sys.stdout.write(report.to_json() + "\n")
    else:
        print(report.summary())
    failed = report.failed()
    if failed:
        raise VerificationFailure("failed statistic(s): " + ", ".join(failed))
    return EXIT_OK


def figure_data(which: str, points: int = 201) -> tuple[str, str]:
    """(filename, csv text) for one figure."""
    if which == "fig1":
        grid = np.linspace(0.25, 1.0 / 3.0, points)
        rows = curve_rows(FIG1_N, grid, True, True, points)
        return "fig1.csv", render(rows, CURVE_HEADER, "csv")
    if which == "fig2":
        N, game = 100, "chsh"
    elif which == "fig3":
        N, game = 10, "i3322"
    else:
        raise UsageError(f"unknown figure {which!r}")
    n = max(2, points // 4)
    grid = np.linspace(0.0, bell_lp.m_max(game, N), n)
    return f"{which}.csv", render(lp_rows(game, N, grid, True), LP_HEADER, "csv")


def cmd_figure(args) -> int:
    names = ("fig1", "fig2", "fig3") if args.which == "all" else (args.which,)
    for name in names:
        fname, text = figure_data(name, args.points)
        write_atomic(Path(args.out) / fname, text)
        print(Path(args.out) / fname)
    return EXIT_OK


def cmd_bound(args) -> int:
    rows = []
    for S in args.S or []:
        rows.append({"S": S, "p_win": analytic.win_probability(S), "P": analytic.asymptotic_bound_P(S)})
    for pw in args.pwin or []:
        rows.append({"S": 8.0 * pw - 4.0, "p_win": pw, "P": analytic.bound_pwin(pw)})
    for P in args.P or []:
        S = analytic.asymptotic_score(P)
        rows.append({"S": S, "p_win": analytic.win_probability(S), "P": P})
    if not rows:
        raise UsageError("give at least one of --S, --pwin, --P")
    emit(render(rows, ("S", "p_win", "P"), args.format), args.out)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file whose keys mirror the command's flags")
    p.add_argument("--out", "-o", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellmd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curve", help="optimal CHSH score against per-run MD P")
    _common(p)
    p.add_argument("--game", default="chsh", choices=("chsh",))
    p.add_argument("--N", type=int, nargs="+", default=[1])
    p.add_argument("--measure", default="P", choices=("P",))
    p.add_argument("--grid", help="P grid start:stop:count")
    p.add_argument("--quantum", action="store_true", help="add the quantum ceiling series")
    p.add_argument("--asymptote", action="store_true", help="add the N -> infinity limit curve")
    p.add_argument("--asymptote-points", type=int, default=101)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("lp", help="correlated attack under the L1 measure by linear programming")
    _common(p)
    p.add_argument("--game", default="chsh", choices=("chsh", "i3322"))
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--m1", nargs="+", help="M1 budget(s); 'max' means M_max(N)")
    p.add_argument("--grid", help="M1 grid start:stop:count ('max' allowed as stop)")
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--no-compare", dest="compare", action="store_false",
                   help="skip the N-fold repeated single-shot series")
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("simulate", help="Monte-Carlo check of the optimal CHSH profile")
    _common(p)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--P", type=float, default=1.0 / 3.0)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("figure", help="write the data series behind a figure")
    p.add_argument("which", choices=("fig1", "fig2", "fig3", "all"))
    p.add_argument("--config")
    p.add_argument("--out", "-o", default=".", help="output directory")
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("bound", help="large-N lower bound on P for given S or p_win")
    _common(p)
    p.add_argument("--S", type=float, nargs="+")
    p.add_argument("--pwin", type=float, nargs="+")
    p.add_argument("--P", type=float, nargs="+", help="invert: largest S reachable at P")
    p.set_defaults(func=cmd_bound)

    parser.subcommands = sub.choices
    return parser


def apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    sp = parser.subcommands[args.command]
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest in ("command", "config", "func") or not hasattr(args, dest):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if getattr(args, dest) == sp.get_default(dest):
            setattr(args, dest, value)
    if isinstance(getattr(args, "N", None), int) and args.command == "curve":
        args.N = [args.N]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(parser, args)
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (LpError, bell_lp.SolverFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        parser.error(str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
