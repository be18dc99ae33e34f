"""Command-line interface: ``acuc convert|solve|check|bound|gap|report``.

Exit status is 0 on success, 1 when a solve fails or a schedule is
infeasible, and 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from .bounds import BoundError, gap_percent, lower_bound
from .case_io import (CaseParseError, ValidationError, load_case, read_instance,
                      read_solution, write_instance, write_solution)
from .driver import DEFAULT_PRESET, PRESETS, RoundLog, RunOptions, check, run
from .instance_gen import InstanceGenerationError, generate

log = logging.getLogger("acuc")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MODE_ALIASES = {"socp": "edge-socp", "sdp": "full-sdp",
                "edge-socp": "edge-socp", "full-sdp": "full-sdp"}
RUN_FILE, CSV_FILE, SOLUTION_FILE, PLOT_FILE = ("run.json", "convergence.csv",
                                                "solution.json", "convergence.svg")


class UsageError(Exception):
    pass


def _mode(text: str) -> str:
    try:
        return MODE_ALIASES[text]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown mode {text!r} (socp or sdp)") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acuc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="parse a MATPOWER case and generate a UC instance")
    p.add_argument("case", help="path to a .m file or a bundled case name (case9 ... case300)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="run the sequential penalized relaxation")
    p.add_argument("instances", nargs="+")
    p.add_argument("--mu", type=float, help="penalty weight (default: preset for the case)")
    p.add_argument("--alpha", type=float, help="penalty shift (default: preset for the case)")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--tol-feas", type=float, default=1e-6)
    p.add_argument("--mode", type=_mode, default="edge-socp")
    p.add_argument("--backend", default="auto", choices=["auto", "clarabel", "scs", "cvxopt"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bound", type=_mode, help="also compute this lower bound and the gap")
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="instances solved in parallel")

    p = sub.add_parser("check", help="evaluate a schedule against every constraint")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument("--tol-feas", type=float, default=1e-6)

    p = sub.add_parser("bound", help="unpenalized relaxation lower bound")
    p.add_argument("instance")
    p.add_argument("--mode", type=_mode, default="full-sdp")

    p = sub.add_parser("gap", help="optimality gap of a schedule against a lower bound")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument("--mode", type=_mode, default="full-sdp")
    p.add_argument("--bound-value", type=float, help="use this bound instead of solving")

    p = sub.add_parser("report", help="summarize run directories (k_f, GAP%%, t(s))")
    p.add_argument("runs", nargs="+")
    return ap


def _options(args, name: str) -> RunOptions:
    mu, alpha = PRESETS.get(name, DEFAULT_PRESET)
    return RunOptions(mu=mu if args.mu is None else args.mu,
                      alpha=alpha if args.alpha is None else args.alpha,
                      eta=args.eta, rounds=args.rounds, tol_feas=args.tol_feas,
                      mode=args.mode, backend=args.backend)


def write_convergence(logs: list[RoundLog], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(RoundLog.CSV_HEADER + "\n")
        for lg in logs:
            fh.write(lg.csv_row() + "\n")


def read_convergence(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if ",".join(reader.fieldnames or []) != RoundLog.CSV_HEADER:
            raise ValidationError(f"{path}: unexpected convergence header")
        return list(reader)


def plot_convergence(logs: list[RoundLog], path: Path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([lg.round for lg in logs], [lg.objective_cost for lg in logs], marker="o", ms=3)
    ax.set_xlabel("round")
    ax.set_ylabel("cost ($)")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def solve_one(inst_path: str, out: str, args) -> int:
    inst = read_instance(inst_path)
    opt = _options(args, inst.name)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    res = run(inst, opt)
    write_convergence(res.logs, outdir / CSV_FILE)
    if res.best is not None:
        write_solution(res.best, outdir / SOLUTION_FILE)
    if not args.no_plot and res.logs:
        plot_convergence(res.logs, outdir / PLOT_FILE, inst.name)
    summary = {
        "instance": str(inst_path), "name": inst.name, "seed": inst.seed,
        "options": asdict(opt), "status": res.status, "message": res.message,
        "rounds": len(res.logs), "k_f": res.k_f, "seconds": res.seconds,
        "cost": res.best_report.cost if res.best_report else None,
        "feasible": bool(res.best_report and res.best_report.feasible),
        "max_violation": res.best_report.max_violation if res.best_report else None,
        "round": res.best.meta.get("round") if res.best is not None else None,
        "bound": None, "gap_percent": None,
    }
    if args.bound and summary["feasible"]:
        b = lower_bound(inst, args.bound, backend=args.backend)
        summary["bound"] = {"value": b.value, "mode": b.mode, "tag": b.tag}
        summary["gap_percent"] = gap_percent(summary["cost"], b.value)
    (outdir / RUN_FILE).write_text(json.dumps(summary, indent=1) + "\n")
    print(f"{inst.name}: {res.status}; k_f={res.k_f}; cost={summary['cost']}; "
          f"{len(res.logs)} rounds in {res.seconds:.1f} s -> {outdir}")
    if res.status != "ok":
        print(f"  {res.message}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_convert(args) -> int:
    if args.horizon < 1:
        raise UsageError("--horizon must be at least 1")
    net = load_case(args.case)
    inst = generate(net, args.seed, args.horizon)
    write_instance(inst, args.output)
    print(f"{net.name}: {net.n_bus} buses, {net.n_branch} lines, {net.n_gen} units, "
          f"T={inst.horizon}, seed {inst.seed} -> {args.output}")
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.rounds < 1 or args.jobs < 1:
        raise UsageError("--rounds and --jobs must be positive")
    for path in args.instances:
        if not Path(path).is_file():
            raise UsageError(f"no such instance file: {path}")
    if len(args.instances) == 1:
        return solve_one(args.instances[0], args.out, args)
    outs = [str(Path(args.out) / Path(p).stem) for p in args.instances]
    if args.jobs == 1:
        codes = [solve_one(p, o, args) for p, o in zip(args.instances, outs)]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(solve_one, args.instances, outs,
                                  [args] * len(outs)))
    return max(codes)


def cmd_check(args) -> int:
    inst = read_instance(args.instance)
    rep = check(inst, read_solution(args.solution), tol_feas=args.tol_feas)
    for k, v in rep.as_dict().items():
        print(f"{k:>15}: {v}")
    return EXIT_OK if rep.feasible else EXIT_FAIL


def cmd_bound(args) -> int:
    inst = read_instance(args.instance)
    b = lower_bound(inst, args.mode)
    print(f"{b.value!r} [{b.tag}; {b.status}; {b.seconds:.1f} s]")
    return EXIT_OK


def cmd_gap(args) -> int:
    inst = read_instance(args.instance)
    rep = check(inst, read_solution(args.solution))
    if args.bound_value is not None:
        bound, tag = args.bound_value, "given"
    else:
        b = lower_bound(inst, args.mode)
        bound, tag = b.value, b.tag
    print(f"{gap_percent(rep.cost, bound):.2f}")
    log.info("cost %r, bound %r (%s)", rep.cost, bound, tag)
    return EXIT_OK if rep.feasible else EXIT_FAIL


def report_rows(runs: list[str]) -> list[dict]:
    rows = []
    for d in runs:
        d = Path(d)
        summary = json.loads((d / RUN_FILE).read_text())
        logs = read_convergence(d / CSV_FILE)
        tol = summary["options"]["tol_feas"]
        k_f = next((int(r["round"]) for r in logs if float(r["max_violation"]) < tol), None)
        rows.append({
            "run": str(d), "name": summary["name"], "mu": summary["options"]["mu"],
            "alpha": summary["options"]["alpha"], "k_f": k_f,
            "gap": summary.get("gap_percent"),
            "bound": (summary.get("bound") or {}).get("tag"),
            "seconds": sum(float(r["wall_seconds"]) for r in logs),
        })
    return rows


def cmd_report(args) -> int:
    for d in args.runs:
        if not (Path(d) / RUN_FILE).is_file():
            raise UsageError(f"{d} is not a run directory (no {RUN_FILE})")
    rows = report_rows(args.runs)
    print(f"{'case':<10} {'mu':>6} {'alpha':>6} {'k_f':>4} {'GAP(%)':>7} {'t(s)':>9}  run")
    for r in rows:
        gap = "-" if r["gap"] is None else f"{r['gap']:.2f}"
        kf = "-" if r["k_f"] is None else str(r["k_f"])
        note = f"  [{r['bound']}]" if r["bound"] and "weaker" in r["bound"] else ""
        print(f"{r['name']:<10} {r['mu']:>6g} {r['alpha']:>6g} {kf:>4} {gap:>7} "
              f"{r['seconds']:>9.1f}  {r['run']}{note}")
    return EXIT_OK


COMMANDS = {"convert": cmd_convert, "solve": cmd_solve, "check": cmd_check,
            "bound": cmd_bound, "gap": cmd_gap, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FileNotFoundError, CaseParseError, ValidationError) as exc:
        print(f"acuc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BoundError, InstanceGenerationError) as exc:
        print(f"acuc: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
