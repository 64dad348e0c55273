"""Command-line front end: run, sweep, compare-orders, self-test.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage error.  Result files
embed the fully resolved configuration so a run can be reproduced from its
output alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__, ancilla, charts, code713, experiment, ftgates, sim, syndrome
from .experiment import Environment, RunConfig, RunResult
from .noise import ErrorProbabilities, TruncationConfig

CSV_COLUMNS = [
    "grid_index", "px", "py", "pz", "method", "order", "fidelity",
    "log_infidelity", "accepted_mass", "residual_bound", "fault_sites", "seed",
]


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _result_row(r: RunResult) -> dict:
    p = r.config.env.probs
    return {
        "grid_index": r.config.env.grid_index,
        "px": p.px,
        "py": p.py,
        "pz": p.pz,
        "method": r.config.method,
        "order": r.config.order,
        "fidelity": r.fidelity,
        "log_infidelity": r.log_infidelity,
        "accepted_mass": r.accepted_mass,
        "residual_bound": r.residual_bound,
        "fault_sites": r.fault_site_count,
        "seed": r.config.seed,
    }


def _resolved_config(args, results: list[RunResult]) -> dict:
    cfg = {
        "command": args.command,
        "sequence": args.sequence,
        "method": getattr(args, "method", None),
        "order": getattr(args, "order", None),
        "pz": getattr(args, "pz", None),
        "trunc_weight": args.trunc_weight,
        "mode": args.mode,
        "samples": args.samples,
        "seed": args.seed,
        "theta_noiseless": args.theta_noiseless,
        "version": __version__,
    }
    if results:
        cfg["conventions"] = results[0].metadata.get("conventions", {})
    return cfg


def emit_results(results: list[RunResult], fmt: str, path: str, config: dict) -> None:
    """Write the result table as CSV (with # config header lines) or JSON."""
    rows = [_result_row(r) for r in results]
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# steane713 {__version__}\n")
            fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"config": config, "results": rows}, fh, indent=2,
                      sort_keys=True)
            fh.write("\n")


def read_results(path: str) -> list[dict]:
    """Parse a CSV emitted by :func:`emit_results` back into typed rows."""
    out = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        for rec in reader:
            row = dict(zip(header, rec))
            for key in ("px", "py", "pz", "fidelity", "log_infidelity",
                        "accepted_mass", "residual_bound"):
                row[key] = float(row[key])
            for key in ("grid_index", "fault_sites", "seed"):
                row[key] = int(row[key])
            out.append(row)
    return out


def emit_svg(results: list[RunResult], path: str) -> None:
    if not results:
        raise charts.ChartError("cannot chart an empty result table")
    best = experiment.best_orders(results)
    charts.write_sweep_chart(results, best, path)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sequence", default=ftgates.DEFAULT_SEQUENCE,
                   help="composite gate letters (A=HST, B=HT); default ABBB")
    p.add_argument("--trunc-weight", type=int, default=2,
                   help="enumerate error patterns up to this many faults")
    p.add_argument("--mode", choices=("enumerate", "mc"), default="enumerate")
    p.add_argument("--samples", type=int, default=100_000,
                   help="Monte Carlo sample count (mode=mc)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta-noiseless", action="store_true",
                   help="prepare the T-gate resource state without noise")
    p.add_argument("--out", default=None, help="result file path")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steane713",
        description=(
            "Fault-tolerant [[7,1,3]] simulator comparing syndrome-measurement "
            "orders and ancilla methods by postselected final-state fidelity."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="one (order, method, environment) run")
    p_run.add_argument("--order", required=True, type=str.upper,
                       choices=syndrome.SYNDROME_ORDERS)
    p_run.add_argument("--method", default="shor", choices=syndrome.SMETHODS)
    p_run.add_argument("--px", type=float, default=1e-10)
    p_run.add_argument("--py", type=float, default=1e-10)
    p_run.add_argument("--pz", type=float, default=experiment.DEFAULT_PZ)
    _add_common(p_run)

    p_sweep = subs.add_parser("sweep", help="full 16-environment grid sweep")
    p_sweep.add_argument("--method", default=None, choices=syndrome.SMETHODS,
                         help="restrict to one ancilla method")
    p_sweep.add_argument("--orders", default=None,
                         help="comma-separated subset of the four orders")
    p_sweep.add_argument("--pz", type=float, default=experiment.DEFAULT_PZ,
                         help="sigma-z probability shared by all grid cells")
    p_sweep.add_argument("--svg", default=None, help="bar-chart output path")
    _add_common(p_sweep)

    p_cmp = subs.add_parser("compare-orders",
                            help="rank the four orders in one environment")
    p_cmp.add_argument("--method", default="shor", choices=syndrome.SMETHODS)
    p_cmp.add_argument("--px", type=float, default=1e-10)
    p_cmp.add_argument("--py", type=float, default=1e-10)
    p_cmp.add_argument("--pz", type=float, default=experiment.DEFAULT_PZ)
    _add_common(p_cmp)

    p_self = subs.add_parser("self-test",
                             help="run the built-in correctness oracles")
    p_self.add_argument("--verbose", "-v", action="store_true")
    return parser


def _truncation(args) -> TruncationConfig:
    return TruncationConfig(
        mode="enumerate" if args.mode == "enumerate" else "montecarlo",
        max_weight=args.trunc_weight,
        samples=args.samples,
        seed=args.seed,
    )


def _print_rows(results: list[RunResult]) -> None:
    hdr = (f"{'env':>4} {'method':>7} {'order':>6} {'fidelity':>20} "
           f"{'log-infid':>10} {'accepted':>11} {'residual':>10}")
    print(hdr)
    for r in results:
        print(
            f"{r.config.env.grid_index:>4} {r.config.method:>7} "
            f"{r.config.order:>6} {r.fidelity:>20.15f} "
            f"{r.log_infidelity:>10.4f} {r.accepted_mass:>11.4e} "
            f"{r.residual_bound:>10.3e}"
        )


def cmd_run(args) -> int:
    env = experiment.environment_for(args.px, args.py, args.pz)
    config = RunConfig(
        sequence=args.sequence, order=args.order, method=args.method,
        env=env, truncation=_truncation(args), seed=args.seed,
        theta_noisy=not args.theta_noiseless,
    )
    result = experiment.run(config)
    _print_rows([result])
    if result.metadata.get("mc_standard_error") is not None:
        print(f"mc standard error: {result.metadata['mc_standard_error']:.3e}")
    if args.out:
        emit_results([result], args.format, args.out,
                     _resolved_config(args, [result]))
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    methods = [args.method] if args.method else list(syndrome.SMETHODS)
    orders = None
    if args.orders:
        orders = [o.strip().upper() for o in args.orders.split(",")]
        for o in orders:
            if o not in syndrome.SYNDROME_ORDERS:
                print(
                    f"error: unknown order {o!r}; valid orders: "
                    + ", ".join(syndrome.SYNDROME_ORDERS),
                    file=sys.stderr,
                )
                return 2
    if args.mode == "mc":
        print("error: sweep supports enumerate mode only", file=sys.stderr)
        return 2

    def progress(method, order):
        print(f"  finished {method}/{order}", flush=True)

    results = experiment.sweep(
        orders=orders, methods=methods, sequence=args.sequence,
        truncation=_truncation(args), pz=args.pz, seed=args.seed,
        theta_noisy=not args.theta_noiseless, progress=progress,
    )
    _print_rows(results)
    if args.out:
        emit_results(results, args.format, args.out,
                     _resolved_config(args, results))
        print(f"wrote {args.out}")
    if args.svg:
        emit_svg(results, args.svg)
        print(f"wrote {args.svg}")
    return 0


def cmd_compare_orders(args) -> int:
    if args.mode == "mc":
        print("error: compare-orders supports enumerate mode only",
              file=sys.stderr)
        return 2
    env = experiment.environment_for(args.px, args.py, args.pz)
    results = experiment.compare_orders(
        env, args.method, sequence=args.sequence, truncation=_truncation(args)
    )
    _print_rows(results)
    print(f"best order: {results[0].config.order}")
    if args.out:
        emit_results(results, args.format, args.out,
                     _resolved_config(args, results))
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Self-test
# ---------------------------------------------------------------------------

def _selftest_checks():
    zero = code713.logical_state("0")
    plus = code713.logical_state("+")

    def stabilizers_commute():
        for s1 in code713.STABILIZER_SUPPORTS:
            for s2 in code713.STABILIZER_SUPPORTS:
                if len(set(s1) & set(s2)) % 2:
                    return False
        return True

    def encoder_eigenstates():
        for name in ("0", "1", "+", "theta"):
            state = code713.logical_state(name)
            for kind, supports in (
                ("X", code713.CODE.x_stabilizer_supports),
                ("Z", code713.CODE.z_stabilizer_supports),
            ):
                for support in supports:
                    work = state
                    for q in support:
                        work = sim.apply_gate(work, kind, q)
                    if sim.overlap_sq(work, state) < 1 - 1e-10:
                        return False
        return True

    def decode_bijection():
        seen = set(code713.decode_table("bitflip").values())
        return len(seen) == 8 and None in seen

    def correction_sweep():
        for method in syndrome.SMETHODS:
            for pauli in ("X", "Y", "Z"):
                for q in range(7):
                    bad = sim.apply_gate(zero, pauli, q)
                    branches = syndrome.qec_round(
                        bad, "ZXXZ", method, postselect=False, recover=True
                    )
                    mass = sum(p for p, _, _ in branches)
                    fid = sum(
                        p * sim.overlap_sq(st, zero) for p, st, _ in branches
                    ) / mass
                    if abs(fid - 1) > 1e-10:
                        return False
        return True

    def verification_sweeps():
        for kind in ("shor", "steane_zero", "steane_plus"):
            anc = ancilla.ancilla_program(kind)
            noiseless = ancilla.prepare_branches(kind)
            if abs(sum(b.mass() for b in noiseless) - 1) > 1e-10:
                return False
        report = ancilla.weight1_verification_report("shor")
        for entry in report:
            if entry["pauli"] == "X" and not entry["detected"]:
                # accepted X faults must not corrupt the kept cat state by
                # more than a single-qubit twist (they stay correctable)
                if entry.get("ideal_overlap", 1) < 0.0:
                    return False
        return True

    def zero_noise_round():
        for method in syndrome.SMETHODS:
            for order in syndrome.SYNDROME_ORDERS:
                branches = syndrome.qec_round(plus, order, method)
                mass = sum(p for p, _, _ in branches)
                fid = sum(p * sim.overlap_sq(st, plus) for p, st, _ in branches)
                if abs(mass - 1) > 1e-9 or abs(fid - 1) > 1e-9:
                    return False
        return True

    return [
        ("stabilizer generators commute", stabilizers_commute),
        ("encoder outputs are +1 eigenstates", encoder_eigenstates),
        ("decode table is a bijection", decode_bijection),
        ("21 single-qubit errors corrected (both methods)", correction_sweep),
        ("ancilla verification accepts noiseless preparations", verification_sweeps),
        ("zero-noise rounds preserve codewords (all orders)", zero_noise_round),
    ]


def cmd_self_test(args) -> int:
    failures = 0
    for label, check in _selftest_checks():
        try:
            ok = check()
        except Exception as exc:  # pragma: no cover - defensive
            ok = False
            if args.verbose:
                print(f"  exception: {exc}")
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "sweep": cmd_sweep,
        "compare-orders": cmd_compare_orders,
        "self-test": cmd_self_test,
    }
    try:
        return handlers[args.command](args)
    except (OSError, charts.ChartError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
