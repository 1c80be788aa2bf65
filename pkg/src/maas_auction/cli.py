"""maas-auction command line: gen, simulate, oracle, ratio, verify, compare."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis
from .demand import DemandConfig, generate
from .horizon import HorizonConfig, run_rha, run_summary
from .market import DomainError, Scenario, dump_scenario, load_scenario
from .offline import InternalError, build_columns, solve_offline_ip, solve_offline_lp
from .pricing import PriceKind, PriceParams, unit_price

OUT_ENV = "MAAS_AUCTION_OUT"
SOLVER_NAMES = {"online-alg": "online_algorithm", "online-milp": "online_milp", "offline-milp": "offline_milp"}
CONFIG_KEYS = ("mechanism", "solver", "step", "window", "price_function", "capacity", "horizon", "seed")
SUITES = ("identity", "feasibility", "ic", "table2", "oracle", "pricing")


class UsageError(Exception):
    pass


def _clean(obj):
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(text)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "maas_out")


# ---------------------------------------------------------------- argument plumbing

def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with any of: " + ", ".join(CONFIG_KEYS))
    p.add_argument("--scenario", help="scenario JSON to load instead of generating one")
    p.add_argument("--mechanism", choices=("payg", "paap"))
    p.add_argument("--capacity", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./maas_out)")


def _run_args(p: argparse.ArgumentParser, price_default: str = "exponential") -> None:
    p.add_argument("--price", choices=[k.value for k in PriceKind],
                   help=f"price function (default {price_default})")
    p.add_argument("--solver", choices=tuple(SOLVER_NAMES))
    p.add_argument("--step", type=int)
    p.add_argument("--window", type=int)
    p.set_defaults(price_default=price_default)


def _merge_config(args) -> None:
    """Config file values fill whatever the flags left unset."""
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}")
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key, val in cfg.items():
        attr = "price" if key == "price_function" else key
        if getattr(args, attr, None) is None:
            setattr(args, attr, val)


def _scenario(args) -> Scenario:
    if args.scenario:
        sc = load_scenario(args.scenario)
        if args.mechanism and args.mechanism != sc.mechanism:
            raise UsageError("--mechanism does not match the scenario")
        if args.capacity is not None:
            sc.capacity = float(args.capacity)
        return sc
    mech = args.mechanism or "payg"
    kw = {}
    if args.horizon is not None:
        kw["horizon"] = args.horizon
    if args.capacity is not None:
        kw["capacity"] = args.capacity
    cfg = DemandConfig.payg(**kw) if mech == "payg" else DemandConfig.paap(**kw)
    return generate(cfg, args.seed if args.seed is not None else 0)


def _horizon_config(args, scenario: Scenario) -> HorizonConfig:
    step = args.step or 1
    window = args.window or 1
    solver = args.solver
    if solver is None:
        solver = "online-alg" if step == 1 else "offline-milp"
    if solver not in SOLVER_NAMES:
        raise UsageError(f"unknown solver {solver!r}")
    price = args.price or args.price_default
    return HorizonConfig(step=step, window=window, mechanism=scenario.mechanism,
                         solver=SOLVER_NAMES[solver], price_kind=PriceKind(price))


# ---------------------------------------------------------------- outputs

def series_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slot", "welfare", "price", "availability", "acceptance"])
    cols = [summary["welfare_series"], summary["price_series"], summary["availability_series"],
            summary["acceptance_series"]]
    for t in range(summary["horizon"]):
        w.writerow([t] + ["" if c[t] is None else repr(float(c[t])) for c in cols])
    return buf.getvalue()


def write_run(trace, seed, out: Path, figures: bool = False) -> dict:
    summary = run_summary(trace, seed)
    _write(out / "summary.json", _dumps(summary) + "\n")
    _write(out / "trace.jsonl", "".join(json.dumps(_clean(e), sort_keys=True) + "\n" for e in trace.events()))
    _write(out / "series.csv", series_csv(summary))
    _write(out / "timing.json", _dumps({"runtime_seconds": trace.runtime}) + "\n")
    if figures:
        from .plotting import plot_summary
        plot_summary(summary, out / "figures")
    return summary


# ---------------------------------------------------------------- subcommands

def cmd_gen(args) -> int:
    sc = _scenario(args)
    out = _out_dir(args)
    path = Path(args.file) if args.file else out / "scenario.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_scenario(sc, path)
    print(_dumps({"scenario": str(path), "users": len(sc.users), "horizon": sc.horizon,
                  "capacity": sc.capacity, "mechanism": sc.mechanism}))
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    cfg = _horizon_config(args, sc)
    trace = run_rha(cfg, sc)
    summary = write_run(trace, sc.meta.get("seed"), _out_dir(args), args.figures)
    print(_dumps(summary))
    return 0


def cmd_oracle(args) -> int:
    sc = _scenario(args)
    cols = build_columns(sc.users, sc.catalog, sc.horizon, sc.mechanism, slot_minutes=sc.slot_minutes)
    caps = np.full(sc.horizon, sc.capacity)
    relax = args.relax or sc.mechanism == "paap"
    sol = solve_offline_lp(cols, caps) if relax else solve_offline_ip(cols, caps, args.node_limit)
    d = sol.to_dict()
    d["relaxation"] = relax
    _write(_out_dir(args) / "oracle.json", _dumps(d) + "\n")
    print(_dumps(d))
    return 0


def cmd_ratio(args) -> int:
    sc = _scenario(args)
    price = PriceKind(args.price or args.price_default)
    trace = run_rha(HorizonConfig(mechanism=sc.mechanism, price_kind=price), sc)
    off = analysis.offline_optimum(sc)
    rep = analysis.ratio_report(trace, sc.mechanism, off.objective)
    d = rep.to_dict()
    d["offline_proven_optimal"] = off.proven_optimal
    _write(_out_dir(args) / "ratio.json", _dumps(d) + "\n")
    print(_dumps(d))
    return 0


def _suite_identity(trials, seed):
    rep = {m: analysis.audit_slots(trials, seed, m).to_dict() for m in ("payg", "paap")}
    ok = all(r["identity_residual"] <= 1e-9 for r in rep.values())
    return ok, rep


def _suite_feasibility(trials, seed):
    rep = {m: analysis.audit_slots(trials, seed + 1, m, max_users=20).to_dict() for m in ("payg", "paap")}
    ok = all(r["capacity_residual"] <= 1e-9 and r["dual_residual"] <= 1e-9 for r in rep.values())
    return ok, rep


def _suite_ic(trials, seed):
    payg = analysis.ic_trials_payg(trials, seed)
    paap = analysis.ic_trials_paap(max(1, trials // 10), seed)
    table = analysis.table2_audit()
    ok = payg.ok and paap.ok and all(r.matches for r in table)
    return ok, {"payg": payg.to_dict(), "paap": paap.to_dict(),
                "table2": [r.matches for r in table]}


def _suite_table2(trials, seed):
    rows = analysis.table2_audit()
    return all(r.matches for r in rows), {"cases": [r.case for r in rows], "matches": [r.matches for r in rows]}


def _suite_oracle(trials, seed):
    rng = np.random.default_rng(seed)
    mismatches, worst_gap = 0, 0.0
    for _ in range(trials):
        sc = analysis.random_slot(rng, "payg", tight=True)
        cols = build_columns(sc.users, sc.catalog, sc.horizon, "payg")
        caps = np.full(sc.horizon, sc.capacity)
        a = solve_offline_ip(cols, caps, backend="highs")
        b = solve_offline_ip(cols, caps, backend="simplex")
        if abs(a.objective - b.objective) > 1e-7 * max(1.0, abs(a.objective)):
            mismatches += 1
        lp = solve_offline_lp(cols, caps)
        worst_gap = max(worst_gap, lp.duality_gap or 0.0)
    return mismatches == 0 and worst_gap <= 1e-7, {"backend_mismatches": mismatches, "worst_duality_gap": worst_gap}


def _suite_pricing(trials, seed):
    bad = 0
    grid = np.linspace(0.0, 100.0, 1000)
    for kind in PriceKind:
        alpha = math.e if kind is PriceKind.EXPONENTIAL else None
        params = PriceParams(100.0, 2.0, 10.0, kind, alpha)
        ps = [unit_price(z, params) for z in grid]
        bad += int(any(b < a for a, b in zip(ps, ps[1:])))
        if kind is not PriceKind.QUADRATIC:
            bad += int(min(ps) < 2.0 - 1e-12 or max(ps) > 12.0 + 1e-12)
    return bad == 0, {"violations": bad}


def cmd_verify(args) -> int:
    suites = SUITES if args.suite == "all" else (args.suite,)
    report = {}
    ok_all = True
    for name in suites:
        ok, detail = globals()[f"_suite_{name}"](args.trials, args.seed)
        report[name] = {"ok": ok, "detail": detail}
        ok_all &= ok
        print(f"{name}: {'PASS' if ok else 'FAIL'}", file=sys.stderr)
    _write(_out_dir(args) / "verify.json", _dumps(report) + "\n")
    print(_dumps(report))
    return 0 if ok_all else 1


def compare_configs(horizon: int, mechanism: str, price: PriceKind, step: int = 10, window: int | None = None):
    step = min(step, horizon)
    window = step if window is None else window
    return [
        ("SHA offline", HorizonConfig.sha(horizon, mechanism, price_kind=price)),
        (f"RHA offline step={step}", HorizonConfig(step=step, window=window, mechanism=mechanism,
                                                   solver="offline_milp", price_kind=price)),
        ("RHA online MILP", HorizonConfig(mechanism=mechanism, solver="online_milp", price_kind=price)),
        ("RHA online algorithm", HorizonConfig(mechanism=mechanism, price_kind=price)),
    ]


def cmd_compare(args) -> int:
    sc = _scenario(args)
    price = PriceKind(args.price or args.price_default)
    rows = []
    for label, cfg in compare_configs(sc.horizon, sc.mechanism, price, args.step or 10, args.window):
        t0 = time.perf_counter()
        trace = run_rha(cfg, sc)
        rows.append({"configuration": label, "welfare": trace.welfare,
                     "acceptance_ratio": trace.acceptance_ratio(),
                     "runtime_seconds": time.perf_counter() - t0})
    welfare = [r["welfare"] for r in rows]
    ordered = all(a >= b - 1e-7 * max(1.0, abs(a)) for a, b in zip(welfare, welfare[1:]))
    out = _out_dir(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["configuration", "welfare", "acceptance_ratio"])
    for r in rows:
        acc = r["acceptance_ratio"]
        w.writerow([r["configuration"], repr(r["welfare"]), "" if acc is None else repr(acc)])
    _write(out / "compare.csv", buf.getvalue())
    _write(out / "compare.json", _dumps({"rows": [{k: v for k, v in r.items() if k != "runtime_seconds"}
                                                 for r in rows], "ordered": ordered}) + "\n")
    _write(out / "timing.json", _dumps({r["configuration"]: r["runtime_seconds"] for r in rows}) + "\n")
    if args.figures:
        from .plotting import plot_compare
        plot_compare(rows, out / "figures")
    sys.stdout.write(buf.getvalue())
    print(f"ordering SHA >= RHA-offline >= online-MILP >= online-algorithm: {'yes' if ordered else 'no'}")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maas-auction", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a scenario JSON")
    _scenario_args(p)
    p.add_argument("--file", help="scenario path (default OUT/scenario.json)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="run one rolling-horizon configuration")
    _scenario_args(p)
    _run_args(p)
    p.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="solve the offline problem")
    _scenario_args(p)
    p.add_argument("--relax", action="store_true", help="solve the LP relaxation")
    p.add_argument("--node-limit", type=int, default=1_000_000)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("ratio", help="competitive ratio and welfare ratio of the online algorithm")
    _scenario_args(p)
    _run_args(p)
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("verify", help="run invariant and audit suites")
    p.add_argument("--suite", choices=("all",) + SUITES, default="all")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="run the four rolling-horizon configurations")
    _scenario_args(p)
    # linear by default: the windowed offline solves price linearly, so this keeps the comparison like for like
    _run_args(p, price_default="linear")
    p.add_argument("--figures", action="store_true", help="also render a PNG bar chart (needs matplotlib)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        return args.func(args)
    except (UsageError, DomainError) as exc:
        parser.print_usage(sys.stderr)
        print(f"maas-auction: error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"maas-auction: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
