"""Command-line interface: ``storagenet <command> <scenario> [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .exceptions import MarkovChainError
from .network import kvl_residual
from .planner import markov_bound
from .scenario import load_scenario, scenario_hash
from .simulation import average_cost, compare, fit_controller, run_seeds
from .stochastic import MarkovDisturbance, return_time_moments

TRACE_HEADER = ("t", "bus", "s", "u", "cost")
SWEEP_HEADER = ("s_max", "j_no_storage", "j_greedy", "j_lyapunov", "lower_bound",
                "upper_pct_savings")


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out_dir, files):
    """Write every ``{name: text}`` entry; all content is rendered before the first write."""
    for name in sorted(files):
        atomic_write(os.path.join(out_dir, name), files[name])


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def _json(doc):
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _header(sc, command):
    return {"tool": "storagenet", "version": __version__, "command": command,
            "scenario": sc.name, "scenario_hash": scenario_hash(sc)}


def _plan_doc(params, storages):
    buses = []
    for v, (b, st) in enumerate(zip(params.buses, storages)):
        buses.append({"bus": v, "gamma": _num(b.gamma), "w": _num(b.w), "d_lo": _num(b.d_lo),
                      "d_hi": _num(b.d_hi), "ks_min": _num(b.ks_min), "ks_max": _num(b.ks_max),
                      "w_max": _num(b.w_max), "w_capped": bool(b.w_capped),
                      "m_u": _num(b.m_u), "m_s_weighted": _num(b.m_s_weighted),
                      "bound": _num(b.bound)})
    return {"buses": buses, "certified_bound": _num(params.certified_bound),
            "shared_weight": bool(params.shared_weight)}


def trace_csv(trace, edge_ids):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(TRACE_HEADER) + [f"flow:{e}" for e in edge_ids])
    for k in range(trace.horizon):
        flows = [repr(float(x)) for x in trace.f[k]]
        for v in range(trace.u.shape[1]):
            w.writerow([k + 1, v, repr(float(trace.levels[k, v])), repr(float(trace.u[k, v])),
                        repr(float(trace.cost[k, v]))] + flows)
    return buf.getvalue()


def sweep_csv(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for p in points:
        s = p.summary
        up = "n/a" if s.pct_savings_upper_bound is None else repr(float(s.pct_savings_upper_bound))
        w.writerow([repr(float(x)) for x in (p.s_max, s.j["no-storage"], s.j["greedy"],
                                             s.j["lyapunov"], s.lower_bound)] + [up])
    return buf.getvalue()


# -- commands -------------------------------------------------------------------

def cmd_validate(args, sc):
    net = sc.system.network
    print(f"ok: {sc.name or args.scenario}: {sc.system.n} buses, {net.m} edges, "
          f"horizon {sc.horizon}, sha256 {scenario_hash(sc)}")
    return 0


def cmd_plan(args, sc):
    ctrl = fit_controller(sc, "lyapunov")
    doc = {**_header(sc, "plan"), "plan": _plan_doc(ctrl.params_, sc.system.storages)}
    text = _json(doc)
    if args.out:
        write_outputs(args.out, {"plan.json": text})
    sys.stdout.write(text)
    return 0


def cmd_bound(args, sc):
    params = fit_controller(sc, "lyapunov").params_
    doc = {**_header(sc, "bound"), "iid_bound": _num(params.certified_bound)}
    if args.markov:
        if not isinstance(sc.disturbance, MarkovDisturbance):
            raise MarkovChainError("--markov needs a scenario with a markov disturbance")
        mean, second = return_time_moments(sc.disturbance.chain)
        per_bus = [markov_bound(st, b.gamma, b.w, (mean, second))
                   for st, b in zip(sc.system.storages, params.buses)]
        doc.update({"return_time_mean": mean, "return_time_second_moment": second,
                    "markov_bound_per_bus": [_num(x) for x in per_bus],
                    "markov_bound": _num(sum(per_bus))})
    text = _json(doc)
    if args.out:
        write_outputs(args.out, {"bound.json": text})
    sys.stdout.write(text)
    return 0


def cmd_simulate(args, sc):
    traces = run_seeds(sc, args.policy, args.seeds, args.workers)
    j, se = average_cost(traces)
    doc = {**_header(sc, "simulate"), "policy": args.policy,
           "seeds": [t.seed for t in traces], "horizon": sc.horizon, "warmup": sc.warmup,
           "average_cost": _num(j), "standard_error": _num(se),
           "per_seed_average_cost": [_num(t.measured_cost.mean()) if t.horizon > t.warmup
                                     else None for t in traces],
           "bound_violations": int(sum(int(t.bound_violations.sum()) for t in traces)),
           "threshold_violations": int(sum(int(t.threshold.sum()) for t in traces))}
    if args.policy == "lyapunov":
        params = fit_controller(sc, "lyapunov").params_
        doc["plan"] = _plan_doc(params, sc.system.storages)
        doc["lower_bound"] = _num(j - params.certified_bound)
    text = _json(doc)
    if args.out:
        files = {"report.json": text}
        for t in traces:
            files[f"trace-seed{t.seed}.csv"] = trace_csv(t, sc.edge_ids)
        write_outputs(args.out, files)
    sys.stdout.write(text)
    return 0


def cmd_compare(args, sc):
    points = compare(sc, args.seeds, args.workers)
    doc = {**_header(sc, "compare"), "seeds": [sc.seed + k for k in range(args.seeds)],
           "horizon": sc.horizon, "warmup": sc.warmup,
           "lower_bound_meaning": "average lyapunov cost minus the certified bound M/W; "
                                  "a lower bound on the optimal average cost",
           "points": [{"s_max": p.s_max,
                       "summary": {k: (_num(v) if isinstance(v, float) else v)
                                   for k, v in p.summary.as_dict().items()},
                       "plan": _plan_doc(p.params, ())} for p in points]}
    write_outputs(args.out, {"report.json": _json(doc), "sweep.csv": sweep_csv(points)})
    print(sweep_csv(points), end="")
    return 0


def cmd_kmatrix(args, sc):
    net = sc.system.network
    K = net.k_matrix
    rank = int(np.linalg.matrix_rank(K)) if K.size else 0
    doc = {**_header(sc, "kmatrix"), "buses": net.n, "edges": list(sc.edge_ids),
           "tree": bool(net.is_tree), "rows": K.shape[0], "expected_rows": net.m - net.n + 1,
           "rank": rank, "kvl_residual": kvl_residual(net),
           "k_matrix": [[float(x) for x in row] for row in K]}
    sys.stdout.write(_json(doc))
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="storagenet",
        description="Plan, simulate and audit online control of storage networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_text, func):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("scenario", help="scenario JSON file")
        sp.set_defaults(func=func)
        return sp

    add("validate", "check a scenario file", cmd_validate)
    sp = add("plan", "compute controller parameters and the certified bound", cmd_plan)
    sp.add_argument("--out", help="directory for plan.json")
    sp = add("bound", "report the sub-optimality bound", cmd_bound)
    sp.add_argument("--markov", action="store_true",
                    help="bound for the Markov disturbance via return-time moments")
    sp.add_argument("--out", help="directory for bound.json")
    sp = add("simulate", "simulate one policy", cmd_simulate)
    sp.add_argument("--policy", choices=("lyapunov", "greedy", "no-storage"), required=True)
    sp.add_argument("--seeds", type=int, default=1, help="number of seeds (default 1)")
    sp.add_argument("--workers", type=int, default=None, help="parallel processes")
    sp.add_argument("--out", help="directory for report.json and trace CSVs")
    sp = add("compare", "run all policies with common random numbers over the sweep",
             cmd_compare)
    sp.add_argument("--out", required=True, help="directory for report.json and sweep.csv")
    sp.add_argument("--seeds", type=int, default=1, help="number of seeds (default 1)")
    sp.add_argument("--workers", type=int, default=None, help="parallel processes")
    add("kmatrix", "print the KVL matrix and diagnostics", cmd_kmatrix)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seeds", 1) < 1:
        parser.error("--seeds must be at least 1")
    try:
        sc = load_scenario(args.scenario)
        return args.func(args, sc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
