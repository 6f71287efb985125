"""JSON scenario files: loading, validation and canonical serialization.

Errors come in three distinct kinds: the file is not JSON
(:class:`ScenarioParseError`), it does not match the schema
(:class:`ScenarioSchemaError`), or its values are inconsistent
(:class:`ScenarioSemanticError`).  Messages cite the offending field path.
See ``docs/scenario-format.md`` for the format.
"""
from __future__ import annotations

import hashlib
import json
from importlib import resources

import jsonschema

from .cost import ConstantPrice, CostModel, CostTerm, SchedulePrice, UniformPrice, check_convexity
from .exceptions import (
    MarkovChainError,
    NetworkError,
    NonConvexCostError,
    ScenarioParseError,
    ScenarioSchemaError,
    ScenarioSemanticError,
    StorageAssumptionError,
)
from .network import build_network
from .simulation import Scenario, Sweep
from .stochastic import (
    EmpiricalDisturbance,
    LaplaceDisturbance,
    MarkovChain,
    MarkovDisturbance,
    disturbance_bound,
)
from .storage import StorageSpec, validate_storage
from .system import StorageSystem

FORMAT_VERSION = 1

_NUM = {"type": "number"}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}

_PRICE = {
    "oneOf": [
        {"type": "object", "required": ["kind", "value"], "additionalProperties": False,
         "properties": {"kind": {"const": "constant"}, "value": _NUM}},
        {"type": "object", "required": ["kind", "values"], "additionalProperties": False,
         "properties": {"kind": {"const": "schedule"}, "values": _NUM_LIST}},
        {"type": "object", "required": ["kind", "low", "high"], "additionalProperties": False,
         "properties": {"kind": {"const": "uniform"}, "low": _NUM, "high": _NUM}},
    ]
}

_TERM = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["positive", "linear"]},
        "alpha_delta": _NUM, "alpha_c": _NUM, "alpha_d": _NUM, "alpha_f": _NUM,
        "alpha_const": {"oneOf": [_NUM, _NUM_LIST]},
        "price": _PRICE,
    },
}

_STORAGE = {
    "type": "object",
    "required": ["s_min", "s_max", "u_min", "u_max"],
    "additionalProperties": False,
    "properties": {
        "s_min": _NUM, "s_max": _NUM, "u_min": _NUM, "u_max": _NUM,
        "mu_c": _NUM, "mu_d": _NUM, "lambda": _NUM, "initial_level": _NUM,
    },
}

_DISTURBANCE = {
    "oneOf": [
        {"type": "object", "required": ["kind", "sigma"], "additionalProperties": False,
         "properties": {"kind": {"const": "laplace"}, "sigma": _NUM,
                        "truncation": {"type": "number", "exclusiveMinimum": 0}}},
        {"type": "object", "required": ["kind", "support"], "additionalProperties": False,
         "properties": {"kind": {"const": "empirical"}, "support": _NUM_LIST,
                        "weights": _NUM_LIST}},
        {"type": "object", "required": ["kind", "transition", "values"],
         "additionalProperties": False,
         "properties": {"kind": {"const": "markov"},
                        "transition": {"type": "array", "minItems": 1,
                                       "items": _NUM_LIST},
                        "initial_state": {"type": "integer", "minimum": 0},
                        "values": {"type": "array", "minItems": 1,
                                   "items": {"oneOf": [_NUM, _NUM_LIST]}}}},
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "buses", "disturbance", "horizon"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "name": {"type": "string"},
        "buses": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "required": ["storage", "cost"],
                      "additionalProperties": False,
                      "properties": {
                          "storage": _STORAGE,
                          "cost": {"type": "object", "required": ["terms"],
                                   "additionalProperties": False,
                                   "properties": {"terms": {"type": "array", "minItems": 1,
                                                            "items": _TERM}}}}},
        },
        "network": {
            "type": "object", "required": ["edges"], "additionalProperties": False,
            "properties": {"edges": {
                "type": "array",
                "items": {"type": "object", "required": ["from", "to", "beta", "f_max"],
                          "additionalProperties": False,
                          "properties": {"id": {"type": "string"},
                                         "from": {"type": "integer"},
                                         "to": {"type": "integer"},
                                         "beta": _NUM, "f_max": _NUM}}}},
        },
        "disturbance": _DISTURBANCE,
        "horizon": {"type": "integer", "minimum": 0},
        "policy": {"enum": ["lyapunov", "greedy", "no-storage"]},
        "seed": {"type": "integer", "minimum": 0},
        "warmup": {"type": "integer", "minimum": 0},
        "shared_weight": {"type": "boolean"},
        "sweep": {"type": "object", "required": ["s_max", "ramp_ratio"],
                  "additionalProperties": False,
                  "properties": {"s_max": {"type": "array", "minItems": 1,
                                           "items": {"type": "number", "exclusiveMinimum": 0}},
                                 "ramp_ratio": {"type": "number", "exclusiveMinimum": 0}}},
    },
}


def _path(parts):
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _semantic(path, exc):
    return ScenarioSemanticError(f"{path}: {exc}")


# -- parsing ---------------------------------------------------------------------

def _price(d):
    if d is None:
        return ConstantPrice(1.0)
    if d["kind"] == "constant":
        return ConstantPrice(float(d["value"]))
    if d["kind"] == "schedule":
        return SchedulePrice(tuple(float(x) for x in d["values"]))
    if d["low"] > d["high"]:
        raise ValueError(f"uniform price low {d['low']} exceeds high {d['high']}")
    return UniformPrice(float(d["low"]), float(d["high"]))


def _term(d):
    const = d.get("alpha_const", 0.0)
    const = tuple(float(x) for x in const) if isinstance(const, list) else float(const)
    return CostTerm(kind=d["kind"], alpha_delta=float(d.get("alpha_delta", 0.0)),
                    alpha_c=float(d.get("alpha_c", 0.0)), alpha_d=float(d.get("alpha_d", 0.0)),
                    alpha_f=float(d.get("alpha_f", 0.0)), alpha_const=const,
                    price=_price(d.get("price")))


def _storage(d):
    return StorageSpec(float(d["s_min"]), float(d["s_max"]), float(d["u_min"]),
                       float(d["u_max"]), float(d.get("mu_c", 1.0)), float(d.get("mu_d", 1.0)),
                       float(d.get("lambda", 1.0)))


def _disturbance(d, n_buses):
    kind = d["kind"]
    if kind == "laplace":
        return LaplaceDisturbance(float(d["sigma"]), float(d.get("truncation", 8.0)))
    if kind == "empirical":
        return EmpiricalDisturbance(tuple(d["support"]), tuple(d.get("weights", ())))
    chain = MarkovChain(d["transition"], int(d.get("initial_state", 0)))
    values = d["values"]
    if all(isinstance(v, list) for v in values):
        if any(len(v) != n_buses for v in values):
            raise MarkovChainError(f"each state needs {n_buses} per-bus values")
    elif any(isinstance(v, list) for v in values):
        raise MarkovChainError("values must be all scalars or all per-bus lists")
    return MarkovDisturbance(chain, tuple(map(tuple, values)) if isinstance(values[0], list)
                             else tuple(values))


def scenario_from_dict(doc) -> Scenario:
    """Validate a parsed document against the schema and build the scenario."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioSchemaError(f"{_path(e.absolute_path)}: {e.message}")

    storages, costs, levels = [], [], []
    for v, bus in enumerate(doc["buses"]):
        path = f"buses[{v}].storage"
        try:
            st = validate_storage(_storage(bus["storage"]))
        except (StorageAssumptionError, ValueError) as exc:
            raise _semantic(path, exc) from exc
        lv = bus["storage"].get("initial_level")
        if lv is not None and not st.s_min <= lv <= st.s_max:
            raise ScenarioSemanticError(
                f"{path}.initial_level: {lv} outside [{st.s_min}, {st.s_max}]")
        levels.append(lv)
        path = f"buses[{v}].cost"
        try:
            model = CostModel(tuple(_term(t) for t in bus["cost"]["terms"]))
            check_convexity(model, st)
        except (NonConvexCostError, ValueError) as exc:
            raise _semantic(path, exc) from exc
        storages.append(st)
        costs.append(model)
    n = len(storages)

    edges = doc.get("network", {}).get("edges", [])
    for e, edge in enumerate(edges):
        for end in ("from", "to"):
            if not 0 <= edge[end] < n:
                name = edge.get("id", str(e))
                raise ScenarioSemanticError(
                    f"network.edges[{e}] (edge {name!r}): '{end}' references unknown bus "
                    f"{edge[end]}; buses are 0..{n - 1}")
    ids = tuple(edge.get("id", str(e)) for e, edge in enumerate(edges))
    if len(set(ids)) != len(ids):
        raise ScenarioSemanticError("network.edges: edge ids must be unique")
    try:
        network = build_network([(x["from"], x["to"]) for x in edges],
                                [x["beta"] for x in edges], [x["f_max"] for x in edges], n=n)
    except NetworkError as exc:
        raise _semantic("network", exc) from exc

    try:
        disturbance = _disturbance(doc["disturbance"], n)
    except (MarkovChainError, ValueError) as exc:
        raise _semantic("disturbance", exc) from exc
    bounds = tuple(disturbance_bound(disturbance, v) for v in range(n))

    sweep = None
    if "sweep" in doc:
        sw = doc["sweep"]
        sweep = Sweep(tuple(float(x) for x in sw["s_max"]), float(sw["ramp_ratio"]))
        for k, s_max in enumerate(sweep.s_max):
            for v, st in enumerate(storages):
                try:
                    validate_storage(st.scaled(s_max, sweep.ramp_ratio))
                except StorageAssumptionError as exc:
                    raise ScenarioSemanticError(
                        f"sweep.s_max[{k}]: rescaled storage at bus {v} is invalid: {exc}"
                    ) from exc

    horizon = doc["horizon"]
    warmup = doc.get("warmup", 0)
    if warmup > horizon:
        raise ScenarioSemanticError(f"warmup: {warmup} exceeds horizon {horizon}")
    initial = None
    if any(lv is not None for lv in levels):
        initial = tuple(float(st.s_min if lv is None else lv) for lv, st in zip(levels, storages))
    system = StorageSystem(tuple(storages), tuple(costs), network, bounds)
    return Scenario(system=system, disturbance=disturbance, horizon=horizon,
                    policy=doc.get("policy", "lyapunov"), seed=doc.get("seed", 0),
                    initial_levels=initial, warmup=warmup,
                    shared_weight=doc.get("shared_weight", False), sweep=sweep,
                    name=doc.get("name", ""), edge_ids=ids)


def loads(text) -> Scenario:
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except ValueError as exc:
        raise ScenarioParseError(str(exc)) from exc
    return scenario_from_dict(doc)


def _reject_constant(name):
    # NaN and Infinity are not JSON; Python's parser would otherwise accept them
    raise ValueError(f"non-finite number {name} is not allowed")


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ScenarioParseError(f"{path}: not UTF-8 text ({exc.reason})") from exc
    try:
        return loads(text)
    except ScenarioParseError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc


# -- serialization ------------------------------------------------------------------

def _price_dict(price):
    if isinstance(price, ConstantPrice):
        return {"kind": "constant", "value": float(price.value)}
    if isinstance(price, SchedulePrice):
        return {"kind": "schedule", "values": [float(x) for x in price.values]}
    return {"kind": "uniform", "low": float(price.low), "high": float(price.high)}


def _term_dict(term):
    const = term.alpha_const
    return {"kind": term.kind, "alpha_delta": float(term.alpha_delta),
            "alpha_c": float(term.alpha_c), "alpha_d": float(term.alpha_d),
            "alpha_f": float(term.alpha_f),
            "alpha_const": [float(c) for c in const] if isinstance(const, tuple) else float(const),
            "price": _price_dict(term.price)}


def _disturbance_dict(proc):
    if isinstance(proc, LaplaceDisturbance):
        return {"kind": "laplace", "sigma": float(proc.sigma),
                "truncation": float(proc.truncation)}
    if isinstance(proc, EmpiricalDisturbance):
        return {"kind": "empirical", "support": list(proc.support),
                "weights": list(proc.weights)}
    vals = proc.values
    values = [float(r[0]) for r in vals] if vals.shape[1] == 1 else [
        [float(x) for x in r] for r in vals]
    return {"kind": "markov", "transition": proc.chain.transition.tolist(),
            "initial_state": int(proc.chain.initial_state), "values": values}


def scenario_to_dict(sc: Scenario) -> dict:
    system = sc.system
    buses = []
    for v, (st, model) in enumerate(zip(system.storages, system.costs)):
        storage = {"s_min": st.s_min, "s_max": st.s_max, "u_min": st.u_min,
                   "u_max": st.u_max, "mu_c": st.mu_c, "mu_d": st.mu_d, "lambda": st.lam}
        storage = {k: float(x) for k, x in storage.items()}
        if sc.initial_levels is not None:
            storage["initial_level"] = float(sc.initial_levels[v])
        buses.append({"storage": storage, "cost": {"terms": [_term_dict(t) for t in model.terms]}})
    net = system.network
    edges = [{"id": sc.edge_ids[e], "from": int(a), "to": int(b), "beta": float(net.beta[e]),
              "f_max": float(net.f_max[e])} for e, (a, b) in enumerate(net.edges)]
    doc = {"version": FORMAT_VERSION, "name": sc.name, "buses": buses,
           "network": {"edges": edges}, "disturbance": _disturbance_dict(sc.disturbance),
           "horizon": int(sc.horizon), "policy": sc.policy, "seed": int(sc.seed),
           "warmup": int(sc.warmup), "shared_weight": bool(sc.shared_weight)}
    if sc.sweep is not None:
        doc["sweep"] = {"s_max": [float(x) for x in sc.sweep.s_max],
                        "ramp_ratio": float(sc.sweep.ramp_ratio)}
    return doc


def dumps(sc: Scenario) -> str:
    """Canonical text: sorted keys, two-space indent, every default written out."""
    return json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True) + "\n"


def scenario_hash(sc: Scenario) -> str:
    return hashlib.sha256(dumps(sc).encode("utf-8")).hexdigest()


def bundled(name) -> str:
    """Path of a scenario file shipped with the package (``name`` without ``.json``)."""
    return str(resources.files("storagenet") / "data" / f"{name}.json")


def bundled_names():
    return sorted(p.name[:-5] for p in (resources.files("storagenet") / "data").iterdir()
                  if p.name.endswith(".json"))
