"""YAML run configs: parsing, validation with line context, canonical form and digest.

A config has the sections ``hypotheses``/``true_hypothesis``, ``agents``, ``graph``,
``rule``, ``adversary`` and ``run``.  Agents are 0-based everywhere.  See README for
the full schema; :func:`canonical` produces the normal form that is hashed.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .adversary import (STRATEGY_NAMES, AdversarySpec, FixedBelief, PerEdge, RandomBelief,
                        SilentConform)
from .engine import SimulationConfig
from .graphs import DirectedGraph, GraphSchedule
from .model import AgentLikelihood, HypothesisSet, InvalidModelError, ObservationModel
from .rules import RULES

BUNDLED_DIR = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None, source: str = ""):
        self.path, self.line, self.message, self.source = path, line, message, source
        where = source or "config"
        if line is not None:
            where += f" (line {line})"
        if path:
            where += f": {path}"
        super().__init__(f"{where}: {message}")


# --- loading ----------------------------------------------------------------------

def _line_map(node, path="", out=None) -> dict:
    """Map dotted field paths to 1-based source lines."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            sub = f"{path}.{key.value}" if path else str(key.value)
            out[sub] = key.start_mark.line + 1
            _line_map(value, sub, out)
            out[sub] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for k, item in enumerate(node.value):
            _line_map(item, f"{path}[{k}]", out)
    return out


def _closest_line(lines: dict, path: str) -> int | None:
    while path:
        if path in lines:
            return lines[path]
        cut = max(path.rfind("."), path.rfind("["))
        path = path[:cut] if cut > 0 else ""
    return None


def load_text(text: str, source: str = "config") -> dict:
    """Parse YAML text into a canonical config dict."""
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', None) or exc}",
                          line=mark.line + 1 if mark else None, source=source) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source=source)
    lines = _line_map(node) if node is not None else {}
    try:
        return canonical(data)
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.path, _closest_line(lines, exc.path), source) from None


def bundled_names() -> list[str]:
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.yaml"))


def resolve(path_or_name: str) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    bundled = BUNDLED_DIR / f"{path_or_name}.yaml"
    if bundled.exists():
        return bundled
    raise ConfigError(f"no config file or bundled config named {path_or_name!r}")


def load(path_or_name: str) -> dict:
    p = resolve(path_or_name)
    return load_text(p.read_text(), str(p))


# --- canonical form -----------------------------------------------------------------

def _need(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError("missing required field", f"{path}.{key}" if path else key)
    return d[key]


def _int(x, path, lo=None):
    if isinstance(x, bool) or not isinstance(x, (int, np.integer)):
        raise ConfigError(f"expected an integer, got {x!r}", path)
    if lo is not None and x < lo:
        raise ConfigError(f"must be >= {lo}", path)
    return int(x)


def _floats(xs, path):
    if not isinstance(xs, (list, tuple)):
        raise ConfigError(f"expected a list of numbers, got {xs!r}", path)
    try:
        return [float(x) for x in xs]
    except (TypeError, ValueError):
        raise ConfigError(f"expected numbers, got {xs!r}", path) from None


def _edges(raw, n, path, undirected=False):
    if not isinstance(raw, list):
        raise ConfigError("edges must be a list of [from, to] pairs", path)
    out = set()
    for k, e in enumerate(raw):
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise ConfigError(f"edge must be a [from, to] pair, got {e!r}", f"{path}[{k}]")
        i, j = (_int(x, f"{path}[{k}]", 0) for x in e)
        if i >= n or j >= n:
            raise ConfigError(f"edge {e} out of range for n={n}", f"{path}[{k}]")
        if i != j:
            out.add((i, j))
            if undirected:
                out.add((j, i))
    return sorted([list(e) for e in out])


def canonical(data: dict) -> dict:
    """Normal form: defaults filled, agent counts expanded, edges directed and sorted."""
    names = _need(data, "hypotheses", "")
    if not isinstance(names, list) or len(names) < 2:
        raise ConfigError("need a list of at least two hypothesis labels", "hypotheses")
    names = [str(x) for x in names]
    if len(set(names)) != len(names):
        raise ConfigError("hypothesis labels must be unique", "hypotheses")
    truth = data.get("true_hypothesis", names[0])
    if isinstance(truth, int) and not isinstance(truth, bool):
        if not 0 <= truth < len(names):
            raise ConfigError("index out of range", "true_hypothesis")
        truth = names[truth]
    if str(truth) not in names:
        raise ConfigError(f"unknown hypothesis {truth!r}", "true_hypothesis")
    m = len(names)

    agents = []
    raw_agents = _need(data, "agents", "")
    if not isinstance(raw_agents, list) or not raw_agents:
        raise ConfigError("need a non-empty list of agents", "agents")
    for k, a in enumerate(raw_agents):
        path = f"agents[{k}]"
        if not isinstance(a, dict):
            raise ConfigError("agent entry must be a mapping", path)
        signals = [str(s) for s in _need(a, "signals", path)]
        rows = _need(a, "likelihoods", path)
        if not isinstance(rows, list) or len(rows) != m:
            raise ConfigError(f"need one likelihood row per hypothesis ({m})", f"{path}.likelihoods")
        rows = [_floats(r, f"{path}.likelihoods[{p}]") for p, r in enumerate(rows)]
        try:
            AgentLikelihood(tuple(signals), np.array(rows))
        except InvalidModelError as exc:
            raise ConfigError(str(exc), f"{path}.likelihoods") from None
        count = _int(a.get("count", 1), f"{path}.count", 1)
        agents += [{"signals": list(signals), "likelihoods": [list(r) for r in rows]} for _ in range(count)]
    n = len(agents)

    g = _need(data, "graph", "")
    if not isinstance(g, dict):
        raise ConfigError("graph must be a mapping", "graph")
    kind = g.get("kind", "static")
    if kind not in ("static", "periodic", "explicit"):
        raise ConfigError(f"unknown graph kind {kind!r}", "graph.kind")
    gn = _int(g.get("n", n), "graph.n", 1)
    if gn != n:
        raise ConfigError(f"graph has {gn} nodes but {n} agents are defined", "graph.n")
    undirected = bool(g.get("undirected", False))
    if kind == "static":
        if "sequence" in g:
            seq = g["sequence"]
            if not isinstance(seq, list) or len(seq) != 1:
                raise ConfigError("a static graph has exactly one entry", "graph.sequence")
            entry = seq[0]
            sequence = [_edges(entry.get("edges", []), n, "graph.sequence[0].edges",
                               bool(entry.get("undirected", undirected)))]
        else:
            sequence = [_edges(g.get("edges", []), n, "graph.edges", undirected)]
    else:
        seq = _need(g, "sequence", "graph")
        if not isinstance(seq, list) or not seq:
            raise ConfigError("need a non-empty list of graphs", "graph.sequence")
        sequence = [
            _edges(entry.get("edges", []) if isinstance(entry, dict) else entry, n,
                   f"graph.sequence[{k}].edges",
                   bool(entry.get("undirected", undirected)) if isinstance(entry, dict) else undirected)
            for k, entry in enumerate(seq)
        ]
    graph = {"kind": kind, "n": n, "sequence": [{"edges": s} for s in sequence]}
    if "T" in g and g["T"] is not None:
        graph["T"] = _int(g["T"], "graph.T", 1)

    rule_raw = data.get("rule", "min_rule")
    if isinstance(rule_raw, str):
        rule_raw = {"name": rule_raw}
    if not isinstance(rule_raw, dict):
        raise ConfigError("rule must be a name or a mapping", "rule")
    rname = rule_raw.get("name", "min_rule")
    if rname not in RULES:
        raise ConfigError(f"unknown rule {rname!r}; expected one of {list(RULES)}", "rule.name")
    f = rule_raw.get("f")
    if rname == "lfrhe":
        if f is None:
            raise ConfigError("lfrhe needs f", "rule.f")
        f = _int(f, "rule.f", 0)
    elif f is not None:
        f = _int(f, "rule.f", 0)
    rule = {"name": rname, "f": f}

    adversary = []
    raw_adv = data.get("adversary") or []
    if not isinstance(raw_adv, list):
        raise ConfigError("adversary must be a list of byzantine agents", "adversary")
    seen = set()
    for k, a in enumerate(raw_adv):
        path = f"adversary[{k}]"
        if not isinstance(a, dict):
            raise ConfigError("adversary entry must be a mapping", path)
        agent = _int(_need(a, "agent", path), f"{path}.agent", 0)
        if agent >= n:
            raise ConfigError(f"agent {agent} out of range", f"{path}.agent")
        if agent in seen:
            raise ConfigError(f"agent {agent} listed twice", f"{path}.agent")
        seen.add(agent)
        strategy = _need(a, "strategy", path)
        entry = {"agent": agent, "strategy": strategy}
        if strategy == "fixed_belief":
            entry["belief"] = _floats(_need(a, "belief", path), f"{path}.belief")
            entry["start_time"] = _int(a.get("start_time", 0), f"{path}.start_time", 0)
        elif strategy == "per_edge":
            raw = _need(a, "beliefs", path)
            if not isinstance(raw, dict):
                raise ConfigError("beliefs must map out-neighbour to vector", f"{path}.beliefs")
            entry["beliefs"] = {
                str(_int(int(key), f"{path}.beliefs", 0)): _floats(v, f"{path}.beliefs.{key}")
                for key, v in sorted(raw.items(), key=lambda kv: int(kv[0]))
            }
            entry["start_time"] = _int(a.get("start_time", 0), f"{path}.start_time", 0)
        elif strategy == "random_belief":
            entry["seed"] = _int(a.get("seed", 0), f"{path}.seed", 0)
        elif strategy != "silent_conform":
            raise ConfigError(f"unknown strategy {strategy!r}", f"{path}.strategy")
        adversary.append(entry)
    adversary.sort(key=lambda e: e["agent"])

    run = data.get("run") or {}
    if not isinstance(run, dict):
        raise ConfigError("run must be a mapping", "run")
    priors = run.get("priors", "uniform")
    if priors != "uniform":
        if not isinstance(priors, list) or len(priors) != n:
            raise ConfigError(f"priors must be 'uniform' or {n} rows", "run.priors")
        priors = [_floats(r, f"run.priors[{i}]") for i, r in enumerate(priors)]
    run = {
        "horizon": _int(run.get("horizon", 1000), "run.horizon", 1),
        "seed": _int(run.get("seed", 0), "run.seed", 0),
        "stride": _int(run.get("stride", 1), "run.stride", 1),
        "priors": priors,
    }

    out = {
        "hypotheses": names,
        "true_hypothesis": str(truth),
        "agents": agents,
        "graph": graph,
        "rule": rule,
        "adversary": adversary,
        "run": run,
    }
    # Semantic validation (byzantine set, per-edge coverage, priors...) with field paths.
    build(out)
    return out


# --- objects ------------------------------------------------------------------------

def _strategy(entry):
    s = entry["strategy"]
    if s == "fixed_belief":
        return FixedBelief(tuple(entry["belief"]), entry["start_time"])
    if s == "per_edge":
        return PerEdge({int(k): tuple(v) for k, v in entry["beliefs"].items()}, entry["start_time"])
    if s == "random_belief":
        return RandomBelief(entry["seed"])
    return SilentConform()


def build(canon: dict, **overrides) -> SimulationConfig:
    """SimulationConfig from a canonical dict; ``overrides`` replace fields afterwards."""
    from .engine import ConfigValidationError

    names = canon["hypotheses"]
    model = ObservationModel(
        HypothesisSet(tuple(names), names.index(canon["true_hypothesis"])),
        tuple(AgentLikelihood(tuple(a["signals"]), np.array(a["likelihoods"])) for a in canon["agents"]),
    )
    n = model.n
    graphs = tuple(DirectedGraph(n, frozenset(map(tuple, e["edges"]))) for e in canon["graph"]["sequence"])
    schedule = GraphSchedule(canon["graph"]["kind"], graphs)
    try:
        adversary = AdversarySpec({e["agent"]: _strategy(e) for e in canon["adversary"]})
    except ValueError as exc:
        raise ConfigError(str(exc), "adversary") from None
    run = canon["run"]
    priors = None if run["priors"] == "uniform" else np.array(run["priors"])
    cfg = SimulationConfig(
        model=model,
        schedule=schedule,
        rule=canon["rule"]["name"],
        f=canon["rule"]["f"],
        adversary=adversary,
        horizon=run["horizon"],
        seed=run["seed"],
        priors=priors,
        stride=run["stride"],
    )
    if overrides:
        cfg = cfg.replace(**overrides)
    try:
        cfg.validate()
    except ConfigValidationError as exc:
        field_name, _, msg = str(exc).partition(": ")
        path = {"horizon": "run.horizon", "seed": "run.seed", "stride": "run.stride",
                "priors": "run.priors"}.get(field_name, field_name)
        raise ConfigError(msg, path) from None
    return cfg


def to_canonical(cfg: SimulationConfig, T: int | None = None) -> dict:
    """Inverse of :func:`build` (up to the optional connectivity window ``T``)."""
    model, schedule = cfg.model, cfg.schedule
    adversary = []
    for agent, s in sorted(cfg.adversary.strategies.items()):
        entry = {"agent": agent, "strategy": STRATEGY_NAMES[type(s)]}
        if isinstance(s, FixedBelief):
            entry.update(belief=list(s.belief), start_time=s.start_time)
        elif isinstance(s, PerEdge):
            entry.update(beliefs={str(k): list(v) for k, v in sorted(s.beliefs.items())},
                         start_time=s.start_time)
        elif isinstance(s, RandomBelief):
            entry["seed"] = s.seed
        adversary.append(entry)
    graph = {
        "kind": schedule.kind,
        "n": schedule.n,
        "sequence": [{"edges": sorted([list(e) for e in g.edges])} for g in schedule.graphs],
    }
    if T is not None:
        graph["T"] = T
    return {
        "hypotheses": list(model.hypotheses.names),
        "true_hypothesis": model.hypotheses.names[model.true_index],
        "agents": [{"signals": list(a.signal_names), "likelihoods": a.table.tolist()} for a in model.agents],
        "graph": graph,
        "rule": {"name": cfg.rule, "f": cfg.f},
        "adversary": adversary,
        "run": {
            "horizon": cfg.horizon,
            "seed": cfg.seed,
            "stride": cfg.stride,
            "priors": "uniform" if cfg.priors is None else np.asarray(cfg.priors).tolist(),
        },
    }


def digest_of(canon: dict) -> str:
    body = {k: v for k, v in canon.items() if k != "graph"}
    body["graph"] = {k: v for k, v in canon["graph"].items() if k != "T"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def config_digest(cfg: SimulationConfig) -> str:
    return digest_of(to_canonical(cfg))


class _NoAliasDumper(yaml.SafeDumper):
    def ignore_aliases(self, data):
        return True


def dump(canon: dict) -> str:
    return yaml.dump(canon, Dumper=_NoAliasDumper, sort_keys=False, default_flow_style=None, width=100)


def certify_mode(canon: dict) -> dict[str, Any]:
    """Certification mode implied by a config: the rule and the graph kind decide it."""
    rule = canon["rule"]
    if rule["name"] == "lfrhe":
        return {"mode": "lfrhe", "f": rule["f"]}
    if canon["graph"]["kind"] == "static" or len({json.dumps(s) for s in canon["graph"]["sequence"]}) == 1:
        return {"mode": "min_rule_static"}
    return {"mode": "min_rule_timevarying", "T": canon["graph"].get("T")}
