"""Experiment configuration: YAML documents, validation and presets.

A configuration is a single YAML mapping. Recognised keys (all optional
except ``hypotheses`` for simulations)::

    kind: simulation          # simulation | figure1 | figure2
    name: my_experiment
    agents: 20                # m
    categories: 2             # K, checked against the hypotheses
    hypotheses:               # shared by every agent
      - [0.6, 0.4]
      - [0.4, 0.6]
    agent_hypotheses: null    # optional per-agent override, m lists of S vectors
    ground_truth: 0           # index into the hypothesis list
    topology:
      kind: rgg               # rgg | complete | ring | edgelist
      radius: 0.4             # rgg only
      path: null              # edgelist only, resolved relative to the config file
      weights: lazy_metropolis  # lazy_metropolis | uniform
    evidence:                 # one or more regimes
      - regime: low           # low | high | infinite | range
        style: sampled        # sampled | idealized
        lo: null              # range only
        hi: null
    rules: [loglinear, degroot]
    horizon: 100000
    runs: 10
    seed: 1
    upsilon: 2.0
    checkpoints: [1000, 10000, 100000]
    record_stride: 1000
    output: results/my_experiment
    export_signals: false
    workers: null             # default: all CPUs
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional, Tuple

import yaml

from ..learning import Rule
from ..signals import EvidenceSpec
from ..uncertain_models import CategoricalParams

BENCHMARK = [[0.6, 0.4], [0.55, 0.45], [0.5, 0.5], [0.4, 0.6]]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "rgg"
    radius: float = 0.4
    path: Optional[str] = None
    weights: str = "lazy_metropolis"


@dataclass
class ExperimentConfig:
    kind: str = "simulation"
    name: str = "experiment"
    m: int = 20
    K: int = 2
    hypotheses: List[List[CategoricalParams]] = field(default_factory=list)
    ground_truth: int = 0
    topology: TopologySpec = field(default_factory=TopologySpec)
    evidence: List[EvidenceSpec] = field(default_factory=list)
    rules: Tuple[Rule, ...] = (Rule.LOGLINEAR, Rule.DEGROOT)
    horizon: int = 100_000
    runs: int = 10
    seed: int = 1
    upsilon: float = 2.0
    checkpoints: Tuple[int, ...] = ()
    record_stride: int = 1000
    output: str = "results/experiment"
    export_signals: bool = False
    workers: Optional[int] = None
    source: str = ""

    @property
    def S(self) -> int:
        return len(self.hypotheses[0])


_TOP_KEYS = {
    "kind", "name", "agents", "categories", "hypotheses", "agent_hypotheses", "ground_truth",
    "topology", "evidence", "rules", "horizon", "runs", "seed", "upsilon", "checkpoints",
    "record_stride", "output", "export_signals", "workers",
}
_TOPOLOGY_KEYS = {"kind", "radius", "path", "weights"}
_EVIDENCE_KEYS = {"regime", "style", "lo", "hi"}


class _Doc:
    """Plain data plus line numbers for every mapping key path."""

    def __init__(self, data, lines, origin: str):
        self.data = data
        self.lines = lines
        self.origin = origin

    def fail(self, path: Tuple, msg: str):
        key = ".".join(str(p) for p in path) or "<document>"
        line = None
        for cut in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line is not None:
                break
        where = f"{self.origin}:{line}" if line is not None else self.origin
        raise ConfigError(f"{where}: {key}: {msg}")


def _walk(node, path, lines):
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _walk(v, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        out = []
        for n, v in enumerate(node.value):
            lines[path + (n,)] = v.start_mark.line + 1
            out.append(_walk(v, path + (n,), lines))
        return out
    return yaml.safe_load(yaml.serialize(node))


def _parse(text: str, origin: str) -> _Doc:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{origin}:{mark.line + 1}" if mark is not None else origin
        raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    lines = {(): 1}
    data = {} if root is None else _walk(root, (), lines)
    if not isinstance(data, dict):
        raise ConfigError(f"{origin}:1: top level must be a mapping")
    return _Doc(data, lines, origin)


def _int(doc, path, value, lo=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        doc.fail(path, f"expected an integer, got {value!r}")
    value = int(value)
    if lo is not None and value < lo:
        doc.fail(path, f"must be >= {lo}, got {value}")
    return value


def _probs(doc, path, value):
    try:
        return CategoricalParams(value)
    except (ValueError, TypeError) as exc:
        doc.fail(path, str(exc))


def _check_keys(doc, path, mapping, allowed):
    if not isinstance(mapping, dict):
        doc.fail(path, "expected a mapping")
    for key in mapping:
        if key not in allowed:
            doc.fail(path + (key,), f"unknown key {key!r}")


def _build(doc: _Doc, base_dir: Optional[Path]) -> ExperimentConfig:
    d = doc.data
    _check_keys(doc, (), d, _TOP_KEYS)
    cfg = ExperimentConfig()
    cfg.kind = d.get("kind", "simulation")
    if cfg.kind not in ("simulation", "figure1", "figure2"):
        doc.fail(("kind",), f"unknown kind {cfg.kind!r}")
    cfg.name = str(d.get("name", cfg.name))
    cfg.output = str(d.get("output", f"results/{cfg.name}"))
    if cfg.kind != "simulation":
        for key in d:
            if key not in ("kind", "name", "output"):
                doc.fail((key,), f"key {key!r} is not used by kind {cfg.kind!r}")
        return cfg

    cfg.m = _int(doc, ("agents",), d.get("agents", cfg.m), lo=1)
    if "agent_hypotheses" in d and d["agent_hypotheses"] is not None:
        per_agent = d["agent_hypotheses"]
        if not isinstance(per_agent, list) or len(per_agent) != cfg.m:
            doc.fail(("agent_hypotheses",), f"expected a list with one entry per agent ({cfg.m})")
        hyps = []
        for i, row in enumerate(per_agent):
            if not isinstance(row, list) or not row:
                doc.fail(("agent_hypotheses", i), "expected a non-empty list of probability vectors")
            hyps.append([_probs(doc, ("agent_hypotheses", i, s), v) for s, v in enumerate(row)])
        if len({len(r) for r in hyps}) != 1:
            doc.fail(("agent_hypotheses",), "every agent needs the same number of hypotheses")
    else:
        shared = d.get("hypotheses")
        if not isinstance(shared, list) or not shared:
            doc.fail(("hypotheses",), "expected a non-empty list of probability vectors")
        row = [_probs(doc, ("hypotheses", s), v) for s, v in enumerate(shared)]
        hyps = [row] * cfg.m
    Ks = {h.K for row in hyps for h in row}
    if len(Ks) != 1:
        doc.fail(("hypotheses",), f"hypotheses disagree on the number of categories: {sorted(Ks)}")
    cfg.hypotheses = hyps
    cfg.K = Ks.pop()
    if "categories" in d and _int(doc, ("categories",), d["categories"], lo=2) != cfg.K:
        doc.fail(("categories",), f"declared {d['categories']} categories but hypotheses have {cfg.K}")
    cfg.ground_truth = _int(doc, ("ground_truth",), d.get("ground_truth", 0), lo=0)
    if cfg.ground_truth >= cfg.S:
        doc.fail(("ground_truth",), f"index {cfg.ground_truth} outside the {cfg.S} hypotheses")

    topo = d.get("topology", {}) or {}
    _check_keys(doc, ("topology",), topo, _TOPOLOGY_KEYS)
    kind = topo.get("kind", "rgg")
    if kind not in ("rgg", "complete", "ring", "edgelist"):
        doc.fail(("topology", "kind"), f"unknown topology kind {kind!r}")
    radius = topo.get("radius", 0.4)
    if isinstance(radius, bool) or not isinstance(radius, (int, float)) or not 0 < radius <= math.sqrt(2):
        doc.fail(("topology", "radius"), f"radius must lie in (0, sqrt(2)], got {radius!r}")
    path = topo.get("path")
    if kind == "edgelist":
        if not path:
            doc.fail(("topology", "path"), "edgelist topology needs a path")
        if base_dir is not None and not Path(path).is_absolute():
            path = str(base_dir / path)
    weights = topo.get("weights", "lazy_metropolis")
    if weights not in ("lazy_metropolis", "uniform"):
        doc.fail(("topology", "weights"), f"unknown weight scheme {weights!r}")
    if weights == "uniform" and kind != "complete":
        doc.fail(("topology", "weights"), "uniform weights need a complete topology")
    cfg.topology = TopologySpec(kind, float(radius), path, weights)

    ev = d.get("evidence", [{"regime": "low"}])
    if isinstance(ev, dict):
        ev = [ev]
    if not isinstance(ev, list) or not ev:
        doc.fail(("evidence",), "expected one or more evidence specs")
    specs = []
    for n, item in enumerate(ev):
        p = ("evidence", n)
        _check_keys(doc, p, item, _EVIDENCE_KEYS)
        try:
            specs.append(EvidenceSpec(item.get("regime", "low"), item.get("style", "sampled"), item.get("lo"), item.get("hi")))
        except (ValueError, TypeError) as exc:
            doc.fail(p, str(exc))
    labels = [_regime_label(s) for s in specs]
    if len(set(labels)) != len(labels):
        doc.fail(("evidence",), "duplicate evidence regimes")
    cfg.evidence = specs

    rules = d.get("rules", ["loglinear", "degroot"])
    if isinstance(rules, str):
        rules = [rules]
    try:
        cfg.rules = tuple(dict.fromkeys(Rule(r) for r in rules))
    except ValueError as exc:
        doc.fail(("rules",), str(exc))
    if not cfg.rules:
        doc.fail(("rules",), "at least one rule is required")

    cfg.horizon = _int(doc, ("horizon",), d.get("horizon", cfg.horizon), lo=1)
    cfg.runs = _int(doc, ("runs",), d.get("runs", cfg.runs), lo=1)
    cfg.seed = _int(doc, ("seed",), d.get("seed", cfg.seed), lo=0)
    ups = d.get("upsilon", cfg.upsilon)
    if isinstance(ups, bool) or not isinstance(ups, (int, float)) or not ups > 1:
        doc.fail(("upsilon",), f"threshold must exceed 1, got {ups!r}")
    cfg.upsilon = float(ups)
    cps = d.get("checkpoints", default_checkpoints(cfg.horizon))
    if not isinstance(cps, list):
        doc.fail(("checkpoints",), "expected a list of times")
    cfg.checkpoints = tuple(sorted({_int(doc, ("checkpoints", n), c, lo=1) for n, c in enumerate(cps)}))
    late = [c for c in cfg.checkpoints if c > cfg.horizon]
    if late:
        doc.fail(("checkpoints",), f"checkpoints {late} exceed the horizon {cfg.horizon}")
    cfg.record_stride = _int(doc, ("record_stride",), d.get("record_stride", default_stride(cfg.horizon)), lo=1)
    cfg.export_signals = bool(d.get("export_signals", False))
    workers = d.get("workers")
    cfg.workers = None if workers is None else _int(doc, ("workers",), workers, lo=1)
    return cfg


def _regime_label(spec: EvidenceSpec) -> str:
    label = spec.regime.value
    if spec.bounds is not None and spec.regime.value == "range":
        label += f"_{spec.lo}_{spec.hi}"
    if spec.style.value != "sampled":
        label += f"_{spec.style.value}"
    return label


regime_label = _regime_label


def default_checkpoints(horizon: int) -> List[int]:
    cps = [10**k for k in range(3, 12) if 10**k <= horizon]
    return sorted(set(cps + [horizon]))


def default_stride(horizon: int) -> int:
    return max(1, min(1000, horizon // 100))


def parse_config(text: str, origin: str = "<config>", base_dir=None) -> ExperimentConfig:
    doc = _parse(text, origin)
    cfg = _build(doc, Path(base_dir) if base_dir is not None else None)
    cfg.source = text
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration: {exc.strerror or exc}") from None
    return parse_config(text, str(path), path.parent)


PRESETS = {
    "paper_low": "four benchmark hypotheses, 20-agent geometric graph, R in [0, 100]",
    "paper_high": "four benchmark hypotheses, 20-agent geometric graph, R in [1000, 10000]",
    "paper_certain": "four benchmark hypotheses, 20-agent geometric graph, certain models",
    "figure1": "normalised-belief pathology curves (evidence 45/65/85 for the true hypothesis)",
    "figure2": "asymptotic ULR versus amount of evidence for pi in {0.1, ..., 0.9}",
}


def preset_document(
    name: str,
    seed: Optional[int] = None,
    horizon: Optional[int] = None,
    runs: Optional[int] = None,
    agents: Optional[int] = None,
    output: Optional[str] = None,
) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if name in ("figure1", "figure2"):
        return {"kind": name, "name": name, "output": output or f"results/{name}"}
    regime = {"paper_low": "low", "paper_high": "high", "paper_certain": "infinite"}[name]
    T = 100_000 if horizon is None else horizon
    doc = {
        "kind": "simulation",
        "name": name,
        "agents": 20 if agents is None else agents,
        "hypotheses": copy.deepcopy(BENCHMARK),
        "ground_truth": 0,
        "topology": {"kind": "rgg", "radius": 0.4, "weights": "lazy_metropolis"},
        "evidence": [{"regime": regime, "style": "sampled"}],
        "rules": ["loglinear", "degroot"],
        "horizon": T,
        "runs": 10 if runs is None else runs,
        "seed": 1 if seed is None else seed,
        "upsilon": 2.0,
        "checkpoints": default_checkpoints(T),
        "record_stride": default_stride(T),
        "output": output or f"results/{name}",
    }
    return doc


def preset_config(name: str, **overrides) -> ExperimentConfig:
    doc = preset_document(name, **overrides)
    text = yaml.safe_dump(doc, sort_keys=False)
    return parse_config(text, f"<preset {name}>")
