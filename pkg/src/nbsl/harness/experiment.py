"""Monte Carlo orchestration and artifact writing."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import platform
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import scipy

from .. import __version__
from ..analysis import ca_divergence, ca_divergence_mc, error_stats, fit_rate, kl_divergence
from ..learning import BeliefTrajectory, EngineConfig, EvidenceTable, NumericalError, Rule, run, write_trajectory_csv
from ..network import (
    complete_graph,
    lazy_metropolis,
    read_edge_list,
    random_geometric_graph,
    ring_graph,
    uniform_mixing,
    write_edge_list,
    write_matrix_csv,
)
from ..signals import TOPOLOGY, WorldModel, substream, world_evidence, world_signals, write_evidence_csv, write_signals_csv
from ..uncertain_models import CategoricalParams, EvidenceCounts, limit_log_ulr, log_asymptotic_ulr, normalized_belief_limits
from .config import ExperimentConfig, regime_label

log = logging.getLogger(__name__)

FIG1_TRUTH = (0.6, 0.4)
FIG1_ALTERNATIVE = (0.575, 0.425)
FIG1_R1 = (45, 65, 85)
FIG1_R2 = (50, 2000)
FIG2_TRUTH = (0.6, 0.4)
FIG2_PIS = tuple(round(0.1 * k, 1) for k in range(1, 10))
FIG2_GRID = tuple(10 ** (k / 20) for k in range(101))  # 1 .. 1e5, 20 points per decade
CA_SAMPLES = 200_000


class ExperimentError(RuntimeError):
    """Runtime failure while executing an experiment."""


def _finite(x):
    """JSON-safe float: infinities become strings, NaN becomes null."""
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _tolist(a):
    a = np.asarray(a)
    if a.ndim == 0:
        return _finite(a) if a.dtype.kind == "f" else a.item()
    return [_tolist(x) for x in a]


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def build_world(cfg: ExperimentConfig) -> WorldModel:
    truth = tuple(row[cfg.ground_truth] for row in cfg.hypotheses)
    return WorldModel(truth, tuple(tuple(row) for row in cfg.hypotheses))


def build_network(cfg: ExperimentConfig):
    spec = cfg.topology
    if spec.kind == "rgg":
        topo = random_geometric_graph(cfg.m, spec.radius, substream(cfg.seed, TOPOLOGY))
    elif spec.kind == "complete":
        topo = complete_graph(cfg.m)
    elif spec.kind == "ring":
        topo = ring_graph(cfg.m)
    else:
        topo = read_edge_list(spec.path)
        if topo.m != cfg.m:
            raise ValueError(f"{spec.path}: edge list has {topo.m} agents, config has {cfg.m}")
    matrix = uniform_mixing(cfg.m) if spec.weights == "uniform" else lazy_metropolis(topo)
    return topo, matrix


def _run_task(args):
    """One (regime, run): evidence, signals and every rule on shared streams."""
    cfg, world, matrix, r_idx, run_idx = args
    spec = cfg.evidence[r_idx]
    evidence = world_evidence(world, spec, cfg.seed, run_idx)
    signals = world_signals(world, cfg.horizon, cfg.seed, run_idx)
    table = EvidenceTable(evidence)
    limits = np.array(
        [[limit_log_ulr(ev, world.ground_truth[i]) for ev in row] for i, row in enumerate(evidence)]
    )
    econf = dict(horizon=cfg.horizon, record_stride=cfg.record_stride, record_at=cfg.checkpoints)
    trajs, errors = {}, {}
    for rule in cfg.rules:
        try:
            trajs[rule.value] = run(world, matrix, table, EngineConfig(rule, **econf), signals=signals)
        except NumericalError as exc:
            errors[rule.value] = str(exc)
    return {
        "regime": r_idx,
        "run": run_idx,
        "evidence": evidence,
        "signals": signals if cfg.export_signals else None,
        "limits": limits,
        "trajectories": trajs,
        "errors": errors,
    }


def _execute(tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def _mean_log_belief(traj: BeliefTrajectory) -> np.ndarray:
    """Network average of log-beliefs per snapshot, shape (n, S)."""
    x = traj.log_mu
    with np.errstate(invalid="ignore"):
        mean = x.mean(axis=1)
    return np.where(np.isneginf(x).any(axis=1), -np.inf, mean)


def _rates(trajs: List[BeliefTrajectory], horizon: int) -> list:
    """Median over runs of the fitted log-belief slope on t in [T/10, T], per hypothesis."""
    out = []
    S = trajs[0].log_mu.shape[2]
    for s in range(S):
        slopes = []
        for traj in trajs:
            keep = traj.times >= horizon / 10
            y = _mean_log_belief(traj)[keep, s]
            if keep.sum() < 10 or not np.all(np.isfinite(y)):
                continue
            slopes.append(fit_rate(traj.times[keep], y, burn_in=0).slope)
        out.append({"median_slope": _finite(np.median(slopes)) if slopes else None, "fitted_runs": len(slopes)})
    return out


def _reference_rates(cfg: ExperimentConfig, world: WorldModel) -> list:
    """Theoretical decay rates for certain evidence: mean KL (log-linear) and CA divergence (DeGroot)."""
    out = []
    for s in range(cfg.S):
        hyps = [world.hypotheses[i][s] for i in range(cfg.m)]
        kl = float(np.mean([kl_divergence(world.ground_truth[i], h) for i, h in enumerate(hyps)]))
        terms = math.prod(g.K for g in world.ground_truth)
        if terms <= 10**6:
            ca, ca_err, method = ca_divergence(world.ground_truth, hyps), 0.0, "exact"
        else:
            est = ca_divergence_mc(world.ground_truth, hyps, CA_SAMPLES, substream(cfg.seed, TOPOLOGY, s))
            ca, ca_err, method = est.value, est.stderr, "montecarlo"
        out.append(
            {
                "mean_kl": _finite(kl),
                "ca_divergence": _finite(ca),
                "ca_stderr": _finite(ca_err),
                "ca_method": method,
            }
        )
    return out


def _max_excess(a: np.ndarray, b: np.ndarray) -> float:
    """max(a - b), treating -inf - (-inf) as 0."""
    with np.errstate(invalid="ignore"):
        d = a - b
    d = np.where(np.isneginf(a) & np.isneginf(b), 0.0, d)
    return float(np.max(d))


def _regime_summary(cfg, world, results) -> dict:
    by_rule = defaultdict(list)
    limits = {}
    for res in results:
        limits[res["run"]] = res["limits"]
        for rule, traj in res["trajectories"].items():
            by_rule[rule].append((res["run"], traj))
    block = {"rules": {}, "checks": {}}
    for rule in cfg.rules:
        pairs = sorted(by_rule.get(rule.value, []), key=lambda p: p[0])
        if not pairs:
            continue
        runs_ok = [r for r, _ in pairs]
        trajs = [t for _, t in pairs]
        stats = error_stats(trajs, np.stack([limits[r] for r in runs_ok]), cfg.checkpoints)
        idx = [[t.at(c) for c in cfg.checkpoints] for t in trajs]
        network_mean = np.stack([_mean_log_belief(t)[ix] for t, ix in zip(trajs, idx)])  # (N, C, S)
        block["rules"][rule.value] = {
            "runs": runs_ok,
            "error_stats": stats.as_dict(),
            "median_log_belief": _tolist(np.median(network_mean, axis=0)),
            "rates": _rates(trajs, cfg.horizon),
        }
    if limits and all(np.all(np.isinf(v)) for v in limits.values()):
        block["reference_rates"] = _reference_rates(cfg, world)
    ll = dict(by_rule.get(Rule.LOGLINEAR.value, []))
    dg = dict(by_rule.get(Rule.DEGROOT.value, []))
    shared = sorted(set(ll) & set(dg))
    if shared:
        worst = max(_max_excess(ll[r].log_mu, dg[r].log_mu) for r in shared)
        block["checks"]["degroot_dominates_loglinear"] = bool(worst <= 1e-9)
        block["checks"]["dominance_max_violation"] = _finite(max(worst, 0.0))
    block["checks"]["no_nan"] = not any(res["errors"] for res in results)
    return block


def _write_fig5(rows, path: Path) -> None:
    """rows: (t, rule, regime, hypothesis, mean log belief)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "rule", "regime", "hypothesis", "mean_log_belief"])
        for t, rule, regime, s, v in rows:
            w.writerow([t, rule, regime, s, repr(float(v))])


def fig5_rows(trajectories):
    """Average log-beliefs over runs and agents; ``trajectories`` yields (rule, regime, traj)."""
    acc = defaultdict(list)
    for rule, regime, traj in trajectories:
        acc[(rule, regime)].append(traj.log_mu)
    rows = []
    for (rule, regime), stack in sorted(acc.items()):
        x = np.stack(stack)  # (N, n, m, S)
        with np.errstate(invalid="ignore"):
            mean = x.mean(axis=(0, 2))
        times = None
        for r, g, t in trajectories:
            if (r, g) == (rule, regime):
                times = t.times
                break
        for n, t in enumerate(times):
            for s in range(mean.shape[1]):
                rows.append((int(t), rule, regime, s, mean[n, s]))
    return rows


def _manifest(cfg: ExperimentConfig) -> dict:
    text = cfg.source
    return {
        "config": text,
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "seed": cfg.seed,
        "kind": cfg.kind,
        "version": {
            "nbsl": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _prepare_output(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ExperimentError(f"output directory {out} is not writable: {exc.strerror or exc}") from None
    return out


def figure1_curves(R1_values=FIG1_R1, R2_range=FIG1_R2, truth=FIG1_TRUTH, alternative=FIG1_ALTERNATIVE):
    """Normalised belief limits for two hypotheses with idealised evidence.

    Returns rows (R1, R2, mu_theta1, mu_theta2) and, per R1, the R2 interval
    where the alternative is preferred (None when empty).
    """
    gt = CategoricalParams(truth)
    rows, intervals = [], {}
    for R1 in R1_values:
        e1 = EvidenceCounts.idealized(R1, truth)
        preferred = []
        for R2 in range(R2_range[0], R2_range[1] + 1):
            mu = normalized_belief_limits([e1, EvidenceCounts.idealized(R2, alternative)], gt)
            rows.append((R1, R2, float(mu[0]), float(mu[1])))
            if mu[1] > mu[0]:
                preferred.append(R2)
        intervals[R1] = (min(preferred), max(preferred)) if preferred else None
    return rows, intervals


def figure2_curves(pis=FIG2_PIS, grid=FIG2_GRID, truth=FIG2_TRUTH):
    """Rows (R, pi, log asymptotic ULR) for idealised evidence R * (pi, 1 - pi)."""
    gt = CategoricalParams(truth)
    return [
        (R, pi, log_asymptotic_ulr(EvidenceCounts.idealized(R, (pi, 1 - pi)), gt)) for pi in pis for R in grid
    ]


def figure2_checks(rows, truth=FIG2_TRUTH) -> dict:
    curves = defaultdict(list)
    for R, pi, v in rows:
        curves[pi].append((R, v))
    matched = [v for _, v in sorted(curves[truth[0]])]
    top = max(R for R, _, _ in rows)
    return {
        "matched_increasing": bool(np.all(np.diff(matched) > 0)),
        "mismatched_negative_at_max_R": bool(
            all(v < 0 for R, pi, v in rows if R == top and not math.isclose(pi, truth[0]))
        ),
    }


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _run_figure(cfg: ExperimentConfig, out: Path) -> dict:
    if cfg.kind == "figure1":
        rows, intervals = figure1_curves()
        _write_rows(out / "fig1_curves.csv", ["R1", "R2", "mu_theta1", "mu_theta2"], rows)
        widths = [0 if iv is None else iv[1] - iv[0] + 1 for iv in intervals.values()]
        summary = {
            "kind": "figure1",
            "truth": list(FIG1_TRUTH),
            "alternative": list(FIG1_ALTERNATIVE),
            "preferred_intervals": {str(k): None if v is None else list(v) for k, v in intervals.items()},
            "checks": {
                "first_interval_nonempty": widths[0] > 0,
                "intervals_shrink": all(a >= b for a, b in zip(widths, widths[1:])),
            },
        }
    else:
        rows = figure2_curves()
        _write_rows(out / "fig2_curves.csv", ["R", "pi", "log_lambda_tilde"], rows)
        summary = {"kind": "figure2", "truth": list(FIG2_TRUTH), "pis": list(FIG2_PIS), "checks": figure2_checks(rows)}
    return summary


def run_experiment(cfg: ExperimentConfig, out: Optional[Path] = None, workers: Optional[int] = None) -> dict:
    """Execute ``cfg`` and write its artifacts; returns the summary dictionary."""
    out = _prepare_output(Path(out if out is not None else cfg.output))
    _dump(_manifest(cfg), out / "manifest.json")
    if cfg.kind != "simulation":
        summary = _run_figure(cfg, out)
        _dump(summary, out / "summary.json")
        return summary

    world = build_world(cfg)
    topo, matrix = build_network(cfg)
    write_edge_list(topo, out / "topology.txt")
    write_matrix_csv(matrix, out / "mixing.csv")
    labels = [regime_label(s) for s in cfg.evidence]

    tasks = [(cfg, world, matrix, r, n) for r in range(len(cfg.evidence)) for n in range(cfg.runs)]
    workers = workers or cfg.workers or os.cpu_count() or 1
    log.info("running %d tasks on %d workers", len(tasks), workers)
    results = sorted(_execute(tasks, workers), key=lambda res: (res["regime"], res["run"]))

    summary: Dict = {
        "name": cfg.name,
        "seed": cfg.seed,
        "agents": cfg.m,
        "categories": cfg.K,
        "hypotheses": cfg.S,
        "horizon": cfg.horizon,
        "runs": cfg.runs,
        "upsilon": cfg.upsilon,
        "checkpoints": list(cfg.checkpoints),
        "topology": {
            "kind": cfg.topology.kind,
            "edges": len(topo.edges),
            "lambda_bound": _finite(matrix.lambda_bound),
        },
        "regimes": {},
        "failed_runs": [],
        "final": [],
    }
    for r, label in enumerate(labels):
        group = [res for res in results if res["regime"] == r]
        summary["regimes"][label] = _regime_summary(cfg, world, group)
    table_cache = {}
    for res in results:
        label = labels[res["regime"]]
        for rule, msg in sorted(res["errors"].items()):
            summary["failed_runs"].append({"regime": label, "run": res["run"], "rule": rule, "error": msg})
        for rule, traj in sorted(res["trajectories"].items()):
            key = (res["regime"], res["run"])
            if key not in table_cache:
                table_cache = {key: EvidenceTable(res["evidence"])}
            decisions = np.where(
                traj.final.log_mu >= math.log(cfg.upsilon),
                "accept",
                np.where(traj.final.log_mu < -math.log(cfg.upsilon), "reject", "unsure"),
            )
            summary["final"].append(
                {
                    "regime": label,
                    "run": res["run"],
                    "rule": rule,
                    "log_belief": _tolist(traj.final.log_mu),
                    "log_ulr": _tolist(table_cache[key].log_ulr(traj.final.histograms)),
                    "histograms": traj.final.histograms.tolist(),
                    "decisions": decisions.tolist(),
                }
            )

    write_evidence_csv(
        (
            (res["run"], i, s, ev, (labels[res["regime"]],))
            for res in results
            for i, row in enumerate(res["evidence"])
            for s, ev in enumerate(row)
        ),
        out / "evidence.csv",
        extra_header=("regime",),
    )
    write_trajectory_csv(
        (
            (res["run"], traj, (rule, labels[res["regime"]]))
            for res in results
            for rule, traj in sorted(res["trajectories"].items())
        ),
        out / "beliefs.csv",
        extra_header=("rule", "regime"),
    )
    if cfg.export_signals:
        for r, label in enumerate(labels):
            write_signals_csv(
                ((res["run"], res["signals"]) for res in results if res["regime"] == r),
                out / f"signals_{label}.csv",
            )
    _write_fig5(
        fig5_rows(
            [
                (rule, labels[res["regime"]], traj)
                for res in results
                for rule, traj in sorted(res["trajectories"].items())
            ]
        ),
        out / "fig5_beliefs.csv",
    )
    _dump(summary, out / "summary.json")
    return summary


def fig5_from_beliefs(directory) -> Path:
    """Rebuild ``fig5_beliefs.csv`` from an existing ``beliefs.csv``."""
    directory = Path(directory)
    src = directory / "beliefs.csv"
    if not src.exists():
        raise FileNotFoundError(f"{src} not found")
    sums = defaultdict(float)
    counts = defaultdict(int)
    with open(src, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"t", "hypothesis", "log_belief", "rule", "regime"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{src}: missing columns {sorted(missing)}")
        for row in reader:
            key = (row["rule"], row["regime"], int(row["t"]), int(row["hypothesis"]))
            sums[key] += float(row["log_belief"])
            counts[key] += 1
    rows = [(t, rule, regime, s, sums[(rule, regime, t, s)] / counts[(rule, regime, t, s)])
            for rule, regime, t, s in sorted(sums)]
    rows.sort(key=lambda r: (r[1], r[2], r[0], r[3]))
    path = directory / "fig5_beliefs.csv"
    _write_fig5(rows, path)
    return path
