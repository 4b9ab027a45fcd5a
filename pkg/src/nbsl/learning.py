"""Synchronous multi-agent belief evolution in the log domain.

Two aggregation rules are supported. The log-linear rule mixes neighbours'
log-beliefs linearly (a weighted geometric mean of beliefs); the DeGroot
rule mixes the beliefs themselves (a weighted arithmetic mean, computed
with a max-shifted log-sum-exp). Both multiply by the agent's own
uncertain likelihood update.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .network import MixingMatrix
from .signals import WorldModel, sample_signals
from .uncertain_models import EvidenceCounts, ObservationHistogram, log_beta_rows

CHUNK = 4096


class Rule(str, enum.Enum):
    LOGLINEAR = "loglinear"
    DEGROOT = "degroot"


class NumericalError(RuntimeError):
    """NaN appeared in the log-beliefs."""


@dataclass(frozen=True)
class EngineConfig:
    rule: Rule = Rule.LOGLINEAR
    horizon: int = 100_000
    record_stride: int = 1000
    record_at: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")
        bad = [t for t in self.record_at if not 0 <= t <= self.horizon]
        if bad:
            raise ValueError(f"record times outside [0, {self.horizon}]: {bad}")

    def record_times(self) -> np.ndarray:
        times = set(range(0, self.horizon + 1, self.record_stride))
        times.update(int(t) for t in self.record_at)
        times.add(self.horizon)
        return np.array(sorted(times), dtype=np.int64)


class EvidenceTable:
    """Per (agent, hypothesis) evidence packed into arrays for vectorised updates."""

    def __init__(self, evidence: Sequence[Sequence[EvidenceCounts]]):
        m = len(evidence)
        if m == 0 or not evidence[0]:
            raise ValueError("evidence must be a non-empty agent x hypothesis table")
        S = len(evidence[0])
        K = evidence[0][0].K
        self.m, self.S, self.K = m, S, K
        self.counts = np.zeros((m, S, K))
        self.totals = np.zeros((m, S))
        self.certain = np.zeros((m, S), dtype=bool)
        self.probs = np.zeros((m, S, K))
        for i, row in enumerate(evidence):
            if len(row) != S:
                raise ValueError(f"agent {i} has {len(row)} hypotheses, expected {S}")
            for s, ev in enumerate(row):
                if ev.K != K:
                    raise ValueError(f"evidence ({i}, {s}) has K = {ev.K}, expected {K}")
                if ev.is_certain:
                    self.certain[i, s] = True
                    self.probs[i, s] = ev.certain.probs
                else:
                    self.counts[i, s] = ev.counts
                    self.totals[i, s] = ev.total
        with np.errstate(divide="ignore"):
            self.log_probs = np.log(self.probs)

    def log_updates(self, signals: np.ndarray, n_prev_k: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Log likelihood updates, shape (C, m, S).

        ``signals`` and ``n_prev_k`` have shape (C, m): the observed category and
        how often it had been seen before; ``t`` (C,) is the round index.
        """
        C, m = signals.shape
        K = self.K
        ai = np.arange(m)[None, :, None]
        si = np.arange(self.S)[None, None, :]
        ki = signals[:, :, None]
        nk = n_prev_k[:, :, None].astype(float)
        tt = t[:, None, None].astype(float)
        # log1p form: the gain is >= 0 and the penalty <= 0 exactly, so vacuous evidence gives 0
        out = np.log1p(self.counts[ai, si, ki] / (nk + 1.0)) - np.log1p(self.totals[None] / (tt + K - 1))
        if self.certain.any():
            base = np.log(tt + K - 1) - np.log(nk + 1.0)
            out = np.where(self.certain[None], base + self.log_probs[ai, si, ki], out)
        return out

    def log_ulr(self, histograms: np.ndarray) -> np.ndarray:
        """Per-agent log ULR of histograms (m, K), shape (m, S)."""
        n = histograms.astype(float)[:, None, :]
        K = self.K
        vacuous = log_beta_rows(n + 1.0) - log_beta_rows(np.ones(K))
        r = self.counts
        finite = log_beta_rows(r + n + 1.0) - log_beta_rows(r + 1.0)
        certain = xlogy(np.broadcast_to(n, self.probs.shape), self.probs).sum(-1)
        return np.where(self.certain, certain, finite) - vacuous


@dataclass
class BeliefState:
    log_mu: np.ndarray
    histograms: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, m: int, S: int, K: int) -> "BeliefState":
        return cls(np.zeros((m, S)), np.zeros((m, K), dtype=np.int64), 0)

    def observation_histograms(self) -> List[ObservationHistogram]:
        return [ObservationHistogram(h) for h in self.histograms]


@dataclass
class BeliefTrajectory:
    rule: Rule
    times: np.ndarray
    log_mu: np.ndarray
    log_ulr: np.ndarray
    histograms: np.ndarray
    final: BeliefState = field(repr=False)

    def at(self, t: int) -> int:
        idx = np.searchsorted(self.times, t)
        if idx >= self.times.size or self.times[idx] != t:
            raise KeyError(f"time {t} was not recorded")
        return int(idx)


def _log_weights(A: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(A)


def _mix_loglinear(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    neg = np.isneginf(x)
    if not neg.any():
        return A @ x
    out = A @ np.where(neg, 0.0, x)
    out[((A > 0).astype(float) @ neg) > 0] = -np.inf
    return out


_SAFE_LOG = -600.0


def _mix_degroot(log_A: np.ndarray, x: np.ndarray, A: Optional[np.ndarray] = None) -> np.ndarray:
    if A is not None:
        # shift each hypothesis column by its network max and use one matmul;
        # rows whose sum falls near the underflow range are redone exactly
        c = x.max(axis=0)
        c = np.where(np.isfinite(c), c, 0.0)
        with np.errstate(divide="ignore", under="ignore"):
            s = A @ np.exp(x - c)
            out = np.log(s) + c
        bad = ~(out - c > _SAFE_LOG)
        if not bad.any():
            return out
        rows = np.flatnonzero(bad.any(axis=1))
        out[rows] = _mix_degroot(log_A[rows], x)
        return out
    z = log_A[:, :, None] + x[None, :, :]
    zmax = z.max(axis=1)
    shift = np.where(np.isfinite(zmax), zmax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(z - shift[:, None, :]).sum(axis=1)) + shift
    return np.where(np.isneginf(zmax), -np.inf, out)


def _chunk_updates(table: EvidenceTable, signals: np.ndarray, hist: np.ndarray, t0: int):
    """Log updates for a block of rounds t0+1 .. t0+C plus histograms after each round."""
    C = signals.shape[0]
    onehot = (signals[:, :, None] == np.arange(table.K)).astype(np.int64)
    after = hist[None] + np.cumsum(onehot, axis=0)
    n_prev_k = np.take_along_axis(after, signals[:, :, None], axis=2)[:, :, 0] - 1
    t = t0 + 1 + np.arange(C)
    return table.log_updates(signals, n_prev_k, t), after


def _check_nan(log_mu: np.ndarray, t: int) -> None:
    if np.isnan(log_mu).any():
        i, s = np.argwhere(np.isnan(log_mu))[0]
        raise NumericalError(f"NaN log-belief at t={t}, agent {i}, hypothesis {s}")


def _draw_round(world: WorldModel, rng: np.random.Generator) -> np.ndarray:
    return np.array([sample_signals(pi, 1, rng)[0] for pi in world.ground_truth], dtype=np.int64)


def step(
    state: BeliefState,
    matrix: MixingMatrix,
    world: WorldModel,
    evidence,
    rule: Rule,
    rng: Optional[np.random.Generator] = None,
    signals: Optional[np.ndarray] = None,
) -> BeliefState:
    """One synchronous round: every agent observes, then mixes last round's beliefs.

    Signals are drawn from ``rng`` unless given explicitly (one category per agent).
    """
    table = evidence if isinstance(evidence, EvidenceTable) else EvidenceTable(evidence)
    m = matrix.m
    if state.log_mu.shape != (m, table.S) or table.m != m:
        raise ValueError("state, evidence and mixing matrix disagree on dimensions")
    if signals is None:
        if rng is None:
            raise ValueError("either rng or signals is required")
        signals = _draw_round(world, rng)
    sig = np.asarray(signals, dtype=np.int64).reshape(1, m)
    log_l, after = _chunk_updates(table, sig, state.histograms, state.t)
    if Rule(rule) is Rule.LOGLINEAR:
        mixed = _mix_loglinear(matrix.weights, state.log_mu)
    else:
        mixed = _mix_degroot(_log_weights(matrix.weights), state.log_mu, matrix.weights)
    new = BeliefState(log_l[0] + mixed, after[-1], state.t + 1)
    _check_nan(new.log_mu, new.t)
    return new


def run(
    world: WorldModel,
    matrix: MixingMatrix,
    evidence,
    config: EngineConfig,
    rng: Optional[np.random.Generator] = None,
    signals: Optional[np.ndarray] = None,
    topology=None,
) -> BeliefTrajectory:
    """Drive ``config.horizon`` rounds and record snapshots.

    ``signals`` (shape (T, m)) fixes the observation streams; otherwise each
    agent's stream is drawn from ``rng`` in agent order.
    """
    table = evidence if isinstance(evidence, EvidenceTable) else EvidenceTable(evidence)
    m, S, K = table.m, table.S, table.K
    if matrix.m != m or world.m != m:
        raise ValueError("world, evidence and mixing matrix disagree on the number of agents")
    if topology is not None and not matrix.respects(topology):
        raise ValueError("mixing matrix puts weight on a non-edge of the topology")
    T = config.horizon
    if signals is None:
        if rng is None:
            raise ValueError("either rng or signals is required")
        signals = np.stack([sample_signals(pi, T, rng) for pi in world.ground_truth], axis=1)
    signals = np.asarray(signals, dtype=np.int64).reshape(T, m)
    if T and (signals.min() < 0 or signals.max() >= K):
        raise ValueError(f"signals must lie in 0..{K - 1}")

    rule = config.rule
    A = matrix.weights
    log_A = _log_weights(A)
    times = config.record_times()
    n_rec = times.size
    rec_mu = np.empty((n_rec, m, S))
    rec_hist = np.empty((n_rec, m, K), dtype=np.int64)

    state = BeliefState.initial(m, S, K)
    x = state.log_mu
    hist = state.histograms
    rec_mu[0], rec_hist[0] = x, hist
    nxt = 1
    for t0 in range(0, T, CHUNK):
        block = signals[t0 : t0 + CHUNK]
        log_l, after = _chunk_updates(table, block, hist, t0)
        for c in range(block.shape[0]):
            if rule is Rule.LOGLINEAR:
                x = log_l[c] + _mix_loglinear(A, x)
            else:
                x = log_l[c] + _mix_degroot(log_A, x, A)
            t = t0 + c + 1
            if nxt < n_rec and times[nxt] == t:
                _check_nan(x, t)
                rec_mu[nxt], rec_hist[nxt] = x, after[c]
                nxt += 1
        hist = after[-1]
    _check_nan(x, T)
    final = BeliefState(x.copy(), hist.copy(), T)
    rec_ulr = np.stack([table.log_ulr(h) for h in rec_hist])
    return BeliefTrajectory(rule, times, rec_mu, rec_ulr, rec_hist, final)


def write_trajectory_csv(rows, path, extra_header: Sequence[str] = ()) -> None:
    """Write ``run, t, agent, hypothesis, log_belief`` rows.

    ``rows`` yields (run, BeliefTrajectory, extra) where ``extra`` is a tuple
    of values appended to each line under ``extra_header``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "t", "agent", "hypothesis", "log_belief", *extra_header])
        for run_idx, traj, extra in rows:
            _, m, S = traj.log_mu.shape
            for n, t in enumerate(traj.times):
                for i in range(m):
                    for s in range(S):
                        w.writerow([run_idx, int(t), i, s, repr(float(traj.log_mu[n, i, s])), *extra])
