"""Private signal streams and prior evidence generation."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .uncertain_models import CategoricalParams, EvidenceCounts

# Purpose tags for sub-stream derivation; values are part of the reproducibility contract.
SIGNALS = 1
EVIDENCE = 2
TOPOLOGY = 3


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (run, agent, purpose, ...) key.

    Keys are hashed by ``SeedSequence`` so streams for one key never depend
    on how many other keys exist.
    """
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)))
    )


class Regime(str, enum.Enum):
    LOW = "low"
    HIGH = "high"
    INFINITE = "infinite"
    RANGE = "range"


class Style(str, enum.Enum):
    SAMPLED = "sampled"
    IDEALIZED = "idealized"


REGIME_RANGES = {Regime.LOW: (0, 100), Regime.HIGH: (1000, 10000)}


@dataclass(frozen=True)
class EvidenceSpec:
    regime: Regime
    style: Style = Style.SAMPLED
    lo: Optional[int] = None
    hi: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "style", Style(self.style))
        if self.regime is Regime.RANGE:
            if self.lo is None or self.hi is None:
                raise ValueError("an explicit evidence range needs lo and hi")
            if not 0 <= self.lo <= self.hi:
                raise ValueError(f"invalid evidence range [{self.lo}, {self.hi}]")
        elif self.lo is not None or self.hi is not None:
            raise ValueError(f"regime {self.regime.value!r} has a fixed range; drop lo/hi")

    @classmethod
    def explicit(cls, lo: int, hi: int, style=Style.SAMPLED) -> "EvidenceSpec":
        return cls(Regime.RANGE, style, lo, hi)

    @property
    def bounds(self) -> Optional[tuple]:
        if self.regime is Regime.INFINITE:
            return None
        if self.regime is Regime.RANGE:
            return (self.lo, self.hi)
        return REGIME_RANGES[self.regime]


@dataclass(frozen=True)
class WorldModel:
    """Per-agent ground truth and per-agent hypothesis distributions."""

    ground_truth: tuple
    hypotheses: tuple

    def __post_init__(self):
        gt = tuple(self.ground_truth)
        hyp = tuple(tuple(h) for h in self.hypotheses)
        if len(gt) != len(hyp) or not gt:
            raise ValueError("need one ground truth and one hypothesis list per agent")
        S = {len(h) for h in hyp}
        if len(S) != 1 or 0 in S:
            raise ValueError("every agent needs the same, non-zero number of hypotheses")
        for i, (truth, hs) in enumerate(zip(gt, hyp)):
            if any(h.K != truth.K for h in hs):
                raise ValueError(f"agent {i}: hypotheses and ground truth disagree on K")
        object.__setattr__(self, "ground_truth", gt)
        object.__setattr__(self, "hypotheses", hyp)

    @classmethod
    def shared(cls, hypotheses: Sequence, truth_index: int, m: int) -> "WorldModel":
        """Every agent uses the same hypothesis set; the truth is one of them."""
        hs = tuple(h if isinstance(h, CategoricalParams) else CategoricalParams(h) for h in hypotheses)
        if not 0 <= truth_index < len(hs):
            raise ValueError(f"ground truth index {truth_index} outside hypothesis set")
        return cls((hs[truth_index],) * m, (hs,) * m)

    @property
    def m(self) -> int:
        return len(self.ground_truth)

    @property
    def S(self) -> int:
        return len(self.hypotheses[0])

    @property
    def K(self) -> int:
        return self.ground_truth[0].K


def sample_signal(pi_star: CategoricalParams, rng: np.random.Generator) -> int:
    return int(sample_signals(pi_star, 1, rng)[0])


def sample_signals(pi_star: CategoricalParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` i.i.d. categories by inverse CDF; one uniform draw per signal."""
    cdf = np.cumsum(pi_star.probs)
    u = rng.random(size)
    k = np.searchsorted(cdf, u, side="right")
    return np.minimum(k, pi_star.K - 1)


def generate_evidence(
    pi_theta: CategoricalParams, spec: EvidenceSpec, rng: np.random.Generator
) -> EvidenceCounts:
    if spec.regime is Regime.INFINITE:
        return EvidenceCounts.certain_model(pi_theta)
    lo, hi = spec.bounds
    R = int(rng.integers(lo, hi + 1))
    if spec.style is Style.IDEALIZED:
        return EvidenceCounts.idealized(R, pi_theta)
    return EvidenceCounts.finite(rng.multinomial(R, pi_theta.probs).astype(float))


def world_evidence(
    world: WorldModel, spec: EvidenceSpec, master_seed: int, run: int
) -> List[List[EvidenceCounts]]:
    """Evidence for every (agent, hypothesis) pair of one Monte Carlo run."""
    return [
        [
            generate_evidence(h, spec, substream(master_seed, run, i, EVIDENCE, s))
            for s, h in enumerate(world.hypotheses[i])
        ]
        for i in range(world.m)
    ]


def world_signals(world: WorldModel, horizon: int, master_seed: int, run: int) -> np.ndarray:
    """Signals of every agent for rounds 1..horizon, shape (horizon, m).

    A longer horizon extends each agent's stream without changing its prefix.
    """
    out = np.empty((horizon, world.m), dtype=np.int64)
    for i, truth in enumerate(world.ground_truth):
        out[:, i] = sample_signals(truth, horizon, substream(master_seed, run, i, SIGNALS))
    return out


def write_evidence_csv(rows, path, extra_header: Sequence[str] = ()) -> None:
    """Write ``run, agent, hypothesis, k, r_k`` rows; certain models write r_k = inf.

    ``rows`` yields (run, agent, hypothesis, EvidenceCounts) or, with
    ``extra_header``, (run, agent, hypothesis, EvidenceCounts, extra).
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "agent", "hypothesis", "k", "r_k", *extra_header])
        for row in rows:
            run, agent, hyp, ev = row[:4]
            extra = row[4] if len(row) > 4 else ()
            for k in range(ev.K):
                w.writerow([run, agent, hyp, k, "inf" if ev.is_certain else repr(float(ev.counts[k])), *extra])


def write_signals_csv(signals_by_run, path) -> None:
    """``signals_by_run`` yields (run, signals) with signals of shape (T, m); t starts at 1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "agent", "t", "omega"])
        for run, sig in signals_by_run:
            T, m = sig.shape
            for i in range(m):
                for t in range(T):
                    w.writerow([run, i, t + 1, int(sig[t, i])])
