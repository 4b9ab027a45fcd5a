"""Divergences, error statistics and convergence-rate fits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .uncertain_models import CategoricalParams

MAX_EXACT_TERMS = 10**6


def kl_divergence(p: CategoricalParams, q: CategoricalParams) -> float:
    """sum_k p_k log(p_k / q_k) in nats; +inf when q misses mass that p has."""
    if p.K != q.K:
        raise ValueError(f"distributions have different K ({p.K} vs {q.K})")
    pp, qq = p.probs, q.probs
    support = pp > 0
    if np.any(qq[support] == 0):
        return math.inf
    return float(np.sum(pp[support] * np.log(pp[support] / qq[support])))


def _ratio_tables(ground_truths, hypotheses):
    if len(ground_truths) != len(hypotheses) or not ground_truths:
        raise ValueError("need one ground truth and one hypothesis per agent")
    ratios, weights = [], []
    for gt, h in zip(ground_truths, hypotheses):
        if gt.K != h.K:
            raise ValueError("ground truth and hypothesis disagree on K")
        w = gt.probs
        r = np.divide(h.probs, w, out=np.zeros_like(w), where=w > 0)
        ratios.append(r)
        weights.append(w)
    return ratios, weights


def ca_divergence(
    ground_truths: Sequence[CategoricalParams],
    hypotheses: Sequence[CategoricalParams],
    method: str = "exact",
    samples: int = 100_000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Centralised-average divergence of the hypotheses from the ground truths.

    ``-E[log((1/m) sum_i pi_i(k_i) / pi*_i(k_i))]`` with k_i drawn independently
    from pi*_i. ``method="exact"`` enumerates all K^m joint outcomes,
    ``"montecarlo"`` averages over ``samples`` joint draws (see
    :func:`ca_divergence_mc` for the standard error).
    """
    if method == "montecarlo":
        return ca_divergence_mc(ground_truths, hypotheses, samples, rng).value
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    ratios, weights = _ratio_tables(ground_truths, hypotheses)
    m = len(ratios)
    n_terms = math.prod(r.size for r in ratios)
    if n_terms > MAX_EXACT_TERMS:
        raise ValueError(f"exact enumeration needs {n_terms} terms (> {MAX_EXACT_TERMS}); use montecarlo")
    total = np.zeros(())
    joint = np.ones(())
    for i, (r, w) in enumerate(zip(ratios, weights)):
        shape = [1] * m
        shape[i] = r.size
        total = total + r.reshape(shape)
        joint = joint * w.reshape(shape)
    live = joint > 0
    mean_ratio = total[live] / m
    if np.any(mean_ratio == 0):
        return math.inf
    return float(-np.sum(joint[live] * np.log(mean_ratio)))


class DivergenceEstimate(NamedTuple):
    value: float
    stderr: float


def ca_divergence_mc(ground_truths, hypotheses, samples: int = 100_000, rng=None) -> DivergenceEstimate:
    ratios, weights = _ratio_tables(ground_truths, hypotheses)
    if rng is None:
        raise ValueError("Monte Carlo estimation needs an explicit rng")
    m = len(ratios)
    total = np.zeros(samples)
    for r, w in zip(ratios, weights):
        k = np.minimum(np.searchsorted(np.cumsum(w), rng.random(samples), side="right"), w.size - 1)
        total += r[k]
    with np.errstate(divide="ignore"):
        terms = -np.log(total / m)
    if np.any(np.isinf(terms)):
        return DivergenceEstimate(math.inf, math.nan)
    return DivergenceEstimate(float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(samples)))


def _abs_error(log_x: np.ndarray, log_ref: np.ndarray):
    """|x - ref|, relative to ref where ref > 1; returns (errors, normalized mask)."""
    log_x, log_ref = np.broadcast_arrays(np.asarray(log_x, float), np.asarray(log_ref, float))
    norm = log_ref > 0
    with np.errstate(over="ignore", invalid="ignore"):
        rel = np.abs(np.expm1(log_x - log_ref))
        raw = np.abs(np.exp(log_x) - np.exp(log_ref))
    raw = np.where(np.isneginf(log_x) & np.isneginf(log_ref), 0.0, raw)
    err = np.where(norm, rel, raw)
    err = np.where(np.isposinf(log_ref), np.nan, err)
    return err, norm


def centralized_log_limit(log_limits: np.ndarray) -> np.ndarray:
    """(1/m) sum_j log of the asymptotic ULRs, over the agent axis (-2).

    A single zero limit (-inf) dominates; otherwise any infinite limit gives +inf.
    """
    x = np.asarray(log_limits, dtype=float)
    has_neg = np.isneginf(x).any(axis=-2)
    with np.errstate(invalid="ignore"):
        mean = x.mean(axis=-2)
    return np.where(has_neg, -np.inf, mean)


@dataclass
class ErrorStats:
    """Maximum errors per (checkpoint, hypothesis).

    ``*_normalized`` holds the fraction of (run, agent) terms reported
    relative to their reference (reference above 1); NaN marks cells with
    no finite reference.
    """

    checkpoints: np.ndarray
    e_lambda: np.ndarray
    e_con: np.ndarray
    e_cen: np.ndarray
    lambda_normalized: np.ndarray
    con_normalized: np.ndarray
    cen_normalized: np.ndarray

    normalization_rule = "relative |x/ref - 1| where ref > 1, absolute |x - ref| otherwise"

    def as_dict(self) -> dict:
        def clean(a):
            return [[None if math.isnan(v) else float(v) for v in row] for row in a]

        return {
            "checkpoints": [int(t) for t in self.checkpoints],
            "normalization_rule": self.normalization_rule,
            "e_lambda": clean(self.e_lambda),
            "e_con": clean(self.e_con),
            "e_cen": clean(self.e_cen),
            "lambda_normalized_fraction": clean(self.lambda_normalized),
            "con_normalized_fraction": clean(self.con_normalized),
            "cen_normalized_fraction": clean(self.cen_normalized),
        }


def _max_over(err: np.ndarray, axes) -> np.ndarray:
    out = np.full(np.delete(err.shape, axes), np.nan)
    finite = ~np.isnan(err)
    any_ = finite.any(axis=axes)
    with np.errstate(invalid="ignore"):
        mx = np.where(finite, err, -np.inf).max(axis=axes)
    out[any_] = mx[any_]
    return out


def error_stats(trajectories: Sequence, log_limits: np.ndarray, checkpoints: Sequence[int]) -> ErrorStats:
    """Error statistics over Monte Carlo runs.

    ``trajectories`` holds one BeliefTrajectory per run; ``log_limits`` has
    shape (runs, m, S) with the per-agent asymptotic log ULRs of each run.
    """
    limits = np.asarray(log_limits, dtype=float)
    if limits.shape[0] != len(trajectories):
        raise ValueError("need one set of limits per trajectory")
    idx = []
    for traj in trajectories:
        row = []
        for t in checkpoints:
            try:
                row.append(traj.at(t))
            except KeyError:
                raise KeyError(f"checkpoint t={t} missing from trajectory") from None
        idx.append(row)
    mu = np.stack([traj.log_mu[ix] for traj, ix in zip(trajectories, idx)])  # (N, C, m, S)
    ulr = np.stack([traj.log_ulr[ix] for traj, ix in zip(trajectories, idx)])
    N, C, m, S = mu.shape
    lim = limits[:, None, :, :]

    e_l, n_l = _abs_error(ulr, lim)
    top = mu.max(axis=2, keepdims=True)
    shift = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        # max-shifted so that identical agents give their common value exactly
        mean_mu = np.log(np.exp(mu - shift).mean(axis=2, keepdims=True)) + shift
    e_c, n_c = _abs_error(mu, mean_mu)
    cen = centralized_log_limit(limits)[:, None, None, :]
    e_z, n_z = _abs_error(mu, cen)

    def frac(norm, err):
        valid = ~np.isnan(err)
        cnt = valid.sum(axis=(0, 2))
        with np.errstate(invalid="ignore"):
            return np.where(cnt > 0, (norm & valid).sum(axis=(0, 2)) / cnt, np.nan)

    return ErrorStats(
        checkpoints=np.asarray(checkpoints, dtype=np.int64),
        e_lambda=_max_over(e_l, (0, 2)),
        e_con=_max_over(e_c, (0, 2)),
        e_cen=_max_over(e_z, (0, 2)),
        lambda_normalized=frac(n_l, e_l),
        con_normalized=frac(n_c, e_c),
        cen_normalized=frac(n_z, e_z),
    )


@dataclass
class RateFitResult:
    slope: float
    intercept: float
    residual: float
    alpha: Optional[float] = None
    scale: Optional[float] = None


def fit_rate(t, log_belief, model: str = "linear", burn_in: float = 0.1) -> RateFitResult:
    """Least-squares rate of a log-belief curve.

    ``model="linear"`` fits ``a + s t``; ``"linear_plus_log"`` fits
    ``log C + alpha log t + s t``. The first ``burn_in`` fraction of the
    time span is discarded before fitting.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(log_belief, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and log_belief must be matching vectors")
    if t.size < 10:
        raise ValueError(f"need at least 10 points, got {t.size}")
    if np.any(np.diff(t) < 0):
        raise ValueError("t must be increasing")
    if not np.all(np.isfinite(y)):
        raise ValueError("log beliefs must be finite to fit a rate")
    if burn_in:
        keep = t >= t[0] + burn_in * (t[-1] - t[0])
        t, y = t[keep], y[keep]
    if model == "linear":
        X = np.column_stack([np.ones_like(t), t])
    elif model == "linear_plus_log":
        if np.any(t <= 0):
            raise ValueError("the log-term model needs t > 0")
        X = np.column_stack([np.ones_like(t), np.log(t), t])
    else:
        raise ValueError(f"unknown model {model!r}")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise ValueError("singular design: not enough distinct time points")
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    if model == "linear":
        return RateFitResult(float(coef[1]), float(coef[0]), resid)
    return RateFitResult(float(coef[2]), float(coef[0]), resid, alpha=float(coef[1]), scale=float(np.exp(coef[0])))
