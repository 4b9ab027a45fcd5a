"""scikit-learn compatible wrappers.

Prior evidence plays the role of training data: ``fit`` stores the
per-hypothesis evidence counts, and scoring methods take observation data
(histograms for a single agent, signal streams for a network).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .learning import EngineConfig, EvidenceTable, Rule, run
from .network import MixingMatrix
from .signals import WorldModel
from .uncertain_models import CategoricalParams, EvidenceCounts, classify_array


def _evidence_rows(X: np.ndarray, certain: bool):
    if certain:
        return [EvidenceCounts.certain_model(row) for row in X]
    return [EvidenceCounts.finite(row) for row in X]


class UncertainLikelihoodRatioTest(BaseEstimator):
    """Single-agent uncertain likelihood ratio test.

    Parameters
    ----------
    upsilon : float, default=2.0
        Acceptance threshold (> 1); rejection below ``1 / upsilon``.
    certain : bool, default=False
        Treat the rows passed to ``fit`` as exact probability vectors
        instead of evidence counts.

    Attributes
    ----------
    evidence_ : list of EvidenceCounts
        One entry per hypothesis.
    n_categories_ : int
    """

    def __init__(self, upsilon=2.0, certain=False):
        self.upsilon = upsilon
        self.certain = certain

    def fit(self, X, y=None):
        """X : array of shape (n_hypotheses, n_categories)."""
        if not self.upsilon > 1:
            raise ValueError(f"upsilon must exceed 1, got {self.upsilon}")
        X = check_array(X, dtype=float, ensure_min_features=2)
        self.evidence_ = _evidence_rows(X, self.certain)
        self.n_categories_ = X.shape[1]
        self._table = EvidenceTable([self.evidence_])
        return self

    def decision_function(self, X):
        """Log ULR of each histogram (rows of X) under each hypothesis, shape (n_samples, n_hypotheses)."""
        check_is_fitted(self, "evidence_")
        X = check_array(X, dtype=None)
        if X.shape[1] != self.n_categories_:
            raise ValueError(f"expected {self.n_categories_} categories, got {X.shape[1]}")
        if np.any(X < 0) or np.any(np.mod(X, 1) != 0):
            raise ValueError("histograms must hold non-negative integer counts")
        return np.stack([self._table.log_ulr(row[None, :])[0] for row in X.astype(np.int64)])

    def predict(self, X):
        """Outcome strings ``"accept"``, ``"reject"`` or ``"unsure"`` per (sample, hypothesis)."""
        return classify_array(self.decision_function(X), self.upsilon)


class SocialLearner(BaseEstimator):
    """Network of agents running the uncertain-likelihood learning rule.

    Parameters
    ----------
    weights : array-like of shape (m, m)
        Doubly stochastic, symmetric mixing matrix.
    rule : {"loglinear", "degroot"}, default="loglinear"
    upsilon : float, default=2.0
        Threshold used by :meth:`predict`.
    certain : bool, default=False
        Interpret the evidence passed to ``fit`` as exact probabilities.
    record_stride : int, default=1000
        Snapshot spacing used by :meth:`transform`.

    Attributes
    ----------
    mixing_ : MixingMatrix
    evidence_ : list of list of EvidenceCounts, shape (m, n_hypotheses)
    """

    def __init__(self, weights=None, rule="loglinear", upsilon=2.0, certain=False, record_stride=1000):
        self.weights = weights
        self.rule = rule
        self.upsilon = upsilon
        self.certain = certain
        self.record_stride = record_stride

    def fit(self, X, y=None):
        """X : array of shape (m, n_hypotheses, n_categories) with each agent's prior evidence."""
        if self.weights is None:
            raise ValueError("a mixing matrix is required")
        if not self.upsilon > 1:
            raise ValueError(f"upsilon must exceed 1, got {self.upsilon}")
        Rule(self.rule)
        X = check_array(X, dtype=float, allow_nd=True, ensure_2d=False)
        if X.ndim != 3 or X.shape[2] < 2:
            raise ValueError(f"evidence must have shape (m, n_hypotheses, K >= 2), got {X.shape}")
        mixing = self.weights if isinstance(self.weights, MixingMatrix) else MixingMatrix(self.weights)
        if mixing.m != X.shape[0]:
            raise ValueError(f"mixing matrix is {mixing.m}x{mixing.m} but evidence covers {X.shape[0]} agents")
        self.mixing_ = mixing
        self.evidence_ = [_evidence_rows(agent, self.certain) for agent in X]
        self._table = EvidenceTable(self.evidence_)
        self.n_agents_, self.n_hypotheses_, self.n_categories_ = X.shape
        return self

    def _run(self, X, stride):
        check_is_fitted(self, "evidence_")
        X = check_array(X, dtype=None, ensure_min_samples=0)
        if X.shape[1] != self.n_agents_:
            raise ValueError(f"expected signals for {self.n_agents_} agents, got {X.shape[1]}")
        # the engine only needs the world for drawing signals; these are given
        dummy = CategoricalParams(np.full(self.n_categories_, 1.0 / self.n_categories_))
        world = WorldModel((dummy,) * self.n_agents_, ((dummy,),) * self.n_agents_)
        config = EngineConfig(self.rule, X.shape[0], stride)
        return run(world, self.mixing_, self._table, config, signals=X.astype(np.int64))

    def transform(self, X):
        """Recorded log-beliefs for signal streams X of shape (T, m): array (n_snapshots, m, n_hypotheses)."""
        return self._run(X, self.record_stride).log_mu

    def decision_function(self, X):
        """Final log-beliefs after consuming the signal streams X, shape (m, n_hypotheses)."""
        return self._run(X, max(1, np.shape(X)[0])).final.log_mu

    def predict(self, X):
        return classify_array(self.decision_function(X), self.upsilon)
