"""Non-Bayesian social learning with uncertain (finite-evidence) models."""
__version__ = "0.1.0"

from .analysis import ErrorStats, RateFitResult, ca_divergence, ca_divergence_mc, error_stats, fit_rate, kl_divergence
from .estimators import SocialLearner, UncertainLikelihoodRatioTest
from .learning import BeliefState, BeliefTrajectory, EngineConfig, EvidenceTable, NumericalError, Rule, run, step
from .network import (
    MixingMatrix,
    RadiusTooSmallError,
    Topology,
    complete_graph,
    consensus_gap,
    lazy_metropolis,
    random_geometric_graph,
    ring_graph,
    uniform_mixing,
)
from .signals import (
    EvidenceSpec,
    Regime,
    Style,
    WorldModel,
    generate_evidence,
    sample_signal,
    sample_signals,
    world_evidence,
    world_signals,
)
from .uncertain_models import (
    CategoricalParams,
    EvidenceCounts,
    ObservationHistogram,
    UlrOutcome,
    UlrTestOutcome,
    classify_array,
    dirichlet_log_pdf,
    limit_log_ulr,
    log_asymptotic_ulr,
    log_beta,
    log_likelihood_update,
    log_posterior_predictive,
    log_ulr,
    normalized_belief_limits,
    ulrt_classify,
)
