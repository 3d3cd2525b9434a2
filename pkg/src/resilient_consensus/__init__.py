"""Resilient average consensus with detection and compensation of misbehaving nodes."""

from .adversary import (
    DeterministicErrorModel,
    GmmSpec,
    Misbehavior,
    StochasticErrorModel,
    Window,
    error_cdf,
    gmm_cdf,
    sample_error,
)
from .analysis import (
    VarianceBoundInputs,
    attack_compensation_distance,
    consensus_error,
    deviation_bound,
    variance_bound,
    wasserstein_1d,
    wasserstein_bound_gmm,
)
from .config import ExperimentConfig, load
from .engine import (
    AssumptionError,
    BatchSummary,
    ConfigError,
    ExperimentSummary,
    GraphSpec,
    RunConfig,
    detect_convergence,
    run_monte_carlo,
    run_single,
    sample_link_mask,
)
from .graph import Topology, WeightMatrix, build_weights, connected_erdos_renyi, generate_erdos_renyi, is_connected
from .msr import MsrParams, step_wmsr

__version__ = "0.1.0"
