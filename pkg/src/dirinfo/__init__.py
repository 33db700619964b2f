"""Causal influence structure discovery for networks of stochastic processes.

The package has two pipelines sharing one set of structure-learning
algorithms:

* an exact pipeline for small finite-alphabet models: enumerate the joint
  distribution, compute directed-information quantities in closed form, and
  recover the influence graph with provable-correctness guarantees;
* a statistical pipeline for sampled point-process data: fit conditional
  intensity models, estimate causally conditioned entropy rates, and drive
  the same structure-learning algorithms with thresholded estimates.
"""

__version__ = "0.1.0"

from .estimate import (
    EstimatedDIOracle,
    EstimationError,
    FitReport,
    GlmPointProcessModel,
    RateEstimate,
    causal_entropy_rate,
    fit_glm,
    fit_glm_with_report,
    make_estimated_oracle,
    normalized_di_rate,
    select_window_bic,
)
from .exactinfo import (
    EPS_BITS,
    InfoValue,
    ProcessSelector,
    cc_directed_information,
    directed_information,
    is_causal_markov_chain,
    kl_divergence,
    mutual_information,
)
from .graphquery import (
    SeparationVerdict,
    UnrolledDag,
    c_separates,
    d_separates,
    explain_c_separation,
    unroll_dbn,
    unrolled_to_dot,
)
from .model import (
    Alphabet,
    CapacityError,
    ConditionalTable,
    GenerativeModel,
    JointDistribution,
    PositivityReport,
    ProcessPanel,
    Trajectory,
    enumerate_joint,
    load_model,
    marginal_conditional,
    model_from_json,
    model_to_json,
    panel_from_csv,
    panel_to_csv,
    save_model,
    trajectory_probability,
    validate_positivity,
)
from .sim import (
    SimConfig,
    random_generative_model,
    simulate_glm_network,
    six_process_demo_config,
    six_process_demo_parents,
    xor_system,
)
from .structure import (
    BoundedRecoveryResult,
    DIOracle,
    DirectedGraph,
    ExactDIOracle,
    NodeRecoveryDetail,
    QueryRecord,
    RecoveryDiagnosticWarning,
    bounded_recovery,
    causal_markov_boundary,
    di_construct,
    graph_from_json,
    graph_to_dot,
    graph_to_json,
    mgm_construct,
    structure_recovery_bounded,
    verify_generative_model,
)

__all__ = [
    "Alphabet",
    "BoundedRecoveryResult",
    "CapacityError",
    "ConditionalTable",
    "DIOracle",
    "DirectedGraph",
    "EPS_BITS",
    "EstimatedDIOracle",
    "EstimationError",
    "ExactDIOracle",
    "FitReport",
    "GenerativeModel",
    "GlmPointProcessModel",
    "InfoValue",
    "JointDistribution",
    "NodeRecoveryDetail",
    "PositivityReport",
    "ProcessPanel",
    "ProcessSelector",
    "QueryRecord",
    "RateEstimate",
    "RecoveryDiagnosticWarning",
    "SeparationVerdict",
    "SimConfig",
    "Trajectory",
    "UnrolledDag",
    "__version__",
    "bounded_recovery",
    "c_separates",
    "causal_entropy_rate",
    "causal_markov_boundary",
    "cc_directed_information",
    "d_separates",
    "di_construct",
    "directed_information",
    "enumerate_joint",
    "explain_c_separation",
    "fit_glm",
    "fit_glm_with_report",
    "graph_from_json",
    "graph_to_dot",
    "graph_to_json",
    "is_causal_markov_chain",
    "kl_divergence",
    "load_model",
    "make_estimated_oracle",
    "marginal_conditional",
    "mgm_construct",
    "model_from_json",
    "model_to_json",
    "mutual_information",
    "normalized_di_rate",
    "panel_from_csv",
    "panel_to_csv",
    "save_model",
    "select_window_bic",
    "simulate_glm_network",
    "six_process_demo_config",
    "six_process_demo_parents",
    "structure_recovery_bounded",
    "trajectory_probability",
    "unroll_dbn",
    "unrolled_to_dot",
    "validate_positivity",
    "verify_generative_model",
    "xor_system",
]
