"""Two-agent distributed function estimation with heterogeneous features.

Each agent regresses in its own finite-dimensional kernel space; the
two spaces combine into a fusion space with the sum kernel, estimates
are uploaded as coefficient vectors, fused by a closed-form
two-coefficient optimizer, and downloaded back through operator square
roots; no data points ever cross between agents.
"""

from .exceptions import (
    BindingError,
    ConstructionError,
    IndependenceError,
    InternalConsistencyError,
    KernelFusionError,
    NotInAgentSpaceError,
    NotPositiveError,
    StageError,
)
from .features import (
    AgentFunction,
    Dataset,
    FeaturePrimitive,
    FeatureSet,
    IndependenceReport,
    cosine,
    eval_feature,
    eval_function,
    exponential,
    feature_from_descriptor,
    feature_to_descriptor,
    gram_matrix,
    inner_product,
    kernel_eval,
    monomial,
    quasi_uniform_probes,
    sine,
    verify_independence,
)
from .fusion import (
    FusionBasis,
    FusionFunction,
    OperatorMatrix,
    SpanReport,
    basis_digest,
    basis_from_export,
    build_fusion_basis,
    convert_to_agent,
    download,
    export_operators,
    fusion_kernel,
    h_inner_product,
    kernel_sections_span,
    operator_matrix,
    projection_matrix,
    split_components,
    sqrt_operator,
    upload,
    write_operators,
)
from .optimizer import (
    DissimilarityBasis,
    FusionResult,
    dissimilarity,
    fuse,
    fusion_objective,
    kernel_section_basis,
)
from .pipeline import (
    AgentConfig,
    EvaluationConfig,
    ExperimentConfig,
    FusionConfig,
    MetricsReport,
    TransferMessage,
    TrueFunctionConfig,
    agent_fit,
    config_from_dict,
    config_to_dict,
    default_config,
    emit_plot_data,
    generate_data,
    load_config,
    read_messages,
    replay,
    resolve_true_function,
    run_pipeline,
    save_config,
)
from .regression import (
    KernelSpaceRegressor,
    RegressionProblem,
    RegressionSolution,
    solve_centralized,
    solve_dual,
    solve_primal_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "AgentFunction",
    "BindingError",
    "ConstructionError",
    "Dataset",
    "DissimilarityBasis",
    "EvaluationConfig",
    "ExperimentConfig",
    "FeaturePrimitive",
    "FeatureSet",
    "FusionBasis",
    "FusionConfig",
    "FusionFunction",
    "FusionResult",
    "IndependenceError",
    "IndependenceReport",
    "InternalConsistencyError",
    "KernelFusionError",
    "KernelSpaceRegressor",
    "MetricsReport",
    "NotInAgentSpaceError",
    "NotPositiveError",
    "OperatorMatrix",
    "RegressionProblem",
    "RegressionSolution",
    "SpanReport",
    "StageError",
    "TransferMessage",
    "TrueFunctionConfig",
    "agent_fit",
    "config_from_dict",
    "config_to_dict",
    "basis_digest",
    "basis_from_export",
    "build_fusion_basis",
    "convert_to_agent",
    "cosine",
    "default_config",
    "dissimilarity",
    "download",
    "emit_plot_data",
    "eval_feature",
    "eval_function",
    "exponential",
    "export_operators",
    "feature_from_descriptor",
    "feature_to_descriptor",
    "fuse",
    "fusion_kernel",
    "fusion_objective",
    "generate_data",
    "gram_matrix",
    "h_inner_product",
    "inner_product",
    "kernel_eval",
    "kernel_section_basis",
    "kernel_sections_span",
    "load_config",
    "read_messages",
    "monomial",
    "operator_matrix",
    "projection_matrix",
    "quasi_uniform_probes",
    "replay",
    "resolve_true_function",
    "run_pipeline",
    "save_config",
    "sine",
    "solve_centralized",
    "solve_dual",
    "solve_primal_oracle",
    "split_components",
    "sqrt_operator",
    "upload",
    "verify_independence",
    "write_operators",
]
