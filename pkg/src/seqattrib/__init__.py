"""seqattrib: per-output-token feature attribution for conditional sequence
generators, with sufficiency/necessity faithfulness evaluation."""

__version__ = "0.1.0"

from .core import (
    AttributionMatrix,
    FeatureGroup,
    Instance,
    Mask,
    SaliencyVector,
    aggregate_attribution,
    apply_mask,
    load_instances,
    top_k_features,
)
from .explain import (
    METHODS,
    ExplainerConfig,
    explain,
    explain_attention,
    explain_kernel_shap,
    explain_lerg_l,
    explain_lerg_s,
    explain_lime,
    explain_shapley_exact,
    wls_solve,
)
from .faithfulness import (
    FaithfulnessCurve,
    MetricConfig,
    evaluate_methods,
    necessity,
    perplexity,
    sufficiency,
)
from .oracle import BridgeCapabilities, BridgeOracle, Oracle, ToyOracle, open_bridge_oracle
from .report import render_report
from .toymodel import (
    ToyModelSpec,
    make_toy_corpus,
    make_toy_instance,
    toy_attention,
    toy_generate,
    toy_score,
)

__all__ = [
    "AttributionMatrix",
    "BridgeCapabilities",
    "BridgeOracle",
    "ExplainerConfig",
    "FaithfulnessCurve",
    "FeatureGroup",
    "Instance",
    "Mask",
    "METHODS",
    "MetricConfig",
    "Oracle",
    "SaliencyVector",
    "ToyModelSpec",
    "ToyOracle",
    "aggregate_attribution",
    "apply_mask",
    "evaluate_methods",
    "explain",
    "render_report",
    "explain_attention",
    "explain_kernel_shap",
    "explain_lerg_l",
    "explain_lerg_s",
    "explain_lime",
    "explain_shapley_exact",
    "load_instances",
    "make_toy_corpus",
    "make_toy_instance",
    "necessity",
    "open_bridge_oracle",
    "perplexity",
    "sufficiency",
    "top_k_features",
    "toy_attention",
    "toy_generate",
    "toy_score",
    "wls_solve",
]
