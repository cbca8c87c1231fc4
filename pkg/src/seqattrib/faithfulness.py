"""Sufficiency and necessity metrics and the multi-method curve evaluation.

Sufficiency: perplexity when only the top-K% most important features are
kept (lower is better). Necessity: perplexity change when the top-K% are
removed (higher is better). Curves average both over a corpus, one point per
K, one curve per method.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    AGGREGATION_MODES,
    AttributionMatrix,
    Instance,
    Mask,
    SaliencyVector,
    aggregate_attribution,
    top_k_features,
)
from .errors import EvaluationError, SeqAttribError
from .explain import ExplainerConfig, explain
from .oracle import Oracle

logger = logging.getLogger(__name__)

DEFAULT_K_GRID = (5, 10, 20, 30, 40, 50)


@dataclass(frozen=True)
class MetricConfig:
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    aggregation: str = "sum"
    explain_target: str = "model_prediction"

    def __post_init__(self):
        grid = tuple(int(k) for k in self.k_grid)
        object.__setattr__(self, "k_grid", grid)
        if not grid:
            raise ValueError("k_grid must be non-empty")
        if any(not 0 < k <= 100 for k in grid):
            raise ValueError("k_grid values must lie in (0, 100]")
        if list(grid) != sorted(set(grid)):
            raise ValueError("k_grid must be sorted ascending and unique")
        if self.aggregation not in AGGREGATION_MODES:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.explain_target not in ("model_prediction", "gold"):
            raise ValueError(f"unknown explain_target {self.explain_target!r}")


@dataclass(frozen=True)
class CurvePoint:
    k: int
    mean_sufficiency_ppl: float
    mean_necessity_delta_ppl: float


@dataclass(frozen=True)
class FaithfulnessCurve:
    method: str
    points: tuple[CurvePoint, ...]
    n_instances: int


@dataclass
class AuditRow:
    instance_id: str
    method: str
    k: int
    sufficiency_ppl: float
    necessity_delta_ppl: float


@dataclass
class EvaluationResult:
    curves: list[FaithfulnessCurve]
    audit: list[AuditRow]
    skipped: list[tuple[str, str, str]] = field(default_factory=list)  # (instance, method, reason)


def perplexity(logprobs) -> float:
    """exp of the negative mean token log-probability."""
    arr = np.asarray(logprobs, dtype=float)
    if arr.size == 0:
        raise ValueError("perplexity of an empty sequence is undefined")
    if not np.all(np.isfinite(arr)) or np.any(arr > 0):
        raise ValueError("logprobs must be finite and <= 0")
    return float(np.exp(-arr.mean()))


def _keep_mask(instance: Instance, kept: set[int]) -> Mask:
    return Mask.from_kept(kept, instance.num_features)


def sufficiency(
    instance: Instance, saliency: SaliencyVector, oracle: Oracle, k_percent: int
) -> float:
    """Perplexity with everything outside the top-K% features masked."""
    kept = top_k_features(saliency, k_percent)
    logprobs = oracle.score_one(instance, _keep_mask(instance, kept))
    return perplexity(logprobs)


def necessity_for_removed(instance: Instance, removed: set[int], oracle: Oracle) -> float:
    """Perplexity change when exactly ``removed`` is masked out."""
    kept = set(range(instance.num_features)) - set(removed)
    masked = oracle.score_one(instance, _keep_mask(instance, kept))
    baseline = oracle.score_one(instance, Mask.ones(instance.num_features))
    return perplexity(masked) - perplexity(baseline)


def necessity(
    instance: Instance, saliency: SaliencyVector, oracle: Oracle, k_percent: int
) -> float:
    """Perplexity increase after masking the top-K% features (rest kept)."""
    return necessity_for_removed(instance, top_k_features(saliency, k_percent), oracle)


def instance_metrics(
    instance: Instance,
    matrix: AttributionMatrix,
    oracle: Oracle,
    metric_config: MetricConfig,
) -> list[tuple[int, float, float]]:
    """(K, sufficiency, necessity) rows for one explained instance."""
    saliency = aggregate_attribution(matrix, metric_config.aggregation)
    rows = []
    for k in metric_config.k_grid:
        rows.append(
            (
                k,
                sufficiency(instance, saliency, oracle, k),
                necessity(instance, saliency, oracle, k),
            )
        )
    return rows


def evaluate_methods(
    corpus: list[Instance],
    methods: list[str],
    explainer_config: ExplainerConfig,
    metric_config: MetricConfig,
    oracle: Oracle,
    oracle_factory=None,
) -> EvaluationResult:
    """Explain every instance with every method and average the metrics.

    ``oracle_factory``, when given, maps an instance to the oracle that
    serves it (used by the toy corpus where each instance has its own
    generating model); otherwise the single ``oracle`` serves everything.
    """
    if not corpus:
        raise EvaluationError("empty corpus")

    audit: list[AuditRow] = []
    skipped: list[tuple[str, str, str]] = []
    curves: list[FaithfulnessCurve] = []

    for method in methods:
        config = replace(explainer_config, method=method)
        per_k_suff: dict[int, list[float]] = {k: [] for k in metric_config.k_grid}
        per_k_nec: dict[int, list[float]] = {k: [] for k in metric_config.k_grid}
        n_ok = 0
        for idx, instance in enumerate(corpus):
            inst_id = instance.metadata.get("id", f"instance-{idx}")
            inst_oracle = oracle_factory(instance) if oracle_factory else oracle
            try:
                matrix = explain(instance, inst_oracle, config)
                rows = instance_metrics(instance, matrix, inst_oracle, metric_config)
            except SeqAttribError as exc:
                logger.warning("skipping %s / %s: %s", inst_id, method, exc)
                skipped.append((inst_id, method, str(exc)))
                continue
            n_ok += 1
            for k, suff, nec in rows:
                per_k_suff[k].append(suff)
                per_k_nec[k].append(nec)
                audit.append(AuditRow(inst_id, method, k, suff, nec))
        if n_ok == 0:
            skipped.append(("*", method, "all instances failed"))
            continue
        points = tuple(
            CurvePoint(
                k,
                float(np.mean(per_k_suff[k])),
                float(np.mean(per_k_nec[k])),
            )
            for k in metric_config.k_grid
        )
        curves.append(FaithfulnessCurve(method=method, points=points, n_instances=n_ok))

    if not curves:
        raise EvaluationError("every instance failed for every method")
    return EvaluationResult(curves=curves, audit=audit, skipped=skipped)


def curves_to_csv(curves: list[FaithfulnessCurve]) -> str:
    lines = ["method,K,mean_sufficiency_ppl,mean_necessity_delta_ppl,n_instances"]
    for curve in curves:
        for pt in curve.points:
            lines.append(
                f"{curve.method},{pt.k},{pt.mean_sufficiency_ppl:.10g},"
                f"{pt.mean_necessity_delta_ppl:.10g},{curve.n_instances}"
            )
    return "\n".join(lines) + "\n"


def audit_to_csv(audit: list[AuditRow]) -> str:
    lines = ["instance_id,method,K,sufficiency_ppl,necessity_delta_ppl"]
    for row in audit:
        lines.append(
            f"{row.instance_id},{row.method},{row.k},"
            f"{row.sufficiency_ppl:.10g},{row.necessity_delta_ppl:.10g}"
        )
    return "\n".join(lines) + "\n"
