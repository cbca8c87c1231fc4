"""Domain types, mask algebra, attribution aggregation and top-K selection.

These are the value types shared by every explainer and metric. All of them
are immutable after construction and safe to share between workers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError

AGGREGATION_MODES = ("sum", "mean", "sum_positive")


@dataclass(frozen=True)
class FeatureGroup:
    """A named group of input token spans treated as one feature."""

    name: str
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        spans = tuple((int(a), int(b)) for a, b in self.spans)
        object.__setattr__(self, "spans", spans)
        if not spans:
            raise ValueError(f"feature {self.name!r} has no spans")
        for start, end in spans:
            if start >= end:
                raise ValueError(
                    f"feature {self.name!r} has malformed span [{start}, {end})"
                )

    def token_indices(self) -> list[int]:
        out: list[int] = []
        for start, end in self.spans:
            out.extend(range(start, end))
        return out


@dataclass(frozen=True)
class Instance:
    """One explanation unit: grouped input tokens plus the output sequence
    whose per-token probabilities are being attributed."""

    input_tokens: tuple[str, ...]
    features: tuple[FeatureGroup, ...]
    output_tokens: tuple[str, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "input_tokens", tuple(self.input_tokens))
        object.__setattr__(self, "output_tokens", tuple(self.output_tokens))
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ValueError("instance needs at least one feature")
        if not self.output_tokens:
            raise ValueError("instance needs at least one output token")
        n = len(self.input_tokens)
        seen: set[int] = set()
        for group in self.features:
            for idx in group.token_indices():
                if not 0 <= idx < n:
                    raise ValueError(
                        f"feature {group.name!r} references token {idx}, "
                        f"input has {n} tokens"
                    )
                if idx in seen:
                    raise ValueError(
                        f"feature spans overlap at token index {idx}"
                    )
                seen.add(idx)

    @property
    def num_features(self) -> int:
        return len(self.features)

    @property
    def num_output_tokens(self) -> int:
        return len(self.output_tokens)

    def digest(self) -> str:
        """Stable content hash used as the oracle cache namespace."""
        payload = json.dumps(
            {
                "input_tokens": list(self.input_tokens),
                "features": [
                    {"name": g.name, "spans": [list(s) for s in g.spans]}
                    for g in self.features
                ],
                "output_tokens": list(self.output_tokens),
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "input_tokens": list(self.input_tokens),
            "features": [
                {"name": g.name, "spans": [list(s) for s in g.spans]}
                for g in self.features
            ],
            "output_tokens": list(self.output_tokens),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        features = tuple(
            FeatureGroup(f["name"], tuple(tuple(s) for s in f["spans"]))
            for f in data["features"]
        )
        return cls(
            input_tokens=tuple(data["input_tokens"]),
            features=features,
            output_tokens=tuple(data["output_tokens"]),
            metadata=dict(data.get("metadata", {})),
        )


@dataclass(frozen=True)
class Mask:
    """Binary feature-inclusion vector: 1 keeps a feature, 0 masks it."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("mask bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_kept(cls, kept: Iterable[int], d: int) -> "Mask":
        kept_set = set(kept)
        return cls(tuple(1 if i in kept_set else 0 for i in range(d)))

    @classmethod
    def ones(cls, d: int) -> "Mask":
        return cls((1,) * d)

    @classmethod
    def zeros(cls, d: int) -> "Mask":
        return cls((0,) * d)

    def kept(self) -> frozenset[int]:
        return frozenset(i for i, b in enumerate(self.bits) if b)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class AttributionMatrix:
    """Importance of feature i for output token t, for every (i, t)."""

    phi: np.ndarray  # shape (d, T)
    method: str
    seed: int

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        if phi.ndim != 2:
            raise DimensionError(f"phi must be 2-D, got shape {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise DimensionError("phi contains non-finite entries")

    @property
    def num_features(self) -> int:
        return self.phi.shape[0]

    @property
    def num_output_tokens(self) -> int:
        return self.phi.shape[1]

    def to_dict(self, instance: Instance | None = None) -> dict:
        out = {
            "method": self.method,
            "seed": self.seed,
            "phi": self.phi.tolist(),
        }
        if instance is not None:
            out["features"] = [g.name for g in instance.features]
            out["output_tokens"] = list(instance.output_tokens)
        return out


@dataclass(frozen=True)
class SaliencyVector:
    """Per-feature ranking scores obtained by aggregating over output tokens."""

    scores: np.ndarray
    aggregation: str

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        if scores.ndim != 1:
            raise DimensionError("saliency scores must be 1-D")
        if not np.all(np.isfinite(scores)):
            raise DimensionError("saliency scores contain non-finite entries")
        if self.aggregation not in AGGREGATION_MODES:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")


def apply_mask(instance: Instance, mask: Mask, mask_token: str) -> list[str]:
    """Materialize a perturbed input: tokens of masked-out features are
    replaced by ``mask_token``, everything else is untouched."""
    if len(mask) != instance.num_features:
        raise DimensionError(
            f"mask length {len(mask)} != feature count {instance.num_features}"
        )
    tokens = list(instance.input_tokens)
    for bit, group in zip(mask.bits, instance.features):
        if bit:
            continue
        for idx in group.token_indices():
            tokens[idx] = mask_token
    return tokens


def aggregate_attribution(matrix: AttributionMatrix, mode: str = "sum") -> SaliencyVector:
    """Collapse a (d, T) attribution matrix into one score per feature."""
    phi = matrix.phi
    if mode == "sum":
        scores = phi.sum(axis=1)
    elif mode == "mean":
        scores = phi.mean(axis=1)
    elif mode == "sum_positive":
        scores = np.clip(phi, 0.0, None).sum(axis=1)
    else:
        raise ValueError(f"unknown aggregation {mode!r}")
    return SaliencyVector(scores=scores, aggregation=mode)


def top_k_features(saliency: SaliencyVector, k_percent: int) -> set[int]:
    """Indices of the ceil(k_percent% of d) highest-scoring features.

    Ties break toward the lower index so repeated runs select identically.
    """
    if not 0 <= k_percent <= 100:
        raise ValueError(f"k_percent must be in [0, 100], got {k_percent}")
    d = len(saliency.scores)
    count = math.ceil(k_percent / 100.0 * d)
    if count == 0:
        return set()
    # stable sort on (-score, index) gives the lower-index tie rule
    order = sorted(range(d), key=lambda i: (-saliency.scores[i], i))
    return set(order[:count])


def load_instances(path) -> list[Instance]:
    """Read one instance (JSON object) or a corpus (JSON lines) from a file."""
    from pathlib import Path

    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return []
    if text.startswith("["):
        return [Instance.from_dict(d) for d in json.loads(text)]
    instances = []
    # one JSON object possibly pretty-printed, or JSON-lines
    try:
        instances.append(Instance.from_dict(json.loads(text)))
        return instances
    except json.JSONDecodeError:
        pass
    for line in text.splitlines():
        line = line.strip()
        if line:
            instances.append(Instance.from_dict(json.loads(line)))
    return instances
