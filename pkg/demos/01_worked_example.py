"""Exact Shapley values on a two-feature toy model, worked by hand.

The toy model emits one output token whose logit for "A" is 1.0 when
feature f0 is present and whose logit for "B" is 1.0 when f1 is present.
Enumerating all four coalitions gives phi(f0) = +0.5 and phi(f1) = -0.5
for the output token "A".
"""

import numpy as np

from seqattrib import (
    ExplainerConfig,
    Instance,
    FeatureGroup,
    Mask,
    ToyOracle,
    explain,
)
from seqattrib.toymodel import ToyModelSpec

spec = ToyModelSpec(
    vocab=("A", "B"),
    weights=np.array([[[1.0, 0.0], [0.0, 1.0]]]),
    biases=np.array([[0.0, 0.0]]),
)
instance = Instance(
    input_tokens=("x0", "x1"),
    features=(FeatureGroup("f0", ((0, 1),)), FeatureGroup("f1", ((1, 2),))),
    output_tokens=("A",),
)

with ToyOracle(spec) as oracle:
    matrix = explain(instance, oracle, ExplainerConfig(method="shapley_exact", seed=0))
    v_full = oracle.score_one(instance, Mask.ones(2))[0]
    v_empty = oracle.score_one(instance, Mask.zeros(2))[0]

print("method:", matrix.method)
for feature, phi in zip(instance.features, matrix.phi[:, 0]):
    print(f"  {feature.name}: {phi:+.6f}")

# Efficiency: contributions sum to v(full) - v(empty).
print("sum(phi) =", matrix.phi[:, 0].sum(), " v(1)-v(0) =", v_full - v_empty)
