import numpy as np
import pytest

from seqattrib import FeatureGroup, Instance, ToyModelSpec, ToyOracle


@pytest.fixture
def worked_spec():
    """d=2, V=2, zero bias, W[0]=[1,0], W[1]=[0,1]: Shapley of output 'A' is
    (+0.5, -0.5)."""
    return ToyModelSpec(
        vocab=("A", "B"),
        weights=np.array([[[1.0, 0.0], [0.0, 1.0]]]),
        biases=np.array([[0.0, 0.0]]),
    )


@pytest.fixture
def worked_instance():
    return Instance(
        input_tokens=("x0", "x1"),
        features=(FeatureGroup("f0", ((0, 1),)), FeatureGroup("f1", ((1, 2),))),
        output_tokens=("A",),
        metadata={"id": "worked"},
    )


@pytest.fixture
def worked_oracle(worked_spec):
    return ToyOracle(spec=worked_spec)


def make_instance(d: int, output_tokens=("A",)) -> Instance:
    return Instance(
        input_tokens=tuple(f"x{i}" for i in range(d)),
        features=tuple(FeatureGroup(f"f{i}", ((i, i + 1),)) for i in range(d)),
        output_tokens=tuple(output_tokens),
    )
