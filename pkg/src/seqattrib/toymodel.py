"""Closed-form conditional sequence model used as a hermetic test bed.

The model scores output symbol ``y`` at step ``t`` with the logit
``b_t[y] + sum_{i in S} W_t[i][y]`` where ``S`` is the set of present
(unmasked) features. Softmax over the vocabulary turns logits into token
probabilities, so the value function is nonlinear in the features yet exact
and cheap: enumerating all 2^d coalitions gives ground-truth Shapley values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import FeatureGroup, Instance
from .errors import VocabularyError

TOY_MASK_TOKEN = "<mask>"


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class ToyModelSpec:
    """Weights of the toy model: one (d, V) matrix and (V,) bias per step."""

    vocab: tuple[str, ...]
    weights: np.ndarray  # shape (T, d, V)
    biases: np.ndarray  # shape (T, V)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        biases = np.asarray(self.biases, dtype=float)
        weights.setflags(write=False)
        biases.setflags(write=False)
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        if len(self.vocab) < 2:
            raise ValueError("toy vocab needs at least 2 symbols")
        if weights.ndim != 3 or biases.ndim != 2:
            raise ValueError("weights must be (T, d, V), biases (T, V)")
        if weights.shape[0] != biases.shape[0] or weights.shape[2] != len(self.vocab):
            raise ValueError("weight/bias/vocab shapes disagree")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise ValueError("toy weights must be finite")

    @property
    def num_steps(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]

    def vocab_index(self, token: str) -> int:
        try:
            return self.vocab.index(token)
        except ValueError:
            raise VocabularyError(f"unknown output symbol {token!r}") from None

    def to_dict(self) -> dict:
        return {
            "vocab": list(self.vocab),
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ToyModelSpec":
        return cls(
            vocab=tuple(data["vocab"]),
            weights=np.asarray(data["weights"], dtype=float),
            biases=np.asarray(data["biases"], dtype=float),
        )

    def save(self, path) -> None:
        from pathlib import Path

        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ToyModelSpec":
        from pathlib import Path

        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def toy_score(
    spec: ToyModelSpec,
    present: Iterable[int],
    output_tokens: Sequence[str],
) -> np.ndarray:
    """Teacher-forced log-probabilities of ``output_tokens`` given coalition
    ``present``. Masked features contribute nothing to the logits."""
    present = sorted(set(int(i) for i in present))
    indices = [spec.vocab_index(tok) for tok in output_tokens]
    out = np.empty(len(indices), dtype=float)
    for t, y in enumerate(indices):
        step = t % spec.num_steps if t >= spec.num_steps else t
        logits = spec.biases[step].copy()
        if present:
            logits += spec.weights[step][present].sum(axis=0)
        out[t] = _log_softmax(logits)[y]
    return out


def toy_attention(spec: ToyModelSpec, output_tokens: Sequence[str]) -> np.ndarray:
    """Row-stochastic (T, d) attention surrogate: softmax over features of
    each feature's logit contribution to the realized output symbol."""
    indices = [spec.vocab_index(tok) for tok in output_tokens]
    rows = []
    for t, y in enumerate(indices):
        step = t % spec.num_steps if t >= spec.num_steps else t
        contrib = spec.weights[step][:, y]
        shifted = contrib - contrib.max()
        expd = np.exp(shifted)
        rows.append(expd / expd.sum())
    return np.asarray(rows)


def toy_generate(seed: int, d: int, T: int, V: int) -> ToyModelSpec:
    """Deterministically draw a toy spec with weights uniform in [-2, 2]."""
    if min(d, T, V) < 1:
        raise ValueError("d, T, V must all be >= 1")
    if V < 2:
        raise ValueError("V must be >= 2")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-2.0, 2.0, size=(T, d, V))
    biases = rng.uniform(-2.0, 2.0, size=(T, V))
    vocab = tuple(f"y{j}" for j in range(V))
    return ToyModelSpec(vocab=vocab, weights=weights, biases=biases)


def toy_greedy_decode(spec: ToyModelSpec, present: Iterable[int] | None = None) -> list[str]:
    """Argmax output symbol at each step with the given coalition present
    (defaults to all features). Used only to build fixture instances."""
    present = (
        list(range(spec.num_features)) if present is None else sorted(set(present))
    )
    out = []
    for t in range(spec.num_steps):
        logits = spec.biases[t].copy()
        if present:
            logits += spec.weights[t][present].sum(axis=0)
        out.append(spec.vocab[int(np.argmax(logits))])
    return out


def make_toy_instance(spec: ToyModelSpec, seed: int, name: str = "toy") -> Instance:
    """Build the one-token-per-feature instance convention the toy bridge
    understands: input token i carries feature i."""
    d = spec.num_features
    output = toy_greedy_decode(spec)
    return Instance(
        input_tokens=tuple(f"x{i}" for i in range(d)),
        features=tuple(
            FeatureGroup(name=f"f{i}", spans=((i, i + 1),)) for i in range(d)
        ),
        output_tokens=tuple(output),
        metadata={
            "id": name,
            "toy_seed": str(seed),
            "toy_d": str(d),
            "toy_T": str(spec.num_steps),
            "toy_V": str(len(spec.vocab)),
        },
    )


def spec_for_instance(instance: Instance) -> ToyModelSpec:
    """Reconstruct the generating spec from instance metadata."""
    meta = instance.metadata
    try:
        seed = int(meta["toy_seed"])
        d = int(meta["toy_d"])
        T = int(meta["toy_T"])
        V = int(meta["toy_V"])
    except KeyError as exc:
        raise VocabularyError(
            f"instance metadata lacks toy parameters ({exc})"
        ) from None
    return toy_generate(seed, d, T, V)


def make_toy_corpus(
    seed: int = 42,
    n: int = 20,
    d_range: tuple[int, int] = (2, 6),
    T_range: tuple[int, int] = (1, 4),
    V: int = 4,
) -> list[Instance]:
    """The bundled deterministic evaluation corpus: ``n`` instances whose
    generating specs derive from ``seed``."""
    rng = np.random.default_rng(seed)
    corpus = []
    for j in range(n):
        d = int(rng.integers(d_range[0], d_range[1] + 1))
        T = int(rng.integers(T_range[0], T_range[1] + 1))
        inst_seed = int(rng.integers(0, 2**31 - 1))
        spec = toy_generate(inst_seed, d, T, V)
        corpus.append(make_toy_instance(spec, inst_seed, name=f"toy-{seed}-{j:02d}"))
    return corpus
