"""The attribution methods, all returning a (d, T) AttributionMatrix.

Every method treats each output token as one prediction and scores input
features against the value function v_t(S) = log p(y_t | y_<t, x(S)), served
by an oracle. Perturbation-based methods batch every coalition they need into
as few oracle calls as possible; the oracle's cache removes duplicates.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import AttributionMatrix, Instance, Mask
from .errors import CapabilityError, ConditioningError
from .oracle import Oracle

logger = logging.getLogger(__name__)

METHODS = ("lime", "shapley_exact", "kernel_shap", "lerg_l", "lerg_s", "attention")


@dataclass(frozen=True)
class ExplainerConfig:
    method: str = "lerg_s"
    n_samples: int = 1000
    kernel_width: float = 0.75
    ridge_lambda: float = 1e-6
    seed: int = 0
    d_max_exact: int = 12

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.kernel_width <= 0:
            raise ValueError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")


def wls_solve(
    design: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    equality_constraints: list[tuple[np.ndarray, float]] | None = None,
) -> np.ndarray:
    """Weighted least squares with linear equality constraints.

    Constraints (a, c) meaning a . beta = c are eliminated by parameterizing
    beta = beta_p + N gamma with N a nullspace basis of the constraint rows,
    then the reduced system is solved by SVD. Raises ConditioningError when
    the reduced system is rank deficient.
    """
    design = np.asarray(design, dtype=float)
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    n, p = design.shape

    if equality_constraints:
        A = np.stack([np.asarray(a, dtype=float) for a, _ in equality_constraints])
        c = np.asarray([v for _, v in equality_constraints], dtype=float)
        beta_p, _, rank_a, _ = np.linalg.lstsq(A, c, rcond=None)
        if not np.allclose(A @ beta_p, c, atol=1e-8):
            raise ConditioningError("equality constraints are inconsistent")
        # nullspace of A via SVD
        _, s, vh = np.linalg.svd(A)
        tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        n_rank = int((s > tol).sum())
        N = vh[n_rank:].T  # (p, p - rank)
    else:
        beta_p = np.zeros(p)
        N = np.eye(p)

    p_red = N.shape[1]
    if p_red == 0:
        return beta_p
    if n < p_red:
        raise ConditioningError(
            f"underdetermined system: {n} rows for {p_red} free parameters"
        )

    sqrt_w = np.sqrt(weights)
    M = sqrt_w[:, None] * (design @ N)
    r = sqrt_w * (targets - design @ beta_p)
    gamma, _, rank, sv = np.linalg.lstsq(M, r, rcond=None)
    if rank < p_red:
        raise ConditioningError(
            f"rank-deficient system: rank {rank} < {p_red} free parameters"
        )
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    logger.debug("wls_solve: n=%d p=%d cond=%.3g", n, p, cond)
    return beta_p + N @ gamma


def _ridge_fit(
    design: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    lam: float,
    penalize: np.ndarray,
) -> np.ndarray:
    """Weighted ridge regression; the rank check is done before ridging so a
    degenerate perturbation sample is reported, never papered over."""
    n, p = design.shape
    sqrt_w = np.sqrt(np.asarray(weights, dtype=float))
    Mw = sqrt_w[:, None] * design
    rank = np.linalg.matrix_rank(Mw)
    if rank < p:
        raise ConditioningError(
            f"rank-deficient perturbation design: rank {rank} < {p} parameters"
        )
    if lam > 0:
        aug = math.sqrt(lam) * np.diag(penalize.astype(float))
        aug = aug[penalize.astype(bool)]
        Mw = np.vstack([Mw, aug])
        targets = np.concatenate([sqrt_w * targets, np.zeros(aug.shape[0])])
    else:
        targets = sqrt_w * targets
    beta, _, _, _ = np.linalg.lstsq(Mw, targets, rcond=None)
    return beta


def _all_masks(d: int) -> list[Mask]:
    """All 2^d masks; index s has bit i set iff feature i is present."""
    return [Mask(tuple((s >> i) & 1 for i in range(d))) for s in range(1 << d)]


def explain_shapley_exact(
    instance: Instance, oracle: Oracle, config: ExplainerConfig
) -> AttributionMatrix:
    """Exact Shapley values from one enumeration of all 2^d coalitions."""
    d = instance.num_features
    if d > config.d_max_exact:
        raise CapabilityError(
            f"exact Shapley enumerates 2^{d} coalitions which exceeds the "
            f"cutoff d_max_exact={config.d_max_exact}; use lerg_s instead"
        )
    T = instance.num_output_tokens
    values = oracle.score_batch(instance, _all_masks(d))  # (2^d, T)

    fact = [math.factorial(k) for k in range(d + 1)]
    weight_by_size = [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)]

    phi = np.zeros((d, T))
    for s in range(1 << d):
        size = bin(s).count("1")
        for i in range(d):
            if s & (1 << i):
                continue
            phi[i] += weight_by_size[size] * (values[s | (1 << i)] - values[s])
    return AttributionMatrix(phi=phi, method="shapley_exact", seed=config.seed)


def explain_lerg_s(
    instance: Instance, oracle: Oracle, config: ExplainerConfig
) -> AttributionMatrix:
    """Monte Carlo Shapley by permutation sampling: walk random feature
    orderings and average each feature's marginal contribution."""
    d = instance.num_features
    T = instance.num_output_tokens
    if config.n_samples >= math.factorial(d):
        perms = [np.array(p) for p in itertools.permutations(range(d))]
    else:
        rng = np.random.default_rng(config.seed)
        perms = [rng.permutation(d) for _ in range(config.n_samples)]

    coalition_masks: dict[tuple[int, ...], int] = {}
    masks: list[Mask] = []

    def mask_index(kept: frozenset[int]) -> int:
        bits = tuple(1 if i in kept else 0 for i in range(d))
        if bits not in coalition_masks:
            coalition_masks[bits] = len(masks)
            masks.append(Mask(bits))
        return coalition_masks[bits]

    walks = []  # (index before, index after, feature) per permutation step
    for perm in perms:
        kept: frozenset[int] = frozenset()
        for i in perm:
            before = mask_index(kept)
            kept = kept | {int(i)}
            after = mask_index(kept)
            walks.append((before, after, int(i)))

    values = oracle.score_batch(instance, masks)  # (n_unique, T)
    phi = np.zeros((d, T))
    for before, after, i in walks:
        phi[i] += values[after] - values[before]
    phi /= len(perms)
    return AttributionMatrix(phi=phi, method="lerg_s", seed=config.seed)


def shapley_kernel_weight(d: int, s: int) -> float:
    """Coalition-size weight (d-1) / (C(d,s) * s * (d-s)) for 1 <= s <= d-1."""
    if not 1 <= s <= d - 1:
        raise ValueError(f"coalition size {s} outside [1, {d - 1}]")
    return (d - 1) / (math.comb(d, s) * s * (d - s))


def explain_kernel_shap(
    instance: Instance, oracle: Oracle, config: ExplainerConfig
) -> AttributionMatrix:
    """Shapley estimation as a Shapley-kernel-weighted linear regression with
    hard constraints at the empty and full coalitions."""
    d = instance.num_features
    if d < 2:
        raise CapabilityError("kernel SHAP needs at least 2 features")
    T = instance.num_output_tokens
    rng = np.random.default_rng(config.seed)

    if config.n_samples >= (1 << d) - 2:
        sampled = [
            bits
            for bits in itertools.product((0, 1), repeat=d)
            if 0 < sum(bits) < d
        ]
    else:
        sizes = np.arange(1, d)
        size_probs = np.array([shapley_kernel_weight(d, int(s)) for s in sizes])
        size_probs /= size_probs.sum()
        sampled = []
        while len(sampled) < config.n_samples:
            s = int(rng.choice(sizes, p=size_probs))
            members = rng.choice(d, size=s, replace=False)
            bits = tuple(1 if i in set(int(m) for m in members) else 0 for i in range(d))
            sampled.append(bits)
            if len(sampled) < config.n_samples:
                # antithetic pair: the complement coalition
                sampled.append(tuple(1 - b for b in bits))

    masks = [Mask(bits) for bits in sampled]
    all_masks = [Mask.zeros(d), Mask.ones(d)] + masks
    values = oracle.score_batch(instance, all_masks)
    v_empty, v_full = values[0], values[1]
    v_z = values[2:]

    Z = np.asarray(sampled, dtype=float)
    design = np.hstack([np.ones((len(masks), 1)), Z])  # intercept + z bits
    weights = np.asarray(
        [shapley_kernel_weight(d, int(z.sum())) for z in Z], dtype=float
    )
    e0 = np.zeros(d + 1)
    e0[0] = 1.0

    phi = np.zeros((d, T))
    for t in range(T):
        constraints = [(e0, float(v_empty[t])), (np.ones(d + 1), float(v_full[t]))]
        beta = wls_solve(design, v_z[:, t], weights, constraints)
        phi[:, t] = beta[1:]
    return AttributionMatrix(phi=phi, method="kernel_shap", seed=config.seed)


def _bernoulli_masks(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return rng.integers(0, 2, size=(n, d))


def explain_lime(
    instance: Instance, oracle: Oracle, config: ExplainerConfig
) -> AttributionMatrix:
    """Locally weighted linear surrogate on Bernoulli(0.5) perturbations."""
    d = instance.num_features
    T = instance.num_output_tokens
    if config.n_samples < d + 2:
        raise ValueError(f"lime needs n_samples >= d + 2 = {d + 2}")
    rng = np.random.default_rng(config.seed)
    Z = _bernoulli_masks(rng, config.n_samples, d)
    Z = np.vstack([Z, np.ones(d, dtype=Z.dtype)])  # anchor at the full input

    masks = [Mask(tuple(int(b) for b in row)) for row in Z]
    values = oracle.score_batch(instance, masks)

    dist = 1.0 - Z.sum(axis=1) / d
    weights = np.exp(-(dist**2) / config.kernel_width**2)
    design = np.hstack([np.ones((Z.shape[0], 1)), Z.astype(float)])
    penalize = np.array([False] + [True] * d)

    phi = np.zeros((d, T))
    for t in range(T):
        beta = _ridge_fit(design, values[:, t], weights, config.ridge_lambda, penalize)
        phi[:, t] = beta[1:]
    return AttributionMatrix(phi=phi, method="lime", seed=config.seed)


def explain_lerg_l(
    instance: Instance, oracle: Oracle, config: ExplainerConfig
) -> AttributionMatrix:
    """Linear surrogate on the log-probability ratio to the full input,
    uniformly weighted."""
    d = instance.num_features
    T = instance.num_output_tokens
    if config.n_samples < d + 2:
        raise ValueError(f"lerg_l needs n_samples >= d + 2 = {d + 2}")
    rng = np.random.default_rng(config.seed)
    Z = _bernoulli_masks(rng, config.n_samples, d)
    Z = np.vstack([Z, np.ones(d, dtype=Z.dtype)])

    masks = [Mask(tuple(int(b) for b in row)) for row in Z]
    values = oracle.score_batch(instance, masks)
    v_full = oracle.score_one(instance, Mask.ones(d))
    ratio = values - v_full[None, :]

    weights = np.ones(Z.shape[0])
    design = np.hstack([np.ones((Z.shape[0], 1)), Z.astype(float)])
    penalize = np.array([False] + [True] * d)

    phi = np.zeros((d, T))
    for t in range(T):
        beta = _ridge_fit(design, ratio[:, t], weights, config.ridge_lambda, penalize)
        phi[:, t] = beta[1:]
    return AttributionMatrix(phi=phi, method="lerg_l", seed=config.seed)


def explain_attention(
    instance: Instance, oracle: Oracle, config: ExplainerConfig | None = None
) -> AttributionMatrix:
    """Attribution straight from cross-attention mass; no perturbations."""
    matrix = oracle.attention(instance)  # (T, d), row stochastic
    seed = config.seed if config is not None else 0
    return AttributionMatrix(phi=matrix.T.copy(), method="attention", seed=seed)


_DISPATCH = {
    "lime": explain_lime,
    "shapley_exact": explain_shapley_exact,
    "kernel_shap": explain_kernel_shap,
    "lerg_l": explain_lerg_l,
    "lerg_s": explain_lerg_s,
    "attention": explain_attention,
}


def explain(instance: Instance, oracle: Oracle, config: ExplainerConfig) -> AttributionMatrix:
    """Run the method named in the config."""
    if config.method not in _DISPATCH:
        raise ValueError(
            f"unknown method {config.method!r}; valid: {', '.join(METHODS)}"
        )
    return _DISPATCH[config.method](instance, oracle, config)


def config_for(method: str, base: ExplainerConfig | None = None) -> ExplainerConfig:
    base = base or ExplainerConfig()
    return replace(base, method=method)
