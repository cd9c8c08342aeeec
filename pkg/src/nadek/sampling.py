"""Ancestral sampling and conditional imputation of missing components.

A sample is drawn one coordinate at a time along an ordering: run the
inference pass with the still-unvisited coordinates masked missing,
Bernoulli-draw the current coordinate from its conditional, then clamp
it as observed.  Conditioning on known values only changes the ordering:
observed indices are visited first, so the remaining draws follow
p(x_mis | x_obs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import Ordering, conditional_ordering
from .model import ModelParams, StructureConfig, forward
from .numerics import PROB_EPS, ContractError, Rng

__all__ = [
    "SampleBatch",
    "ancestral_sample",
    "inpaint",
    "sample_from_mixture",
]


@dataclass
class SampleBatch:
    count: int
    vectors: np.ndarray
    orderings_used: tuple[Ordering, ...]


def ancestral_sample(
    params: ModelParams,
    config: StructureConfig,
    o: Ordering,
    mean: np.ndarray,
    rng: Rng,
) -> np.ndarray:
    """One binary vector drawn along the ordering; exactly D forwards.

    Draws use the clamped conditional, so every produced vector has
    finite log-probability under evaluation.
    """
    D = config.D
    if len(o.perm) != D:
        raise ContractError("ordering length does not match D")
    x = np.zeros(D)
    mask = np.ones(D)
    for d in range(D):
        traj = forward(params, config, x, mask, mean)
        i = o.perm[d]
        p = min(max(float(traj.v_states[-1][i]), PROB_EPS), 1.0 - PROB_EPS)
        x[i] = float(rng.bernoulli(p))
        mask[i] = 0.0
    return x


def sample_from_mixture(
    params: ModelParams,
    config: StructureConfig,
    count: int,
    mean: np.ndarray,
    rng: Rng,
) -> SampleBatch:
    """Independent draws, each under a fresh uniform ordering.

    Sample i consumes its own child stream of the given generator's seed,
    so batches are reproducible and independent of any scheduling.
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    D = config.D
    vectors = np.empty((count, D))
    orderings = []
    for i in range(count):
        sub = rng.stream("sample", i)
        o = Ordering(perm=tuple(sub.permutation(D)))
        vectors[i] = ancestral_sample(params, config, o, mean, sub)
        orderings.append(o)
    return SampleBatch(count=count, vectors=vectors, orderings_used=tuple(orderings))


def inpaint(
    params: ModelParams,
    config: StructureConfig,
    x_obs: np.ndarray,
    obs_indices: list[int],
    mean: np.ndarray,
    rng: Rng,
) -> np.ndarray:
    """Fill the unobserved coordinates by conditional ancestral sampling.

    Observed coordinates are returned bit-exact.  The visit order puts
    the observed indices first (in random order), so the draws follow the
    conditional distribution given the observations.
    """
    D = config.D
    x_obs = np.asarray(x_obs, dtype=np.float64)
    if x_obs.shape != (D,):
        raise ContractError("x_obs must have length D")
    obs = list(obs_indices)
    x = x_obs.copy()
    if len(set(obs)) == D:
        return x
    o = conditional_ordering(D, obs, rng)
    mask = np.ones(D)
    for i in obs:
        mask[i] = 0.0
    # unobserved entries of x_obs carry no information; normalize them
    x[mask == 1.0] = 0.0
    for d in range(len(obs), D):
        traj = forward(params, config, x, mask, mean)
        i = o.perm[d]
        p = min(max(float(traj.v_states[-1][i]), PROB_EPS), 1.0 - PROB_EPS)
        x[i] = float(rng.bernoulli(p))
        mask[i] = 0.0
    return x
