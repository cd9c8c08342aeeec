"""Exact likelihood evaluation under fixed orderings and ordering ensembles.

The joint probability of a binary vector under one ordering is the chain
product of conditionals: for each position d the model is run with the
components after d masked missing, and only the o_d-th output coordinate
is read.  An ensemble treats a set of orderings as a uniform mixture,
scoring log p(x) = logsumexp_o(log p(x|o)) - log |O|.  For small D an
exhaustive enumeration over all 2^D vectors doubles as a normalization
oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, StructureConfig, forward
from .numerics import PROB_EPS, ContractError, Rng, log_sum_exp

__all__ = [
    "EnsembleSpec",
    "EvalReport",
    "Ordering",
    "conditional_ordering",
    "draw_orderings",
    "ensemble_log_prob",
    "enumerate_distribution",
    "identity_ordering",
    "log_prob_ordering",
    "ordering_stats",
    "render_report",
]

ENUM_MAX_D = 20


@dataclass(frozen=True)
class Ordering:
    """A visit order over coordinates: perm[d] is visited at position d."""

    perm: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "perm", tuple(int(i) for i in self.perm))
        if tuple(sorted(self.perm)) != tuple(range(len(self.perm))):
            raise ContractError("perm is not a permutation of 0..D-1")
        if len(self.perm) == 0:
            raise ContractError("ordering must be non-empty")


def identity_ordering(D: int) -> Ordering:
    return Ordering(perm=tuple(range(D)))


@dataclass(frozen=True)
class EnsembleSpec:
    """The ordering set O of a uniform mixture, with the seed that drew it."""

    orderings: tuple[Ordering, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.orderings) == 0:
            raise ContractError("ensemble needs at least one ordering")
        lengths = {len(o.perm) for o in self.orderings}
        if len(lengths) != 1:
            raise ContractError("orderings have mixed lengths")


def draw_orderings(D: int, count: int, seed: int) -> EnsembleSpec:
    """Uniform orderings without replacement, by seeded shuffles.

    Duplicates are rejected and redrawn, so the set is distinct; count
    may not exceed D!.
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    if count > math.factorial(D):
        raise ContractError(f"cannot draw {count} distinct orderings of {D} items")
    rng = Rng(seed).stream("orderings")
    seen: set[tuple[int, ...]] = set()
    out: list[Ordering] = []
    while len(out) < count:
        perm = tuple(rng.permutation(D))
        if perm in seen:
            continue
        seen.add(perm)
        out.append(Ordering(perm=perm))
    return EnsembleSpec(orderings=tuple(out), seed=seed)


def conditional_ordering(D: int, obs_indices: list[int], rng: Rng) -> Ordering:
    """An ordering that visits every observed index before any missing one.

    Both segments are independently shuffled so repeated draws cover the
    conditional orderings uniformly.
    """
    obs = list(dict.fromkeys(obs_indices))
    if len(obs) != len(obs_indices):
        raise ContractError("observed indices must be distinct")
    if any(i < 0 or i >= D for i in obs):
        raise ContractError("observed index out of range")
    obs_set = set(obs)
    mis = [i for i in range(D) if i not in obs_set]
    rng.shuffle(obs)
    rng.shuffle(mis)
    return Ordering(perm=tuple(obs + mis))


def _clamp_scalar(p: float) -> float:
    return min(max(p, PROB_EPS), 1.0 - PROB_EPS)


def log_prob_ordering(
    params: ModelParams,
    config: StructureConfig,
    x: np.ndarray,
    o: Ordering,
    mean: np.ndarray,
) -> float:
    """log p(x | o) as the chain sum of per-position conditionals.

    Costs D forwards of k steps each.  Each forward contributes only its
    o_d-th output coordinate; the rest of the reconstruction is unused.
    """
    D = config.D
    if len(o.perm) != D:
        raise ContractError("ordering length does not match D")
    x = np.asarray(x, dtype=np.float64)
    mask = np.ones(D)
    total = 0.0
    for d in range(D):
        traj = forward(params, config, x, mask, mean)
        i = o.perm[d]
        p = _clamp_scalar(float(traj.v_states[-1][i]))
        total += math.log(p) if x[i] == 1.0 else math.log(1.0 - p)
        mask[i] = 0.0
    return total


def ensemble_log_prob(
    params: ModelParams,
    config: StructureConfig,
    x: np.ndarray,
    spec: EnsembleSpec,
    mean: np.ndarray,
) -> float:
    logs = np.array(
        [log_prob_ordering(params, config, x, o, mean) for o in spec.orderings]
    )
    return float(log_sum_exp(logs) - math.log(len(spec.orderings)))


@dataclass
class EvalReport:
    """Per-(sample, ordering) log-probs plus the three spread aggregates.

    A variance aggregate is None when its direction has fewer than two
    entries to difference.
    """

    matrix: np.ndarray
    mean: float
    sd_over_orderings: float | None
    sd_over_samples: float | None

    def per_ordering_mean(self) -> float:
        """Mean log p(x|o) over every sample and ordering."""
        return self.mean

    def ensemble_mean(self) -> float:
        """Mean over samples of the uniform-mixture log-prob."""
        n_orderings = self.matrix.shape[1]
        per_sample = [
            log_sum_exp(row) - math.log(n_orderings) for row in self.matrix
        ]
        return float(np.mean(per_sample))


def stats_from_matrix(matrix: np.ndarray) -> EvalReport:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ContractError("log-prob matrix must be 2-D and non-empty")
    n_samples, n_orderings = matrix.shape
    mean = float(matrix.mean())
    sd_o = None
    if n_orderings >= 2:
        sd_o = float(math.sqrt(np.mean(np.var(matrix, axis=1, ddof=1))))
    sd_x = None
    if n_samples >= 2:
        sd_x = float(math.sqrt(np.mean(np.var(matrix, axis=0, ddof=1))))
    return EvalReport(
        matrix=matrix, mean=mean, sd_over_orderings=sd_o, sd_over_samples=sd_x
    )


def ordering_stats(
    params: ModelParams,
    config: StructureConfig,
    samples: np.ndarray,
    spec: EnsembleSpec,
    mean: np.ndarray,
) -> EvalReport:
    """Fill the log-prob matrix over samples x orderings and aggregate it.

    Aggregates use unbiased (n-1) variances: the mean over samples of the
    across-ordering variance, and the mean over orderings of the
    across-sample variance, each reported as a square root.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise ContractError("samples must be a non-empty matrix")
    matrix = np.empty((samples.shape[0], len(spec.orderings)))
    for si in range(samples.shape[0]):
        for oi, o in enumerate(spec.orderings):
            matrix[si, oi] = log_prob_ordering(params, config, samples[si], o, mean)
    return stats_from_matrix(matrix)


def _fmt_aggregate(value: float | None) -> str:
    return "absent" if value is None else f"{value:.6f}"


def render_report(report: EvalReport) -> str:
    """Text table: header, one tab-separated row per sample, aggregates."""
    n_orderings = report.matrix.shape[1]
    lines = ["sample\t" + "\t".join(f"o{j}" for j in range(n_orderings))]
    for si, row in enumerate(report.matrix):
        lines.append(str(si) + "\t" + "\t".join(f"{v:.6f}" for v in row))
    lines.append(f"# mean {report.mean:.6f}")
    lines.append(f"# sd_over_orderings {_fmt_aggregate(report.sd_over_orderings)}")
    lines.append(f"# sd_over_samples {_fmt_aggregate(report.sd_over_samples)}")
    return "\n".join(lines) + "\n"


def enumerate_distribution(
    params: ModelParams,
    config: StructureConfig,
    o: Ordering,
    mean: np.ndarray,
) -> np.ndarray:
    """Exact probability of every binary vector, indexed by bit pattern.

    Entry j of the table is the probability of the vector whose i-th
    coordinate is bit i of j (coordinate 0 least significant).  Exhaustive
    in 2^D, so D is capped.
    """
    D = config.D
    if D > ENUM_MAX_D:
        raise ContractError(
            f"enumeration over 2^{D} vectors refused (limit D <= {ENUM_MAX_D})"
        )
    table = np.empty(2**D)
    x = np.empty(D)
    for j in range(2**D):
        for i in range(D):
            x[i] = float((j >> i) & 1)
        table[j] = math.exp(log_prob_ordering(params, config, x, o, mean))
    return table
