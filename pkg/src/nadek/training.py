"""Stochastic training of the iterative-inference model.

The training signal is an unbiased estimator of the order-averaged
negative log-likelihood: draw a position d uniformly, mark a uniform
random subset of d-1 components observed, and score the reconstruction
of the rest with a scaled cross-entropy

    loss = D/(D-d+1) * sum_{i missing} ce(v_k[i], x[i]).

The pretraining variant averages the same scaled term over every
intermediate state v_1 .. v_k instead of only the last.  Gradients are
exact: backpropagation walks the k unrolled steps in reverse and
accumulates into the shared tensors.  Updates use AdaDelta with optional
L2 weight decay on the weight matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, StructureConfig, Trajectory, forward, init_params
from .numerics import PROB_EPS, ContractError, Rng, clamp_prob, matvec

__all__ = [
    "AdaDeltaState",
    "Gradients",
    "MaskSample",
    "TrainConfig",
    "TrainResult",
    "adadelta_step",
    "add_weight_decay",
    "backward",
    "pretrain_loss",
    "sample_mask",
    "stochastic_loss",
    "train",
    "validation_score",
]

OBJECTIVES = ("finetune", "pretrain")
MODES = ("pretrain_then_finetune", "finetune_only")


@dataclass
class MaskSample:
    """One draw of the (ordering position, observed subset) pair.

    mask marks missing components with 1.  observed_count = d-1 and
    missing_count = D-d+1 partition the D indices.
    """

    mask: np.ndarray
    d: int
    observed_count: int
    missing_count: int

    def __post_init__(self):
        D = self.mask.shape[0]
        ones = int(np.sum(self.mask))
        if self.observed_count != self.d - 1 or self.missing_count != D - self.d + 1:
            raise ContractError("mask sample counts inconsistent with d")
        if ones != self.missing_count:
            raise ContractError("mask cardinality does not match missing_count")


@dataclass
class Gradients:
    """Partial derivatives, one tensor per parameter tensor."""

    W: np.ndarray
    c: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W2: np.ndarray | None = None
    c2: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradients":
        return cls(
            W=np.zeros_like(params.W),
            c=np.zeros_like(params.c),
            V=np.zeros_like(params.V),
            b=np.zeros_like(params.b),
            W2=None if params.W2 is None else np.zeros_like(params.W2),
            c2=None if params.c2 is None else np.zeros_like(params.c2),
        )

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"W": self.W, "c": self.c}
        if self.W2 is not None:
            out["W2"] = self.W2
            out["c2"] = self.c2
        out["V"] = self.V
        out["b"] = self.b
        return out

    def add_(self, other: "Gradients") -> None:
        for name, t in other.tensors().items():
            self.tensors()[name] += t

    def scale_(self, a: float) -> None:
        for t in self.tensors().values():
            t *= a


@dataclass
class AdaDeltaState:
    """Per-parameter running averages E[g^2] and E[dx^2]."""

    eg2: dict[str, np.ndarray]
    edx2: dict[str, np.ndarray]
    rho: float = 0.95
    epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ContractError("rho must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ContractError("epsilon must be positive")

    @classmethod
    def zeros_like(
        cls, params: ModelParams, rho: float = 0.95, epsilon: float = 1e-6
    ) -> "AdaDeltaState":
        return cls(
            eg2={n: np.zeros_like(t) for n, t in params.tensors().items()},
            edx2={n: np.zeros_like(t) for n, t in params.tensors().items()},
            rho=rho,
            epsilon=epsilon,
        )


@dataclass
class TrainConfig:
    """Optimization hyperparameters; structure lives in StructureConfig."""

    minibatch_size: int = 100
    pretrain_epochs: int = 0
    finetune_epochs: int = 0
    weight_decay: float = 0.0
    patience: int = 0
    seed: int = 0
    rho: float = 0.95
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.minibatch_size < 1:
            raise ContractError("minibatch_size must be >= 1")
        if not 0.0 < self.rho < 1.0:
            raise ContractError("rho must lie in (0, 1)")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ContractError("epoch counts must be >= 0")
        if self.weight_decay < 0.0:
            raise ContractError("weight_decay must be >= 0")


@dataclass
class TrainResult:
    params: ModelParams
    history: list[str] = field(default_factory=list)
    mean: np.ndarray | None = None
    best_valid: float | None = None
    epochs_run: int = 0


def sample_mask(rng: Rng, D: int) -> MaskSample:
    """Draw d uniform on {1..D}, then d-1 observed indices without bias.

    The observed set is the prefix of a partial Fisher-Yates shuffle, so
    every (d-1)-subset is equally likely and the draw consumes exactly
    d-1 bounded integers after the one for d.
    """
    if D < 1:
        raise ContractError("D must be >= 1")
    d = 1 + rng.next_below(D)
    idx = list(range(D))
    for i in range(d - 1):
        j = i + rng.next_below(D - i)
        idx[i], idx[j] = idx[j], idx[i]
    mask = np.ones(D)
    for i in idx[: d - 1]:
        mask[i] = 0.0
    return MaskSample(mask=mask, d=d, observed_count=d - 1, missing_count=D - d + 1)


def _masked_ce(v: np.ndarray, x: np.ndarray, mask: np.ndarray) -> float:
    p = clamp_prob(v[mask == 1.0])
    t = x[mask == 1.0]
    return float(np.sum(-t * np.log(p) - (1.0 - t) * np.log(1.0 - p)))


def stochastic_loss(traj: Trajectory, x: np.ndarray, ms: MaskSample) -> float:
    """Scaled cross-entropy on the final state over missing components."""
    x = np.asarray(x, dtype=np.float64)
    gamma = traj.mask.shape[0] / ms.missing_count
    return gamma * _masked_ce(traj.v_states[-1], x, traj.mask)


def pretrain_loss(traj: Trajectory, x: np.ndarray, ms: MaskSample) -> float:
    """Mean of the scaled cross-entropy over every step's reconstruction.

    At k=1 this is a single-term average and equals stochastic_loss.
    """
    x = np.asarray(x, dtype=np.float64)
    k = traj.k_used
    gamma = traj.mask.shape[0] / ms.missing_count
    total = 0.0
    for t in range(1, k + 1):
        total += _masked_ce(traj.v_states[t], x, traj.mask)
    return gamma * total / k


def _phi_prime(h: np.ndarray, activation: str) -> np.ndarray:
    # derivative expressed through the stored activation value
    if activation == "tanh":
        return 1.0 - h * h
    return h * (1.0 - h)


def backward(
    params: ModelParams,
    config: StructureConfig,
    traj: Trajectory,
    x: np.ndarray,
    ms: MaskSample,
    objective: str,
) -> Gradients:
    """Exact gradient of the chosen loss by reverse traversal of the steps.

    All k steps accumulate into the shared tensors.  Observed coordinates
    carry no gradient: the clamp replaces them with constants at every
    step.  Coordinates whose output probability left the clamp range
    contribute zero loss gradient, matching the clamped loss exactly.
    """
    if objective not in OBJECTIVES:
        raise ContractError(f"objective must be one of {OBJECTIVES}")
    x = np.asarray(x, dtype=np.float64)
    m = traj.mask
    k = traj.k_used
    gamma = m.shape[0] / ms.missing_count
    grads = Gradients.zeros_like(params)
    act = config.activation
    dv = np.zeros_like(x)
    for t in range(k, 0, -1):
        s = traj.v_states[t]
        # loss weight of this step's reconstruction
        if objective == "pretrain":
            coeff = gamma / k
        else:
            coeff = gamma if t == k else 0.0
        dz = m * dv * s * (1.0 - s)
        if coeff != 0.0:
            inclamp = ((s > PROB_EPS) & (s < 1.0 - PROB_EPS)).astype(np.float64)
            dz = dz + coeff * m * (s - x) * inclamp
        hidden = traj.h_states[t - 1]
        if config.n == 3:
            h1, h2 = hidden
            top = h2
        else:
            (h1,) = hidden
            top = h1
        grads.V += np.outer(dz, top)
        grads.b += dz
        dtop = matvec(params.V.T, dz)
        if config.n == 3:
            da2 = dtop * _phi_prime(h2, act)
            grads.W2 += np.outer(da2, h1)
            grads.c2 += da2
            da1 = matvec(params.W2.T, da2) * _phi_prime(h1, act)
        else:
            da1 = dtop * _phi_prime(h1, act)
        grads.W += np.outer(da1, traj.v_states[t - 1])
        grads.c += da1
        dv = matvec(params.W.T, da1)
    return grads


def add_weight_decay(grads: Gradients, params: ModelParams, lam: float) -> Gradients:
    """L2 penalty gradient 2*lam*w on weight matrices; biases untouched."""
    if lam < 0.0:
        raise ContractError("weight decay must be >= 0")
    if lam != 0.0:
        grads.W += 2.0 * lam * params.W
        grads.V += 2.0 * lam * params.V
        if grads.W2 is not None:
            grads.W2 += 2.0 * lam * params.W2
    return grads


def adadelta_step(
    state: AdaDeltaState, params: ModelParams, grads: Gradients
) -> tuple[ModelParams, AdaDeltaState]:
    """One in-place update of every parameter tensor.

    Per scalar: E[g2] <- rho E[g2] + (1-rho) g^2,
    dx = -sqrt(E[dx2]+eps)/sqrt(E[g2]+eps) * g, then the dx average and
    the parameter advance.
    """
    rho = state.rho
    eps = state.epsilon
    gtensors = grads.tensors()
    for name, p in params.tensors().items():
        g = gtensors[name]
        eg2 = state.eg2[name]
        edx2 = state.edx2[name]
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        delta = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
        edx2 *= rho
        edx2 += (1.0 - rho) * delta * delta
        p += delta
    return params, state


def validation_score(
    params: ModelParams,
    structure: StructureConfig,
    data: np.ndarray,
    mean: np.ndarray,
    seed: int,
) -> float:
    """Mean stochastic loss over the set, with masks fixed by the seed.

    The mask stream restarts from the seed on every call, so successive
    epochs score against identical masks and the curve is noise-free
    across epochs.
    """
    rng = Rng(seed).stream("valid-masks")
    total = 0.0
    for x in data:
        ms = sample_mask(rng, structure.D)
        traj = forward(params, structure, x, ms.mask, mean)
        total += stochastic_loss(traj, x, ms)
    return total / len(data)


def _check_split(data: np.ndarray, D: int, name: str) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] != D:
        raise ContractError(f"{name} data must be a non-empty matrix with {D} columns")
    return data


def train(
    structure: StructureConfig,
    train_data: np.ndarray,
    valid_data: np.ndarray,
    config: TrainConfig,
    mode: str = "finetune_only",
) -> TrainResult:
    """Minibatch epochs with per-example masks and AdaDelta updates.

    Fine-tuning tracks the validation score each epoch and the result
    carries the best-epoch parameters; patience > 0 stops the phase after
    that many consecutive epochs without strict improvement.  The
    pretraining phase runs its full budget with no early stopping and
    resets the optimizer state at the handoff.  History lines are
    `epoch <n> phase <p> train <loss> valid <loss>` with global epoch
    numbers across phases.
    """
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}")
    train_data = _check_split(train_data, structure.D, "training")
    valid_data = _check_split(valid_data, structure.D, "validation")
    mean = train_data.mean(axis=0)

    master = Rng(config.seed)
    params = init_params(structure, master.stream("init"))
    mask_rng = master.stream("masks")
    shuffle_rng = master.stream("shuffle")

    phases: list[tuple[str, str, int]] = []
    if mode == "pretrain_then_finetune":
        phases.append(("pretrain", "pretrain", config.pretrain_epochs))
    phases.append(("finetune", "finetune", config.finetune_epochs))

    history: list[str] = []
    best_params: ModelParams | None = None
    best_valid: float | None = None
    epoch = 0
    n_train = train_data.shape[0]
    for phase, objective, budget in phases:
        state = AdaDeltaState.zeros_like(params, rho=config.rho, epsilon=config.epsilon)
        phase_best = np.inf
        stale = 0
        for _ in range(budget):
            epoch += 1
            order = shuffle_rng.permutation(n_train)
            total = 0.0
            for start in range(0, n_train, config.minibatch_size):
                block = order[start : start + config.minibatch_size]
                grads = Gradients.zeros_like(params)
                # summed in sample order, then averaged: reruns are bit-identical
                for idx in block:
                    x = train_data[idx]
                    ms = sample_mask(mask_rng, structure.D)
                    traj = forward(params, structure, x, ms.mask, mean)
                    if objective == "pretrain":
                        total += pretrain_loss(traj, x, ms)
                    else:
                        total += stochastic_loss(traj, x, ms)
                    grads.add_(backward(params, structure, traj, x, ms, objective))
                grads.scale_(1.0 / len(block))
                add_weight_decay(grads, params, config.weight_decay)
                adadelta_step(state, params, grads)
            train_loss = total / n_train
            valid_loss = validation_score(params, structure, valid_data, mean, config.seed)
            history.append(
                f"epoch {epoch} phase {phase} train {train_loss:.6f} valid {valid_loss:.6f}"
            )
            if phase == "finetune":
                if best_valid is None or valid_loss < best_valid:
                    best_valid = valid_loss
                    best_params = params.copy()
                if valid_loss < phase_best:
                    phase_best = valid_loss
                    stale = 0
                else:
                    stale += 1
                    if config.patience > 0 and stale >= config.patience:
                        break
    return TrainResult(
        params=best_params if best_params is not None else params,
        history=history,
        mean=mean,
        best_valid=best_valid,
        epochs_run=epoch,
    )
