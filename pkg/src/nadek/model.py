"""Architecture definition and the k-step iterative inference pass.

The model reconstructs the missing components of a partially observed
binary vector by running ``k`` iterations of a small encoder/decoder
network whose weights are shared across iterations.  One iteration with a
single hidden layer (``n=2``) is

    h_t = phi(W v_{t-1} + c)
    v_t = m * sigmoid(V h_t + b) + (1 - m) * x

where ``m`` marks missing components with 1 and observed components stay
clamped to their input values at every step.  With ``n=3`` a second
encoder layer ``h2_t = phi(W2 h1_t + c2)`` feeds the decoder instead.
The output ``v_k`` is read as the factorial conditional distribution over
the missing components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import ContractError, Rng, clamp_prob, matvec, sigmoid_vec, tanh_vec

__all__ = [
    "ModelParams",
    "StructureConfig",
    "Trajectory",
    "build_input",
    "conditional_probs",
    "forward",
    "init_params",
]

ACTIVATIONS = ("tanh", "sigmoid")


@dataclass(frozen=True)
class StructureConfig:
    """Shape of the network: input width, layers per iteration, step count.

    ``n`` is the number of weight matrices applied per iteration (2 for one
    hidden layer, 3 for two); ``hidden2`` must be given exactly when n=3.
    """

    D: int
    hidden1: int
    k: int = 1
    n: int = 2
    hidden2: int | None = None
    activation: str = "tanh"

    def __post_init__(self):
        if self.D < 1 or self.hidden1 < 1 or self.k < 1:
            raise ContractError("D, hidden1 and k must all be >= 1")
        if self.n not in (2, 3):
            raise ContractError("n must be 2 or 3")
        if self.n == 3 and (self.hidden2 is None or self.hidden2 < 1):
            raise ContractError("n=3 requires hidden2 >= 1")
        if self.n == 2 and self.hidden2 is not None:
            raise ContractError("hidden2 is only meaningful for n=3")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"activation must be one of {ACTIVATIONS}")


@dataclass
class ModelParams:
    """Learned tensors. W2/c2 are present exactly for n=3 structures.

    Shapes: W is hidden1 x D, c is hidden1, V is D x (last hidden width),
    b is D, W2 is hidden2 x hidden1, c2 is hidden2.
    """

    W: np.ndarray
    c: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W2: np.ndarray | None = None
    c2: np.ndarray | None = None

    def tensors(self) -> dict[str, np.ndarray]:
        """Named tensors in canonical (serialization) order."""
        out = {"W": self.W, "c": self.c}
        if self.W2 is not None:
            out["W2"] = self.W2
            out["c2"] = self.c2
        out["V"] = self.V
        out["b"] = self.b
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            W=self.W.copy(),
            c=self.c.copy(),
            V=self.V.copy(),
            b=self.b.copy(),
            W2=None if self.W2 is None else self.W2.copy(),
            c2=None if self.c2 is None else self.c2.copy(),
        )

    def check_shapes(self, config: StructureConfig) -> None:
        want = expected_shapes(config)
        got = {name: t.shape for name, t in self.tensors().items()}
        if got != want:
            raise ContractError(f"parameter shapes {got} do not match config {want}")


def expected_shapes(config: StructureConfig) -> dict[str, tuple[int, ...]]:
    last_hidden = config.hidden2 if config.n == 3 else config.hidden1
    shapes = {"W": (config.hidden1, config.D), "c": (config.hidden1,)}
    if config.n == 3:
        shapes["W2"] = (config.hidden2, config.hidden1)
        shapes["c2"] = (config.hidden2,)
    shapes["V"] = (config.D, last_hidden)
    shapes["b"] = (config.D,)
    return shapes


@dataclass
class Trajectory:
    """Full unrolled state of one inference run, kept for backprop.

    ``v_states`` holds v_0 .. v_k (k+1 vectors of length D); ``h_states``
    holds one tuple of hidden activations per step (one array for n=2, two
    for n=3).  Observed coordinates of every v_t for t >= 1 equal the input
    bit exactly; missing coordinates are sigmoid outputs in (0, 1).
    """

    v_states: list[np.ndarray]
    h_states: list[tuple[np.ndarray, ...]]
    mask: np.ndarray
    input: np.ndarray
    k_used: int = field(default=0)

    def __post_init__(self):
        if self.k_used == 0:
            self.k_used = len(self.h_states)


def init_params(config: StructureConfig, rng: Rng) -> ModelParams:
    """Draw weights uniform in [-s, s] with s = sqrt(6/(fan_in+fan_out)).

    Biases start at zero.  Matrices are filled row-major in canonical
    tensor order from the given stream, so a fixed seed reproduces the
    initialization exactly.
    """
    tensors: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(config).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape[0])
            continue
        fan_out, fan_in = shape
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        mat = np.empty(shape)
        flat = mat.reshape(-1)
        for i in range(flat.size):
            flat[i] = rng.uniform(-bound, bound)
        tensors[name] = mat
    return ModelParams(**tensors)


def _check_binary(v: np.ndarray, name: str) -> None:
    if not np.all((v == 0.0) | (v == 1.0)):
        raise ContractError(f"{name} must be exactly binary (0/1)")


def build_input(x: np.ndarray, m: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Initial state v_0: empirical mean at missing slots, x elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if not (x.shape == m.shape == mean.shape) or x.ndim != 1:
        raise ContractError(
            f"build_input length mismatch: x{x.shape} m{m.shape} mean{mean.shape}"
        )
    _check_binary(m, "mask")
    _check_binary(x, "input")
    return m * mean + (1.0 - m) * x


def forward(
    params: ModelParams,
    config: StructureConfig,
    x: np.ndarray,
    m: np.ndarray,
    mean: np.ndarray,
    k_override: int | None = None,
) -> Trajectory:
    """Run the k-step inference iteration and record the full trajectory.

    ``k_override`` replaces the trained step count at inference time; the
    training loop never sets it.
    """
    k = config.k if k_override is None else k_override
    if k < 1:
        raise ContractError("k_override must be >= 1")
    params.check_shapes(config)
    phi = tanh_vec if config.activation == "tanh" else sigmoid_vec

    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    v = build_input(x, m, mean)
    keep = 1.0 - m
    v_states = [v]
    h_states: list[tuple[np.ndarray, ...]] = []
    for _ in range(k):
        h1 = phi(matvec(params.W, v) + params.c)
        if config.n == 3:
            h2 = phi(matvec(params.W2, h1) + params.c2)
            h_states.append((h1, h2))
            top = h2
        else:
            h_states.append((h1,))
            top = h1
        s = sigmoid_vec(matvec(params.V, top) + params.b)
        v = m * s + keep * x
        v_states.append(v)
    return Trajectory(v_states=v_states, h_states=h_states, mask=m, input=x, k_used=k)


def conditional_probs(traj: Trajectory) -> np.ndarray:
    """P(x_i = 1 | observed) for each missing i, ascending by index.

    Values are read from the final state and clamped to the numeric
    probability range.  An all-observed mask yields an empty vector.
    """
    missing = np.flatnonzero(traj.mask == 1.0)
    return clamp_prob(traj.v_states[-1][missing])
