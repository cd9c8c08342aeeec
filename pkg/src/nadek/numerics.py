"""Low-level numeric kernels and the deterministic RNG.

Everything here is 64-bit floating point. Matrices are 2-D and vectors 1-D
numpy float64 arrays in row-major (C) order; the functions below validate
shapes at the boundary and are pure, so values can be shared read-only
across threads.

Reproducibility rules observed by this module:

* ``log_sum_exp`` reduces its terms in a canonical (sorted) order, so its
  result is bit-identical under any permutation of the inputs.
* All randomness in the package flows through :class:`Rng`, a small
  xoshiro256** generator implemented here from scratch.  Identical seeds
  give identical streams on any platform, and named child streams are
  derived from the seed alone so consumers cannot perturb each other.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "ContractError",
    "PROB_EPS",
    "Rng",
    "as_matrix",
    "as_vector",
    "clamp_prob",
    "log_sum_exp",
    "matvec",
    "sigmoid_vec",
    "tanh_vec",
]


class ContractError(ValueError):
    """A caller violated a documented precondition."""


#: Probabilities are clipped to [PROB_EPS, 1 - PROB_EPS] before any log.
PROB_EPS = 1e-12


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting non-finite entries."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} contains non-finite entries")
    return v


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} contains non-finite entries")
    return m


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Dense matrix-vector product with an explicit dimension check."""
    if m.ndim != 2 or v.ndim != 1:
        raise ContractError(f"matvec expects (2-D, 1-D), got {m.ndim}-D and {v.ndim}-D")
    if m.shape[1] != v.shape[0]:
        raise ContractError(f"matvec dimension mismatch: {m.shape} x {v.shape}")
    return m @ v


def tanh_vec(v: np.ndarray) -> np.ndarray:
    """Elementwise hyperbolic tangent."""
    return np.tanh(v)


def sigmoid_vec(v: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, stable for |x| up to 700.

    Large negative inputs are evaluated as exp(x)/(1+exp(x)) so the result
    stays positive down to the subnormal range instead of overflowing.
    Below roughly -745 the value underflows to exactly 0.0; callers that
    take logs must go through :func:`clamp_prob`, which covers that case.
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def clamp_prob(p):
    """Clip probabilities to [PROB_EPS, 1 - PROB_EPS] (scalar or array)."""
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def log_sum_exp(values) -> float:
    """log(sum(exp(values))) via max-shift, exact for a single element.

    The shifted exponentials are summed in ascending order of value, which
    makes the result bit-identical under permutation of the inputs.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractError("log_sum_exp needs a non-empty 1-D collection")
    if arr.size == 1:
        return float(arr[0])
    hi = float(np.max(arr))
    shifted = np.sort(arr - hi)
    total = 0.0
    for t in shifted:
        total += math.exp(t)
    return hi + math.log(total)


# ---------------------------------------------------------------------------
# Deterministic RNG
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def _splitmix64(z: int) -> int:
    # Finalizer of the splitmix64 sequence; full 64-bit avalanche.
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** generator with named, independently seeded sub-streams.

    State is seeded from a single 64-bit integer through four successive
    splitmix64 outputs.  Child streams are derived from the *seed*, never
    from the evolving state:

        child_seed = splitmix64(splitmix64(seed ^ fnv1a64(name)) ^ index)

    so ``rng.stream("masks")`` yields the same stream no matter how much
    the parent has been consumed, and distinct names or indices give
    decorrelated streams.
    """

    __slots__ = ("seed", "_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ContractError("seed must fit in an unsigned 64-bit integer")
        self.seed = seed
        z = seed
        state = []
        for _ in range(4):
            z = (z + 0x9E3779B97F4A7C15) & _MASK64
            state.append(_splitmix64(z))
        if not any(state):  # all-zero state is the one forbidden configuration
            state[0] = 1
        self._s0, self._s1, self._s2, self._s3 = state

    def stream(self, name: str, index: int = 0) -> "Rng":
        """Derive an independent child generator for (name, index)."""
        child = _splitmix64(_splitmix64(self.seed ^ _fnv1a64(name.encode("utf-8"))) ^ (index & _MASK64))
        return Rng(child)

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_uint64() >> 11) * (2.0 ** -53)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) (multiply-shift bounding)."""
        if n <= 0:
            raise ContractError("next_below needs n >= 1")
        return (self.next_uint64() * n) >> 64

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.next_float()

    def bernoulli(self, p: float) -> int:
        return 1 if self.next_float() < p else 0

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        items = list(range(n))
        self.shuffle(items)
        return np.array(items, dtype=np.int64)

    def uniform_array(self, shape) -> np.ndarray:
        """Array of uniforms in [0, 1), filled in row-major order."""
        flat = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(flat.size):
            flat[i] = self.next_float()
        return flat.reshape(shape)
