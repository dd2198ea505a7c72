"""
Kernel Operations Module
========================

Stochastic kernels and rate matrices on a finite state space.

Convention: a kernel acts on measures by left multiplication
(row = source state, ``mu @ K``) and on functions by right
multiplication (``K @ f``). Every other module follows it.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components
from scipy.stats import poisson

from .measure_core import total_variation
from .utils import content_hash


logger = logging.getLogger(__name__)

ROW_SUM_ATOL = 1e-12
SPECTRAL_GAP_FLOOR = 1e-6
UNIFORMIZATION_TAIL = 1e-13
# largest q*t handled in a single Poisson sum before squaring
UNIFORMIZATION_CHUNK = 20.0


class ConvergenceError(RuntimeError):
    """An iteration ran out of budget before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _square_matrix(matrix: Sequence[Sequence[float]], what: str) -> np.ndarray:
    array = np.array(matrix, dtype=float)
    if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] == 0:
        raise ValueError(f"{what} must be a non-empty square matrix, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{what} entries must be finite")
    return array


class StochasticKernel:
    """
    Row-stochastic matrix, validated once and immutable afterwards.

    Rows that do not sum to one within 1e-12 are rejected, never repaired.
    """

    def __init__(self, matrix: Sequence[Sequence[float]], atol: float = ROW_SUM_ATOL):
        array = _square_matrix(matrix, "Kernel")
        if np.any(array < 0.0):
            row, col = np.argwhere(array < 0.0)[0]
            raise ValueError(f"Kernel entry ({row}, {col}) is negative: {array[row, col]}")
        sums = array.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
        if bad.size:
            raise ValueError(
                f"Kernel row {int(bad[0])} sums to {sums[bad[0]]!r}, expected 1"
            )
        array.setflags(write=False)
        self._matrix = array
        self._hash = content_hash(array)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def size(self) -> int:
        return self._matrix.shape[0]

    @property
    def content_hash(self) -> str:
        return self._hash

    def __repr__(self) -> str:
        return f"StochasticKernel(size={self.size}, hash={self._hash[:12]})"


class GeneratorMatrix:
    """Rate matrix: nonnegative off-diagonal entries, rows summing to zero."""

    def __init__(self, matrix: Sequence[Sequence[float]], atol: float = ROW_SUM_ATOL):
        array = _square_matrix(matrix, "Generator")
        off_diagonal = array - np.diag(np.diag(array))
        if np.any(off_diagonal < 0.0):
            row, col = np.argwhere(off_diagonal < 0.0)[0]
            raise ValueError(
                f"Generator off-diagonal entry ({row}, {col}) is negative: {array[row, col]}"
            )
        sums = array.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums) > atol)
        if bad.size:
            raise ValueError(
                f"Generator row {int(bad[0])} sums to {sums[bad[0]]!r}, expected 0"
            )
        array.setflags(write=False)
        self._matrix = array
        self._hash = content_hash(array)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def size(self) -> int:
        return self._matrix.shape[0]

    @property
    def content_hash(self) -> str:
        return self._hash

    def __repr__(self) -> str:
        return f"GeneratorMatrix(size={self.size}, hash={self._hash[:12]})"


@dataclass(frozen=True)
class SemigroupGrowth:
    """||S_t mu||_V <= C_V exp(omega_V t) ||mu||_V."""

    C_V: float
    omega_V: float

    def __post_init__(self):
        if self.C_V < 1.0:
            raise ValueError(f"C_V must be >= 1, got {self.C_V}")
        if self.omega_V < 0.0:
            raise ValueError(f"omega_V must be >= 0, got {self.omega_V}")

    def factor(self, t: float) -> float:
        return self.C_V * math.exp(self.omega_V * t)

    def to_dict(self):
        return {"C_V": self.C_V, "omega_V": self.omega_V}


@dataclass(frozen=True)
class StationaryResult:
    """Outcome of :func:`stationary_distribution`."""

    pi: np.ndarray
    multiplicity: int
    residual: float
    iterations: int
    method: str
    spectral_gap: float = field(default=float("nan"))

    @property
    def unique(self) -> bool:
        return self.multiplicity == 1

    def to_dict(self):
        return {
            "pi": self.pi,
            "multiplicity": self.multiplicity,
            "unique": self.unique,
            "residual": self.residual,
            "iterations": self.iterations,
            "method": self.method,
            "spectral_gap": self.spectral_gap,
        }


def _as_vector(values: Sequence[float], size: int, what: str) -> np.ndarray:
    vector = np.asarray(values, dtype=float)
    if vector.shape != (size,):
        raise ValueError(f"{what} has shape {vector.shape}, expected ({size},)")
    return vector


def apply(S: StochasticKernel, mu: Sequence[float]) -> np.ndarray:
    """
    (S mu)(y) = sum_x mu(x) K(x, y).

    Raises:
        ValueError: On dimension mismatch
    """
    return _as_vector(mu, S.size, "Measure") @ S.matrix


def dual_apply(S: StochasticKernel, f: Sequence[float]) -> np.ndarray:
    """
    (P f)(x) = sum_y K(x, y) f(y).

    Raises:
        ValueError: On dimension mismatch
    """
    return S.matrix @ _as_vector(f, S.size, "Function")


def power_apply(S: StochasticKernel, n: int, mu: Sequence[float]) -> np.ndarray:
    """S^n mu by repeated application; n = 0 returns a copy of mu."""
    if n < 0:
        raise ValueError(f"Power must be >= 0, got {n}")
    current = np.array(_as_vector(mu, S.size, "Measure"), dtype=float)
    for _ in range(int(n)):
        current = current @ S.matrix
    return current


def kernel_power(S: StochasticKernel, n: int) -> StochasticKernel:
    """The kernel S^n, renormalization-free."""
    if n < 0:
        raise ValueError(f"Power must be >= 0, got {n}")
    matrix = np.linalg.matrix_power(S.matrix, int(n))
    # products of stochastic matrices drift by a few ulps per row
    return StochasticKernel(matrix, atol=max(ROW_SUM_ATOL, 1e-14 * max(n, 1) * S.size))


def fixed_space_dimension(S: StochasticKernel, rcond: float = 1e-10) -> int:
    """dim ker(K^T - I)."""
    basis = linalg.null_space(S.matrix.T - np.eye(S.size), rcond=rcond)
    return int(basis.shape[1])


def _closed_classes(S: StochasticKernel):
    graph = (S.matrix > 0.0).astype(int)
    count, labels = connected_components(graph, directed=True, connection="strong")
    closed = []
    for label in range(count):
        members = np.flatnonzero(labels == label)
        outside = np.setdiff1d(np.arange(S.size), members)
        if outside.size == 0 or not np.any(S.matrix[np.ix_(members, outside)] > 0.0):
            closed.append(members)
    return closed


def _class_fixed_vector(S: StochasticKernel, members: np.ndarray) -> np.ndarray:
    # right singular vector of the smallest singular value of B^T - I;
    # a closed class has a one-dimensional fixed space, so no rank cutoff applies
    block = S.matrix[np.ix_(members, members)]
    _, singular, vh = linalg.svd(block.T - np.eye(members.size))
    vector = vh[-1]
    total = vector.sum()
    if not np.isfinite(total) or abs(total) < 1e-12:
        raise ConvergenceError(f"No probability vector in the fixed space of class {members.tolist()}",
                               float(singular[-1]))
    vector = np.clip(vector / total, 0.0, None)
    pi = np.zeros(S.size)
    pi[members] = vector / vector.sum()
    return pi


def _null_space_solution(S: StochasticKernel) -> np.ndarray:
    # stationary vector of the first closed class, zero elsewhere
    return _class_fixed_vector(S, _closed_classes(S)[0])


def stationary_distribution(S: StochasticKernel, tol: float = 1e-12,
                            max_iterations: int = 200000) -> StationaryResult:
    """
    Probability vector pi with ||pi S - pi|| <= tol.

    Power iteration from the uniform vector; when the spectral gap is
    below 1e-6 (or the fixed-point space is not one-dimensional) the
    vector comes from a direct null-space solve instead.

    Raises:
        ValueError: If tol <= 0
        ConvergenceError: If the residual stays above tol
    """
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")

    multiplicity = fixed_space_dimension(S)
    moduli = np.sort(np.abs(np.linalg.eigvals(S.matrix)))[::-1]
    gap = 1.0 - float(moduli[1]) if S.size > 1 else 1.0

    if multiplicity == 1 and gap >= SPECTRAL_GAP_FLOOR:
        pi = np.full(S.size, 1.0 / S.size)
        residual = float("inf")
        for iteration in range(1, max_iterations + 1):
            nxt = pi @ S.matrix
            residual = total_variation(nxt - pi)
            pi = nxt
            if residual <= tol:
                break
        else:
            raise ConvergenceError("Power iteration did not converge", residual)
        pi = pi / pi.sum()
        residual = total_variation(pi @ S.matrix - pi)
        method = "power"
    else:
        pi = _null_space_solution(S)
        residual = total_variation(pi @ S.matrix - pi)
        iteration = 0
        method = "null_space"
        if residual > tol:
            raise ConvergenceError("Null-space solve left a residual above tol", residual)

    if multiplicity > 1:
        logger.warning(f"Fixed-point space has dimension {multiplicity}; "
                       "returning one stationary vector")

    return StationaryResult(pi=pi, multiplicity=multiplicity, residual=residual,
                            iterations=iteration, method=method, spectral_gap=gap)


def uniformization_rate(L: GeneratorMatrix) -> float:
    """q = max_x |L(x, x)|."""
    return float(np.max(np.abs(np.diag(L.matrix))))


def _poisson_mixture(P: np.ndarray, rate: float) -> np.ndarray:
    k_max = int(poisson.isf(UNIFORMIZATION_TAIL, rate)) + 1
    weights = poisson.pmf(np.arange(k_max + 1), rate)
    result = np.zeros_like(P)
    power = np.eye(P.shape[0])
    for weight in weights:
        result += weight * power
        power = power @ P
    return result


def semigroup_at(L: GeneratorMatrix, t: float) -> StochasticKernel:
    """
    exp(tL) by uniformization: sum_k Poisson(qt)_k P^k with P = I + L/q.

    Large q*t is split into 2^j equal pieces whose kernels are squared.

    Raises:
        ValueError: If t < 0
    """
    if t < 0.0:
        raise ValueError(f"Time must be >= 0, got {t}")
    q = uniformization_rate(L)
    size = L.size
    if t == 0.0 or q == 0.0:
        return StochasticKernel(np.eye(size))

    P = np.eye(size) + L.matrix / q
    squarings = max(0, math.ceil(math.log2(q * t / UNIFORMIZATION_CHUNK))) if q * t > UNIFORMIZATION_CHUNK else 0
    kernel = _poisson_mixture(P, q * t / (2 ** squarings))
    for _ in range(squarings):
        kernel = kernel @ kernel
    kernel = np.clip(kernel, 0.0, None)
    return StochasticKernel(kernel, atol=1e-10)


def semigroup_growth_from_lyapunov(sigma: float, b: float) -> SemigroupGrowth:
    """Growth implied by LV <= -sigma V + b: C_V = 1 + b/sigma, omega_V = 0."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return SemigroupGrowth(C_V=1.0 + max(b, 0.0) / sigma, omega_V=0.0)


def check_semigroup_growth(L: GeneratorMatrix, V: Sequence[float],
                           growth: SemigroupGrowth,
                           t_grid: Iterable[float]) -> dict:
    """
    Verify (P_t V)(x) <= C_V exp(omega_V t) V(x) for every state and grid time.

    Returns:
        Dict with ``passed``, ``worst_ratio`` and the witness time/state
    """
    V = np.asarray(V, dtype=float)
    worst = {"ratio": 0.0, "t": None, "state": None}
    for t in t_grid:
        PtV = dual_apply(semigroup_at(L, float(t)), V)
        ratios = PtV / (growth.factor(float(t)) * V)
        state = int(np.argmax(ratios))
        if ratios[state] > worst["ratio"]:
            worst = {"ratio": float(ratios[state]), "t": float(t), "state": state}
    return {"passed": worst["ratio"] <= 1.0 + 1e-10, "worst_ratio": worst["ratio"],
            "witness": worst}


def stationary_vectors(S: StochasticKernel) -> np.ndarray:
    """
    One stationary probability vector per closed class, as rows.

    Every invariant probability measure is a convex combination of them.
    """
    return np.vstack([_class_fixed_vector(S, members) for members in _closed_classes(S)])
