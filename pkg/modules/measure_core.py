"""
Measure Core Module
===================

Finite signed measures on a finite state space:
- Hahn-Jordan split into positive and negative parts
- total variation and V-weighted norms
- the modified norm ||mu|| + beta * ||mu||_V used for Harris contractions
- seeded random probability and zero-mean measures

Measures and weights are plain read-only numpy vectors indexed by state.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


ZERO_MEAN_ATOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    """Finite state space with optional distinct labels."""

    size: int
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError(f"State space size must be >= 1, got {self.size}")
        if self.labels is not None:
            labels = tuple(str(label) for label in self.labels)
            if len(labels) != self.size:
                raise ValueError(
                    f"Expected {self.size} labels, got {len(labels)}"
                )
            if len(set(labels)) != len(labels):
                raise ValueError("State labels must be distinct")
            object.__setattr__(self, "labels", labels)

    def label(self, index: int) -> str:
        return self.labels[index] if self.labels else str(index)


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


def as_measure(values: Sequence[float], space: Optional[StateSpace] = None) -> np.ndarray:
    """
    Validate and copy a signed measure.

    Args:
        values: Mass per state
        space: Optional state space the measure must live on

    Returns:
        Read-only float vector

    Raises:
        ValueError: If entries are not finite or the length is wrong
    """
    array = np.array(values, dtype=float).reshape(-1)
    if array.size == 0:
        raise ValueError("Measure must have at least one state")
    if not np.all(np.isfinite(array)):
        raise ValueError("Measure entries must be finite")
    if space is not None and array.size != space.size:
        raise ValueError(
            f"Measure has {array.size} entries, state space has {space.size}"
        )
    return _frozen(array)


def as_weight(values: Sequence[float], space: Optional[StateSpace] = None) -> np.ndarray:
    """
    Validate a weight function V with every entry >= 1.

    Raises:
        ValueError: If an entry is below 1 or not finite
    """
    array = np.array(as_measure(values, space), dtype=float)
    if np.any(array < 1.0):
        worst = int(np.argmin(array))
        raise ValueError(
            f"Weight function must be >= 1 everywhere; V[{worst}] = {array[worst]}"
        )
    return _frozen(array)


def _check_lengths(mu: np.ndarray, V: np.ndarray) -> None:
    if mu.shape != V.shape:
        raise ValueError(
            f"Length mismatch: measure has {mu.size} states, weight has {V.size}"
        )


def is_zero_mean(mu: Sequence[float], atol: float = ZERO_MEAN_ATOL) -> bool:
    """True when the total mass is zero within ``atol``."""
    return bool(abs(float(np.sum(mu))) <= atol)


def hahn_jordan(mu: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split mu into (mu_plus, mu_minus), both nonnegative with disjoint supports.
    """
    values = np.asarray(mu, dtype=float)
    positive = np.where(values > 0.0, values, 0.0)
    negative = np.where(values < 0.0, -values, 0.0)
    return _frozen(positive), _frozen(negative)


def total_variation(mu: Sequence[float]) -> float:
    """Sum of absolute masses."""
    return float(np.sum(np.abs(np.asarray(mu, dtype=float))))


def weighted_norm(mu: Sequence[float], V: Sequence[float]) -> float:
    """
    ||mu||_V = sum_x V(x) |mu(x)|.

    Raises:
        ValueError: On length mismatch
    """
    mu = np.asarray(mu, dtype=float)
    V = np.asarray(V, dtype=float)
    _check_lengths(mu, V)
    return float(np.dot(V, np.abs(mu)))


def triple_norm(mu: Sequence[float], V: Sequence[float], beta: float) -> float:
    """
    ||mu|| + beta * ||mu||_V.

    Raises:
        ValueError: If beta <= 0 or lengths differ
    """
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    return total_variation(mu) + beta * weighted_norm(mu, V)


def norm_equivalence_bounds(mu: Sequence[float], V: Sequence[float],
                            beta: float) -> Tuple[float, float, float]:
    """
    Return (min(1, beta)*||mu||_V, triple norm, (1 + beta)*||mu||_V).
    """
    weighted = weighted_norm(mu, V)
    return (min(1.0, beta) * weighted, triple_norm(mu, V, beta),
            (1.0 + beta) * weighted)


def random_probability(rng: np.random.Generator, size: int, count: int = 1) -> np.ndarray:
    """Dirichlet(1) probability vectors, one per row."""
    return rng.dirichlet(np.ones(size), size=count)


def random_zero_mean(rng: np.random.Generator, size: int, count: int = 1) -> np.ndarray:
    """
    Zero-mean measures nu = p - q with p, q independent Dirichlet(1) draws.

    Rows are re-centred so the mass is zero to working precision.
    """
    p = rng.dirichlet(np.ones(size), size=count)
    q = rng.dirichlet(np.ones(size), size=count)
    nu = p - q
    # float drift from the two normalizations
    nu -= nu.mean(axis=1, keepdims=True)
    return nu
