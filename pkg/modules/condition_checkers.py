"""
Condition Checkers Module
=========================

Turns a concrete kernel and weight into machine-checkable certificates:
- Doeblin minorization (columnwise minimum over all states)
- Harris minorization on a sublevel set {V <= R}
- geometric Lyapunov drift PV <= gamma_L V + K
- weak Lyapunov drift PV + sigma_bar phi(V) <= V + K
- local coupling of S^N on pairs with V(x) + V(y) <= A
- concave-composition bound for psi(V)

Drift conditions are checked at the point masses, which is exact on a
finite space; the measure-level forms are kept as randomized checks.
A checker that cannot certify returns a CertificationFailure instead of
raising.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .kernel_ops import StochasticKernel, dual_apply, kernel_power
from .measure_core import (random_probability, random_zero_mean,
                           total_variation, weighted_norm)
from .scalar_functions import ScalarFunction
from .utils import content_hash


logger = logging.getLogger(__name__)

COMPOSE_SLACK = 1e-10
DEFAULT_K_QUANTILES = (0.5, 0.75, 0.9, 0.95, 1.0)
K_FLOOR = 1e-12


@dataclass(frozen=True)
class CertificationFailure:
    """Why a hypothesis could not be certified, with the offending witness."""

    condition: str
    reason: str
    witness: Any = None
    detail: str = ""

    ok = False

    def to_dict(self) -> Dict[str, Any]:
        return {"condition": self.condition, "reason": self.reason,
                "witness": self.witness, "detail": self.detail}


@dataclass(frozen=True)
class DoeblinCert:
    alpha: float
    eta: np.ndarray
    input_hash: str

    ok = True

    def to_dict(self):
        return {"kind": "doeblin", "alpha": self.alpha, "eta": self.eta,
                "input_hash": self.input_hash}


@dataclass(frozen=True)
class HarrisCert:
    alpha: float
    eta: np.ndarray
    set_C: Tuple[int, ...]
    R: float
    input_hash: str
    N: int = 1

    ok = True

    def to_dict(self):
        return {"kind": "harris", "alpha": self.alpha, "eta": self.eta,
                "set_C": list(self.set_C), "R": self.R, "N": self.N,
                "input_hash": self.input_hash}


@dataclass(frozen=True)
class LyapunovCert:
    gamma_L: float
    K: float
    input_hash: str
    grid: Tuple[Tuple[float, float], ...] = ()

    ok = True

    def to_dict(self):
        return {"kind": "lyapunov", "gamma_L": self.gamma_L, "K": self.K,
                "grid": [list(item) for item in self.grid],
                "input_hash": self.input_hash}


@dataclass(frozen=True)
class WeakLyapunovCert:
    sigma_bar: float
    K: float
    phi: ScalarFunction
    input_hash: str
    grid: Tuple[Tuple[float, float], ...] = ()

    ok = True

    def to_dict(self):
        return {"kind": "weak_lyapunov", "sigma_bar": self.sigma_bar, "K": self.K,
                "phi": self.phi.to_dict(),
                "grid": [list(item) for item in self.grid],
                "input_hash": self.input_hash}


@dataclass(frozen=True)
class CouplingCert:
    A: float
    gamma_H: float
    N: int
    input_hash: str
    scope: str = "measure"
    witness: Optional[Tuple[int, int]] = None

    ok = True

    def to_dict(self):
        return {"kind": "coupling", "A": self.A, "gamma_H": self.gamma_H,
                "N": self.N, "scope": self.scope, "witness": self.witness,
                "input_hash": self.input_hash}


def check_doeblin(S: StochasticKernel):
    """
    alpha = sum_y min_x K(x, y), eta = columnwise minimum / alpha.

    Returns:
        DoeblinCert, or CertificationFailure when alpha = 0
    """
    column_min = S.matrix.min(axis=0)
    alpha = float(column_min.sum())
    if alpha <= 0.0:
        witness = [[int(y), int(np.argmin(S.matrix[:, y]))] for y in range(S.size)]
        logger.warning("Doeblin condition fails: every column has a zero entry")
        return CertificationFailure("doeblin", "zero_mass", witness,
                                    "columnwise minimum has zero total mass")
    eta = column_min / alpha
    return DoeblinCert(alpha=min(alpha, 1.0), eta=eta, input_hash=S.content_hash)


def check_harris(S: StochasticKernel, V: Sequence[float], R: float, N: int = 1):
    """
    Doeblin minorization restricted to rows in C = {x : V(x) <= R} of S^N.

    Returns:
        HarrisCert, or CertificationFailure (``empty_set`` when C is
        empty, ``zero_mass`` when the restricted minimum vanishes)
    """
    V = np.asarray(V, dtype=float)
    if not R > 0:
        raise ValueError(f"Harris threshold R must be positive, got {R}")
    kernel = S if N == 1 else kernel_power(S, N)
    members = np.flatnonzero(V <= R)
    if members.size == 0:
        return CertificationFailure("harris", "empty_set", {"R": R, "min_V": float(V.min())},
                                    f"no state has V <= {R}")
    column_min = kernel.matrix[members].min(axis=0)
    alpha = float(column_min.sum())
    if alpha <= 0.0:
        return CertificationFailure("harris", "zero_mass", [int(x) for x in members],
                                    "rows of C have no common mass")
    return HarrisCert(alpha=min(alpha, 1.0), eta=column_min / alpha,
                      set_C=tuple(int(x) for x in members), R=float(R),
                      input_hash=content_hash(S, V, R=R, N=N), N=int(N))


def lyapunov_gamma(PV: np.ndarray, V: np.ndarray, K: float) -> float:
    """gamma_L(K) = max(0, max_x (PV(x) - K) / V(x))."""
    return max(0.0, float(np.max((PV - K) / V)))


def default_K_grid(PV: np.ndarray) -> List[float]:
    return [float(q) for q in np.quantile(PV, DEFAULT_K_QUANTILES)]


def check_lyapunov(S: StochasticKernel, V: Sequence[float],
                   K_grid: Optional[Sequence[float]] = None,
                   coupling: Optional[CouplingCert] = None,
                   objective: Optional[Callable[[float, float], float]] = None):
    """
    Fit PV <= gamma_L V + K over a grid of K.

    The pair with gamma_L < 1 minimizing ``objective(gamma_L, K)`` wins.
    The default objective is the final Harris rate when a coupling
    certificate is supplied, else gamma_L itself.
    """
    V = np.asarray(V, dtype=float)
    PV = dual_apply(S, V)
    grid = default_K_grid(PV) if K_grid is None else [float(k) for k in K_grid]
    if not grid or any(k < 0 for k in grid):
        raise ValueError("K_grid must be non-empty with entries >= 0")

    table = tuple((K, lyapunov_gamma(PV, V, K)) for K in sorted(set(grid)))
    usable = [(K, g) for K, g in table if g < 1.0]
    if not usable:
        K_worst = table[-1][0]
        state = int(np.argmax((PV - K_worst) / V))
        return CertificationFailure("lyapunov", "not_contractive", state,
                                    f"gamma_L >= 1 for every K; worst ratio at state {state}")

    if objective is None and coupling is not None:
        from .geometric_rates import harris_gamma_for

        def objective(gamma_L, K):
            return harris_gamma_for(gamma_L, K, coupling.gamma_H, coupling.A)
    if objective is None:
        def objective(gamma_L, K):
            return gamma_L

    K, gamma_L = min(usable, key=lambda item: (objective(item[1], item[0]), item[0]))
    return LyapunovCert(gamma_L=gamma_L, K=K, grid=table,
                        input_hash=content_hash(S, V, K_grid=list(grid)))


def weak_lyapunov_K(PV: np.ndarray, V: np.ndarray, phi_V: np.ndarray,
                    sigma_bar: float, floor: float = K_FLOOR) -> float:
    """K(sigma_bar) = max_x (PV + sigma_bar phi(V) - V), floored at ``floor``."""
    return max(floor, float(np.max(PV + sigma_bar * phi_V - V)))


def check_weak_lyapunov(S: StochasticKernel, V: Sequence[float], phi: ScalarFunction,
                        sigma_grid: Optional[Sequence[float]] = None,
                        A: Optional[float] = None, floor: float = K_FLOOR):
    """
    Fit PV + sigma_bar phi(V) <= V + K over a grid of sigma_bar.

    With ``A`` the pair maximizing sigma_bar - K/A is returned, otherwise
    the one maximizing sigma_bar / K.

    Raises:
        ValueError: If phi is not a valid sublinear rate or a grid entry
            lies outside (0, 1)
    """
    if phi.role != "phi":
        report = phi.check_phi_role()
        if not report["passed"]:
            raise ValueError(f"Function rejected as phi: {report['reason']}")
    V = np.asarray(V, dtype=float)
    grid = list(np.linspace(0.01, 0.99, 99)) if sigma_grid is None else list(sigma_grid)
    if not grid or any(not 0.0 < s < 1.0 for s in grid):
        raise ValueError("sigma_grid entries must lie in (0, 1)")

    PV = dual_apply(S, V)
    phi_V = phi(V)
    table = tuple((float(s), weak_lyapunov_K(PV, V, phi_V, s, floor)) for s in sorted(set(grid)))

    if A is not None:
        scored = [(s - K / A, s, K) for s, K in table]
        score, sigma_bar, K = max(scored, key=lambda item: (item[0], -item[1]))
        if score <= 0.0:
            return CertificationFailure(
                "weak_lyapunov", "no_admissible_constant", {"A": A},
                f"sigma_bar - K/A <= 0 on the whole grid (best {score:.3g})")
    else:
        score, sigma_bar, K = max(((s / K, s, K) for s, K in table),
                                  key=lambda item: (item[0], -item[1]))
    return WeakLyapunovCert(sigma_bar=sigma_bar, K=K, phi=phi, grid=table,
                            input_hash=content_hash(S, V, phi_V, sigma_grid=grid))


def check_local_coupling(S: StochasticKernel, V: Sequence[float], A: float, N: int):
    """
    gamma_H = 1/2 max ||S^N (delta_x - delta_y)|| over pairs with
    V(x) + V(y) <= A.

    Returns:
        Pairwise CouplingCert, or CertificationFailure (``vacuous`` when
        no pair qualifies, ``not_contractive`` when gamma_H >= 1)
    """
    if not A > 0:
        raise ValueError(f"A must be positive, got {A}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    V = np.asarray(V, dtype=float)
    members = np.flatnonzero(2.0 * V <= A)
    if members.size == 0:
        return CertificationFailure("coupling", "vacuous", {"A": A},
                                    f"no pair (x, y) has V(x) + V(y) <= {A}")
    rows = kernel_power(S, N).matrix if N > 1 else S.matrix

    gamma_H, witness = 0.0, (int(members[0]), int(members[0]))
    for x in members:
        partners = members[V[members] + V[x] <= A]
        partners = partners[partners > x]
        if partners.size == 0:
            continue
        distances = np.abs(rows[partners] - rows[x]).sum(axis=1)
        best = int(np.argmax(distances))
        if 0.5 * distances[best] > gamma_H:
            gamma_H, witness = 0.5 * float(distances[best]), (int(x), int(partners[best]))

    if gamma_H >= 1.0:
        logger.warning(f"Local coupling fails at A={A}, N={N}: pair {witness} has disjoint rows")
        return CertificationFailure("coupling", "not_contractive", list(witness),
                                    f"||S^N(delta_x - delta_y)|| = 2 for pair {witness}")
    return CouplingCert(A=float(A), gamma_H=gamma_H, N=int(N), scope="pairwise",
                        witness=witness, input_hash=content_hash(S, V, A=A, N=N))


def harris_to_coupling(cert: HarrisCert, A: float) -> CouplingCert:
    """
    Measure-level coupling from a Harris certificate:
    gamma_H = 1 - alpha (1 - 2A/R) for 0 < A < R/2.

    Raises:
        ValueError: If A is outside (0, R/2)
    """
    if not 0.0 < A < cert.R / 2.0:
        raise ValueError(f"A must lie in (0, R/2) = (0, {cert.R / 2.0}), got {A}")
    gamma_H = 1.0 - cert.alpha * (1.0 - 2.0 * A / cert.R)
    return CouplingCert(A=float(A), gamma_H=gamma_H, N=cert.N, scope="measure",
                        input_hash=content_hash(cert.input_hash, A=A))


def pairwise_to_measure(cert: CouplingCert, A: float) -> CouplingCert:
    """
    Measure-level coupling from a pairwise certificate with threshold A_p,
    valid for 0 < A < A_p/2 with gamma = 1 - (1 - gamma_p)(1 - 2A/A_p).

    Product coupling of nu+ and nu- puts at most 2A/A_p of the mass on
    pairs outside the certified set.
    """
    if cert.scope == "measure":
        return cert
    if not 0.0 < A < cert.A / 2.0:
        raise ValueError(f"A must lie in (0, A_p/2) = (0, {cert.A / 2.0}), got {A}")
    gamma_H = 1.0 - (1.0 - cert.gamma_H) * (1.0 - 2.0 * A / cert.A)
    return CouplingCert(A=float(A), gamma_H=gamma_H, N=cert.N, scope="measure",
                        witness=cert.witness, input_hash=content_hash(cert.input_hash, A=A))


def concave_compose_bound(S: StochasticKernel, V: Sequence[float], phi: ScalarFunction,
                          psi: ScalarFunction, sigma_bar: float, K: float) -> Dict[str, Any]:
    """
    Check P psi(V) <= psi(V) - sigma_bar psi'(V) phi(V) + K psi'(V)
    state by state, with slack 1e-10.

    Raises:
        ValueError: If psi fails the concavity test on [1, max V]
    """
    V = np.asarray(V, dtype=float)
    d_lo, d_hi = psi.domain()
    lo = max(1.0, d_lo)
    concavity = psi.check_concave(np.random.default_rng(0), count=500, lo=lo,
                                  hi=min(d_hi, max(lo, float(V.max()))))
    if not concavity["passed"]:
        raise ValueError(f"psi is not concave on [1, {V.max():.6g}]; "
                         f"witness triple {concavity['witness']}")
    lhs = dual_apply(S, psi(V))
    dpsi = psi.derivative(V)
    rhs = psi(V) - sigma_bar * dpsi * phi(V) + K * dpsi + COMPOSE_SLACK
    margins = rhs - lhs
    worst = int(np.argmin(margins))
    return {"passed": bool(margins[worst] >= 0.0), "worst_margin": float(margins[worst]),
            "worst_state": worst}


def _admissible_samples(rng, V: np.ndarray, A: float, count: int) -> np.ndarray:
    # supported on {V <= A}, so ||nu||_V <= A ||nu|| holds by construction
    support = np.flatnonzero(V <= A)
    samples = np.zeros((count, V.size))
    if support.size >= 2:
        samples[:, support] = random_zero_mean(rng, support.size, count)
    return samples


def measure_level_coupling_check(S: StochasticKernel, V: Sequence[float], cert: CouplingCert,
                                 rng: np.random.Generator, count: int = 1000) -> Dict[str, Any]:
    """
    Randomized cross-check of a coupling certificate against whole measures.

    Measure-scope certificates are tested on zero-mean nu with
    ||nu||_V <= A ||nu||; pairwise ones on random mixtures of qualifying
    pair differences.
    """
    V = np.asarray(V, dtype=float)
    kernel = kernel_power(S, cert.N) if cert.N > 1 else S
    if cert.scope == "measure":
        samples = _admissible_samples(rng, V, cert.A, count)
        draws = random_zero_mean(rng, V.size, count)
        admissible = np.array([weighted_norm(nu, V) <= cert.A * total_variation(nu) for nu in draws])
        samples = np.vstack([samples, draws[admissible]])
    else:
        members = np.flatnonzero(2.0 * V <= cert.A)
        pairs = [(x, y) for x in members for y in members
                 if x < y and V[x] + V[y] <= cert.A]
        samples = np.zeros((count if pairs else 0, V.size))
        for row in samples:
            weights = rng.dirichlet(np.ones(len(pairs)))
            for weight, (x, y) in zip(weights, pairs):
                row[x] += weight
                row[y] -= weight

    worst, witness = 0.0, None
    for index, nu in enumerate(samples):
        mass = total_variation(nu)
        if mass <= 1e-14:
            continue
        ratio = total_variation(nu @ kernel.matrix) / mass
        if ratio > worst:
            worst, witness = ratio, index
    return {"passed": worst <= cert.gamma_H + 1e-12, "worst_ratio": worst,
            "gamma_H": cert.gamma_H, "samples": int(len(samples)), "witness": witness}


def lyapunov_measure_check(S: StochasticKernel, V: Sequence[float], cert,
                           rng: np.random.Generator, count: int = 1000) -> Dict[str, Any]:
    """
    Randomized measure-level check of the drift certificate:
    ||S mu||_V <= gamma_L ||mu||_V + K ||mu||, or for a weak certificate
    ||S mu||_V + sigma_bar ||mu||_{phi(V)} <= ||mu||_V + K ||mu||.
    """
    V = np.asarray(V, dtype=float)
    half = count // 2
    measures = np.vstack([random_zero_mean(rng, V.size, half),
                          random_probability(rng, V.size, count - half)])
    worst = -np.inf
    for mu in measures:
        image = weighted_norm(mu @ S.matrix, V)
        if isinstance(cert, LyapunovCert):
            bound = cert.gamma_L * weighted_norm(mu, V) + cert.K * total_variation(mu)
            lhs = image
        else:
            bound = weighted_norm(mu, V) + cert.K * total_variation(mu)
            lhs = image + cert.sigma_bar * weighted_norm(mu, cert.phi(V))
        worst = max(worst, (lhs - bound) / max(1.0, bound))
    return {"passed": bool(worst <= 1e-10), "worst_excess": float(worst), "samples": int(count)}
