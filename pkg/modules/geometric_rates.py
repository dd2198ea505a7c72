"""
Geometric Rates Module
======================

Explicit exponential envelopes:
- Doeblin: ||S^n nu|| <= (1 - alpha)^n ||nu||
- Harris: ||S^n nu||_V <= C gamma^n ||nu||_V with the optimal beta
- the 2x2 coupling-matrix criterion
- continuous-time transfers from a time-T certificate
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .condition_checkers import (CertificationFailure, CouplingCert, DoeblinCert,
                                 HarrisCert, LyapunovCert, check_harris, default_K_grid,
                                 harris_to_coupling, lyapunov_gamma)
from .kernel_ops import SemigroupGrowth, StochasticKernel, dual_apply, kernel_power
from .measure_core import random_zero_mean, triple_norm
from .utils import content_hash


logger = logging.getLogger(__name__)

BETA_SEARCH_MAX = 1e3
NORM_TAGS = ("tv", "v1", "v2", "triple")


@dataclass(frozen=True)
class GeometricEnvelope:
    """
    C * gamma**n (discrete) or C * exp(-lam * t) (continuous).

    ``norm_tag`` is the norm being bounded, ``reference_tag`` the norm of
    the initial measure it is measured against.
    """

    C: float
    gamma: Optional[float] = None
    lam: Optional[float] = None
    norm_tag: str = "tv"
    reference_tag: str = "tv"
    beta: Optional[float] = None
    equalized: bool = True

    def __post_init__(self):
        if self.C < 1.0 - 1e-12:
            raise ValueError(f"Envelope prefactor must be >= 1, got {self.C}")
        if (self.gamma is None) == (self.lam is None):
            raise ValueError("Exactly one of gamma and lam must be given")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.lam is not None and not self.lam > 0.0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.norm_tag not in NORM_TAGS or self.reference_tag not in NORM_TAGS:
            raise ValueError(f"Unknown norm tag {self.norm_tag}/{self.reference_tag}")

    @property
    def continuous(self) -> bool:
        return self.lam is not None

    def value(self, n):
        """Envelope at step n (or time t), vectorized."""
        n = np.asarray(n, dtype=float)
        if self.continuous:
            result = self.C * np.exp(-self.lam * n)
        else:
            result = self.C * np.power(self.gamma, n)
        return float(result) if result.ndim == 0 else result

    def to_dict(self):
        return {"type": "geometric", "C": self.C, "gamma": self.gamma, "lambda": self.lam,
                "norm_tag": self.norm_tag, "reference_tag": self.reference_tag,
                "beta": self.beta, "equalized": self.equalized}


def doeblin_rate(cert: DoeblinCert) -> GeometricEnvelope:
    """C = 1, gamma = 1 - alpha in total variation."""
    return GeometricEnvelope(C=1.0, gamma=max(0.0, 1.0 - cert.alpha))


def harris_gamma(beta: float, gamma_H: float, gamma_L: float, K: float, A: float) -> float:
    """max{gamma_H + beta K, 1 - beta/(1 + beta) (1 - gamma_L - K/A)}."""
    b = 1.0 - gamma_L - K / A
    return max(gamma_H + beta * K, 1.0 - beta / (1.0 + beta) * b)


def _validate_harris_inputs(gamma_H, gamma_L, K, A):
    if not 0.0 <= gamma_H < 1.0:
        raise ValueError(f"gamma_H must lie in [0, 1), got {gamma_H}")
    if not 0.0 <= gamma_L < 1.0:
        raise ValueError(f"gamma_L must lie in [0, 1), got {gamma_L}")
    if K < 0.0:
        raise ValueError(f"K must be >= 0, got {K}")
    if not A > 0.0:
        raise ValueError(f"A must be positive, got {A}")
    b = 1.0 - gamma_L - K / A
    if b <= 0.0:
        raise ValueError(f"1 - gamma_L - K/A = {b:.6g} must be positive")
    return 1.0 - gamma_H, b


def _equalizing_root(K: float, a: float, b: float) -> float:
    # positive root of K beta^2 + (K + b - a) beta - a = 0, cancellation-free
    B = K + b - a
    root = math.sqrt(B * B + 4.0 * K * a)
    if B >= 0.0:
        return 2.0 * a / (B + root)
    return (root - B) / (2.0 * K)


def optimal_beta(gamma_H: float, gamma_L: float, K: float, A: float,
                 beta_max: float = BETA_SEARCH_MAX) -> Tuple[float, bool]:
    """
    Return (beta, equalized).

    The equalizing root is used when both branches of the rate land in
    (0, 1); otherwise (and always for K = 0) beta minimizes the rate by
    bounded golden-section search over (0, beta_max].
    """
    a, b = _validate_harris_inputs(gamma_H, gamma_L, K, A)
    if K > 0.0:
        beta = _equalizing_root(K, a, b)
        first = gamma_H + beta * K
        second = 1.0 - beta / (1.0 + beta) * b
        if 0.0 < first < 1.0 and 0.0 < second < 1.0:
            return beta, True

    result = minimize_scalar(lambda beta: harris_gamma(beta, gamma_H, gamma_L, K, A),
                             bounds=(1e-12, beta_max), method="bounded",
                             options={"xatol": 1e-12})
    logger.debug(f"Non-equalized beta = {result.x:.6g} (K = {K})")
    return float(result.x), False


def harris_beta_optimal(gamma_H: float, gamma_L: float, K: float, A: float) -> float:
    """
    Optimal beta for the Harris contraction.

    Raises:
        ValueError: If 1 - gamma_L - K/A <= 0 or a parameter is out of range
    """
    return optimal_beta(gamma_H, gamma_L, K, A)[0]


def harris_gamma_for(gamma_L: float, K: float, gamma_H: float, A: float) -> float:
    """Rate at the optimal beta, or inf when 1 - gamma_L <= K/A."""
    try:
        beta, _ = optimal_beta(gamma_H, gamma_L, K, A)
    except ValueError:
        return math.inf
    return harris_gamma(beta, gamma_H, gamma_L, K, A)


def harris_rate(lyap: LyapunovCert, coup: CouplingCert):
    """
    Harris envelope in the V-weighted norm with C = (1 + beta)/beta.

    Returns:
        (GeometricEnvelope, beta), or CertificationFailure naming the
        violated inequality

    Raises:
        ValueError: If the coupling certificate is for a power N > 1
    """
    if coup.N != 1:
        raise ValueError(f"harris_rate needs a one-step coupling, got N = {coup.N}")
    if coup.scope != "measure":
        logger.warning("Harris rate built from a pairwise coupling certificate; "
                       "convert with pairwise_to_measure for a certified envelope")
    b = 1.0 - lyap.gamma_L - lyap.K / coup.A
    if b <= 0.0:
        return CertificationFailure(
            "harris_rate", "precondition", {"gamma_L": lyap.gamma_L, "K": lyap.K, "A": coup.A},
            f"K/A < 1 - gamma_L violated: K/A = {lyap.K / coup.A:.6g}, "
            f"1 - gamma_L = {1.0 - lyap.gamma_L:.6g}")

    beta, equalized = optimal_beta(coup.gamma_H, lyap.gamma_L, lyap.K, coup.A)
    gamma = harris_gamma(beta, coup.gamma_H, lyap.gamma_L, lyap.K, coup.A)
    if not gamma < 1.0:
        return CertificationFailure("harris_rate", "not_contractive", {"gamma": gamma},
                                    "assembled rate is not below 1")
    envelope = GeometricEnvelope(C=(1.0 + beta) / beta, gamma=gamma, norm_tag="v1",
                                 reference_tag="v1", beta=beta, equalized=equalized)
    return envelope, beta


def harris_tv_envelope(envelope: GeometricEnvelope) -> GeometricEnvelope:
    """||S^n nu|| <= (1 + beta) gamma^n ||nu||_V, from the triple-norm contraction."""
    return GeometricEnvelope(C=1.0 + envelope.beta, gamma=envelope.gamma, norm_tag="tv",
                             reference_tag="v1", beta=envelope.beta,
                             equalized=envelope.equalized)


def harris_rate_from_harris(lyap: LyapunovCert, harris: HarrisCert, A: Optional[float] = None):
    """Harris-set route: measure-level coupling at A (default R/4), then harris_rate."""
    A = harris.R / 4.0 if A is None else A
    if 2.0 * lyap.K / harris.R >= 1.0 - lyap.gamma_L:
        return CertificationFailure(
            "harris_rate", "precondition", {"K": lyap.K, "R": harris.R},
            f"2K/R < 1 - gamma_L violated: 2K/R = {2.0 * lyap.K / harris.R:.6g}")
    return harris_rate(lyap, harris_to_coupling(harris, A))


def coupling_matrix_rate(gamma_L: float, K: float, gamma_H: float, A: float) -> float:
    """
    Spectral radius of [[gamma_L, K], [(1 - gamma_H)/A, gamma_H]] from
    its characteristic polynomial.
    """
    trace = gamma_L + gamma_H
    det = gamma_L * gamma_H - K * (1.0 - gamma_H) / A
    # discriminant = (gamma_L - gamma_H)^2 + 4K(1 - gamma_H)/A >= 0
    disc = (gamma_L - gamma_H) ** 2 + 4.0 * K * (1.0 - gamma_H) / A
    root = math.sqrt(max(disc, 0.0))
    return max(abs(0.5 * (trace + root)), abs(0.5 * (trace - root)))


def semigroup_doeblin_rate(alpha: float, T: float) -> GeometricEnvelope:
    """
    C = 1/(1 - alpha), lambda = -log(1 - alpha)/T.

    Raises:
        ValueError: If alpha is not in (0, 1) or T <= 0
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    return GeometricEnvelope(C=1.0 / (1.0 - alpha), lam=-math.log1p(-alpha) / T)


def stepped_doeblin_envelope(alpha: float, T: float, t):
    """(1 - alpha)^floor(t/T)."""
    return np.power(1.0 - alpha, np.floor(np.asarray(t, dtype=float) / T))


def semigroup_harris_rate(envelope: GeometricEnvelope, growth: SemigroupGrowth,
                          beta: float, T: float) -> GeometricEnvelope:
    """
    C = C_V exp(omega_V T)(1 + beta)/(gamma beta), lambda = -log(gamma)/T.

    Raises:
        ValueError: If gamma is not in (0, 1)
    """
    gamma = envelope.gamma
    if gamma is None or not 0.0 < gamma < 1.0:
        raise ValueError(f"envelope gamma must lie in (0, 1), got {gamma}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    C = growth.factor(T) * (1.0 + beta) / (gamma * beta)
    return GeometricEnvelope(C=C, lam=-math.log(gamma) / T, norm_tag="v1",
                             reference_tag="v1", beta=beta, equalized=envelope.equalized)


def triple_norm_contraction_check(S: StochasticKernel, V, beta: float, gamma: float,
                                  rng: np.random.Generator, count: int = 200) -> dict:
    """Worst triple(S nu)/triple(nu) over random zero-mean nu; must be <= gamma."""
    V = np.asarray(V, dtype=float)
    worst = 0.0
    for nu in random_zero_mean(rng, V.size, count):
        ratio = triple_norm(nu @ S.matrix, V, beta) / triple_norm(nu, V, beta)
        worst = max(worst, ratio)
    return {"passed": worst <= gamma * (1.0 + 1e-9), "worst_ratio": worst, "gamma": gamma}


def _best_harris_threshold(gamma_L: float, K: float, harris: HarrisCert, points: int = 200):
    candidates = np.linspace(0.0, harris.R / 2.0, points + 2)[1:-1]
    scored = [(harris_gamma_for(gamma_L, K, 1.0 - harris.alpha * (1.0 - 2.0 * A / harris.R), A), A)
              for A in candidates]
    return min(scored)


def harris_power_rate(S: StochasticKernel, V, N: int = 1,
                      K_grid: Optional[Sequence[float]] = None, points: int = 200):
    """
    Harris envelope for S from a certificate of S^N.

    For each K in the grid the threshold is R = 4K/(1 - gamma_L), so that
    2K/R < 1 - gamma_L holds with room; the pair and coupling level A
    giving the smallest rate win. The S^N envelope is lifted to S with
    gamma' = gamma^(1/N) and the prefactor absorbing max_x P^r V/V for
    r < N.

    Returns:
        (V-norm envelope, TV envelope, context dict), or CertificationFailure
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    V = np.asarray(V, dtype=float)
    power = kernel_power(S, N) if N > 1 else S
    PV = dual_apply(power, V)
    grid = default_K_grid(PV) if K_grid is None else [float(k) for k in K_grid]

    best = None
    for K in sorted(set(grid)):
        gamma_L = lyapunov_gamma(PV, V, K)
        if not gamma_L < 1.0 or K <= 0.0:
            continue
        harris = check_harris(power, V, 4.0 * K / (1.0 - gamma_L))
        if not harris.ok:
            continue
        gamma, A = _best_harris_threshold(gamma_L, K, harris, points)
        if best is None or gamma < best[0]:
            best = (gamma, K, gamma_L, harris, float(A))
    if best is None or not math.isfinite(best[0]):
        return CertificationFailure("harris_power", "not_contractive", {"N": N},
                                    "no K on the grid gives a Harris certificate of S^N")

    _, K, gamma_L, harris, A = best
    lyap = LyapunovCert(gamma_L=gamma_L, K=K, input_hash=content_hash(power, V, K=K))
    coupling = harris_to_coupling(harris, A)
    result = harris_rate(lyap, coupling)
    if isinstance(result, CertificationFailure):
        return result
    envelope, beta = result
    gamma = envelope.gamma ** (1.0 / N)
    if not gamma < 1.0:
        return CertificationFailure("harris_power", "not_contractive", {"gamma": envelope.gamma},
                                    "per-step rate rounds to 1")

    # |||S^r nu||| <= (1 + beta max_x (P^r V / V)(x)) ||nu||_V for the r < N leftover steps
    moment = V.copy()
    lift = 1.0 + beta
    for r in range(1, N):
        moment = dual_apply(S, moment)
        growth = float(np.max(moment / V))
        lift = max(lift, (1.0 + beta * growth) * envelope.gamma ** (-r / N))
    v_envelope = GeometricEnvelope(C=lift / beta, gamma=gamma, norm_tag="v1",
                                   reference_tag="v1", beta=beta, equalized=envelope.equalized)
    tv_envelope = GeometricEnvelope(C=lift, gamma=gamma,
                                    norm_tag="tv", reference_tag="v1", beta=beta,
                                    equalized=envelope.equalized)
    logger.info(f"Harris route on S^{N}: gamma_L={gamma_L:.4g}, K={K:.4g}, "
                f"R={harris.R:.4g}, A={A:.4g}, per-step gamma={gamma:.6g}")
    context = {"lyapunov": lyap, "harris": harris, "coupling": coupling, "N": N,
               "power_envelope": envelope}
    return v_envelope, tv_envelope, context
