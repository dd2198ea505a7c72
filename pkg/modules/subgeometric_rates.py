"""
Subgeometric Rates Module
=========================

Rate calculus for weak (subgeometric) Lyapunov conditions:
- numerical Legendre transforms xi* and xi_*
- F(lambda) = int_lambda^1 ds/g(s) and its inverse Theta = F^-1
- the difference-inequality bounds and the shift constant
- assembly of the interpolated subgeometric Harris envelopes
- the Feller pipeline f = psi/v, g = psi' phi/v, h = g o f^-1

Every rate function is tabulated; closed forms only appear in tests.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .condition_checkers import (CertificationFailure, CouplingCert, WeakLyapunovCert,
                                 check_harris, check_weak_lyapunov, harris_to_coupling)
from .kernel_ops import StochasticKernel
from .scalar_functions import ScalarFunction, log_quad, sampled


logger = logging.getLogger(__name__)

LEGENDRE_COARSE_POINTS = 2049
LEGENDRE_ROUNDS = 3
INFINITY_CAP = 1e12
LOWER_CUTOFF = 1e-12
SHIFT_MARGIN = 1.05
PSI_EPSILON = 0.1
# smallest lambda the inversion will extend a table to
FLOAT_FLOOR = 1e-300
XI_STAR_POINTS = 4001
# left end of the u grid for xi*; F is tabulated down to it
XI_STAR_FLOOR = 1e-6
RATE_TABLE_POINTS = 241
INTERPOLATION_ATOL = 1e-9


@dataclass(frozen=True)
class RateFunction:
    """
    Tabulated decay envelope min(cap, C * Theta(r n) / n**order).

    Theta is read off the (t, theta) table by linear interpolation. Theta
    is convex, so the chord lies above it; beyond the table the last
    value is held. With ``time_step`` set the argument is a time t and
    n = floor(t / time_step). ``horizon`` is the last n (or t) the
    prefactor was fitted over; None when it holds for every n.
    """

    t: np.ndarray
    theta: np.ndarray
    C: float = 1.0
    r: float = 1.0
    order: int = 0
    cap: float = math.inf
    norm_tag: str = "v1"
    reference_tag: str = "v2"
    time_step: Optional[float] = None
    horizon: Optional[float] = None
    detail: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if t.ndim != 1 or t.shape != theta.shape or t.size < 1:
            raise ValueError("RateFunction needs matching one-dimensional t and theta")
        if np.any(np.diff(t) <= 0):
            raise ValueError("RateFunction t grid must be strictly increasing")
        if np.any(np.diff(theta) > 1e-12 * np.maximum(1.0, np.abs(theta[:-1]))):
            raise ValueError("Theta must be nonincreasing")
        if self.C < 1.0 - 1e-12:
            raise ValueError(f"Prefactor must be >= 1, got {self.C}")
        if not 0.0 < self.r <= 1.0:
            raise ValueError(f"Time scale must lie in (0, 1], got {self.r}")
        if self.time_step is not None and not self.time_step > 0.0:
            raise ValueError(f"time_step must be positive, got {self.time_step}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "theta", theta)

    def theta_at(self, t):
        result = np.interp(np.asarray(t, dtype=float), self.t, self.theta,
                           left=self.theta[0], right=self.theta[-1])
        return float(result) if np.ndim(result) == 0 else result

    def value(self, n):
        n = np.asarray(n, dtype=float)
        if self.time_step is not None:
            n = np.floor(n / self.time_step)
        raw = self.C * np.asarray(self.theta_at(self.r * n))
        if self.order:
            with np.errstate(divide="ignore"):
                raw = np.where(n > 0, raw / np.power(np.maximum(n, 1e-300), self.order), np.inf)
        result = np.minimum(raw, self.cap)
        return float(result) if result.ndim == 0 else result

    def to_dict(self):
        return {"type": "subgeometric", "C": self.C, "r": self.r, "order": self.order,
                "cap": self.cap, "norm_tag": self.norm_tag,
                "reference_tag": self.reference_tag, "time_step": self.time_step,
                "horizon": self.horizon, "detail": self.detail,
                "table": {"t": self.t, "theta": self.theta}}


# ----------------------------------------------------------------------
# Legendre transforms
# ----------------------------------------------------------------------
def _conjugate(func, domain: Tuple[float, float], u: np.ndarray,
               coarse_points: int, rounds: int, cap: float) -> np.ndarray:
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ValueError(f"Empty supremum domain ({lo}, {hi})")
    if lo > 0.0:
        lam = np.unique(np.concatenate([np.linspace(lo, hi, coarse_points),
                                        np.geomspace(lo, hi, coarse_points)]))
    elif lo == 0.0:
        # open at zero: approach it geometrically
        start = hi * LOWER_CUTOFF
        lam = np.unique(np.concatenate([np.linspace(start, hi, coarse_points),
                                        np.geomspace(start, hi, coarse_points)]))
        lo = start
    else:
        lam = np.linspace(lo, hi, coarse_points)
    values = np.asarray(func(lam), dtype=float)

    result = np.empty(u.size)
    for start in range(0, u.size, 256):
        block = u[start:start + 256]
        objective = np.outer(block, lam) - values
        best = np.argmax(objective, axis=1)
        for offset, index in enumerate(best):
            x = block[offset]
            top = objective[offset, index]
            a, b = lam[max(index - 1, 0)], lam[min(index + 1, lam.size - 1)]
            for _ in range(rounds):
                fine = np.linspace(a, b, coarse_points)
                scores = x * fine - np.asarray(func(fine), dtype=float)
                j = int(np.argmax(scores))
                top = max(top, float(scores[j]))
                step = fine[1] - fine[0]
                a, b = max(fine[j] - step, lo), min(fine[j] + step, hi)
            result[start + offset] = top
    result[result > cap] = np.inf
    return result


def _check_grid(u_grid) -> np.ndarray:
    u = np.asarray(u_grid, dtype=float)
    if u.ndim != 1 or u.size < 2 or np.any(np.diff(u) <= 0):
        raise ValueError("u_grid must be strictly increasing with at least two points")
    return u


def legendre_transform(xi: ScalarFunction, domain: Tuple[float, float], u_grid: Sequence[float],
                       coarse_points: int = LEGENDRE_COARSE_POINTS,
                       rounds: int = LEGENDRE_ROUNDS, cap: float = INFINITY_CAP) -> ScalarFunction:
    """
    xi*(u) = sup_{lambda in I} (lambda u - xi(lambda)) on ``u_grid``.

    Coarse grid supremum followed by ``rounds`` local refinements; values
    above ``cap`` become +inf sentinels.

    Raises:
        ValueError: On an empty domain or a non-increasing grid
    """
    u = _check_grid(u_grid)
    values = _conjugate(xi, domain, u, coarse_points, rounds, cap)
    return sampled(u, values, shape="convex")


def lower_transform(xi: ScalarFunction, domain: Tuple[float, float], u_grid: Sequence[float],
                    coarse_points: int = LEGENDRE_COARSE_POINTS,
                    rounds: int = LEGENDRE_ROUNDS, cap: float = INFINITY_CAP) -> ScalarFunction:
    """xi_*(u) = sup_{lambda in I} (xi(lambda) - lambda u), computed as (-xi)*(-u)."""
    u = _check_grid(u_grid)
    mirrored = -u[::-1]
    values = _conjugate(lambda lam: -np.asarray(xi(lam), dtype=float), domain, mirrored,
                        coarse_points, rounds, cap)
    return sampled(u, values[::-1], shape="convex")


# ----------------------------------------------------------------------
# F and its inverse
# ----------------------------------------------------------------------
def _reciprocal(g):
    def integrand(s):
        value = float(g(s))
        if math.isinf(value):
            return 0.0
        if value <= 0.0:
            raise ValueError(f"rate function must be positive, got {value} at s = {s}")
        return 1.0 / value
    return integrand


def _default_grid(floor: float, points: int = RATE_TABLE_POINTS) -> np.ndarray:
    return np.geomspace(max(floor, LOWER_CUTOFF), 1.0, points)


def rate_F(g: ScalarFunction, lambda_grid: Optional[Sequence[float]] = None) -> ScalarFunction:
    """
    F(lambda) = int_lambda^1 ds / g(s), tabulated in log-s coordinates.

    +inf values of g contribute zero. A sampled g only defines F down to
    its first node; the inverse saturates there.

    Raises:
        ValueError: If g <= 0 somewhere on the grid
    """
    floor = 0.0
    if g.tag == "sampled":
        floor = max(0.0, g.domain()[0])
    grid = _default_grid(floor) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    grid = np.unique(np.concatenate([grid[(grid > 0) & (grid < 1.0)], [1.0]]))

    values = np.asarray(g(grid), dtype=float)
    finite = np.isfinite(values)
    if np.any(values[finite] <= 0.0):
        worst = float(grid[finite][np.argmin(values[finite])])
        raise ValueError(f"rate function must be positive on (0, 1]; fails at s = {worst:.6g}")
    ratios = values[finite] / grid[finite]
    if ratios.size > 2 and ratios[0] > ratios[ratios.size // 2]:
        logger.warning("g(s)/s does not decrease towards 0 on the grid; F may stay bounded")

    return ScalarFunction("tail_integral",
                          {"integrand": _reciprocal(g), "grid": grid, "floor": floor},
                          shape="convex")


def _extended_table(F: ScalarFunction, target: float):
    grid = np.asarray(F.params["grid"], dtype=float)
    table = np.asarray(F.params["table"], dtype=float)
    integrand = F.params["integrand"]
    floor = max(float(F.params.get("floor", 0.0)), FLOAT_FLOOR)
    lam, vals = list(grid), list(table)
    while vals[0] < target and lam[0] > floor:
        lo = max(lam[0] * 1e-2, floor)
        nodes = np.geomspace(lo, lam[0], 9)
        for a, b in zip(nodes[-2::-1], nodes[:0:-1]):
            vals.insert(0, vals[0] + log_quad(integrand, a, b))
            lam.insert(0, a)
    return np.asarray(lam), np.asarray(vals)


def invert_rate(F: ScalarFunction, t_grid: Sequence[float], refine: bool = True) -> RateFunction:
    """
    Theta(t) = F^-1(t) on an increasing t grid.

    The F table is extended towards zero when t exceeds it, never
    extrapolated. With ``refine`` each value is polished by a root solve
    on the bracketing panel; otherwise the chord between table nodes is
    used, which bounds the convex Theta from above. Past the smallest
    lambda the table can reach Theta saturates there.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if np.any(t < 0):
        raise ValueError("t_grid must be >= 0")

    lam, vals = _extended_table(F, float(t[-1]))
    integrand = F.params["integrand"]
    theta = np.empty(t.size)
    # vals decreases along lam; search on the reversed copy
    rev_vals = vals[::-1]
    saturated = 0
    for k, target in enumerate(t):
        if target <= 0.0:
            theta[k] = 1.0
            continue
        if target >= vals[0]:
            theta[k] = lam[0]
            saturated += 1
            continue
        j = lam.size - 1 - int(np.searchsorted(rev_vals, target, side="left"))
        a, b = lam[j], lam[j + 1]
        fa, fb = vals[j], vals[j + 1]
        chord = a + (fa - target) / (fa - fb) * (b - a)
        if not refine:
            theta[k] = chord
            continue

        def residual(x):
            return fb + log_quad(integrand, math.exp(x), b) - target

        try:
            theta[k] = math.exp(brentq(residual, math.log(a), math.log(b), xtol=1e-14, rtol=1e-13))
        except ValueError:
            theta[k] = chord
    if saturated:
        logger.debug(f"Theta saturated at {lam[0]:.3e} for {saturated} grid times")
    theta = np.minimum.accumulate(theta)
    return RateFunction(t=t, theta=theta, C=1.0, r=1.0, norm_tag="tv", reference_tag="tv")


# ----------------------------------------------------------------------
# difference inequalities
# ----------------------------------------------------------------------
def _as_callable(g):
    return g if callable(g) else (lambda s: g)


def difference_bound_H(g, u0: float, n_max: int) -> np.ndarray:
    """
    H^-1(n) for n = 0..n_max with H(u) = int_u^u0 dv/g(v).

    Raises:
        ValueError: If u0 <= 0 or 1/g is integrable at 0
    """
    if not u0 > 0.0:
        raise ValueError(f"u0 must be positive, got {u0}")
    g = _as_callable(g)

    def integrand(s):
        value = float(g(u0 * s))
        if value <= 0.0:
            raise ValueError(f"g must be positive on (0, u0]; g({u0 * s:.3g}) = {value}")
        return u0 / value

    near = log_quad(integrand, 1e-6, 1.0)
    tail = log_quad(integrand, 1e-12, 1e-6)
    if tail < 0.5 * near:
        raise ValueError("1/g is integrable at 0; the difference bound does not apply")

    F = ScalarFunction("tail_integral", {"integrand": integrand, "grid": _default_grid(0.0)})
    rate = invert_rate(F, np.arange(n_max + 1, dtype=float), refine=False)
    return u0 * rate.theta


def difference_bound_F(zeta: ScalarFunction, M: float, u0: float, n_max: int,
                       domain: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """
    M F^-1(n) for n = 0..n_max with F(u) = int_u^1 dv/zeta*(v).

    Raises:
        ValueError: If u0 > M or M <= 0
    """
    if not M > 0.0:
        raise ValueError(f"M must be positive, got {M}")
    if u0 > M:
        raise ValueError(f"u0 = {u0} exceeds M = {M}")
    star = legendre_transform(zeta, domain, np.geomspace(XI_STAR_FLOOR, 1.0, XI_STAR_POINTS))
    rate = invert_rate(rate_F(star), np.arange(n_max + 1, dtype=float), refine=False)
    return M * rate.theta


def shift_constant(g: Optional[ScalarFunction], k: float, t_max: float,
                   points: int = 2001, margin: float = SHIFT_MARGIN,
                   rate: Optional[RateFunction] = None) -> float:
    """
    Smallest C with F^-1(t - k) <= C F^-1(t) on a dense grid of [k, t_max],
    inflated by ``margin``. ``rate`` may carry a precomputed Theta.
    """
    if k < 0:
        raise ValueError(f"shift k must be >= 0, got {k}")
    if k == 0:
        return 1.0
    t_max = max(t_max, k)
    t = np.unique(np.concatenate([np.linspace(k, t_max, points),
                                  k + np.geomspace(1e-9, max(t_max - k, 1e-9), points)]))
    t = t[t <= t_max]
    if rate is None:
        grid = np.unique(np.concatenate([t - k, t]))
        rate = invert_rate(rate_F(g), grid)
    shifted = np.asarray(rate.theta_at(t - k))
    base = np.asarray(rate.theta_at(t))
    if np.any(base <= 0.0):
        return math.inf
    return max(1.0, margin * float(np.max(shifted / base)))


# ----------------------------------------------------------------------
# interpolated envelope assembly
# ----------------------------------------------------------------------
def interpolation_xi_from_states(V1, phi1_V1, V2, lambda_grid: Sequence[float]) -> ScalarFunction:
    """xi(lambda) = max_x ((lambda V1 - phi1(V1)) / V2)^+ sampled on ``lambda_grid``."""
    V1, phi1_V1, V2 = (np.asarray(a, dtype=float) for a in (V1, phi1_V1, V2))
    lam = np.asarray(lambda_grid, dtype=float)
    xi = np.maximum(0.0, np.max((np.outer(lam, V1) - phi1_V1) / V2, axis=1))
    return sampled(lam, xi, shape="convex")


def interpolation_xi_from_psi(psi: ScalarFunction, phi: ScalarFunction, v_grid: Sequence[float],
                              lambda_grid: Optional[Sequence[float]] = None) -> ScalarFunction:
    """Interpolation function for V1 = psi(V2): sup_v (lambda f(v) - g(v))^+."""
    v = np.asarray(v_grid, dtype=float)
    lam = default_lambda_grid() if lambda_grid is None else lambda_grid
    return interpolation_xi_from_states(psi(v), psi.derivative(v) * phi(v), v, lam)


def default_lambda_grid(lam_max: float = 1.0, points: int = 801) -> np.ndarray:
    return np.geomspace(LOWER_CUTOFF, lam_max, points)


def check_interpolation(xi: ScalarFunction, V1, phi1_V1, V2,
                        lambdas: Sequence[float]) -> Dict[str, Any]:
    """lambda V1 <= phi1(V1) + xi(lambda) V2 at every state and test lambda."""
    V1, phi1_V1, V2 = (np.asarray(a, dtype=float) for a in (V1, phi1_V1, V2))
    lam = np.asarray(lambdas, dtype=float)
    excess = np.outer(lam, V1) - phi1_V1 - np.outer(np.asarray(xi(lam), dtype=float), V2)
    scale = np.maximum(1.0, np.outer(lam, V1))
    worst = np.unravel_index(int(np.argmax(excess / scale)), excess.shape)
    margin = float((excess / scale)[worst])
    return {"passed": margin <= INTERPOLATION_ATOL, "worst_excess": margin,
            "witness": {"state": int(worst[1]), "lambda": float(lam[worst[0]])}}


def _split_coupling(coup) -> Tuple[CouplingCert, CouplingCert]:
    if isinstance(coup, CouplingCert):
        return coup, coup
    first, second = coup
    return first, second


def interpolated_rate(wl1: WeakLyapunovCert, wl2: WeakLyapunovCert,
                     coup: Union[CouplingCert, Tuple[CouplingCert, CouplingCert]],
                     xi: ScalarFunction, V1: Sequence[float], V2: Sequence[float],
                     n_max: int = 500, xi_star: Optional[ScalarFunction] = None,
                     lambda_domain: Tuple[float, float] = (LOWER_CUTOFF, 1.0)):
    """
    Interpolated subgeometric envelopes for S from two weak Lyapunov
    certificates, a coupling of S^N for phi_i(V_i) and an interpolation
    function xi.

    With triple norms ||mu|| + beta_i ||mu||_{V_i}:
        beta_i = (1 - gamma_H)/(K_i N), alpha = min_i beta_i (sigma_i - K_i/A_i)
        kappa  = alpha/(1 + beta_1), r = kappa/(2N - 1)
        C_1 = 1 + beta_1 K_1,  C_2 = (1 + beta_2 K_2)^max(N, 2N - 2)
        m = max{1 + beta_1, C_2 alpha (1 + beta_2)/beta_2}

    Returns:
        (RateFunction for ||S^n nu||_{V1}, RateFunction for ||S^n nu||),
        both relative to ||nu||_{V2}, or a CertificationFailure
    """
    V1 = np.asarray(V1, dtype=float)
    V2 = np.asarray(V2, dtype=float)
    if V1.shape != V2.shape:
        raise ValueError("V1 and V2 must live on the same states")
    if np.any(V1 > V2 * (1.0 + 1e-12)):
        state = int(np.argmax(V1 - V2))
        raise ValueError(f"V1 <= V2 fails at state {state}")

    coup1, coup2 = _split_coupling(coup)
    if coup1.N != coup2.N:
        raise ValueError("both coupling certificates must be for the same power N")
    for cert in (coup1, coup2):
        if cert.scope != "measure":
            logger.warning("Subgeometric envelope built from a pairwise coupling certificate")
    N = coup1.N
    gamma_H = max(coup1.gamma_H, coup2.gamma_H)
    for index, (wl, cert) in enumerate(((wl1, coup1), (wl2, coup2)), start=1):
        if not cert.A > wl.K / wl.sigma_bar:
            return CertificationFailure(
                "interpolated_rate", "precondition", {"weight": index, "A": cert.A},
                f"A_{index} > K_{index}/sigma_{index} violated: "
                f"{cert.A:.6g} <= {wl.K / wl.sigma_bar:.6g}")

    phi1_V1 = np.asarray(wl1.phi(V1), dtype=float)
    test_lambdas = np.geomspace(max(lambda_domain[0], LOWER_CUTOFF), lambda_domain[1], 200)
    interpolation = check_interpolation(xi, V1, phi1_V1, V2, test_lambdas)
    if not interpolation["passed"]:
        return CertificationFailure("interpolated_rate", "precondition", interpolation["witness"],
                                    "interpolation condition fails on the state grid")

    beta1 = (1.0 - gamma_H) / (wl1.K * N)
    beta2 = (1.0 - gamma_H) / (wl2.K * N)
    alpha = min(beta1 * (wl1.sigma_bar - wl1.K / coup1.A),
                beta2 * (wl2.sigma_bar - wl2.K / coup2.A))
    kappa = alpha / (1.0 + beta1)
    C1 = 1.0 + beta1 * wl1.K
    C2 = (1.0 + beta2 * wl2.K) ** max(N, 2 * N - 2)
    m = max(1.0 + beta1, C2 * alpha * (1.0 + beta2) / beta2)
    r = kappa / (2 * N - 1)

    if xi_star is None:
        xi_star = legendre_transform(xi, lambda_domain,
                                     np.geomspace(LOWER_CUTOFF, 1.0, XI_STAR_POINTS))
    F = rate_F(xi_star)
    horizon = kappa * (n_max + 1) + kappa
    t_grid = np.unique(np.concatenate([[0.0], np.linspace(0.0, horizon, 4001)[1:],
                                       np.geomspace(1e-9, horizon, 400)]))
    theta = invert_rate(F, t_grid, refine=False)

    # V1 norm: floored bound, then Theta(kappa floor(k/(2N-1))) <= C_s Theta(r k)
    block = C1 ** (2 * N - 2) * m / beta1
    C_shift = shift_constant(None, kappa, r * n_max + kappa, rate=theta)
    C_v1 = max(1.0, block * C_shift / kappa)
    v1_rate = RateFunction(theta.t, theta.theta, C=C_v1, r=r, order=0, cap=block,
                           norm_tag="v1", reference_tag="v2", horizon=float(n_max),
                           detail={"beta1": beta1, "beta2": beta2, "alpha": alpha,
                                   "kappa": kappa, "C1": C1, "C2": C2, "m": m, "N": N,
                                   "gamma_H": gamma_H, "shift_constant": C_shift,
                                   "implementation_defined": True})

    # TV: ||nu_k|| <= 2m min(1, Theta(kappa floor(i/2))/kappa) / (alpha N i), i = floor(k/(2N-1))
    k = np.arange(1, n_max + 1, dtype=float)
    i = np.floor(k / (2 * N - 1))
    safe_i = np.maximum(i, 1.0)
    decay = np.minimum(1.0, np.asarray(theta.theta_at(kappa * np.floor(safe_i / 2.0))) / kappa)
    floored = np.where(i >= 1, np.minimum(1.0, 2.0 * m * decay / (alpha * N * safe_i)), 1.0)
    r_tv = kappa / (2.0 * (2 * N - 1))
    shape = np.asarray(theta.theta_at(r_tv * k)) / k
    C_tv = max(1.0, SHIFT_MARGIN * float(np.max(floored / shape))) if n_max >= 1 else 1.0
    tv_rate = RateFunction(theta.t, theta.theta, C=C_tv, r=r_tv, order=1, cap=1.0,
                           norm_tag="tv", reference_tag="v2", horizon=float(n_max),
                           detail={"alpha": alpha, "kappa": kappa, "m": m, "N": N,
                                   "implementation_defined": True})
    logger.info(f"Interpolated envelope: kappa={kappa:.4g}, r={r:.4g}, C_v1={C_v1:.4g}, C_tv={C_tv:.4g}")
    return v1_rate, tv_rate


# ----------------------------------------------------------------------
# Feller pipeline
# ----------------------------------------------------------------------
class FellerPipeline(NamedTuple):
    f: ScalarFunction
    g: ScalarFunction
    h: ScalarFunction
    F_psi: ScalarFunction
    Theta_psi: RateFunction
    phi1: ScalarFunction
    hypotheses: Dict[str, Any]


def _psi_v_max(psi: ScalarFunction) -> float:
    if psi.tag in ("psi_integral", "sampled"):
        return psi.domain()[1]
    return 1e300


def default_theta_grid(t_max: float = 1e4, points: int = 600) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(1e-3, t_max, points)])


def feller_pipeline(phi: ScalarFunction, psi: ScalarFunction, R: float,
                    v_max: Optional[float] = None, t_grid: Optional[Sequence[float]] = None, points: int = 20001,
                    strict: bool = True) -> FellerPipeline:
    """
    f = psi/v, g = psi' phi/v, h = g o f^-1, F_psi = int_lambda^1 du/h(u),
    Theta_psi = F_psi^-1, and phi1 with phi1(psi(v)) = psi'(v) phi(v).

    Structural failures (psi(1) != 1, f not strictly decreasing, h not
    positive) raise. The R-dependent hypotheses are reported and raise
    only when ``strict``.

    Raises:
        ValueError: With the offending v as witness
    """
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    if abs(psi(1.0) - 1.0) > 1e-9:
        raise ValueError(f"psi(1) = {psi(1.0)}, expected 1")
    if abs(psi.derivative(1.0) - 1.0) > 1e-6:
        logger.warning(f"psi'(1) = {psi.derivative(1.0):.6g}; the normalization psi'(1) = 1 is not met")

    v = np.geomspace(1.0, _psi_v_max(psi) if v_max is None else v_max, points)
    psi_v = np.asarray(psi(v), dtype=float)
    dpsi_v = np.asarray(psi.derivative(v), dtype=float)
    phi_v = np.asarray(phi(v), dtype=float)
    f_v = psi_v / v
    g_v = dpsi_v * phi_v / v

    steps = np.diff(f_v)
    if np.any(steps >= 0.0):
        index = int(np.argmax(steps >= 0.0))
        raise ValueError(f"f = psi/v is not strictly decreasing near v = {v[index + 1]:.6g}; "
                         "psi must be strictly concave")
    if np.any(g_v <= 0.0):
        index = int(np.argmax(g_v <= 0.0))
        raise ValueError(f"g = psi' phi/v is not positive at v = {v[index]:.6g}")

    flux = dpsi_v * phi_v
    region = phi_v > 2.0 * R
    hypotheses = {"flux_nondecreasing": {"passed": True, "witness": None},
                  "flux_above_R": {"passed": True, "witness": None}}
    if np.any(region):
        drops = np.flatnonzero(region[1:] & region[:-1] & (np.diff(flux) < -1e-12 * flux[1:]))
        if drops.size:
            hypotheses["flux_nondecreasing"] = {"passed": False, "witness": float(v[drops[0] + 1])}
        low = np.flatnonzero(region & (flux <= R))
        if low.size:
            hypotheses["flux_above_R"] = {"passed": False, "witness": float(v[low[0]])}
    failed = [name for name, item in hypotheses.items() if not item["passed"]]
    if failed and strict:
        name = failed[0]
        raise ValueError(f"Hypothesis {name} fails at v = {hypotheses[name]['witness']:.6g}")

    f = sampled(v, f_v)
    g = sampled(v, g_v)
    # f decreases, so f^-1 is read off the reversed table
    u = f_v[::-1]
    h_u = g_v[::-1]
    keep = np.concatenate([[True], np.diff(u) > 0])
    h = sampled(u[keep], h_u[keep], shape="convex")
    phi1_nodes, keep1 = psi_v, np.concatenate([[True], np.diff(psi_v) > 0])
    phi1 = sampled(phi1_nodes[keep1], flux[keep1], shape="concave")

    F_psi = rate_F(h)
    theta = invert_rate(F_psi, default_theta_grid() if t_grid is None else t_grid)
    return FellerPipeline(f, g, h, F_psi, theta, phi1, hypotheses)


def psi_builder_polynomial(phi: ScalarFunction, R: float, eps: float = PSI_EPSILON,
                           u_max: float = 1e15, points: int = 4001) -> ScalarFunction:
    """
    psi(u) = 1 + int_1^u m(v)/phi(v) dv with m = phi^(1-eps) below
    phi = 2R and (2R)^(1-eps) above.

    Raises:
        ValueError: If eps is outside (0, 1) or m/phi is not strictly decreasing
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not R > 0.0:
        raise ValueError(f"R must be positive, got {R}")
    ceiling = (2.0 * R) ** (1.0 - eps)

    def integrand(v):
        p = float(phi(v))
        return (p ** (1.0 - eps) if p < 2.0 * R else ceiling) / p

    grid = np.geomspace(1.0, u_max, 2000)
    ratio = np.array([integrand(x) for x in grid])
    if not np.all(np.diff(ratio) < 0.0):
        index = int(np.argmax(np.diff(ratio) >= 0.0))
        raise ValueError(f"m/phi is not strictly decreasing near v = {grid[index + 1]:.6g}")

    return ScalarFunction("psi_integral",
                          {"integrand": integrand, "u_max": u_max, "points": points,
                           "R": R, "eps": eps, "phi": phi.to_dict()},
                          shape="concave")


def h_comparison_rate(phi: ScalarFunction, t_grid: Sequence[float]) -> RateFunction:
    """
    1/H^-1(t) with H(u) = int_1^u ds/phi(s), through the substitution
    lambda = 1/u so the shared F machinery applies.

    Raises:
        ValueError: If phi is not positive
    """
    samples = np.asarray(phi(np.geomspace(1.0, 1e12, 200)), dtype=float)
    if np.any(samples <= 0.0):
        raise ValueError("phi must be positive on [1, inf)")

    def integrand(lam):
        return 1.0 / (lam * lam * float(phi(1.0 / lam)))

    F = ScalarFunction("tail_integral", {"integrand": integrand, "grid": _default_grid(0.0)})
    rate = invert_rate(F, t_grid)
    return RateFunction(rate.t, rate.theta, norm_tag="tv", reference_tag="v1",
                        detail={"comparison": "H"})


# ----------------------------------------------------------------------
# discrete Feller route
# ----------------------------------------------------------------------
def _best_coupling_A(wl: WeakLyapunovCert, harris, R: float, points: int = 200):
    lo = wl.K / wl.sigma_bar
    hi = R / 2.0
    if not hi > lo:
        return None
    best = None
    for A in np.linspace(lo, hi, points + 2)[1:-1]:
        coupling = harris_to_coupling(harris, float(A))
        beta = (1.0 - coupling.gamma_H) / (wl.K * coupling.N)
        score = beta * (wl.sigma_bar - wl.K / A)
        if best is None or score > best[0]:
            best = (score, coupling)
    return best[1] if best else None


def harris_couplings(S: StochasticKernel, pairs, R: float, N: int):
    """
    Measure-level couplings from Harris sets {phi_i(V_i) <= R} of S^N.

    Args:
        pairs: (weak certificate, phi_i(V_i) per state) for each weight

    Returns:
        Tuple of CouplingCert, one per pair, each at the A in
        (K_i/sigma_i, R/2) maximizing beta_i (sigma_i - K_i/A), or the
        first CertificationFailure
    """
    couplings = []
    for index, (wl, flux) in enumerate(pairs, start=1):
        harris = check_harris(S, flux, R, N)
        if not harris.ok:
            return harris
        coupling = _best_coupling_A(wl, harris, R)
        if coupling is None:
            return CertificationFailure("coupling", "precondition", {"weight": index, "R": R},
                                        f"no A with K/sigma < A < R/2 for weight {index}")
        couplings.append(coupling)
    return tuple(couplings)


def interpolated_rate_from_harris(S: StochasticKernel, wl1: WeakLyapunovCert, wl2: WeakLyapunovCert,
                                  V1: Sequence[float], V2: Sequence[float], R: float, N: int,
                                  xi: Optional[ScalarFunction] = None, n_max: int = 500):
    """
    interpolated_rate with couplings from Harris sets of S^N and, unless
    given, xi taken over the states.
    """
    V1 = np.asarray(V1, dtype=float)
    V2 = np.asarray(V2, dtype=float)
    flux1 = np.asarray(wl1.phi(V1), dtype=float)
    couplings = harris_couplings(S, ((wl1, flux1), (wl2, np.asarray(wl2.phi(V2), dtype=float))), R, N)
    if isinstance(couplings, CertificationFailure):
        return couplings
    if xi is None:
        xi = interpolation_xi_from_states(V1, flux1, V2, default_lambda_grid())
    result = interpolated_rate(wl1, wl2, couplings, xi, V1, V2, n_max=n_max)
    if isinstance(result, CertificationFailure):
        return result
    return result[0], result[1], {"couplings": couplings}


def feller_rate(weak_cert: WeakLyapunovCert, S: StochasticKernel, V: Sequence[float],
                psi: ScalarFunction, R: float, N: int, n_max: int = 500,
                sigma_grid: Optional[Sequence[float]] = None):
    """
    Discrete Feller route: V1 = psi(V), phi1(V1) = psi'(V) phi(V), Harris
    sets {phi_i(V_i) <= R} of S^N turned into couplings, then the
    interpolated envelopes with xi taken over the states.

    Returns:
        (RateFunction for V1, RateFunction for TV, context dict), or a
        CertificationFailure naming the failed step
    """
    V = np.asarray(V, dtype=float)
    phi = weak_cert.phi
    V1 = np.asarray(psi(V), dtype=float)
    flux = np.asarray(psi.derivative(V), dtype=float) * np.asarray(phi(V), dtype=float)
    order = np.argsort(V1)
    nodes, keep = V1[order], np.concatenate([[True], np.diff(V1[order]) > 0])
    if np.count_nonzero(keep) < 2:
        return CertificationFailure("feller", "precondition", None,
                                    "psi(V) takes fewer than two distinct values")
    phi1 = sampled(nodes[keep], flux[order][keep], shape="concave")

    wl1 = check_weak_lyapunov(S, V1, phi1, sigma_grid=sigma_grid)
    if not wl1.ok:
        return wl1
    couplings = harris_couplings(S, ((wl1, flux), (weak_cert, np.asarray(phi(V), dtype=float))), R, N)
    if isinstance(couplings, CertificationFailure):
        return couplings

    xi = interpolation_xi_from_states(V1, flux, V, default_lambda_grid())
    result = interpolated_rate(wl1, weak_cert, couplings, xi, V1, V, n_max=n_max)
    if isinstance(result, CertificationFailure):
        return result
    v1_rate, tv_rate = result
    context = {"V1": V1, "wl1": wl1, "couplings": couplings,
               "psi_hypotheses": _pipeline_hypotheses(phi, psi, R, float(V.max()))}
    return v1_rate, tv_rate, context


def _pipeline_hypotheses(phi: ScalarFunction, psi: ScalarFunction, R: float, v_max: float):
    # reported next to the envelopes, never blocking them
    if v_max <= 1.0:
        return None
    try:
        pipeline = feller_pipeline(phi, psi, R, v_max=v_max, points=2001,
                                   t_grid=default_theta_grid(points=40), strict=False)
    except ValueError as e:
        logger.warning(f"Feller pipeline on [1, {v_max:.4g}] not available: {e}")
        return None
    return pipeline.hypotheses


# ----------------------------------------------------------------------
# shape fits
# ----------------------------------------------------------------------
def loglog_slope_fit(t: Sequence[float], theta: Sequence[float]) -> float:
    """Least-squares slope of log Theta against log t."""
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    keep = (t > 0) & (theta > 0)
    return float(np.polyfit(np.log(t[keep]), np.log(theta[keep]), 1)[0])


def stretched_exponent_fit(t: Sequence[float], theta: Sequence[float]) -> float:
    """Least-squares slope of log(-log Theta) against log t."""
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    keep = (t > 0) & (theta > 0) & (theta < 1)
    return float(np.polyfit(np.log(t[keep]), np.log(-np.log(theta[keep])), 1)[0])
