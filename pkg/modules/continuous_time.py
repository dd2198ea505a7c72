"""
Continuous Time Module
======================

Transfers the discrete certificates to rate matrices and their
semigroups S_t = exp(tL):
- generator drift LV <= -sigma V + b and LV <= -sigma phi(V) + b
- the integrated bounds they imply at time t
- implicit to explicit weak drift
- continuous subgeometric and Feller envelopes
- Cesaro averages as invariant measures
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate, linalg

from .condition_checkers import (CertificationFailure, CouplingCert, LyapunovCert,
                                 WeakLyapunovCert, check_local_coupling, pairwise_to_measure)
from .geometric_rates import (GeometricEnvelope, harris_gamma_for, harris_rate,
                              semigroup_harris_rate)
from .kernel_ops import (ConvergenceError, GeneratorMatrix, StochasticKernel, dual_apply,
                         semigroup_at, semigroup_growth_from_lyapunov, uniformization_rate)
from .measure_core import total_variation
from .scalar_functions import ScalarFunction, sampled
from .subgeometric_rates import (RateFunction, default_lambda_grid, feller_rate,
                                 interpolation_xi_from_states, psi_builder_polynomial,
                                 interpolated_rate)
from .utils import content_hash


logger = logging.getLogger(__name__)

SIGMA_GRID_POINTS = 200
N_SEARCH_MAX = 1_000_000
CESARO_MAX_HORIZON = 1e6
SEMIGROUP_ATOL = 1e-8


@dataclass(frozen=True)
class GeneratorLyapunovCert:
    """LV <= -sigma target + b, target = V (geometric) or phi(V) (weak)."""

    sigma: float
    b: float
    kind: str
    input_hash: str
    phi: Optional[ScalarFunction] = None
    frozen: bool = False

    ok = True

    def to_dict(self):
        return {"kind": f"generator_{self.kind}", "sigma": self.sigma, "b": self.b,
                "phi": self.phi.to_dict() if self.phi is not None else None,
                "frozen": self.frozen, "input_hash": self.input_hash}


class ExplicitDrift(NamedTuple):
    V_tilde: np.ndarray
    phi_tilde: ScalarFunction
    sigma_bar: float
    K: float


class CesaroResult(NamedTuple):
    mu: np.ndarray
    horizon: float
    residual: float
    moment: Optional[Dict[str, Any]] = None


def _default_sigma_grid(L: GeneratorMatrix, points: int = SIGMA_GRID_POINTS) -> np.ndarray:
    scale = max(uniformization_rate(L), 1.0)
    return scale * np.linspace(1.0 / points, 1.0, points)


def check_generator_lyapunov(L: GeneratorMatrix, V: Sequence[float],
                             phi: Optional[ScalarFunction] = None,
                             sigma_grid: Optional[Sequence[float]] = None,
                             A: Optional[float] = None):
    """
    Fit LV <= -sigma target + b over a grid of sigma, with
    b(sigma) = max_x (LV + sigma target)^+.

    The pair maximizing sigma/b wins, larger sigma breaking ties. With
    ``A`` the result must also satisfy b/sigma < A.

    Returns:
        GeneratorLyapunovCert, or CertificationFailure
    """
    V = np.asarray(V, dtype=float)
    if phi is not None and phi.role != "phi":
        report = phi.check_phi_role()
        if not report["passed"]:
            raise ValueError(f"Function rejected as phi: {report['reason']}")
    grid = _default_sigma_grid(L) if sigma_grid is None else np.asarray(sigma_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0.0):
        raise ValueError("sigma_grid entries must be positive")

    LV = L.matrix @ V
    target = V if phi is None else np.asarray(phi(V), dtype=float)
    table = [(float(s), max(0.0, float(np.max(LV + s * target)))) for s in np.unique(grid)]
    frozen = not np.any(LV < 0.0)
    if frozen:
        logger.warning("LV has no negative entry; the drift certificate carries no decay")

    best = max(table, key=lambda item: (item[0] / item[1] if item[1] > 0 else math.inf, item[0]))
    sigma, b = best
    if A is not None and not (b == 0.0 or b / sigma < A):
        return CertificationFailure("generator_lyapunov", "no_admissible_constant", {"A": A},
                                    f"b/sigma = {b / sigma:.6g} >= A on the whole grid")
    kind = "geometric" if phi is None else "weak"
    return GeneratorLyapunovCert(sigma=sigma, b=b, kind=kind, phi=phi, frozen=frozen,
                                 input_hash=content_hash(L, V, target, sigma_grid=list(grid)))


def semigroup_lyapunov_envelope(cert: GeneratorLyapunovCert, t_grid: Sequence[float]) -> pd.DataFrame:
    """
    ||S_t mu||_V <= e^{-sigma t} ||mu||_V + (b/sigma)(1 - e^{-sigma t}) ||mu||,
    as a table of the two coefficients per time.
    """
    if cert.kind != "geometric":
        raise ValueError("semigroup_lyapunov_envelope needs a geometric generator certificate")
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t_grid must be >= 0")
    decay = np.exp(-cert.sigma * t)
    return pd.DataFrame({"t": t, "v_coefficient": decay,
                         "mass_coefficient": cert.b / cert.sigma * (1.0 - decay)})


def semigroup_drift_check(L: GeneratorMatrix, V: Sequence[float], cert: GeneratorLyapunovCert,
                          t_grid: Sequence[float], atol: float = SEMIGROUP_ATOL) -> Dict[str, Any]:
    """P_t V <= e^{-sigma t} V + (b/sigma)(1 - e^{-sigma t}) at every state and grid time."""
    V = np.asarray(V, dtype=float)
    table = semigroup_lyapunov_envelope(cert, t_grid)
    worst = {"excess": -math.inf, "t": None, "state": None}
    for row in table.itertuples(index=False):
        PtV = dual_apply(semigroup_at(L, row.t), V)
        excess = (PtV - row.v_coefficient * V - row.mass_coefficient) / V
        state = int(np.argmax(excess))
        if excess[state] > worst["excess"]:
            worst = {"excess": float(excess[state]), "t": float(row.t), "state": state}
    return {"passed": worst["excess"] <= atol, "worst_excess": worst["excess"], "witness": worst}


def implicit_to_explicit(V: Sequence[float], phi: ScalarFunction, sigma: float, K: float,
                         points: int = 2001) -> ExplicitDrift:
    """
    From ||S mu||_V + sigma ||S mu||_{phi(V)} <= ||mu||_V + K ||mu|| to the
    explicit drift with
        V~ = (V + sigma phi(V))/(1 + sigma),  phi~(V~) = phi(V),
        sigma~ = sigma/(1 + sigma),           K~ = K/(1 + sigma).

    Raises:
        ValueError: If sigma <= 0
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    V = np.asarray(V, dtype=float)

    def tilde(v):
        return (v + sigma * np.asarray(phi(v), dtype=float)) / (1.0 + sigma)

    top = max(float(V.max()), 2.0) * 10.0
    v_grid = np.unique(np.concatenate([np.geomspace(1.0, top, points), V[V >= 1.0]]))
    phi_tilde = sampled(tilde(v_grid), phi(v_grid), shape="concave")
    return ExplicitDrift(V_tilde=np.maximum(tilde(V), 1.0), phi_tilde=phi_tilde,
                         sigma_bar=sigma / (1.0 + sigma), K=K / (1.0 + sigma))


def integrated_weak_drift(cert: GeneratorLyapunovCert, t: float):
    """
    Time-t implicit drift (sigma t, b t (1 + sigma t/2)) for
    ||S_t mu||_V + sigma t ||S_t mu||_{phi(V)} <= ||mu||_V + K_t ||mu||.

    Raises:
        ValueError: If t <= 0 or the certificate is not weak
    """
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    if cert.kind != "weak":
        raise ValueError("the time-t implicit drift needs a weak generator certificate")
    return cert.sigma * t, cert.b * t * (1.0 + cert.sigma * t / 2.0)


def integrated_weak_drift_check(L: GeneratorMatrix, V: Sequence[float], cert: GeneratorLyapunovCert,
                                t_grid: Sequence[float], atol: float = SEMIGROUP_ATOL) -> Dict[str, Any]:
    """P_t V + sigma t P_t phi(V) <= V + K_t at every state and grid time."""
    V = np.asarray(V, dtype=float)
    phi_V = np.asarray(cert.phi(V), dtype=float)
    worst = {"excess": -math.inf, "t": None, "state": None}
    for t in t_grid:
        implicit_sigma, K_t = integrated_weak_drift(cert, float(t))
        Pt = semigroup_at(L, float(t))
        excess = (dual_apply(Pt, V) + implicit_sigma * dual_apply(Pt, phi_V) - V - K_t) / V
        state = int(np.argmax(excess))
        if excess[state] > worst["excess"]:
            worst = {"excess": float(excess[state]), "t": float(t), "state": state}
    return {"passed": worst["excess"] <= atol, "worst_excess": worst["excess"], "witness": worst}


def concave_time_inequality_check(L: GeneratorMatrix, V: Sequence[float],
                                  cert: GeneratorLyapunovCert, psi: ScalarFunction,
                                  t: float, atol: float = 1e-6) -> Dict[str, Any]:
    """
    P_t psi(V) + sigma int_0^t P_s(psi'(V) phi(V)) ds
        <= psi(V) + b int_0^t P_s psi'(V) ds
    at every state, the time integrals by adaptive quadrature.
    """
    if cert.kind != "weak":
        raise ValueError("concave_time_inequality_check needs a weak generator certificate")
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    V = np.asarray(V, dtype=float)
    psi_V = np.asarray(psi(V), dtype=float)
    dpsi_V = np.asarray(psi.derivative(V), dtype=float)
    flux = dpsi_V * np.asarray(cert.phi(V), dtype=float)

    def moments(s):
        kernel = semigroup_at(L, s)
        return np.concatenate([dual_apply(kernel, flux), dual_apply(kernel, dpsi_V)])

    integral, _ = integrate.quad_vec(moments, 0.0, t, epsabs=1e-10, epsrel=1e-9)
    flux_integral, slope_integral = integral[:V.size], integral[V.size:]
    lhs = dual_apply(semigroup_at(L, t), psi_V) + cert.sigma * flux_integral
    rhs = psi_V + cert.b * slope_integral
    excess = (lhs - rhs) / np.maximum(1.0, psi_V)
    state = int(np.argmax(excess))
    return {"passed": bool(excess[state] <= atol), "worst_excess": float(excess[state]),
            "worst_state": state}


# ----------------------------------------------------------------------
# continuous envelopes
# ----------------------------------------------------------------------
def semigroup_geometric_rate(L: GeneratorMatrix, V: Sequence[float], T: float, A: float,
                             points: int = 200):
    """
    Continuous Harris route: generator drift, the time-T Lyapunov
    certificate gamma_L = e^{-sigma T}, K = (b/sigma)(1 - e^{-sigma T}),
    pairwise coupling of S_T at A made measure-level at the best A' < A/2,
    then the discrete rate lifted to continuous time.

    Returns:
        (GeometricEnvelope in V-norm, beta), or CertificationFailure
    """
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    V = np.asarray(V, dtype=float)
    generator = check_generator_lyapunov(L, V)
    if not generator.ok:
        return generator
    if generator.frozen:
        return CertificationFailure("semigroup_geometric", "not_contractive", None,
                                    "generator drift carries no decay")
    growth = semigroup_growth_from_lyapunov(generator.sigma, generator.b)
    decay = math.exp(-generator.sigma * T)
    lyap = LyapunovCert(gamma_L=decay, K=generator.b / generator.sigma * (1.0 - decay),
                        input_hash=content_hash(generator.input_hash, T=T))

    S_T = semigroup_at(L, T)
    pairwise = check_local_coupling(S_T, V, A, 1)
    if not pairwise.ok:
        return pairwise
    candidates = np.linspace(0.0, A / 2.0, points + 2)[1:-1]
    scored = [(harris_gamma_for(lyap.gamma_L, lyap.K, pairwise_to_measure(pairwise, a).gamma_H, a), a)
              for a in candidates]
    gamma, best_A = min(scored)
    if not math.isfinite(gamma):
        return CertificationFailure("semigroup_geometric", "precondition", {"A": A},
                                    f"K/A' < 1 - gamma_L fails for every A' < {A / 2.0:.6g}")
    result = harris_rate(lyap, pairwise_to_measure(pairwise, float(best_A)))
    if isinstance(result, CertificationFailure):
        return result
    envelope, beta = result
    return semigroup_harris_rate(envelope, growth, beta, T), beta


def _select_power(ratios: Sequence[float], sigmas: Sequence[float], thresholds: Sequence[float],
                  T: float, n_max: int = N_SEARCH_MAX):
    # smallest N with (b/sigma)(1 + sigma T/(2N)) < threshold for every pair
    N = 1
    for ratio, sigma, threshold in zip(ratios, sigmas, thresholds):
        if not threshold > ratio:
            return None
        tau = 2.0 * (threshold / ratio - 1.0) / sigma
        N = max(N, int(math.floor(T / tau)) + 1)
    return N if N <= n_max else None


def _explicit_cert(cert: GeneratorLyapunovCert, V: np.ndarray, t0: float):
    implicit_sigma, K_t = integrated_weak_drift(cert, t0)
    drift = implicit_to_explicit(V, cert.phi, implicit_sigma, K_t)
    wl = WeakLyapunovCert(sigma_bar=drift.sigma_bar, K=drift.K, phi=drift.phi_tilde,
                          input_hash=content_hash(cert.input_hash, t0=t0))
    return drift, wl, implicit_sigma


def _continuous_envelope(rate: RateFunction, t0: float, factor: float = 1.0) -> RateFunction:
    return RateFunction(rate.t, rate.theta, C=rate.C * factor, r=rate.r, order=rate.order,
                        cap=rate.cap * factor, norm_tag=rate.norm_tag,
                        reference_tag=rate.reference_tag, time_step=t0,
                        horizon=None if rate.horizon is None else rate.horizon * t0,
                        detail={**rate.detail, "t0": t0, "growth_factor": factor,
                                "implementation_defined": True})


def continuous_subgeometric_rate(L: GeneratorMatrix, V1: Sequence[float], V2: Sequence[float],
                                 cert1: GeneratorLyapunovCert, cert2: GeneratorLyapunovCert,
                                 coup1: CouplingCert, coup2: CouplingCert, T: float,
                                 xi: Optional[ScalarFunction] = None, n_max: int = 500,
                                 n_search_max: int = N_SEARCH_MAX):
    """
    Interpolated envelopes for the semigroup from weak generator drift on
    V1 <= V2 and measure-level couplings of S_T for phi_i(V_i) at A_i.

    N is the smallest integer with (b_i/sigma_i)(1 + sigma_i t0/2) < A_i,
    t0 = T/N. The explicit drifts of S_t0 feed the discrete assembly;
    between grid times the TV bound is held and the V1 bound grows by
    (1 + b_1 t0)(1 + sigma_1 t0).

    Returns:
        (RateFunction for V1, RateFunction for TV) in continuous time, or
        a CertificationFailure
    """
    V1 = np.asarray(V1, dtype=float)
    V2 = np.asarray(V2, dtype=float)
    for cert in (cert1, cert2):
        if cert.kind != "weak":
            raise ValueError("continuous_subgeometric_rate needs weak generator certificates")
    for coup in (coup1, coup2):
        if coup.N != 1:
            raise ValueError("couplings must be one-step certificates of S_T")

    N = _select_power([cert1.b / cert1.sigma, cert2.b / cert2.sigma],
                      [cert1.sigma, cert2.sigma], [coup1.A, coup2.A], T, n_search_max)
    if N is None:
        return CertificationFailure("continuous_subgeometric", "precondition",
                                    {"A": (coup1.A, coup2.A)},
                                    f"no N <= {n_search_max} satisfies (b/sigma)(1 + sigma T/2N) < A")
    t0 = T / N
    drift1, wl1, implicit1 = _explicit_cert(cert1, V1, t0)
    drift2, wl2, _ = _explicit_cert(cert2, V2, t0)
    logger.info(f"Continuous subgeometric route: N = {N}, t0 = {t0:.4g}")

    if xi is None:
        phi1_V1 = np.asarray(wl1.phi(drift1.V_tilde), dtype=float)
        xi = interpolation_xi_from_states(drift1.V_tilde, phi1_V1, drift2.V_tilde,
                                          default_lambda_grid())
    else:
        xi = sampled(default_lambda_grid(), (1.0 + cert2.sigma * t0) * xi(default_lambda_grid()),
                     shape="convex")

    result = interpolated_rate(wl1, wl2, (replace(coup1, N=N), replace(coup2, N=N)), xi,
                              drift1.V_tilde, drift2.V_tilde, n_max=n_max)
    if isinstance(result, CertificationFailure):
        return result
    v1_rate, tv_rate = result
    growth = (1.0 + cert1.b * t0) * (1.0 + implicit1)
    return _continuous_envelope(v1_rate, t0, growth), _continuous_envelope(tv_rate, t0)


def continuous_feller_rate(L: GeneratorMatrix, V: Sequence[float], cert: GeneratorLyapunovCert,
                           R: float, T: float, psi: Optional[ScalarFunction] = None,
                           eps: float = 0.1, n_max: int = 500,
                           n_search_max: int = N_SEARCH_MAX):
    """
    Feller composition for the semigroup: time-t0 implicit drift, the
    explicit (V~, phi~), then the discrete Feller route on S_t0 with
    Harris sets of S_t0^N = S_T, lifted to continuous time.

    t0 = T/N with N the smallest integer putting K~/sigma~ below the
    midpoint of (b/sigma, R/2). Without ``psi`` the polynomial builder is
    applied to phi~.

    Returns:
        (RateFunction for psi(V~), RateFunction for TV, context), or a
        CertificationFailure
    """
    V = np.asarray(V, dtype=float)
    if cert.kind != "weak":
        raise ValueError("continuous_feller_rate needs a weak generator certificate")
    ratio = cert.b / cert.sigma
    if not R / 2.0 > ratio:
        return CertificationFailure("continuous_feller", "precondition", {"R": R},
                                    f"R > 2b/sigma violated: 2b/sigma = {2.0 * ratio:.6g}")
    N = _select_power([ratio], [cert.sigma], [0.5 * (ratio + R / 2.0)], T, n_search_max)
    if N is None:
        return CertificationFailure("continuous_feller", "precondition", {"T": T},
                                    f"no N <= {n_search_max} fits the drift below R/2")
    t0 = T / N
    drift, wl, implicit_sigma = _explicit_cert(cert, V, t0)
    if psi is None:
        psi = psi_builder_polynomial(drift.phi_tilde, R, eps=eps,
                                     u_max=10.0 * float(drift.V_tilde.max()))
    S0 = semigroup_at(L, t0)
    sigma_grid = np.geomspace(max(drift.sigma_bar * 1e-2, 1e-9), min(1.0, 4.0 * drift.sigma_bar),
                              SIGMA_GRID_POINTS)
    result = feller_rate(wl, S0, drift.V_tilde, psi, R, N, n_max=n_max, sigma_grid=sigma_grid)
    if isinstance(result, CertificationFailure):
        return result
    v1_rate, tv_rate, context = result
    # P_s psi(V~) <= psi(V~) + b s for s < t0
    growth = 1.0 + cert.b * t0
    context = {**context, "N": N, "t0": t0, "V_tilde": drift.V_tilde, "explicit_sigma": implicit_sigma}
    return _continuous_envelope(v1_rate, t0, growth), _continuous_envelope(tv_rate, t0), context


# ----------------------------------------------------------------------
# Cesaro averages
# ----------------------------------------------------------------------
def _integral_block(L: GeneratorMatrix, h: float) -> np.ndarray:
    # int_0^h exp(sL) ds from the exponential of [[L, I], [0, 0]]
    n = L.size
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = L.matrix * h
    block[:n, n:] = np.eye(n) * h
    return linalg.expm(block)[:n, n:]


def cesaro_invariant(source, mu0: Sequence[float], horizon: float = CESARO_MAX_HORIZON,
                     tol: float = 1e-10, cert=None, V: Optional[Sequence[float]] = None,
                     base_time: float = 1.0) -> CesaroResult:
    """
    Cesaro average mu_T = (1/T) sum_{k<T} mu0 S^k (or the time average
    of mu0 S_t over [0, T] for a generator), T doubling until
    ||mu_T S - mu_T|| <= tol (||mu_T L|| for a generator).

    With a weak certificate (discrete or generator) and V the averaged
    phi(V)-moment is compared with (mu0 V / T + K)/sigma.

    Raises:
        ValueError: If mu0 is not a probability vector
        ConvergenceError: If the horizon runs out first
    """
    mu0 = np.asarray(mu0, dtype=float)
    if np.any(mu0 < -1e-15) or abs(mu0.sum() - 1.0) > 1e-12:
        raise ValueError("mu0 must be a probability vector")
    continuous = isinstance(source, GeneratorMatrix)
    if not continuous and not isinstance(source, StochasticKernel):
        raise ValueError("source must be a StochasticKernel or a GeneratorMatrix")
    size = source.size

    if continuous:
        T = base_time
        power = semigroup_at(source, T).matrix
        total = _integral_block(source, T)

        def residual_of(mu):
            return total_variation(mu @ source.matrix)
    else:
        T = 1
        power = source.matrix.copy()
        total = np.eye(size)

        def residual_of(mu):
            return total_variation(mu @ source.matrix - mu)

    while True:
        mu = np.clip(mu0 @ total / T, 0.0, None)
        mu = mu / mu.sum()
        residual = residual_of(mu)
        if residual <= tol:
            break
        if 2 * T > horizon:
            raise ConvergenceError(f"Cesaro average did not settle within horizon {horizon:g}",
                                   residual)
        total = total + total @ power
        power = power @ power
        T = 2 * T

    moment = None
    if cert is not None and V is not None:
        V = np.asarray(V, dtype=float)
        sigma = cert.sigma if isinstance(cert, GeneratorLyapunovCert) else cert.sigma_bar
        K = cert.b if isinstance(cert, GeneratorLyapunovCert) else cert.K
        averaged = float(mu @ np.asarray(cert.phi(V), dtype=float))
        bound = (float(mu0 @ V) / T + K) / sigma
        moment = {"averaged_phi_moment": averaged, "bound": bound,
                  "passed": averaged <= bound * (1.0 + 1e-9)}
    logger.debug(f"Cesaro average settled at T = {T:g} (residual {residual:.3e})")
    return CesaroResult(mu=mu, horizon=float(T), residual=float(residual), moment=moment)
