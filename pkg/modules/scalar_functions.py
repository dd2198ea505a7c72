"""
Scalar Functions Module
=======================

Closed-form tagged or grid-sampled functions of one real variable on
[1, inf): the sublinear rates phi, the concave transforms psi, the
interpolation functions xi and their transforms.

Supported tags:
- power:        c * v**p
- log_power:    v / (log v)**a beyond e**(a+1), linear from (1, 1) below
- affine:       c0 + c1 * v
- constant:     c
- arctan:       n * arctan(pi/2 + v/n)
- psi_integral: 1 + int_1^u m(v)/phi(v) dv, tabulated
- sampled:      piecewise-linear through (v, f(v)) pairs, +inf allowed at the ends
- tail_integral: int_lambda^1 q(s) ds on (0, 1], tabulated in log-s
"""

import logging
import math
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
from scipy import integrate


logger = logging.getLogger(__name__)

CONCAVITY_ATOL = 1e-9
# right end of the grid used by the phi-role and concavity checks
CHECK_V_MAX = 1e12


class ScalarFunction:
    """
    A tagged scalar function with value and derivative.

    Args:
        tag: One of the supported tags
        params: Tag parameters
        role: ``"phi"`` validates concavity, phi(1) = 1 and phi(v)/v
            strictly decreasing at construction
        shape: ``concave``, ``convex`` or ``monotone``
    """

    def __init__(self, tag: str, params: Optional[Dict[str, Any]] = None,
                 role: Optional[str] = None, shape: str = "monotone"):
        self.tag = tag
        self.params = dict(params or {})
        self.role = role
        self.shape = shape
        self.logger = logging.getLogger(__name__)

        builders = {
            'power': self._build_power,
            'log_power': self._build_log_power,
            'affine': self._build_affine,
            'constant': self._build_constant,
            'arctan': self._build_arctan,
            'psi_integral': self._build_psi_integral,
            'sampled': self._build_sampled,
            'tail_integral': self._build_tail_integral,
        }
        if tag not in builders:
            raise ValueError(f"Unsupported function tag: {tag}")
        self._value, self._derivative = builders[tag]()

        if role == "phi":
            self.shape = "concave"
            report = self.check_concave(np.random.default_rng(0))
            if not report["passed"]:
                raise ValueError(f"phi must be concave; three-point test failed at {report['witness']}")
            role_report = self.check_phi_role()
            if not role_report["passed"]:
                raise ValueError(f"Function rejected as phi: {role_report['reason']}")

    # ------------------------------------------------------------------
    # builders
    # ------------------------------------------------------------------
    def _build_power(self):
        c = float(self.params.get('c', 1.0))
        p = float(self.params['p'])
        return (lambda v: c * np.power(v, p),
                lambda v: c * p * np.power(v, p - 1.0))

    def _build_log_power(self):
        a = float(self.params['a'])
        if a <= 0:
            raise ValueError(f"log_power exponent must be positive, got {a}")
        u0 = math.exp(a + 1.0)
        f0 = u0 / (a + 1.0) ** a
        slope = (f0 - 1.0) / (u0 - 1.0)
        tangent = (a + 1.0) ** (-a - 1.0)
        if slope < tangent:
            raise ValueError(f"log_power continuation is not concave for a = {a}")

        def value(v):
            v = np.asarray(v, dtype=float)
            safe = np.maximum(v, u0)
            tail = safe / np.log(safe) ** a
            return np.where(v >= u0, tail, 1.0 + slope * (v - 1.0))

        def derivative(v):
            v = np.asarray(v, dtype=float)
            safe = np.maximum(v, u0)
            logs = np.log(safe)
            tail = logs ** (-a - 1.0) * (logs - a)
            return np.where(v >= u0, tail, slope)

        return value, derivative

    def _build_affine(self):
        c0 = float(self.params.get('c0', 0.0))
        c1 = float(self.params.get('c1', 1.0))
        return (lambda v: c0 + c1 * np.asarray(v, dtype=float),
                lambda v: np.full_like(np.asarray(v, dtype=float), c1))

    def _build_constant(self):
        c = float(self.params.get('c', 1.0))
        return (lambda v: np.full_like(np.asarray(v, dtype=float), c),
                lambda v: np.zeros_like(np.asarray(v, dtype=float)))

    def _build_arctan(self):
        n = float(self.params['n'])
        offset = math.pi / 2.0
        return (lambda v: n * np.arctan(offset + np.asarray(v, dtype=float) / n),
                lambda v: 1.0 / (1.0 + (offset + np.asarray(v, dtype=float) / n) ** 2))

    def _build_psi_integral(self):
        integrand: Callable = self.params['integrand']
        u_max = float(self.params.get('u_max', 1e15))
        points = int(self.params.get('points', 4001))
        grid = np.unique(np.concatenate([[1.0], np.logspace(0.0, math.log10(u_max), points)]))
        increments = np.array([
            integrate.quad(integrand, lo, hi, limit=200, epsrel=1e-11)[0]
            for lo, hi in zip(grid[:-1], grid[1:])
        ])
        cumulative = np.concatenate([[1.0], 1.0 + np.cumsum(increments)])
        self.params['grid'] = grid
        self.params['table'] = cumulative

        def value(u):
            u = np.asarray(u, dtype=float)
            index = np.clip(np.searchsorted(grid, u, side='right') - 1, 0, grid.size - 1)
            lo = grid[index]
            mid = 0.5 * (lo + u)
            # one Simpson panel from the nearest node, exact derivative known
            step = (u - lo) / 6.0 * (integrand_v(lo) + 4.0 * integrand_v(mid) + integrand_v(u))
            return cumulative[index] + step

        integrand_v = np.vectorize(integrand, otypes=[float])
        return value, lambda u: integrand_v(np.asarray(u, dtype=float))

    def _build_sampled(self):
        v_all = np.asarray(self.params['v'], dtype=float)
        f_all = np.asarray(self.params['f'], dtype=float)
        if v_all.ndim != 1 or v_all.size < 2 or v_all.shape != f_all.shape:
            raise ValueError("sampled function needs matching v and f arrays of length >= 2")
        if np.any(np.diff(v_all) <= 0):
            raise ValueError("sampled function grid must be strictly increasing")
        if np.any(np.isnan(f_all)) or np.any(np.isneginf(f_all)):
            raise ValueError("sampled values must be finite or +inf")

        finite = np.isfinite(f_all)
        v, f = v_all[finite], f_all[finite]
        if v.size < 2:
            raise ValueError("sampled function needs at least two finite values")
        # +inf sentinels may only sit outside the finite block
        if np.any(~finite[np.flatnonzero(finite)[0]:np.flatnonzero(finite)[-1] + 1]):
            raise ValueError("+inf sentinels must form a prefix or suffix of the grid")
        inf_below = bool(np.any(~finite & (v_all < v[0])))
        inf_above = bool(np.any(~finite & (v_all > v[-1])))
        slopes = np.diff(f) / np.diff(v)

        def value(x):
            x = np.asarray(x, dtype=float)
            inner = np.interp(x, v, f)
            below = np.inf if inf_below else f[0] + slopes[0] * (x - v[0])
            above = np.inf if inf_above else f[-1] + slopes[-1] * (x - v[-1])
            return np.where(x < v[0], below, np.where(x > v[-1], above, inner))

        def derivative(x):
            x = np.asarray(x, dtype=float)
            index = np.clip(np.searchsorted(v, x, side='right') - 1, 0, slopes.size - 1)
            result = slopes[index]
            if inf_below:
                result = np.where(x < v[0], np.inf, result)
            if inf_above:
                result = np.where(x > v[-1], np.inf, result)
            return result

        return value, derivative

    def _build_tail_integral(self):
        integrand: Callable = self.params['integrand']
        lower = float(self.params.get('lower', 1e-12))
        points = int(self.params.get('points', 241))
        grid = self.params.get('grid')
        grid = np.geomspace(lower, 1.0, points) if grid is None else np.asarray(grid, dtype=float)
        if grid[-1] != 1.0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
            raise ValueError("tail_integral grid must be positive, increasing and end at 1")
        increments = np.array([log_quad(integrand, lo, hi) for lo, hi in zip(grid[:-1], grid[1:])])
        # table[i] = int_{grid[i]}^1
        table = np.concatenate([np.cumsum(increments[::-1])[::-1], [0.0]])
        self.params['grid'] = grid
        self.params['table'] = table

        def scalar_value(lam):
            if lam >= 1.0:
                return -log_quad(integrand, 1.0, lam) if lam > 1.0 else 0.0
            index = int(np.searchsorted(grid, lam, side='left'))
            if grid[index] == lam:
                return float(table[index])
            return float(table[index]) + log_quad(integrand, lam, grid[index])

        value = np.vectorize(scalar_value, otypes=[float])
        integrand_v = np.vectorize(integrand, otypes=[float])
        return value, lambda lam: -integrand_v(np.asarray(lam, dtype=float))

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------
    def __call__(self, v):
        result = self._value(v)
        return float(result) if np.ndim(result) == 0 else np.asarray(result, dtype=float)

    def derivative(self, v):
        result = self._derivative(v)
        return float(result) if np.ndim(result) == 0 else np.asarray(result, dtype=float)

    def domain(self):
        if self.tag == 'sampled':
            grid = np.asarray(self.params['v'], dtype=float)
            return float(grid[0]), float(grid[-1])
        if self.tag == 'psi_integral':
            return 1.0, float(self.params['grid'][-1])
        if self.tag == 'tail_integral':
            return float(self.params.get('floor', 0.0)), 1.0
        return 1.0, CHECK_V_MAX

    # ------------------------------------------------------------------
    # checks
    # ------------------------------------------------------------------
    def check_concave(self, rng: np.random.Generator, count: int = 1000,
                      lo: Optional[float] = None, hi: Optional[float] = None) -> Dict[str, Any]:
        """Three-point concavity test on ``count`` random log-uniform triples."""
        d_lo, d_hi = self.domain()
        lo = d_lo if lo is None else lo
        hi = d_hi if hi is None else hi
        triples = np.sort(np.exp(rng.uniform(math.log(lo), math.log(hi), size=(count, 3))), axis=1)
        a, b, c = triples[:, 0], triples[:, 1], triples[:, 2]
        width = c - a
        keep = width > 0
        a, b, c, width = a[keep], b[keep], c[keep], width[keep]
        chord = ((c - b) * self(a) + (b - a) * self(c)) / width
        values = self(b)
        scale = np.maximum(1.0, np.abs(values))
        gaps = (chord - values) / scale
        worst = int(np.argmax(gaps)) if gaps.size else 0
        passed = bool(gaps.size == 0 or gaps[worst] <= CONCAVITY_ATOL)
        witness = None if passed else (float(a[worst]), float(b[worst]), float(c[worst]))
        return {"passed": passed, "worst_gap": float(gaps[worst]) if gaps.size else 0.0,
                "witness": witness}

    def check_phi_role(self, points: int = 2000) -> Dict[str, Any]:
        """phi(1) = 1, nondecreasing, phi(v)/v strictly decreasing on a log grid."""
        lo, hi = self.domain()
        if abs(self(1.0) - 1.0) > 1e-9:
            return {"passed": False, "reason": f"phi(1) = {self(1.0)}, expected 1"}
        grid = np.logspace(math.log10(max(lo, 1.0)), math.log10(hi), points)
        values = self(grid)
        if np.any(np.diff(values) < -1e-12 * np.maximum(1.0, np.abs(values[1:]))):
            return {"passed": False, "reason": "phi is not nondecreasing"}
        ratios = values / grid
        if not np.all(np.diff(ratios) < 0.0):
            index = int(np.argmax(np.diff(ratios) >= 0.0))
            return {"passed": False,
                    "reason": f"phi(v)/v is not strictly decreasing near v = {grid[index]:.6g}"}
        return {"passed": True, "reason": None}

    def to_dict(self) -> Dict[str, Any]:
        params = {k: v for k, v in self.params.items()
                  if k not in ('integrand', 'grid', 'table')}
        if self.tag == 'sampled':
            params = {'points': int(np.asarray(self.params['v']).size)}
        return {"tag": self.tag, "params": params, "role": self.role, "shape": self.shape}

    def __repr__(self) -> str:
        return f"ScalarFunction({self.tag}, {self.to_dict()['params']})"


def log_quad(integrand: Callable[[float], float], lo: float, hi: float,
             epsrel: float = 1e-10) -> float:
    """int_lo^hi q(s) ds computed in log-s coordinates (0 < lo <= hi)."""
    if hi <= lo:
        return 0.0

    def shifted(x):
        s = math.exp(x)
        return s * integrand(s)

    result, _ = integrate.quad(shifted, math.log(lo), math.log(hi), limit=200,
                               epsabs=0.0, epsrel=epsrel)
    return float(result)


def from_descriptor(descriptor: Dict[str, Any], role: Optional[str] = None) -> ScalarFunction:
    """
    Build a ScalarFunction from a model-file descriptor such as
    ``{"tag": "power", "p": 0.5}``.
    """
    params = {k: v for k, v in descriptor.items() if k not in ('tag', 'shape')}
    shape = descriptor.get('shape', 'monotone')
    return ScalarFunction(descriptor['tag'], params, role=role, shape=shape)


def sampled(v: Sequence[float], f: Sequence[float], role: Optional[str] = None,
            shape: str = "monotone") -> ScalarFunction:
    """Shorthand for a sampled function."""
    return ScalarFunction('sampled', {'v': list(v), 'f': list(f)}, role=role, shape=shape)
