"""
Verification Harness Module
===========================

Empirical side of the certification pipeline:
- decay tables ||S^n nu|| (or ||S_t nu||) in the requested norms
- envelope validation: measured norm against envelope times the
  reference norm of the initial measure
- existence via the Cauchy budget of the iterates mu_k = S^k mu0
- uniqueness via the fixed-point space and the weak-Lyapunov decrease
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .condition_checkers import CouplingCert, WeakLyapunovCert
from .kernel_ops import (GeneratorMatrix, StochasticKernel, fixed_space_dimension,
                         semigroup_at, stationary_vectors)
from .measure_core import (is_zero_mean, random_probability, random_zero_mean,
                           total_variation, triple_norm, weighted_norm)
from .utils import config_section


NORM_COLUMNS = {"tv": "tv", "v1": "v1_norm", "v2": "v2_norm"}
TIME_COLUMNS = ("n", "t", "n_or_t")
BUDGET_SLACK = 1e-9

HARNESS_DEFAULTS = {
    "slack": 1e-9,
    "absolute_floor": 1e-14,
    "random_measures": 20,
    "existence_draws": 20,
    "seed": 0,
    "n_max": 500,
    "t_max": 50.0,
    "t_points": 50,
}

Norms = Sequence[Tuple[str, Optional[np.ndarray]]]


def _norm(tag: str, mu: np.ndarray, weight: Optional[np.ndarray]) -> float:
    if tag == "tv" or weight is None:
        return total_variation(mu)
    return weighted_norm(mu, weight)


def _time_column(decay: pd.DataFrame) -> str:
    for name in TIME_COLUMNS:
        if name in decay.columns:
            return name
    raise ValueError(f"Decay table has no time column; columns are {list(decay.columns)}")


class Harness:
    """
    Simulate-and-compare harness.

    Args:
        config: Merged configuration; reads the ``harness`` section
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.settings = config_section(self.config, "harness", HARNESS_DEFAULTS)
        self.logger = logging.getLogger(__name__)
        self._semigroup_cache: Dict[Tuple[str, float], StochasticKernel] = {}

    # ------------------------------------------------------------------
    # simulation
    # ------------------------------------------------------------------
    def random_measures(self, size: int, count: Optional[int] = None,
                        seed: Optional[int] = None) -> np.ndarray:
        """Zero-mean Dirichlet pair differences from a seeded generator, one per row."""
        rng = np.random.default_rng(self.settings["seed"] if seed is None else seed)
        return random_zero_mean(rng, size, count or self.settings["random_measures"])

    def simulate_decay(self, S: StochasticKernel, nu: Sequence[float], n_max: int,
                       norms: Optional[Norms] = None) -> pd.DataFrame:
        """
        Table of ||S^n nu|| for n = 0..n_max.

        Args:
            norms: (tag, weight) pairs with tag in tv/v1/v2; TV only by default

        Raises:
            ValueError: If n_max < 1 or a tag is unknown
        """
        if n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {n_max}")
        norms = self._check_norms(norms)
        mu = np.array(nu, dtype=float)
        if mu.shape != (S.size,):
            raise ValueError(f"Measure has shape {mu.shape}, expected ({S.size},)")
        if not is_zero_mean(mu):
            self.logger.warning("Decay table for a measure with nonzero mass; "
                                "envelopes do not apply")

        rows = []
        for n in range(n_max + 1):
            rows.append([n] + [_norm(tag, mu, weight) for tag, weight in norms])
            mu = mu @ S.matrix
        return pd.DataFrame(rows, columns=["n"] + [NORM_COLUMNS[tag] for tag, _ in norms])

    def simulate_continuous(self, L: GeneratorMatrix, nu: Sequence[float],
                            t_grid: Sequence[float], norms: Optional[Norms] = None) -> pd.DataFrame:
        """Table of ||S_t nu|| on t = 0 and the (sorted) grid times."""
        norms = self._check_norms(norms)
        mu = np.array(nu, dtype=float)
        if not is_zero_mean(mu):
            self.logger.warning("Decay table for a measure with nonzero mass; "
                                "envelopes do not apply")
        times = np.unique(np.concatenate([[0.0], np.asarray(t_grid, dtype=float)]))
        if times[0] < 0.0:
            raise ValueError("t_grid must be nonnegative")

        rows = []
        for t in times:
            current = mu if t == 0.0 else mu @ self._semigroup(L, float(t)).matrix
            rows.append([float(t)] + [_norm(tag, current, weight) for tag, weight in norms])
        return pd.DataFrame(rows, columns=["t"] + [NORM_COLUMNS[tag] for tag, _ in norms])

    def _semigroup(self, L: GeneratorMatrix, t: float) -> StochasticKernel:
        key = (L.content_hash, t)
        if key not in self._semigroup_cache:
            self._semigroup_cache[key] = semigroup_at(L, t)
        return self._semigroup_cache[key]

    @staticmethod
    def _check_norms(norms: Optional[Norms]) -> List[Tuple[str, Optional[np.ndarray]]]:
        norms = list(norms) if norms else [("tv", None)]
        for tag, _ in norms:
            if tag not in NORM_COLUMNS:
                raise ValueError(f"Unknown norm tag '{tag}'")
        return norms

    # ------------------------------------------------------------------
    # validation
    # ------------------------------------------------------------------
    def validate_envelope(self, decay: pd.DataFrame, env, slack: Optional[float] = None) -> Dict[str, Any]:
        """
        Check measured <= envelope(n) * ||nu||_ref * (1 + slack) on every row.

        The reference norm is read from row 0 of the table. Measured values
        below ``absolute_floor`` times the reference count as zero.

        Returns:
            Dict with ``passed``, ``worst_ratio`` and ``witness`` (the first
            violation when failing, else the row of the worst ratio)

        Raises:
            ValueError: If the table lacks a column the envelope needs
        """
        slack = self.settings["slack"] if slack is None else slack
        time_col = _time_column(decay)
        measured_col = NORM_COLUMNS.get(env.norm_tag)
        reference_col = NORM_COLUMNS.get(env.reference_tag)
        for column in (measured_col, reference_col):
            if column is None or column not in decay.columns:
                raise ValueError(f"Envelope needs norms {env.norm_tag}/{env.reference_tag}; "
                                 f"table has {list(decay.columns)}")

        times = decay[time_col].to_numpy(dtype=float)
        measured = decay[measured_col].to_numpy(dtype=float)
        reference = float(decay[reference_col].iloc[0])
        bound = np.asarray(env.value(times), dtype=float) * reference
        floor = self.settings["absolute_floor"] * max(reference, 1.0)

        significant = measured > floor
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(significant, measured / bound, 0.0)
        ratios = np.nan_to_num(ratios, nan=0.0, posinf=np.inf)
        violations = np.flatnonzero(significant & (measured > bound * (1.0 + slack)))

        row = int(violations[0]) if violations.size else int(np.argmax(ratios))
        return {
            "passed": bool(violations.size == 0),
            "worst_ratio": float(ratios.max()) if ratios.size else 0.0,
            "witness": {time_col: float(times[row]), "measured": float(measured[row]),
                        "envelope": float(bound[row])},
        }

    def validate_many(self, system, nus: Sequence[Sequence[float]], envelopes: Dict[str, Dict[str, Any]],
                      horizon: Optional[float] = None, slack: Optional[float] = None) -> Dict[str, Dict[str, Any]]:
        """
        Sweep every (measure, envelope) pair.

        Args:
            system: StochasticKernel (n = 0..horizon) or GeneratorMatrix
                (t on ``t_points`` grid times up to horizon)
            envelopes: name -> {"envelope": env, "weights": {"v1": V1, "v2": V2}}

        Returns:
            name -> {passed, worst_ratio, witness} with the measure index
            added to the witness
        """
        continuous = isinstance(system, GeneratorMatrix)
        if continuous:
            t_max = float(horizon or self.settings["t_max"])
            t_grid = np.linspace(0.0, t_max, int(self.settings["t_points"]) + 1)[1:]
        else:
            n_max = int(horizon or self.settings["n_max"])

        outcomes: Dict[str, Dict[str, Any]] = {}
        for name, entry in envelopes.items():
            env = entry["envelope"]
            norms = [("tv", None)] + [(tag, np.asarray(w, dtype=float))
                                      for tag, w in sorted(entry.get("weights", {}).items())]
            worst = {"passed": True, "worst_ratio": 0.0, "witness": None}
            for index, nu in enumerate(nus):
                if continuous:
                    decay = self.simulate_continuous(system, nu, t_grid, norms)
                else:
                    decay = self.simulate_decay(system, nu, n_max, norms)
                outcome = self.validate_envelope(decay, env, slack)
                outcome["witness"]["measure"] = index
                if not outcome["passed"] and worst["passed"]:
                    worst = outcome
                elif outcome["passed"] == worst["passed"] and outcome["worst_ratio"] > worst["worst_ratio"]:
                    worst = outcome
            worst["measures"] = len(nus)
            marker = "✅" if worst["passed"] else "❌"
            self.logger.info(f"{marker} Envelope {name}: worst ratio {worst['worst_ratio']:.6g} "
                             f"over {len(nus)} measures")
            outcomes[name] = worst
        return outcomes

    # ------------------------------------------------------------------
    # existence and uniqueness
    # ------------------------------------------------------------------
    @staticmethod
    def _decrease_constants(wl: WeakLyapunovCert, coup: CouplingCert) -> Tuple[float, float]:
        # beta = (1 - gamma_H)/(K N), alpha = beta (sigma_bar - K/A)
        beta = (1.0 - coup.gamma_H) / (wl.K * coup.N)
        alpha = beta * (wl.sigma_bar - wl.K / coup.A)
        if not alpha > 0.0:
            raise ValueError(f"Coupling level A = {coup.A} must exceed K/sigma_bar = "
                             f"{wl.K / wl.sigma_bar:.6g}")
        return beta, alpha

    def existence_check(self, S: StochasticKernel, mu0: Sequence[float], n_max: int,
                        V: Optional[Sequence[float]] = None,
                        wl: Optional[WeakLyapunovCert] = None,
                        coup: Optional[CouplingCert] = None) -> Dict[str, Any]:
        """
        Iterate mu_k = S^k mu0 and track the Cauchy budget
        alpha * sum_k ||mu_{k+1} - mu_k||_{phi(V)} <= triple(S mu0 - mu0) + 1e-9.

        Without certificates only the limit candidate is reported.

        Returns:
            Dict with ``mu_star``, ``residual``, ``budget``, ``consumed``
            (fraction of the budget) and ``passed``

        Raises:
            ValueError: If mu0 is not a probability vector or A <= K/sigma_bar
        """
        mu = np.array(mu0, dtype=float)
        if np.any(mu < -1e-15) or abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu0 must be a probability vector")
        certified = wl is not None and coup is not None and V is not None
        if certified:
            V = np.asarray(V, dtype=float)
            beta, alpha = self._decrease_constants(wl, coup)
            phi_V = np.asarray(wl.phi(V), dtype=float)
            budget = triple_norm(mu @ S.matrix - mu, V, beta) + BUDGET_SLACK

        spent, exceeded_at = 0.0, None
        for k in range(int(n_max)):
            nxt = mu @ S.matrix
            if certified:
                spent += alpha * weighted_norm(nxt - mu, phi_V)
                if spent > budget and exceeded_at is None:
                    exceeded_at = k
            mu = nxt

        result = {
            "mu_star": mu,
            "residual": total_variation(mu @ S.matrix - mu),
            "iterations": int(n_max),
            "budget": budget if certified else None,
            "consumed": spent / budget if certified else None,
            "passed": exceeded_at is None,
            "exceeded_at": exceeded_at,
        }
        if exceeded_at is not None:
            self.logger.error(f"❌ Cauchy budget exceeded at k={exceeded_at}; "
                              "the certificate is inconsistent")
        return result

    def existence_sweep(self, S: StochasticKernel, n_max: int, V=None, wl=None, coup=None,
                        count: Optional[int] = None, seed: Optional[int] = None) -> Dict[str, Any]:
        """existence_check over seeded random initial distributions."""
        rng = np.random.default_rng(self.settings["seed"] if seed is None else seed)
        starts = random_probability(rng, S.size, count or self.settings["existence_draws"])
        runs = [self.existence_check(S, mu0, n_max, V, wl, coup) for mu0 in starts]
        consumed = [run["consumed"] for run in runs if run["consumed"] is not None]
        return {
            "passed": all(run["passed"] for run in runs),
            "draws": len(runs),
            "max_consumed": max(consumed) if consumed else None,
            "max_residual": max(run["residual"] for run in runs),
            "mu_star": runs[0]["mu_star"],
        }

    def uniqueness_check(self, S: StochasticKernel, tol: float = 1e-10,
                         V: Optional[Sequence[float]] = None,
                         wl: Optional[WeakLyapunovCert] = None,
                         coup: Optional[CouplingCert] = None) -> Dict[str, Any]:
        """
        Dimension of ker(K^T - I) plus, with certificates, the decrease
        alpha ||pi_a - pi_b||_{phi(V)} that the weak-Lyapunov inequality
        forces to zero for any two equilibria.
        """
        multiplicity = fixed_space_dimension(S)
        candidates = stationary_vectors(S)
        report: Dict[str, Any] = {
            "multiplicity": multiplicity,
            "unique": multiplicity == 1,
            "candidates": candidates,
        }
        if wl is not None and coup is not None and V is not None:
            _, alpha = self._decrease_constants(wl, coup)
            phi_V = np.asarray(wl.phi(np.asarray(V, dtype=float)), dtype=float)
            decreases = []
            for other in candidates[1:]:
                nu = candidates[0] - other
                residual = total_variation(nu @ S.matrix - nu)
                decreases.append({"decrease": alpha * weighted_norm(nu, phi_V), "residual": residual})
            worst = max((d["decrease"] for d in decreases), default=0.0)
            report["weak_lyapunov"] = {"pairs": decreases, "forced_zero": worst <= tol}
            if worst > tol:
                self.logger.warning("Two equilibria with positive phi(V)-distance contradict "
                                    "the supplied certificates")
        marker = "✅" if report["unique"] else "❌"
        self.logger.info(f"{marker} Fixed-point space dimension {multiplicity}")
        return report
