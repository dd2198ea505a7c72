"""
Certifier Module
================

Turns a validated model into certificates, envelopes, verification
outcomes and the existence/uniqueness findings, one ordered step at a
time. Each step logs ✅ or ❌; steps that do not apply are recorded as
skipped with the reason.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .condition_checkers import (CertificationFailure, check_doeblin, check_harris,
                                 check_local_coupling, check_lyapunov, check_weak_lyapunov,
                                 harris_to_coupling)
from .continuous_time import (cesaro_invariant, check_generator_lyapunov, continuous_feller_rate,
                              continuous_subgeometric_rate, integrated_weak_drift_check,
                              semigroup_drift_check,
                              semigroup_geometric_rate)
from .geometric_rates import (doeblin_rate, harris_power_rate, harris_tv_envelope,
                              semigroup_doeblin_rate)
from .harness import Harness
from .kernel_ops import ConvergenceError, semigroup_at
from .model_loader import Model
from .subgeometric_rates import feller_rate, interpolated_rate_from_harris
from .utils import config_section


CHECKER_DEFAULTS = {
    "stationary_tol": 1e-10,
    "cesaro_tol": 1e-10,
}

SUBGEOMETRIC_DEFAULTS = {
    "n_max": 500,
}

CONTINUOUS_DEFAULTS = {
    "drift_points": 50,
    "base_time": 1.0,
    "n_search_max": 1_000_000,
    "cesaro_max_horizon": 1e6,
}

Step = Tuple[str, Callable[[Model, "CertificationRun"], Optional[str]]]


@dataclass
class CertificationRun:
    """Everything the steps produce for one model."""

    model: Model
    certificates: Dict[str, Any] = field(default_factory=dict)
    failures: Dict[str, Any] = field(default_factory=dict)
    envelopes: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    verification: Dict[str, Any] = field(default_factory=dict)
    existence: Dict[str, Any] = field(default_factory=dict)
    uniqueness: Dict[str, Any] = field(default_factory=dict)
    steps: List[Dict[str, Any]] = field(default_factory=list)
    context: Dict[str, Any] = field(default_factory=dict)
    with_envelopes: bool = True

    def record(self, name: str, result) -> bool:
        """Store a certificate or a failure under ``name``; True on success."""
        if isinstance(result, CertificationFailure):
            self.failures[name] = result
            return False
        self.certificates[name] = result
        return True

    def add_envelope(self, name: str, envelope, weights: Optional[Dict[str, np.ndarray]] = None):
        self.envelopes[name] = {"envelope": envelope, "weights": weights or {}}

    @property
    def missing_expectations(self) -> List[str]:
        expect = self.model.expect
        missing = [f"certificate:{c}" for c in expect.get("certificates", [])
                   if c not in self.certificates]
        if self.with_envelopes:
            missing += [f"envelope:{e}" for e in expect.get("envelopes", []) if e not in self.envelopes]
        if "unique" in expect and self.uniqueness and self.uniqueness.get("unique") != expect["unique"]:
            missing.append("uniqueness")
        return missing

    @property
    def violations(self) -> List[str]:
        failed = [name for name, outcome in self.verification.items() if not outcome.get("passed", True)]
        if self.existence and not self.existence.get("passed", True):
            failed.append("existence")
        return failed

    @property
    def exit_code(self) -> int:
        if self.violations:
            return 2
        if self.missing_expectations:
            return 1
        return 0


class Certifier:
    """
    Ordered certification pipeline.

    Args:
        config: Merged configuration dictionary
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.settings = config_section(self.config, "checkers", CHECKER_DEFAULTS)
        self.subgeometric = config_section(self.config, "subgeometric", SUBGEOMETRIC_DEFAULTS)
        self.continuous = config_section(self.config, "continuous", CONTINUOUS_DEFAULTS)
        self.harness = Harness(self.config)
        self.logger = logging.getLogger(__name__)

    def certify(self, model: Model, envelopes: bool = True, verify: bool = True) -> CertificationRun:
        """
        Run the step list on ``model``.

        Args:
            envelopes: Assemble the geometric, subgeometric and continuous envelopes
            verify: Simulate and validate every envelope (implies envelopes)
        """
        run = CertificationRun(model=model, with_envelopes=envelopes or verify)
        steps: List[Step] = [
            ("doeblin", self._doeblin),
            ("harris", self._harris),
            ("lyapunov", self._lyapunov),
            ("weak_lyapunov", self._weak_lyapunov),
            ("coupling", self._coupling),
        ]
        if envelopes or verify:
            steps += [
                ("geometric_envelopes", self._geometric_envelopes),
                ("subgeometric_envelopes", self._subgeometric_envelopes),
                ("continuous_envelopes", self._continuous_envelopes),
            ]
        steps += [("existence", self._existence), ("uniqueness", self._uniqueness)]
        if verify:
            steps.append(("verification", self._verification))

        self.logger.info(f"🔍 Certifying model '{model.name}'")
        for name, func in steps:
            try:
                skipped = func(model, run)
            except (ValueError, ConvergenceError) as exc:
                run.failures[name] = CertificationFailure(name, "precondition", None, str(exc))
                run.steps.append({"name": name, "status": "error", "detail": str(exc)})
                self.logger.error(f"❌ {name}: {exc}")
                continue
            if skipped:
                run.steps.append({"name": name, "status": "skipped", "detail": skipped})
                self.logger.info(f"⏭️  {name} skipped: {skipped}")
                continue
            failed = [key for key in run.failures if key == name or key.startswith(f"{name}:")]
            status = "failed" if failed else "ok"
            run.steps.append({"name": name, "status": status, "detail": ""})
            if failed:
                for key in failed:
                    failure = run.failures[key]
                    self.logger.warning(f"❌ {key}: {failure.reason} (witness {failure.witness})")
            else:
                self.logger.info(f"✅ {name}")

        code = run.exit_code
        if run.missing_expectations:
            self.logger.warning(f"Expected but not obtained: {', '.join(run.missing_expectations)}")
        self.logger.info(f"Certification of '{model.name}' finished with code {code}")
        return run

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------
    def _tolerance(self, model: Model, key: str) -> float:
        return float(model.tolerances.get(key, self.settings[f"{key}_tol"]))

    def _drift_grid(self) -> np.ndarray:
        return np.linspace(0.0, float(self.harness.settings["t_max"]),
                           int(self.continuous["drift_points"]) + 1)[1:]

    def _kernel(self, model: Model, run: CertificationRun):
        """The kernel, or S_T for a generator model."""
        if not model.continuous:
            return model.kernel
        if "S_T" not in run.context:
            run.context["S_T"] = semigroup_at(model.generator, model.T)
        return run.context["S_T"]

    # ------------------------------------------------------------------
    # certificate steps
    # ------------------------------------------------------------------
    def _doeblin(self, model: Model, run: CertificationRun):
        run.record("doeblin", check_doeblin(self._kernel(model, run)))

    def _harris(self, model: Model, run: CertificationRun):
        if model.R is None:
            return "no harris_R"
        run.record("harris", check_harris(self._kernel(model, run), model.weight, model.R,
                                          1 if model.continuous else model.N))

    def _lyapunov(self, model: Model, run: CertificationRun):
        if model.V is None:
            return "no weight_V"
        if model.continuous:
            run.record("lyapunov", check_generator_lyapunov(model.generator, model.V,
                                                            sigma_grid=model.sigma_grid))
        else:
            run.record("lyapunov", check_lyapunov(model.kernel, model.V, model.K_grid))

    def _weak_lyapunov(self, model: Model, run: CertificationRun):
        if model.V is None or model.phi is None:
            return "no weight_V/phi"
        if model.continuous:
            run.record("weak_lyapunov", check_generator_lyapunov(model.generator, model.V, model.phi))
        else:
            run.record("weak_lyapunov", check_weak_lyapunov(model.kernel, model.V, model.phi,
                                                            sigma_grid=model.sigma_grid))
        if model.V2 is not None and model.phi2 is not None:
            if model.continuous:
                result = check_generator_lyapunov(model.generator, model.V2, model.phi2)
            else:
                result = check_weak_lyapunov(model.kernel, model.V2, model.phi2)
            run.record("weak_lyapunov:V2", result)

    def _coupling(self, model: Model, run: CertificationRun):
        if model.A is None:
            return "no coupling_A"
        N = 1 if model.continuous else model.N
        run.record("coupling", check_local_coupling(self._kernel(model, run), model.weight, model.A, N))

    # ------------------------------------------------------------------
    # envelope steps
    # ------------------------------------------------------------------
    def _geometric_envelopes(self, model: Model, run: CertificationRun):
        if model.continuous:
            return "generator model; see continuous_envelopes"
        if "doeblin" in run.certificates:
            run.add_envelope("doeblin_tv", doeblin_rate(run.certificates["doeblin"]))
        result = harris_power_rate(model.kernel, model.weight, model.N, K_grid=model.K_grid)
        if run.record("geometric_envelopes:harris", result):
            v_env, tv_env, context = run.certificates.pop("geometric_envelopes:harris")
            run.add_envelope("harris_v1", v_env, {"v1": model.weight})
            run.add_envelope("harris_tv", tv_env, {"v1": model.weight})
            run.context["harris_route"] = context

    def _subgeometric_envelopes(self, model: Model, run: CertificationRun):
        if model.continuous:
            return "generator model; see continuous_envelopes"
        weak = run.certificates.get("weak_lyapunov")
        if weak is None or model.R is None:
            return "needs a weak Lyapunov certificate and harris_R"
        n_max = int(self.subgeometric["n_max"])
        if model.psi is not None:
            result = feller_rate(weak, model.kernel, model.V, model.psi, model.R, model.N,
                                 n_max=n_max, sigma_grid=model.sigma_grid)
            if run.record("subgeometric_envelopes:feller", result):
                v1_rate, tv_rate, context = run.certificates.pop("subgeometric_envelopes:feller")
                weights = {"v1": context["V1"], "v2": model.V}
                run.add_envelope("feller_v1", v1_rate, weights)
                run.add_envelope("feller_tv", tv_rate, weights)
                run.context["feller"] = context
        second = run.certificates.get("weak_lyapunov:V2")
        if second is not None:
            result = interpolated_rate_from_harris(model.kernel, weak, second, model.V, model.V2,
                                                   model.R, model.N, xi=model.xi, n_max=n_max)
            if run.record("subgeometric_envelopes:interpolated", result):
                v1_rate, tv_rate, _ = run.certificates.pop("subgeometric_envelopes:interpolated")
                weights = {"v1": model.V, "v2": model.V2}
                run.add_envelope("interpolated_v1", v1_rate, weights)
                run.add_envelope("interpolated_tv", tv_rate, weights)

    def _continuous_envelopes(self, model: Model, run: CertificationRun):
        if not model.continuous:
            return "kernel model"
        L, T = model.generator, model.T
        doeblin = run.certificates.get("doeblin")
        if doeblin is not None and 0.0 < doeblin.alpha < 1.0:
            run.add_envelope("semigroup_doeblin_tv", semigroup_doeblin_rate(doeblin.alpha, T))

        geometric = run.certificates.get("lyapunov")
        if geometric is not None:
            run.verification["semigroup_drift"] = semigroup_drift_check(L, model.V, geometric,
                                                                        self._drift_grid())
            if model.A is not None:
                result = semigroup_geometric_rate(L, model.V, T, model.A)
                if run.record("continuous_envelopes:harris", result):
                    envelope, _ = run.certificates.pop("continuous_envelopes:harris")
                    run.add_envelope("semigroup_harris_v1", envelope, {"v1": model.V})
                    run.add_envelope("semigroup_harris_tv", harris_tv_envelope(envelope),
                                     {"v1": model.V})

        weak = run.certificates.get("weak_lyapunov")
        n_max = int(self.subgeometric["n_max"])
        if weak is not None:
            run.verification["integrated_weak_drift"] = integrated_weak_drift_check(
                L, model.V, weak, self._drift_grid())
        if weak is not None and model.R is not None:
            result = continuous_feller_rate(
                L, model.V, weak, model.R, T, psi=model.psi, n_max=n_max,
                n_search_max=int(self.continuous["n_search_max"]))
            if run.record("continuous_envelopes:feller", result):
                v1_rate, tv_rate, context = run.certificates.pop("continuous_envelopes:feller")
                weights = {"v1": context["V1"], "v2": context["V_tilde"]}
                run.add_envelope("continuous_feller_v1", v1_rate, weights)
                run.add_envelope("continuous_feller_tv", tv_rate, weights)

        second = run.certificates.get("weak_lyapunov:V2")
        if weak is not None and second is not None and model.R is not None:
            S_T = self._kernel(model, run)
            couplings = []
            for cert, V, phi in ((weak, model.V, model.phi), (second, model.V2, model.phi2)):
                harris = check_harris(S_T, phi(V), model.R)
                if not run.record("continuous_envelopes:harris_set", harris):
                    return None
                run.certificates.pop("continuous_envelopes:harris_set")
                # midpoint of (b/sigma, R/2)
                A = 0.5 * (cert.b / cert.sigma + model.R / 2.0)
                if not A < model.R / 2.0:
                    run.failures["continuous_envelopes:interpolated"] = CertificationFailure(
                        "continuous_subgeometric", "precondition", {"R": model.R},
                        "R > 2b/sigma violated")
                    return None
                couplings.append(harris_to_coupling(harris, A))
            result = continuous_subgeometric_rate(L, model.V, model.V2, weak, second, couplings[0],
                                                  couplings[1], T, xi=model.xi, n_max=n_max,
                                                  n_search_max=int(self.continuous["n_search_max"]))
            if run.record("continuous_envelopes:interpolated", result):
                v1_rate, tv_rate = run.certificates.pop("continuous_envelopes:interpolated")
                weights = {"v1": model.V, "v2": model.V2}
                run.add_envelope("continuous_interpolated_v1", v1_rate, weights)
                run.add_envelope("continuous_interpolated_tv", tv_rate, weights)
        return None

    # ------------------------------------------------------------------
    # existence, uniqueness, verification
    # ------------------------------------------------------------------
    def _weak_pair(self, model: Model, run: CertificationRun):
        feller = run.context.get("feller")
        weak = run.certificates.get("weak_lyapunov")
        if feller is None or weak is None or model.continuous:
            return None, None
        return weak, feller["couplings"][1]

    def _existence(self, model: Model, run: CertificationRun):
        S = self._kernel(model, run)
        wl, coup = self._weak_pair(model, run)
        n_max = int(self.harness.settings["n_max"])
        sweep = self.harness.existence_sweep(S, n_max, model.V, wl, coup)
        sweep["method"] = "cauchy_budget" if wl is not None else "iterates"
        if sweep["max_residual"] > self._tolerance(model, "stationary"):
            # iterates do not settle (periodic chain): fall back to Cesaro averages from state 0
            source = model.generator if model.continuous else S
            try:
                cesaro = cesaro_invariant(source, np.eye(model.size)[0],
                                          float(self.continuous["cesaro_max_horizon"]),
                                          tol=self._tolerance(model, "cesaro"),
                                          base_time=float(self.continuous["base_time"]))
                sweep["cesaro"] = {"mu": cesaro.mu, "horizon": cesaro.horizon,
                                   "residual": cesaro.residual, "converged": True}
            except ConvergenceError as exc:
                sweep["cesaro"] = {"converged": False, "residual": exc.residual}
        run.existence = sweep

    def _uniqueness(self, model: Model, run: CertificationRun):
        wl, coup = self._weak_pair(model, run)
        run.uniqueness = self.harness.uniqueness_check(
            self._kernel(model, run), self._tolerance(model, "stationary"), model.V, wl, coup)

    def _verification(self, model: Model, run: CertificationRun):
        if not run.envelopes:
            return "no envelopes"
        system = model.generator if model.continuous else model.kernel
        nus = self.harness.random_measures(model.size)
        slack = model.tolerances.get("slack")
        horizon = self.harness.settings["t_max"] if model.continuous else self.harness.settings["n_max"]
        run.verification.update(self.harness.validate_many(system, nus, run.envelopes, horizon, slack))
        run.context["measures"] = nus
        return None
