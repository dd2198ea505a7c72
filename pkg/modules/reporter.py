"""
Reporter Module
===============

Builds the CertificationReport from a certification run and writes it:
- JSON with stable key order and no timestamps
- a plain-text summary
- decay and rate tables as CSV with a fixed column order
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from . import __version__
from .certifier import CertificationRun
from .harness import Harness
from .model_loader import SCHEMA_VERSION
from .utils import dump_json, validate_file_path


CSV_COLUMNS = ["n_or_t", "tv", "v1_norm", "v2_norm", "envelope_tv", "envelope_v1"]
REPORT_SCHEMA_VERSION = "1.0"


class Reporter:
    """
    Report assembly and export.

    Args:
        config: Merged configuration dictionary
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.logger = logging.getLogger(__name__)
        self.report_data: Dict[str, Any] = {}

    def generate_report(self, run: CertificationRun, seed: int,
                        flags: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        CertificationReport sections: metadata, steps, certificates,
        failures, envelopes, verification, existence, uniqueness, outcome.
        """
        self.logger.info("📊 Building certification report")
        report = {
            "metadata": self._create_metadata(run, seed, flags or {}),
            "steps": run.steps,
            "certificates": run.certificates,
            "failures": run.failures,
            "envelopes": {name: entry["envelope"] for name, entry in run.envelopes.items()},
            "verification": run.verification,
            "existence": run.existence,
            "uniqueness": run.uniqueness,
            "outcome": {
                "exit_code": run.exit_code,
                "missing": run.missing_expectations,
                "violations": run.violations,
            },
        }
        unverified = [name for name in run.envelopes if name not in run.verification]
        if unverified and run.verification:
            self.logger.warning(f"Envelopes without a verification outcome: {unverified}")
        self.report_data = report
        self.logger.info("✅ Report ready")
        return report

    def _create_metadata(self, run: CertificationRun, seed: int, flags: Dict[str, Any]) -> Dict[str, Any]:
        model = run.model
        return {
            "tool_version": __version__,
            "report_schema_version": REPORT_SCHEMA_VERSION,
            "model_schema_version": SCHEMA_VERSION,
            "model": model.name,
            "input_hash": model.input_hash,
            "states": model.size,
            "system": "generator" if model.continuous else "kernel",
            "seed": seed,
            "flags": flags,
        }

    def save_report(self, report: Dict[str, Any], file_path: str, format: str = "json") -> Path:
        """
        Write the report as ``json`` or ``text``.

        Raises:
            ValueError: If the format is not supported
        """
        writers = {"json": self._save_json_report, "text": self._save_text_report}
        if format not in writers:
            raise ValueError(f"Unsupported report format: {format}")
        path = validate_file_path(file_path, must_exist=False)
        writers[format](report, path)
        self.logger.info(f"Report saved to {path}")
        return path

    def _save_json_report(self, report: Dict[str, Any], path: Path):
        path.write_text(dump_json(report), encoding="utf-8")

    def _save_text_report(self, report: Dict[str, Any], path: Path):
        meta = report["metadata"]
        lines = [f"Model: {meta['model']} ({meta['states']} states, {meta['system']})",
                 f"Input hash: {meta['input_hash']}", ""]
        lines.append("Steps:")
        for step in report["steps"]:
            detail = f" ({step['detail']})" if step["detail"] else ""
            lines.append(f"  {step['name']}: {step['status']}{detail}")
        lines.append("")
        lines.append("Verification:")
        for name, outcome in sorted(report["verification"].items()):
            ratio = outcome.get("worst_ratio", outcome.get("worst_excess"))
            lines.append(f"  {name}: {'pass' if outcome['passed'] else 'FAIL'} ({ratio:.6g})")
        lines.append("")
        fitted = sorted((name, env.horizon) for name, env in report["envelopes"].items()
                        if getattr(env, "horizon", None) is not None)
        if fitted:
            lines.append("Prefactor fitted up to:")
            lines.extend(f"  {name}: {horizon:g}" for name, horizon in fitted)
            lines.append("")
        lines.append(f"Exit code: {report['outcome']['exit_code']}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # ------------------------------------------------------------------
    # CSV tables
    # ------------------------------------------------------------------
    @staticmethod
    def decay_frame(decay: pd.DataFrame, tv_envelope=None, v1_envelope=None) -> pd.DataFrame:
        """
        Decay table in the fixed CSV layout; envelope columns are the
        envelope times the reference norm of row 0, blank when absent.
        """
        time_col = next(c for c in ("n_or_t", "n", "t") if c in decay.columns)
        frame = pd.DataFrame({"n_or_t": decay[time_col].to_numpy(dtype=float)})
        for column in ("tv", "v1_norm", "v2_norm"):
            frame[column] = decay[column].to_numpy(dtype=float) if column in decay.columns else np.nan
        for column, envelope in (("envelope_tv", tv_envelope), ("envelope_v1", v1_envelope)):
            if envelope is None:
                frame[column] = np.nan
                continue
            reference = float(decay[{"tv": "tv", "v1": "v1_norm", "v2": "v2_norm"}[envelope.reference_tag]].iloc[0])
            frame[column] = np.asarray(envelope.value(frame["n_or_t"].to_numpy()), dtype=float) * reference
        return frame[CSV_COLUMNS]

    def save_decay_csv(self, frame: pd.DataFrame, file_path: str) -> Path:
        """Write a decay frame with the fixed columns, '.' decimals and a header row."""
        path = validate_file_path(file_path, must_exist=False)
        frame.reindex(columns=CSV_COLUMNS).to_csv(path, index=False, float_format="%.17g",
                                                  lineterminator="\n")
        return path

    @staticmethod
    def load_decay_csv(file_path: str) -> pd.DataFrame:
        """
        Read a decay CSV back.

        Raises:
            FileNotFoundError: If the file does not exist
            ValueError: If the header is not the fixed column list
        """
        path = validate_file_path(file_path)
        frame = pd.read_csv(path)
        if list(frame.columns) != CSV_COLUMNS:
            raise ValueError(f"Unexpected CSV header {list(frame.columns)}")
        return frame

    @staticmethod
    def revalidate_csv(frame: pd.DataFrame, slack: float = 1e-9, floor: float = 1e-14) -> Dict[str, Any]:
        """
        Re-run the envelope comparison on a re-ingested decay CSV, from the
        measured and envelope columns alone.
        """
        outcomes = {}
        for measured_col, envelope_col in (("tv", "envelope_tv"), ("v1_norm", "envelope_v1")):
            if frame[envelope_col].isna().all():
                continue
            measured = frame[measured_col].to_numpy(dtype=float)
            bound = frame[envelope_col].to_numpy(dtype=float)
            scale = max(float(np.nanmax(np.abs(measured))), 1.0)
            significant = measured > floor * scale
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(significant, measured / bound, 0.0)
            ratios = np.nan_to_num(ratios, nan=0.0)
            outcomes[envelope_col] = {
                "passed": bool(not np.any(significant & (measured > bound * (1.0 + slack)))),
                "worst_ratio": float(ratios.max()),
            }
        return outcomes

    def export_decay_tables(self, run: CertificationRun, harness: Harness, out_dir: str,
                            count: int = 1) -> Dict[str, Path]:
        """
        Decay CSVs for the first ``count`` verification measures, paired
        with the first TV and V-norm envelopes of the run.
        """
        model = run.model
        nus = run.context.get("measures")
        if nus is None:
            nus = harness.random_measures(model.size, count)
        tv_name = next((n for n, e in run.envelopes.items() if e["envelope"].norm_tag == "tv"), None)
        v1_name = next((n for n, e in run.envelopes.items() if e["envelope"].norm_tag == "v1"), None)
        weights = {}
        for name in (tv_name, v1_name):
            if name is not None:
                weights.update(run.envelopes[name]["weights"])
        norms = [("tv", None)] + [(tag, np.asarray(w, dtype=float)) for tag, w in sorted(weights.items())]

        written = {}
        for index, nu in enumerate(nus[:count]):
            if model.continuous:
                t_grid = np.linspace(0.0, float(harness.settings["t_max"]),
                                     int(harness.settings["t_points"]) + 1)[1:]
                decay = harness.simulate_continuous(model.generator, nu, t_grid, norms)
            else:
                decay = harness.simulate_decay(model.kernel, nu, int(harness.settings["n_max"]), norms)
            frame = self.decay_frame(decay,
                                     run.envelopes[tv_name]["envelope"] if tv_name else None,
                                     run.envelopes[v1_name]["envelope"] if v1_name else None)
            path = Path(out_dir) / f"{model.name}_decay_{index}.csv"
            written[f"decay_{index}"] = self.save_decay_csv(frame, str(path))
        return written

    def export_rate_tables(self, run: CertificationRun, out_dir: str, horizon: float,
                           points: int = 501) -> Dict[str, Path]:
        """One CSV per envelope, tabulated for a unit reference norm."""
        written = {}
        grid = np.linspace(0.0, float(horizon), points) if run.model.continuous \
            else np.arange(0, int(horizon) + 1, dtype=float)
        for name, entry in run.envelopes.items():
            envelope = entry["envelope"]
            frame = pd.DataFrame({"n_or_t": grid})
            column = "envelope_tv" if envelope.norm_tag == "tv" else "envelope_v1"
            frame[column] = np.asarray(envelope.value(grid), dtype=float)
            path = Path(out_dir) / f"{run.model.name}_rate_{name}.csv"
            written[name] = self.save_decay_csv(frame, str(path))
        return written
