"""
Model Loader Module
===================

Reads model files (JSON), validates them against the versioned schema in
``config/model_schema.json`` and against the kernel/generator/weight
invariants, and builds the in-memory :class:`Model`.

Also resolves the shipped fixture library under ``fixtures/``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from jsonschema import Draft7Validator

from .kernel_ops import GeneratorMatrix, StochasticKernel
from .measure_core import StateSpace
from .scalar_functions import ScalarFunction, from_descriptor
from .subgeometric_rates import psi_builder_polynomial
from .utils import content_hash, load_json_schema


REPO_ROOT = Path(__file__).resolve().parent.parent
SCHEMA_PATH = REPO_ROOT / "config" / "model_schema.json"
FIXTURE_DIR = REPO_ROOT / "fixtures"
SCHEMA_VERSION = "1.0"
ROW_ATOL = 1e-12


class ModelValidationError(ValueError):
    """Model file rejected; the message starts with the JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Model:
    """A validated model file."""

    name: str
    space: StateSpace
    kernel: Optional[StochasticKernel] = None
    generator: Optional[GeneratorMatrix] = None
    V: Optional[np.ndarray] = None
    V2: Optional[np.ndarray] = None
    phi: Optional[ScalarFunction] = None
    phi2: Optional[ScalarFunction] = None
    psi: Optional[ScalarFunction] = None
    xi: Optional[ScalarFunction] = None
    R: Optional[float] = None
    A: Optional[float] = None
    N: int = 1
    T: Optional[float] = None
    K_grid: Optional[List[float]] = None
    sigma_grid: Optional[List[float]] = None
    tolerances: Dict[str, float] = field(default_factory=dict)
    expect: Dict[str, Any] = field(default_factory=dict)
    input_hash: str = ""

    @property
    def continuous(self) -> bool:
        return self.generator is not None

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def weight(self) -> np.ndarray:
        """V, or the constant weight 1 when the model has none."""
        return self.V if self.V is not None else np.ones(self.size)


def _json_path(parts) -> str:
    path = "$"
    for part in parts:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


class ModelLoader:
    """
    Loader for model files.

    Args:
        config: Merged configuration dictionary (unused keys ignored)
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None,
                 schema_path: Union[str, Path] = SCHEMA_PATH):
        self.config = config or {}
        self.logger = logging.getLogger(__name__)
        self.validator = Draft7Validator(load_json_schema(str(schema_path)))

    def load(self, file_path: Union[str, Path]) -> Model:
        """
        Load and validate a model file.

        Raises:
            FileNotFoundError: If the file does not exist
            ModelValidationError: On malformed JSON or any schema or
                invariant violation
        """
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"Model file not found: {file_path}")
        text = path.read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelValidationError("$", f"malformed JSON at line {exc.lineno}: {exc.msg}")
        self.logger.info(f"Loading model from {path.name}")
        return self.from_dict(raw)

    def from_dict(self, raw: Dict[str, Any]) -> Model:
        """Validate a parsed model document and build the Model."""
        errors = sorted(self.validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            first = errors[0]
            raise ModelValidationError(_json_path(first.absolute_path), first.message)

        key = "kernel" if "kernel" in raw else "generator"
        matrix = self._check_matrix(raw[key], key)
        size = matrix.shape[0]
        labels = raw.get("states")
        if labels is not None and len(labels) != size:
            raise ModelValidationError("$.states", f"{len(labels)} labels for {size} states")
        space = StateSpace(size=size, labels=tuple(str(s) for s in labels) if labels else None)

        model = Model(name=raw["name"], space=space)
        if key == "kernel":
            model.kernel = StochasticKernel(matrix)
        else:
            model.generator = GeneratorMatrix(matrix)

        model.V = self._weight(raw.get("weight_V"), size, "weight_V")
        model.V2 = self._weight(raw.get("weight_V2"), size, "weight_V2")
        if model.V is not None and model.V2 is not None and np.any(model.V > model.V2):
            state = int(np.argmax(model.V - model.V2))
            raise ModelValidationError(f"$.weight_V2[{state}]", "weight_V2 must dominate weight_V")

        model.R = raw.get("harris_R")
        model.A = raw.get("coupling_A")
        model.N = int(raw.get("coupling_N", 1))
        model.T = raw.get("T")
        if model.continuous and model.T is None:
            model.T = float(self.config.get("continuous", {}).get("default_T", 1.0))
        model.K_grid = raw.get("K_grid")
        model.sigma_grid = raw.get("sigma_grid")
        model.tolerances = dict(raw.get("tolerances", {}))
        model.expect = dict(raw.get("expect", {}))

        model.phi = self._function(raw.get("phi"), "phi", role="phi")
        model.phi2 = self._function(raw.get("phi2"), "phi2", role="phi")
        model.xi = self._function(raw.get("xi"), "xi")
        model.psi = self._psi(raw.get("psi"), model)

        model.input_hash = content_hash(json.dumps(raw, sort_keys=True))
        self.logger.info(f"Model '{model.name}': {size} states, "
                         f"{'generator' if model.continuous else 'kernel'}")
        return model

    def _check_matrix(self, rows, key: str) -> np.ndarray:
        size = len(rows)
        for i, row in enumerate(rows):
            if len(row) != size:
                raise ModelValidationError(f"$.{key}[{i}]", f"row has {len(row)} entries, expected {size}")
        matrix = np.asarray(rows, dtype=float)
        target = 1.0 if key == "kernel" else 0.0
        for i, row in enumerate(matrix):
            negative = [j for j in range(size) if row[j] < 0.0 and (key == "kernel" or j != i)]
            if negative:
                j = negative[0]
                raise ModelValidationError(f"$.{key}[{i}][{j}]", f"entry {row[j]!r} is negative")
            if abs(row.sum() - target) > ROW_ATOL:
                raise ModelValidationError(f"$.{key}[{i}]",
                                           f"row sums to {row.sum()!r}, expected {target:g}")
        return matrix

    def _weight(self, descriptor, size: int, key: str) -> Optional[np.ndarray]:
        if descriptor is None:
            return None
        if isinstance(descriptor, dict) and descriptor["tag"] == "geometric_index":
            return float(descriptor["base"]) ** np.arange(size, dtype=float)
        if isinstance(descriptor, dict):
            offset = float(descriptor.get("offset", 1.0))
            return (offset + np.arange(size, dtype=float)) ** float(descriptor["power"])
        if len(descriptor) != size:
            raise ModelValidationError(f"$.{key}", f"{len(descriptor)} entries for {size} states")
        return np.asarray(descriptor, dtype=float)

    def _function(self, descriptor, key: str, role: Optional[str] = None) -> Optional[ScalarFunction]:
        if descriptor is None:
            return None
        if descriptor["tag"] == "polynomial_builder":
            raise ModelValidationError(f"$.{key}.tag", "polynomial_builder is only valid for psi")
        try:
            return from_descriptor(descriptor, role=role)
        except (KeyError, ValueError) as exc:
            raise ModelValidationError(f"$.{key}", str(exc))

    def _psi(self, descriptor, model: Model) -> Optional[ScalarFunction]:
        if descriptor is None or descriptor["tag"] != "polynomial_builder":
            return self._function(descriptor, "psi")
        if model.phi is None or model.R is None:
            raise ModelValidationError("$.psi", "polynomial_builder needs phi and harris_R")
        eps = float(descriptor.get("eps", self.config.get("subgeometric", {}).get("psi_epsilon", 0.1)))
        u_max = descriptor.get("u_max")
        if u_max is None:
            u_max = 10.0 * float(np.max(model.weight))
        return psi_builder_polynomial(model.phi, model.R, eps=eps, u_max=float(u_max))


def fixture_path(name: str) -> Path:
    """
    Path of a shipped fixture by name (with or without ``.json``).

    Raises:
        FileNotFoundError: If no such fixture ships
    """
    path = FIXTURE_DIR / (name if name.endswith(".json") else f"{name}.json")
    if not path.exists():
        raise FileNotFoundError(f"Unknown fixture: {name}")
    return path


def list_fixtures() -> List[Path]:
    """All shipped fixture files in name order."""
    return sorted(FIXTURE_DIR.glob("*.json"))
