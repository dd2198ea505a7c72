"""
Utility Functions
================

Common helpers shared by the certification pipeline: logging setup,
configuration loading, content hashing and deterministic JSON output.
"""

import copy
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml


LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: int = logging.INFO) -> logging.Logger:
    """
    Setup logging configuration for the application.

    Logs go to standard error only so that reports written to stdout
    stay machine readable.

    Args:
        level: Logging level (default: INFO)

    Returns:
        Configured logger instance
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)

    return logging.getLogger(__name__)


def load_config(config_path: str) -> Dict[str, Any]:
    """
    Load configuration from YAML file.

    Args:
        config_path: Path to configuration file

    Returns:
        Configuration dictionary

    Raises:
        FileNotFoundError: If config file doesn't exist
        yaml.YAMLError: If config file is invalid
    """
    config_file = Path(config_path)

    if not config_file.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_file, 'r', encoding='utf-8') as file:
        config = yaml.safe_load(file)

    return config or {}


def merge_config(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Recursively merge ``overrides`` into a copy of ``base``.

    ``None`` values in overrides are ignored so unset CLI flags keep the
    file defaults.
    """
    merged = copy.deepcopy(base) if base else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = value
    return merged


def config_section(config: Optional[Dict[str, Any]], name: str,
                   defaults: Dict[str, Any]) -> Dict[str, Any]:
    """Return ``defaults`` updated with ``config[name]``."""
    section = dict(defaults)
    if config and isinstance(config.get(name), dict):
        section.update(config[name])
    return section


def validate_file_path(file_path: str, must_exist: bool = True) -> Path:
    """
    Validate and return Path object for file path.

    Args:
        file_path: Path to validate
        must_exist: Whether file must exist (default: True)

    Returns:
        Validated Path object

    Raises:
        FileNotFoundError: If file doesn't exist and must_exist is True
    """
    path = Path(file_path)

    if must_exist and not path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")

    if not must_exist:
        path.parent.mkdir(parents=True, exist_ok=True)

    return path


def _canonical(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return {"shape": list(value.shape),
                "data": [float(x).hex() for x in np.asarray(value, dtype=float).ravel()]}
    if isinstance(value, (float, np.floating)):
        return float(value).hex()
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if hasattr(value, "content_hash"):
        return value.content_hash
    return repr(value)


def content_hash(*arrays: Any, **scalars: Any) -> str:
    """
    SHA-256 of a canonical encoding of the inputs.

    Floats are encoded with ``float.hex`` so the digest is exact and
    platform independent.
    """
    payload = json.dumps(
        {"args": [_canonical(a) for a in arrays], "kwargs": _canonical(scalars)},
        sort_keys=True, separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def to_jsonable(value: Any) -> Any:
    """Convert numpy containers and scalars into plain JSON types."""
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        number = float(value)
        if np.isnan(number):
            return "nan"
        if np.isinf(number):
            return "inf" if number > 0 else "-inf"
        return float(repr(number))
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def dump_json(data: Any) -> str:
    """Deterministic JSON text: sorted keys, fixed indent, trailing newline."""
    return json.dumps(to_jsonable(data), sort_keys=True, indent=2,
                      ensure_ascii=False) + "\n"


def save_json(data: Any, output_path: str) -> Path:
    """Write ``data`` through :func:`dump_json`."""
    path = validate_file_path(output_path, must_exist=False)
    path.write_text(dump_json(data), encoding="utf-8")
    return path


def load_json_schema(schema_path: str) -> Dict[str, Any]:
    """
    Load JSON schema from file.

    Raises:
        FileNotFoundError: If schema file doesn't exist
    """
    schema_file = validate_file_path(schema_path)
    with open(schema_file, 'r', encoding='utf-8') as file:
        return json.load(file)
