"""
TOML run configuration: parsing, validation and the effective-tensor dump.
"""

from __future__ import annotations

import json
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from homog2d.core.errors import CommensurabilityError, ConfigError
from homog2d.models.effective import EffectiveTensors
from homog2d.models.schemas import RunConfig
from homog2d.services.coefficients import PRESET_NAMES

logger = logging.getLogger(__name__)

COEFFICIENT_KINDS = ("A", "V", "B", "c")
_LINE = re.compile(r"line (\d+)")


def _flatten_entries(table: dict[str, Any], prefix: tuple[str, ...] = ()) -> dict[str, Any]:
    """`A.1.1.1.1.constant = 2` nests five tables deep; rebuild the "1.1.1.1" key."""
    flat: dict[str, Any] = {}
    for key, value in table.items():
        path = (*prefix, str(key))
        if isinstance(value, dict) and not {"constant", "modes"} & value.keys():
            flat.update(_flatten_entries(value, path))
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            flat[".".join(path)] = {"constant": float(value)}
        else:
            flat[".".join(path)] = value
    return flat


def normalize(raw: dict[str, Any]) -> dict[str, Any]:
    data = dict(raw)
    coefficients = data.get("coefficients")
    if isinstance(coefficients, dict):
        coefficients = dict(coefficients)
        for kind in COEFFICIENT_KINDS:
            if isinstance(coefficients.get(kind), dict):
                coefficients[kind] = _flatten_entries(coefficients[kind])
        coefficients.setdefault("name", "custom")
        data["coefficients"] = coefficients
    return data


def _location(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def validate_config(raw: dict[str, Any], source: str = "<config>") -> RunConfig:
    """Build a RunConfig, mapping pydantic errors to ConfigError naming the key."""
    data = normalize(raw)
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        errors = exc.errors()
        first = errors[0]
        key = _location(first)
        message = f"{source}: invalid value for '{key}': {first['msg']}"
        details = {"key": key, "errors": [{"key": _location(e), "message": e["msg"]} for e in errors]}
        if first["loc"] and first["loc"][0] == "eps" and "commensurate" in first["msg"]:
            raise CommensurabilityError(message, details=details) from exc
        raise ConfigError(message, details=details) from exc
    if config.preset is not None and config.preset not in PRESET_NAMES:
        raise ConfigError(
            f"{source}: unknown preset '{config.preset}' (choose from {', '.join(PRESET_NAMES)})",
            details={"key": "preset"},
        )
    return config


def parse_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read a TOML run file; `overrides` (command-line values) replace top-level keys before validation."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file {path} does not exist", details={"path": str(path)})
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        match = _LINE.search(str(exc))
        line = int(match.group(1)) if match else None
        raise ConfigError(
            f"{path}: line {line}: {exc}" if line else f"{path}: {exc}",
            details={"path": str(path), "line": line},
        ) from exc
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})
    config = validate_config(raw, str(path))
    logger.info(f"Loaded {path}: command={config.command}, preset={config.preset or 'inline'}")
    return config


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return json.dumps(value, ensure_ascii=False)


def dump_effective_toml(effective: EffectiveTensors) -> str:
    """L₀ as an inline coefficient set that parse_config accepts for a standalone solve."""
    coefficients = effective.to_coefficient_set()
    lines = [
        f"# Homogenized tensors of '{effective.source}' from a torus of N={effective.quadrature_N}",
        'command = "solve"',
        "",
        "[coefficients]",
        f"name = {_toml_value(coefficients.name)}",
        f"m = {coefficients.m}",
        f"lambda = {_toml_value(coefficients.lam)}",
        f"mu = {_toml_value(coefficients.mu)}",
        f"kappa = {_toml_value(coefficients.kappa)}",
    ]
    for kind in COEFFICIENT_KINDS:
        for key, entry in sorted(getattr(coefficients, kind).items()):
            lines.extend(["", f'[coefficients.{kind}."{key}"]', f"constant = {_toml_value(entry.constant)}"])
    return "\n".join(lines) + "\n"
