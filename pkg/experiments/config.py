"""
Reading, validating and writing the key-value configuration format

    # comment
    chain.L = 5
    left.gamma = 0.1
    grid.beta = 0.1, 1, 10
    grid.gamma = logspace(-2, 2, 41)
"""

import logging
import re
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from bose_transport.model_core import ChainSpec, ReservoirSpec, SystemSpec, interaction_from_g
from .models import (
    GRID_ALIASES,
    GRID_AXES,
    SYSTEM_KEYS,
    ConfigDocument,
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    ExperimentPlan,
)

logger = logging.getLogger(__name__)

KEY_PATTERN = re.compile(r"^[A-Za-z_]\w*(\.[A-Za-z_]\w*)*$")
RANGE_PATTERN = re.compile(r"^(linspace|logspace)\(\s*([^,()]+),\s*([^,()]+),\s*([^,()]+)\)$")
LIST_KEYS = frozenset({"sweep.g", "spectrum.sites"})


@dataclass(frozen=True)
class ConfigEntry:
    value: object
    line: Optional[int]


def _section_keys(prefix: str, model: type[BaseModel]) -> list[str]:
    keys = []
    for name, info in model.model_fields.items():
        annotation = info.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            keys.extend(_section_keys(f"{prefix}{name}.", annotation))
        elif name != "grid":
            keys.append(f"{prefix}{name}")
    return keys


KNOWN_KEYS = frozenset(_section_keys("", ConfigDocument))


def parse_axis(text: str, line: Optional[int] = None, column: int = 1) -> list:
    """
    Values of a list-valued key: 'a, b, c', 'linspace(a, b, n)' or 'logspace(a, b, n)'

    Raises:
        ConfigParseError: If a range is malformed
    """
    match = RANGE_PATTERN.match(text.strip())
    if match:
        kind, start, stop, count = match.groups()
        try:
            a, b, n = float(start), float(stop), int(count)
        except ValueError:
            raise ConfigParseError(line or 0, column, f"invalid {kind} arguments '{text.strip()}'")
        if n < 1:
            raise ConfigParseError(line or 0, column, f"{kind} needs at least one point")
        values = np.linspace(a, b, n) if kind == "linspace" else np.logspace(a, b, n)
        return [float(v) for v in values]
    items = [item.strip() for item in text.split(",")]
    if any(not item for item in items):
        raise ConfigParseError(line or 0, column, "empty list element")
    return items


def read_keys(text: str) -> Dict[str, ConfigEntry]:
    """
    Split configuration text into raw values with their line numbers

    Args:
        text (str): Configuration text

    Returns:
        Dict[str, ConfigEntry]: Values in file order

    Raises:
        ConfigParseError: On malformed lines or duplicate keys
        ConfigValidationError: On unknown keys
    """
    entries: Dict[str, ConfigEntry] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0]
        if not content.strip():
            continue
        if "=" not in content:
            column = len(content) - len(content.lstrip()) + 1
            raise ConfigParseError(number, column, "expected 'key = value'")

        key_part, value_part = content.split("=", 1)
        key = key_part.strip()
        key_column = len(key_part) - len(key_part.lstrip()) + 1
        value_column = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not KEY_PATTERN.match(key):
            raise ConfigParseError(number, key_column, f"invalid key '{key}'")
        value = value_part.strip()
        if not value:
            raise ConfigParseError(number, value_column, f"missing value for '{key}'")
        if key in entries:
            raise ConfigParseError(
                number, key_column,
                f"duplicate key '{key}' (lines {entries[key].line} and {number})",
            )

        if key.startswith("grid."):
            if key[len("grid."):] not in GRID_AXES:
                raise ConfigValidationError(key, number, "unknown grid axis")
            parsed: object = parse_axis(value, number, value_column)
        elif key in LIST_KEYS:
            parsed = parse_axis(value, number, value_column)
        elif key in KNOWN_KEYS:
            parsed = value
        else:
            raise ConfigValidationError(key, number, "unknown key")
        entries[key] = ConfigEntry(parsed, number)
    return entries


def apply_overrides(entries: Dict[str, ConfigEntry], overrides: Iterable[str]) -> Dict[str, ConfigEntry]:
    """
    Apply command-line 'key=value' overrides on top of parsed entries

    Args:
        entries (Dict[str, ConfigEntry]): Entries from read_keys
        overrides (Iterable[str]): Items of the form key=value

    Returns:
        Dict[str, ConfigEntry]: New mapping; overridden keys carry no line number
    """
    merged = dict(entries)
    for item in overrides:
        if "=" not in item:
            raise ConfigValidationError(item, None, "override must have the form key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        parsed = read_keys(f"{key} = {value}")
        merged[key] = replace(parsed[key], line=None)
        logger.debug(f"Override {key} = {value}")
    return merged


def _nest(entries: Dict[str, ConfigEntry]) -> dict:
    document: dict = {}
    for key, entry in entries.items():
        if "." not in key:
            document[key] = entry.value
            continue
        section, name = key.split(".", 1)
        document.setdefault(section, {})[name] = entry.value
    return document


def _line_of(key: str, entries: Dict[str, ConfigEntry]) -> Optional[int]:
    if key in entries:
        return entries[key].line
    lines = [e.line for k, e in entries.items() if k.startswith(key + ".") and e.line is not None]
    return min(lines) if lines else None


def validate_entries(entries: Dict[str, ConfigEntry]) -> Tuple[SystemSpec, ExperimentPlan]:
    """
    Validate raw entries into a SystemSpec and an ExperimentPlan

    Raises:
        ConfigValidationError: Naming the key, its line and the failed invariant
    """
    try:
        document = ConfigDocument.model_validate(_nest(entries))
        system = document.system_spec()
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(part) for part in first["loc"]]
        key = ".".join(loc[:2]) if loc else "config"
        if loc and loc[0] == "grid":
            key = "grid." + loc[1] if len(loc) > 1 else "grid"
        reason = first["msg"].removeprefix("Value error, ")
        raise ConfigValidationError(key, _line_of(key, entries), reason) from e
    except ValueError as e:
        raise ConfigValidationError("system", None, str(e)) from e

    plan = document.plan()
    try:
        plan.check_compatible(system)
    except ValueError as e:
        raise ConfigValidationError("method", _line_of("method", entries), str(e)) from e
    return system, plan


def parse_config(text: str, overrides: Iterable[str] = ()) -> Tuple[SystemSpec, ExperimentPlan]:
    """
    Parse and validate configuration text

    Args:
        text (str): One 'key = value' per line, '#' starts a comment
        overrides (Iterable[str]): Optional 'key=value' overrides

    Returns:
        Tuple[SystemSpec, ExperimentPlan]: Validated system and plan

    Raises:
        ConfigParseError: On malformed lines or duplicate keys
        ConfigValidationError: On unknown keys or violated invariants
    """
    entries = apply_overrides(read_keys(text), overrides)
    system, plan = validate_entries(entries)
    logger.info(f"Configuration parsed: method={plan.method}, L={system.chain.L}, eps={system.epsilon}")
    return system, plan


def load_config(path: str, overrides: Iterable[str] = ()) -> Tuple[SystemSpec, ExperimentPlan]:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read configuration {path}: {str(e)}") from e
    return parse_config(text, overrides)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def emit_config(system: SystemSpec, plan: ExperimentPlan) -> str:
    """
    Normalised configuration text; parse_config(emit_config(s, p)) gives back (s, p)

    Args:
        system (SystemSpec): System parameters
        plan (ExperimentPlan): Method and options

    Returns:
        str: Configuration text with every non-default-None key
    """
    lines = ["# system"]
    lines.extend(f"{key} = {_format(value)}" for key, value in system.to_dict().items())
    lines.append("")
    lines.append("# plan")
    dump = plan.model_dump()
    for name in ("method", "seed", "output", "workers", "ring_size"):
        if dump[name] is not None:
            lines.append(f"{name} = {_format(dump[name])}")
    for section in ("exact", "langevin", "born", "sweep", "spectrum"):
        for name, value in dump[section].items():
            if value is None or (isinstance(value, list) and not value):
                continue
            lines.append(f"{section}.{name} = {_format(value)}")
    for axis, values in dump["grid"].items():
        lines.append(f"grid.{axis} = {_format([float(v) for v in values])}")
    return "\n".join(lines) + "\n"


def system_with(system: SystemSpec, overrides: Dict[str, float]) -> SystemSpec:
    """
    Copy of a SystemSpec with grid-axis values applied

    Aliases gamma, beta, M and Jr set both rings; chain.g is applied last as
    U = g / left.nbar.

    Raises:
        ValueError: If a value breaks a SystemSpec invariant
    """
    keys = system.to_dict()
    g = None
    for name, value in overrides.items():
        if name == "chain.g":
            g = value
        elif name in GRID_ALIASES:
            for key in GRID_ALIASES[name]:
                keys[key] = value
        elif name in SYSTEM_KEYS:
            keys[name] = value
        else:
            raise ValueError(f"unknown grid axis '{name}'")
    if g is not None:
        keys["chain.U"] = interaction_from_g(g, keys["left.nbar"])

    def reservoir(side: str) -> ReservoirSpec:
        return ReservoirSpec(
            gamma=float(keys[f"{side}.gamma"]), beta=float(keys[f"{side}.beta"]),
            n_bar=float(keys[f"{side}.nbar"]), M=int(keys[f"{side}.M"]),
            J_r=float(keys[f"{side}.Jr"]), side=side,
        )

    chain = ChainSpec(L=int(keys["chain.L"]), J_s=float(keys["chain.Js"]),
                      delta=float(keys["chain.delta"]), U=float(keys["chain.U"]))
    return SystemSpec(chain=chain, left=reservoir("left"), right=reservoir("right"),
                      epsilon=float(keys["epsilon"]))


def grid_axes(plan: ExperimentPlan) -> List[Tuple[str, List[float]]]:
    return [(name, [float(v) for v in values]) for name, values in plan.grid.items()]
