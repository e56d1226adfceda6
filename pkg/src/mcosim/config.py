"""Strict JSON <-> Scenario conversion.

Sections map one-to-one onto the dataclasses; unknown keys are errors and
omitted keys keep the dataclass defaults. ``scenario_to_dict`` emits the
canonical form that ``parse_config`` reads back to an equal Scenario.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import types
import typing
from typing import Any

from .scenario import Scenario, ScenarioError
from .spectrum import ChannelId
from .traffic import MsgType, catalog_with_overrides


class ConfigError(ScenarioError):
    pass


def _fail(path: str, msg: str):
    raise ConfigError(f"{path or '<root>'}: {msg}")


def _parse_enum(tp, value, path):
    if isinstance(value, tp):
        return value
    if not isinstance(value, str):
        _fail(path, f"expected a {tp.__name__} name, got {value!r}")
    if hasattr(tp, "parse"):
        try:
            return tp.parse(value)
        except ValueError as e:
            _fail(path, str(e))
    for m in tp:
        if value in (m.name, m.value):
            return m
    _fail(path, f"unknown {tp.__name__} {value!r}; expected one of {[m.value for m in tp]}")


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            _fail(path, f"expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        _fail(path, "must be finite")
    return float(value)


def _convert(tp, value, path):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        rest = [a for a in args if a is not type(None)]
        if len(rest) == 1:
            return _convert(rest[0], value, path)
        for a in rest:
            if a in (str, int) and isinstance(value, a) and not isinstance(value, bool):
                return value
        _fail(path, f"unsupported value {value!r}")
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            _fail(path, "expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if args and len(args) != len(value):
            _fail(path, f"expected {len(args)} items")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if dataclasses.is_dataclass(tp):
        return _dataclass(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return _parse_enum(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            _fail(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        return _number(value, path, integer=True)
    if tp is float:
        return _number(value, path)
    if tp is str:
        if not isinstance(value, str):
            _fail(path, f"expected a string, got {value!r}")
        return value
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            _fail(path, "expected an object")
        return dict(value)
    _fail(path, f"cannot parse type {tp}")


def _predefined(value, path):
    if not isinstance(value, dict):
        _fail(path, "expected an object of msg type -> {primary, alternatives}")
    out = {}
    for name, entry in value.items():
        p = f"{path}.{name}"
        t = _parse_enum(MsgType, name, p)
        if not isinstance(entry, dict) or set(entry) - {"primary", "alternatives"} or "primary" not in entry:
            _fail(p, "expected {\"primary\": CH, \"alternatives\": [CH, ...]}")
        primary = _parse_enum(ChannelId, entry["primary"], p + ".primary")
        alts = tuple(_parse_enum(ChannelId, c, f"{p}.alternatives[{i}]") for i, c in enumerate(entry.get("alternatives", ())))
        out[t] = (primary, alts)
    return out


def _dataclass(cls, value, path):
    if not isinstance(value, dict):
        _fail(path, f"expected an object for {cls.__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs: dict[str, Any] = {}
    for key, raw in value.items():
        p = f"{path}.{key}" if path else key
        if key not in fields:
            _fail(p, f"unknown key (allowed: {', '.join(sorted(fields))})")
        if cls is Scenario and key == "predefined":
            kwargs[key] = _predefined(raw, p)
        elif cls is Scenario and key == "catalog_overrides":
            if not isinstance(raw, dict):
                _fail(p, "expected an object")
            try:
                catalog_with_overrides(raw)
            except (ValueError, LookupError) as e:
                _fail(p, str(e))
            kwargs[key] = raw
        else:
            kwargs[key] = _convert(hints[key], raw, p)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        _fail(path, str(e))


def parse_config(document: str | bytes | dict) -> Scenario:
    """JSON text (or an already-decoded object) -> validated Scenario."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigError(f"<root>: malformed JSON ({e})") from None
    return _dataclass(Scenario, document, "")


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.name if isinstance(value, ChannelId) else value.value
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value) if f.init}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(_plain(k)): _plain(v) for k, v in value.items()}
    return value


def scenario_to_dict(sc: Scenario) -> dict:
    out = _plain(sc)
    out["predefined"] = {t.value: {"primary": p.name, "alternatives": [c.name for c in alts]}
                         for t, (p, alts) in sc.predefined.items()}
    return out


def emit_config(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True)
