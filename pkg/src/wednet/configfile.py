"""Plain key = value config files for the CLI."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Type, TypeVar

from wednet.datamodel import ValidationError

T = TypeVar("T")


def load_kv(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(value: str, target_type: Any) -> Any:
    origin = getattr(target_type, "__origin__", None)
    if origin is tuple:
        parts = [p.strip() for p in value.split(",") if p.strip()]
        args = target_type.__args__
        elem = args[0]
        return tuple(_coerce(p, elem) for p in parts)
    if target_type is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"cannot parse boolean from {value!r}")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def build_dataclass(cls: Type[T], kv: dict[str, str], overrides: dict[str, Any] | None = None) -> T:
    """Instantiate a config dataclass from string key/values plus overrides."""
    import typing

    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(kv) - names)
    if unknown:
        raise ValidationError(f"unknown {cls.__name__} keys: {unknown}")
    kwargs: dict[str, Any] = {key: _coerce(value, hints[key]) for key, value in kv.items()}
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    return cls(**kwargs)
