"""Flat ``key=value`` configuration files."""
from __future__ import annotations

from .exceptions import FormatError


def parse_value(raw: str, type_name: str):
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        if "None" in type_name:
            return None
        raise ValueError("value required")
    if type_name.startswith("int"):
        return int(raw)
    if type_name.startswith("float"):
        return float(raw)
    if type_name.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def read_config(path, known: dict[str, str] | None = None) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment.

    With ``known`` (name -> type name), unknown keys are rejected and values
    are converted.
    """
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep or not key:
                raise FormatError("expected key=value", path, lineno)
            if known is None:
                values[key] = raw.strip()
                continue
            if key not in known:
                raise FormatError(f"unknown key {key!r}", path, lineno)
            try:
                values[key] = parse_value(raw, str(known[key]))
            except ValueError as exc:
                raise FormatError(f"bad value for {key}: {exc}", path, lineno) from None
    return values
