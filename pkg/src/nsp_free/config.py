"""Flat ``section.key = value`` configuration files.

Lines are ``dotted.key = value``; ``#`` starts a comment. Values are parsed
as int, float, a fraction such as 4/3, bool (true/false), comma-separated lists of those, or left
as strings (optionally quoted).
"""

from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path
from typing import Any

_FRACTION = re.compile(r"^[+-]?\d+/\d+$")


class ConfigError(ValueError):
    pass


def _scalar(text: str):
    t = text.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if _FRACTION.match(t):
        return float(Fraction(t))
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_value(text: str):
    if "," in text and text.strip()[:1] not in ("'", '"'):
        return [_scalar(p) for p in text.split(",") if p.strip()]
    return _scalar(text)


def loads(text: str) -> dict[str, Any]:
    """Flat mapping of dotted keys to parsed values."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(f"line {lineno}: malformed key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(val)
    return out


def load(path) -> dict[str, Any]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return loads(p.read_text())


def section(cfg: dict[str, Any], name: str) -> dict[str, Any]:
    """Keys under ``name.`` with the prefix stripped."""
    pre = name + "."
    return {k[len(pre):]: v for k, v in cfg.items() if k.startswith(pre)}


def dumps(cfg: dict[str, Any]) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (list, tuple)):
            return ", ".join(fmt(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    return "".join(f"{k} = {fmt(v)}\n" for k, v in cfg.items())
