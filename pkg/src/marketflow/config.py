"""Flat key-value run configuration.

A config file is either a JSON object with scalar values or plain
``key = value`` lines (``#`` starts a comment). Keys are CLI flag names
without the leading dashes; ``-`` and ``_`` are interchangeable.
"""

from __future__ import annotations

import json
from pathlib import Path

from marketflow.errors import ParseError


def load_config(path) -> dict[str, object]:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON config ({exc})") from None
        for key, value in doc.items():
            if isinstance(value, (dict, list)):
                raise ParseError(f"{path}: config key {key!r} must hold a scalar value")
        return {k.replace("-", "_"): v for k, v in doc.items()}

    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"{path}:{lineno}: expected 'key = value'", row=lineno)
        out[key.strip().replace("-", "_")] = value.strip()
    return out
