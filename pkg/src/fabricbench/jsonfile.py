"""JSON loading with source positions, so schema errors can name a line."""

from __future__ import annotations

import hashlib
import json
from json import decoder, scanner
from pathlib import Path
from typing import Any

from fabricbench.errors import ValidationError


class _SpanDecoder(json.JSONDecoder):
    def __init__(self) -> None:
        super().__init__()
        self.spans: dict[int, tuple[int, int]] = {}

        def parse_object(s_and_end, *args, **kwargs):
            _, start = s_and_end
            obj, end = decoder.JSONObject(s_and_end, *args, **kwargs)
            self.spans[id(obj)] = (start - 1, end)
            return obj, end

        self.parse_object = parse_object
        # The C scanner bypasses parse_object; the pure-Python one honours it.
        self.scan_once = scanner.py_make_scanner(self)


class JsonDocument:
    """Parsed JSON file that remembers where each object came from."""

    def __init__(self, text: str, source: str = "<string>", raw: bytes | None = None):
        self.text = text
        self.source = source
        self.raw = raw if raw is not None else text.encode()
        dec = _SpanDecoder()
        try:
            self.data, end = dec.raw_decode(text, decoder.WHITESPACE.match(text, 0).end())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{source}: line {exc.lineno}: invalid JSON: {exc.msg}") from None
        if text[end:].strip():
            raise ValidationError(f"{source}: line {self._line(end)}: trailing data after JSON value")
        self._spans = dec.spans
        # Keep parsed objects alive so span ids stay unique.
        self._keep = self.data

    @classmethod
    def load(cls, path: str | Path) -> "JsonDocument":
        path = Path(path)
        raw = path.read_bytes()
        return cls(raw.decode("utf-8"), source=str(path), raw=raw)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()

    def _line(self, offset: int) -> int:
        return self.text.count("\n", 0, offset) + 1

    def line_of(self, obj: Any, key: str | None = None) -> int:
        span = self._spans.get(id(obj))
        if span is None:
            return 1
        start, end = span
        if key is not None:
            idx = self.text.find(json.dumps(key), start, end)
            if idx >= 0:
                return self._line(idx)
        return self._line(start)

    def error(self, obj: Any, key: str | None, message: str) -> ValidationError:
        where = f"{self.source}: line {self.line_of(obj, key)}"
        field = f" field '{key}'" if key else ""
        return ValidationError(f"{where}:{field} {message}")


def require(doc: JsonDocument, obj: Any, key: str, kind: type | tuple[type, ...], *, optional: bool = False):
    """Fetch ``obj[key]`` and check its JSON type, raising a positioned error."""
    if not isinstance(obj, dict):
        raise doc.error(obj, None, "expected a JSON object")
    if key not in obj:
        if optional:
            return None
        raise doc.error(obj, None, f"missing required field '{key}'")
    value = obj[key]
    if optional and value is None:
        return None
    # bool is an int subclass; never accept it for numeric fields
    if isinstance(value, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,)):
        raise doc.error(obj, key, f"expected {_kind_name(kind)}, got boolean")
    if not isinstance(value, kind):
        raise doc.error(obj, key, f"expected {_kind_name(kind)}, got {type(value).__name__}")
    return value


def _kind_name(kind) -> str:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    names = {int: "integer", float: "number", str: "string", list: "array", dict: "object", bool: "boolean"}
    return " or ".join(names.get(k, k.__name__) for k in kinds)
