"""Report emission with an embedded run manifest.

JSON reports carry the manifest under ``"manifest"``; CSV reports get a
sibling ``<name>.manifest.json``.  Everything except the manifest timestamp
is a pure function of the inputs and flags.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from fabricbench import __version__


@dataclass
class RunManifest:
    subcommand: str
    config: dict[str, Any] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256 of the bytes read
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))

    def read_text(self, path: str | Path) -> str:
        """Read an input file once, recording the digest of exactly those bytes."""
        raw = Path(path).read_bytes()
        self.inputs[str(path)] = hashlib.sha256(raw).hexdigest()
        return raw.decode("utf-8")

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
        }


def _json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def emit_report(data: Any, format: str, path: str | Path | None, manifest: RunManifest) -> None:
    """Write ``data`` as JSON (manifest embedded) or CSV (manifest beside it).

    ``path`` of None or ``"-"`` writes to stdout.
    """
    if format == "json":
        text = _json_text({"manifest": manifest.to_dict(), "report": data})
    elif format == "csv":
        text = data if isinstance(data, str) else rows_to_csv(data)
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    if format == "csv":
        Path(f"{path}.manifest.json").write_text(_json_text(manifest.to_dict()))
