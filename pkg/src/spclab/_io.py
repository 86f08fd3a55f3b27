"""Deterministic CSV/JSON artifact writers.

CSV: RFC-4180 with LF line endings, '.' decimal, full-precision floats.
JSON: UTF-8, sorted keys.  Every artifact embeds the sha256 of the canonical
config it was produced from; wall-clock data never enters an artifact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def fmt(x):
    """Full-precision, locale-independent number formatting."""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def config_hash(config):
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_csv(path, header, rows, config_sha=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if config_sha is not None:
        lines.append(f"# config_sha256={config_sha}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def write_json(path, payload, config_sha=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = dict(payload)
    if config_sha is not None:
        data["config_sha256"] = config_sha
    path.write_text(
        json.dumps(data, sort_keys=True, indent=2, allow_nan=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    return path


def read_csv(path):
    """Parse a CSV artifact back into (header, float columns)."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    lines = [ln for ln in lines if not ln.startswith("#")]
    if not lines:
        raise ValueError(f"empty CSV {path}")
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        for h, v in zip(header, ln.split(",")):
            cols[h].append(float(v))
    return header, cols
