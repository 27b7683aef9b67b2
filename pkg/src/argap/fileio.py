"""CSV/JSON artifact reading and writing.

Every artifact embeds the fully resolved run configuration for
provenance: JSON files under a "config" key, CSV files as '# key=value'
comment lines before the header.  Writers are deterministic: identical
content yields byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

CSV_FORMAT_VERSION = 1


def _config_lines(config: dict) -> list[str]:
    lines = [f"# format_version={CSV_FORMAT_VERSION}"]
    for key in sorted(config):
        lines.append(f"# {key}={config[key]}")
    return lines


def write_csv(
    path: str | Path,
    header: list[str],
    columns: list[np.ndarray],
    config: dict,
    fmts: list[str] | None = None,
) -> None:
    if fmts is None:
        fmts = ["%.17g"] * len(columns)
    rows = len(columns[0])
    lines = _config_lines(config)
    lines.append(",".join(header))
    for i in range(rows):
        lines.append(",".join(fmt % col[i] for fmt, col in zip(fmts, columns)))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path: str | Path, payload: dict, config: dict) -> None:
    payload = dict(payload)
    payload["config"] = {k: str(v) if isinstance(v, Path) else v for k, v in config.items()}
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_series_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a 't,x[,state]' series file; parse errors name the offending line."""
    xs: list[float] = []
    states: list[int] = []
    has_state = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if parts[0] == "t":  # header
                if len(parts) < 2 or parts[1] != "x":
                    raise InvalidInputError(f"{path}: line {lineno}: expected header 't,x[,state]'")
                has_state = len(parts) >= 3 and parts[2] == "state"
                continue
            try:
                if has_state:
                    xs.append(float(parts[1]))
                    states.append(int(parts[2]))
                else:
                    xs.append(float(parts[1]))
            except (IndexError, ValueError) as exc:
                raise InvalidInputError(f"{path}: line {lineno}: cannot parse {line!r}") from exc
    if has_state is None:
        raise InvalidInputError(f"{path}: missing 't,x' header")
    if not xs:
        raise InvalidInputError(f"{path}: no data rows")
    return np.array(xs), (np.array(states, dtype=int) if has_state else None)
