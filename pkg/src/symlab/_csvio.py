"""CSV output with provenance headers and deterministic formatting."""

from __future__ import annotations

import json
import os

from . import __version__


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def write_csv(path: str, columns, rows, config: dict, seed: int) -> None:
    """Rows as dicts; a '#'-prefixed provenance header precedes the data."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    lines = [
        f"# symlab {__version__}",
        f"# config: {json.dumps(config, sort_keys=True)}",
        f"# seed: {seed}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(format_value(row[c]) for c in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
