"""Self-describing CSV/JSON tables with a JSON metadata sidecar.

CSV layout: a ``# key=value ...`` line with the resolved run configuration,
a header line, then one record per line with floats in full-precision
scientific notation.  Files are written under a temporary name and renamed
into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = ["write_table", "read_table", "sidecar_path", "format_value"]


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17e}"


def _config_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sidecar_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(
    path: Path | str,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config: dict[str, Any],
    fmt: str = "csv",
    meta: dict[str, Any] | None = None,
) -> Path:
    """Write a table and its ``<path>.meta.json`` sidecar; returns the table path."""
    path = Path(path)
    rows = [list(r) for r in rows]
    if fmt == "csv":
        lines = ["# " + " ".join(f"{k}={_config_value(v)}" for k, v in config.items())]
        lines.append(",".join(columns))
        lines.extend(",".join(format_value(v) for v in row) for row in rows)
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        records = [[int(v) if isinstance(v, (int, np.integer)) else float(v) for v in row] for row in rows]
        text = json.dumps({"config": config, "columns": list(columns), "records": records}, indent=1) + "\n"
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    _atomic_write(path, text)
    sidecar = dict(meta or {})
    sidecar.setdefault("config", config)
    sidecar["columns"] = list(columns)
    sidecar["rows"] = len(rows)
    _atomic_write(sidecar_path(path), json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    return path


def read_table(path: Path | str) -> tuple[dict[str, str], list[str], np.ndarray]:
    """Parse a table written by write_table: (config strings, columns, data)."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        config = {k: str(v) for k, v in payload["config"].items()}
        data = np.array(payload["records"], dtype=float).reshape(-1, len(payload["columns"]))
        return config, payload["columns"], data
    lines = text.splitlines()
    config = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split())
    columns = lines[1].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[2:] if line], dtype=float)
    return config, columns, data.reshape(-1, len(columns))
