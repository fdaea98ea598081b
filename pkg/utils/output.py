"""
Helpers for writing result files.

Outputs are rendered to strings first and only written once every
file of a run is ready.  Each file goes to a temporary sibling and is
renamed into place, so a failed run never leaves partial results
behind.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Mapping

import pandas as pd

from utils.errors import ValidationError  # type: ignore


logger = logging.getLogger(__name__)

# printf format giving a bit-exact decimal round trip for float64
FLOAT_FORMAT = "%.17g"


def frame_to_csv(df: pd.DataFrame) -> str:
    """Render a DataFrame as CSV text with round-trip float precision."""
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def to_json_text(payload: Any) -> str:
    """Render a JSON document deterministically (sorted keys, trailing newline)."""
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def frame_to_records(df: pd.DataFrame) -> List[Dict[str, Any]]:
    """Rows as JSON-ready dicts; missing values (NaN) become null."""
    return df.astype(object).where(df.notna(), None).to_dict(orient="records")


def write_text_atomic(path: Path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and rename.

    Args:
        path: Destination file.
        text: Full file contents.

    Returns:
        The destination path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def write_outputs(out_dir: Path, files: Mapping[str, str]) -> List[Path]:
    """Write a complete set of rendered outputs into ``out_dir``.

    All temporary files are written before any of them is renamed, so
    an I/O failure part-way leaves the directory untouched.

    Args:
        out_dir: Output directory (created if missing).
        files: Mapping of file name to file contents, written in
            sorted name order.

    Returns:
        The written paths in the order they were committed.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot use output directory {out_dir}: {e.strerror or e}") from e
    staged: Dict[str, Path] = {}
    try:
        for name in sorted(files):
            fd, tmp_name = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=out_dir)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(files[name])
            staged[name] = Path(tmp_name)
    except BaseException as e:
        for tmp in staged.values():
            if tmp.exists():
                tmp.unlink()
        if isinstance(e, OSError):
            raise ValidationError(f"cannot write outputs to {out_dir}: {e.strerror or e}") from e
        raise
    written = []
    for name, tmp in staged.items():
        target = out_dir / name
        try:
            os.replace(tmp, target)
        except OSError as e:
            raise ValidationError(f"cannot write {target}: {e.strerror or e}") from e
        written.append(target)
    logger.info("wrote %d file(s) to %s", len(written), out_dir)
    return written
