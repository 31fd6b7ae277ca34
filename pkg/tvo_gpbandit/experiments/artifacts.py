import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

logger = logging.getLogger(__name__)


def _json_default(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(path: Path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    logger.debug(f"wrote {path}")
    return path


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value


def write_csv(
    path: Path, rows: Iterable[Dict], columns: Optional[Sequence[str]] = None
) -> Path:
    """Header row, comma separated, '.' decimals, LF line endings."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in columns})
    logger.debug(f"wrote {path} ({len(rows)} rows)")
    return path


def prefixed(rows: Iterable[Dict], **fields) -> List[Dict]:
    """Copy ``rows`` with ``fields`` placed in front of every row."""
    return [{**fields, **row} for row in rows]
