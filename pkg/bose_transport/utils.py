"""
Utility functions for result files
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CSV_FORMAT = "%.12g"


def ensure_parent_dir(path: str) -> None:
    """
    Create the directory that will hold a file if it does not exist

    Args:
        path (str): Path of the file about to be written
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def parameter_hash(params: Dict[str, Any]) -> str:
    """
    Stable hash of a parameter dictionary

    Args:
        params (Dict[str, Any]): JSON-serialisable parameters

    Returns:
        str: Hex digest independent of key order
    """
    canonical = json.dumps(params, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_csv(
    path: str,
    rows: np.ndarray,
    columns: Sequence[str],
    metadata: Optional[Dict[str, Any]] = None,
    labels: Optional[Dict[str, str]] = None,
) -> None:
    """
    Write a numeric table with '#'-prefixed metadata and column header lines

    Args:
        path (str): Output path
        rows (np.ndarray): 2-D array of real values
        columns (Sequence[str]): Column names
        metadata (Dict[str, Any], optional): Key/value lines written above the header
        labels (Dict[str, str], optional): Constant text columns written before the numeric ones
    """
    table = np.atleast_2d(np.asarray(rows, dtype=float))
    if table.size and table.shape[1] != len(columns):
        raise ValueError(f"Table has {table.shape[1]} columns but {len(columns)} names were given")
    table = table.reshape(-1, len(columns))
    labels = labels or {}
    fmt = ["%s"] * len(labels) + [CSV_FORMAT] * len(columns)
    data = np.empty((table.shape[0], len(fmt)), dtype=object)
    data[:, :len(labels)] = list(labels.values())
    data[:, len(labels):] = table

    lines = [f"{key}: {value}" for key, value in (metadata or {}).items()]
    lines.append(",".join([*labels, *columns]))
    ensure_parent_dir(path)
    try:
        np.savetxt(path, data, fmt=fmt, delimiter=",", header="\n".join(lines), comments="# ")
        logger.info(f"Wrote {table.shape[0]} rows to {path}")
    except OSError as e:
        logger.error(f"Failed to write {path}: {str(e)}")
        raise


def write_json(path: str, payload: Dict[str, Any]) -> None:
    """Write a JSON result document"""
    ensure_parent_dir(path)
    try:
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=float)
        logger.info(f"Wrote results to {path}")
    except OSError as e:
        logger.error(f"Failed to write {path}: {str(e)}")
        raise
