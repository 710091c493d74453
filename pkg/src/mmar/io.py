"""Data files, run configuration and preprocessing for the command line tools.

Matrix panels travel as long CSV with header ``t,row,col,value``: one record
per cell per time, row/column labels mapped to indices in first-appearance
order, time contiguous from 1. Configuration files are flat ``key=value`` text;
command-line flags override file values, which override defaults.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError
from .model import MatrixSeries

DATA_HEADER = ("t", "row", "col", "value")


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_data_csv(path):
    """Parse a long-format data file.

    Returns (series, row_labels, col_labels). Every (t, row, col) cell must be
    present exactly once and the time index must run 1..T without gaps.
    """
    rows_seen: dict = {}
    cols_seen: dict = {}
    records = []
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open data file {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DATA_HEADER:
            raise DataError(f"{path}: expected header {','.join(DATA_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
            try:
                t = int(rec[0])
                value = float(rec[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad numeric field ({exc})") from exc
            row_label, col_label = rec[1].strip(), rec[2].strip()
            if row_label not in rows_seen:
                rows_seen[row_label] = len(rows_seen)
            if col_label not in cols_seen:
                cols_seen[col_label] = len(cols_seen)
            records.append((t, rows_seen[row_label], cols_seen[col_label], value))
    if not records:
        raise DataError(f"{path}: no records")

    t_max = max(rec[0] for rec in records)
    m, n = len(rows_seen), len(cols_seen)
    if min(rec[0] for rec in records) != 1:
        raise DataError(f"{path}: time index must start at 1")
    values = np.full((t_max, m, n), np.nan)
    for t, r, c, val in records:
        if not np.isnan(values[t - 1, r, c]):
            raise DataError(f"{path}: duplicate cell (t={t}, row={r}, col={c})")
        values[t - 1, r, c] = val
    missing = np.argwhere(np.isnan(values))
    if missing.size:
        t, r, c = missing[0]
        raise DataError(f"{path}: missing cell (t={t + 1}, row index {r}, "
                        f"col index {c}); the grid must be complete")
    return (MatrixSeries(values), list(rows_seen), list(cols_seen))


def write_data_csv(path, series: MatrixSeries, row_labels=None, col_labels=None):
    """Write a series in long format; generated labels are r0.., c0.. by default."""
    row_labels = row_labels or [f"r{i}" for i in range(series.rows)]
    col_labels = col_labels or [f"c{j}" for j in range(series.cols)]
    if len(row_labels) != series.rows or len(col_labels) != series.cols:
        raise ValueError("label counts must match the series dimensions")
    lines = [",".join(DATA_HEADER)]
    for t in range(series.n_obs):
        for r in range(series.rows):
            for c in range(series.cols):
                lines.append(f"{t + 1},{row_labels[r]},{col_labels[c]},"
                             f"{float(series.values[t, r, c])!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_labels_csv(path, labels) -> None:
    lines = ["t,label"] + [f"{t + 1},{int(lab)}" for t, lab in enumerate(labels)]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_labels_csv(path) -> np.ndarray:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("t", "label"):
            raise DataError(f"{path}: expected header t,label")
        return np.array([int(rec[1]) for rec in reader if rec], dtype=int)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str):
    return [int(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


CONFIG_SCHEMA = {
    "n_components": int,
    "order": int,
    "k_range": _parse_int_list,
    "p_range": _parse_int_list,
    "criterion": str,
    "seed": int,
    "n_starts": int,
    "max_em_iters": int,
    "em_rel_tol": float,
    "max_inner_iters": int,
    "inner_rel_tol": float,
    "ridge_jitter": float,
    "center": _parse_bool,
    "scale": _parse_bool,
    "level": float,
    "burn_in": int,
}


def parse_config(path) -> dict:
    """Read a flat key=value configuration file; unknown keys are rejected."""
    out = {}
    try:
        handle = open(path)
    except OSError as exc:
        raise DataError(f"cannot open config file {path}: {exc}") from exc
    with handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_SCHEMA:
                raise DataError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = CONFIG_SCHEMA[key](value.strip())
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Preprocessing: per-cell centering and pooled per-row variance scaling.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preprocessing:
    """Invertible center/scale transform fitted on a series."""

    cell_means: np.ndarray | None  # (m, n)
    row_scales: np.ndarray | None  # (m,)

    def transform(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float)
        if self.cell_means is not None:
            out -= self.cell_means
        if self.row_scales is not None:
            out /= self.row_scales[:, None]
        return out

    def inverse(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float)
        if self.row_scales is not None:
            out *= self.row_scales[:, None]
        if self.cell_means is not None:
            out += self.cell_means
        return out

    def to_dict(self) -> dict:
        return {
            "cell_means": None if self.cell_means is None else self.cell_means.tolist(),
            "row_scales": None if self.row_scales is None else self.row_scales.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Preprocessing":
        means = payload.get("cell_means")
        scales = payload.get("row_scales")
        return cls(cell_means=None if means is None else np.array(means, dtype=float),
                   row_scales=None if scales is None else np.array(scales, dtype=float))


def preprocess(series: MatrixSeries, center: bool = True, scale: bool = True):
    """Center each cell series and scale rows to unit pooled variance.

    Returns (transformed_series, transform). The row scale pools the centered
    variance of every cell in that row across time, so each row's entries have
    pooled variance 1 afterwards.
    """
    values = series.values
    means = values.mean(axis=0) if center else None
    centered = values - means if center else values
    scales = None
    if scale:
        scales = np.sqrt(np.mean(centered**2, axis=(0, 2)))
        scales = np.where(scales > 0, scales, 1.0)
    transform = Preprocessing(cell_means=means, row_scales=scales)
    return MatrixSeries(transform.transform(values)), transform
