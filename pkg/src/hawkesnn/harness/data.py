"""Count-series files."""
from __future__ import annotations

import csv

import numpy as np

from ..simulate import CountSeries, ObservationGrid

SCHEMAS = {
    "interval_end_time": ("interval_end_time", "end", "time", "t"),
    "width": ("width", "interval_width", "delta"),
}
COUNT_NAMES = ("count", "counts", "n")


def _detect(header) -> str | None:
    h = [c.strip().lower() for c in header]
    if len(h) != 2 or h[1] not in COUNT_NAMES:
        return None
    for schema, names in SCHEMAS.items():
        if h[0] in names:
            return schema
    return None


def load_counts_csv(path, schema: str | None = None) -> CountSeries:
    """Read a two-column count file.

    Columns are ``interval_end_time,count`` (first interval starts at 0) or
    ``width,count``.  A header row selects the schema; without one, ``schema``
    must be given (default ``interval_end_time``).
    """
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh))
                if r and not (len(r) == 1 and not r[0].strip()) and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValueError(f"{path}: file is empty")
    detected = _detect(rows[0][1])
    if detected is not None:
        rows = rows[1:]
        if schema is not None and schema != detected:
            raise ValueError(f"{path}: header says {detected!r} but schema {schema!r} was requested")
        schema = detected
    schema = schema or "interval_end_time"
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    xs, ns = [], []
    for line, r in rows:
        if len(r) != 2:
            raise ValueError(f"{path}:{line}: expected 2 columns, got {len(r)}")
        try:
            x = float(r[0])
            n = float(r[1])
        except ValueError:
            raise ValueError(f"{path}:{line}: could not parse {r!r}") from None
        if not (np.isfinite(x) and np.isfinite(n)):
            raise ValueError(f"{path}:{line}: non-finite value")
        if n < 0 or n != round(n):
            raise ValueError(f"{path}:{line}: count must be a nonnegative integer, got {r[1]!r}")
        if schema == "width":
            if x <= 0:
                raise ValueError(f"{path}:{line}: width must be positive")
        else:
            prev = xs[-1] if xs else 0.0
            if x <= prev:
                raise ValueError(f"{path}:{line}: interval end times must be strictly increasing "
                                 f"(and positive), got {x} after {prev}")
        xs.append(x)
        ns.append(int(n))
    if schema == "width":
        times = np.concatenate([[0.0], np.cumsum(xs)])
    else:
        times = np.concatenate([[0.0], xs])
    return CountSeries(ObservationGrid(times), np.array(ns, dtype=np.int64))


def save_counts_csv(counts: CountSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval_end_time", "count"])
        for t, n in zip(counts.grid.times[1:], counts.counts):
            w.writerow([repr(float(t)), int(n)])
