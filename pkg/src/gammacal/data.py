"""Observed-data container and its CSV format.

A CSV carries a header row; covariates are the columns whose name starts
with ``x``, the treatment is ``t`` (strictly 0/1), the outcome is ``y`` and
negative control outcomes start with ``w``.  Any other column is rejected.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SchemaError


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-d array")
    return a


@dataclass(frozen=True)
class Dataset:
    """Rows of (X, T, Y) with optional negative-control columns ``w``."""

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray
    w: np.ndarray | None = None
    x_names: tuple = field(default=())
    w_names: tuple = field(default=())

    def __post_init__(self):
        X = _as_matrix(self.X, "X")
        n = X.shape[0]
        t = np.asarray(self.t)
        if t.shape != (n,):
            raise InvalidInputError("t must have one entry per row of X")
        if not np.all((t == 0) | (t == 1)):
            raise InvalidInputError("t must be strictly 0/1")
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (n,):
            raise InvalidInputError("y must have one entry per row of X")
        w = self.w
        if w is not None:
            w = _as_matrix(w, "w")
            if w.shape[0] != n:
                raise InvalidInputError("w must have one row per row of X")
            if w.shape[1] == 0:
                w = None
        for name, arr in (("X", X), ("y", y), ("w", w)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite values")
        x_names = tuple(self.x_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        q = 0 if w is None else w.shape[1]
        w_names = tuple(self.w_names) or tuple(f"w{k + 1}" for k in range(q))
        if len(x_names) != X.shape[1] or len(w_names) != q:
            raise InvalidInputError("column names do not match array shapes")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", t.astype(np.int64))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "w_names", w_names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return 0 if self.w is None else self.w.shape[1]

    def take(self, rows):
        """Row subset (index array or boolean mask)."""
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.t[rows], self.y[rows],
                       None if self.w is None else self.w[rows],
                       self.x_names, self.w_names)

    def with_outcome(self, y):
        return Dataset(self.X, self.t, y, self.w, self.x_names, self.w_names)

    def to_csv(self, path):
        header = list(self.x_names) + ["t", "y"] + list(self.w_names)
        cols = [self.X, self.t[:, None], self.y[:, None]]
        if self.w is not None:
            cols.append(self.w)
        table = np.hstack([c.astype(np.float64) for c in cols])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            p = self.p
            for row in table:
                cells = [repr(float(v)) for v in row]
                cells[p] = str(int(row[p]))
                out.writerow(cells)

    @classmethod
    def from_csv(cls, path, require_y=True):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise SchemaError(f"{path}: empty file, header row required")
        header = [h.strip() for h in rows[0]]
        xi, wi, ti, yi = [], [], None, None
        for j, h in enumerate(header):
            low = h.lower()
            if low == "t":
                ti = j
            elif low == "y":
                yi = j
            elif low.startswith("x"):
                xi.append(j)
            elif low.startswith("w"):
                wi.append(j)
            else:
                raise SchemaError(f"{path}: unrecognised column {h!r}")
        if ti is None or not xi or (require_y and yi is None):
            raise SchemaError(f"{path}: need x* covariates, t and y columns")
        try:
            body = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=np.float64)
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric cell ({exc})") from None
        if body.size == 0:
            raise SchemaError(f"{path}: no data rows")
        if body.shape[1] != len(header):
            raise SchemaError(f"{path}: ragged rows")
        y = body[:, yi] if yi is not None else np.zeros(body.shape[0])
        try:
            return cls(body[:, xi], body[:, ti], y, body[:, wi] if wi else None,
                       tuple(header[j] for j in xi), tuple(header[j] for j in wi))
        except InvalidInputError as exc:
            raise SchemaError(f"{path}: {exc}") from None
