"""Two-way and three-way arrays of d-vectors with leave-index-out means.

Leave-out means are computed from cached marginal sums, so every deletion
costs O(d) after an O(NMd) setup.  Indices are 0-based in the Python API and
1-based in CSV files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataFormatError

__all__ = [
    "LeaveOut",
    "ThreeWayArray",
    "TwoWayArray",
    "read_csv",
    "write_csv",
]


@dataclass(frozen=True)
class LeaveOut:
    """Indices deleted along each axis; ``None`` keeps the axis whole."""

    row: int | None = None
    col: int | None = None
    slab: int | None = None

    def axes(self) -> tuple:
        return (self.row, self.col, self.slab)


def _as_cells(cells, ndim: int) -> np.ndarray:
    x = np.array(cells, dtype=float)
    if x.ndim == ndim:
        x = x[..., None]
    if x.ndim != ndim + 1:
        raise ValueError(f"cells must have {ndim} index axes plus an optional vector axis")
    if min(x.shape[:ndim]) < 2:
        raise ValueError("every index extent must be at least 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("cells must be finite")
    x.setflags(write=False)
    return x


class TwoWayArray:
    """An N x M grid of d-dimensional observations ``X_ij``."""

    def __init__(self, cells):
        self.cells = _as_cells(cells, 2)

    def __repr__(self) -> str:
        return f"TwoWayArray(N={self.N}, M={self.M}, d={self.d})"

    @property
    def N(self) -> int:
        return self.cells.shape[0]

    @property
    def M(self) -> int:
        return self.cells.shape[1]

    @property
    def d(self) -> int:
        return self.cells.shape[2]

    @property
    def n(self) -> int:
        return self.N + self.M

    @cached_property
    def row_sums(self) -> np.ndarray:
        return self.cells.sum(axis=1)

    @cached_property
    def col_sums(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    @cached_property
    def total(self) -> np.ndarray:
        return self.row_sums.sum(axis=0)

    def full_mean(self) -> np.ndarray:
        return self.total / (self.N * self.M)

    def leave_row_means(self) -> np.ndarray:
        """(N, d) array; row ``l`` is the mean with row ``l`` deleted."""
        return (self.total - self.row_sums) / ((self.N - 1) * self.M)

    def leave_col_means(self) -> np.ndarray:
        return (self.total - self.col_sums) / (self.N * (self.M - 1))

    def leave_pair_means(self) -> np.ndarray:
        """(N, M, d) array of means with row ``l`` and column ``l1`` deleted."""
        kept = (self.total[None, None, :] - self.row_sums[:, None, :]
                - self.col_sums[None, :, :] + self.cells)
        return kept / ((self.N - 1) * (self.M - 1))

    def leave_out_mean(self, spec: LeaveOut) -> np.ndarray:
        self._check(spec)
        i, j = spec.row, spec.col
        if i is None and j is None:
            return self.full_mean()
        if j is None:
            return (self.total - self.row_sums[i]) / ((self.N - 1) * self.M)
        if i is None:
            return (self.total - self.col_sums[j]) / (self.N * (self.M - 1))
        kept = self.total - self.row_sums[i] - self.col_sums[j] + self.cells[i, j]
        return kept / ((self.N - 1) * (self.M - 1))

    def retained(self, spec: LeaveOut) -> np.ndarray:
        """Copy of the cells that survive the deletion (source untouched)."""
        self._check(spec)
        x = self.cells
        if spec.row is not None:
            x = np.delete(x, spec.row, axis=0)
        if spec.col is not None:
            x = np.delete(x, spec.col, axis=1)
        return x

    def view(self, spec: LeaveOut) -> TwoWayArray:
        return TwoWayArray(self.retained(spec))

    def _check(self, spec: LeaveOut):
        if spec.slab is not None:
            raise ValueError("two-way arrays have no third axis")
        if spec.row is not None and not 0 <= spec.row < self.N:
            raise IndexError(f"row {spec.row} out of range")
        if spec.col is not None and not 0 <= spec.col < self.M:
            raise IndexError(f"column {spec.col} out of range")


class ThreeWayArray:
    """An N x M x T grid of d-dimensional observations ``X_ijt``."""

    def __init__(self, cells):
        self.cells = _as_cells(cells, 3)

    def __repr__(self) -> str:
        return f"ThreeWayArray(N={self.N}, M={self.M}, T={self.T}, d={self.d})"

    N = property(lambda self: self.cells.shape[0])
    M = property(lambda self: self.cells.shape[1])
    T = property(lambda self: self.cells.shape[2])
    d = property(lambda self: self.cells.shape[3])

    @property
    def n(self) -> int:
        return self.N + self.M + self.T

    @property
    def extents(self) -> tuple:
        return self.cells.shape[:3]

    @cached_property
    def _margins(self):
        x = self.cells
        s_ij = x.sum(axis=2)
        s_it = x.sum(axis=1)
        s_jt = x.sum(axis=0)
        s_i = s_ij.sum(axis=1)
        s_j = s_ij.sum(axis=0)
        s_t = s_it.sum(axis=0)
        return s_i, s_j, s_t, s_ij, s_it, s_jt, s_i.sum(axis=0)

    @property
    def total(self) -> np.ndarray:
        return self._margins[-1]

    def full_mean(self) -> np.ndarray:
        return self.total / (self.N * self.M * self.T)

    def leave_one_means(self) -> tuple:
        """Means with one index deleted: arrays of shape (N,d), (M,d), (T,d)."""
        N, M, T = self.extents
        s_i, s_j, s_t, *_, tot = self._margins
        return ((tot - s_i) / ((N - 1) * M * T),
                (tot - s_j) / (N * (M - 1) * T),
                (tot - s_t) / (N * M * (T - 1)))

    def leave_two_means(self) -> tuple:
        """Means with two indices deleted: (N,M,d), (N,T,d), (M,T,d)."""
        N, M, T = self.extents
        s_i, s_j, s_t, s_ij, s_it, s_jt, tot = self._margins
        ij = (tot - s_i[:, None] - s_j[None, :] + s_ij) / ((N - 1) * (M - 1) * T)
        it = (tot - s_i[:, None] - s_t[None, :] + s_it) / ((N - 1) * M * (T - 1))
        jt = (tot - s_j[:, None] - s_t[None, :] + s_jt) / (N * (M - 1) * (T - 1))
        return ij, it, jt

    def leave_three_means(self) -> np.ndarray:
        """(N, M, T, d) means with one index deleted along every axis."""
        N, M, T = self.extents
        s_i, s_j, s_t, s_ij, s_it, s_jt, tot = self._margins
        kept = (tot
                - s_i[:, None, None] - s_j[None, :, None] - s_t[None, None, :]
                + s_ij[:, :, None] + s_it[:, None, :] + s_jt[None, :, :]
                - self.cells)
        return kept / ((N - 1) * (M - 1) * (T - 1))

    def leave_out_mean(self, spec: LeaveOut) -> np.ndarray:
        dropped = spec.axes()
        for k, (idx, ext) in enumerate(zip(dropped, self.extents)):
            if idx is not None and not 0 <= idx < ext:
                raise IndexError(f"index {idx} out of range on axis {k}")
        # inclusion-exclusion over the deleted hyperplanes
        x = self.cells
        kept = self.total.copy()
        active = [k for k in range(3) if dropped[k] is not None]
        for mask in range(1, 1 << len(active)):
            axes = [active[b] for b in range(len(active)) if mask >> b & 1]
            sl = [slice(None)] * 3
            for k in axes:
                sl[k] = dropped[k]
            part = x[tuple(sl)].reshape(-1, self.d).sum(axis=0)
            kept += (-1) ** len(axes) * part
        denom = 1
        for idx, ext in zip(dropped, self.extents):
            denom *= ext - (idx is not None)
        return kept / denom

    def retained(self, spec: LeaveOut) -> np.ndarray:
        x = self.cells
        for axis, idx in enumerate(spec.axes()):
            if idx is not None:
                x = np.delete(x, idx, axis=axis)
        return x


def read_csv(path) -> TwoWayArray | ThreeWayArray:
    """Read ``i,j,v1..vd`` (or ``i,j,t,v1..vd``) rows with 1-based indices.

    Every index combination must appear exactly once.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", line=1) from None
        if header[:2] != ["i", "j"]:
            raise DataFormatError("header must start with i,j", line=1)
        k = 3 if len(header) > 2 and header[2] == "t" else 2
        d = len(header) - k
        if d < 1 or header[k:] != [f"v{m}" for m in range(1, d + 1)]:
            raise DataFormatError("value columns must be named v1..vd", line=1)
        rows = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != k + d:
                raise DataFormatError(f"expected {k + d} fields, got {len(rec)}", line=lineno)
            try:
                idx = tuple(int(f) for f in rec[:k])
                vals = [float(f) for f in rec[k:]]
            except ValueError as exc:
                raise DataFormatError(str(exc), line=lineno) from None
            if min(idx) < 1:
                raise DataFormatError("indices are 1-based", line=lineno)
            if idx in rows:
                raise DataFormatError(f"duplicate index {idx}", line=lineno)
            if not np.all(np.isfinite(vals)):
                raise DataFormatError("non-finite value", line=lineno)
            rows[idx] = vals
    if not rows:
        raise DataFormatError("no data rows")
    shape = tuple(max(ix[a] for ix in rows) for a in range(k))
    cells = np.empty(shape + (d,))
    for ix in np.ndindex(*shape):
        key = tuple(a + 1 for a in ix)
        if key not in rows:
            raise DataFormatError(f"missing cell {key}; only balanced arrays are supported")
        cells[ix] = rows[key]
    try:
        return TwoWayArray(cells) if k == 2 else ThreeWayArray(cells)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None


def write_csv(array: TwoWayArray | ThreeWayArray, path) -> None:
    x = array.cells
    k = x.ndim - 1
    header = ["i", "j", "t"][:k] + [f"v{m}" for m in range(1, x.shape[-1] + 1)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for ix in np.ndindex(*x.shape[:k]):
            w.writerow([a + 1 for a in ix] + [repr(float(v)) for v in x[ix]])
