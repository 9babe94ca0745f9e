"""Alpha-stable sheets on [0, 1]^d.

Two representations are provided:

* grid increments -- i.i.d. S_alpha(h^(d/alpha), 0, 0) masses on the cells
  C_n = h(n - 1) + (0, h]^d, cumulated over the partial order into gridpoint
  values U(hm);
* the LePage series with the corner kernel f(x, x') = 1{x' <= x}.

:func:`discretize_lepage` builds the first from the second on the same atoms,
which is the coupling used to compare them pathwise.

Gridpoint m sits at the float m / N.  A point x belongs to the gridpoint
index ceil(x / h), computed as the smallest m with x <= m / N, both for
evaluation and for assigning atoms to cells; this keeps the coupling
identity exact.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import struct
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .lepage import LePageState, lepage_field
from .stable import StableParams, sample_stable

__all__ = [
    "GridSheet",
    "MAX_CELLS",
    "MAX_DIM",
    "cumulate",
    "grid_index",
    "sample_increments",
    "eval_piecewise",
    "reconstruct_increment",
    "sheet_kernel",
    "lepage_sheet",
    "discretize_lepage",
    "write_sheets",
    "read_sheets",
]

MAX_DIM = 3
MAX_CELLS = 2**24

_MAGIC = b"SSHT"
_HEADER = struct.Struct("<4sHHIIdQ")  # magic, version, flags, d, N, alpha, seed
_VERSION = 1
_HAS_SEED = 1
_HAS_ALPHA = 2


def cumulate(increments: np.ndarray) -> np.ndarray:
    """Gridpoint values sum_{0 < n <= m} increments(n), with zero boundary."""
    inc = np.asarray(increments, dtype=float)
    vals = np.zeros(tuple(s + 1 for s in inc.shape))
    vals[(slice(1, None),) * inc.ndim] = inc
    for ax in range(inc.ndim):
        np.cumsum(vals, axis=ax, out=vals)
    return vals


def grid_index(x, n_cells: int) -> np.ndarray:
    """Smallest integer m with x <= m / n_cells, componentwise."""
    x = np.asarray(x, dtype=float)
    m = np.ceil(x * n_cells)
    m = np.where(x <= (m - 1.0) / n_cells, m - 1.0, m)
    m = np.where(x > m / n_cells, m + 1.0, m)
    return m.astype(np.int64)


@dataclass(eq=False)
class GridSheet:
    """Cell increments of a sheet and their cumulative gridpoint values.

    ``increments`` has shape (N,)*d, indexed by n - 1 for n in {1..N}^d;
    ``values`` has shape (N+1,)*d, indexed by gridpoint m in {0..N}^d.
    """

    increments: np.ndarray
    values: np.ndarray
    alpha: Optional[float] = None
    seed: Optional[int] = None

    @classmethod
    def from_increments(cls, increments, alpha=None, seed=None) -> "GridSheet":
        inc = np.array(increments, dtype=float)
        if inc.ndim < 1 or len(set(inc.shape)) != 1:
            raise ValueError("increments must be a cube array of shape (N,)*d")
        return cls(inc, cumulate(inc), alpha, seed)

    @property
    def d(self) -> int:
        return self.increments.ndim

    @property
    def n_cells(self) -> int:
        return self.increments.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def cell_values(self) -> np.ndarray:
        """U^N on the cells, i.e. values at the upper corner of each cell."""
        return self.values[(slice(1, None),) * self.d]

    def add_to_increment(self, n, delta: float) -> None:
        """Add ``delta`` to increment n (1-based) and refresh only the values at m >= n."""
        idx = tuple(int(i) - 1 for i in np.atleast_1d(n))
        if len(idx) != self.d or any(not 0 <= i < self.n_cells for i in idx):
            raise IndexError(f"cell index {n} out of range for N={self.n_cells}")
        self.increments[idx] += delta
        self.values[tuple(slice(i + 1, None) for i in idx)] += delta

    def negated(self) -> "GridSheet":
        return GridSheet(-self.increments, -self.values, self.alpha, self.seed)

    # -- serialisation -----------------------------------------------------

    def to_bytes(self) -> bytes:
        flags = (_HAS_SEED if self.seed is not None else 0) | (
            _HAS_ALPHA if self.alpha is not None else 0
        )
        head = _HEADER.pack(
            _MAGIC,
            _VERSION,
            flags,
            self.d,
            self.n_cells,
            float(self.alpha) if self.alpha is not None else math.nan,
            int(self.seed) if self.seed is not None else 0,
        )
        return head + np.ascontiguousarray(self.increments, dtype="<f8").tobytes()

    @classmethod
    def from_stream(cls, fh) -> Optional["GridSheet"]:
        raw = fh.read(_HEADER.size)
        if not raw:
            return None
        if len(raw) != _HEADER.size:
            raise ValueError("truncated sheet header")
        magic, version, flags, d, n, alpha, seed = _HEADER.unpack(raw)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a sheet record (bad magic or version)")
        count = n**d
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise ValueError("truncated sheet payload")
        inc = np.frombuffer(payload, dtype="<f8").astype(float).reshape((n,) * d)
        return cls.from_increments(
            inc,
            alpha if flags & _HAS_ALPHA else None,
            seed if flags & _HAS_SEED else None,
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridSheet":
        sheet = cls.from_stream(io.BytesIO(data))
        if sheet is None:
            raise ValueError("empty sheet record")
        return sheet

    def to_csv(self) -> str:
        """Long-format gridpoint dump: m_1..m_d, x_1..x_d, value."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"m{i + 1}" for i in range(self.d)] + [f"x{i + 1}" for i in range(self.d)] + ["value"])
        n = self.n_cells
        for m in itertools.product(range(n + 1), repeat=self.d):
            w.writerow(list(m) + [repr(mi / n) for mi in m] + [repr(float(self.values[m]))])
        return buf.getvalue()


def write_sheets(path, sheets) -> None:
    with open(path, "wb") as fh:
        for s in sheets:
            fh.write(s.to_bytes())


def read_sheets(path) -> Iterator[GridSheet]:
    with open(path, "rb") as fh:
        while True:
            s = GridSheet.from_stream(fh)
            if s is None:
                return
            yield s


def _check_grid(n_cells: int, d: int, max_cells: int) -> None:
    if n_cells < 1 or d < 1:
        raise ValueError("need n_cells >= 1 and d >= 1")
    if d > MAX_DIM:
        raise ValueError(f"dimension {d} exceeds the cap of {MAX_DIM}")
    if n_cells**d > max_cells:
        raise MemoryError(f"{n_cells}^{d} cells exceeds the cap of {max_cells}")


def sample_increments(
    alpha: float,
    n_cells: int,
    d: int,
    rng: np.random.Generator,
    max_cells: int = MAX_CELLS,
    seed=None,
) -> GridSheet:
    """Grid sheet with i.i.d. S_alpha(h^(d/alpha), 0, 0) cell increments."""
    _check_grid(n_cells, d, max_cells)
    h = 1.0 / n_cells
    params = StableParams(alpha, h ** (d / alpha))
    inc = sample_stable(params, rng, size=(n_cells,) * d)
    return GridSheet(inc, cumulate(inc), float(alpha), seed)


def _as_points(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1 and arr.size == d
    pts = arr.reshape(-1, d)
    if np.any(pts < 0.0) or np.any(pts > 1.0) or not np.all(np.isfinite(pts)):
        raise ValueError("evaluation points must lie in the unit cube [0, 1]^d")
    return pts, single


def eval_piecewise(sheet: GridSheet, x):
    """U^N(x) = U(h ceil(x / h)); a float for one point, an array for (m, d) points."""
    pts, single = _as_points(x, sheet.d)
    m = grid_index(pts, sheet.n_cells)
    out = sheet.values[tuple(m.T)]
    return float(out[0]) if single else out


def reconstruct_increment(sheet: GridSheet, m) -> float:
    """Alternating mixed difference of the values over the 2^d corners of cell m."""
    m = tuple(int(i) for i in np.atleast_1d(m))
    if len(m) != sheet.d or any(not 1 <= i <= sheet.n_cells for i in m):
        raise IndexError(f"cell index {m} out of range 1..{sheet.n_cells}")
    total = 0.0
    for corner in itertools.product((0, 1), repeat=sheet.d):
        sign = -1.0 if sum(corner) % 2 else 1.0
        total += sign * sheet.values[tuple(i - c for i, c in zip(m, corner))]
    return float(total)


def sheet_kernel(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Corner kernel f(x, x') = 1 when x'_i <= x_i for all i."""
    return np.all(v <= x, axis=-1).astype(float)


def _check_unit_domain(state: LePageState) -> None:
    d = state.d
    if state.domain.lower != (0.0,) * d or state.domain.upper != (1.0,) * d:
        raise ValueError(f"sheet needs the unit cube domain, got {state.domain}")


def lepage_sheet(state: LePageState, x):
    """Truncated LePage sheet C_alpha^(1/alpha) sum_k rho_k Gamma_k^(-1/alpha) 1{V_k <= x}."""
    _check_unit_domain(state)
    pts, single = _as_points(x, state.d)
    if state.d == 1 and state.n_terms:
        order = np.argsort(state.vs[:, 0], kind="stable")
        csum = np.concatenate([[0.0], np.cumsum(state.weights[order])])
        pos = np.searchsorted(state.vs[order, 0], pts[:, 0], side="right")
        out = csum[pos]
    else:
        out = lepage_field(state, sheet_kernel, pts)
    return float(out[0]) if single else out


def discretize_lepage(
    state: LePageState, n_cells: int, max_cells: int = MAX_CELLS
) -> GridSheet:
    """Grid sheet whose increments are M(C_n) computed from the same atoms."""
    _check_unit_domain(state)
    d = state.d
    _check_grid(n_cells, d, max_cells)
    inc = np.zeros((n_cells,) * d)
    if state.n_terms:
        cell = grid_index(state.vs, n_cells) - 1
        flat = np.ravel_multi_index(tuple(cell.T), inc.shape)
        inc = np.bincount(flat, weights=state.weights, minlength=inc.size).reshape(inc.shape)
    return GridSheet(inc, cumulate(inc), state.alpha, state.seed if isinstance(state.seed, int) else None)

