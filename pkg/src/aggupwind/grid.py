"""Cartesian grids, discrete measures on cell centers, and initial data.

A grid is the finite index window ``lo <= J <= hi`` (per axis) of the infinite
lattice with cell centers ``x_J = J * dx``.  Cell ``C_J`` is the half-open box
``[(J - 1/2) dx, (J + 1/2) dx)``.  Measures store their weights densely over
the window; computations run over the nonzero cells only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .potential import Potential


class GridError(ValueError):
    """Invalid grid or measure, or mass leaving the index window."""


@dataclass(frozen=True)
class CartesianGrid:
    dx: tuple
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if not (len(self.dx) == len(self.lo) == len(self.hi)) or len(self.dx) == 0:
            raise GridError("dx, lo and hi must have the same positive length")
        if any(not h > 0 for h in self.dx):
            raise GridError("cell sizes must be positive")
        if any(b < a for a, b in zip(self.lo, self.hi)):
            raise GridError("empty index window")
        object.__setattr__(self, "dx", tuple(float(h) for h in self.dx))
        object.__setattr__(self, "lo", tuple(int(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(int(b) for b in self.hi))

    @classmethod
    def from_domain(cls, bounds: Sequence[tuple], n_cells: Sequence[int]) -> "CartesianGrid":
        """Grid of step ``(b - a) / n`` whose window holds every center in ``[a, b]``.

        With ``a / dx`` integral this gives ``n + 1`` nodes per axis, the two
        end points included.
        """
        dx, lo, hi = [], [], []
        for (a, b), n in zip(bounds, n_cells):
            if not b > a or n < 1:
                raise GridError(f"bad axis ({a}, {b}) with {n} cells")
            h = (b - a) / n
            dx.append(h)
            lo.append(math.ceil(a / h - 1e-9))
            hi.append(math.floor(b / h + 1e-9))
        return cls(tuple(dx), tuple(lo), tuple(hi))

    @property
    def d(self) -> int:
        return len(self.dx)

    @property
    def shape(self) -> tuple:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def dx_max(self) -> float:
        return max(self.dx)

    def axis_centers(self, i: int) -> np.ndarray:
        return np.arange(self.lo[i], self.hi[i] + 1) * self.dx[i]

    def centers(self) -> np.ndarray:
        """All cell centers, shape ``shape + (d,)``."""
        axes = np.meshgrid(*[self.axis_centers(i) for i in range(self.d)], indexing="ij")
        return np.stack(axes, axis=-1)

    def index_of(self, point) -> tuple:
        """Multi-index of the cell containing ``point`` (lower-closed cells)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return tuple(int(math.floor(x / h + 0.5)) for x, h in zip(point, self.dx))

    def contains(self, J) -> bool:
        return all(a <= j <= b for j, a, b in zip(J, self.lo, self.hi))

    def offset_coordinates(self) -> np.ndarray:
        """Coordinates ``m * dx`` of every index offset ``|m_i| <= n_i - 1``."""
        axes = [np.arange(-(n - 1), n) * h for n, h in zip(self.shape, self.dx)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


_TABLE_CACHE: dict = {}


def _tables(grid: CartesianGrid, p: Potential, what: str) -> np.ndarray:
    """Offset tables: ``-grad_hat`` components (``what='velocity'``) or ``W``."""
    key = (grid, p, what) if p.kind != "custom" else None
    if key is not None and key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    offsets = grid.offset_coordinates()
    if what == "velocity":
        g = -p.grad_hat(offsets)
        tab = np.ascontiguousarray(np.moveaxis(g, -1, 0))
    else:
        tab = np.ascontiguousarray(p.value(offsets)[None])
    if key is not None:
        if len(_TABLE_CACHE) > 64:
            _TABLE_CACHE.clear()
        _TABLE_CACHE[key] = tab
    return tab


def grid_sum(grid: CartesianGrid, weights: np.ndarray, tables: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """``out[c, t] = sum_K rho_K tables[c][J_t - K]`` over nonzero ``rho_K``.

    ``targets`` are flat C-order indices into the window.
    """
    support = np.flatnonzero(weights).astype(np.int64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    # numpy's 1D convolution beats the compiled loop; the kernel pays off in 2D
    if grid.d == 2 and kernels.BACKEND == "cython":
        rho2 = weights.reshape(grid.shape[0], -1)
        tab2 = tables.reshape(tables.shape[0], tables.shape[1], -1)
        return kernels.grid_convolve(np.ascontiguousarray(rho2), np.ascontiguousarray(tab2), support, targets)
    from . import _fallback
    return _fallback.grid_convolve(weights, tables, support, targets)


class DiscreteMeasure:
    """Nonnegative weights ``rho_J`` on the cell centers of a grid window.

    The weight array is read-only after construction.
    """

    def __init__(self, grid: CartesianGrid, weights, check: bool = True):
        self.grid = grid
        w = np.array(weights, dtype=float)
        if w.shape != grid.shape:
            raise GridError(f"weights shape {w.shape} does not match grid {grid.shape}")
        if check:
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise GridError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise GridError(f"total mass {float(w.sum())!r} differs from 1")
        w.setflags(write=False)
        self.weights = w

    @classmethod
    def from_dict(cls, grid: CartesianGrid, mapping: dict, check: bool = True) -> "DiscreteMeasure":
        w = np.zeros(grid.shape)
        for J, value in mapping.items():
            J = (J,) if isinstance(J, (int, np.integer)) else tuple(J)
            if not grid.contains(J):
                raise GridError(f"index {J} outside the grid window")
            w[tuple(j - a for j, a in zip(J, grid.lo))] += value
        return cls(grid, w, check=check)

    def __repr__(self):
        support = self.support_size() if hasattr(self, "weights") else "?"
        return f"DiscreteMeasure(d={self.grid.d}, support={support})"

    def to_dict(self) -> dict:
        """Sparse view ``J -> rho_J`` over nonzero cells, in lexicographic order."""
        idx = np.argwhere(self.weights != 0)
        lo = np.array(self.grid.lo)
        return {tuple(int(v) for v in (k + lo)): float(self.weights[tuple(k)]) for k in idx}

    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights))

    def support_indices(self) -> np.ndarray:
        """Multi-indices (rows) of the nonzero cells, lexicographic order."""
        return np.argwhere(self.weights != 0) + np.array(self.grid.lo)

    def atoms(self):
        idx = np.argwhere(self.weights != 0)
        pos = (idx + np.array(self.grid.lo)) * np.array(self.grid.dx)
        return pos.astype(float), self.weights[self.weights != 0]

    def mass(self) -> float:
        return math.fsum(self.weights.ravel())

    def energy_table_sum(self, p: Potential) -> float:
        targets = np.flatnonzero(self.weights)
        if len(targets) == 0:
            return 0.0
        conv = grid_sum(self.grid, self.weights, _tables(self.grid, p, "value"), targets)[0]
        return float(np.dot(self.weights.ravel()[targets], conv))

    def to_csv(self, path=None) -> str:
        """Field dump: ``J1..Jd,x1..xd,weight`` for nonzero cells."""
        d = self.grid.d
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"J{i + 1}" for i in range(d)] + [f"x{i + 1}" for i in range(d)] + ["weight"])
        for J, w in self.to_dict().items():
            x = [repr(j * h) for j, h in zip(J, self.grid.dx)]
            writer.writerow(list(J) + x + [repr(w)])
        text = buf.getvalue()
        if path is not None:
            from .io_utils import atomic_write
            atomic_write(path, text)
        return text


def center_of_mass(m: DiscreteMeasure) -> np.ndarray:
    pos, mass = m.atoms()
    return np.array([math.fsum(mass * pos[:, i]) for i in range(m.grid.d)])


def second_moment(m: DiscreteMeasure, about=None) -> float:
    """``sum_J |x_J - about|^2 rho_J`` (``about`` defaults to the origin)."""
    pos, mass = m.atoms()
    if about is not None:
        pos = pos - np.asarray(about, dtype=float)
    return math.fsum(mass * np.sum(pos * pos, axis=1))


# -- initial data ---------------------------------------------------------


@dataclass(frozen=True)
class Atoms:
    """Finite sum of Dirac masses; masses are renormalized to one."""
    positions: tuple
    masses: tuple


@dataclass(frozen=True)
class Density:
    """Closed-form nonnegative density; ``f`` maps points ``(n, d)`` to values ``(n,)``."""
    f: Callable


@dataclass(frozen=True)
class IndicatorBoxDifference:
    """``height * 1_{outer \\ inner}`` for axis-aligned boxes given as ``[(a1, b1), ...]``."""
    outer: tuple
    inner: tuple
    height: float = 1.0

    def f(self, x) -> np.ndarray:
        """Pointwise value on half-open boxes."""
        x = np.asarray(x, dtype=float)

        def inside(box):
            lo = np.array([b[0] for b in box])
            hi = np.array([b[1] for b in box])
            return np.all((x >= lo) & (x < hi), axis=1)
        return self.height * (inside(self.outer) & ~inside(self.inner))


def _normalized(w: np.ndarray) -> np.ndarray:
    total = w.sum()
    if not total > 0:
        raise GridError("initial datum has no mass inside the grid window")
    return w / total


def _box_overlap(grid: CartesianGrid, box) -> np.ndarray:
    """Volume of ``C_J`` intersected with ``box`` for every window cell."""
    lengths = []
    for i, (a, b) in enumerate(box):
        c = grid.axis_centers(i)
        h = grid.dx[i]
        lengths.append(np.clip(np.minimum(c + h / 2, b) - np.maximum(c - h / 2, a), 0.0, None))
    vol = lengths[0]
    for arr in lengths[1:]:
        vol = np.multiply.outer(vol, arr)
    return vol


def discretize(datum, grid: CartesianGrid) -> DiscreteMeasure:
    """Cell masses ``rho_J`` of an initial datum on the grid window."""
    if isinstance(datum, Atoms):
        w = np.zeros(grid.shape)
        for x, m in zip(datum.positions, datum.masses):
            J = grid.index_of(x)
            if not grid.contains(J):
                raise GridError(f"atom at {x} lies outside the grid window")
            w[tuple(j - a for j, a in zip(J, grid.lo))] += m
        return DiscreteMeasure(grid, _normalized(w))
    if isinstance(datum, Density):
        pts = grid.centers().reshape(-1, grid.d)
        vals = np.asarray(datum.f(pts), dtype=float).reshape(grid.shape)
        if np.any(vals < 0):
            raise GridError("density takes negative values")
        return DiscreteMeasure(grid, _normalized(vals * math.prod(grid.dx)))
    if isinstance(datum, IndicatorBoxDifference):
        w = datum.height * (_box_overlap(grid, datum.outer) - _box_overlap(grid, datum.inner))
        return DiscreteMeasure(grid, _normalized(np.clip(w, 0.0, None)))
    raise GridError(f"unsupported initial datum {type(datum).__name__}")


# -- 1D quantile functions ------------------------------------------------


def compensated_cumsum(values) -> np.ndarray:
    """Running sums with Neumaier compensation."""
    out = np.empty(len(values))
    s = 0.0
    comp = 0.0
    for k, v in enumerate(values):
        v = float(v)
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
        out[k] = s + comp
    return out


@dataclass(frozen=True)
class Quantile:
    """Right-continuous step function on ``[0, 1)``.

    ``values[k]`` is taken on ``[cum[k-1], cum[k])`` with ``cum[-1] := 0``;
    ``breakpoints`` are the interior jumps ``cum[:-1]``.
    """
    values: np.ndarray
    cum: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        return self.cum[:-1]

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        k = np.searchsorted(self.breakpoints, z, side="right")
        return self.values[k]


def quantile_from_atoms(positions, masses) -> Quantile:
    positions = np.asarray(positions, dtype=float).reshape(-1)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    keep = masses > 0
    positions, masses = positions[keep], masses[keep]
    order = np.argsort(positions, kind="stable")
    return Quantile(positions[order], compensated_cumsum(masses[order]))


def quantile(m) -> Quantile:
    """Monotone rearrangement of a 1D measure (grid measure or atoms)."""
    if isinstance(m, DiscreteMeasure):
        if m.grid.d != 1:
            raise GridError("quantile functions are defined in dimension 1 only")
        pos, mass = m.atoms()
        return quantile_from_atoms(pos[:, 0], mass)
    pos, mass = m.atoms()
    if pos.shape[1] != 1:
        raise GridError("quantile functions are defined in dimension 1 only")
    return quantile_from_atoms(pos[:, 0], mass)
