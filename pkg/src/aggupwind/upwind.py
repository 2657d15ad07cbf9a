"""Node-collocated upwind scheme on Cartesian grids.

Velocities live on the same nodes as the masses.  One step moves the atom at
``x_L`` to ``x_L + dt a_L`` and splits it back onto the grid with the hat
interpolation weights ``alpha``; this push form is the production update and
the classical flux form is kept as an independent check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import (CartesianGrid, DiscreteMeasure, GridError, _tables, center_of_mass,
                   grid_sum, second_moment)
from .potential import Potential, energy


class SchemeError(RuntimeError):
    """Runtime failure of a scheme step (CFL violation, mass leaving the window)."""


class CFLError(SchemeError):
    pass


@dataclass
class VelocityField:
    """Velocity vectors on a set of cells of the grid window.

    ``values`` has shape ``grid.shape + (d,)``; only cells where ``mask`` is
    true were evaluated, the rest hold zeros.
    """
    grid: CartesianGrid
    values: np.ndarray
    mask: np.ndarray

    def at(self, J) -> np.ndarray:
        J = (J,) if np.isscalar(J) else tuple(J)
        k = tuple(j - a for j, a in zip(J, self.grid.lo))
        if not self.mask[k]:
            raise KeyError(f"velocity not evaluated at {J}")
        return self.values[k]


def _halo(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for ax in range(mask.ndim):
        n = mask.shape[ax]
        if n < 2:
            continue
        lead = [slice(None)] * mask.ndim
        trail = [slice(None)] * mask.ndim
        lead[ax], trail[ax] = slice(1, None), slice(None, -1)
        out[tuple(lead)] |= mask[tuple(trail)]
        out[tuple(trail)] |= mask[tuple(lead)]
    return out


def velocity(m: DiscreteMeasure, p: Potential, where: str = "closure") -> VelocityField:
    """``a_J = - sum_K rho_K grad_hat(x_J - x_K)``.

    ``where`` selects the evaluation cells: ``"support"``, ``"closure"``
    (support plus a one-cell halo per axis) or ``"window"``.
    """
    grid = m.grid
    support = m.weights != 0
    if where == "support":
        mask = support
    elif where == "closure":
        mask = _halo(support)
    elif where == "window":
        mask = np.ones(grid.shape, dtype=bool)
    else:
        raise ValueError(f"unknown evaluation set {where!r}")
    targets = np.flatnonzero(mask)
    vals = np.zeros(grid.shape + (grid.d,))
    if len(targets):
        out = grid_sum(grid, m.weights, _tables(grid, p, "velocity"), targets)
        flat = vals.reshape(-1, grid.d)
        flat[targets] = out.T
    return VelocityField(grid, vals, mask)


def cfl_margin(grid: CartesianGrid, dt: float, w_inf: float, norm: str = "l1") -> float:
    """``1/2 - w_inf * sum_i dt / dx_i``; the scheme requires a positive margin.

    ``norm="l2"`` uses ``w_inf * dt * |(1/dx_i)_i|_2`` instead, which still
    bounds ``sum_i |a_i| dt / dx_i`` because the velocity is bounded by
    ``w_inf`` in Euclidean norm.  Both coincide in 1D.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if norm == "l1":
        return 0.5 - w_inf * sum(dt / h for h in grid.dx)
    if norm == "l2":
        return 0.5 - w_inf * dt * math.sqrt(sum(1.0 / (h * h) for h in grid.dx))
    raise ValueError(f"unknown CFL norm {norm!r}")


def support_linf_diameter(m: DiscreteMeasure) -> float:
    pos, _ = m.atoms()
    if len(pos) == 0:
        return 0.0
    return float(np.max(pos.max(axis=0) - pos.min(axis=0)))


def effective_w_inf(m: DiscreteMeasure, p: Potential) -> float:
    """Gradient bound entering the CFL check for the current measure.

    Global ``w_inf`` for bounded potentials with ``lam <= 0``; otherwise the
    local bound over the sup-norm ball of radius ``diam + 2 dx`` is refreshed
    from the current support.
    """
    if p.bounded and p.lam <= 0:
        return float(p.w_inf)
    radius = support_linf_diameter(m) + 2.0 * m.grid.dx_max
    return p.local_lipschitz(radius, m.grid.d)


def weights(grid: CartesianGrid, y) -> dict:
    """Hat interpolation weights ``alpha_J(y)``.

    Returns the home cell of ``y`` (always present, possibly with weight 0)
    and every axis neighbour with a positive weight.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    J = grid.index_of(y)
    frac = [(y[i] - J[i] * grid.dx[i]) / grid.dx[i] for i in range(grid.d)]
    out = {J: 1.0 - sum(abs(f) for f in frac)}
    for i, f in enumerate(frac):
        if f != 0.0:
            K = list(J)
            K[i] += 1 if f > 0 else -1
            out[tuple(K)] = abs(f)
    return out


def displacement_weights(grid: CartesianGrid, L, shift) -> dict:
    """Weights ``alpha_J(x_L + shift)`` evaluated from the exact displacement.

    Valid when ``x_L + shift`` stays in ``C_L`` (strict 1/2-CFL).
    """
    L = tuple(L)
    frac = [shift[i] / grid.dx[i] for i in range(grid.d)]
    out = {L: 1.0 - sum(abs(f) for f in frac)}
    for i, f in enumerate(frac):
        if f != 0.0:
            K = list(L)
            K[i] += 1 if f > 0 else -1
            out[tuple(K)] = abs(f)
    return out


def transition_table(grid: CartesianGrid, a: VelocityField, dt: float, J) -> dict:
    """Closed-form ``alpha_J(x_L + dt a_L)`` over source cells ``L`` (nonzero entries)."""
    J = tuple(J)
    out = {}
    aJ = a.at(J) if a.mask[tuple(j - lo for j, lo in zip(J, grid.lo))] else None
    if aJ is not None:
        out[J] = 1.0 - sum(abs(aJ[i]) * (dt / grid.dx[i]) for i in range(grid.d))
    for i in range(grid.d):
        for sgn in (-1, 1):
            L = list(J)
            L[i] += sgn
            L = tuple(L)
            if not grid.contains(L):
                continue
            k = tuple(l - lo for l, lo in zip(L, grid.lo))
            if not a.mask[k]:
                continue
            ai = a.values[k][i]
            # L = J - e_i pushes with (a)^+, L = J + e_i with (a)^-
            part = max(ai, 0.0) if sgn < 0 else max(-ai, 0.0)
            val = (dt / grid.dx[i]) * part
            if val != 0.0:
                out[L] = val
    return out


def _shift(arr: np.ndarray, ax: int, by: int) -> np.ndarray:
    """``out[J] = arr[J - by e_ax]`` with zero fill."""
    out = np.zeros_like(arr)
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if by > 0:
        src[ax], dst[ax] = slice(None, -by), slice(by, None)
    else:
        src[ax], dst[ax] = slice(-by, None), slice(None, by)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _edge_outflow(arr: np.ndarray, ax: int, side: int) -> bool:
    sl = [slice(None)] * arr.ndim
    sl[ax] = -1 if side > 0 else 0
    return bool(np.any(arr[tuple(sl)] != 0))


def _fractions(m: DiscreteMeasure, a: np.ndarray, dt: float):
    grid = m.grid
    frac = np.stack([a[..., i] * (dt / grid.dx[i]) for i in range(grid.d)], axis=-1)
    stay = 1.0 - np.sum(np.abs(frac), axis=-1)
    # only cells carrying mass matter
    bad = (stay < 0) & (m.weights > 0)
    if np.any(bad):
        k = np.argwhere(bad)[0]
        J = tuple(int(v) for v in k + np.array(grid.lo))
        raise CFLError(f"negative interpolation weight {stay[tuple(k)]!r} at cell {J}")
    return frac, stay


def push_update(m: DiscreteMeasure, a: np.ndarray, dt: float) -> np.ndarray:
    """Scatter every source mass through ``alpha(x_L + dt a_L)`` (dense arrays)."""
    grid = m.grid
    rho = m.weights
    frac, stay = _fractions(m, a, dt)
    new = rho * stay
    for i in range(grid.d):
        up = rho * np.maximum(frac[..., i], 0.0)
        down = rho * np.maximum(-frac[..., i], 0.0)
        if _edge_outflow(up, i, +1) or _edge_outflow(down, i, -1):
            raise GridError(f"mass would leave the grid window along axis {i + 1}")
        new = new + _shift(up, i, +1) + _shift(down, i, -1)
    return new


def flux_update(m: DiscreteMeasure, a: np.ndarray, dt: float) -> np.ndarray:
    """Classical flux-difference form of the same scheme (reference path)."""
    grid = m.grid
    rho = m.weights
    new = rho.copy()
    for i in range(grid.d):
        ap = np.maximum(a[..., i], 0.0)
        am = np.maximum(-a[..., i], 0.0)
        r = dt / grid.dx[i]
        from_right = _shift(am * rho, i, -1)   # (a_{J+e_i})^- rho_{J+e_i}
        from_left = _shift(ap * rho, i, +1)    # (a_{J-e_i})^+ rho_{J-e_i}
        new = new - r * (ap * rho - from_right - from_left + am * rho)
    return new


@dataclass
class SchemeState:
    n: int
    t: float
    measure: DiscreteMeasure
    diagnostics: dict = field(default_factory=dict)


def diagnostics(m: DiscreteMeasure, p: Optional[Potential] = None, with_energy: bool = True) -> dict:
    com = center_of_mass(m)
    out = {"mass": m.mass(), "com": com, "second_moment": second_moment(m)}
    if with_energy and p is not None:
        out["energy"] = energy(m, p)
    return out


def initial_state(m: DiscreteMeasure, p: Optional[Potential] = None, with_energy: bool = True) -> SchemeState:
    return SchemeState(0, 0.0, m, diagnostics(m, p, with_energy))


def step(s: SchemeState, p: Potential, dt: float, *, cfl_norm: str = "l1",
         check_cfl: bool = True, with_energy: bool = True) -> SchemeState:
    """One push-form step of the upwind scheme."""
    m = s.measure
    if check_cfl:
        w = effective_w_inf(m, p)
        margin = cfl_margin(m.grid, dt, w, cfl_norm)
        if not margin > 0:
            raise CFLError(f"CFL margin {margin!r} <= 0 at step {s.n} (w_inf={w!r}, dt={dt!r})")
    a = velocity(m, p, where="support").values
    new = push_update(m, a, dt)
    nm = DiscreteMeasure(m.grid, new, check=False)
    return SchemeState(s.n + 1, (s.n + 1) * dt, nm, diagnostics(nm, p, with_energy))


@dataclass
class RunRecord:
    """Trajectory of a run: per-step diagnostics and, optionally, the measures."""
    dt: float
    t_final: float
    rows: list = field(default_factory=list)
    states: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    scheme: str = "upwind"

    @property
    def final(self):
        return self.states[-1] if self.states else None

    def csv_header(self, d: int) -> list:
        return ["n", "t", "mass"] + [f"com_{i + 1}" for i in range(d)] + ["second_moment", "energy"]

    def to_csv(self, path=None, d: Optional[int] = None) -> str:
        if d is None:
            d = len(self.rows[0]["com"]) if self.rows else 1
        lines = []
        for key in sorted(self.config):
            lines.append(f"# {key}={self.config[key]}")
        lines.append(f"# scheme={self.scheme}")
        lines.append(",".join(self.csv_header(d)))
        for r in self.rows:
            vals = [str(r["n"]), repr(r["t"]), repr(r["mass"])]
            vals += [repr(float(c)) for c in r["com"]]
            vals += [repr(r["second_moment"]), repr(r.get("energy", float("nan")))]
            lines.append(",".join(vals))
        text = "\n".join(lines) + "\n"
        if path is not None:
            from .io_utils import atomic_write
            atomic_write(path, text)
        return text


def n_steps(dt: float, t_final: float) -> int:
    if t_final <= 0:
        return 0
    return int(math.ceil(t_final / dt - 1e-9))


def run(initial: SchemeState, p: Potential, dt: float, t_final: float,
        observer: Optional[Callable] = None, *, keep_states: bool = False,
        step_fn: Optional[Callable] = None, cfl_norm: str = "l1",
        with_energy: bool = True, scheme: str = "upwind") -> RunRecord:
    """Iterate ``step`` up to ``ceil(t_final / dt)`` steps.

    ``observer(state)`` is called on the initial state and after each step.
    ``step_fn(state, p, dt)`` substitutes another scheme with the same contract.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    rec = RunRecord(dt=dt, t_final=t_final, scheme=scheme)
    s = initial
    if not s.diagnostics:
        s = SchemeState(s.n, s.t, s.measure, diagnostics(s.measure, p, with_energy))

    def record(state, wall):
        row = {"n": state.n, "t": state.t}
        row.update(state.diagnostics)
        rec.rows.append(row)
        rec.wall.append(wall)
        if keep_states:
            rec.states.append(state.measure)
        if observer is not None:
            observer(state)

    record(s, 0.0)
    for _ in range(n_steps(dt, t_final)):
        t0 = time.perf_counter()
        if step_fn is None:
            s = step(s, p, dt, cfl_norm=cfl_norm, with_energy=with_energy)
        else:
            s = step_fn(s, p, dt)
        record(s, time.perf_counter() - t0)
    if not keep_states:
        rec.states.append(s.measure)
    return rec


def second_moment_bound_constant(grid: CartesianGrid, w_inf: float) -> float:
    """A constant ``C`` with ``M2^n <= exp(C t^n) (M2^0 + C)`` for every run.

    From the one-step estimate
    ``M2^{n+1} <= (1 + dt) M2^n + dt (d w_inf^2 + w_inf sum_i dx_i)``.
    """
    return max(1.0, grid.d * w_inf ** 2 + w_inf * sum(grid.dx))


def check_second_moment_bound(rec: RunRecord, C: float) -> bool:
    m0 = rec.rows[0]["second_moment"]
    return all(r["second_moment"] <= math.exp(C * r["t"]) * (m0 + C) * (1 + 1e-12)
               for r in rec.rows)
