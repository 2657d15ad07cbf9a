"""Comparison schemes in 1D.

* ``interface_upwind_step``: classical finite-volume upwind with velocities
  at cell interfaces; freezes Dirac masses.
* ``energy_scheme_step``: interface velocities from difference quotients of
  ``W`` convolved with the density; energy non-increasing to first order.
* ``burgers_step``: the node-collocated upwind scheme for ``W = |x|/2``
  rewritten on ``u = 1/2 - cumulative mass``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CartesianGrid, DiscreteMeasure, GridError
from .potential import Potential
from .upwind import CFLError, SchemeState, cfl_margin, diagnostics


def _require_1d(m: DiscreteMeasure):
    if m.grid.d != 1:
        raise GridError("this scheme is one-dimensional")


def interface_flux_update(m: DiscreteMeasure, b: np.ndarray, dt: float) -> np.ndarray:
    """Upwind update from interface velocities.

    ``b[k]`` is the velocity at the interface between window cells ``k - 1``
    and ``k``; ``len(b) == n + 1`` covers both outer interfaces.
    """
    rho = m.weights
    dx = m.grid.dx[0]
    bp = np.maximum(b, 0.0)
    bm = np.maximum(-b, 0.0)
    if (bm[0] * rho[0]) != 0 or (bp[-1] * rho[-1]) != 0:
        raise GridError("mass would leave the grid window")
    right = b[1:]   # interface J + 1/2
    left = b[:-1]   # interface J - 1/2
    rho_next = np.concatenate([rho[1:], [0.0]])
    rho_prev = np.concatenate([[0.0], rho[:-1]])
    r = dt / dx
    new = rho - r * (np.maximum(right, 0.0) * rho - np.maximum(-right, 0.0) * rho_next
                     - np.maximum(left, 0.0) * rho_prev + np.maximum(-left, 0.0) * rho)
    if np.any(new < 0):
        k = int(np.argmin(new))
        raise CFLError(f"negative mass {new[k]!r} at cell {k + m.grid.lo[0]}")
    return new


def interface_velocity(m: DiscreteMeasure, p: Potential) -> np.ndarray:
    """``a_{i+1/2} = - sum_k rho_k grad_hat(x_{i+1/2} - x_k)`` for every window interface."""
    _require_1d(m)
    g = m.grid
    pos, mass = m.atoms()
    faces = (np.arange(g.lo[0], g.hi[0] + 2) - 0.5) * g.dx[0]
    diff = faces[:, None] - pos[None, :, 0]
    return -(p.grad_hat(diff[..., None])[..., 0] @ mass)


def interface_upwind_step(m: DiscreteMeasure, p: Potential, dt: float) -> DiscreteMeasure:
    """Finite-volume upwind step with interface velocities."""
    _require_1d(m)
    if p.w_inf is None or not cfl_margin(m.grid, dt, p.w_inf) > 0:
        raise CFLError("strict 1/2-CFL condition violated")
    new = interface_flux_update(m, interface_velocity(m, p), dt)
    return DiscreteMeasure(m.grid, new, check=False)


def difference_quotient_velocity(m: DiscreteMeasure, p: Potential) -> np.ndarray:
    """``a_{I+1/2} = -(1/dx) sum_J (W((I+1-J) dx) - W((I-J) dx)) rho_J`` per interface."""
    _require_1d(m)
    g = m.grid
    dx = g.dx[0]
    idx = np.arange(g.lo[0], g.hi[0] + 1)
    nz = m.weights != 0
    J = idx[nz]
    rho = m.weights[nz]
    # interface k sits between cells I = lo + k - 1 and I + 1
    I = np.arange(g.lo[0] - 1, g.hi[0] + 1)
    upper = p.value(((I[:, None] + 1 - J[None, :]) * dx)[..., None])
    lower = p.value(((I[:, None] - J[None, :]) * dx)[..., None])
    return -((upper - lower) @ rho) / dx


def energy_scheme_step(m: DiscreteMeasure, p: Potential, dt: float) -> DiscreteMeasure:
    """Upwind step with difference-quotient interface velocities."""
    _require_1d(m)
    if p.w_inf is None or not cfl_margin(m.grid, dt, p.w_inf) > 0:
        raise CFLError("strict 1/2-CFL condition violated")
    new = interface_flux_update(m, difference_quotient_velocity(m, p), dt)
    return DiscreteMeasure(m.grid, new, check=False)


def as_state_step(measure_step):
    """Adapt a measure-to-measure step to the ``run`` step contract."""
    def fn(s: SchemeState, p: Potential, dt: float) -> SchemeState:
        nm = measure_step(s.measure, p, dt)
        return SchemeState(s.n + 1, (s.n + 1) * dt, nm, diagnostics(nm, p))
    return fn


# -- Burgers-Hopf ---------------------------------------------------------


@dataclass
class BurgersState:
    """Values ``u_i`` on the window cells of a 1D grid.

    Outside the window ``u`` is ``1/2`` on the left and ``-1/2`` on the right.
    """
    grid: CartesianGrid
    u: np.ndarray
    n: int = 0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != self.grid.shape:
            raise GridError("one value per window cell expected")


def u_from_rho(m: DiscreteMeasure) -> BurgersState:
    """``u_i = 1/2 - sum_{k <= i} rho_k``."""
    _require_1d(m)
    return BurgersState(m.grid, 0.5 - np.cumsum(m.weights))


def burgers_step(s: BurgersState, dt: float) -> BurgersState:
    """One step of the upwind scheme written on ``u``.

    ``u_i - dt/(2 dx) [ (u_{i+1}^2 - u_i^2)^+ - (u_i^2 - u_{i-1}^2)^- ]``, the
    exact image of the node-collocated upwind step for ``W = |x|/2`` under
    ``u_from_rho``.  Requires ``dt < dx``.
    """
    dx = s.grid.dx[0]
    if not dt < dx:
        raise CFLError("Burgers CFL condition dt < dx violated")
    u = s.u
    left = np.concatenate([[0.5], u[:-1]])
    right = np.concatenate([u[1:], [-0.5]])
    up = right * right - u * u
    down = u * u - left * left
    new = u - dt / (2.0 * dx) * (np.maximum(up, 0.0) - np.maximum(-down, 0.0))
    return BurgersState(s.grid, new, s.n + 1)
