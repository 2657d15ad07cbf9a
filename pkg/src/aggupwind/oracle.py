"""Reference solutions for atomic data.

Closed forms for the two-atom problems and a sticky-particle integrator:
explicit Euler on the hatted interaction velocity, merging particles that
meet or pass each other at their common center of mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .potential import Potential

MERGE_DISTANCE = 1e-10


@dataclass
class ParticleSystem:
    positions: np.ndarray
    masses: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        self.positions = pos
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if len(self.masses) != len(pos):
            raise ValueError("one mass per particle expected")
        if np.any(self.masses <= 0):
            raise ValueError("particle masses must be positive")

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def atoms(self):
        return self.positions, self.masses

    def center_of_mass(self) -> np.ndarray:
        return self.masses @ self.positions / self.masses.sum()

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(self.positions.copy(), self.masses.copy(), self.time)

    def to_csv_rows(self) -> list:
        return [[repr(self.time), str(k)] + [repr(float(v)) for v in x] + [repr(float(m))]
                for k, (x, m) in enumerate(zip(self.positions, self.masses))]


def exact_two_dirac_quadlinear(t: float) -> ParticleSystem:
    """Atoms ``+-exp(-4t)/4`` of mass 1/2 under the quadratic-linear kernel."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    x0 = 0.25 * math.exp(-4.0 * t)
    return ParticleSystem(np.array([-x0, x0]), np.array([0.5, 0.5]), t)


def exact_two_dirac_newtonian(t: float, x1_0: float = -0.25, x2_0: float = 0.25) -> ParticleSystem:
    """Two half masses under ``W = |x|``: approach at speed 1/2 each, then stick."""
    if not x1_0 < x2_0:
        raise ValueError("need x1_0 < x2_0")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t >= x2_0 - x1_0:
        return ParticleSystem(np.array([0.5 * (x1_0 + x2_0)]), np.array([1.0]), t)
    return ParticleSystem(np.array([x1_0 + t / 2, x2_0 - t / 2]), np.array([0.5, 0.5]), t)


def particle_velocity(pos: np.ndarray, masses: np.ndarray, p: Potential) -> np.ndarray:
    if p.code >= 0:
        pos = np.ascontiguousarray(pos)
        return kernels.pair_velocity(pos, pos, np.ascontiguousarray(masses), p.code, p.param)
    diff = pos[:, None, :] - pos[None, :, :]
    return -np.einsum("l,kli->ki", masses, p.grad_hat(diff))


def _merge_1d(pos: np.ndarray, masses: np.ndarray):
    """Merge runs of neighbours (in the carried order) that met or crossed."""
    while len(masses) > 1:
        gap = pos[1:, 0] - pos[:-1, 0]
        hit = np.flatnonzero(gap <= MERGE_DISTANCE)
        if len(hit) == 0:
            break
        k = hit[0]
        # extend to the whole run of touching neighbours
        end = k + 1
        while end < len(masses) - 1 and gap[end] <= MERGE_DISTANCE:
            end += 1
        group = slice(k, end + 1)
        m = masses[group].sum()
        x = masses[group] @ pos[group] / m
        pos = np.concatenate([pos[:k], x[None], pos[end + 1:]])
        masses = np.concatenate([masses[:k], [m], masses[end + 1:]])
    return pos, masses


def _merge_nd(pos: np.ndarray, masses: np.ndarray, old: Optional[np.ndarray] = None):
    """Merge pairs that met or passed each other, lowest index pair first.

    A pair has passed when its separation vector turned by 90 degrees or more
    during the substep from ``old`` to ``pos``, the analogue of crossing in 1D.
    """
    if old is None:
        old = pos
    while len(masses) > 1:
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=-1))
        prev = old[:, None, :] - old[None, :, :]
        passed = (diff * prev).sum(axis=-1) <= 0.0
        iu = np.triu_indices(len(masses), 1)
        close = np.flatnonzero((dist[iu] <= MERGE_DISTANCE) | passed[iu])
        if len(close) == 0:
            break
        i, j = iu[0][close[0]], iu[1][close[0]]
        m = masses[i] + masses[j]
        keep = np.ones(len(masses), dtype=bool)
        keep[j] = False
        pos, old, masses = pos.copy(), old.copy(), masses.copy()
        pos[i] = (masses[i] * pos[i] + masses[j] * pos[j]) / m
        old[i] = (masses[i] * old[i] + masses[j] * old[j]) / m
        masses[i] = m
        pos, old, masses = pos[keep], old[keep], masses[keep]
    return pos, masses


def sticky_integrate(ps: ParticleSystem, p: Potential, t_target: float,
                     dt_fine: float = 1e-5, observer: Optional[Callable] = None) -> ParticleSystem:
    """Advance a particle system from ``ps.time`` to ``t_target``.

    ``observer(system)`` is called after every substep.  In 1D particles are
    kept in increasing order; any pair that meets or crosses is merged.
    """
    if not dt_fine > 0:
        raise ValueError("dt_fine must be positive")
    pos = ps.positions.copy()
    masses = ps.masses.copy()
    one_d = pos.shape[1] == 1
    if one_d:
        order = np.argsort(pos[:, 0], kind="stable")
        pos, masses = pos[order], masses[order]
        pos, masses = _merge_1d(pos, masses)
    else:
        pos, masses = _merge_nd(pos, masses)
    t0 = ps.time
    n_sub = max(0, int(math.ceil((t_target - t0) / dt_fine - 1e-9)))
    for k in range(1, n_sub + 1):
        t_prev = t0 + (k - 1) * dt_fine
        t_next = min(t0 + k * dt_fine, t_target)
        h = t_next - t_prev
        if len(masses) > 1:
            prev = pos
            pos = pos + h * particle_velocity(pos, masses, p)
            if one_d:
                pos, masses = _merge_1d(pos, masses)
            else:
                pos, masses = _merge_nd(pos, masses, prev)
        if observer is not None:
            observer(ParticleSystem(pos, masses, t_next))
    return ParticleSystem(pos, masses, max(t_target, t0))


def trajectory_csv(systems, path=None) -> str:
    """CSV dump ``t,k,x1..xd,mass`` of a sequence of particle systems."""
    systems = list(systems)
    d = systems[0].d if systems else 1
    lines = [",".join(["t", "k"] + [f"x{i + 1}" for i in range(d)] + ["mass"])]
    for ps in systems:
        lines += [",".join(row) for row in ps.to_csv_rows()]
    text = "\n".join(lines) + "\n"
    if path is not None:
        from .io_utils import atomic_write
        atomic_write(path, text)
    return text
