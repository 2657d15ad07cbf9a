"""Interaction potentials with the hat-gradient convention.

Every potential is even with ``W(0) = 0``.  Gradients are "hatted": the
gradient is extended by zero at the origin so that an atom never interacts
with itself.  All evaluations are vectorized over a trailing coordinate axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

KINDS = ("abs_scaled", "exp_pointy", "quad_linear", "half_abs", "quadratic_radial")

# integer codes understood by the compiled kernels
KIND_CODES = {"abs_scaled": 0, "exp_pointy": 1, "quad_linear": 2,
              "half_abs": 3, "quadratic_radial": 4}


class PotentialError(ValueError):
    pass


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x


@dataclass(frozen=True)
class Potential:
    """An interaction kernel ``W`` with its metadata.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS` or ``"custom"``.
    param : float
        The single shape parameter of the built-in kind (``c``, ``a`` or
        ``mu``); unused for parameter-free kinds.
    lam : float
        Convexity constant: ``W(x) - lam/2 |x|^2`` is convex.
    w_inf : float or None
        Global bound on ``|grad W|``; ``None`` when unbounded.
    radial : bool
        Whether ``W`` depends on ``|x|`` only.
    """

    kind: str
    param: float = 1.0
    lam: float = 0.0
    w_inf: Optional[float] = None
    radial: bool = True
    max_dim: Optional[int] = None
    value_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    grad_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    lipschitz_fn: Optional[Callable] = field(default=None, compare=False, repr=False)

    @property
    def code(self) -> int:
        """Kernel code for the compiled backend, ``-1`` for custom kinds."""
        return KIND_CODES.get(self.kind, -1)

    @property
    def bounded(self) -> bool:
        return self.w_inf is not None

    def _check_dim(self, d):
        if self.max_dim is not None and d > self.max_dim:
            raise PotentialError(f"potential {self.kind!r} is defined in dimension <= {self.max_dim}, got {d}")

    def value(self, x) -> np.ndarray:
        """``W`` at points ``x`` of shape ``(..., d)``."""
        x = _as_points(x)
        self._check_dim(x.shape[-1])
        if self.kind == "custom":
            return np.asarray(self.value_fn(x), dtype=float)
        r = np.sqrt(np.sum(x * x, axis=-1))
        c = self.param
        if self.kind == "abs_scaled":
            return c * r
        if self.kind == "half_abs":
            return 0.5 * r
        if self.kind == "exp_pointy":
            return 1.0 - np.exp(-c * r)
        if self.kind == "quad_linear":
            return np.where(r <= 1.0, 2.0 * r * r, 4.0 * r - 2.0)
        if self.kind == "quadratic_radial":
            return 0.5 * c * r * r
        raise PotentialError(f"unknown potential kind {self.kind!r}")

    def grad_hat(self, x) -> np.ndarray:
        """Gradient of ``W`` with the value zero at the origin.

        The origin is detected by exact component-wise equality.
        """
        x = _as_points(x)
        self._check_dim(x.shape[-1])
        if self.kind == "custom":
            g = np.array(self.grad_fn(x), dtype=float)
            g[np.all(x == 0.0, axis=-1)] = 0.0
            return g
        at_origin = np.all(x == 0.0, axis=-1)
        # scale by the max-norm so tiny |x| cannot underflow to r = 0
        s = np.max(np.abs(x), axis=-1)
        safe_s = np.where(at_origin, 1.0, s)
        u = x / safe_s[..., None]
        ru = np.sqrt(np.sum(u * u, axis=-1))
        r = s * ru
        safe_r = np.where(at_origin, 1.0, ru)
        c = self.param
        if self.kind == "quadratic_radial":
            return c * x
        if self.kind == "quad_linear":
            # 1D only: W' = 4x inside [-1, 1], 4 sign(x) outside
            return np.where(np.abs(x) <= 1.0, 4.0 * x, 4.0 * np.sign(x))
        if self.kind == "abs_scaled":
            mag = np.full_like(r, c)
        elif self.kind == "half_abs":
            mag = np.full_like(r, 0.5)
        elif self.kind == "exp_pointy":
            mag = c * np.exp(-c * r)
        else:
            raise PotentialError(f"unknown potential kind {self.kind!r}")
        scale = np.where(at_origin, 0.0, mag / safe_r)
        return u * scale[..., None]

    def local_lipschitz(self, radius: float, d: int = 1) -> float:
        """Supremum of ``|grad W|`` over the punctured sup-norm ball of given radius."""
        if not radius > 0:
            raise PotentialError("radius must be positive")
        self._check_dim(d)
        if self.kind == "custom":
            if self.lipschitz_fn is not None:
                return float(self.lipschitz_fn(radius, d))
            if self.w_inf is None:
                raise PotentialError("custom unbounded potential has no local Lipschitz bound")
            return float(self.w_inf)
        if self.kind == "abs_scaled":
            return float(self.param)
        if self.kind == "half_abs":
            return 0.5
        if self.kind == "exp_pointy":
            return float(self.param)
        if self.kind == "quad_linear":
            return 4.0 * min(radius, 1.0)
        if self.kind == "quadratic_radial":
            if math.isinf(radius):
                raise PotentialError("quadratic_radial has no finite bound on an unbounded ball")
            return self.param * radius * math.sqrt(d)
        raise PotentialError(f"unknown potential kind {self.kind!r}")


def abs_scaled(c: float = 1.0) -> Potential:
    """``W(x) = c |x|``."""
    if c < 0:
        raise PotentialError("abs_scaled requires c >= 0")
    return Potential("abs_scaled", float(c), lam=0.0, w_inf=float(c))


def half_abs() -> Potential:
    """``W(x) = |x| / 2``, the Burgers-Hopf kernel."""
    return Potential("half_abs", 0.5, lam=0.0, w_inf=0.5)


def exp_pointy(a: float) -> Potential:
    """``W(x) = 1 - exp(-a |x|)``; ``(-a^2)``-convex with gradient bound ``a``."""
    if a <= 0:
        raise PotentialError("exp_pointy requires a > 0")
    return Potential("exp_pointy", float(a), lam=-float(a) ** 2, w_inf=float(a))


def quad_linear() -> Potential:
    """``W(x) = 2x^2`` on ``|x| <= 1`` and ``4|x| - 2`` beyond (1D only)."""
    return Potential("quad_linear", 1.0, lam=0.0, w_inf=4.0, max_dim=1)


def quadratic_radial(mu: float) -> Potential:
    """``W(x) = mu/2 |x|^2``; ``mu``-convex and unbounded gradient."""
    if mu <= 0:
        raise PotentialError("quadratic_radial requires mu > 0")
    return Potential("quadratic_radial", float(mu), lam=float(mu), w_inf=None)


def custom(value, grad, lam, w_inf=None, radial=False, lipschitz=None) -> Potential:
    """A user-supplied potential; its metadata is trusted, not verified."""
    return Potential("custom", 0.0, lam=float(lam), w_inf=w_inf, radial=radial,
                     value_fn=value, grad_fn=grad, lipschitz_fn=lipschitz)


_PARAM_NAMES = {"abs_scaled": "c", "exp_pointy": "a", "quadratic_radial": "mu"}


def from_name(kind: str, **params) -> Potential:
    """Build a built-in potential from a name and keyword parameters.

    >>> from_name("exp_pointy", a=5).w_inf
    5.0
    """
    if kind not in KINDS:
        raise PotentialError(f"unknown potential kind {kind!r}; expected one of {KINDS}")
    name = _PARAM_NAMES.get(kind)
    extra = set(params) - ({name} if name else set())
    if extra:
        raise PotentialError(f"unexpected parameters for {kind}: {sorted(extra)}")
    if name is None:
        return {"quad_linear": quad_linear, "half_abs": half_abs}[kind]()
    if name not in params:
        if kind == "abs_scaled":
            return abs_scaled(1.0)
        raise PotentialError(f"potential {kind} requires parameter {name!r}")
    return {"abs_scaled": abs_scaled, "exp_pointy": exp_pointy,
            "quadratic_radial": quadratic_radial}[kind](float(params[name]))


def atoms_of(measure):
    """Return ``(positions (n, d), masses (n,))`` for any supported measure."""
    if hasattr(measure, "atoms"):
        return measure.atoms()
    pos, mass = measure
    pos = np.asarray(pos, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    return pos, np.asarray(mass, dtype=float)


def energy(measure, p: Potential) -> float:
    """Interaction energy ``sum_k sum_l m_k m_l W(x_k - x_l)``.

    No factor one half.  Grid measures use their exact offset-table
    convolution; other measures use the direct double sum in row blocks.
    """
    if hasattr(measure, "energy_table_sum"):
        return measure.energy_table_sum(p)
    pos, mass = atoms_of(measure)
    total = 0.0
    block = max(1, 2_000_000 // max(len(mass), 1))
    for start in range(0, len(mass), block):
        diff = pos[start:start + block, None, :] - pos[None, :, :]
        total += float(np.sum(mass[start:start + block, None] * p.value(diff) * mass[None, :]))
    return total
