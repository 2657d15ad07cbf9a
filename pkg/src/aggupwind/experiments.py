"""Declarative experiments: config parsing, scheme dispatch and outputs.

Configs are flat ``key = value`` files with dotted keys, for example::

    dimension = 1
    domain.1 = -0.5, 0.5
    n_cells = 800
    cfl_ratio = 0.45
    t_final = 0.5
    potential.kind = quad_linear
    initial.kind = atoms
    initial.positions = -0.25; 0.25
    initial.masses = 0.5, 0.5
    scheme = upwind
    reference = two_dirac_quadlinear
    output.error_csv = out/error.csv
"""

from __future__ import annotations

import math
import os
import re
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import alt_schemes, grid as gm, metrics, oracle, simplicial, upwind
from .io_utils import atomic_write
from .potential import Potential, PotentialError, energy, from_name


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


SCHEMES = ("upwind", "interface", "energy", "simplicial")
REFERENCES = ("none", "two_dirac_quadlinear", "two_dirac_newtonian", "sticky")
DEFAULT_CFL_RATIO = 0.45


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def load_config(path) -> "ExperimentConfig":
    with open(path) as fh:
        raw = parse_config_text(fh.read())
    cfg = ExperimentConfig.from_dict(raw)
    cfg.base_dir = os.path.dirname(os.path.abspath(path))
    return cfg


def _floats(key, value) -> list:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {value!r}") from None


def _points(key, value) -> list:
    return [tuple(_floats(key, chunk)) for chunk in value.split(";") if chunk.strip()]


def _float(raw, key, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(f"{key}: missing")
        return default
    try:
        return float(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw[key]!r}") from None


def _gaussians(centers, amplitudes, sharpness):
    centers = np.asarray(centers, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=float)

    def f(x):
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        val = np.zeros(len(x))
        for c, a in zip(centers, amplitudes):
            val += a * np.exp(-sharpness * np.sum((x - c) ** 2, axis=1))
        return val
    return f


@dataclass
class ExperimentConfig:
    raw: dict
    dimension: int
    scheme: str
    potential: Potential
    datum: object
    t_final: float
    domain: list = field(default_factory=list)
    n_cells: list = field(default_factory=list)
    mesh_path: Optional[str] = None
    cfl_ratio: Optional[float] = None
    dt: Optional[float] = None
    cfl_norm: str = "l1"
    reference: str = "none"
    dt_fine: float = 1e-5
    with_energy: bool = True
    outputs: dict = field(default_factory=dict)
    dump_times: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    base_dir: str = "."

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            dimension = int(raw.get("dimension", "1"))
        except ValueError:
            raise ConfigError(f"dimension: expected an integer, got {raw['dimension']!r}") from None
        if dimension < 1:
            raise ConfigError("dimension: must be >= 1")
        scheme = raw.get("scheme", "upwind")
        if scheme not in SCHEMES:
            raise ConfigError(f"scheme: expected one of {SCHEMES}, got {scheme!r}")

        kind = raw.get("potential.kind")
        if kind is None:
            raise ConfigError("potential.kind: missing")
        params = {k.split(".", 1)[1]: float(v) for k, v in raw.items()
                  if k.startswith("potential.") and k != "potential.kind"}
        try:
            pot = from_name(kind, **params)
        except (PotentialError, ValueError) as exc:
            raise ConfigError(f"potential: {exc}") from None

        datum = cls._parse_datum(raw, dimension)
        t_final = _float(raw, "t_final")
        if t_final < 0:
            raise ConfigError("t_final: must be >= 0")

        cfg = cls(raw=raw, dimension=dimension, scheme=scheme, potential=pot, datum=datum, t_final=t_final)
        if scheme == "simplicial":
            if dimension != 2:
                raise ConfigError("scheme: simplicial requires dimension = 2")
            cfg.mesh_path = raw.get("mesh")
            if cfg.mesh_path is None and "n_cells" not in raw:
                raise ConfigError("mesh: give a mesh file or n_cells for the structured mesh")
        else:
            if scheme in ("interface", "energy") and dimension != 1:
                raise ConfigError(f"scheme: {scheme} is one-dimensional")
        if "n_cells" in raw:
            cells = [int(v) for v in _floats("n_cells", raw["n_cells"])]
            if len(cells) == 1:
                cells = cells * dimension
            if len(cells) != dimension or min(cells) < 1:
                raise ConfigError(f"n_cells: expected {dimension} positive integers")
            cfg.n_cells = cells
        elif scheme != "simplicial":
            raise ConfigError("n_cells: missing")
        for i in range(dimension):
            key = f"domain.{i + 1}"
            if key not in raw:
                if scheme == "simplicial" and cfg.mesh_path:
                    continue
                raise ConfigError(f"{key}: missing")
            ab = _floats(key, raw[key])
            if len(ab) != 2 or not ab[1] > ab[0]:
                raise ConfigError(f"{key}: expected 'a, b' with a < b")
            cfg.domain.append(tuple(ab))

        if "dt" in raw and "cfl_ratio" in raw:
            raise ConfigError("dt: give either dt or cfl_ratio, not both")
        if "dt" in raw:
            cfg.dt = _float(raw, "dt")
            if not cfg.dt > 0:
                raise ConfigError("dt: must be positive")
        else:
            cfg.cfl_ratio = _float(raw, "cfl_ratio", DEFAULT_CFL_RATIO)
            if scheme != "simplicial" and not (0 < cfg.cfl_ratio < 0.5):
                raise ConfigError(f"cfl_ratio: must lie in (0, 1/2), got {cfg.cfl_ratio}")
            if scheme == "simplicial" and not (0 < cfg.cfl_ratio <= 1):
                raise ConfigError("cfl_ratio: must lie in (0, 1] for the simplicial scheme")
        cfg.cfl_norm = raw.get("cfl_norm", "l1")
        if cfg.cfl_norm not in ("l1", "l2"):
            raise ConfigError("cfl_norm: expected l1 or l2")

        flag = raw.get("diagnostics.energy", "true").lower()
        if flag not in ("true", "false"):
            raise ConfigError("diagnostics.energy: expected true or false")
        cfg.with_energy = flag == "true"

        cfg.reference = raw.get("reference", "none")
        if cfg.reference not in REFERENCES:
            raise ConfigError(f"reference: expected one of {REFERENCES}")
        cfg.dt_fine = _float(raw, "reference.dt_fine", 1e-5)
        if cfg.reference != "none":
            if dimension != 1:
                raise ConfigError("reference: error curves are only available in dimension 1")
            if cfg.reference == "sticky" and not isinstance(datum, gm.Atoms):
                raise ConfigError("reference: sticky reference needs atomic initial data")
            if cfg.reference == "two_dirac_newtonian" and (
                    not isinstance(datum, gm.Atoms) or len(datum.positions) != 2):
                raise ConfigError("reference: two_dirac_newtonian needs two initial atoms")

        for key, value in raw.items():
            if key.startswith("output.") and key != "output.field_dump.times":
                kind = key.split(".", 1)[1]
                if kind not in ("run_csv", "field_dump", "error_csv", "rate_csv", "particles_csv"):
                    raise ConfigError(f"{key}: unknown output kind")
                cfg.outputs[kind] = value
        if "output.field_dump.times" in raw:
            cfg.dump_times = _floats("output.field_dump.times", raw["output.field_dump.times"])
        if "error_csv" in cfg.outputs and cfg.reference == "none":
            raise ConfigError("output.error_csv: requires a reference")
        if "particles_csv" in cfg.outputs and cfg.reference == "none":
            raise ConfigError("output.particles_csv: requires a reference")
        if "study.levels" in raw:
            cfg.levels = [int(v) for v in _floats("study.levels", raw["study.levels"])]
        return cfg

    @staticmethod
    def _parse_datum(raw, dimension):
        kind = raw.get("initial.kind")
        if kind == "atoms":
            pos = _points("initial.positions", raw.get("initial.positions", ""))
            if not pos or any(len(x) != dimension for x in pos):
                raise ConfigError(f"initial.positions: expected ';'-separated points of dimension {dimension}")
            masses = _floats("initial.masses", raw["initial.masses"]) if "initial.masses" in raw \
                else [1.0 / len(pos)] * len(pos)
            if len(masses) != len(pos) or min(masses) <= 0:
                raise ConfigError("initial.masses: one positive mass per atom")
            total = sum(masses)
            return gm.Atoms(tuple(pos), tuple(m / total for m in masses))
        if kind == "gaussians":
            centers = _points("initial.centers", raw.get("initial.centers", ""))
            if not centers or any(len(c) != dimension for c in centers):
                raise ConfigError("initial.centers: expected ';'-separated points")
            amps = _floats("initial.amplitudes", raw["initial.amplitudes"]) if "initial.amplitudes" in raw \
                else [1.0] * len(centers)
            if len(amps) != len(centers):
                raise ConfigError("initial.amplitudes: one amplitude per center")
            sharp = _float(raw, "initial.sharpness")
            return gm.Density(_gaussians(centers, amps, sharp))
        if kind == "indicator_box_difference":
            outer = _points("initial.outer", raw.get("initial.outer", ""))
            inner = _points("initial.inner", raw.get("initial.inner", ""))
            if len(outer) != dimension or len(inner) != dimension:
                raise ConfigError("initial.outer/inner: one 'a, b' interval per axis, ';'-separated")
            return gm.IndicatorBoxDifference(tuple(outer), tuple(inner), _float(raw, "initial.height", 1.0))
        raise ConfigError(f"initial.kind: expected atoms, gaussians or indicator_box_difference, got {kind!r}")

    def echo(self) -> dict:
        return dict(sorted(self.raw.items()))

    def grid(self, n_cells=None) -> gm.CartesianGrid:
        cells = self.n_cells if n_cells is None else [n_cells] * self.dimension
        return gm.CartesianGrid.from_domain(self.domain, cells)

    def mesh(self) -> simplicial.TriangularMesh:
        if self.mesh_path:
            path = self.mesh_path if os.path.isabs(self.mesh_path) else os.path.join(self.base_dir, self.mesh_path)
            return simplicial.read_mesh(path)
        return simplicial.structured_mesh(self.domain, self.n_cells)

    def time_step(self, grid: gm.CartesianGrid, m0: gm.DiscreteMeasure) -> float:
        """Explicit ``dt`` or the one matching ``cfl_ratio``; validates the CFL ratio."""
        w = upwind.effective_w_inf(m0, self.potential)
        if self.cfl_norm == "l1":
            per_dt = w * sum(1.0 / h for h in grid.dx)
        else:
            per_dt = w * math.sqrt(sum(1.0 / (h * h) for h in grid.dx))
        if self.dt is None:
            return self.cfl_ratio / per_dt
        if not self.dt * per_dt < 0.5:
            raise ConfigError(f"dt: CFL ratio {self.dt * per_dt:.6g} is not < 1/2 ({self.cfl_norm} norm)")
        return self.dt


def resolve(cfg: ExperimentConfig, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(cfg.base_dir, path)


def reference_function(cfg: ExperimentConfig):
    if cfg.reference == "two_dirac_quadlinear":
        return oracle.exact_two_dirac_quadlinear
    if cfg.reference == "two_dirac_newtonian":
        (a,), (b,) = sorted(cfg.datum.positions)
        return lambda t: oracle.exact_two_dirac_newtonian(t, a, b)
    if cfg.reference == "sticky":
        state = {"ps": oracle.ParticleSystem(np.array(cfg.datum.positions), np.array(cfg.datum.masses))}

        def ref(t):
            # times are requested in increasing order
            state["ps"] = oracle.sticky_integrate(state["ps"], cfg.potential, t, cfg.dt_fine)
            return state["ps"]
        return ref
    return None


def _dump_path(template: str, n: int, t: float) -> str:
    if "{" in template:
        return template.format(n=n, t=f"{t:.6g}")
    root, ext = os.path.splitext(template)
    return f"{root}_n{n}{ext or '.csv'}"


def _gnuplot_script(paths: list, d: int) -> str:
    lines = ["set datafile separator ','"]
    if d == 2:
        lines += ["set view map", "set size square", "unset key"]
        for p in paths:
            lines.append(f"splot '{os.path.basename(p)}' every ::1 using 3:4:5 with points pointtype 5 pointsize 0.5 palette")
            lines.append("pause -1")
    else:
        lines += ["unset key"]
        for p in paths:
            lines.append(f"plot '{os.path.basename(p)}' every ::1 using 2:3 with impulses")
            lines.append("pause -1")
    return "\n".join(lines) + "\n"


def _run_grid(cfg: ExperimentConfig, n_cells=None, keep_states=False, observer=None):
    g = cfg.grid(n_cells)
    m0 = gm.discretize(cfg.datum, g)
    dt = cfg.time_step(g, m0)
    step_fn = {"upwind": None,
               "interface": alt_schemes.as_state_step(alt_schemes.interface_upwind_step),
               "energy": alt_schemes.as_state_step(alt_schemes.energy_scheme_step)}[cfg.scheme]
    rec = upwind.run(upwind.initial_state(m0, cfg.potential), cfg.potential, dt, cfg.t_final,
                     observer=observer, keep_states=keep_states, step_fn=step_fn,
                     cfl_norm=cfg.cfl_norm, with_energy=cfg.with_energy, scheme=cfg.scheme)
    rec.config = cfg.echo()
    return rec


def _run_simplicial(cfg: ExperimentConfig, observer=None):
    mesh = cfg.mesh()
    m = simplicial.discretize_on_mesh(cfg.datum, mesh)
    p = cfg.potential
    if cfg.dt is not None:
        dt = cfg.dt
    else:
        if not p.bounded:
            raise ConfigError("cfl_ratio: unbounded potentials need an explicit dt on meshes")
        dt = cfg.cfl_ratio * mesh.hbar / p.w_inf
    if p.bounded and p.w_inf * dt > mesh.hbar:
        raise ConfigError(f"dt: w_inf * dt = {p.w_inf * dt:.6g} exceeds hbar = {mesh.hbar:.6g}")
    rec = upwind.RunRecord(dt=dt, t_final=cfg.t_final, scheme="simplicial", config=cfg.echo())

    def record(n, m, wall):
        rec.rows.append({"n": n, "t": n * dt, "mass": m.mass(), "com": m.center_of_mass(),
                         "second_moment": m.second_moment(), "energy": energy(m, p) if cfg.with_energy else float("nan")})
        rec.wall.append(wall)
        if observer is not None:
            observer(n, m)

    record(0, m, 0.0)
    for n in range(1, upwind.n_steps(dt, cfg.t_final) + 1):
        t0 = time.perf_counter()
        m = simplicial.tri_step(m, mesh, p, dt)
        record(n, m, time.perf_counter() - t0)
    rec.states.append(m)
    return rec


def _error_curves(rec, cfg, particles_path=None):
    """W2 and W1 curves against the configured reference, evaluated once per time."""
    ref = reference_function(cfg)
    cache = {}

    def cached(t):
        if t not in cache:
            cache[t] = ref(t)
        return cache[t]
    curves = (metrics.error_vs_reference(rec, cached, "W2"),
              metrics.error_vs_reference(rec, cached, "W1"))
    if particles_path is not None:
        oracle.trajectory_csv(cache.values(), particles_path)
    return curves


def run_experiment(cfg: ExperimentConfig) -> upwind.RunRecord:
    """Run one experiment and write every requested output."""
    dumps = []
    wanted = {}

    if cfg.scheme == "simplicial":
        rec = _run_simplicial(cfg)
    else:
        g = cfg.grid()
        m0 = gm.discretize(cfg.datum, g)
        dt = cfg.time_step(g, m0)
        if "field_dump" in cfg.outputs:
            for tau in cfg.dump_times:
                wanted.setdefault(int(round(tau / dt)), tau)
        template = resolve(cfg, cfg.outputs["field_dump"]) if "field_dump" in cfg.outputs else None

        def observer(state):
            if state.n in wanted:
                path = _dump_path(template, state.n, state.t)
                state.measure.to_csv(path)
                dumps.append(path)

        rec = _run_grid(cfg, keep_states=cfg.reference != "none", observer=observer if wanted else None)

    if cfg.reference != "none":
        ppath = resolve(cfg, cfg.outputs["particles_csv"]) if "particles_csv" in cfg.outputs else None
        rec.error, rec.error_w1 = _error_curves(rec, cfg, ppath)
        if "error_csv" in cfg.outputs:
            lines = [f"# {k}={v}" for k, v in cfg.echo().items()]
            lines.append("n,t,e_w2,e_w1")
            for n, t, e2, e1 in zip(rec.error.n, rec.error.t, rec.error.e, rec.error_w1.e):
                lines.append(f"{n},{t!r},{e2!r},{e1!r}")
            atomic_write(resolve(cfg, cfg.outputs["error_csv"]), "\n".join(lines) + "\n")
    if "run_csv" in cfg.outputs:
        rec.to_csv(resolve(cfg, cfg.outputs["run_csv"]), d=cfg.dimension)
    if dumps:
        root = os.path.splitext(resolve(cfg, cfg.outputs["field_dump"]))[0]
        root = re.sub(r"_?\{[^}]*\}", "", root)
        atomic_write(root + ".gp", _gnuplot_script(dumps, cfg.dimension))
    rec.dumps = dumps
    return rec


@dataclass
class StudyResult:
    fit: metrics.RateFit
    rows: list


def convergence_study(base: ExperimentConfig, levels=None, errors=None) -> StudyResult:
    """Refine the grid at fixed CFL ratio and fit the order of ``e_max`` (W2).

    ``errors`` optionally maps ``n_cells -> (e_max_w2, e_max_w1)`` to bypass
    the runs (synthetic studies).
    """
    levels = list(levels or base.levels)
    if len(levels) < 3:
        raise ConfigError("study.levels: at least three levels are required")
    if base.dimension != 1 or base.reference == "none":
        raise ConfigError("reference: a 1D reference solution is required for a study")
    if base.dt is not None:
        raise ConfigError("dt: a study holds cfl_ratio fixed; give cfl_ratio instead of dt")
    rows = []
    pairs = []
    for n in levels:
        g = base.grid(n)
        if errors is not None:
            e2, e1 = errors[n]
            dt = base.time_step(g, gm.discretize(base.datum, g))
        else:
            rec = _run_grid(base, n_cells=n, keep_states=True)
            dt = rec.dt
            c2, c1 = _error_curves(rec, base)
            e2, e1 = c2.e_max, c1.e_max
        pairs.append((g.dx_max, e2))
        if len(pairs) >= 2:
            lp = np.log(np.array(pairs))
            running = float(np.polyfit(lp[:, 0], lp[:, 1], 1)[0])
        else:
            running = float("nan")
        rows.append({"n_cells": n, "dx": g.dx_max, "dt": dt, "e_max_w2": e2, "e_max_w1": e1,
                     "slope_running": running})
    fit = metrics.fit_rate(pairs)
    if "rate_csv" in base.outputs:
        lines = [f"# {k}={v}" for k, v in base.echo().items()]
        lines.append("n_cells,dx,dt,e_max_w2,e_max_w1,slope_running")
        for r in rows:
            lines.append(f"{r['n_cells']},{r['dx']!r},{r['dt']!r},{r['e_max_w2']!r},{r['e_max_w1']!r},{r['slope_running']!r}")
        atomic_write(resolve(base, base.outputs["rate_csv"]), "\n".join(lines) + "\n")
    return StudyResult(fit, rows)


# -- canned checks ---------------------------------------------------------


def counterexample_setup(p: float):
    """Three-atom 2D datum with unit cells and ``W = |x|``."""
    from .potential import abs_scaled
    g = gm.CartesianGrid((1.0, 1.0), (-2, -2), (3, 3))
    m = gm.DiscreteMeasure.from_dict(g, {(0, 0): 1 - p, (1, 0): p / 2, (0, 1): p / 2})
    return g, m, abs_scaled(1.0)


def energy_counterexample(p: float, dts) -> dict:
    """Energy change after one upwind step and its extrapolated ``dt`` coefficient.

    Richardson extrapolation of ``(E(rho^1) - E(rho^0)) / dt`` on step sizes
    halving from one to the next.
    """
    dts = sorted((float(h) for h in dts), reverse=True)
    if len(dts) < 2:
        raise ValueError("need at least two time steps")
    for a, b in zip(dts, dts[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-12):
            raise ValueError("time steps must halve successively")
    g, m, W = counterexample_setup(p)
    e0 = energy(m, W)
    increments, masses = [], []
    for h in dts:
        s1 = upwind.step(upwind.initial_state(m, W), W, h)
        increments.append(energy(s1.measure, W) - e0)
        masses.append(s1.measure.to_dict())
    table = [inc / h for inc, h in zip(increments, dts)]
    # Richardson: each column removes the next power of dt
    while len(table) > 1:
        order = len(dts) - len(table) + 1
        f = 2.0 ** order
        table = [(f * b - a) / (f - 1) for a, b in zip(table, table[1:])]
    closed = (math.sqrt(2) - 1) * p * p * (2 * p - 1)
    return {"p": p, "dts": dts, "e0": e0, "increments": increments, "masses": masses,
            "coefficient": table[0], "closed_form": closed}


def burgers_check(cfg: ExperimentConfig, n_steps: Optional[int] = None) -> float:
    """Largest cell-wise gap between ``u_from_rho`` of the upwind run and the Burgers run."""
    if cfg.dimension != 1 or cfg.potential.kind != "half_abs":
        raise ConfigError("potential.kind: burgers-check needs half_abs in dimension 1")
    g = cfg.grid()
    m = gm.discretize(cfg.datum, g)
    dt = cfg.time_step(g, m)
    steps = upwind.n_steps(dt, cfg.t_final) if n_steps is None else n_steps
    s = upwind.initial_state(m, cfg.potential, with_energy=False)
    u = alt_schemes.u_from_rho(m)
    worst = 0.0
    for _ in range(steps):
        s = upwind.step(s, cfg.potential, dt, with_energy=False)
        u = alt_schemes.burgers_step(u, dt)
        worst = max(worst, float(np.max(np.abs(alt_schemes.u_from_rho(s.measure).u - u.u))))
    return worst
