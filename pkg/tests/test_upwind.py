import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggupwind import grid as gm, upwind as U
from aggupwind.potential import abs_scaled, custom, exp_pointy, half_abs

SQ2 = math.sqrt(2.0)


def two_atoms(n=200, lo=-0.5, hi=0.5):
    g = gm.CartesianGrid.from_domain([(lo, hi)], [n])
    return gm.discretize(gm.Atoms(((-0.25,), (0.25,)), (0.5, 0.5)), g)


def counterexample(p):
    g = gm.CartesianGrid((1.0, 1.0), (-2, -2), (3, 3))
    return gm.DiscreteMeasure.from_dict(g, {(0, 0): 1 - p, (1, 0): p / 2, (0, 1): p / 2})


def test_velocity_single_atom_is_zero():
    g = gm.CartesianGrid((0.1,), (-5,), (5,))
    m = gm.DiscreteMeasure.from_dict(g, {(2,): 1.0})
    assert U.velocity(m, abs_scaled(1)).at(2)[0] == 0.0


def test_velocity_two_atoms_newtonian():
    m = two_atoms()
    a = U.velocity(m, abs_scaled(1), where="window")
    assert a.at(-50)[0] == 0.5 and a.at(50)[0] == -0.5
    assert a.at(-60)[0] == 1.0 and a.at(0)[0] == 0.0 and a.at(70)[0] == -1.0


def test_velocity_counterexample():
    p = 0.75
    a = U.velocity(counterexample(p), abs_scaled(1))
    np.testing.assert_allclose(a.at((0, 0)), [p / 2, p / 2], atol=1e-15)
    np.testing.assert_allclose(a.at((1, 0)), [-(1 - p) - p / (2 * SQ2), p / (2 * SQ2)], atol=1e-15)
    np.testing.assert_allclose(a.at((0, 1)), [p / (2 * SQ2), -(1 - p) - p / (2 * SQ2)], atol=1e-15)


def test_velocity_closure_covers_halo():
    m = two_atoms()
    a = U.velocity(m, abs_scaled(1))
    assert a.mask.sum() == 6
    with pytest.raises(KeyError):
        a.at(0)


def test_cfl_margin_examples():
    g1 = gm.CartesianGrid((0.01,), (0,), (1,))
    assert U.cfl_margin(g1, 0.0025, 1.0) == pytest.approx(0.25, abs=1e-15)
    assert U.cfl_margin(g1, 0.005, 1.0) == 0.0
    h = 0.02
    g2 = gm.CartesianGrid((h, h), (0, 0), (1, 1))
    assert U.cfl_margin(g2, h / 8, 1.0) == pytest.approx(0.25, abs=1e-15)
    assert U.cfl_margin(g2, h / 8, 1.0, norm="l2") > U.cfl_margin(g2, h / 8, 1.0)


def test_step_rejects_cfl_boundary():
    m = two_atoms()
    with pytest.raises(U.CFLError):
        U.step(U.initial_state(m), abs_scaled(1), m.grid.dx[0] / 2)


def test_weights_examples():
    g = gm.CartesianGrid((0.1,), (-10,), (10,))
    assert U.weights(g, [3 * g.dx[0]]) == {(3,): 1.0}
    w = U.weights(g, [3 * g.dx[0] + g.dx[0] / 4])
    assert w[(3,)] == pytest.approx(0.75, abs=1e-14) and w[(4,)] == pytest.approx(0.25, abs=1e-14)


def test_weights_cell_corner():
    # the corner of C_J belongs to C_{J+e1+e2} under lower-closed cells
    g = gm.CartesianGrid((1.0, 1.0), (-3, -3), (3, 3))
    w = U.weights(g, [0.5, 0.5])
    assert w == {(1, 1): 0.0, (0, 1): 0.5, (1, 0): 0.5}


def test_step_single_atom_unchanged():
    g = gm.CartesianGrid((0.1, 0.1), (-3, -3), (3, 3))
    m = gm.DiscreteMeasure.from_dict(g, {(1, -1): 1.0})
    s = U.step(U.initial_state(m), exp_pointy(2), 0.01)
    assert np.array_equal(s.measure.weights, m.weights)


def test_step_counterexample_masses():
    p, dt = 0.75, 1e-3
    m = counterexample(p)
    new = U.step(U.initial_state(m), abs_scaled(1), dt).measure.to_dict()
    c = p * p * dt / (2 * SQ2)
    assert new[(0, 0)] == pytest.approx(1 - p + c, abs=1e-15)
    assert new[(1, 0)] == pytest.approx(p / 2 - c, abs=1e-15)
    assert new[(0, 1)] == pytest.approx(p / 2 - c, abs=1e-15)
    assert new[(1, 1)] == pytest.approx(c, abs=1e-15)
    assert len(new) == 4


def test_step_newtonian_moves_fraction_inward():
    m = two_atoms()
    dx = m.grid.dx[0]
    dt = dx / 4
    s = U.step(U.initial_state(m), abs_scaled(1), dt)
    f = dt / (2 * dx)
    new = s.measure.to_dict()
    assert new == pytest.approx({(-50,): 0.5 * (1 - f), (-49,): 0.5 * f, (49,): 0.5 * f, (50,): 0.5 * (1 - f)})
    assert s.diagnostics["com"][0] == pytest.approx(0.0, abs=1e-17)


def test_step_raises_when_mass_leaves_window():
    g = gm.CartesianGrid((0.1,), (0,), (3,))
    m = gm.DiscreteMeasure.from_dict(g, {(0,): 0.5, (3,): 0.5})
    with pytest.raises(gm.GridError):
        U.step(U.initial_state(m), _repulsive(), 0.01)


def _repulsive():
    return custom(lambda x: -np.abs(x[..., 0]), lambda x: -np.sign(x), lam=0.0, w_inf=1.0)


def test_run_zero_time_and_mass_trace():
    m = two_atoms()
    rec = U.run(U.initial_state(m, abs_scaled(1)), abs_scaled(1), 0.002, 0.0)
    assert len(rec.rows) == 1 and rec.final is m
    rec = U.run(U.initial_state(m, abs_scaled(1)), abs_scaled(1), 0.002, 0.3)
    assert len(rec.rows) == 151
    assert all(abs(r["mass"] - 1) <= 1e-12 for r in rec.rows)
    assert U.check_second_moment_bound(rec, U.second_moment_bound_constant(m.grid, 1.0))


def test_run_csv_format():
    m = two_atoms(20)
    rec = U.run(U.initial_state(m, half_abs()), half_abs(), 0.01, 0.02)
    rec.config = {"b": 2, "a": 1}
    lines = rec.to_csv().splitlines()
    assert lines[:4] == ["# a=1", "# b=2", "# scheme=upwind", "n,t,mass,com_1,second_moment,energy"]
    assert len(lines) == 7


def test_push_and_flux_forms_agree(rng):
    g = gm.CartesianGrid((0.05, 0.1), (-10, -10), (10, 10))
    w = np.zeros(g.shape)
    w[3:-3, 3:-3] = rng.random((15, 15))
    m = gm.DiscreteMeasure(g, w / w.sum())
    a = U.velocity(m, exp_pointy(3), where="window").values
    dt = 0.4 / (3 * (1 / 0.05 + 1 / 0.1))
    np.testing.assert_allclose(U.push_update(m, a, dt), U.flux_update(m, a, dt), rtol=0, atol=1e-14)


def test_negative_weight_names_cell():
    g = gm.CartesianGrid((1.0,), (-3,), (3,))
    m = gm.DiscreteMeasure.from_dict(g, {(1,): 1.0})
    a = np.zeros(g.shape + (1,))
    a[4, 0] = 3.0
    with pytest.raises(U.CFLError, match=r"\(1,\)"):
        U.push_update(m, a, 0.5)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.sampled_from([(0.1, 0.1), (0.3, 0.05)]))
def test_weights_partition_and_barycenter(u, v, dx):
    g = gm.CartesianGrid(dx, (-20, -20), (20, 20))
    y = np.array([0.7 + u * dx[0] * 0.999, -0.4 + v * dx[1] * 0.999])
    w = U.weights(g, y)
    total = sum(w.values())
    bary = sum(np.array(J) * np.array(dx) * a for J, a in w.items())
    assert total == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(bary, y, atol=1e-12)


@given(st.integers(1, 2), st.integers(0, 10 ** 6))
def test_invariants_on_random_measures(d, seed):
    rng = np.random.default_rng(seed)
    n = 6 if d == 2 else 20
    dx = tuple(rng.uniform(0.05, 0.2) for _ in range(d))
    g = gm.CartesianGrid(dx, (-n,) * d, (n,) * d)
    w = np.zeros(g.shape)
    inner = tuple(slice(n - 3, n + 4) for _ in range(d))
    w[inner] = rng.random(w[inner].shape) * (rng.random(w[inner].shape) < 0.6)
    w[(n,) * d] += 1e-3
    m = gm.DiscreteMeasure(g, w / w.sum())
    p = [abs_scaled(1.0), exp_pointy(2.0)][seed % 2]
    dt = rng.uniform(0.05, 0.49) / (p.w_inf * sum(1 / h for h in dx))
    s = U.initial_state(m, p, with_energy=False)
    for _ in range(3):
        s1 = U.step(s, p, dt, with_energy=False)
        assert abs(s1.measure.mass() - s.measure.mass()) <= 1e-12
        assert np.all(s1.measure.weights >= 0)
        com0, com1 = s.diagnostics["com"], s1.diagnostics["com"]
        assert np.max(np.abs(com1 - com0)) <= 1e-10 * (1 + np.max(np.abs(com0)))
        s = s1
