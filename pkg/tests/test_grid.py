import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggupwind import grid as gm


def grid1(dx=0.01, lo=-50, hi=50):
    return gm.CartesianGrid((dx,), (lo,), (hi,))


def test_from_domain_includes_both_end_nodes():
    g = gm.CartesianGrid.from_domain([(-0.5, 0.5)], [800])
    assert g.dx == (0.00125,) and g.lo == (-400,) and g.hi == (400,)
    g2 = gm.CartesianGrid.from_domain([(0, 1), (0, 1)], [70, 70])
    assert g2.shape == (71, 71)


def test_index_of_uses_lower_closed_cells():
    g = grid1(1.0)
    assert g.index_of([0.49]) == (0,)
    assert g.index_of([0.5]) == (1,)
    assert g.index_of([-0.5]) == (0,)


def test_discretize_atoms_at_centers():
    g = grid1()
    m = gm.discretize(gm.Atoms(((0.25,), (-0.25,)), (0.5, 0.5)), g)
    assert m.to_dict() == {(-25,): 0.5, (25,): 0.5}


def test_discretize_atom_outside_window():
    with pytest.raises(gm.GridError):
        gm.discretize(gm.Atoms(((0.9,),), (1.0,)), grid1())


def test_discretize_gaussian_pair_normalized():
    g = gm.CartesianGrid.from_domain([(-1.25, 1.25)], [800])
    f = gm.Density(lambda x: np.exp(-20 * (x[:, 0] - 0.5) ** 2) + np.exp(-20 * (x[:, 0] + 0.5) ** 2))
    m = gm.discretize(f, g)
    assert m.mass() == pytest.approx(1.0, abs=1e-14)
    assert np.all(m.weights >= 0)


def test_discretize_indicator_box_difference():
    g = gm.CartesianGrid.from_domain([(0, 1), (0, 1)], [70, 70])
    m = gm.discretize(gm.IndicatorBoxDifference(((0.2, 0.8), (0.2, 0.8)), ((0.3, 0.7), (0.3, 0.7)), 5.0), g)
    assert m.mass() == pytest.approx(1.0, abs=1e-14)
    x = g.centers()
    strictly_inside = np.all((x > 0.3) & (x < 0.7), axis=-1)
    assert np.all(m.weights[strictly_inside] == 0.0)
    outside = np.any((x < 0.2 - 1 / 70) | (x > 0.8 + 1 / 70), axis=-1)
    assert np.all(m.weights[outside] == 0.0)


def test_center_of_mass_examples():
    m = gm.discretize(gm.Atoms(((0.25,), (-0.25,)), (0.5, 0.5)), grid1())
    assert gm.center_of_mass(m)[0] == pytest.approx(0.0, abs=1e-17)
    g = grid1(1.0, -2, 6)
    m2 = gm.DiscreteMeasure.from_dict(g, {(0,): 0.25, (4,): 0.75})
    assert gm.center_of_mass(m2)[0] == 3.0
    single = gm.DiscreteMeasure.from_dict(g, {(5,): 1.0})
    assert gm.center_of_mass(single)[0] == 5.0


def test_second_moment_examples():
    g = grid1(0.25, -4, 4)
    assert gm.second_moment(gm.DiscreteMeasure.from_dict(g, {(0,): 1.0})) == 0.0
    two = gm.DiscreteMeasure.from_dict(g, {(-1,): 0.5, (1,): 0.5})
    assert gm.second_moment(two) == 0.0625


def test_quantile_examples():
    g = grid1(1.0, -1, 3)
    q = gm.quantile(gm.DiscreteMeasure.from_dict(g, {(0,): 0.2, (1,): 0.3, (2,): 0.5}))
    np.testing.assert_allclose(q.breakpoints, [0.2, 0.5], atol=1e-16)
    np.testing.assert_array_equal(q.values, [0, 1, 2])
    assert q(0.0) == 0 and q(0.2) == 1 and q(0.49) == 1 and q(0.5) == 2 and q(0.999) == 2
    half = gm.quantile_from_atoms([1.0, 0.0], [0.5, 0.5])
    assert half(0.25) == 0.0 and half(0.5) == 1.0 and half(0.75) == 1.0
    dirac = gm.quantile_from_atoms([0.3], [1.0])
    assert np.all(dirac(np.linspace(0, 0.99, 7)) == 0.3)


def test_measure_validation_and_immutability():
    g = grid1(1.0, 0, 2)
    with pytest.raises(gm.GridError):
        gm.DiscreteMeasure(g, [0.5, -0.1, 0.6])
    with pytest.raises(gm.GridError):
        gm.DiscreteMeasure(g, [0.5, 0.1, 0.1])
    m = gm.DiscreteMeasure(g, [0.5, 0.25, 0.25])
    with pytest.raises(ValueError):
        m.weights[0] = 1.0


def test_field_dump_format():
    g = gm.CartesianGrid((0.5, 1.0), (0, 0), (1, 1))
    m = gm.DiscreteMeasure.from_dict(g, {(1, 0): 0.25, (0, 1): 0.75})
    lines = m.to_csv().splitlines()
    assert lines == ["J1,J2,x1,x2,weight", "0,1,0.0,1.0,0.75", "1,0,0.5,0.0,0.25"]


def test_compensated_cumsum_is_exact_on_many_small_terms():
    vals = np.full(10 ** 5, 1e-5)
    assert gm.compensated_cumsum(vals)[-1] == pytest.approx(1.0, abs=1e-15)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30), st.floats(-5, 5))
def test_second_moment_parallel_axis(weights, shift):
    w = np.array(weights) / sum(weights)
    g = grid1(0.1, 0, len(w) - 1)
    m = gm.DiscreteMeasure(g, w)
    c = gm.center_of_mass(m)
    shifted = gm.CartesianGrid((0.1,), (g.lo[0] + 7,), (g.hi[0] + 7,))
    m2 = gm.DiscreteMeasure(shifted, w)
    c2 = gm.center_of_mass(m2)
    assert gm.second_moment(m2, c2) == pytest.approx(gm.second_moment(m, c), rel=1e-9, abs=1e-14)


@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=20))
def test_quantile_is_monotone_and_takes_mass_levels(weights):
    w = np.array(weights) / sum(weights)
    q = gm.quantile_from_atoms(np.arange(len(w)) * 0.5, w)
    z = np.linspace(0, 1, 101, endpoint=False)
    assert np.all(np.diff(q(z)) >= 0)
    assert q.cum[-1] == pytest.approx(1.0, abs=1e-14)
