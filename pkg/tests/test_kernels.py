import os
import subprocess
import sys

import numpy as np
import pytest

from aggupwind import grid as gm, kernels, upwind as U
from aggupwind import _fallback
from aggupwind.potential import abs_scaled, exp_pointy, half_abs, quad_linear, quadratic_radial

compiled = kernels.backends().get("cython")
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _measure(rng, d, n=9, density=0.4):
    g = gm.CartesianGrid(tuple(rng.uniform(0.05, 0.3, d)), (-n,) * d, (n,) * d)
    w = rng.random(g.shape) * (rng.random(g.shape) < density)
    w[(n,) * d] += 0.01
    return g, w / w.sum()


@needs_ext
@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("p", [abs_scaled(2), exp_pointy(3), half_abs(), quadratic_radial(0.5)])
def test_grid_convolve_backends_agree(rng, d, p):
    g, w = _measure(rng, d)
    tab = gm._tables(g, p, "velocity")
    support = np.flatnonzero(w).astype(np.int64)
    targets = np.arange(w.size, dtype=np.int64)
    ref = _fallback.grid_convolve(w, tab, support, targets)
    out = compiled.grid_convolve(np.ascontiguousarray(w.reshape(g.shape[0], -1)),
                                 np.ascontiguousarray(tab.reshape(tab.shape[0], tab.shape[1], -1)),
                                 support, targets)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-14)


def test_grid_sum_matches_brute_force(rng):
    g, w = _measure(rng, 2)
    m = gm.DiscreteMeasure(g, w)
    p = exp_pointy(2)
    a = U.velocity(m, p, where="window").values.reshape(-1, 2)
    pos, mass = m.atoms()
    x = g.centers().reshape(-1, 2)
    brute = -np.einsum("l,tli->ti", mass, p.grad_hat(x[:, None, :] - pos[None, :, :]))
    np.testing.assert_allclose(a, brute, rtol=0, atol=1e-14)


@needs_ext
@pytest.mark.parametrize("p,d", [(abs_scaled(2), 2), (exp_pointy(3), 2), (half_abs(), 1),
                                 (quad_linear(), 1), (quadratic_radial(0.5), 2), (abs_scaled(1), 3)])
def test_pair_velocity_backends_agree(rng, p, d):
    src = rng.uniform(-2, 2, (40, d))
    src[5] = src[3]  # coincident atoms exercise the hat convention
    tgt = np.concatenate([src[:10], rng.uniform(-2, 2, (7, d))])
    mass = rng.random(40)
    ref = _fallback.pair_velocity(tgt, src, mass, p.code, p.param)
    out = compiled.pair_velocity(np.ascontiguousarray(tgt), np.ascontiguousarray(src), mass, p.code, p.param)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-13)


def test_pure_env_forces_fallback():
    env = dict(os.environ, AGGUPWIND_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import aggupwind.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backends_give_the_same_run():
    code = ("import numpy as np\n"
            "from aggupwind import grid as gm, upwind as U\n"
            "from aggupwind.potential import exp_pointy\n"
            "g = gm.CartesianGrid.from_domain([(0, 1), (0, 1)], [12, 12])\n"
            "m = gm.discretize(gm.Atoms(((0.25, 0.25), (0.75, 0.5)), (0.5, 0.5)), g)\n"
            "rec = U.run(U.initial_state(m), exp_pointy(2), 0.005, 0.05)\n"
            "print(repr(rec.final.weights.tolist()))\n")
    outs = []
    for pure in ("1", "0"):
        env = dict(os.environ, AGGUPWIND_PURE=pure)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append(np.array(eval(res.stdout)))
    np.testing.assert_allclose(outs[0], outs[1], rtol=0, atol=1e-14)
