import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigenshape import kernels
from eigenshape.grid_geometry import Grid, _interface_seeds, disk_phi

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")


def seeds_for(phi, h):
    s = _interface_seeds(phi, h)
    known = np.isfinite(s)
    return np.where(known, s, 0.0), known


def test_single_seed_axis_distances_exact():
    d = np.zeros((21, 21))
    k = np.zeros((21, 21), dtype=bool)
    k[10, 10] = True
    out = kernels.fast_march(d, k, 0.1, backend="python")
    # along grid axes the one-sided eikonal update is exact
    assert out[10, 15] == pytest.approx(0.5, abs=1e-12)
    assert out[3, 10] == pytest.approx(0.7, abs=1e-12)
    assert np.all(out >= 0)


def test_plane_front_is_exact():
    h = 0.05
    g = Grid.from_box((0, 0), (1, 1), h)
    X, _ = g.mesh()
    phi = X - 0.3013
    d, k = seeds_for(phi, h)
    out = kernels.fast_march(d, k, h)
    assert np.allclose(out, np.abs(phi), atol=1e-12)


def test_max_dist_leaves_far_nodes_unreached():
    h = 1 / 32
    g = Grid.from_box((-1, -1), (1, 1), h)
    phi = disk_phi(g, (0, 0), 0.3)
    d, k = seeds_for(phi, h)
    out = kernels.fast_march(d, k, h, max_dist=4 * h)
    assert np.isinf(out).any()
    assert np.all(out[np.abs(phi) < 3 * h] < np.inf)


def test_circle_distance_first_order():
    h = 1 / 64
    g = Grid.from_box((-1, -1), (1, 1), h)
    phi = disk_phi(g, (0.01, -0.02), 0.5)
    d, k = seeds_for(phi, h)
    out = kernels.fast_march(d, k, h)
    assert np.max(np.abs(out - np.abs(phi))) < 2 * h


@compiled
@settings(max_examples=20, deadline=None)
@given(cx=st.floats(-0.3, 0.3), cy=st.floats(-0.3, 0.3), r=st.floats(0.1, 0.6),
       n=st.integers(12, 40), three_d=st.booleans())
def test_compiled_matches_python_bitwise(cx, cy, r, n, three_d):
    h = 2.0 / (n - 1)
    if three_d:
        g = Grid.from_box((-1, -1, -1), (1, 1, 1), 2.0 / 15)
        phi = disk_phi(g, (cx, cy, 0.0), r + 0.2)
        h = g.h
    else:
        g = Grid.from_box((-1, -1), (1, 1), h)
        phi = disk_phi(g, (cx, cy), r)
    d, k = seeds_for(phi, h)
    a = kernels.fast_march(d, k, h, backend="compiled")
    b = kernels.fast_march(d, k, h, backend="python")
    assert np.array_equal(a, b)


def test_inputs_not_modified():
    d = np.zeros((10, 10))
    k = np.zeros((10, 10), dtype=bool)
    k[0, 0] = True
    d0, k0 = d.copy(), k.copy()
    kernels.fast_march(d, k, 1.0)
    assert np.array_equal(d, d0) and np.array_equal(k, k0)


def test_pure_env_forces_fallback():
    code = "from eigenshape import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, EIGENSHAPE_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
