import math

import numpy as np
import pytest
from scipy import special

from eigenshape.eigensolve import (
    ConvergenceError,
    Spectrum,
    analytic_spectrum,
    assemble,
    bessel_zero,
    boundary_trace,
    lowest_eigenpairs,
    normal_derivative,
    solve,
)
from eigenshape.grid_geometry import Grid, box_phi, boundary_points, disk_phi, make_shape

PI2 = math.pi ** 2


def square_shape(h, side=1.0, margin=0.25):
    g = Grid.from_box((-margin, -margin), (side + margin, side + margin), h)
    return make_shape(g, box_phi(g, (side / 2, side / 2), side))


def disk_shape(h, r=1.0, margin=0.3, c=(0.0, 0.0)):
    e = r + margin
    g = Grid.from_box((-e, -e), (e, e), h)
    return make_shape(g, disk_phi(g, c, r))


@pytest.fixture(scope="module")
def disk128():
    s = disk_shape(1 / 128)
    return s, solve(s, 3)


# -- operator -------------------------------------------------------------------------

def test_unit_square_row_count():
    op = assemble(square_shape(1 / 64))
    assert op.rows == 63 ** 2


def test_matrix_symmetric_positive_diagonal():
    op = assemble(disk_shape(1 / 32, 0.77, c=(0.013, -0.04)))
    A = op.matrix
    assert abs(A - A.T).max() == 0.0
    assert np.all(A.diagonal() > 0)
    assert np.all((op.boundary_correction > 0) & (op.boundary_correction <= 1))


def test_too_few_interior_nodes():
    g = Grid.from_box((-1, -1), (1, 1), 1 / 16)
    s = make_shape(g, disk_phi(g, (0, 0), 0.12))  # about 10 nodes
    assert (s.phi < 0).sum() < 50
    with pytest.raises(ValueError):
        assemble(s)


def test_touching_grid_box_is_reported():
    g = Grid.from_box((0, 0), (1, 1), 1 / 32)
    s = make_shape(g, disk_phi(g, (0.5, 0.5), 0.7))
    assert assemble(s).metadata["touches_grid_box"]


# -- eigenpairs -----------------------------------------------------------------------

def test_unit_square_spectrum():
    sp = solve(square_shape(1 / 128), 3)
    lam = sp.eigenvalues
    assert lam[0] == pytest.approx(2 * PI2, rel=5e-3)
    assert lam[1] == pytest.approx(5 * PI2, rel=5e-3)
    assert lam[2] == pytest.approx(5 * PI2, rel=5e-3)


def test_unit_disk_first_eigenvalue(disk128):
    _, sp = disk128
    assert sp.eigenvalues[0] == pytest.approx(special.jn_zeros(0, 1)[0] ** 2, rel=1e-2)


def test_spectrum_invariants(disk128):
    shape, sp = disk128
    w = shape.grid.weights()
    U = sp.eigenfunctions
    G = np.einsum("kij,lij,ij->kl", U, U, w)
    assert np.allclose(np.diag(G), 1.0, atol=1e-8)
    assert np.max(np.abs(G - np.diag(np.diag(G)))) <= 1e-6
    assert np.all(np.diff(sp.eigenvalues) >= 0)
    assert sp.eigenvalues[0] > 0
    assert np.all(sp.residuals <= 1e-8)
    assert U[0].min() >= -1e-6
    assert np.all(U[:, shape.phi >= 0] == 0)
    with pytest.raises(ValueError):
        sp.eigenvalues[0] = 1.0


def test_residual_definition(disk128):
    shape, sp = disk128
    op = assemble(shape)
    for k in range(sp.n):
        v = sp.eigenfunctions[k][tuple(op.nodes.T)]
        r = np.linalg.norm(op.matrix @ v - sp.eigenvalues[k] * v) / (sp.eigenvalues[k] * np.linalg.norm(v))
        assert r <= 1e-8


def test_invalid_N():
    op = assemble(disk_shape(1 / 16, 0.8))
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, 0)
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, op.rows // 4 + 1)


def test_convergence_error_reports_residual():
    op = assemble(disk_shape(1 / 16, 0.8))
    with pytest.raises(ConvergenceError) as info:
        lowest_eigenpairs(op, 2, tol=1e-30, max_refine=1)
    assert info.value.residual > 0


def test_deterministic_for_seed():
    s = disk_shape(1 / 32, 0.9)
    a, b = solve(s, 3, seed=7), solve(s, 3, seed=7)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenfunctions, b.eigenfunctions)


def test_scaling_law():
    h = 1 / 64
    l1 = solve(disk_shape(h, 0.5), 3).eigenvalues
    l2 = solve(disk_shape(h, 1.0), 3).eigenvalues
    assert np.allclose(l1 / l2, 4.0, rtol=1e-2)


def test_domain_monotonicity():
    h = 1 / 64
    g = Grid.from_box((-1, -1), (1, 1), h)
    small = solve(make_shape(g, disk_phi(g, (0, 0), 0.5)), 4).eigenvalues
    large = solve(make_shape(g, disk_phi(g, (0, 0), 0.6)), 4).eigenvalues
    assert np.all(small >= large)


def test_gradient_bounded_under_refinement():
    peaks = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        s = disk_shape(h, 0.8)
        u = solve(s, 1).eigenfunctions[0]
        g = np.linalg.norm(np.gradient(u, h), axis=0)
        peaks.append(g[s.phi < -2 * h].max())
    assert max(peaks) <= 1.2 * min(peaks)


# -- traces ---------------------------------------------------------------------------

def test_trace_half_plane_profile():
    g = Grid.from_box((-1, -1), (1, 1), 1 / 32)
    X, Y = g.mesh()
    shape = make_shape(g, Y - 0.01)
    u = np.maximum(-(Y - 0.01), 0.0)
    sp = Spectrum(np.array([1.0]), u[None], np.zeros(1), g)
    tr = boundary_trace(sp, shape)
    assert np.allclose(tr.normal_derivatives, -1.0, atol=0.05)


def test_trace_zero_field():
    s = disk_shape(1 / 32, 0.8)
    sp = Spectrum(np.array([1.0]), np.zeros((1,) + s.grid.dims), np.zeros(1), s.grid)
    assert np.all(boundary_trace(sp, s).normal_derivatives == 0)


def test_trace_disk_constant(disk128):
    shape, sp = disk128
    dn = boundary_trace(sp, shape).normal_derivatives[0]
    assert np.all(dn < 0)
    assert np.std(dn) / abs(np.mean(dn)) <= 0.05
    # exact value for the unit disk: |u_nu| = j01 |J1(j01)| / (sqrt(pi) |J1(j01)|) = j01 / sqrt(pi)
    assert abs(np.mean(dn)) == pytest.approx(special.jn_zeros(0, 1)[0] / math.sqrt(math.pi), rel=0.02)


def test_trace_near_grid_border_errors():
    g = Grid.from_box((0, 0), (1, 1), 1 / 32)
    # complement of a disk reaching within 0.01 of the box: inward samples leave the grid
    outer = make_shape(g, -disk_phi(g, (0.5, 0.5), 0.49))
    with pytest.raises(ValueError):
        normal_derivative(np.zeros(g.dims), outer, boundary_points(outer))
    inner = make_shape(g, disk_phi(g, (0.5, 0.5), 0.49))
    assert np.all(normal_derivative(np.zeros(g.dims), inner, boundary_points(inner)) == 0)


# -- analytic oracle ------------------------------------------------------------------

@pytest.mark.parametrize("m", [0, 1, 2, 5])
def test_bessel_zero_matches_scipy(m):
    ref = special.jn_zeros(m, 4)
    for l in range(1, 5):
        assert bessel_zero(m, l) == pytest.approx(ref[l - 1], abs=1e-10)


def test_analytic_spectrum_examples():
    assert analytic_spectrum("square(1)", 3) == pytest.approx([19.7392088, 49.3480220, 49.3480220])
    assert analytic_spectrum("disk(1)", 2) == pytest.approx([5.7831860, 14.6819706])
    assert analytic_spectrum("disk(2)", 1) == pytest.approx([5.7831860 / 4])
    assert analytic_spectrum("disk", 3, 1.0)[1:] == pytest.approx([14.6819706] * 2)


def test_analytic_spectrum_errors():
    with pytest.raises(ValueError):
        analytic_spectrum("triangle", 2)
    with pytest.raises(ValueError):
        analytic_spectrum("disk(1)", 21)
