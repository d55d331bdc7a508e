import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigenshape.objective import (
    MultiplicityError,
    ObjectiveSpec,
    evaluate,
    gradient,
    lower_bound,
    lp_means,
    multiplicity_clusters,
    smooth_p,
    strict_gap_check,
)

J01 = 2.404825557695773


def sum_spec(n=2, p=math.inf):
    return ObjectiveSpec("linear", mu=(1.0,) * n, p=p)


def weighted_custom(n):
    w = np.arange(1, n + 1, dtype=float)
    return ObjectiveSpec("custom", G=lambda y: float(np.sum(y * y / w)), grad_G=lambda y: 2 * y / w)


def fd_gradient(spec, lam, rel=1e-6):
    """Central finite differences of evaluate (the independent oracle)."""
    lam = np.asarray(lam, dtype=float)
    out = np.empty_like(lam)
    for k in range(len(lam)):
        e = np.zeros_like(lam)
        e[k] = rel * lam[k]
        # evaluate on unsorted input is fine for the smoothed forms
        out[k] = (spec.outer(lp_means(lam + e, spec.p)) - spec.outer(lp_means(lam - e, spec.p))) / (2 * e[k])
    return out


ascending = st.lists(st.floats(0.5, 50.0), min_size=1, max_size=5).map(sorted)


# -- evaluate ------------------------------------------------------------------------

def test_linear_arithmetic():
    spec = ObjectiveSpec("linear", mu=(1.0, 1.0))
    assert evaluate(spec, (19.739, 49.348), 1.0) == pytest.approx(70.087, abs=1e-12)


@settings(max_examples=50)
@given(lam=ascending, vol=st.floats(0, 10))
def test_powersum_q1_equals_unit_linear(lam, vol):
    a = evaluate(ObjectiveSpec("powersum", q=1.0), lam, vol)
    b = evaluate(ObjectiveSpec("linear", mu=(1.0,) * len(lam)), lam, vol)
    assert a == pytest.approx(b, rel=1e-14)


def test_custom_first_eigenvalue_faber_krahn_value():
    r = (J01 ** 2 / math.pi) ** 0.25
    spec = ObjectiveSpec("custom", G=lambda y: y[0], grad_G=lambda y: np.eye(len(y))[0])
    val = evaluate(spec, [J01 ** 2 / r ** 2, 30.0], math.pi * r * r)
    assert val == pytest.approx(2 * J01 * math.sqrt(math.pi), rel=1e-12)
    # the commonly quoted 8.5252 agrees to within 4e-5 relative
    assert val == pytest.approx(8.5252, rel=1e-4)


@pytest.mark.parametrize("lam", [[2.0, 1.0], [0.0, 1.0], [-1.0], []])
def test_invalid_points(lam):
    with pytest.raises(ValueError):
        evaluate(sum_spec(max(len(lam), 1)), lam, 0.0)


# -- gradient -------------------------------------------------------------------------

def test_linear_gradient_is_mu():
    spec = ObjectiveSpec("linear", mu=(0.5, 2.0, 3.0))
    assert np.array_equal(gradient(spec, [1.0, 2.0, 3.0]), [0.5, 2.0, 3.0])


def test_smoothed_sum_gradient_fd():
    spec = smooth_p(sum_spec(2), 2.0)
    g = gradient(spec, [1.0, 2.0])
    assert np.allclose(g, fd_gradient(spec, [1.0, 2.0]), rtol=1e-6)
    # closed form: d/dl1 = 1 + l1/y2, d/dl2 = l2/y2
    y2 = math.sqrt(5.0)
    assert np.allclose(g, [1 + 1 / y2, 2 / y2], rtol=1e-14)


def test_unsmoothed_custom_at_tie_errors():
    spec = weighted_custom(3)
    with pytest.raises(MultiplicityError):
        gradient(spec, [1.0, 2.0, 2.0])


def test_symmetric_forms_allowed_at_ties():
    assert np.array_equal(gradient(sum_spec(3), [1.0, 2.0, 2.0]), [1.0, 1.0, 1.0])
    g = gradient(ObjectiveSpec("powersum", q=2.0), [1.0, 2.0, 2.0 + 1e-6])
    assert g[1] == g[2]
    with pytest.raises(MultiplicityError):
        gradient(ObjectiveSpec("linear", mu=(1.0, 1.0, 2.0)), [1.0, 2.0, 2.0])


def test_gradient_bound_warning():
    spec = ObjectiveSpec("linear", mu=(1e-4, 1.0))
    with pytest.warns(UserWarning):
        gradient(spec, [1.0, 2.0])


@pytest.mark.parametrize("p", [1.0, 2.0, 4.0, 8.0, 64.0])
def test_smoothed_gradient_matches_fd_random_points(p):
    rng = np.random.default_rng(12345)
    for spec0 in (sum_spec(4), weighted_custom(4)):
        spec = smooth_p(spec0, p)
        for _ in range(20):
            lam = np.sort(rng.uniform(0.5, 20.0, 4))
            assert np.allclose(gradient(spec, lam), fd_gradient(spec, lam), rtol=1e-5, atol=0)


# -- smoothing family -----------------------------------------------------------------

def test_fp_closed_forms():
    s64 = smooth_p(sum_spec(2), 64)
    assert evaluate(s64, [1, 2], 0) == pytest.approx(1 + (1 + 2 ** 64) ** (1 / 64), rel=1e-14)
    assert evaluate(s64, [1, 2], 0) == pytest.approx(3.0, abs=1e-2)
    assert evaluate(s64, [2, 2], 0) == pytest.approx(2 + 2 * 2 ** (1 / 64), rel=1e-14)
    assert evaluate(s64, [2, 2], 0) == pytest.approx(4.0, abs=0.05)


def test_p1_is_partial_sums():
    spec = smooth_p(weighted_custom(3), 1)
    lam = np.array([1.0, 2.5, 4.0])
    assert evaluate(spec, lam, 0.0) == pytest.approx(spec.outer(np.cumsum(lam)), rel=1e-14)


def test_smooth_p_rejects_small_p():
    with pytest.raises(ValueError):
        smooth_p(sum_spec(), 0.5)


def test_large_p_no_overflow():
    spec = smooth_p(sum_spec(3), 1024)
    lam = [500.0, 900.0, 1000.0]
    v = evaluate(spec, lam, 0.0)
    assert math.isfinite(v)
    assert v == pytest.approx(500 + 900 + 1000, rel=2e-3)
    assert np.all(np.isfinite(gradient(spec, lam)))


@settings(max_examples=60)
@given(lam=ascending, p=st.floats(1.0, 30.0), dp=st.floats(0.1, 30.0))
def test_fp_nonincreasing_in_p(lam, p, dp):
    spec = sum_spec(len(lam))
    a = evaluate(smooth_p(spec, p), lam, 0.0)
    b = evaluate(smooth_p(spec, p + dp), lam, 0.0)
    assert b <= a * (1 + 1e-12)


@settings(max_examples=40)
@given(lam=ascending, p=st.floats(1.0, 64.0))
def test_fp_lower_bound(lam, p):
    spec = smooth_p(ObjectiveSpec("linear", mu=(1.0,) * len(lam), derivative_lb=1.0), p)
    g = gradient(spec, lam)
    lb = lower_bound(spec, lam)
    assert np.all(lb > 0)
    assert np.all(g >= lb * (1 - 1e-12))


@settings(max_examples=40)
@given(lam=ascending, p=st.floats(1.0, 64.0), seed=st.integers(0, 1000))
def test_fp_permutation_symmetry(lam, p, seed):
    spec = smooth_p(sum_spec(len(lam)), p)
    perm = np.random.default_rng(seed).permutation(lam)
    assert evaluate(spec, np.sort(perm), 0.0) == evaluate(spec, lam, 0.0)


def test_fp_converges_to_max_composition():
    spec = sum_spec(2)
    for lam in ([1.0, 2.0], [2.0, 2.0]):
        limit = lam[0] + max(lam)
        errs = [abs(evaluate(smooth_p(spec, p), lam, 0) - limit) for p in (4, 16, 64, 256)]
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        # tied points converge like log(2)/p
        assert errs[-1] <= 2 * max(lam) * math.log(2) / 256 + 1e-12


# -- strict gap -----------------------------------------------------------------------

@pytest.mark.parametrize("p", [1.0, 4.0, 64.0])
def test_strict_gap_at_ties(p):
    spec = smooth_p(sum_spec(2), p)
    assert strict_gap_check(spec, [1.0, 1.0])
    g = gradient(spec, [1.0, 1.0])
    # the gap is the j = k term dG_1 = 1
    assert g[0] - g[1] == pytest.approx(1.0, rel=1e-12)


def test_strict_gap_untied_warns():
    with pytest.warns(UserWarning):
        assert strict_gap_check(smooth_p(sum_spec(2), 4), [1.0, 2.0])


# -- spec plumbing --------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        ObjectiveSpec("linear", mu=(-1.0,))
    with pytest.raises(ValueError):
        ObjectiveSpec("powersum", q=0.5)
    with pytest.raises(ValueError):
        ObjectiveSpec("custom")
    with pytest.raises(ValueError):
        ObjectiveSpec("linear", mu=(1.0,), xi0=1.5, Q=4.0)
    ObjectiveSpec("linear", mu=(1.0,), xi0=1.2, Q=4.0)
    with pytest.raises(ValueError):
        ObjectiveSpec("quadratic")


def test_from_dict_forms():
    a = ObjectiveSpec.from_dict({"form": "linear", "mu": [1, 2]})
    assert a.mu == (1.0, 2.0) and not a.smoothed
    b = ObjectiveSpec.from_dict({"form": "powersum", "q": 2, "p": "inf"})
    assert b.q == 2.0 and math.isinf(b.p)
    c = ObjectiveSpec.from_dict({"form": "sum_fp", "p": 8, "N": 3})
    assert c.mu == (1.0, 1.0, 1.0) and c.p == 8.0
    assert ObjectiveSpec.from_dict(a.to_dict()) == a
    with pytest.raises(ValueError):
        ObjectiveSpec.from_dict({"form": "nope"})


# -- clusters ------------------------------------------------------------------------

def test_multiplicity_clusters_examples():
    assert multiplicity_clusters([19.7, 49.3, 49.3], 1e-3) == [[0], [1, 2]]
    assert multiplicity_clusters([1.0, 2.0, 3.0], 1e-3) == [[0], [1], [2]]
    assert multiplicity_clusters([2.0, 2.0, 2.0], 1e-3) == [[0, 1, 2]]


@given(lam=ascending, tol=st.floats(1e-6, 0.5))
def test_clusters_partition(lam, tol):
    cl = multiplicity_clusters(lam, tol)
    assert [i for c in cl for i in c] == list(range(len(lam)))
