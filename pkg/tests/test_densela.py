import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsdbias.densela import (NormKind, dual_norm, matrix_norm, power_step,
                             project_l1_ball, project_norm_ball, singular_values, svd)
from nsdbias.errors import DegenerateDirectionError

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def matrices(max_rows=6, max_cols=6):
    shapes = st.tuples(st.integers(1, max_rows), st.integers(1, max_cols))
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite))


def oracle_sigma(m):
    """Singular values from the eigenvalues of the Gram matrix."""
    m = np.asarray(m)
    g = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    ev = np.linalg.eigvalsh(g)[::-1]
    return np.sqrt(np.clip(ev, 0, None))


def test_svd_diag():
    r = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(r.s, [3, 1])
    np.testing.assert_allclose(r.u1, [1, 0], atol=1e-15)
    np.testing.assert_allclose(r.v1, [1, 0], atol=1e-15)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_svd_zero_matrix(method):
    r = svd(np.zeros((2, 3)), method=method)
    np.testing.assert_array_equal(r.s, [0, 0])
    np.testing.assert_allclose(r.u.T @ r.u, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(r.v.T @ r.v, np.eye(2), atol=1e-12)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_svd_random_reconstruction(method):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((15, 25))
    r = svd(m, method=method)
    assert np.abs(r.reconstruct() - m).max() < 1e-9 * r.s[0]
    np.testing.assert_allclose(r.u.T @ r.u, np.eye(15), atol=1e-9)
    np.testing.assert_allclose(r.v.T @ r.v, np.eye(15), atol=1e-9)


@given(matrices())
def test_svd_invariants(m):
    for method in ("lapack", "jacobi"):
        r = svd(m, method=method)
        assert np.all(np.diff(r.s) <= 1e-12 * max(r.s[0], 1)) and np.all(r.s >= 0)
        tol = 1e-9 * r.s[0] if r.s[0] > 0 else 1e-12
        assert np.abs(r.reconstruct() - m).max() <= tol + 1e-12
        q = min(m.shape)
        np.testing.assert_allclose(r.u.T @ r.u, np.eye(q), atol=1e-9)
        np.testing.assert_allclose(r.v.T @ r.v, np.eye(q), atol=1e-9)
        np.testing.assert_allclose(r.s, oracle_sigma(m)[:q], atol=1e-6 * max(1, r.s[0]))


@given(matrices())
def test_svd_sign_convention(m):
    r = svd(m)
    for i in range(r.u.shape[1]):
        nz = np.flatnonzero(np.abs(r.u[:, i]) > 1e-12)
        if nz.size:
            assert r.u[nz[0], i] > 0


def test_jacobi_matches_lapack_on_generic_matrix():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((7, 11))
    a, b = svd(m), svd(m, method="jacobi")
    np.testing.assert_allclose(a.s, b.s, rtol=1e-12)
    np.testing.assert_allclose(a.u, b.u, atol=1e-9)
    np.testing.assert_allclose(a.v, b.v, atol=1e-9)


def test_svd_deterministic():
    m = np.random.default_rng(1).standard_normal((15, 25))
    a, b = svd(m), svd(m.copy())
    assert np.array_equal(a.u, b.u) and np.array_equal(a.s, b.s) and np.array_equal(a.v, b.v)


def test_power_step_examples():
    m = np.diag([3.0, 1.0])
    p = power_step(m, np.array([1.0, 1.0]) / np.sqrt(2))
    np.testing.assert_allclose(p, np.array([9.0, 1.0]) / np.sqrt(82), atol=1e-15)
    np.testing.assert_allclose(p, [0.99388, 0.11043], atol=1e-5)
    np.testing.assert_allclose(power_step(m, np.array([0.0, 1.0])), [0, 1])
    u1 = svd(m).u1
    np.testing.assert_allclose(np.abs(power_step(m, u1)), np.abs(u1))


def test_power_step_fixed_point_random():
    m = np.random.default_rng(2).standard_normal((5, 8))
    u1 = svd(m).u1
    assert abs(power_step(m, u1) @ u1) == pytest.approx(1.0, abs=1e-12)


def test_power_step_degenerate():
    with pytest.raises(DegenerateDirectionError):
        power_step(np.zeros((3, 4)), np.array([1.0, 0.0, 0.0]))
    m = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DegenerateDirectionError):
        power_step(m, np.array([0.0, 1.0]))


def test_matrix_norm_examples():
    m = np.diag([3.0, 1.0])
    assert matrix_norm(m, NormKind.FROBENIUS) == pytest.approx(np.sqrt(10))
    assert matrix_norm(m, "entrywise_max") == 3
    assert matrix_norm(m, "spectral") == pytest.approx(3)
    assert matrix_norm(m, "nuclear") == pytest.approx(4)
    u = np.array([0.6, 0.8])
    v = np.array([0.0, 1.0, 0.0])
    assert matrix_norm(np.outer(u, v), "spectral") == pytest.approx(1)
    assert matrix_norm(np.outer(u, v), "nuclear") == pytest.approx(1)


@given(arrays(np.float64, (10, 10), elements=finite))
def test_norm_ordering_against_oracle(m):
    s = oracle_sigma(m)
    nuc, fro, spec = (matrix_norm(m, k) for k in ("nuclear", "frobenius", "spectral"))
    tol = 1e-9 * max(1.0, s[0])
    assert nuc == pytest.approx(s.sum(), abs=1e-6 * max(1, s[0]))
    assert spec == pytest.approx(s[0], abs=1e-6 * max(1, s[0]))
    assert nuc + tol >= fro >= spec - tol


def test_dual_norm_pairs():
    m = np.array([[2.0, -3.0], [0.0, 1.0]])
    assert dual_norm(m, "entrywise_max") == 6
    assert dual_norm(m, "frobenius") == pytest.approx(np.sqrt(14))
    assert dual_norm(np.diag([3.0, 1.0]), "spectral") == pytest.approx(4)
    assert dual_norm(np.diag([3.0, 1.0]), "nuclear") == pytest.approx(3)


def brute_l1_projection(v, radius):
    """Projection onto the l1 ball by bisection on the soft-threshold level."""
    a = np.abs(v)
    lo, hi = 0.0, a.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(a - mid, 0).sum() > radius:
            lo = mid
        else:
            hi = mid
    return np.sign(v) * np.maximum(a - hi, 0)


def test_project_examples():
    m = np.diag([3.0, 1.0])
    np.testing.assert_allclose(project_norm_ball(m, "nuclear", 2.0), np.diag([2.0, 0.0]),
                               atol=1e-12)
    np.testing.assert_allclose(project_norm_ball(m, "spectral", 2.0), np.diag([2.0, 1.0]),
                               atol=1e-12)
    np.testing.assert_allclose(brute_l1_projection(np.array([3.0, 1.0]), 2.0), [2, 0],
                               atol=1e-12)
    inside = np.array([[0.1, -0.2], [0.05, 0.0]])
    for kind in NormKind:
        np.testing.assert_array_equal(project_norm_ball(inside, kind), inside)


@given(arrays(np.float64, st.integers(1, 12), elements=finite),
       st.floats(0.1, 5.0))
def test_l1_projection_matches_bisection(v, radius):
    p = project_l1_ball(v, radius)
    if np.abs(v).sum() <= radius:
        np.testing.assert_array_equal(p, v)
    else:
        np.testing.assert_allclose(p, brute_l1_projection(v, radius), atol=1e-9)
        assert np.abs(p).sum() == pytest.approx(radius, rel=1e-9)


def _random_feasible(rng, shape, kind, count):
    """Random points inside the unit ball (random directions, random radii)."""
    out = []
    for _ in range(count):
        a = rng.standard_normal(shape) * rng.exponential()
        nrm = matrix_norm(a, kind)
        out.append(a / nrm * rng.uniform() ** 0.5)
    return out


@pytest.mark.parametrize("kind", list(NormKind))
def test_projection_optimality(kind):
    rng = np.random.default_rng(11)
    for _ in range(5):
        m = rng.standard_normal((4, 6)) * 2
        p = project_norm_ball(m, kind)
        assert matrix_norm(p, kind) <= 1 + 1e-9
        dist = np.linalg.norm(m - p)
        feas = _random_feasible(rng, m.shape, kind, 1000)
        assert all(dist <= np.linalg.norm(m - a) + 1e-9 for a in feas)
        # variational inequality <m - p, a - p> <= 0 for feasible a
        assert max(np.sum((m - p) * (a - p)) for a in feas) <= 1e-9


def test_singular_values_sorted():
    s = singular_values(np.random.default_rng(0).standard_normal((5, 3)))
    assert np.all(np.diff(s) <= 0)


def test_norm_kind_parse():
    assert NormKind.parse("linf") is NormKind.ENTRYWISE_MAX
    assert NormKind.parse(NormKind.NUCLEAR) is NormKind.NUCLEAR
    assert NormKind.NUCLEAR.dual == "spectral"
    with pytest.raises(ValueError):
        NormKind.parse("l7")


@pytest.mark.parametrize("scale", [1e-160, 1e-300, 1e160, 1e300])
def test_frobenius_norm_extreme_scales(scale):
    m = np.full((3, 4), scale)
    assert matrix_norm(m, "frobenius") == pytest.approx(scale * np.sqrt(12), rel=1e-14)
