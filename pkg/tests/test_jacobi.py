import math

import numpy as np
import pytest

from chxray.geodesic import SMPoint, integrate_geodesic, sample_sm
from chxray.jacobi import (check_gronwall_bound, check_rauch_bound, curvature_matrix, gronwall_quantity,
                           initial_frame, linear_growth_constant, parallel_frame, per_geodesic_growth_constant,
                           powerlaw_curvature_integral_bound, rauch_bound, riemann_fd, solve_jacobi)
from chxray.manifold import curvature_sup, make_hyperbolic


def test_flat_frame_is_constant(rng, E2):
    p = sample_sm(E2, 5, 2.0, rng)
    fr = parallel_frame(E2, integrate_geodesic(E2, p, 3.0))
    assert np.max(np.abs(fr.E - fr.E[0])) <= 1e-12


def test_frame_orthonormal_normal(rng, H2, P3):
    for M in (H2, P3):
        p = sample_sm(M, 10, 3.0, rng)
        fr = parallel_frame(M, integrate_geodesic(M, p, 10.0))
        assert fr.gram_error(M) <= 1e-7
        assert fr.normal_error(M) <= 1e-8


def test_hyperbolic_frame_is_rotated_velocity(rng, H2):
    p = sample_sm(H2, 4, 2.0, rng)
    fr = parallel_frame(H2, integrate_geodesic(H2, p, 4.0))
    perp = H2.perp(fr.path.x, fr.path.v)
    assert np.max(np.abs(np.abs(np.einsum("snk,snk->sn", fr.E[:, :, 0], H2.lower_index(fr.path.x, perp))) - 1)) \
        <= 1e-8


def test_flat_jacobi_linear(rng, E2):
    J = solve_jacobi(E2, sample_sm(E2, 5, 2.0, rng), "v", T=5.0)
    assert np.max(np.abs(J.norm[:, :, 0] - J.t[:, None])) <= 1e-12


def test_hyperbolic_closed_forms(rng, H2):
    p = sample_sm(H2, 20, 3.0, rng)
    Jv = solve_jacobi(H2, p, "v", T=5.0)
    Jh = solve_jacobi(H2, p, "h", T=5.0)
    assert np.max(np.abs(Jv.norm[-1] - math.sinh(5.0))) <= 1e-5
    assert np.max(np.abs(Jh.norm[-1] - math.cosh(5.0))) <= 1e-5
    assert np.max(np.abs(check_rauch_bound(Jv, 1.0))) <= 1e-6


def test_three_dimensional_fields(rng):
    M = make_hyperbolic(3, 2.0)
    J = solve_jacobi(M, sample_sm(M, 10, 2.0, rng), "v", T=3.0)
    assert np.max(np.abs(J.norm[-1] - math.sinh(math.sqrt(2) * 3) / math.sqrt(2))) <= 1e-5


def test_residual_second_order(rng, P3):
    p = sample_sm(P3, 5, 2.0, rng)
    r1 = solve_jacobi(P3, p, "v", T=4.0, h=0.02).residual(P3).max()
    r2 = solve_jacobi(P3, p, "v", T=4.0, h=0.01).residual(P3).max()
    assert r2 <= r1 / 3.0


def test_linearity_in_initial_vector(rng, P3):
    p = sample_sm(P3, 6, 2.0, rng)
    w = P3.perp(p.x, p.v)
    a = solve_jacobi(P3, p, "v", 2.0 * w, T=3.0)
    b = solve_jacobi(P3, p, "v", w, T=3.0)
    assert np.max(np.abs(a.u - 2.0 * b.u)) <= 1e-9
    with pytest.raises(ValueError):
        solve_jacobi(P3, p, "v", p.v, T=1.0)


def test_frame_independence(rng):
    M = make_hyperbolic(3, 1.0)
    p = sample_sm(M, 4, 2.0, rng)
    E0 = initial_frame(M, p.x, p.v)
    w = E0[:, 0] * 0.6 + E0[:, 1] * 0.8
    J = solve_jacobi(M, p, "v", w, T=3.0)
    assert np.max(np.abs(J.norm[:, :, 0] - np.sinh(J.t)[:, None])) <= 1e-9 * math.sinh(3.0) + 1e-7


def test_curvature_matrix_fd_agrees(rng, P3):
    x = rng.normal(size=(5, 2))
    v = P3.normalize(x, rng.normal(size=(5, 2)))
    E = P3.perp(x, v)[:, None, :]
    closed = curvature_matrix(P3, x, v, E)
    fd = curvature_matrix(P3, x, v, E, "fd")
    assert np.max(np.abs(closed - fd)) <= 1e-5
    assert riemann_fd(P3, x[0]).shape == (1, 2, 2, 2, 2)


def test_rauch_euclidean_strict(rng, E2):
    J = solve_jacobi(E2, sample_sm(E2, 5, 2.0, rng), "v", T=5.0)
    assert check_rauch_bound(J, 1.0).min() >= 0
    assert np.all(np.sinh(J.t[-1]) - J.norm[-1] > 0)
    assert rauch_bound(2.0, 0.0, 1.0, 0.0) == 2.0


def test_rauch_powerlaw(rng, P3):
    K0 = curvature_sup(P3)
    J = solve_jacobi(P3, sample_sm(P3, 50, 3.0, rng, escaping=True), "v", T=20.0)
    assert check_rauch_bound(J, K0).min() >= -1e-6


def test_gronwall_flat(rng, E2):
    # J = a + b t in flat space, so g = |b| + |a|/t: constant for v-type, decreasing for h-type
    p = sample_sm(E2, 5, 2.0, rng)
    i = None
    for kind in ("v", "h"):
        J = solve_jacobi(E2, p, kind, T=5.0)
        g = gronwall_quantity(J)
        i = int(np.argmin(np.abs(J.t - 1.0)))
        assert np.all(np.diff(g[i:], axis=0) <= 1e-12)
        assert check_gronwall_bound(J, E2, 1.0).min() >= -1e-12
    J = solve_jacobi(E2, p, "v", T=5.0)
    assert np.nanmax(np.abs(gronwall_quantity(J)[i:] - 1.0)) <= 1e-10


def test_gronwall_hyperbolic(rng, H2):
    J = solve_jacobi(H2, sample_sm(H2, 20, 2.0, rng), "v", T=5.0)
    assert check_gronwall_bound(J, H2, 1.0, 5.0).min() >= -1e-6


def test_linear_growth_powerlaw(rng, P3):
    A = powerlaw_curvature_integral_bound(1.0, 3.0)
    assert A == pytest.approx(0.5)
    J = solve_jacobi(P3, sample_sm(P3, 20, 4.0, rng, escaping=True), "v", T=50.0)
    C = linear_growth_constant(curvature_sup(P3), A)
    assert np.max(J.norm / (J.t[:, None, None] + 1)) <= C
    Cg = per_geodesic_growth_constant(J, P3)
    assert np.all(J.norm / (J.t[:, None, None] + 1) <= Cg[None] * (1 + 1e-9))
    assert np.all(Cg <= C)


def test_bounded_curvature_exponential_growth(rng, H2):
    J = solve_jacobi(H2, sample_sm(H2, 100, 3.0, rng), "v", T=20.0)
    C = np.max(J.norm * np.exp(-J.t)[:, None, None])
    assert np.isfinite(C) and C <= 0.5 + 1e-6
