import numpy as np
import pytest

from chxray.geodesic import SMPoint
from chxray.harmonics2d import (D2, GridError, SMGrid, SMGridFunction, apply_flows, contraction_check,
                                eigen_defect, flow_differences, norm, norm_splitting_check, random_band_limited,
                                recursion_check, sample, sm_points, split_all, vertical_fourier)
from chxray.tensor import bump, sym_nabla
from chxray.xray import uf

GRID = SMGrid(3.0, 48, 48, 16)


def gauss_u(x, theta_fn, c=(0.2, -0.1), width=0.3):
    return np.exp(-np.sum((x - np.asarray(c)) ** 2, axis=-1) / (2 * width**2)) * theta_fn


def test_parseval_and_conjugate_symmetry(rng):
    u = random_band_limited(GRID, 5, rng)
    modes = vertical_fourier(u, 7)
    assert modes.parseval_defect(u) <= 1e-12
    assert modes.conjugate_symmetry_defect() <= 1e-12
    assert modes.alias_fraction <= 1e-20


def test_single_mode_coefficients(E2):
    grid = SMGrid(3.0, 16, 16, 8)
    u = sample(E2, grid, lambda x, v: np.ones(len(x)) * v[:, 0])
    modes = vertical_fourier(u, 3)
    assert np.allclose(modes[1], 0.5)
    assert np.allclose(modes[-1], 0.5)
    assert np.allclose(modes[0], 0.0) and np.allclose(modes[2], 0.0)
    u2 = sample(E2, grid, lambda x, v: 2 * v[:, 0] * v[:, 1])  # sin 2 theta
    m2 = vertical_fourier(u2, 3)
    assert np.allclose(m2[2], -0.5j) and np.allclose(m2[-2], 0.5j)


def test_kmax_must_be_resolved(rng):
    u = random_band_limited(SMGrid(3.0, 16, 16, 8), 2, rng)
    with pytest.raises(GridError):
        vertical_fourier(u, 4)


@pytest.mark.parametrize("bad", [dict(ntheta=7), dict(ntheta=2), dict(nx=4)])
def test_bad_grids(bad):
    args = dict(half_width=3.0, nx=16, ny=16, ntheta=8)
    args.update(bad)
    with pytest.raises(GridError):
        SMGrid(**args)


def test_support_margin_enforced():
    g = SMGrid(3.0, 16, 16, 8)
    with pytest.raises(GridError):
        SMGridFunction(g, np.zeros((16, 16, 8)), support_radius=2.9)
    with pytest.raises(GridError):
        SMGridFunction(g, np.zeros((16, 16, 4)))


def test_boundary_touching_function_rejected(E2):
    u = sample(E2, SMGrid(3.0, 16, 16, 8), lambda x, v: np.ones(len(x)))
    with pytest.raises(GridError):
        apply_flows(E2, u)


def test_euclidean_flows_of_coordinate(E2):
    # u = x1 (times a Gaussian at the origin) has X u = cos theta, X_perp u = +sin theta there
    grid = SMGrid(6.0, 96, 96, 8)
    u = sample(E2, grid, lambda x, v: x[:, 0] * gauss_u(x, 1.0, c=(0, 0), width=0.6))
    Xu, Xp, Vu = apply_flows(E2, u)
    i = grid.nx // 2
    th = grid.theta
    assert np.allclose(Xu.values[i, i], np.cos(th), atol=1e-8)
    assert np.allclose(Xp.values[i, i], np.sin(th), atol=1e-8)
    assert np.allclose(Vu.values[i, i], 0.0, atol=1e-12)


@pytest.mark.parametrize("model", ["E2", "H2"])
def test_grid_flows_match_flow_differences(request, model):
    M = request.getfixturevalue(model)

    def func(x, v):
        w = np.einsum("nji,nj->ni", np.linalg.inv(M.frame(x)), v)
        return gauss_u(x, w[:, 0] ** 2 - 0.3 * w[:, 1])

    grid = SMGrid(3.0, 64, 64, 16)
    u = sample(M, grid, func, support_radius=1.5)
    Xu, Xp, _ = apply_flows(M, u)
    p = sm_points(M, grid)
    near = np.flatnonzero(np.linalg.norm(p.x - [0.2, -0.1], axis=1) < 0.6)
    idx = near[:: max(1, len(near) // 40)]
    fx, fp = flow_differences(M, func, SMPoint(p.x[idx], p.v[idx]), 1e-3)
    assert np.max(np.abs(Xu.values.reshape(-1)[idx] - fx)) <= 1e-4
    assert np.max(np.abs(Xp.values.reshape(-1)[idx] - fp)) <= 1e-4


def test_eigen_defect(rng):
    u = random_band_limited(GRID, 5, rng)
    assert max(eigen_defect(u, 5).values()) <= 1e-10


@pytest.mark.parametrize("model", ["E2", "H2"])
def test_split_leakage_and_contraction(request, rng, model):
    M = request.getfixturevalue(model)
    u = random_band_limited(GRID, 4, rng)
    rep = contraction_check(M, u, 4)
    assert rep.max_leakage <= 1e-6
    assert min(rep.slack(5e-3).values()) >= 0
    assert norm_splitting_check(M, u, 4) >= -1e-8 * norm(M, u) ** 2


def test_split_reassembles_X(rng, H2):
    u = random_band_limited(GRID, 4, rng)
    s = split_all(H2, u, 4)
    total = sum(r.Xplus.values + r.Xminus.values for r in s)
    Xu = apply_flows(H2, u)[0].values
    assert np.max(np.abs(total - Xu)) <= 1e-6 * np.max(np.abs(Xu))


def test_D2_values():
    assert D2(1) == pytest.approx(np.sqrt(2))
    assert D2(2) == D2(5) == 1.0
    with pytest.raises(ValueError):
        D2(0)


def test_recursion_small(H2):
    grid = SMGrid(2.5, 16, 16, 8)
    h = bump(2, [0.3, -0.2], 1.0)
    f = sym_nabla(H2, h)
    u = sample(H2, grid, lambda x, v: uf(H2, f, SMPoint(x, v), 1e-8).value, support_radius=1.4)
    rep = recursion_check(H2, u, 1, 2)
    assert max(rep.mode_energy.values()) <= 1e-6
