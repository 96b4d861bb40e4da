import math

import numpy as np
import pytest
from scipy import integrate

from chxray.geodesic import distance
from chxray.manifold import (ModelError, WarpedProfile, curvature_sup, gronwall_profile_bound, make_euclidean,
                             make_hyperbolic, make_warped, make_warped_preset, parse_model, profile_from_curvature,
                             sphere_volume)


def random_planes(rng, M, n):
    x = rng.normal(size=(n, M.dim))
    u, w = rng.normal(size=(2, n, M.dim))
    return x, u, w


def test_euclidean_is_flat(rng):
    M = make_euclidean(2)
    x, u, w = random_planes(rng, M, 20)
    assert np.allclose(M.sectional_curvature(x, u, w), 0.0)
    assert np.all(make_euclidean(3).christoffel(np.array([1.0, 2.0, 3.0])) == 0)
    assert distance(M, np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_euclidean_rejects_low_dimension():
    with pytest.raises(ModelError):
        make_euclidean(1)


@pytest.mark.parametrize("n", [2, 3])
def test_hyperbolic_constant_curvature(rng, n):
    M = make_hyperbolic(n, 1.0)
    x, u, w = random_planes(rng, M, 100)
    assert np.max(np.abs(M.sectional_curvature(x, u, w) + 1.0)) <= 1e-8


def test_hyperbolic_kappa_and_volume(rng):
    M = make_hyperbolic(2, 4.0)
    assert np.allclose(M.kappa_bound(rng.normal(size=(10, 2))), 4.0)
    H = make_hyperbolic(2, 1.0)
    assert sphere_volume(H, 1.0) == pytest.approx(2 * math.pi * math.sinh(1.0), rel=1e-12)
    assert sphere_volume(H, 3.0) == pytest.approx(62.94, abs=5e-3)
    with pytest.raises(ModelError):
        make_hyperbolic(2, 0.0)


def test_euclidean_sphere_volume():
    assert sphere_volume(make_euclidean(2), 2.0) == pytest.approx(4 * math.pi)
    assert sphere_volume(make_euclidean(2), 2.0, "jacobi") == pytest.approx(4 * math.pi, rel=1e-10)


def test_profile_flat_and_sinh():
    flat = profile_from_curvature(lambda r: np.zeros_like(r), 5.0)
    r = np.linspace(0, 5, 11)
    assert np.allclose(flat.f(r), r, atol=1e-12)
    prof = profile_from_curvature(lambda r: -np.ones_like(r), 5.0)
    assert abs(prof.f(np.array([2.0]))[0] - 3.62686) <= 1e-5
    assert abs(prof.f(np.array([2.0]))[0] - math.sinh(2.0)) <= 1e-6


def test_profile_rejects_positive_curvature():
    with pytest.raises(ModelError):
        profile_from_curvature(lambda r: 0.1 * np.ones_like(r), 2.0)


def test_powerlaw_profile_growth(P3):
    A = integrate.quad(lambda s: s * (1 + s) ** -3.0, 0, np.inf)[0]
    assert gronwall_profile_bound(lambda r: -(1 + r) ** -3.0) == pytest.approx(math.exp(A), rel=1e-6)
    r = np.linspace(0.0, 200.0, 2001)
    f = P3.profile.f(r)
    assert np.all(np.diff(f) > 0)
    ratio = f[-1] / r[-1]
    assert 1.0 <= ratio <= math.exp(A)
    assert 1.0 <= sphere_volume(P3, 10.0) / (2 * math.pi * 10.0) <= math.exp(A)


def test_warped_curvature_matches_input(rng, P3):
    x = rng.uniform(-20, 20, size=(50, 2))
    r = np.linalg.norm(x, axis=1)
    K = P3.curvatures(x)[0]
    assert np.max(np.abs(K + (1 + r) ** -3.0)) <= 1e-6
    S = make_warped_preset("constant:1", r_max=12)
    rr = np.linspace(0.1, 5, 20)
    xs = np.stack([rr, 0 * rr], -1)
    assert np.max(np.abs(S.curvatures(xs)[0] + 1.0)) <= 1e-7


def test_curvature_sup():
    assert curvature_sup(make_hyperbolic(2, 2.5)) == pytest.approx(2.5)
    assert curvature_sup(make_warped_preset("powerlaw:1,3")) == pytest.approx(1.0, rel=1e-6)
    assert curvature_sup(make_euclidean(2)) == 0.0


@pytest.mark.parametrize("spec", ["hyperbolic:1.3:3", "warped:powerlaw:1,3", "euclidean"])
def test_christoffel_matches_metric_derivative(rng, spec):
    M = parse_model(spec)
    n = M.dim
    for x in rng.normal(size=(10, n)) * 1.5:
        h = 1e-5
        dg = np.array([(M.metric(x + h * e) - M.metric(x - h * e)) / (2 * h) for e in np.eye(n)])
        low = 0.5 * (np.einsum("ilj->lij", dg) + np.einsum("jli->lij", dg) - dg)
        G = np.einsum("kl,lij->kij", np.linalg.inv(M.metric(x)), low)
        assert np.max(np.abs(G - M.christoffel(x))) <= 1e-7


def test_frame_is_orthonormal(rng, H2, P3):
    for M in (H2, P3):
        x = rng.normal(size=(30, 2))
        F = M.frame(x)
        G = np.einsum("nia,nij,njb->nab", F, M.metric(x), F)
        assert np.max(np.abs(G - np.eye(2))) <= 1e-12


def test_profile_csv_roundtrip(tmp_path):
    prof = profile_from_curvature(lambda r: -(1 + r) ** -3.0, 10.0, 1e-2)
    prof.to_csv(tmp_path / "p.csv")
    back = WarpedProfile.from_csv(tmp_path / "p.csv")
    r = np.linspace(0, 9.9, 50)
    assert np.allclose(back.f(r), prof.f(r), rtol=1e-12)
    M = make_warped(back)
    assert M.dim == 2


def test_bad_model_spec():
    for spec in ["sphere", "hyperbolic:x", "warped:"]:
        with pytest.raises(ModelError):
            parse_model(spec)


def test_volume_growth_bounded_curvature():
    H = make_hyperbolic(2, 1.0)
    r = np.linspace(0.5, 20, 40)
    g = np.array([math.log(sphere_volume(H, s)) for s in r]) - r
    assert np.max(g) <= math.log(math.pi) + 1e-9
