import math

import numpy as np
import pytest

from chxray.geodesic import (GeodesicError, SMPoint, check_distance_bounds, distance, geodesic_endpoint,
                             integrate_geodesic, is_escaping, sample_sm)
from chxray.manifold import make_warped_preset


def test_straight_line(E2):
    path = integrate_geodesic(E2, SMPoint.make(E2, [0, 0], [1, 0]), 5.0)
    assert np.allclose(path.x[-1], [5.0, 0.0], atol=1e-12)


def test_hyperbolic_radial_and_pythagoras(H2):
    path = integrate_geodesic(H2, SMPoint.make(H2, [1, 0], [1, 0]), 2.0)
    assert H2.dist_to_o(path.x[-1]) == pytest.approx(3.0, abs=1e-9)
    path = integrate_geodesic(H2, SMPoint.make(H2, [1, 0], [0, 1]), 2.0)
    d = H2.dist_to_o(path.x[-1])
    assert math.cosh(d) == pytest.approx(math.cosh(1) * math.cosh(2), rel=1e-8)
    assert d == pytest.approx(2.44443, abs=1e-5)


def test_unit_speed_conserved(rng, H2, P3):
    for M in (H2, P3):
        p = sample_sm(M, 20, 3.0, rng)
        path = integrate_geodesic(M, p, 10.0)
        assert path.speed_error(M) <= 1e-8


def test_reversibility(rng, H2):
    s = sample_sm(H2, 50, 3.0, rng)
    xe, ve = geodesic_endpoint(H2, s.x, s.v, 10.0)
    xb, _ = geodesic_endpoint(H2, xe, -ve, 10.0)
    assert np.max(np.abs(xb - s.x)) <= 1e-6


def test_distance_closed_forms(H2, E2):
    assert distance(E2, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    assert distance(H2, [1.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0, abs=1e-12)


def test_shooting_distance_matches_hyperbolic(rng, H2):
    W = make_warped_preset("constant:1", r_max=30)
    x, y = rng.normal(size=(2, 10, 2))
    assert np.max(np.abs(distance(W, x, y) - distance(H2, x, y))) <= 1e-6
    assert np.allclose(distance(W, np.zeros(2), x), np.linalg.norm(x, axis=1), atol=1e-8)


def test_distance_symmetry_triangle(rng, P3):
    x, y, z = rng.normal(size=(3, 8, 2)) * 2
    dxy, dyx = distance(P3, x, y), distance(P3, y, x)
    assert np.max(np.abs(dxy - dyx)) <= 1e-8
    assert np.all(dxy <= distance(P3, x, z) + distance(P3, z, y) + 1e-8)


def test_escaping_examples(E2, H2):
    for v in ([1, 0], [0, 1], [-1, 1]):
        assert is_escaping(H2, SMPoint.make(H2, [0, 0], v))
    assert is_escaping(E2, SMPoint.make(E2, [1, 0], [1, 0]))
    assert not is_escaping(E2, SMPoint.make(E2, [1, 0], [-1, 0]))


def test_escaping_dichotomy(rng, H2):
    s = sample_sm(H2, 10_000, 5.0, rng)
    assert np.all(is_escaping(H2, s) | is_escaping(H2, s.reversed()))


def test_sample_escaping_flag(rng, P3):
    assert np.all(is_escaping(P3, sample_sm(P3, 200, 3.0, rng, escaping=True)))
    assert not np.any(is_escaping(P3, sample_sm(P3, 200, 3.0, rng, escaping=False)))


def test_pythagoras_equality(E2):
    rep = check_distance_bounds(E2, SMPoint.make(E2, [[2.0, 0.0]], [[0.0, 1.0]]), 10.0)
    assert abs(rep.min_strong()) <= 1e-10


@pytest.mark.parametrize("name", ["H2", "P3"])
def test_distance_bounds(rng, request, name):
    M = request.getfixturevalue(name)
    rep = check_distance_bounds(M, sample_sm(M, 100, 3.0, rng, escaping=True), 10.0)
    assert rep.min_strong() >= -1e-6
    assert np.nanmin(rep.piecewise) >= -1e-6
    rep = check_distance_bounds(M, sample_sm(M, 100, 3.0, rng), 10.0)
    assert rep.triangle.min() >= -1e-6


def test_geodesic_csv(tmp_path, H2):
    path = integrate_geodesic(H2, SMPoint.make(H2, [0.5, 0], [0, 1]), 1.0)
    path.to_csv(tmp_path / "g.csv")
    data = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
    assert data.shape == (len(path.t), 5)


def test_bad_step_and_velocity(H2):
    with pytest.raises(ValueError):
        integrate_geodesic(H2, SMPoint.make(H2, [0, 0], [1, 0]), 1.0, h=0.0)
    with pytest.raises(GeodesicError):
        integrate_geodesic(H2, SMPoint(np.zeros(2), np.zeros(2)), 1.0)


def test_backward_flow(H2):
    p = SMPoint.make(H2, [0.3, 0.1], [0.2, 1.0])
    fwd = integrate_geodesic(H2, p.reversed(), 2.0)
    bwd = integrate_geodesic(H2, p, -2.0)
    assert np.allclose(fwd.x[-1], bwd.x[-1], atol=1e-12)
