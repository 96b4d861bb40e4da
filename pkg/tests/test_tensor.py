import itertools
import math

import numpy as np
import pytest

from chxray.geodesic import geodesic_endpoint, sample_sm
from chxray.tensor import (Decay, SymmetricTensorField, asymmetry, bump, decay_check, decay_check_values,
                           field_from_spec, gaussian, lambda_eval, metric_field, norm_g, poly_bump, radial_exp,
                           radial_power, raise_degree, sm_derivatives, sym_array, sym_nabla, symmetrize,
                           zero_field)


def const_field(A, dim=2):
    A = np.asarray(A, dtype=float)
    m = A.ndim
    return SymmetricTensorField(m, dim, lambda x: np.broadcast_to(A, x.shape[:-1] + A.shape))


def test_lambda_basic(rng, E2, H2):
    x = rng.normal(size=(10, 2))
    v = H2.normalize(x, rng.normal(size=(10, 2)))
    h = bump(2, [0.1, 0.0], 2.0)
    assert np.allclose(h.lam(x, v), h(x))
    th = rng.uniform(0, 2 * np.pi, 10)
    dx1 = const_field([1.0, 0.0])
    assert np.allclose(dx1.lam(x, np.stack([np.cos(th), np.sin(th)], -1)), np.cos(th))
    assert np.allclose(metric_field(H2).lam(x, v), 1.0, atol=1e-12)


def test_lambda_order_mismatch():
    with pytest.raises(ValueError):
        lambda_eval(const_field([1.0, 0.0]), np.zeros(2), np.zeros(3))


def test_symmetrize_two_tensor():
    T = const_field([[0.0, 1.0], [0.0, 0.0]])
    S = symmetrize(T)
    assert np.allclose(S(np.zeros(2)), [[0, 0.5], [0.5, 0]])
    assert np.array_equal(symmetrize(S)(np.zeros(2)), S(np.zeros(2)))


def test_symmetrize_three_tensor_bruteforce(rng):
    A = rng.normal(size=(3, 3, 3))
    brute = sum(np.transpose(A, p) for p in itertools.permutations(range(3))) / 6
    assert np.max(np.abs(sym_array(A, 3) - brute)) <= 1e-14
    v = rng.normal(size=(20, 3))
    T = const_field(A, 3)
    assert np.max(np.abs(symmetrize(T).lam(np.zeros((20, 3)), v) - T.lam(np.zeros((20, 3)), v))) <= 1e-12


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_lambda_sigma_compatible(rng, m):
    A = rng.normal(size=(2,) * m)
    v = rng.normal(size=(30, 2))
    x = np.zeros((30, 2))
    T = const_field(A)
    assert np.max(np.abs(symmetrize(T).lam(x, v) - T.lam(x, v))) <= 1e-12


def test_sym_nabla_coordinate(E2, rng):
    h = SymmetricTensorField(0, 2, lambda x: x[..., 0])
    x = rng.normal(size=(5, 2))
    assert np.allclose(sym_nabla(E2, h)(x), [1.0, 0.0], atol=1e-10)


def test_sym_nabla_squared_distance(rng, H2):
    s = sample_sm(H2, 100, 2.0, rng)
    h = SymmetricTensorField(0, 2, lambda x: np.sum(x**2, axis=-1))
    val = sym_nabla(H2, h).lam(s.x, s.v)
    assert np.max(np.abs(val - 2 * np.einsum("ni,ni->n", s.x, s.v))) <= 1e-4


@pytest.mark.parametrize("order", [0, 1, 2])
def test_sym_nabla_is_flow_derivative(rng, P3, order):
    s = sample_sm(P3, 30, 1.5, rng)
    h = bump(2, [0.2, -0.1], 1.5, order, [1.0, 0.5][: 2] if order else None)
    F = sym_nabla(P3, h)
    d = 1e-4
    xp, vp = geodesic_endpoint(P3, s.x, s.v, d, h=d / 4)
    xm, vm = geodesic_endpoint(P3, s.x, s.v, -d, h=d / 4)
    fd = (h.lam(xp, vp) - h.lam(xm, vm)) / (2 * d)
    assert np.max(np.abs(F.lam(s.x, s.v) - fd)) <= 5e-6
    assert asymmetry(F(s.x), order + 1) <= 1e-12


@pytest.mark.parametrize("m", [0, 1, 2])
def test_raise_degree(rng, H2, m):
    F = gaussian(2, [0.1, 0.2], 1.0, m, [1.0, -0.5] if m else None)
    x = rng.normal(size=(100, 2))
    v = H2.normalize(x, rng.normal(size=(100, 2)))
    aF = raise_degree(H2, F)
    aaF = raise_degree(H2, aF)
    assert np.max(np.abs(aF.lam(x, v) - F.lam(x, v))) <= 1e-12
    assert np.max(np.abs(aaF.lam(x, v) - F.lam(x, v))) <= 1e-12


def test_decay_examples(H2):
    r = np.linspace(1, 20, 40)
    assert decay_check(H2, radial_exp(2, 2.0), "E", 2.0, r).ok
    assert not decay_check(H2, radial_exp(2, 2.0), "E", 2.5, r).ok
    r = np.linspace(1, 50, 40)
    assert decay_check(H2, radial_power(2, 3.0), "P", 3.0, r).ok
    assert not decay_check(H2, radial_power(2, 3.0), "P", 4.0, r).ok
    one = SymmetricTensorField(0, 2, lambda x: np.ones(x.shape[:-1]))
    for kind in ("E", "P"):
        assert not decay_check(H2, one, kind, 0.5, r).ok


def test_decay_check_converging_weight_is_bounded():
    r = np.geomspace(1, 100, 12)
    assert decay_check_values(np.exp(-2 * np.sqrt(1 + r**2)), r, "E", 2.0).ok
    assert decay_check_values(1 - 1 / (1 + r), r, "P", 0.0).ok
    assert not decay_check_values(np.log1p(r), r, "P", 0.0).ok


def test_decay_transfer_powerlaw(P3):
    # f = (1+r^2)^{-eta/2} dr lies in P^1_eta
    eta = 3.0

    def coeff(x):
        s = np.sqrt(1 + np.sum(x**2, -1))
        return (s ** (-eta) / s)[..., None] * x

    f = SymmetricTensorField(1, 2, coeff, Decay("P", eta))
    r = np.geomspace(1, 100, 12)
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    x = r[:, None, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None, :, None, :]
    x = np.broadcast_to(x, (12, 16, 16, 2))
    w = np.broadcast_to(np.stack([np.cos(th), np.sin(th)], -1)[None, None], x.shape)
    v = np.einsum("...ij,...j->...i", P3.frame(x), w)
    X, gh, gv = sm_derivatives(P3, f, x, v)
    sup = lambda a: np.max(a.reshape(12, -1), axis=1)
    assert decay_check_values(sup(np.abs(X)), r, "P", eta + 1).ok
    assert decay_check_values(sup(P3.norm(x, gh)), r, "P", eta + 1).ok
    assert decay_check_values(sup(P3.norm(x, gv)), r, "P", eta).ok
    assert not decay_check_values(sup(P3.norm(x, gv)), r, "P", eta + 1).ok


def test_sm_derivatives_batched_matches_pointwise(rng, H2):
    f = bump(2, [0.1, 0.2], 1.0, 2, [1.0, 2.0])
    x = rng.normal(size=(5, 2)) * 0.4
    v = H2.normalize(x, rng.normal(size=(5, 2)))
    batch = sm_derivatives(H2, f, x, v)
    for i in range(5):
        single = sm_derivatives(H2, f, x[i], v[i])
        for a, b in zip(batch, single):
            assert np.allclose(a[i], b, atol=1e-14)


def test_vertical_gradient_orthogonal_to_v(rng, H2):
    f = gaussian(2, [0.3, 0.0], 0.7, 1, [1.0, 1.0])
    x = rng.normal(size=(20, 2))
    v = H2.normalize(x, rng.normal(size=(20, 2)))
    _, gh, gv = sm_derivatives(H2, f, x, v)
    assert np.max(np.abs(H2.inner(x, gh, v))) <= 1e-10
    assert np.max(np.abs(H2.inner(x, gv, v))) <= 1e-10


def test_presets(H2):
    x = np.array([[0.1, 0.2]])
    for spec in ["gaussian", "gaussian_bump", "bump", "poly_bump", "radial_power", "radial_exp", "zero",
                 {"preset": "potential_of", "h": {"preset": "bump", "radius": 0.5}}]:
        f = field_from_spec(H2, spec)
        assert np.all(np.isfinite(f(x)))
    with pytest.raises(ValueError):
        field_from_spec(H2, "nope")


def test_poly_bump_support(rng):
    f = poly_bump(2, [0.1, 0.0], 0.5, 4, 1, [1.0, 0.0])
    x = rng.normal(size=(200, 2)) * 2
    outside = np.linalg.norm(x - [0.1, 0.0], axis=1) >= 0.5
    assert np.all(f(x)[outside] == 0)
    assert f.decay.support_radius == pytest.approx(0.6)


def test_norm_g_metric(H2, rng):
    x = rng.normal(size=(4, 2))
    assert np.allclose(norm_g(H2, metric_field(H2), x), math.sqrt(2))
    assert np.all(norm_g(H2, zero_field(2, 1), x) == 0)


def test_field_algebra(rng):
    a, b = gaussian(2), bump(2)
    x = rng.normal(size=(5, 2))
    assert np.allclose((a + b)(x), a(x) + b(x))
    assert np.allclose(a.scale(-2.0)(x), -2.0 * a(x))
    with pytest.raises(ValueError):
        a + gaussian(2, order=1, polarization=[1.0, 0.0])
