import math

import numpy as np
import pytest

from chxray.geodesic import SMPoint, sample_sm
from chxray.tensor import Decay, SymmetricTensorField, bump, gaussian, radial_exp, radial_power, sym_nabla
from chxray.xray import (DecayClassError, HorizonOverflowError, choose_horizon, gradient_symmetry_check,
                         kernel_probe, tail_bound, transport_residual, uf, uf_decay_check, xray_transform)


def test_gaussian_line_through_origin(E2):
    p = SMPoint.make(E2, [[0.0, -1.0]], [[1.0, 0.0]])
    val = xray_transform(E2, gaussian(2), p, 1e-10).value[0]
    assert val == pytest.approx(math.sqrt(math.pi) * math.exp(-1.0), abs=1e-8)


def test_reversal_parity(rng, H2):
    p = sample_sm(H2, 10, 1.5, rng)
    for m, f in [(0, gaussian(2)), (1, gaussian(2, order=1, polarization=[1.0, 0.5]))]:
        a = xray_transform(H2, f, p, 1e-9).value
        b = xray_transform(H2, f, p.reversed(), 1e-9).value
        assert np.max(np.abs(b - (-1) ** m * a)) <= 1e-7


def test_uf_splits_transform(rng, P3):
    f = gaussian(2, [0.2, 0.1], 0.8, 1, [0.3, 1.0])
    p = sample_sm(P3, 8, 1.5, rng)
    I = xray_transform(P3, f, p, 1e-9).value
    u = uf(P3, f, p, 1e-9).value - uf(P3, f, p.reversed(), 1e-9).value
    assert np.max(np.abs(I - u)) <= 1e-8


@pytest.mark.parametrize("model", ["E2", "H2", "P3"])
def test_kernel_one_form(request, rng, model):
    M = request.getfixturevalue(model)
    h = bump(2, [0.3, -0.2], 1.0)
    seeds = sample_sm(M, 20, 2.0, rng)
    assert kernel_probe(M, h, seeds, 1e-10) <= 1e-6


def test_kernel_two_tensor_powerlaw(rng, P3):
    h = bump(2, [0.1, 0.2], 0.9, 1, [1.0, -1.0])
    seeds = sample_sm(P3, 10, 1.5, rng)
    assert kernel_probe(P3, h, seeds, 1e-10) <= 1e-5


def test_uf_of_potential_is_minus_h(rng, H2):
    h = bump(2, [0.0, 0.3], 1.0)
    f = sym_nabla(H2, h)
    p = sample_sm(H2, 10, 1.2, rng)
    assert np.max(np.abs(uf(H2, f, p, 1e-10).value + h.lam(p.x, p.v))) <= 1e-7


def test_uf_exponential_bound(H2):
    f = radial_exp(2, 2.0)
    x = np.array([[3.0, 0.0]])
    v = H2.normalize(x, np.array([[1.0, 0.0]]))
    val = uf(H2, f, SMPoint(x, v), 1e-10).value[0]
    assert 0 < val <= math.exp(-6.0) / 2.0 * (1 + 1e-9)


def test_transport_residual_second_order(rng, E2):
    p = sample_sm(E2, 5, 2.0, rng)
    f = gaussian(2)
    r1 = np.max(transport_residual(E2, f, p, 0.02, 1e-12))
    r2 = np.max(transport_residual(E2, f, p, 0.01, 1e-12))
    assert r2 <= 1e-4
    assert math.log2(r1 / r2) >= 1.8


def test_gradient_parity_for_potential(rng, H2):
    f = sym_nabla(H2, bump(2, [0.0, 0.0], 1.0))
    p = sample_sm(H2, 4, 1.0, rng)
    rep = gradient_symmetry_check(H2, f, p, 1e-3, 1e-11)
    assert rep.horizontal_defect <= 1e-5
    assert rep.vertical_defect <= 1e-5


def test_additivity(rng, H2):
    a = gaussian(2, [0.3, 0.0], 0.5)
    b = bump(2, [-0.2, 0.4], 0.8)
    p = sample_sm(H2, 10, 1.5, rng)
    lhs = xray_transform(H2, (a + b.scale(2.0)), p, 1e-10).value
    rhs = xray_transform(H2, a, p, 1e-10).value + 2 * xray_transform(H2, b, p, 1e-10).value
    assert np.max(np.abs(lhs - rhs)) <= 1e-8


def test_tail_bound_meets_budget():
    d = Decay("P", 3.0)
    d0 = np.array([0.0, 1.0, 4.0])
    esc = np.array([True, False, True])
    T = choose_horizon(d, d0, esc, 1e-6)
    assert np.all(tail_bound(d, d0, esc, T) <= 0.5e-6 * (1 + 1e-6))


def test_horizon_overflow(H2):
    f = radial_power(2, 1.2)
    p = SMPoint.make(H2, [[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(HorizonOverflowError):
        uf(H2, f, p, 1e-12)


def test_non_integrable_field_rejected(E2):
    f = SymmetricTensorField(0, 2, lambda x: np.ones(x.shape[:-1]), Decay("P", 0.5))
    p = SMPoint.make(E2, [[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(DecayClassError):
        uf(E2, f, p)
    with pytest.raises(ValueError):
        choose_horizon(Decay("E", 1.0), [0.0], [True], 0.0)


def test_uf_decay_of_potential(H2):
    h = radial_exp(2, 2.0)
    f = sym_nabla(H2, h)
    f = SymmetricTensorField(1, 2, f.coeff, Decay("E", 2.0, C=4.0))
    assert uf_decay_check(H2, f, np.geomspace(1, 6, 8), n_dirs=8).ok


def test_compact_field_error_budget_finite(H2):
    f = bump(2, None, 0.8, 1)
    p = sample_sm(H2, 100, 2.0, np.random.default_rng(0))
    t = xray_transform(H2, f, p, 1e-8)
    assert np.all(t.tail_bound == 0)
    assert np.all(t.quad_error <= 1e-8)
