"""Geodesic X-ray transform, the one-sided primitive u^f and its identities.

Integrals are composite Simpson sums on the RK4 grid of the geodesic
integration.  The horizon T is chosen so that the decay class of the field
bounds the neglected tail by tol/2; the quadrature error, estimated by
Richardson extrapolation against the 2h Simpson sum, gets the other half.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .geodesic import SMPoint, flow_steps, is_escaping, time_grid
from .manifold import ManifoldModel
from .tensor import Decay, DecayResult, SymmetricTensorField, decay_check_values, sym_nabla

HORIZON_MAX = 1e4
QUAD_STEP = 1e-2
MAX_REFINE = 4


class HorizonOverflowError(RuntimeError):
    """Tolerance not reachable within the admissible integration horizon."""


class DecayClassError(ValueError):
    """Field without an integrable decay class."""


@dataclass
class TransformSample:
    """Batch of transform values with their error budget."""

    seeds: SMPoint
    value: np.ndarray
    tail_bound: np.ndarray
    quad_error: np.ndarray
    horizon: np.ndarray


# ---------------------------------------------------------------------------
# horizons
# ---------------------------------------------------------------------------


def _escaping_power_tail(C, eta, d0, T):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda t: (1.0 + math.sqrt(d0 * d0 + t * t)) ** (-eta), T, np.inf, limit=200)
    return C * val


def tail_bound(decay: Decay, d0, escaping, T):
    """Upper bound for int_T^inf |f(gamma(t))|_g dt from the decay class.

    Uses d(gamma(t), o) >= t - d0 in general and >= sqrt(d0^2 + t^2) for
    escaping rays.
    """
    d0 = np.atleast_1d(np.asarray(d0, dtype=float))
    esc = np.broadcast_to(np.asarray(escaping, dtype=bool), d0.shape)
    T = np.broadcast_to(np.asarray(T, dtype=float), d0.shape)
    if decay.support_radius is not None:
        lo = np.where(esc, np.sqrt(np.maximum(d0**2 + T**2, 0.0)), T - d0)
        # relative slack absorbs the rounding in (d0 + R) - d0
        return np.where(lo >= decay.support_radius * (1 - 1e-12), 0.0, np.inf)
    if decay.kind == "E" and decay.eta > 0:
        shift = np.where(esc, T, T - d0)
        return decay.C * np.exp(-decay.eta * shift) / decay.eta
    if decay.kind == "P" and decay.eta > 1:
        out = np.empty_like(d0)
        for i in range(d0.size):
            if esc[i]:
                out[i] = _escaping_power_tail(decay.C, decay.eta, d0[i], T[i])
            else:
                s = T[i] - d0[i]
                out[i] = decay.C * (1.0 + s) ** (1.0 - decay.eta) / (decay.eta - 1.0) if s >= 0 else np.inf
        return out
    raise DecayClassError("field has no integrable decay class")


def choose_horizon(decay: Decay, d0, escaping, tol, horizon_max: float = HORIZON_MAX) -> np.ndarray:
    """Smallest T with tail_bound(T) <= tol/2 (closed form where available)."""
    d0 = np.atleast_1d(np.asarray(d0, dtype=float))
    esc = np.broadcast_to(np.asarray(escaping, dtype=bool), d0.shape)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), d0.shape)
    if np.any(tol <= 0):
        raise ValueError("tol must be positive")
    half = 0.5 * tol
    if decay.support_radius is not None:
        R = decay.support_radius
        T = np.where(esc, np.sqrt(np.maximum(R * R - d0 * d0, 0.0)), d0 + R)
    elif decay.kind == "E" and decay.eta > 0:
        eta = decay.eta
        T = np.maximum(np.log(decay.C / (eta * half)) / eta, 0.0) + np.where(esc, 0.0, d0)
    elif decay.kind == "P" and decay.eta > 1:
        eta = decay.eta
        base = (decay.C / ((eta - 1.0) * half)) ** (1.0 / (eta - 1.0)) - 1.0
        T = np.maximum(base, 0.0) + np.where(esc, 0.0, d0)
        for i in np.flatnonzero(esc):
            # the escaping tail can be much smaller; solve for it
            g = lambda s, i=i: _escaping_power_tail(decay.C, eta, d0[i], s) - half[i]
            hi = min(T[i], horizon_max)
            if g(0.0) <= 0:
                T[i] = 0.0
            elif g(hi) < 0:
                T[i] = optimize.brentq(g, 0.0, hi, xtol=1e-6)
    else:
        raise DecayClassError("field has no integrable decay class (need E_eta, eta>0, or P_eta, eta>1)")
    if np.any(T > horizon_max):
        raise HorizonOverflowError(f"horizon {float(np.max(T)):.3g} exceeds limit {horizon_max:.3g}; "
                                   "tolerance unreachable")
    return T


def _check_reach(M: ManifoldModel, d0, T):
    far = float(np.max(d0 + T)) if np.size(T) else 0.0
    if far > M.r_max:
        raise HorizonOverflowError(f"geodesics may reach radius {far:.3g} beyond the model's r_max={M.r_max:.3g}")


# ---------------------------------------------------------------------------
# one-sided primitive
# ---------------------------------------------------------------------------


def _simpson_flow(M: ManifoldModel, f: SymmetricTensorField, x, v, T: float, h: float):
    """Simpson sums S_h and S_2h of lambda(f) along gamma_{x,v} on [0, T]."""
    n, hs = time_grid(T, h, multiple=4)
    s1 = np.zeros(len(x))
    s2 = np.zeros(len(x))
    for i, (_, xt, vt, _) in enumerate(flow_steps(M, x, v, T, h, multiple=4)):
        val = f.lam(xt, vt)
        w1 = 1.0 if i in (0, n) else (4.0 if i % 2 else 2.0)
        s1 += w1 * val
        if i % 2 == 0:
            j = i // 2
            w2 = 1.0 if j in (0, n // 2) else (4.0 if j % 2 else 2.0)
            s2 += w2 * val
    return s1 * hs / 3.0, s2 * 2.0 * hs / 3.0


def primitive(M: ManifoldModel, f: SymmetricTensorField, x, v, T, tol, h: float | None = None):
    """int_0^T lambda(f)(phi_t(x, v)) dt with adaptive step halving.

    Rays sharing a batch use the largest horizon.  Returns (value, quad_error, h).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    Tm = float(np.max(T)) if np.size(T) else 0.0
    if Tm <= 0:
        return np.zeros(len(x)), np.zeros(len(x)), 0.0
    h = QUAD_STEP if h is None else h
    budget = 0.5 * np.broadcast_to(np.asarray(tol, dtype=float), (len(x),))
    for _ in range(MAX_REFINE + 1):
        s1, s2 = _simpson_flow(M, f, x, v, Tm, h)
        err = np.abs(s1 - s2) / 15.0
        if np.all(err <= budget):
            break
        h *= 0.5
    return s1, err, h


def uf(M: ManifoldModel, f: SymmetricTensorField, p: SMPoint, tol=1e-8, h: float | None = None) -> TransformSample:
    """u^f(x, v) = int_0^inf f(gamma_{x,v}(t))(gamma', ..., gamma') dt."""
    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    if not f.decay.integrable:
        raise DecayClassError("u^f needs E_eta (eta>0), P_eta (eta>1) or compact support")
    d0 = M.dist_to_o(x)
    esc = is_escaping(M, x, v)
    T = choose_horizon(f.decay, d0, esc, tol)
    _check_reach(M, d0, T)
    val, qerr, _ = primitive(M, f, x, v, T, tol, h)
    Tm = np.full(len(x), float(np.max(T)) if T.size else 0.0)
    tail = tail_bound(f.decay, d0, esc, Tm)
    return TransformSample(SMPoint(x, v), val, tail, qerr, Tm)


def xray_transform(M: ManifoldModel, f: SymmetricTensorField, p: SMPoint, tol=1e-8,
                   h: float | None = None) -> TransformSample:
    """I_m f(gamma_{x,v}) = u^f(x, v) + (-1)^m u^f(x, -v), both rays in one batch."""
    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    N = len(x)
    both = SMPoint(np.concatenate([x, x]), np.concatenate([v, -v]))
    tol_each = 0.5 * np.broadcast_to(np.asarray(tol, dtype=float), (N,))
    u = uf(M, f, both, np.concatenate([tol_each, tol_each]), h)
    sign = (-1.0) ** f.order
    val = u.value[:N] + sign * u.value[N:]
    return TransformSample(SMPoint(x, v), val, u.tail_bound[:N] + u.tail_bound[N:],
                           u.quad_error[:N] + u.quad_error[N:], u.horizon[:N])


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def flow_point(M: ManifoldModel, p: SMPoint, s: float, h: float | None = None) -> SMPoint:
    """phi_s(x, v) by RK4 with a step no larger than s/8."""
    from .geodesic import geodesic_endpoint

    if s == 0:
        return p
    step = min(abs(s) / 8.0, 1e-3) if h is None else h
    xe, ve = geodesic_endpoint(M, np.atleast_2d(p.x), np.atleast_2d(p.v), s, step)
    return SMPoint(xe, ve)


def transport_residual(M: ManifoldModel, f: SymmetricTensorField, p: SMPoint, h_fd: float,
                       tol=1e-11) -> np.ndarray:
    """|(u^f(phi_h p) - u^f(phi_{-h} p)) / 2h + lambda(f)(p)|, batched."""
    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    plus = flow_point(M, SMPoint(x, v), h_fd)
    minus = flow_point(M, SMPoint(x, v), -h_fd)
    both = SMPoint(np.concatenate([plus.x, minus.x]), np.concatenate([plus.v, minus.v]))
    u = uf(M, f, both, tol).value
    N = len(x)
    return np.abs((u[:N] - u[N:]) / (2.0 * h_fd) + f.lam(x, v))


def kernel_probe(M: ManifoldModel, h: SymmetricTensorField, seeds: SMPoint, tol=1e-10,
                 quad_h: float | None = None) -> float:
    """max over seeds of |I_m(sigma nabla h)|."""
    f = sym_nabla(M, h)
    return float(np.max(np.abs(xray_transform(M, f, seeds, tol, quad_h).value)))


def parallel_transport(M: ManifoldModel, x, w, vec, s: float, step: float | None = None):
    """Move along gamma_{x,w} for time s and transport ``vec`` in parallel."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    step = min(abs(s) / 8.0, 1e-3) if step is None else step

    def rhs(xs, vs, aux):
        return (-M.christoffel_contract(xs, vs, aux[0]),)

    for _, xe, _, aux in flow_steps(M, x, w, s, step, aux=(np.atleast_2d(vec),), aux_rhs=rhs):
        pass
    return xe, aux[0]


def horizontal_flow(M: ManifoldModel, p: SMPoint, w, s: float) -> SMPoint:
    """phi^h_{w,s}(x, v) = (gamma_{x,w}(s), parallel transport of v)."""
    if s == 0:
        return p
    xe, ve = parallel_transport(M, p.x, w, p.v, s)
    return SMPoint(xe, ve)


def vertical_flow(M: ManifoldModel, p: SMPoint, w, s: float) -> SMPoint:
    """phi^v_{w,s}(x, v) = (x, cos(s) v + sin(s) w)."""
    return SMPoint(np.atleast_2d(p.x), math.cos(s) * np.atleast_2d(p.v) + math.sin(s) * np.atleast_2d(w))


def flow_derivatives(M: ManifoldModel, u, p: SMPoint, w, h_fd: float):
    """Central differences of u along the horizontal and vertical flows in direction w."""
    hp, hm = horizontal_flow(M, p, w, h_fd), horizontal_flow(M, p, w, -h_fd)
    vp, vm = vertical_flow(M, p, w, h_fd), vertical_flow(M, p, w, -h_fd)
    dh = (u(hp) - u(hm)) / (2 * h_fd)
    dv = (u(vp) - u(vm)) / (2 * h_fd)
    return dh, dv


@dataclass
class GradientSymmetryReport:
    horizontal_defect: float
    vertical_defect: float


def gradient_symmetry_check(M: ManifoldModel, f: SymmetricTensorField, p: SMPoint, h_fd: float = 1e-3,
                            tol=1e-10, w=None) -> GradientSymmetryReport:
    """Parity defects of the SM gradients of u^f under v -> -v (If = 0 inputs).

    <grad^h u(x,-v), w> should equal (-1)^{m-1} <grad^h u(x,v), w> and
    <grad^v u(x,-v), w> should equal (-1)^m <grad^v u(x,v), w>, for w
    normal to v.
    """
    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    if w is None:
        if M.dim != 2:
            raise ValueError("pass w explicitly for n > 2")
        w = M.perp(x, v)
    m = f.order

    def u(q: SMPoint):
        return uf(M, f, q, tol).value

    dh_p, dv_p = flow_derivatives(M, u, SMPoint(x, v), w, h_fd)
    dh_m, dv_m = flow_derivatives(M, u, SMPoint(x, -v), w, h_fd)
    return GradientSymmetryReport(float(np.max(np.abs(dh_m - (-1) ** (m - 1) * dh_p))),
                                  float(np.max(np.abs(dv_m - (-1) ** m * dv_p))))


def uf_decay_profile(M: ManifoldModel, f: SymmetricTensorField, radii, n_dirs: int = 16,
                     rel_tol: float = 1e-6) -> np.ndarray:
    """sup_v |u^f(x, v)| over points on a ray, for fields with If = 0.

    Only escaping directions are integrated: If = 0 gives |u^f(x,v)| = |u^f(x,-v)|
    and at least one of v, -v is escaping.  The tolerance at radius r is
    ``rel_tol`` times the decay-class bound at r.
    """
    radii = np.asarray(radii, dtype=float)
    th = 2 * np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
    if M.dim != 2:
        raise NotImplementedError("decay profile sampler is 2-D")
    x = np.repeat(radii[:, None] * np.array([1.0, 0.0]), n_dirs, axis=0)
    w = np.tile(np.stack([np.cos(th), np.sin(th)], axis=-1), (len(radii), 1))
    v = np.einsum("nij,nj->ni", M.frame(x), w)
    esc = is_escaping(M, x, v)
    v = np.where(esc[:, None], v, -v)
    d = M.dist_to_o(x)
    ref = f.decay.bound(d) if f.decay.support_radius is None else np.full_like(d, f.decay.C)
    tol = rel_tol * np.maximum(ref, 1e-300)
    out = np.empty(len(x))
    # group rays of equal radius: their horizons agree
    for i in range(len(radii)):
        sl = slice(i * n_dirs, (i + 1) * n_dirs)
        out[sl] = np.abs(uf(M, f, SMPoint(x[sl], v[sl]), tol[sl]).value)
    return np.max(out.reshape(len(radii), n_dirs), axis=1)


def uf_decay_weight(kind: str, eta: float, d):
    """Weight making the u^f decay bound constant: e^{eta d}/(1+d) (E) or (1+d)^{eta-1} (P)."""
    d = np.asarray(d, dtype=float)
    if kind == "E":
        return np.exp(eta * d) / (1.0 + d)
    if kind == "P":
        return (1.0 + d) ** (eta - 1.0)
    raise ValueError(f"unknown decay kind {kind!r}")


def uf_decay_check(M: ManifoldModel, f: SymmetricTensorField, radii, n_dirs: int = 16,
                   rel_tol: float = 1e-6) -> DecayResult:
    """Fit C in sup_v |u^f(x, v)| <= C w(d(x, o))^{-1} for an If = 0 field of class E_eta or P_eta."""
    radii = np.asarray(radii, dtype=float)
    prof = uf_decay_profile(M, f, radii, n_dirs, rel_tol)
    kind, eta = f.decay.kind, f.decay.eta
    # reuse the generic growth test with the u^f weight folded into the values
    w = uf_decay_weight(kind, eta, radii)
    res = decay_check_values(prof * w, radii, "P", 0.0)
    return DecayResult(res.ok, res.constant, radii, res.weighted)
