"""Symmetric covariant tensor fields in the global chart.

A field of order m is a callable returning chart components of shape
``(..., n, ..., n)`` (m trailing axes) for points of shape ``(..., n)``.
Fields carry decay metadata used by the X-ray module to choose
integration horizons.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .manifold import ManifoldModel

FD_STEP = 1e-3


@dataclass(frozen=True)
class Decay:
    """Decay class of a field: |f(x)|_g <= C e^{-eta d} ("E") or C (1+d)^{-eta} ("P").

    ``support_radius`` (if set) bounds d(x, o) on the support.
    """

    kind: str = "none"
    eta: float = 0.0
    C: float = 1.0
    support_radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("E", "P", "none"):
            raise ValueError(f"unknown decay kind {self.kind!r}")

    def bound(self, d):
        d = np.asarray(d, dtype=float)
        if self.support_radius is not None:
            return np.where(d <= self.support_radius, self.C, 0.0)
        if self.kind == "E":
            return self.C * np.exp(-self.eta * d)
        if self.kind == "P":
            return self.C * (1.0 + d) ** (-self.eta)
        return np.full_like(d, np.inf)

    @property
    def integrable(self) -> bool:
        return self.support_radius is not None or (self.kind == "E" and self.eta > 0) or \
            (self.kind == "P" and self.eta > 1)


@dataclass(frozen=True, eq=False)
class SymmetricTensorField:
    """Order-m covariant tensor field on an n-dimensional chart."""

    order: int
    dim: int
    coeff: Callable[[np.ndarray], np.ndarray]
    decay: Decay = field(default_factory=Decay)
    label: str = ""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.coeff(x), dtype=float)
        expect = x.shape[:-1] + (self.dim,) * self.order
        if out.shape != expect:
            out = np.broadcast_to(out, expect)
        return out

    def lam(self, x, v) -> np.ndarray:
        return lambda_eval(self, x, v)

    def __add__(self, other: "SymmetricTensorField") -> "SymmetricTensorField":
        _check_same(self, other)
        return SymmetricTensorField(self.order, self.dim, lambda x: self(x) + other(x),
                                    _sum_decay(self.decay, other.decay), f"({self.label}+{other.label})")

    def scale(self, c: float) -> "SymmetricTensorField":
        d = replace(self.decay, C=self.decay.C * abs(c))
        return SymmetricTensorField(self.order, self.dim, lambda x: c * self(x), d, f"{c:g}*{self.label}")


def _check_same(a, b):
    if a.order != b.order or a.dim != b.dim:
        raise ValueError("fields must share order and dimension")


def _sum_decay(a: Decay, b: Decay) -> Decay:
    if a.support_radius is not None and b.support_radius is not None:
        return Decay(a.kind, a.eta, a.C + b.C, max(a.support_radius, b.support_radius))
    if b.support_radius is not None:
        a, b = b, a
    if a.support_radius is not None and b.kind != "none":
        # C on d <= R is below C w(R) w(d)^{-1} for the other field's weight
        return Decay(b.kind, b.eta, a.C * decay_weight(b.kind, b.eta, a.support_radius) + b.C)
    if a.kind == b.kind and a.kind != "none":
        return Decay(a.kind, min(a.eta, b.eta), a.C + b.C)
    return Decay()


# ---------------------------------------------------------------------------
# algebra
# ---------------------------------------------------------------------------


def contract_v(A: np.ndarray, v: np.ndarray, m: int, keep: int = 0) -> np.ndarray:
    """Contract the m trailing axes of A with v, leaving ``keep`` tensor slots open."""
    out = A
    for k in range(m):
        # remaining tensor slots sit between the batch axes and the last axis
        vb = v.reshape(v.shape[:-1] + (1,) * (m - 1 - k + keep) + v.shape[-1:])
        out = np.sum(out * vb, axis=-1)
    return out


def lambda_eval(f: SymmetricTensorField, x, v) -> np.ndarray:
    """lambda(f)(x, v) = f_x(v, ..., v)."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != f.dim:
        raise ValueError("order/dimension mismatch between field and vector")
    return contract_v(f(x), v, f.order)


def sym_array(A: np.ndarray, m: int) -> np.ndarray:
    """Average over all permutations of the m trailing axes."""
    if m <= 1:
        return np.array(A, dtype=float, copy=True)
    lead = A.ndim - m
    axes = list(range(lead))
    perms = list(itertools.permutations(range(lead, A.ndim)))
    return sum(np.transpose(A, axes + list(p)) for p in perms) / len(perms)


def asymmetry(A: np.ndarray, m: int) -> float:
    return float(np.max(np.abs(A - sym_array(A, m)))) if A.size else 0.0


def symmetrize(T: SymmetricTensorField) -> SymmetricTensorField:
    """sigma T; symmetric inputs are returned unchanged up to roundoff."""
    m = T.order
    return SymmetricTensorField(m, T.dim, lambda x: sym_array(T(x), m), T.decay, f"sym({T.label})")


def tensor_product(A: np.ndarray, B: np.ndarray, ma: int, mb: int) -> np.ndarray:
    lead = A.shape[: A.ndim - ma]
    a = A.reshape(lead + A.shape[A.ndim - ma:] + (1,) * mb)
    b = B.reshape(B.shape[: B.ndim - mb] + (1,) * ma + B.shape[B.ndim - mb:])
    return a * b


def raise_degree(M: ManifoldModel, F: SymmetricTensorField) -> SymmetricTensorField:
    """alpha F = sigma(F (x) g); lambda(alpha F) = lambda(F) on SM."""
    m = F.order

    def coeff(x):
        return sym_array(tensor_product(F(x), M.metric(x), m, 2), m + 2)

    return SymmetricTensorField(m + 2, F.dim, coeff, F.decay, f"alpha({F.label})")


def metric_field(M: ManifoldModel) -> SymmetricTensorField:
    return SymmetricTensorField(2, M.dim, M.metric, Decay(), "g")


# ---------------------------------------------------------------------------
# covariant derivative
# ---------------------------------------------------------------------------


def partial_fd(F: Callable, x: np.ndarray, dim: int, step: float = FD_STEP) -> np.ndarray:
    """Fourth-order central differences; derivative index is the first trailing axis."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = step
        cols.append((-F(x + 2 * e) + 8 * F(x + e) - 8 * F(x - e) + F(x - 2 * e)) / (12 * step))
    return np.stack(cols, axis=x.ndim - 1)


def covariant_derivative(M: ManifoldModel, h: SymmetricTensorField, x, step: float = FD_STEP) -> np.ndarray:
    """(nabla h)_{i j1..jm} = d_i h_{j..} - sum_k Gamma^l_{i jk} h_{..l..}."""
    x = np.asarray(x, dtype=float)
    m = h.order
    D = partial_fd(h, x, h.dim, step)
    if m == 0:
        return D
    G = M.christoffel(x)  # (..., l, i, j)
    H = h(x)
    lead = x.ndim - 1
    for k in range(m):
        # move slot k of H to the end, contract with Gamma^l_{i j} over l
        Hk = np.moveaxis(H, lead + k, -1)  # (..., j_others..., l)
        T = _gamma_contract(G, Hk, lead)
        # T has axes (..., others..., i, j); put i first and j back at slot k
        T = np.moveaxis(T, -2, lead)
        T = np.moveaxis(T, -1, lead + 1 + k)
        D = D - T
    return D


def _gamma_contract(G, Hk, lead):
    # G: (..., l, i, j); Hk: (..., others, l)  ->  (..., others, i, j)
    others = Hk.ndim - lead - 1
    Gb = G.reshape(G.shape[:lead] + (1,) * others + G.shape[lead:])
    return np.sum(Gb * Hk[..., :, None, None], axis=-3)


def sym_nabla(M: ManifoldModel, h: SymmetricTensorField, step: float = FD_STEP) -> SymmetricTensorField:
    """sigma nabla h, order m = h.order + 1.

    A compactly supported h keeps its support; otherwise the decay class is
    inherited with one extra power (P_eta -> P_{eta+1} under the usual
    derivative assumptions).
    """
    m = h.order + 1

    def coeff(x):
        return sym_array(covariant_derivative(M, h, x, step), m)

    d = h.decay
    if d.support_radius is None and d.kind == "P":
        d = Decay("P", d.eta + 1.0, d.C, None)
    return SymmetricTensorField(m, h.dim, coeff, d, f"sym_nabla({h.label})")


# ---------------------------------------------------------------------------
# norms, SM gradients and decay
# ---------------------------------------------------------------------------


def norm_g(M: ManifoldModel, f: SymmetricTensorField, x) -> np.ndarray:
    """|f_x|_g via components in the orthonormal frame g^{-1/2} d."""
    x = np.asarray(x, dtype=float)
    A = f(x)
    m = f.order
    if m == 0:
        return np.abs(A)
    e = M.frame(x)  # (..., n, a): columns are e_a
    lead = x.ndim - 1
    for k in range(m):
        Ak = np.moveaxis(A, lead + k, -1)
        Ak = np.einsum("...j,...ja->...a", Ak, e.reshape(e.shape[:lead] + (1,) * (m - 1) + e.shape[lead:]))
        A = np.moveaxis(Ak, -1, lead + k)
    return np.sqrt(np.sum(A.reshape(A.shape[:lead] + (-1,)) ** 2, axis=-1))


def sm_derivatives(M: ManifoldModel, f: SymmetricTensorField, x, v, step: float = FD_STEP):
    """(X lambda f, grad^h lambda f, grad^v lambda f) at (x, v).

    X lambda(f) = (nabla f)(v; v..v); the horizontal gradient is the v^perp
    part of (nabla f)(.; v..v)^sharp and the vertical gradient is
    m (f(v..v, .)^sharp - lambda(f) v).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    m = f.order
    D = covariant_derivative(M, f, x, step)  # (..., i, j1..jm)
    Dv = contract_v(D, v, m, keep=1)  # (..., i)
    X = np.einsum("...i,...i->...", Dv, v)
    gh = M.raise_index(x, Dv) - X[..., None] * v
    if m == 0:
        gv = np.zeros_like(v)
    else:
        A = f(x)
        fv = contract_v(A, v, m - 1, keep=1)  # (..., i)
        lam = np.einsum("...i,...i->...", fv, v)
        gv = m * (M.raise_index(x, fv) - lam[..., None] * v)
    return X, gh, gv


@dataclass
class DecayResult:
    ok: bool
    constant: float
    radii: np.ndarray
    weighted: np.ndarray


def decay_weight(kind: str, eta: float, d):
    d = np.asarray(d, dtype=float)
    if kind == "E":
        return np.exp(eta * d)
    if kind == "P":
        return (1.0 + d) ** eta
    raise ValueError(f"unknown decay kind {kind!r}")


def decay_check_values(values, radii, kind: str, eta: float, rel_tol: float = 1e-6,
                       decel: float = 0.3) -> DecayResult:
    """Decay test on precomputed sup-norms ``values`` sampled at ``radii``.

    Fails when the weighted values increase monotonically over the last
    decade of radii (from r_max/10 to r_max) by more than ``rel_tol`` without
    settling down.  A monotone tail whose log-log slope has dropped below
    ``decel`` times its initial value is converging, hence bounded, and
    passes; power or exponential growth keeps the slope from dropping.
    """
    radii = np.asarray(radii, dtype=float)
    w = np.asarray(values, dtype=float) * decay_weight(kind, eta, radii)
    last = radii >= radii[-1] / 10.0
    tail = w[last]
    growing = tail.size >= 2 and np.all(np.diff(tail) >= -rel_tol * np.abs(tail[:-1])) and \
        tail[-1] > (1.0 + rel_tol) * tail[0]
    if growing and tail.size >= 3 and np.all(tail > 0):
        slope = np.diff(np.log(tail)) / np.diff(np.log(radii[last]))
        growing = not slope[-1] < decel * slope[0]
    ok = bool(np.all(np.isfinite(w)) and not growing)
    return DecayResult(ok, float(np.max(w)), radii, w)


def decay_check(M: ManifoldModel, f: SymmetricTensorField, kind: str, eta: float, radii,
                n_dirs: int = 16) -> DecayResult:
    """Weighted sup of |f|_g over geodesic spheres S(o, r) for r in ``radii``."""
    radii = np.asarray(radii, dtype=float)
    if M.dim == 2:
        th = 2 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        dirs = np.random.default_rng(0).normal(size=(n_dirs, M.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = radii[:, None, None] * dirs[None]
    vals = np.max(norm_g(M, f, pts), axis=1)
    return decay_check_values(vals, radii, kind, eta)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _poly_tensor(pol, m: int, dim: int) -> np.ndarray:
    """Symmetric m-tensor sigma(p (x) ... (x) p) from a polarization vector p."""
    if m == 0:
        return np.array(1.0)
    p = np.asarray(pol, dtype=float)
    if p.shape != (dim,):
        raise ValueError("polarization must be a dim-vector")
    A = p
    for _ in range(m - 1):
        A = np.multiply.outer(A, p)
    return A


def gaussian(dim: int, center=None, width: float = 1.0, order: int = 0, polarization=None,
             amplitude: float = 1.0) -> SymmetricTensorField:
    """amplitude * exp(-|x - c|^2 / width^2) * p^{(x) m} in the chart.

    Decay class E_1 with the constant from (d - |c|)^2/w^2 >= d - |c| - w^2/4,
    using |dx^i|_g <= 1 on Cartan-Hadamard charts.
    """
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    pol = np.eye(dim)[0] if polarization is None else np.asarray(polarization, dtype=float)
    P = _poly_tensor(pol, order, dim)
    pn = float(np.linalg.norm(pol)) ** order if order else 1.0

    def coeff(x):
        g = amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / width**2)
        return g.reshape(g.shape + (1,) * order) * P

    C = abs(amplitude) * pn * math.exp(np.linalg.norm(c) + width**2 / 4.0)
    return SymmetricTensorField(order, dim, coeff, Decay("E", 1.0, C), f"gaussian(order={order})")


def bump_profile(rho):
    """Smooth compactly supported bump exp(1 - 1/(1 - rho^2)) on rho < 1, max 1."""
    rho = np.asarray(rho, dtype=float)
    inside = rho < 1.0
    q = np.where(inside, 1.0 - rho * rho, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)


def bump(dim: int, center=None, radius: float = 1.0, order: int = 0, polarization=None,
         amplitude: float = 1.0) -> SymmetricTensorField:
    """Compactly supported C-infinity bump times p^{(x) m}."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    pol = np.eye(dim)[0] if polarization is None else np.asarray(polarization, dtype=float)
    P = _poly_tensor(pol, order, dim)
    pn = float(np.linalg.norm(pol)) ** order if order else 1.0

    def coeff(x):
        b = amplitude * bump_profile(np.linalg.norm(x - c, axis=-1) / radius)
        return b.reshape(b.shape + (1,) * order) * P

    return SymmetricTensorField(order, dim, coeff,
                                Decay("E", 0.0, abs(amplitude) * pn, float(np.linalg.norm(c) + radius)),
                                f"bump(order={order})")


def poly_bump(dim: int, center=None, radius: float = 1.0, power: int = 4, order: int = 0, polarization=None,
              amplitude: float = 1.0) -> SymmetricTensorField:
    """(1 - |x - c|^2 / R^2)_+^power times p^{(x) m}: C^{power-1}, well resolved on coarse grids."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    pol = np.eye(dim)[0] if polarization is None else np.asarray(polarization, dtype=float)
    P = _poly_tensor(pol, order, dim)
    pn = float(np.linalg.norm(pol)) ** order if order else 1.0

    def coeff(x):
        q = np.clip(1.0 - np.sum((x - c) ** 2, axis=-1) / radius**2, 0.0, None)
        b = amplitude * q**power
        return b.reshape(b.shape + (1,) * order) * P

    return SymmetricTensorField(order, dim, coeff,
                                Decay("E", 0.0, abs(amplitude) * pn, float(np.linalg.norm(c) + radius)),
                                f"poly_bump(order={order}, power={power})")


def radial_power(dim: int, eta: float, amplitude: float = 1.0) -> SymmetricTensorField:
    """Scalar amplitude * (1 + |x|)^{-eta}, class P_eta."""
    return SymmetricTensorField(0, dim, lambda x: amplitude * (1.0 + np.linalg.norm(x, axis=-1)) ** (-eta),
                                Decay("P", eta, abs(amplitude)), f"radial_power({eta:g})")


def radial_exp(dim: int, eta: float, amplitude: float = 1.0) -> SymmetricTensorField:
    """Scalar amplitude * exp(-eta |x|), class E_eta."""
    return SymmetricTensorField(0, dim, lambda x: amplitude * np.exp(-eta * np.linalg.norm(x, axis=-1)),
                                Decay("E", eta, abs(amplitude)), f"radial_exp({eta:g})")


def zero_field(dim: int, order: int) -> SymmetricTensorField:
    return SymmetricTensorField(order, dim, lambda x: np.zeros(x.shape[:-1] + (dim,) * order),
                                Decay("E", 0.0, 0.0, 0.0), "zero")


def rotational_one_form(radius: float = 0.8) -> SymmetricTensorField:
    """b(r) (-y dx + x dy): nonzero line integrals around the origin, so not a potential."""
    b = poly_bump(2, None, radius, 4)
    return SymmetricTensorField(1, 2, lambda x: b(x)[..., None] * np.stack([-x[..., 1], x[..., 0]], -1),
                                Decay("E", 0.0, 1.0, radius), "rotational")


def potential_of(M: ManifoldModel, h: SymmetricTensorField) -> SymmetricTensorField:
    """The potential field sigma nabla h."""
    return sym_nabla(M, h)


def field_from_spec(M: ManifoldModel, spec) -> SymmetricTensorField:
    """Build a field from a preset name or a dict ``{"preset": ..., params}``.

    Presets: gaussian, gaussian_bump, bump, poly_bump, radial_power, radial_exp,
    potential_of (with nested ``"h"`` spec), zero.
    """
    if isinstance(spec, str):
        spec = {"preset": spec}
    spec = dict(spec)
    name = spec.pop("preset", None)
    n = M.dim
    if name == "gaussian":
        return gaussian(n, spec.get("center"), spec.get("width", 1.0), spec.get("order", 0),
                        spec.get("polarization"), spec.get("amplitude", 1.0))
    if name == "gaussian_bump":
        return gaussian(n, spec.get("center", [0.3] + [0.0] * (n - 1)), spec.get("width", 0.5),
                        spec.get("order", 0), spec.get("polarization"), spec.get("amplitude", 1.0))
    if name == "bump":
        return bump(n, spec.get("center"), spec.get("radius", 1.0), spec.get("order", 0),
                    spec.get("polarization"), spec.get("amplitude", 1.0))
    if name == "poly_bump":
        return poly_bump(n, spec.get("center"), spec.get("radius", 1.0), spec.get("power", 4),
                         spec.get("order", 0), spec.get("polarization"), spec.get("amplitude", 1.0))
    if name == "radial_power":
        return radial_power(n, spec.get("eta", 3.0), spec.get("amplitude", 1.0))
    if name == "radial_exp":
        return radial_exp(n, spec.get("eta", 2.0), spec.get("amplitude", 1.0))
    if name == "potential_of":
        return potential_of(M, field_from_spec(M, spec.get("h", {"preset": "bump", "radius": 1.0})))
    if name == "zero":
        return zero_field(n, spec.get("order", 0))
    raise ValueError(f"unknown field preset {name!r}")
