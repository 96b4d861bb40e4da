"""Parallel frames, normal Jacobi fields and the Jacobi growth estimates.

The frame ODE ``dE/dt = -Gamma(v, E)`` and the Jacobi system
``u'' + R(t) u = 0`` (``R_jk = <R(E_j, v) v, E_k>``) are integrated on the
same RK4 grid as the base geodesic, so every sample of the field sits on a
sample of the path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geodesic import GeodesicError, GeodesicPath, SMPoint, integrate_geodesic
from .manifold import ManifoldModel

GRAM_DET_MIN = 0.5


def initial_frame(M: ManifoldModel, x, v) -> np.ndarray:
    """g-orthonormal basis of v^perp at x, shape (N, n-1, n).

    In 2-D this is the +pi/2 rotation of v.  Otherwise the coordinate frame
    is Gram-Schmidt orthogonalised against v.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    n = M.dim
    if n == 2:
        return M.perp(x, v)[:, None, :]
    # pivoted Gram-Schmidt: project the coordinate frame off v and keep the
    # n-1 longest residuals, so no candidate is nearly parallel to v
    e = M.frame(x)
    cand = np.swapaxes(e, -1, -2)  # (N, n, n) rows are frame vectors
    proj = cand - M.inner(x[:, None], cand, v[:, None])[..., None] * v[:, None]
    order = np.argsort(-M.norm(x[:, None], proj), axis=1)
    E = np.empty((len(x), n - 1, n))
    for j in range(n - 1):
        c = np.take_along_axis(proj, order[:, j, None, None], axis=1)[:, 0]
        for i in range(j):
            c = c - M.inner(x, c, E[:, i])[:, None] * E[:, i]
        E[:, j] = c / M.norm(x, c)[:, None]
    return E


def curvature_matrix(M: ManifoldModel, x, v, E, method: str = "closed") -> np.ndarray:
    """R_jk = <R(E_j, v) v, E_k> for frames E of shape (N, q, n)."""
    if method == "closed":
        xx = x[:, None, None, :]
        return M.curvature_form(xx, E[:, :, None, :], v[:, None, None, :], E[:, None, :, :])
    if method == "fd":
        Rm = riemann_fd(M, x)
        RXvv = np.einsum("nlijk,nqi,nj,nk->nql", Rm, E, v, v)
        return M.inner(x[:, None, None, :], RXvv[:, :, None, :], E[:, None, :, :])
    raise ValueError(f"unknown curvature method {method!r}")


def riemann_fd(M: ManifoldModel, x, step: float = 1e-4) -> np.ndarray:
    """Riemann tensor R^l_ijk from central differences of the Christoffel symbols.

    Convention: R(X, Y)Z = R^l_ijk X^i Y^j Z^k e_l.  Model-agnostic fallback;
    second order in ``step``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = M.dim
    G = M.christoffel(x)
    dG = np.stack([(M.christoffel(x + step * e) - M.christoffel(x - step * e)) / (2 * step)
                   for e in np.eye(n)], axis=1)  # (N, m, k, i, j)
    return (np.einsum("nilkj->nlijk", dG) - np.einsum("njlki->nlijk", dG)
            + np.einsum("nlim,nmjk->nlijk", G, G) - np.einsum("nljm,nmik->nlijk", G, G))


@dataclass
class ParallelFrame:
    """Parallel orthonormal normal frame along a path: E has shape (S, N, n-1, n)."""

    path: GeodesicPath
    E: np.ndarray

    def gram_error(self, M: ManifoldModel) -> float:
        x = self.path.x[:, :, None, None, :]
        G = M.inner(x, self.E[:, :, :, None, :], self.E[:, :, None, :, :])
        q = self.E.shape[2]
        return float(np.max(np.abs(G - np.eye(q))))

    def normal_error(self, M: ManifoldModel) -> float:
        return float(np.max(np.abs(M.inner(self.path.x[:, :, None, :], self.E, self.path.v[:, :, None, :]))))


@dataclass
class JacobiField:
    """Normal Jacobi fields in a parallel frame.

    ``u`` and ``udot`` have shape (S, N, q, n-1): q fields per geodesic,
    frame components.  |J| = |u| since the frame is orthonormal.
    """

    frame: ParallelFrame
    u: np.ndarray
    udot: np.ndarray
    init_kind: str

    @property
    def t(self) -> np.ndarray:
        return self.frame.path.t

    @property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.u, axis=-1)

    @property
    def dnorm(self) -> np.ndarray:
        return np.linalg.norm(self.udot, axis=-1)

    def vectors(self) -> np.ndarray:
        """J(t) in chart components, shape (S, N, q, n)."""
        return np.einsum("snqj,snjk->snqk", self.u, self.frame.E)

    def residual(self, M: ManifoldModel, method: str = "closed") -> np.ndarray:
        """|u'' + R u| using second differences of u on the grid (O(h^2))."""
        p = self.frame.path
        h = p.t[1] - p.t[0]
        udd = (self.u[2:] - 2 * self.u[1:-1] + self.u[:-2]) / h**2
        S, N = p.x.shape[:2]
        R = curvature_matrix(M, p.x[1:-1].reshape(-1, M.dim), p.v[1:-1].reshape(-1, M.dim),
                             self.frame.E[1:-1].reshape(-1, M.dim - 1, M.dim), method)
        R = R.reshape(S - 2, N, M.dim - 1, M.dim - 1)
        return np.linalg.norm(udd + np.einsum("snqj,snjk->snqk", self.u[1:-1], R), axis=-1)


def jacobi_system(M: ManifoldModel, p: SMPoint, T: float, u0, ud0, h: float | None = None,
                  curvature: str = "closed", E0=None) -> JacobiField:
    """Integrate geodesic, parallel frame and Jacobi fields jointly.

    ``u0``/``ud0`` are frame components of shape (N, q, n-1).
    """
    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    E0 = initial_frame(M, x, v) if E0 is None else np.asarray(E0, dtype=float)
    _check_gram(M, x, E0)
    u0 = np.asarray(u0, dtype=float)
    ud0 = np.asarray(ud0, dtype=float)

    def rhs(xs, vs, aux):
        E, u, ud = aux
        dE = -M.christoffel_contract(xs[:, None, :], vs[:, None, :], E)
        R = curvature_matrix(M, xs, vs, E, curvature)
        return dE, ud, -np.einsum("nqj,njk->nqk", u, R)

    path = integrate_geodesic(M, SMPoint(x, v), T, h, aux=(E0, u0, ud0), aux_rhs=rhs)
    E, u, ud = path.aux
    path.aux = ()
    frame = ParallelFrame(path, E)
    _check_gram(M, path.x[-1], E[-1])
    return JacobiField(frame, u, ud, "custom")


def _check_gram(M, x, E):
    G = M.inner(x[:, None, None, :], E[:, :, None, :], E[:, None, :, :])
    det = np.linalg.det(G)
    if np.any(det < GRAM_DET_MIN):
        raise GeodesicError(f"parallel frame degenerated (Gram determinant {float(np.min(det)):.3g})")


def parallel_frame(M: ManifoldModel, path: GeodesicPath) -> ParallelFrame:
    """Parallel transport of an orthonormal basis of v^perp along ``path``."""
    x = np.atleast_2d(path.origin.x)
    q = M.dim - 1
    z = np.zeros((len(x), 1, q))
    J = jacobi_system(M, SMPoint(x, np.atleast_2d(path.origin.v)), path.T, z, z, h=abs(path.h))
    return J.frame


def solve_jacobi(M: ManifoldModel, path: GeodesicPath | SMPoint, init_kind: str, w=None,
                 T: float | None = None, h: float | None = None, curvature: str = "closed") -> JacobiField:
    """Normal Jacobi field with J(0)=w, DtJ(0)=0 ("h") or J(0)=0, DtJ(0)=w ("v").

    ``w`` is a chart vector (N, n) orthogonal to v; ``None`` solves for every
    frame vector at once (q = n-1 fields per geodesic).
    """
    if init_kind not in ("h", "v"):
        raise ValueError("init_kind must be 'h' or 'v'")
    if isinstance(path, GeodesicPath):
        p, T, h = path.origin, path.T, abs(path.h)
    else:
        p = path
        if T is None:
            raise ValueError("T required when starting from an SMPoint")
    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    E0 = initial_frame(M, x, v)
    q = M.dim - 1
    if w is None:
        c = np.broadcast_to(np.eye(q), (len(x), q, q)).copy()
    else:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        if np.max(np.abs(M.inner(x, w, v))) > 1e-8:
            raise ValueError("initial vector must be normal to the geodesic")
        c = M.inner(x[:, None, :], E0, w[:, None, :])[:, None, :]
    zero = np.zeros_like(c)
    u0, ud0 = (c, zero) if init_kind == "h" else (zero, c)
    J = jacobi_system(M, SMPoint(x, v), T, u0, ud0, h, curvature, E0)
    J.init_kind = init_kind
    return J


# ---------------------------------------------------------------------------
# growth estimates
# ---------------------------------------------------------------------------


def rauch_bound(t, J0, DJ0, K0: float):
    """|J(0)| cosh(sqrt(K0) t) + |DtJ(0)| sinh(sqrt(K0) t)/sqrt(K0)."""
    t = np.asarray(t, dtype=float)
    if K0 == 0:
        return J0 + DJ0 * t
    s = math.sqrt(K0)
    return J0 * np.cosh(s * t) + DJ0 * np.sinh(s * t) / s


def check_rauch_bound(J: JacobiField, K0: float) -> np.ndarray:
    """Per-field min over samples of (Rauch bound - |J(t)|), shape (N, q)."""
    t = J.t[:, None, None]
    bound = rauch_bound(t, J.norm[0][None], J.dnorm[0][None], K0)
    return np.min(bound - J.norm, axis=0)


def gronwall_quantity(J: JacobiField) -> np.ndarray:
    """g(t) = |DtJ| + |J/t - DtJ| (undefined at t=0: NaN), shape (S, N, q)."""
    t = J.t
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = J.u / t[:, None, None, None]
    g = J.dnorm + np.linalg.norm(ratio - J.udot, axis=-1)
    g[t == 0] = np.nan
    return g


def curvature_integral(M: ManifoldModel, path: GeodesicPath, t0: float) -> np.ndarray:
    """Cumulative int_{t0}^t s K(gamma(s)) ds on the grid (zero before t0), shape (S, N)."""
    t = path.t
    kap = M.kappa_bound(path.x)
    integrand = t[:, None] * kap
    i0 = int(np.searchsorted(t, t0 - 1e-12))
    out = np.zeros_like(integrand)
    if len(t) - i0 >= 3:
        out[i0:] = integrate.cumulative_simpson(integrand[i0:], x=t[i0:], axis=0, initial=0.0)
    elif len(t) - i0 == 2:
        out[i0 + 1] = 0.5 * (t[i0 + 1] - t[i0]) * (integrand[i0] + integrand[i0 + 1])
    return out


def check_gronwall_bound(J: JacobiField, M: ManifoldModel, t0: float, T: float | None = None) -> np.ndarray:
    """Min over t in [t0, T] of g(t0) exp(2 int_{t0}^t s K ds) - g(t), shape (N, q).

    ``t0`` is snapped to the nearest grid sample.
    """
    t = J.t
    i0 = int(np.argmin(np.abs(t - t0)))
    if t[i0] <= 0:
        raise ValueError("t0 must be positive")
    iT = len(t) if T is None else int(np.searchsorted(t, T + 1e-12))
    g = gronwall_quantity(J)
    I = curvature_integral(M, J.frame.path, t[i0])
    bound = g[i0][None] * np.exp(2.0 * I[:, :, None])
    return np.min(bound[i0:iT] - g[i0:iT], axis=0)


def powerlaw_curvature_integral_bound(c: float, kappa: float) -> float:
    """Upper bound for sup over escaping geodesics of int_0^inf s K(gamma(s)) ds.

    With K <= c (1+d)^{-kappa} and d(gamma(s), o) >= s on escaping geodesics,
    the integral is at most int_0^inf s c (1+s)^{-kappa} ds = c/((kappa-1)(kappa-2)).
    """
    if kappa <= 2:
        raise ValueError("needs kappa > 2")
    return c / ((kappa - 1.0) * (kappa - 2.0))


def linear_growth_constant(K0: float, A: float, init_kind: str = "v") -> float:
    """Uniform C with |J(t)| <= C (t+1) for unit initial data on escaping geodesics.

    On [0, 1] the Rauch bound applies.  For t >= 1,
    |J(t)| <= t g(1) e^{2A} and g(1) <= 2|DtJ(1)| + |J(1)|, where |J(1)| and
    |DtJ(1)| are bounded by the comparison solutions of u'' = K0 u.
    """
    s = math.sqrt(K0)
    if init_kind == "v":
        j1, dj1 = math.sinh(s) / s, math.cosh(s)
    else:
        j1, dj1 = math.cosh(s), s * math.sinh(s)
    return max(j1, math.exp(2.0 * A) * (2.0 * dj1 + j1))


def per_geodesic_growth_constant(J: JacobiField, M: ManifoldModel) -> np.ndarray:
    """C_gamma = max(sup_{[0,1]} |J|, g(1) e^{2 int_1^inf s K}) from one field's own data.

    The tail integral beyond the sampled horizon is bounded through the
    escaping distance estimate when the model carries power-law curvature.
    """
    t = J.t
    i1 = int(np.argmin(np.abs(t - 1.0)))
    g1 = gronwall_quantity(J)[i1]
    I = curvature_integral(M, J.frame.path, t[i1])[-1]
    c, kappa = M.params.get("c"), M.params.get("kappa")
    if c is not None and kappa is not None and kappa > 2:
        I = I + _powerlaw_tail(c, kappa, t[-1])
    early = np.max(J.norm[: i1 + 1], axis=0)
    return np.maximum(early, g1 * np.exp(2.0 * I[:, None]))


def _powerlaw_tail(c, kappa, T):
    # int_T^inf s c (1+s)^{-kappa} ds in closed form
    a = 1.0 + T
    return c * (a ** (2 - kappa) / (kappa - 2) - a ** (1 - kappa) / (kappa - 1))


def jacobi_determinant(M: ManifoldModel, dirs, r: float, h: float | None = None) -> np.ndarray:
    """|det| of the v-type Jacobi fields J_i(r) along gamma_{o,v} (frame components)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    x = np.zeros_like(dirs)
    p = SMPoint(x, M.normalize(x, dirs))
    J = solve_jacobi(M, p, "v", None, T=r, h=h)
    U = J.u[-1]
    return np.abs(np.linalg.det(U))
