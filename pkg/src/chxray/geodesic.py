"""Unit-speed geodesics, distances and the escaping-geodesic estimates.

Geodesics are integrated with classical RK4 on the first-order system
``(x, v)`` for a whole batch of initial conditions at once.  Auxiliary
quantities that must live on the same time grid (parallel frames, Jacobi
fields, running quadratures) can be carried along through ``aux``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .manifold import ManifoldModel

DRIFT_TOL = 1e-6
MAX_HALVINGS = 10


class GeodesicError(RuntimeError):
    """Integration or shooting failure."""


def _dot(u, w):
    return np.einsum("...i,...i->...", u, w)


@dataclass(frozen=True)
class SMPoint:
    """Point (x, v) of the unit sphere bundle; arrays may carry a batch axis."""

    x: np.ndarray
    v: np.ndarray

    @classmethod
    def make(cls, M: ManifoldModel, x, v) -> "SMPoint":
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.shape[-1] != M.dim or v.shape[-1] != M.dim:
            raise ValueError(f"expected {M.dim}-vectors")
        return cls(x, M.normalize(x, v))

    def reversed(self) -> "SMPoint":
        return SMPoint(self.x, -self.v)

    def __len__(self) -> int:
        return 1 if self.x.ndim == 1 else self.x.shape[0]


@dataclass
class GeodesicPath:
    """Sampled geodesic(s): ``t`` has shape (S,), ``x`` and ``v`` (S, ..., n)."""

    origin: SMPoint
    T: float
    h: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    aux: tuple = ()

    def speed_error(self, M: ManifoldModel) -> float:
        return float(np.max(np.abs(M.norm(self.x, self.v) - 1.0)))

    def to_csv(self, path) -> None:
        if self.x.ndim != 2:
            raise ValueError("CSV dump supports a single geodesic")
        n = self.x.shape[-1]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)])
            for t, x, v in zip(self.t, self.x, self.v):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(c)) for c in v])


def default_step(T: float) -> float:
    return min(1e-2, abs(T) / 1000.0) if T != 0 else 1e-2


def time_grid(T: float, h: float | None = None, multiple: int = 1) -> tuple[int, float]:
    """Number of steps (a multiple of ``multiple``) and signed step size covering [0, T]."""
    h = default_step(T) if h is None else float(h)
    if h <= 0:
        raise ValueError("step must be positive")
    n = max(1, int(math.ceil(abs(T) / h - 1e-9)))
    n = multiple * int(math.ceil(n / multiple))
    return n, T / n


AuxRHS = Callable[[np.ndarray, np.ndarray, tuple], tuple]


def _rk4_step(M, x, v, aux, h, aux_rhs):
    def rhs(x_, v_, a_):
        da = aux_rhs(x_, v_, a_) if aux_rhs is not None else ()
        return v_, M.geodesic_accel(x_, v_), da

    k1 = rhs(x, v, aux)
    k2 = rhs(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1], tuple(a + 0.5 * h * d for a, d in zip(aux, k1[2])))
    k3 = rhs(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1], tuple(a + 0.5 * h * d for a, d in zip(aux, k2[2])))
    k4 = rhs(x + h * k3[0], v + h * k3[1], tuple(a + h * d for a, d in zip(aux, k3[2])))
    x = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v = v + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    aux = tuple(a + h / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
                for a, d1, d2, d3, d4 in zip(aux, k1[2], k2[2], k3[2], k4[2]))
    return x, v, aux


def flow_steps(M: ManifoldModel, x, v, T: float, h: float | None = None, *,
               aux: Sequence[np.ndarray] = (), aux_rhs: AuxRHS | None = None,
               multiple: int = 1) -> Iterator[tuple[float, np.ndarray, np.ndarray, tuple]]:
    """Yield ``(t, x, v, aux)`` on a uniform grid from 0 to T (T may be negative).

    Speeds are restored to their initial g-norm after every step.  If the
    relative speed drift of any ray exceeds ``DRIFT_TOL`` the step is redone
    with 2, 4, ... substeps; after ``MAX_HALVINGS`` halvings a
    :class:`GeodesicError` is raised.  The output grid stays uniform.
    """
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    aux = tuple(np.array(a, dtype=float) for a in aux)
    speed0 = M.norm(x, v)
    if np.any(~np.isfinite(speed0)) or np.any(speed0 <= 0):
        raise GeodesicError("initial velocity must be a finite nonzero vector")
    n, hs = time_grid(T, h, multiple)
    yield 0.0, x, v, aux
    for i in range(n):
        for level in range(MAX_HALVINGS + 1):
            m = 2**level
            xs, vs, aus = x, v, aux
            for _ in range(m):
                xs, vs, aus = _rk4_step(M, xs, vs, aus, hs / m, aux_rhs)
            speed = M.norm(xs, vs)
            drift = np.abs(speed / speed0 - 1.0)
            if np.all(np.isfinite(xs)) and np.all(drift <= DRIFT_TOL):
                break
        else:
            raise GeodesicError(f"speed drift {float(np.nanmax(drift)):.3g} persists after "
                                f"{MAX_HALVINGS} step halvings at t={i * hs:.4g}")
        x, v, aux = xs, vs * (speed0 / speed)[..., None], aus
        if math.isfinite(M.r_max) and float(np.max(np.linalg.norm(x, axis=-1))) > M.r_max:
            raise GeodesicError(f"geodesic left the model's range r_max={M.r_max:.4g} at t={(i + 1) * hs:.4g}")
        yield (i + 1) * hs, x, v, aux


def integrate_geodesic(M: ManifoldModel, p: SMPoint, T: float, h: float | None = None, *,
                       aux: Sequence[np.ndarray] = (), aux_rhs: AuxRHS | None = None,
                       multiple: int = 1) -> GeodesicPath:
    """Integrate gamma_{x,v} on [0, T] and keep every sample."""
    ts, xs, vs, auxs = [], [], [], []
    for t, x, v, a in flow_steps(M, p.x, p.v, T, h, aux=aux, aux_rhs=aux_rhs, multiple=multiple):
        ts.append(t)
        xs.append(x)
        vs.append(v)
        auxs.append(a)
    n, hs = time_grid(T, h, multiple)
    aux_out = tuple(np.stack([a[j] for a in auxs]) for j in range(len(aux)))
    return GeodesicPath(p, float(T), hs, np.array(ts), np.stack(xs), np.stack(vs), aux_out)


def geodesic_endpoint(M: ManifoldModel, x, v, T: float, h: float | None = None):
    """(x(T), v(T)) without storing the path."""
    for _, xe, ve, _ in flow_steps(M, x, v, T, h):
        pass
    return xe, ve


def is_escaping(M: ManifoldModel, p: SMPoint | np.ndarray, v=None):
    """True where d/dt d(gamma(t), o)^2 at t=0 is >= 0.

    The derivative is 2 r <v, xhat>_g = 2 x . v in the normal chart.
    """
    x, v = (p.x, p.v) if isinstance(p, SMPoint) else (np.asarray(p, dtype=float), np.asarray(v, dtype=float))
    return _dot(x, v) >= 0.0


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def distance(M: ManifoldModel, x, y, *, max_iter: int = 100, tol: float = 1e-11):
    """Geodesic distance d(x, y); batched over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if M.kind == "euclidean":
        return np.linalg.norm(x - y, axis=-1)
    if M.kind == "hyperbolic":
        s = math.sqrt(M.params["K0"])
        r1, r2 = np.linalg.norm(x, axis=-1), np.linalg.norm(y, axis=-1)
        q = np.sinh(0.5 * s * (r1 - r2)) ** 2 + \
            0.25 * np.sinh(s * r1) * np.sinh(s * r2) * np.sum((M.radial_unit(x) - M.radial_unit(y)) ** 2, axis=-1)
        return 2.0 / s * np.arcsinh(np.sqrt(q))
    return _shooting_distance(M, x, y, max_iter=max_iter, tol=tol)


def _shooting_distance(M, x, y, max_iter, tol):
    """Solve exp_x(T v(theta)) = y by damped Newton with a finite-difference Jacobian."""
    if M.dim != 2:
        raise NotImplementedError("shooting distance is implemented for 2-D models")
    x, y = np.broadcast_arrays(x, y)
    shape = x.shape[:-1]
    x = x.reshape(-1, 2).copy()
    y = y.reshape(-1, 2).copy()
    out = np.zeros(len(x))
    live = np.linalg.norm(x - y, axis=-1) > 0
    if not np.any(live):
        return out.reshape(shape)
    x, y = x[live], y[live]
    E = M.frame(x)

    def shoot(theta, T):
        w = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        v = np.einsum("nij,nj->ni", E, w)
        # each ray reaches its own length at unit time; arclength step <= 1e-2
        h = 1e-2 / max(1.0, float(np.max(np.abs(T))))
        return geodesic_endpoint(M, x, v * T[:, None], 1.0, h=h)

    d = y - x
    dl = np.einsum("nij,nj->ni", M.sqrt_metric(x), d)
    theta = np.arctan2(dl[:, 1], dl[:, 0])
    T = np.maximum(np.linalg.norm(dl, axis=-1), np.abs(np.linalg.norm(y, axis=-1) - np.linalg.norm(x, axis=-1)))
    T = np.maximum(T, 1e-12)
    scale = 1.0 + np.linalg.norm(y, axis=-1)
    delta = 1e-6
    for _ in range(max_iter):
        xe, ve = shoot(theta, T)
        F = xe - y
        err = np.linalg.norm(F, axis=-1)
        if np.all(err <= tol * scale):
            out[live] = np.abs(T)
            return out.reshape(shape)
        xd, _ = shoot(theta + delta, T)
        Jt = (xd - xe) / delta
        JT = ve / T[:, None]
        J = np.stack([Jt, JT], axis=-1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        dth = -(J[:, 1, 1] * F[:, 0] - J[:, 0, 1] * F[:, 1]) / det
        dT = -(-J[:, 1, 0] * F[:, 0] + J[:, 0, 0] * F[:, 1]) / det
        # damp long steps; keep T positive
        lam = np.minimum(1.0, 0.5 / np.maximum(np.abs(dth), 1e-300))
        lam = np.minimum(lam, np.where(T + lam * dT < 0.2 * T, 0.8 * T / np.maximum(np.abs(dT), 1e-300), lam))
        theta = theta + lam * dth
        T = T + lam * dT
    raise GeodesicError(f"distance shooting did not converge in {max_iter} iterations "
                        f"(max endpoint error {float(np.max(err)):.3g})")


# ---------------------------------------------------------------------------
# escaping-geodesic distance estimates
# ---------------------------------------------------------------------------


@dataclass
class DistanceBoundReport:
    """Minimum over samples of lhs - rhs for each distance estimate.

    ``triangle``: d(gamma(t), o) >= |t| - d(x, o) for every geodesic.
    ``piecewise``: d >= d0 on [0, 2 d0] and >= t - d0 beyond (escaping only).
    ``strong``: d >= sqrt(d0^2 + t^2) (escaping only).
    Escaping-only slacks are NaN for non-escaping seeds.
    """

    escaping: np.ndarray
    triangle: np.ndarray
    piecewise: np.ndarray
    strong: np.ndarray

    def min_strong(self) -> float:
        vals = self.strong[self.escaping]
        return float(np.min(vals)) if vals.size else math.inf


def distance_bound_slacks(t, d, d0):
    """Slacks of the three estimates given sampled distances d(t) (S, N) and d0 (N,)."""
    t = np.asarray(t, dtype=float)[:, None]
    tri = d - (np.abs(t) - d0)
    piece = d - np.where(t <= 2 * d0, d0, t - d0)
    strong = d - np.sqrt(d0**2 + t**2)
    return tri, piece, strong


def check_distance_bounds(M: ManifoldModel, p: SMPoint, T: float, h: float | None = None) -> DistanceBoundReport:
    """Evaluate the triangle, piecewise and stronger escaping bounds along gamma_{x,v}."""
    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    d0 = M.dist_to_o(x)
    esc = is_escaping(M, x, v)
    tri = np.full(len(x), np.inf)
    piece = np.full(len(x), np.inf)
    strong = np.full(len(x), np.inf)
    for t, xt, _, _ in flow_steps(M, x, v, T, h):
        a, b, c = distance_bound_slacks(np.array([t]), M.dist_to_o(xt)[None], d0)
        tri = np.minimum(tri, a[0])
        piece = np.minimum(piece, b[0])
        strong = np.minimum(strong, c[0])
    return DistanceBoundReport(esc, tri, np.where(esc, piece, np.nan), np.where(esc, strong, np.nan))


def sample_sm(M: ManifoldModel, n: int, radius: float, rng: np.random.Generator,
              escaping: bool | None = None) -> SMPoint:
    """Random (x, v): x uniform in the chart ball |x| < radius, v uniform on S_xM.

    With ``escaping=True`` (``False``) directions are flipped so every seed is
    (not) escaping; ties at x.v = 0 count as escaping.
    """
    d = M.dim
    g = rng.normal(size=(n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    x = g * (radius * rng.random(n) ** (1.0 / d))[:, None]
    w = rng.normal(size=(n, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    v = np.einsum("nij,nj->ni", M.frame(x), w)
    if escaping is not None:
        esc = is_escaping(M, x, v)
        flip = ~esc if escaping else esc
        v = np.where(flip[:, None], -v, v)
    return SMPoint(x, v)
