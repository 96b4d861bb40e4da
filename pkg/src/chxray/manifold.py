"""Rotationally symmetric Cartan-Hadamard models in normal coordinates.

Every model lives in a single global chart: Cartesian normal coordinates
``x = r * theta`` about the base point ``o = 0``, with metric

    g = dr^2 + f(r)^2 g_{S^{n-1}}

where ``f`` is the radial warping profile.  In the chart this reads
``g_ij = a(r) (delta_ij - xhat_i xhat_j) + xhat_i xhat_j`` with
``a = (f/r)^2``.  Euclidean space (``f = r``), the constant curvature
space (``f = sinh(sqrt(K0) r)/sqrt(K0)``) and 2-D warped products with a
prescribed radial curvature all share this representation, so geodesics,
Christoffel symbols and curvature are evaluated by the same code.

Distances to ``o`` coincide with the Euclidean chart radius ``|x|``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

# below this chart radius the closed forms lose digits; use Taylor series
_R_SERIES = 1e-3
_K_POSITIVE_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model construction parameters."""


# ---------------------------------------------------------------------------
# radial profiles
# ---------------------------------------------------------------------------


class RadialProfile:
    """Warping function f(r) with f(0)=0, f'(0)=1.

    Subclasses provide ``f_df`` (values of f and f'), the radial and
    tangential sectional curvatures and the Taylor coefficients
    ``f = r + c3 r^3 + c5 r^5 + ...`` used near the origin.
    """

    r_max: float = math.inf
    c3: float = 0.0
    c4: float = 0.0
    c5: float = 0.0

    def f_df(self, r):
        raise NotImplementedError

    def f(self, r):
        return self.f_df(r)[0]

    def df(self, r):
        return self.f_df(r)[1]

    def d2f(self, r):
        r = np.asarray(r, dtype=float)
        return -self.radial_curvature(r) * self.f(r)

    def radial_curvature(self, r):
        raise NotImplementedError

    def tangential_curvature(self, r):
        r = np.asarray(r, dtype=float)
        f, df = self.f_df(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (1.0 - df**2) / f**2
        return np.where(r < _R_SERIES, self.radial_curvature(r), out)


class FlatProfile(RadialProfile):
    def f_df(self, r):
        r = np.asarray(r, dtype=float)
        return r.copy(), np.ones_like(r)

    def radial_curvature(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def tangential_curvature(self, r):
        return self.radial_curvature(r)


class SinhProfile(RadialProfile):
    """f(r) = sinh(s r)/s, constant curvature -s^2."""

    def __init__(self, K0: float):
        self.K0 = float(K0)
        self.s = math.sqrt(self.K0)
        self.c3 = self.K0 / 6.0
        self.c5 = self.K0**2 / 120.0
        # beyond this the chart metric (f/r)^2 ~ e^{2 s r} amplifies roundoff
        # in the tangential velocity past the speed-drift tolerance
        self.r_max = 30.0 / self.s

    def f_df(self, r):
        r = np.asarray(r, dtype=float)
        return np.sinh(self.s * r) / self.s, np.cosh(self.s * r)

    def radial_curvature(self, r):
        return np.full_like(np.asarray(r, dtype=float), -self.K0)

    def tangential_curvature(self, r):
        return self.radial_curvature(r)


def _hermite5(t, h, y0, d0, s0, y1, d1, s1):
    """Quintic Hermite interpolant on [0,1]; returns value and d/dr."""
    # write p(t) = y0 + h d0 t + h^2 s0 t^2/2 + t^3 (c3 + c4 t + c5 t^2)
    hd0, hd1 = h * d0, h * d1
    hs0, hs1 = h * h * s0, h * h * s1
    dy = y1 - y0
    c3 = 10 * dy - 6 * hd0 - 4 * hd1 - 1.5 * hs0 + 0.5 * hs1
    c4 = -15 * dy + 8 * hd0 + 7 * hd1 + 1.5 * hs0 - hs1
    c5 = 6 * dy - 3 * hd0 - 3 * hd1 - 0.5 * hs0 + 0.5 * hs1
    val = y0 + t * (hd0 + t * (0.5 * hs0 + t * (c3 + t * (c4 + t * c5))))
    der = hd0 + t * (hs0 + t * (3 * c3 + t * (4 * c4 + 5 * t * c5)))
    return val, der / h


@dataclass(frozen=True, eq=False)
class WarpedProfile(RadialProfile):
    """Sampled warping function on [0, r_max].

    Holds f, f' and f'' at equispaced nodes.  Values between nodes come
    from quintic Hermite interpolation; f'' is recomputed as ``-k f`` when
    the curvature function ``k`` is known so that the curvature identity
    holds exactly.
    """

    r: np.ndarray
    f_s: np.ndarray
    df_s: np.ndarray
    d2f_s: np.ndarray
    k: Callable | None = None
    label: str = "sampled"
    c3: float = field(init=False)
    c4: float = field(init=False)
    c5: float = field(init=False)

    def __post_init__(self):
        # Taylor data of f at 0 from k = k0 + k1 r + k2 r^2 + ...
        if self.k is not None:
            h = 1e-4
            k0, kh, k2h = (float(v) for v in np.asarray(self.k(np.array([0.0, h, 2 * h])), dtype=float) + np.zeros(3))
            k1 = (-3 * k0 + 4 * kh - k2h) / (2 * h)
            k2 = (k0 - 2 * kh + k2h) / (2 * h * h)
        else:
            k0, k1, k2 = -self.d2f_s[1] / self.f_s[1], 0.0, 0.0
        object.__setattr__(self, "c3", -k0 / 6.0)
        object.__setattr__(self, "c4", -k1 / 12.0)
        object.__setattr__(self, "c5", k0**2 / 120.0 - k2 / 20.0)

    @property
    def step(self) -> float:
        return float(self.r[1] - self.r[0])

    @property
    def r_max(self) -> float:  # type: ignore[override]
        return float(self.r[-1])

    def _locate(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r > self.r_max * (1 + 1e-12)):
            raise ModelError(f"radius {float(np.max(r)):.3g} beyond profile r_max={self.r_max:.3g}")
        h = self.step
        i = np.clip((r / h).astype(np.int64), 0, len(self.r) - 2)
        return r, i, (r - self.r[i]) / h, h

    def f_df(self, r):
        r, i, t, h = self._locate(r)
        return _hermite5(t, h, self.f_s[i], self.df_s[i], self.d2f_s[i],
                         self.f_s[i + 1], self.df_s[i + 1], self.d2f_s[i + 1])

    def d2f(self, r):
        r = np.asarray(r, dtype=float)
        if self.k is not None:
            return -self.k(r) * self.f(r)
        r, i, t, h = self._locate(r)
        # linear in f'' between nodes is enough for CSV-loaded profiles
        return (1 - t) * self.d2f_s[i] + t * self.d2f_s[i + 1]

    def radial_curvature(self, r):
        r = np.asarray(r, dtype=float)
        if self.k is not None:
            return np.asarray(self.k(r), dtype=float) + 0.0 * r
        f = self.f(np.maximum(r, self.step))
        return np.where(r < self.step, -self.d2f_s[1] / self.f_s[1], -self.d2f(np.maximum(r, self.step)) / f)

    def tangential_curvature(self, r):
        # 2-D only: no tangential planes; report the radial value
        return self.radial_curvature(r)

    def check_invariants(self, tol: float | None = None) -> None:
        h = self.step
        if abs(self.f_s[0]) > 1e-14 or abs(self.df_s[0] - 1.0) > 1e-12:
            raise ModelError("profile must satisfy f(0)=0, f'(0)=1")
        if np.any(self.f_s[1:] <= 0):
            raise ModelError("profile must be positive for r > 0")
        if np.any(self.d2f_s < -1e-12 * np.maximum(1.0, np.abs(self.f_s))):
            raise ModelError("f'' < 0 somewhere: curvature would be positive")
        num = np.gradient(self.f_s, h, edge_order=2)
        tol = 10 * h**2 * max(np.max(np.abs(self.d2f_s)), 1e-300) if tol is None else tol
        # interior nodes only; edge stencils are one-sided
        if np.max(np.abs(num[1:-1] - self.df_s[1:-1])) > tol + 1e-12 * np.max(np.abs(self.df_s)):
            raise ModelError("f' inconsistent with the numerical derivative of f")

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "f", "fp", "fpp"])
            for row in zip(self.r, self.f_s, self.df_s, self.d2f_s):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, k: Callable | None = None) -> "WarpedProfile":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        prof = cls(data[:, 0].copy(), data[:, 1].copy(), data[:, 2].copy(), data[:, 3].copy(),
                   k=k, label=f"csv:{Path(path).name}")
        prof.check_invariants()
        return prof


def profile_from_curvature(k: Callable, r_max: float, step: float = 1e-3, label: str = "custom") -> WarpedProfile:
    """Solve f'' = -k(r) f, f(0)=0, f'(0)=1 with classical RK4.

    ``k`` must accept numpy arrays and be nonpositive on [0, r_max].
    """
    if r_max <= 0 or step <= 0:
        raise ModelError("r_max and step must be positive")
    n = int(math.ceil(r_max / step))
    h = r_max / n
    r = np.linspace(0.0, r_max, n + 1)
    half = np.linspace(0.5 * h, r_max - 0.5 * h, n)
    k_nodes = np.asarray(k(r), dtype=float) + 0.0 * r
    k_half = np.asarray(k(half), dtype=float) + 0.0 * half
    worst = max(float(np.max(k_nodes)), float(np.max(k_half)))
    if worst > _K_POSITIVE_TOL:
        raise ModelError(f"curvature function is positive somewhere (max {worst:.3g}); "
                         "the model would not be Cartan-Hadamard")
    f = np.empty(n + 1)
    df = np.empty(n + 1)
    f[0], df[0] = 0.0, 1.0
    y, p = 0.0, 1.0
    kn, kh = k_nodes.tolist(), k_half.tolist()
    for i in range(n):
        k0, k1, k2 = kn[i], kh[i], kn[i + 1]
        a1, b1 = p, -k0 * y
        a2, b2 = p + 0.5 * h * b1, -k1 * (y + 0.5 * h * a1)
        a3, b3 = p + 0.5 * h * b2, -k1 * (y + 0.5 * h * a2)
        a4, b4 = p + h * b3, -k2 * (y + h * a3)
        y += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        p += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        f[i + 1], df[i + 1] = y, p
    d2f = -k_nodes * f
    prof = WarpedProfile(r, f, df, d2f, k=k, label=label)
    prof.check_invariants()
    return prof


# ---------------------------------------------------------------------------
# curvature presets
# ---------------------------------------------------------------------------


def curvature_preset(spec: str) -> tuple[Callable, dict]:
    """Parse ``flat``, ``constant:K0`` or ``powerlaw:c,kappa`` into k(r) <= 0."""
    name, _, arg = spec.partition(":")
    if name == "flat":
        return (lambda r: np.zeros_like(np.asarray(r, dtype=float))), {"preset": "flat"}
    if name == "constant":
        K0 = float(arg)
        if K0 < 0:
            raise ModelError("constant:K0 needs K0 >= 0 (curvature is -K0)")
        return (lambda r: np.full_like(np.asarray(r, dtype=float), -K0)), {"preset": "constant", "K0": K0}
    if name == "powerlaw":
        try:
            c, kappa = (float(s) for s in arg.split(","))
        except ValueError:
            raise ModelError("powerlaw preset needs 'powerlaw:c,kappa'") from None
        if c < 0:
            raise ModelError("powerlaw amplitude c must be >= 0")
        return (lambda r: -c * (1.0 + np.asarray(r, dtype=float)) ** (-kappa)), \
            {"preset": "powerlaw", "c": c, "kappa": kappa}
    raise ModelError(f"unknown curvature preset {spec!r}")


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


def _chart_coefficients(profile: RadialProfile, r):
    """a = (f/r)^2 and the connection coefficients A, B at chart radius r.

    With u = rho_u xhat + t_u (t_u orthogonal to xhat in the chart),
    Gamma(u, w) = A (t_u . t_w) xhat - B (rho_u t_w + rho_w t_u), where
    A = (r - f f')/r^2 and B = (1 - r f'/f)/r.  Taylor series are used
    near the origin where both closed forms cancel.
    """
    r = np.asarray(r, dtype=float)
    if isinstance(profile, FlatProfile):
        z = np.zeros_like(r)
        return z + 1.0, z, z
    small = r < _R_SERIES
    rs = np.where(small, _R_SERIES, r)
    f, df = profile.f_df(rs)
    a = (f / rs) ** 2
    A = (rs - f * df) / rs**2
    B = (1.0 - rs * df / f) / rs
    if np.any(small):
        c3, c4, c5 = profile.c3, profile.c4, profile.c5
        r2 = r * r
        a = np.where(small, 1.0 + 2.0 * c3 * r2 + 2.0 * c4 * r2 * r + (c3 * c3 + 2.0 * c5) * r2 * r2, a)
        A = np.where(small, -4.0 * c3 * r - 5.0 * c4 * r2 - (6.0 * c5 + 3.0 * c3 * c3) * r2 * r, A)
        B = np.where(small, -2.0 * c3 * r - 3.0 * c4 * r2 - (4.0 * c5 - 2.0 * c3 * c3) * r2 * r, B)
    return a, A, B


def _dot(u, w):
    return np.einsum("...i,...i->...", u, w)


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """Immutable Cartan-Hadamard model; all evaluators are pure and batched.

    Points are arrays of shape ``(..., dim)`` in the global normal chart.
    Metric operations are carried out in the split radial/tangential form,
    which stays accurate when f(r)/r is very large.
    """

    dim: int
    kind: str
    profile: RadialProfile
    params: dict = field(default_factory=dict)

    @property
    def base_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def r_max(self) -> float:
        return self.profile.r_max

    @property
    def name(self) -> str:
        if self.kind == "euclidean":
            return f"euclidean:{self.dim}"
        if self.kind == "hyperbolic":
            return f"hyperbolic:{self.params['K0']:g}:{self.dim}"
        return f"warped:{self.params.get('label', 'profile')}"

    # -- metric ------------------------------------------------------------
    def dist_to_o(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)

    def radial_unit(self, x):
        """Unit radial vector xhat (g-unit as well); zero at o."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return np.where(r > 0, x / np.where(r > 0, r, 1.0), 0.0)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(_dot(x, x))
        a, A, B = _chart_coefficients(self.profile, r)
        rs = r[..., None]
        n = x / np.where(rs > 0, rs, 1.0)
        return n, a, A, B

    def metric(self, x):
        n, a, _, _ = self._split(x)
        P = n[..., :, None] * n[..., None, :]
        return a[..., None, None] * (np.eye(self.dim) - P) + P

    def inner(self, x, u, w):
        n, a, _, _ = self._split(x)
        ru, rw = _dot(n, u), _dot(n, w)
        tu = u - ru[..., None] * n
        tw = w - rw[..., None] * n
        return ru * rw + a * _dot(tu, tw)

    def norm(self, x, u):
        return np.sqrt(np.maximum(self.inner(x, u, u), 0.0))

    def normalize(self, x, v):
        v = np.asarray(v, dtype=float)
        nv = self.norm(x, v)
        if np.any(nv <= 0):
            raise ValueError("cannot normalize a zero tangent vector")
        return v / nv[..., None]

    def raise_index(self, x, z):
        """g^{-1} z for covectors z (chart components)."""
        n, a, _, _ = self._split(x)
        rz = _dot(n, z)
        return (z - rz[..., None] * n) / a[..., None] + rz[..., None] * n

    def lower_index(self, x, u):
        n, a, _, _ = self._split(x)
        ru = _dot(n, u)
        return a[..., None] * (u - ru[..., None] * n) + ru[..., None] * n

    def sqrt_metric(self, x):
        """Symmetric square root g^{1/2} = sqrt(a)(I - P) + P."""
        n, a, _, _ = self._split(x)
        P = n[..., :, None] * n[..., None, :]
        return np.sqrt(a)[..., None, None] * (np.eye(self.dim) - P) + P

    def frame(self, x):
        """g-orthonormal frame e_a = g^{-1/2} d_a (columns), smooth everywhere."""
        n, a, _, _ = self._split(x)
        P = n[..., :, None] * n[..., None, :]
        return (np.eye(self.dim) - P) / np.sqrt(a)[..., None, None] + P

    def perp(self, x, v):
        """Rotation of v by +pi/2 in T_xM (2-D only): g^{-1/2} R g^{1/2} v."""
        if self.dim != 2:
            raise ValueError("perp is only defined in dimension 2")
        w = np.einsum("...ij,...j->...i", self.sqrt_metric(x), v)
        w = np.stack([-w[..., 1], w[..., 0]], axis=-1)
        return np.einsum("...ij,...j->...i", self.frame(x), w)

    def volume_density(self, x):
        """sqrt(det g) in the chart."""
        _, a, _, _ = self._split(x)
        return a ** (0.5 * (self.dim - 1))

    # -- connection --------------------------------------------------------
    def christoffel_contract(self, x, u, w):
        """Gamma^k_ij u^i w^j, batched."""
        if self.kind == "euclidean":
            return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(u), np.shape(w)))
        n, _, A, B = self._split(x)
        ru, rw = _dot(n, u), _dot(n, w)
        tu = u - ru[..., None] * n
        tw = w - rw[..., None] * n
        return (A * _dot(tu, tw))[..., None] * n - B[..., None] * (ru[..., None] * tw + rw[..., None] * tu)

    def geodesic_accel(self, x, v):
        return -self.christoffel_contract(x, v, v)

    def christoffel(self, x):
        """Full array Gamma[..., k, i, j] = Gamma^k_ij."""
        n, _, A, B = self._split(x)
        Pi = np.eye(self.dim) - n[..., :, None] * n[..., None, :]
        t1 = A[..., None, None, None] * n[..., :, None, None] * Pi[..., None, :, :]
        t2 = n[..., None, :, None] * Pi[..., :, None, :] + n[..., None, None, :] * Pi[..., :, :, None]
        return t1 - B[..., None, None, None] * t2

    # -- curvature ---------------------------------------------------------
    def curvatures(self, x):
        """(radial, tangential) sectional curvatures at x."""
        r = self.dist_to_o(x)
        return self.profile.radial_curvature(r), self.profile.tangential_curvature(r)

    def curvature_form(self, x, X, Y, Z):
        """<R(X,Y)Y, Z>_g with R(X,Y)Y = K(|Y|^2 X - <X,Y>Y) on constant curvature."""
        x = np.asarray(x, dtype=float)
        n, a, _, _ = self._split(x)
        krad, ktan = self.curvatures(x)
        # radial components and chart-tangential parts; <t, t'>_g = a t.t'
        ax, ay, az = _dot(n, X), _dot(n, Y), _dot(n, Z)
        tx = X - ax[..., None] * n
        ty = Y - ay[..., None] * n
        tz = Z - az[..., None] * n
        p1 = ax[..., None] * ty - ay[..., None] * tx
        p2 = az[..., None] * ty - ay[..., None] * tz
        rad = a * _dot(p1, p2)
        tan = a * a * (_dot(tx, tz) * _dot(ty, ty) - _dot(tx, ty) * _dot(ty, tz))
        return krad * rad + ktan * tan

    def sectional_curvature(self, x, u, w):
        num = self.curvature_form(x, u, w, u)
        den = self.inner(x, u, u) * self.inner(x, w, w) - self.inner(x, u, w) ** 2
        return num / den

    def kappa_bound(self, x):
        """sup of |K_x(Pi)| over two-planes at x."""
        krad, ktan = self.curvatures(x)
        if self.dim == 2:
            return np.abs(krad)
        return np.maximum(np.abs(krad), np.abs(ktan))


def make_euclidean(n: int = 2) -> ManifoldModel:
    if int(n) != n or n < 2:
        raise ModelError("dimension must be an integer >= 2")
    return ManifoldModel(int(n), "euclidean", FlatProfile(), {})


def make_hyperbolic(n: int = 2, K0: float = 1.0) -> ManifoldModel:
    if int(n) != n or n < 2:
        raise ModelError("dimension must be an integer >= 2")
    if not K0 > 0:
        raise ModelError("hyperbolic space needs K0 > 0")
    return ManifoldModel(int(n), "hyperbolic", SinhProfile(K0), {"K0": float(K0)})


def make_warped(profile: WarpedProfile) -> ManifoldModel:
    """2-D warped product dr^2 + f(r)^2 dtheta^2 from a sampled profile."""
    profile.check_invariants()
    return ManifoldModel(2, "warped", profile, {"label": profile.label, "r_max": profile.r_max})


_WARPED_CACHE: dict = {}


def make_warped_preset(spec: str, r_max: float = 200.0, step: float = 1e-3) -> ManifoldModel:
    """Warped model from a curvature preset string (cached by arguments)."""
    key = (spec, float(r_max), float(step))
    if key not in _WARPED_CACHE:
        k, meta = curvature_preset(spec)
        prof = profile_from_curvature(k, r_max, step, label=spec)
        model = make_warped(prof)
        model.params.update(meta)
        _WARPED_CACHE[key] = model
    return _WARPED_CACHE[key]


def parse_model(spec: str) -> ManifoldModel:
    """Model from a CLI string.

    ``euclidean[:n]``, ``hyperbolic:K0[:n]``, ``warped:<curvature preset>``.
    """
    name, _, rest = spec.partition(":")
    try:
        if name == "euclidean":
            return make_euclidean(int(rest) if rest else 2)
        if name == "hyperbolic":
            parts = rest.split(":") if rest else ["1"]
            return make_hyperbolic(int(parts[1]) if len(parts) > 1 else 2, float(parts[0]))
    except ValueError as exc:
        raise ModelError(f"bad model spec {spec!r}: {exc}") from None
    if name == "warped":
        if not rest:
            raise ModelError("warped model needs a curvature preset, e.g. warped:powerlaw:1,3")
        return make_warped_preset(rest)
    raise ModelError(f"unknown model {spec!r}")


def unit_sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def sphere_volume(M: ManifoldModel, r: float, method: str = "profile", n_dirs: int = 8) -> float:
    """Volume of the geodesic sphere S(o, r).

    ``method="profile"`` uses the rotational symmetry, Vol = |S^{n-1}| f(r)^{n-1}.
    ``method="jacobi"`` integrates the product of v-type Jacobi field norms
    along radial geodesics and averages over directions in S_oM.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0:
        return 0.0
    if method == "profile":
        return unit_sphere_area(M.dim) * float(M.profile.f(np.array([r]))[0]) ** (M.dim - 1)
    if method != "jacobi":
        raise ValueError(f"unknown method {method!r}")
    from .jacobi import jacobi_determinant

    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(n_dirs, M.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    mu = jacobi_determinant(M, dirs, r)
    return unit_sphere_area(M.dim) * float(np.mean(mu))


def curvature_sup(M: ManifoldModel, n: int = 4001) -> float:
    """sup of |K| over two-planes, sampled along a radius up to min(r_max, 100)."""
    r = np.linspace(0.0, min(M.r_max, 100.0), n)
    krad, ktan = M.profile.radial_curvature(r), M.profile.tangential_curvature(r)
    k = np.abs(krad) if M.dim == 2 else np.maximum(np.abs(krad), np.abs(ktan))
    return float(np.max(k))


def gronwall_profile_bound(k: Callable) -> float:
    """exp(int_0^inf s |k(s)| ds): upper bound for lim f(r)/r."""
    val, _ = integrate.quad(lambda s: s * abs(float(k(np.array([s]))[0])), 0.0, np.inf, limit=200)
    return math.exp(val)
