"""Functions on the circle bundle of a 2-D model and their vertical Fourier modes.

A point of SM is stored as a chart node x and an angle theta measured in the
orthonormal frame e = g^{-1/2} d of M.frame, so that

    v(theta)     = cos(theta) e_1 + sin(theta) e_2,
    v_perp       = -sin(theta) e_1 + cos(theta) e_2      (rotation by +pi/2).

With the connection form omega(X) = <nabla_X e_1, e_2>, a parallel unit
vector along a geodesic has theta' = -omega(v), hence

    X u      = v.du - omega(v) d_theta u,
    X_perp u = [X, V] u = -(v_perp.du - omega(v_perp) d_theta u),
    V u      = d_theta u,

which gives grad^h u = -(X_perp u) v_perp and grad^v u = (V u) v_perp.
Spatial derivatives are spectral on a periodic chart box (the functions are
compactly supported inside it) and angular derivatives are spectral on the
fibre.  The geodesic-flow central differences in :func:`flow_differences`
provide an independent cross-check of X and X_perp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geodesic import SMPoint
from .manifold import ManifoldModel
from .tensor import bump_profile, partial_fd

STENCIL_MARGIN = 3
RATIO_FLOOR = 1e-10
ALIAS_TOL = 1e-8


class GridError(ValueError):
    """Invalid SM grid or grid function."""


@dataclass(frozen=True)
class SMGrid:
    """Periodic chart box [-L, L)^2 with nx x ny nodes and ntheta fibre angles."""

    half_width: float
    nx: int
    ny: int
    ntheta: int

    def __post_init__(self):
        if self.ntheta < 4 or self.ntheta % 2:
            raise GridError("ntheta must be even and >= 4")
        if min(self.nx, self.ny) < 8:
            raise GridError("need at least 8 nodes per axis")

    @property
    def hx(self) -> float:
        return 2.0 * self.half_width / self.nx

    @property
    def hy(self) -> float:
        return 2.0 * self.half_width / self.ny

    @property
    def x1d(self) -> np.ndarray:
        return -self.half_width + self.hx * np.arange(self.nx)

    @property
    def y1d(self) -> np.ndarray:
        return -self.half_width + self.hy * np.arange(self.ny)

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.ntheta) / self.ntheta

    @property
    def nodes(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x1d, self.y1d, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def max_support_radius(self) -> float:
        """Largest centred support radius that keeps the stencil margin."""
        return self.half_width - STENCIL_MARGIN * max(self.hx, self.hy)


@dataclass(frozen=True)
class SMGridFunction:
    """Samples u(x_i, theta_j) with shape (nx, ny, ntheta)."""

    grid: SMGrid
    values: np.ndarray
    support_radius: float | None = None

    def __post_init__(self):
        g = self.grid
        if self.values.shape != (g.nx, g.ny, g.ntheta):
            raise GridError(f"values must have shape {(g.nx, g.ny, g.ntheta)}, got {self.values.shape}")
        if self.support_radius is not None and self.support_radius > g.max_support_radius():
            raise GridError("support touches the box boundary (need a margin of 3 stencils)")

    def like(self, values) -> "SMGridFunction":
        return SMGridFunction(self.grid, np.real_if_close(values), self.support_radius)

    def __add__(self, other: "SMGridFunction") -> "SMGridFunction":
        return self.like(self.values + other.values)

    def __sub__(self, other: "SMGridFunction") -> "SMGridFunction":
        return self.like(self.values - other.values)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sm_points(M: ManifoldModel, grid: SMGrid) -> SMPoint:
    """All grid points of SM as a flat batch (node-major, angle fastest)."""
    if M.dim != 2:
        raise GridError("harmonics are implemented for n = 2")
    x = np.repeat(grid.nodes.reshape(-1, 2), grid.ntheta, axis=0)
    th = np.tile(grid.theta, grid.nx * grid.ny)
    w = np.stack([np.cos(th), np.sin(th)], axis=-1)
    return SMPoint(x, np.einsum("nij,nj->ni", M.frame(x), w))


def sample(M: ManifoldModel, grid: SMGrid, func: Callable, support_radius: float | None = None) -> SMGridFunction:
    """Grid function from a batched callable ``func(x, v)``."""
    p = sm_points(M, grid)
    vals = np.asarray(func(p.x, p.v), dtype=float)
    return SMGridFunction(grid, vals.reshape(grid.nx, grid.ny, grid.ntheta), support_radius)


def random_band_limited(grid: SMGrid, kmax: int, rng: np.random.Generator, radius: float | None = None,
                        n_bumps: int = 3) -> SMGridFunction:
    """Random u = sum_k a_k(x) cos k theta + b_k(x) sin k theta, k <= kmax.

    Each coefficient is a sum of smooth bumps with random centres, radii and
    amplitudes, all contained in the disc of the given radius.
    """
    R = 0.6 * grid.max_support_radius() if radius is None else radius
    if R > grid.max_support_radius():
        raise GridError("support radius too large for the box")
    X = grid.nodes
    th = grid.theta
    vals = np.zeros((grid.nx, grid.ny, grid.ntheta))
    for k in range(kmax + 1):
        for trig in ((np.cos,) if k == 0 else (np.cos, np.sin)):
            coef = np.zeros((grid.nx, grid.ny))
            for _ in range(n_bumps):
                rb = R * rng.uniform(0.45, 0.7)
                c = rng.uniform(-1.0, 1.0, 2)
                c *= (R - rb) * rng.uniform(0.0, 1.0) / max(np.linalg.norm(c), 1e-12)
                coef += rng.normal() * bump_profile(np.linalg.norm(X - c, axis=-1) / rb)
            vals += coef[:, :, None] * trig(k * th)[None, None, :]
    return SMGridFunction(grid, vals, R)


# ---------------------------------------------------------------------------
# Fourier modes on the fibres
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierModes:
    """Coefficients u_hat[..., k] for k = -kmax..kmax (index k + kmax).

    ``u(x, theta) = sum_k u_hat_k(x) exp(i k theta)``; ``alias_fraction`` is
    the energy above kmax relative to the total.
    """

    grid: SMGrid
    coeff: np.ndarray
    kmax: int
    alias_fraction: float
    support_radius: float | None = None

    def __getitem__(self, k: int) -> np.ndarray:
        if abs(k) > self.kmax:
            return np.zeros(self.coeff.shape[:-1], dtype=complex)
        return self.coeff[..., k + self.kmax]

    def band(self, k: int) -> SMGridFunction:
        """Real grid function u_k carrying the modes +-k."""
        k = abs(k)
        e = np.exp(1j * k * self.grid.theta)
        vals = self[k][..., None] * e
        if k:
            vals = vals + self[-k][..., None] * np.conj(e)
        return SMGridFunction(self.grid, vals.real, self.support_radius)

    def energy(self, k: int) -> np.ndarray:
        """Angular mean of |u_k|^2 per node."""
        k = abs(k)
        e = np.abs(self[k]) ** 2
        return e + np.abs(self[-k]) ** 2 if k else e

    def parseval_defect(self, u: SMGridFunction) -> float:
        """|sum_k |u_hat_k|^2 - mean_theta |u|^2|, maximised over nodes, relative."""
        lhs = np.sum(np.abs(self.coeff) ** 2, axis=-1)
        rhs = np.mean(u.values**2, axis=-1)
        return float(np.max(np.abs(lhs - rhs)) / max(np.max(rhs), 1e-300))

    def conjugate_symmetry_defect(self) -> float:
        d = self.coeff - np.conj(self.coeff[..., ::-1])
        return float(np.max(np.abs(d)) / max(np.max(np.abs(self.coeff)), 1e-300))


def vertical_fourier(u: SMGridFunction, kmax: int) -> FourierModes:
    """FFT of u along the fibre, truncated to |k| <= kmax."""
    nt = u.grid.ntheta
    if nt < 2 * kmax + 2:
        raise GridError(f"ntheta={nt} cannot resolve kmax={kmax} (need ntheta >= 2 kmax + 2)")
    c = np.fft.fft(u.values, axis=-1) / nt
    ks = np.fft.fftfreq(nt, 1.0 / nt).astype(int)
    keep = np.abs(ks) <= kmax
    total = float(np.sum(np.abs(c) ** 2))
    alias = float(np.sum(np.abs(c[..., ~keep]) ** 2)) / total if total > 0 else 0.0
    order = np.argsort(ks[keep])
    return FourierModes(u.grid, c[..., keep][..., order], kmax, alias, u.support_radius)


def _dtheta(values, order: int = 1):
    nt = values.shape[-1]
    k = np.fft.fftfreq(nt, 1.0 / nt)
    if order % 2:
        k[nt // 2] = 0.0  # Nyquist mode has no odd derivative
    c = np.fft.fft(values, axis=-1) * (1j * k) ** order
    return np.fft.ifft(c, axis=-1).real


def vertical_laplacian(u: SMGridFunction) -> SMGridFunction:
    """Delta u = -d_theta^2 u (fibre Laplacian of the unit circle)."""
    return u.like(-_dtheta(u.values, 2))


def eigen_defect(u: SMGridFunction, kmax: int) -> dict[int, float]:
    """||Delta u_k - k^2 u_k|| / ||u_k|| for every mode with nonzero energy."""
    modes = vertical_fourier(u, kmax)
    out = {}
    for k in range(kmax + 1):
        uk = modes.band(k)
        nrm = np.linalg.norm(uk.values)
        if nrm > 0:
            out[k] = float(np.linalg.norm(vertical_laplacian(uk).values - k * k * uk.values) / nrm)
    return out


# ---------------------------------------------------------------------------
# geometry on the grid
# ---------------------------------------------------------------------------

_GEOMETRY_CACHE: dict = {}


@dataclass(frozen=True)
class GridGeometry:
    """Frame, connection form and Sasaki weights at the grid nodes."""

    frame: np.ndarray  # (nx, ny, 2, 2), columns e_1, e_2 in the chart
    omega: np.ndarray  # (nx, ny, 2), omega(e_a)
    weight: np.ndarray  # (nx, ny), sqrt(det g) hx hy 2pi/ntheta
    extra: dict = field(default_factory=dict)


def connection_form(M: ManifoldModel, x, step: float = 1e-4) -> np.ndarray:
    """omega(e_a) = <nabla_{e_a} e_1, e_2>_g for the frame of M.frame, shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    F = M.frame(x)
    dF = partial_fd(M.frame, x, 2, step)  # (..., i, r, c)
    e1, e2 = F[..., :, 0], F[..., :, 1]
    out = []
    for a in range(2):
        ea = F[..., :, a]
        de1 = np.einsum("...i,...ir->...r", ea, dF[..., :, :, 0])
        nab = de1 + M.christoffel_contract(x, ea, e1)
        out.append(M.inner(x, nab, e2))
    return np.stack(out, axis=-1)


def grid_geometry(M: ManifoldModel, grid: SMGrid) -> GridGeometry:
    key = (id(M), grid)
    hit = _GEOMETRY_CACHE.get(key)
    if hit is not None and hit[0] is M:
        return hit[1]
    X = grid.nodes
    geo = GridGeometry(M.frame(X), connection_form(M, X),
                       M.volume_density(X) * grid.hx * grid.hy * 2.0 * np.pi / grid.ntheta)
    _GEOMETRY_CACHE[key] = (M, geo)
    return geo


def inner(M: ManifoldModel, u: SMGridFunction, w: SMGridFunction) -> float:
    """L^2(SM) inner product with the Sasaki volume (area element x dtheta)."""
    geo = grid_geometry(M, u.grid)
    return float(np.sum(geo.weight[:, :, None] * u.values * w.values))


def norm(M: ManifoldModel, u: SMGridFunction) -> float:
    return math.sqrt(max(inner(M, u, u), 0.0))


def _spatial_gradient(values, grid: SMGrid):
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.nx, grid.hx)
    ky = 2.0 * np.pi * np.fft.fftfreq(grid.ny, grid.hy)
    kx[grid.nx // 2] = 0.0
    ky[grid.ny // 2] = 0.0
    c = np.fft.fft2(values, axes=(0, 1))
    dx = np.fft.ifft2(c * (1j * kx)[:, None, None], axes=(0, 1)).real
    dy = np.fft.ifft2(c * (1j * ky)[None, :, None], axes=(0, 1)).real
    return dx, dy


def _check_interior(u: SMGridFunction, tol: float = 1e-12):
    """Reject functions that do not vanish on the outer stencil band."""
    band = STENCIL_MARGIN
    v = np.abs(u.values)
    edge = max(v[:band].max(), v[-band:].max(), v[:, :band].max(), v[:, -band:].max())
    if edge > tol * max(v.max(), 1e-300):
        raise GridError("support touches the box boundary")


def apply_flows(M: ManifoldModel, u: SMGridFunction, check_support: bool = True):
    """(X u, X_perp u, V u) as grid functions."""
    if check_support:
        _check_interior(u)
    geo = grid_geometry(M, u.grid)
    U = u.values
    dx, dy = _spatial_gradient(U, u.grid)
    dth = _dtheta(U)
    F = geo.frame
    W = []
    for a in range(2):
        Da = F[:, :, 0, a][:, :, None] * dx + F[:, :, 1, a][:, :, None] * dy
        W.append(Da - geo.omega[:, :, a][:, :, None] * dth)
    c = np.cos(u.grid.theta)
    s = np.sin(u.grid.theta)
    Xu = c * W[0] + s * W[1]
    Xperp = -(-s * W[0] + c * W[1])
    return u.like(Xu), u.like(Xperp), u.like(dth)


def flow_differences(M: ManifoldModel, func: Callable, p: SMPoint, delta: float):
    """X u and X_perp u at points p by symmetric flow differences of a callable u(x, v).

    X uses the geodesic flow; X_perp uses the horizontal flow along v_perp
    (parallel transport of v) with X_perp u = -<grad^h u, v_perp>.
    """
    from .xray import flow_point, horizontal_flow

    x = np.atleast_2d(p.x)
    v = np.atleast_2d(p.v)
    q = SMPoint(x, v)
    fp, fm = flow_point(M, q, delta), flow_point(M, q, -delta)
    Xu = (func(fp.x, fp.v) - func(fm.x, fm.v)) / (2 * delta)
    w = M.perp(x, v)
    hp, hm = horizontal_flow(M, q, w, delta), horizontal_flow(M, q, w, -delta)
    Xperp = -(func(hp.x, hp.v) - func(hm.x, hm.v)) / (2 * delta)
    return Xu, Xperp


# ---------------------------------------------------------------------------
# X = X_+ + X_-
# ---------------------------------------------------------------------------


@dataclass
class SplitResult:
    """X(u_k) split into the mode k+1 and k-1 parts."""

    k: int
    Xplus: SMGridFunction
    Xminus: SMGridFunction
    leakage: float  # energy of X(u_k) outside modes k +- 1, relative

    def norms(self, M: ManifoldModel) -> tuple[float, float]:
        return norm(M, self.Xplus), norm(M, self.Xminus)


def _project(u: SMGridFunction, ks) -> SMGridFunction:
    nt = u.grid.ntheta
    c = np.fft.fft(u.values, axis=-1)
    freq = np.abs(np.fft.fftfreq(nt, 1.0 / nt))
    mask = np.isin(freq, list(ks))
    return u.like(np.fft.ifft(c * mask, axis=-1).real)


def split_Xpm(M: ManifoldModel, modes: FourierModes, k: int) -> SplitResult:
    """X_+ u_k and X_- u_k by projecting X(u_k) onto the modes +-(k+1), +-(k-1)."""
    if modes.grid.ntheta < 2 * (modes.kmax + 1) + 2:
        raise GridError("ntheta must resolve kmax + 1 for the split")
    uk = modes.band(k)
    Xu, _, _ = apply_flows(M, uk, check_support=False)
    Xp = _project(Xu, [k + 1])
    Xm = _project(Xu, [k - 1]) if k >= 1 else Xu.like(np.zeros_like(Xu.values))
    rest = Xu.values - Xp.values - Xm.values
    tot = np.sum(Xu.values**2)
    leak = float(np.sum(rest**2) / tot) if tot > 0 else 0.0
    return SplitResult(k, Xp, Xm, leak)


def split_all(M: ManifoldModel, u: SMGridFunction, kmax: int) -> list[SplitResult]:
    _check_interior(u)
    modes = vertical_fourier(u, kmax)
    return [split_Xpm(M, modes, k) for k in range(kmax + 1)]


def D2(k: int) -> float:
    """Contraction constant of X_- against X_+ on mode k in dimension 2."""
    if k < 1:
        raise ValueError("D_2(k) is defined for k >= 1")
    return math.sqrt(2.0) if k == 1 else 1.0


@dataclass
class ContractionReport:
    ratios: dict[int, float]
    skipped: list[int]
    max_leakage: float

    def slack(self, tol: float = 0.0) -> dict[int, float]:
        """D_2(k) + tol - ratio per mode; negative means violated."""
        return {k: D2(k) + tol - r for k, r in self.ratios.items()}


def contraction_check(M: ManifoldModel, u: SMGridFunction, kmax: int) -> ContractionReport:
    """||X_- u_k|| / ||X_+ u_k|| for 1 <= k <= kmax (skipping negligible X_+ u_k)."""
    splits = split_all(M, u, kmax)
    unorm = norm(M, u)
    ratios, skipped = {}, []
    for s in splits[1:]:
        p, m = s.norms(M)
        if p < RATIO_FLOOR * unorm:
            skipped.append(s.k)
            continue
        ratios[s.k] = m / p
    return ContractionReport(ratios, skipped, max(s.leakage for s in splits))


def norm_splitting_check(M: ManifoldModel, u: SMGridFunction, kmax: int) -> float:
    """||X u||^2 + ||X_perp u||^2 - ||X_+ u||^2 - ||X_- u||^2 (should be >= 0)."""
    splits = split_all(M, u, kmax)
    Xu, Xperp, _ = apply_flows(M, u)
    Xp = sum((s.Xplus.values for s in splits), np.zeros_like(u.values))
    Xm = sum((s.Xminus.values for s in splits), np.zeros_like(u.values))
    lhs = norm(M, u.like(Xp)) ** 2 + norm(M, u.like(Xm)) ** 2
    return norm(M, Xu) ** 2 + norm(M, Xperp) ** 2 - lhs


@dataclass
class RecursionReport:
    """Checks of the mode recursion for u = u^f with I f = 0."""

    residuals: dict[int, float]  # ||X_+ u_k + X_- u_{k+2}|| / ||X u||
    mode_energy: dict[int, float]  # ||u_k||^2 / ||u||^2


def recursion_check(M: ManifoldModel, u: SMGridFunction, m: int, kmax: int) -> RecursionReport:
    """For k >= m: relative size of X_+ u_k + X_- u_{k+2} and of the modes u_k."""
    modes = vertical_fourier(u, kmax)
    splits = [split_Xpm(M, modes, k) for k in range(kmax + 1)]
    Xn = norm(M, apply_flows(M, u, check_support=False)[0])
    un = norm(M, u)
    res, energy = {}, {}
    for k in range(m, kmax + 1):
        nxt = splits[k + 2].Xminus.values if k + 2 <= kmax else 0.0
        r = norm(M, u.like(splits[k].Xplus.values + nxt))
        res[k] = r / Xn if Xn > 0 else r
        energy[k] = norm(M, modes.band(k)) ** 2 / un**2 if un > 0 else 0.0
    return RecursionReport(res, energy)
