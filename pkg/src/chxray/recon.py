"""Discretised X-ray transform on a chart grid and its least-squares inversion.

Unknowns are nodal values of the independent components of a symmetric
m-tensor on the nodes of a chart box that lie in a support disc; fields are
bilinearly interpolated between nodes.  A row integrates the interpolated
field along one full geodesic.  The geodesic is sampled with RK4 and each
step is replaced by its chord, split where it crosses grid lines, so that
the bilinear interpolant is integrated exactly on every piece (two-point
Gauss-Legendre).  On straight lines the rows are therefore exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .geodesic import SMPoint, flow_steps, sample_sm
from .manifold import ManifoldModel
from .tensor import SymmetricTensorField

_GAUSS = np.array([-1.0, 1.0]) / math.sqrt(3.0)


class ReconError(RuntimeError):
    """Numerical failure of the reconstruction (e.g. residual increase)."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReconGrid:
    """Nodes x_j = -L + j h on [-L, L]^2 (inclusive); unknowns live on |x| <= support_radius."""

    half_width: float
    nx: int
    ny: int
    support_radius: float

    def __post_init__(self):
        if self.support_radius > self.half_width:
            raise ValueError("support disc must lie inside the box")
        if min(self.nx, self.ny) < 2:
            raise ValueError("need at least two nodes per axis")

    @classmethod
    def parse(cls, text: str, support_radius: float = 1.0, margin: float = 1.5) -> "ReconGrid":
        nx, ny = (int(t) for t in text.split(":"))
        return cls(margin * support_radius, nx, ny, support_radius)

    @property
    def hx(self) -> float:
        return 2.0 * self.half_width / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 2.0 * self.half_width / (self.ny - 1)

    @property
    def nodes(self) -> np.ndarray:
        xs = -self.half_width + self.hx * np.arange(self.nx)
        ys = -self.half_width + self.hy * np.arange(self.ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @property
    def active(self) -> np.ndarray:
        """Boolean (nx, ny) mask of nodes carrying unknowns."""
        return np.linalg.norm(self.nodes, axis=-1) <= self.support_radius * (1 + 1e-12)

    @property
    def active_index(self) -> np.ndarray:
        """(nx, ny) map to the unknown index of a node, -1 if inactive."""
        idx = -np.ones((self.nx, self.ny), dtype=np.int64)
        act = self.active
        idx[act] = np.arange(int(act.sum()))
        return idx

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def cell_area(self) -> float:
        return self.hx * self.hy


def n_components(m: int) -> int:
    """Independent components of a symmetric m-tensor in 2-D."""
    return m + 1


def _component_index(m: int, j: int) -> tuple:
    """Representative index of component j: (0,)*(m-j) + (1,)*j."""
    return (0,) * (m - j) + (1,) * j


def multiplicities(m: int) -> np.ndarray:
    return np.array([math.comb(m, j) for j in range(m + 1)], dtype=float)


def monomials(v: np.ndarray, m: int) -> np.ndarray:
    """binom(m, j) v1^(m-j) v2^j, shape (..., m+1)."""
    j = np.arange(m + 1)
    return multiplicities(m) * v[..., :1] ** (m - j) * v[..., 1:2] ** j


def discretize(grid: ReconGrid, f: SymmetricTensorField) -> np.ndarray:
    """Nodal component values on the active nodes, flattened (node-major)."""
    if f.dim != 2:
        raise ValueError("reconstruction grids are 2-D")
    X = grid.nodes[grid.active]
    C = f(X)
    cols = [C[(slice(None),) + _component_index(f.order, j)] if f.order else C for j in range(f.order + 1)]
    return np.stack(cols, axis=-1).reshape(-1)


def to_grid(grid: ReconGrid, vec: np.ndarray, m: int) -> np.ndarray:
    """Unknown vector -> (nx, ny, m+1) array, zero off the support."""
    out = np.zeros((grid.nx, grid.ny, m + 1))
    out[grid.active] = np.asarray(vec).reshape(-1, m + 1)
    return out


def support_norm(grid: ReconGrid, vec, m: int) -> float:
    """Discrete L^2 norm on the support (coefficient norm with multiplicities)."""
    w = np.tile(multiplicities(m), grid.n_active)
    return math.sqrt(float(np.sum(w * np.asarray(vec) ** 2)) * grid.cell_area())


# ---------------------------------------------------------------------------
# forward operator
# ---------------------------------------------------------------------------


@dataclass
class ForwardOperator:
    """Sparse matrix of the discretised I_m together with its provenance."""

    matrix: sparse.csr_matrix
    seeds: SMPoint
    grid: ReconGrid
    m: int
    step: float
    empty_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, vec):
        return self.matrix @ vec

    def apply(self, f: SymmetricTensorField) -> np.ndarray:
        return self.matrix @ discretize(self.grid, f)

    def stack(self, other: "ForwardOperator") -> "ForwardOperator":
        if other.grid != self.grid or other.m != self.m:
            raise ValueError("cannot stack operators on different grids or orders")
        seeds = SMPoint(np.concatenate([self.seeds.x, other.seeds.x]),
                        np.concatenate([self.seeds.v, other.seeds.v]))
        empty = np.concatenate([self.empty_rows, other.empty_rows + self.shape[0]])
        return ForwardOperator(sparse.vstack([self.matrix, other.matrix]).tocsr(), seeds, self.grid,
                               self.m, self.step, empty)


def _segment_entries(grid: ReconGrid, idx: np.ndarray, rows, sign, P0, P1, V0, V1, ds: float, m: int):
    """Matrix entries of the chord pieces between consecutive samples."""
    L = grid.half_width
    h = np.array([grid.hx, grid.hy])
    g0 = (P0 + L) / h
    g1 = (P1 + L) / h
    dg = g1 - g0
    # one possible grid-line crossing per axis since the chord is shorter than a cell
    brk = []
    for a in range(2):
        c0 = np.floor(g0[:, a])
        c1 = np.floor(g1[:, a])
        line = np.where(c1 > c0, c1, c0)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(c1 != c0, (line - g0[:, a]) / dg[:, a], 1.0)
        brk.append(np.clip(s, 0.0, 1.0))
    b = np.sort(np.stack([np.zeros(len(P0)), brk[0], brk[1], np.ones(len(P0))], axis=1), axis=1)
    R, C, Vals = [], [], []
    for j in range(3):
        lo, hi = b[:, j], b[:, j + 1]
        length = hi - lo
        keep = length > 0
        if not np.any(keep):
            continue
        lo, length = lo[keep], length[keep]
        mid = lo + 0.5 * length
        gm = g0[keep] + mid[:, None] * dg[keep]
        cell = np.floor(gm).astype(np.int64)
        for q in _GAUSS:
            s = mid + 0.5 * length * q
            gp = g0[keep] + s[:, None] * dg[keep]
            vp = V0[keep] + s[:, None] * (V1[keep] - V0[keep])
            frac = gp - cell
            w = 0.5 * length * ds * sign[keep]
            mono = monomials(vp, m) * w[:, None]
            for ox in (0, 1):
                for oy in (0, 1):
                    ix, iy = cell[:, 0] + ox, cell[:, 1] + oy
                    inside = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
                    node = np.full(len(ix), -1, dtype=np.int64)
                    node[inside] = idx[ix[inside], iy[inside]]
                    ok = node >= 0
                    if not np.any(ok):
                        continue
                    wx = frac[ok, 0] if ox else 1.0 - frac[ok, 0]
                    wy = frac[ok, 1] if oy else 1.0 - frac[ok, 1]
                    hat = wx * wy
                    for c in range(m + 1):
                        R.append(rows[keep][ok])
                        C.append(node[ok] * (m + 1) + c)
                        Vals.append(hat * mono[ok, c])
    return R, C, Vals


def assemble_forward(M: ManifoldModel, grid: ReconGrid, seeds: SMPoint, m: int,
                     step: float | None = None) -> ForwardOperator:
    """Rows: integrals of the bilinear basis along the full geodesics of the seeds."""
    if M.dim != 2:
        raise ValueError("reconstruction is 2-D")
    x = np.atleast_2d(seeds.x)
    v = np.atleast_2d(seeds.v)
    N = len(x)
    ds = 0.5 * min(grid.hx, grid.hy) if step is None else step
    if ds >= min(grid.hx, grid.hy):
        raise ValueError("step must be shorter than a grid cell")
    idx = grid.active_index
    Rs = grid.support_radius
    # past d(x, o) + Rs a unit-speed geodesic never returns to the support disc
    T = float(np.max(np.linalg.norm(x, axis=1))) + Rs + 2 * ds
    near = Rs + 2.0 * max(grid.hx, grid.hy)
    rows = np.concatenate([np.arange(N), np.arange(N)])
    # the backward half sees -gamma', so its monomials pick up (-1)^m
    sign = np.concatenate([np.ones(N), np.full(N, (-1.0) ** m)])
    x2 = np.concatenate([x, x])
    v2 = np.concatenate([v, -v])
    R, C, Vals = [], [], []
    prev = None
    for _, xt, vt, _ in flow_steps(M, x2, v2, T, ds):
        if prev is not None:
            P0, V0 = prev
            close = (np.linalg.norm(P0, axis=1) <= near) | (np.linalg.norm(xt, axis=1) <= near)
            if np.any(close):
                r, c, w = _segment_entries(grid, idx, rows[close], sign[close], P0[close], xt[close],
                                           V0[close], vt[close], ds, m)
                R += r
                C += c
                Vals += w
        prev = (xt, vt)
    ncol = grid.n_active * (m + 1)
    if R:
        A = sparse.coo_matrix((np.concatenate(Vals), (np.concatenate(R), np.concatenate(C))),
                              shape=(N, ncol)).tocsr()
    else:
        A = sparse.csr_matrix((N, ncol))
    A.sum_duplicates()
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    return ForwardOperator(A, SMPoint(x, v), grid, m, ds, empty)


def recon_seeds(M: ManifoldModel, grid: ReconGrid, n: int, rng: np.random.Generator,
                factor: float = 1.5) -> SMPoint:
    """Seeds with x uniform in the disc of radius factor * support radius."""
    return sample_sm(M, n, factor * grid.support_radius, rng)


def consistency_check(M: ManifoldModel, op: ForwardOperator, f: SymmetricTensorField,
                      rows: np.ndarray, tol=1e-10) -> np.ndarray:
    """|row . discretize(f) - I f| on selected rows, relative to max |I f|."""
    from .xray import xray_transform

    rows = np.asarray(rows)
    p = SMPoint(op.seeds.x[rows], op.seeds.v[rows])
    exact = xray_transform(M, f, p, tol).value
    approx = op.matrix[rows] @ discretize(op.grid, f)
    return np.abs(approx - exact) / max(float(np.max(np.abs(exact))), 1e-300)


# ---------------------------------------------------------------------------
# inversion
# ---------------------------------------------------------------------------


@dataclass
class ReconResult:
    estimate: np.ndarray
    residual: float
    iterations: int
    history: np.ndarray
    converged: bool
    error: float | None = None
    defect: float | None = None
    ridge: float = 0.0


def reconstruct(A, b, max_iter: int = 500, rtol: float = 1e-6, ridge: float = 0.0,
                ntol: float = 1e-14, slack: float = 1e-8) -> ReconResult:
    """CGLS on min ||A f - b||^2 + ridge ||f||^2 from the zero iterate.

    Stops when ||A f - b|| <= rtol ||b|| or when the normal-equation residual
    ||A^T r - ridge f|| falls below ntol ||A^T b||.  An increase of the data
    residual by more than ``slack`` (relative) aborts with a ReconError.
    """
    A = A.matrix if isinstance(A, ForwardOperator) else A
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    x = np.zeros(n)
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return ReconResult(x, 0.0, 0, np.zeros(1), True, ridge=ridge)
    r = b.copy()
    s = A.T @ r
    s0 = float(np.linalg.norm(s))
    p = s.copy()
    gamma = float(s @ s)
    hist = [1.0]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        q = A @ p
        denom = float(q @ q) + ridge * float(p @ p)
        if denom <= 0.0:
            break
        alpha = gamma / denom
        x += alpha * p
        r -= alpha * q
        res = float(np.linalg.norm(r)) / bn
        if ridge == 0.0 and res > hist[-1] * (1.0 + slack):
            raise ReconError("residual increased", {"iteration": it, "history": hist + [res]})
        hist.append(res)
        s = A.T @ r - ridge * x
        gnew = float(s @ s)
        if res <= rtol or math.sqrt(gnew) <= ntol * s0:
            converged = res <= rtol or ridge > 0 or math.sqrt(gnew) <= ntol * s0
            break
        p = s + (gnew / gamma) * p
        gamma = gnew
    return ReconResult(x, hist[-1], it, np.array(hist), converged, ridge=ridge)


def relative_error(grid: ReconGrid, est, truth, m: int) -> float:
    tn = support_norm(grid, truth, m)
    return support_norm(grid, np.asarray(est) - truth, m) / tn if tn > 0 else 0.0


# ---------------------------------------------------------------------------
# potentials on the grid
# ---------------------------------------------------------------------------


_CENTRAL = {
    2: (np.array([-1.0, 0.0, 1.0]) / 2.0, [-1, 0, 1]),
    4: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, [-2, -1, 0, 1, 2]),
}


def _diff_matrix(n: int, h: float, order: int = 2) -> sparse.csr_matrix:
    """Central difference of the given order with zero extension beyond the ends."""
    c, offs = _CENTRAL[order]
    return sparse.diags(c / h, offs, shape=(n, n), format="csr")


def potential_operator(M: ManifoldModel, grid: ReconGrid, m: int,
                       order: int = 2) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Sparse discrete sigma-nabla from (m-1)-tensors to the unknown space.

    Potentials live on nodes far enough inside the support disc that their
    central differences stay on active nodes.  Second-order differences are
    the default: they pair with bilinear interpolation, so these grid
    potentials are the near-kernel of the forward operator.  Returns the
    operator and the (nx, ny) mask of potential nodes.
    """
    if m not in (1, 2):
        raise NotImplementedError("discrete potentials are implemented for m = 1, 2")
    if order not in _CENTRAL:
        raise ValueError("difference order must be 2 or 4")
    nodes = grid.nodes
    reach = (order // 2) * max(grid.hx, grid.hy)
    inner = np.linalg.norm(nodes, axis=-1) <= grid.support_radius - reach * (1 + 1e-9)
    Dx = sparse.kron(_diff_matrix(grid.nx, grid.hx, order), sparse.identity(grid.ny), format="csr")
    Dy = sparse.kron(sparse.identity(grid.nx), _diff_matrix(grid.ny, grid.hy, order), format="csr")
    act = grid.active.reshape(-1)
    inn = inner.reshape(-1)
    Sel = sparse.identity(grid.nx * grid.ny, format="csr")
    Pin = Sel[:, inn]  # potential nodes -> all nodes
    Pout = Sel[act]  # all nodes -> active nodes
    Dx = Pout @ Dx @ Pin
    Dy = Pout @ Dy @ Pin
    na, ni = int(act.sum()), int(inn.sum())
    if m == 1:
        G = sparse.vstack([Dx, Dy]).tocsr()
        perm = np.arange(2 * na).reshape(2, na).T.reshape(-1)
        return G[perm], inner
    # m = 2: (sigma nabla h)_ij = (d_i h_j + d_j h_i)/2 - Gamma^k_ij h_k
    X = nodes.reshape(-1, 2)[act]
    Gam = M.christoffel(X)  # (na, k, i, j)
    Ein = Pout @ Pin
    blocks = [[None, None] for _ in range(3)]
    for j, (a, c) in enumerate([(0, 0), (0, 1), (1, 1)]):
        Da, Dc = (Dx, Dy)[a], (Dx, Dy)[c]
        for k in range(2):
            block = -(sparse.diags(Gam[:, k, a, c]) @ Ein)
            if k == c:
                block = block + 0.5 * Da
            if k == a:
                block = block + 0.5 * Dc
            blocks[j][k] = block
    G = sparse.bmat(blocks, format="csr")  # rows (component, node), cols (k, pnode)
    perm = np.arange(3 * na).reshape(3, na).T.reshape(-1)
    cperm = np.arange(2 * ni).reshape(2, ni).T.reshape(-1)
    return G[perm][:, cperm], inner


def solenoidal_defect(M: ManifoldModel, grid: ReconGrid, fhat, m: int, order: int = 2) -> float:
    """min_h ||fhat - sigma nabla h|| / ||fhat|| over grid potentials (0 for fhat = 0)."""
    if m < 1:
        raise ValueError("solenoidal defect needs m >= 1")
    fhat = np.asarray(fhat, dtype=float)
    w = np.sqrt(np.tile(multiplicities(m), grid.n_active))
    fn = float(np.linalg.norm(w * fhat))
    if fn == 0.0:
        return 0.0
    G, _ = potential_operator(M, grid, m, order)
    Gw = sparse.diags(w) @ G
    sol = splinalg.lsqr(Gw, w * fhat, atol=1e-14, btol=1e-14, iter_lim=20 * G.shape[1])[0]
    return float(np.linalg.norm(w * fhat - Gw @ sol) / fn)


@dataclass
class KernelReport:
    m: int
    singular_values: np.ndarray
    sigma_ratio: float  # sigma_min / sigma_max
    near_kernel_dim: int
    max_angle_deg: float | None  # near-kernel vs potential subspace (m >= 1)


def kernel_scan(M: ManifoldModel, op: ForwardOperator, fraction: float = 0.05,
                max_cols: int = 4000) -> KernelReport:
    """Smallest singular values of A and, for m >= 1, principal angles to the potentials."""
    A = op.matrix
    if A.shape[1] > max_cols:
        raise ValueError("kernel scan is meant for small grids (<= 32^2)")
    _, sv, Vt = np.linalg.svd(A.toarray(), full_matrices=False)
    k = max(1, int(round(fraction * len(sv))))
    ratio = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
    angle = None
    if op.m >= 1:
        G, _ = potential_operator(M, op.grid, op.m)
        near = Vt[-k:].T
        angle = float(np.degrees(np.max(scipy.linalg.subspace_angles(near, G.toarray()))))
    return KernelReport(op.m, sv, ratio, k, angle)
