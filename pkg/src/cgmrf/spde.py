"""GMRF approximation of Gaussian Matern fields on a triangulated rectangle.

Piecewise-linear finite elements on a regular grid (each cell split along a
fixed diagonal), lumped mass matrix C, stiffness matrix G, and the precision
Q = phi^-2 (kappa2 C + G) C^-1 (kappa2 C + G) for alpha = 2 (iterated once
more for alpha = 4).  Also provides point-observation matrices, directional
derivative matrices from the nested construction, divergence constraint
rows for stacked bivariate fields, the closed-form Matern covariance, and
the dense divergence-free kernel used as a covariance-based baseline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import ConstraintSet, find_blocks
from .bessel import kv_chain, kv_int
from .errors import (DegenerateTriangle, IllConditioned, InvalidDomain,
                     OverlappingConstraintRows, PointOutsideDomain,
                     UnsupportedAlpha, UnsupportedNu)
from .sparse_linalg import symmetrize

__all__ = [
    "Mesh",
    "SpdeModel",
    "build_mesh",
    "assemble",
    "precision_components",
    "combine_components",
    "build_precision",
    "obs_matrix",
    "derivative_matrix",
    "divergence_constraints",
    "matern_cov",
    "matern_variance",
    "divfree_kernel",
    "divfree_kernel_baseline",
]


@dataclass
class Mesh:
    """Regular triangulated grid over [x0, x1] x [y0, y1].

    Nodes are numbered row-major (index = iy * nx + ix); every grid square is
    split along the (ix, iy) -> (ix+1, iy+1) diagonal, so all triangles are
    positively oriented and every interior node belongs to six of them.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    nx: int
    ny: int
    bounds: tuple[float, float, float, float]

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def hx(self) -> float:
        x0, x1, _, _ = self.bounds
        return (x1 - x0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        _, _, y0, y1 = self.bounds
        return (y1 - y0) / (self.ny - 1)

    @property
    def h(self) -> float:
        return self.hx

    def interior_nodes(self) -> np.ndarray:
        ix = np.arange(1, self.nx - 1)
        iy = np.arange(1, self.ny - 1)
        return (iy[:, None] * self.nx + ix[None, :]).ravel()


def build_mesh(bounds, nx: int, ny: int) -> Mesh:
    """Mesh with nx * ny nodes and 2 (nx-1)(ny-1) triangles.

    bounds = (x0, x1, y0, y1).
    """
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise InvalidDomain(f"empty rectangle {bounds}")
    if nx < 2 or ny < 2:
        raise InvalidDomain("need at least 2 nodes per direction")
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    ix, iy = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
    v00 = (iy * nx + ix).ravel()
    v10 = v00 + 1
    v01 = v00 + nx
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.vstack([lower, upper])
    return Mesh(nodes=nodes, triangles=triangles, nx=nx, ny=ny,
                bounds=(x0, x1, y0, y1))


def _triangle_geometry(mesh: Mesh):
    """Areas and P1 basis gradients, vectorized over all triangles."""
    p = mesh.nodes[mesh.triangles]          # (nt, 3, 2)
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
           - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    if np.any(det <= 0):
        raise DegenerateTriangle("triangle with non-positive signed area")
    area = 0.5 * det
    grads = np.empty((p.shape[0], 3, 2))
    # grad lambda_a = ((b - c).y, (c - b).x) / (2 area), cyclically
    grads[:, 0, 0] = b[:, 1] - c[:, 1]
    grads[:, 0, 1] = c[:, 0] - b[:, 0]
    grads[:, 1, 0] = c[:, 1] - a[:, 1]
    grads[:, 1, 1] = a[:, 0] - c[:, 0]
    grads[:, 2, 0] = a[:, 1] - b[:, 1]
    grads[:, 2, 1] = b[:, 0] - a[:, 0]
    grads /= det[:, None, None]
    return area, grads


def assemble(mesh: Mesh):
    """Lumped mass C (diagonal, C_ii = integral of basis i) and stiffness G.

    G has zero row sums (gradients annihilate constants); on the square grid
    the interior stencil is the classic 4 / -1 five-point pattern.
    """
    area, grads = _triangle_geometry(mesh)
    tri = mesh.triangles
    n = mesh.n
    cdiag = np.zeros(n)
    np.add.at(cdiag, tri.ravel(), np.repeat(area / 3.0, 3))
    Ge = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    G = sp.coo_matrix((Ge.ravel(), (rows, cols)), shape=(n, n)).tocsc()
    G = symmetrize(G)
    C = sp.diags(cdiag, format="csc")
    return C, G


def precision_components(mesh_or_CG, alpha: int):
    """Matrices [C, G, G C^-1 G, ...] entering the precision.

    Q(kappa2, phi) = phi^-2 * sum_j binom(alpha, j) kappa2^(alpha-j) * S_j,
    so parameter sweeps reuse these and rebuild Q as a linear combination.
    """
    if alpha not in (2, 4):
        raise UnsupportedAlpha(f"alpha must be 2 or 4, got {alpha}")
    if isinstance(mesh_or_CG, Mesh):
        C, G = assemble(mesh_or_CG)
    else:
        C, G = mesh_or_CG
    cinv = sp.diags(1.0 / C.diagonal(), format="csc")
    comps = [C.tocsc(), G.tocsc()]
    for _ in range(alpha - 1):
        comps.append(symmetrize(comps[-1] @ cinv @ G))
    return comps


def combine_components(comps, kappa2: float, phi: float) -> sp.csc_matrix:
    alpha = len(comps) - 1
    Q = comps[0] * (kappa2 ** alpha)
    for j in range(1, alpha + 1):
        Q = Q + comps[j] * (math.comb(alpha, j) * kappa2 ** (alpha - j))
    return (Q * (1.0 / phi**2)).tocsc()


@dataclass
class SpdeModel:
    """Assembled FEM Matern model: mesh, parameters, and C, G, Q."""

    mesh: Mesh
    kappa2: float
    phi: float
    alpha: int
    C: sp.csc_matrix
    G: sp.csc_matrix
    Q: sp.csc_matrix

    @property
    def nu(self) -> float:
        return self.alpha - 1.0  # alpha - d/2 at d = 2


def build_precision(mesh: Mesh, kappa2: float, phi: float = 1.0,
                    alpha: int = 2) -> SpdeModel:
    """Q = phi^-2 K C^-1 K (alpha 2) or phi^-2 K (C^-1 K)^3 (alpha 4),
    K = kappa2 C + G."""
    if alpha not in (2, 4):
        raise UnsupportedAlpha(f"alpha must be 2 or 4, got {alpha}")
    if not kappa2 > 0:
        raise InvalidDomain("kappa2 must be positive")
    C, G = assemble(mesh)
    comps = precision_components((C, G), alpha)
    Q = combine_components(comps, kappa2, phi)
    return SpdeModel(mesh=mesh, kappa2=kappa2, phi=phi, alpha=alpha,
                     C=C, G=G, Q=Q)


def _locate(mesh: Mesh, locations) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    x0, x1, y0, y1 = mesh.bounds
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    if np.any(pts[:, 0] < x0 - tol) or np.any(pts[:, 0] > x1 + tol) \
            or np.any(pts[:, 1] < y0 - tol) or np.any(pts[:, 1] > y1 + tol):
        bad = pts[(pts[:, 0] < x0 - tol) | (pts[:, 0] > x1 + tol)
                  | (pts[:, 1] < y0 - tol) | (pts[:, 1] > y1 + tol)][0]
        raise PointOutsideDomain(f"location {tuple(bad)} outside {mesh.bounds}")
    fx = np.clip((pts[:, 0] - x0) / mesh.hx, 0.0, mesh.nx - 1 - 1e-12)
    fy = np.clip((pts[:, 1] - y0) / mesh.hy, 0.0, mesh.ny - 1 - 1e-12)
    ix = fx.astype(np.int64)
    iy = fy.astype(np.int64)
    return ix, iy, np.column_stack([fx - ix, fy - iy])


def obs_matrix(mesh: Mesh, locations) -> sp.csr_matrix:
    """Point-evaluation matrix: row i holds the barycentric weights of
    location i within its containing triangle (rows sum to one; exact on
    nodal interpolants of linear functions)."""
    ix, iy, loc = _locate(mesh, locations)
    xi, eta = loc[:, 0], loc[:, 1]
    npts = xi.shape[0]
    v00 = iy * mesh.nx + ix
    rows = np.repeat(np.arange(npts), 3)
    cols = np.empty((npts, 3), dtype=np.int64)
    wts = np.empty((npts, 3))
    lower = xi >= eta
    cols[lower] = np.column_stack([v00, v00 + 1, v00 + mesh.nx + 1])[lower]
    wts[lower] = np.column_stack([1.0 - xi, xi - eta, eta])[lower]
    up = ~lower
    cols[up] = np.column_stack([v00, v00 + mesh.nx + 1, v00 + mesh.nx])[up]
    wts[up] = np.column_stack([1.0 - eta, xi, eta - xi])[up]
    A = sp.coo_matrix((wts.ravel(), (rows, cols.ravel())),
                      shape=(npts, mesh.n)).tocsr()
    A.sum_duplicates()
    return A


def derivative_matrix(mesh: Mesh, v) -> sp.csr_matrix:
    """Mass-lumped projection of the directional derivative v . grad.

    A_U = C^-1 B_v with (B_v)_ij = integral of basis_i * (v . grad basis_j);
    exact on nodal interpolants of globally linear fields.
    """
    v = np.asarray(v, dtype=np.float64).reshape(2)
    if not np.linalg.norm(v) > 0:
        raise InvalidDomain("direction vector must be nonzero")
    area, grads = _triangle_geometry(mesh)
    tri = mesh.triangles
    vdotg = grads @ v                       # (nt, 3)
    contrib = (area / 3.0)[:, None, None] * vdotg[:, None, :] * np.ones((1, 3, 1))
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    B = sp.coo_matrix((contrib.ravel(), (rows, cols)), shape=(mesh.n, mesh.n)).tocsc()
    C, _ = assemble(mesh)
    return (sp.diags(1.0 / C.diagonal()) @ B).tocsr()


def divergence_constraints(mesh: Mesh, stride: int = 3) -> ConstraintSet:
    """Zero-divergence rows for a stacked bivariate field [X1; X2].

    One row per selected interior node (every `stride`-th in both grid
    directions): the x-derivative row acting on block 1 concatenated with
    the y-derivative row acting on block 2, right-hand side zero.  A stride
    of 3 keeps the row supports disjoint so the blocked basis applies; if
    supports overlap an OverlappingConstraintRows warning is emitted (the
    single-SVD basis construction still handles the result).
    """
    if stride < 1:
        raise InvalidDomain("stride must be >= 1")
    D1 = derivative_matrix(mesh, (1.0, 0.0))
    D2 = derivative_matrix(mesh, (0.0, 1.0))
    ix = np.arange(1, mesh.nx - 1, stride)
    iy = np.arange(1, mesh.ny - 1, stride)
    sel = (iy[:, None] * mesh.nx + ix[None, :]).ravel()
    A = sp.hstack([D1[sel], D2[sel]], format="csc")
    cs = ConstraintSet(A, np.zeros(sel.size))
    if sel.size:
        blocks = find_blocks(A)
        if len(blocks) < sel.size:
            warnings.warn(
                f"divergence rows overlap ({len(blocks)} blocks for "
                f"{sel.size} rows); the blocked basis degrades to one SVD",
                OverlappingConstraintRows)
    return cs


# --------------------------------------------------------------- covariances

def matern_cov(h, nu: int, kappa: float, sigma2: float = 1.0):
    """Matern covariance sigma2 / (Gamma(nu) 2^(nu-1)) (kappa h)^nu K_nu(kappa h)."""
    if nu not in (1, 2, 3):
        raise UnsupportedNu(f"nu must be in {{1, 2, 3}}, got {nu}")
    h = np.asarray(h, dtype=np.float64)
    scalar = h.ndim == 0
    h = np.atleast_1d(h)
    out = np.full(h.shape, float(sigma2))
    pos = h > 0
    x = kappa * h[pos]
    c = sigma2 / (math.gamma(nu) * 2.0 ** (nu - 1))
    out[pos] = c * x**nu * kv_int(nu, x)
    return float(out[0]) if scalar else out


def matern_variance(nu: float, kappa: float, phi: float = 1.0, d: int = 2) -> float:
    """Stationary marginal variance of the SPDE solution on R^d."""
    return (math.gamma(nu) / (math.gamma(nu + d / 2.0)
            * (4.0 * math.pi) ** (d / 2.0) * kappa ** (2.0 * nu))) * phi**2


def _hessian_parts(t: np.ndarray, nu: int, kappa: float, sigma2: float):
    """g1(t) = c k^2 (kt)^(nu-1) K_(nu-1)(kt) and g2(t) = c k^4 (kt)^(nu-2) K_(nu-2)(kt).

    The isotropic Matern Hessian is r_ij(h) = -delta_ij g1(t) + h_i h_j g2(t);
    at t = 0, g1 -> c k^2 2^(nu-2) Gamma(nu-1) and the h h^T term vanishes.
    """
    c = sigma2 / (math.gamma(nu) * 2.0 ** (nu - 1))
    g1 = np.empty_like(t)
    g2 = np.zeros_like(t)
    tiny = t <= 1e-300
    g1[tiny] = c * kappa**2 * 2.0 ** (nu - 2) * math.gamma(nu - 1)
    x = kappa * t[~tiny]
    chain = kv_chain(nu - 1, x)
    g1[~tiny] = c * kappa**2 * x ** (nu - 1) * chain[nu - 1]
    g2[~tiny] = c * kappa**4 * x ** (nu - 2) * chain[nu - 2]
    return g1, g2


def divfree_kernel(locs_a, locs_b=None, nu: int = 3, kappa: float = 1.0,
                   sigma2: float = 1.0) -> np.ndarray:
    """Cross-covariance of the divergence-free field f = (d g/ds2, -d g/ds1)
    for a scalar Matern potential g.

    Returns the 2p x 2q matrix over stacked values [f1(all); f2(all)].
    Requires nu >= 2 (two derivatives of the potential must exist).
    """
    if nu not in (2, 3):
        raise UnsupportedNu(f"divergence-free kernel needs nu in {{2, 3}}, got {nu}")
    P = np.atleast_2d(np.asarray(locs_a, dtype=np.float64))
    Qp = P if locs_b is None else np.atleast_2d(np.asarray(locs_b, dtype=np.float64))
    h1 = P[:, 0][:, None] - Qp[:, 0][None, :]
    h2 = P[:, 1][:, None] - Qp[:, 1][None, :]
    t = np.hypot(h1, h2)
    g1, g2 = _hessian_parts(t, nu, kappa, sigma2)
    K11 = g1 - h2 * h2 * g2          # cov(f1, f1) = -r_22
    K22 = g1 - h1 * h1 * g2          # cov(f2, f2) = -r_11
    K12 = h1 * h2 * g2               # cov(f1, f2) = +r_12
    return np.block([[K11, K12], [K12, K22]])


def divfree_kernel_baseline(locations, nu: int = 3, kappa: float = 1.0,
                            sigma2: float = 1.0) -> np.ndarray:
    """Dense prior covariance over stacked bivariate observations.

    Symmetric positive semi-definite by construction; a significantly
    negative eigenvalue (below -1e-8 times the largest) raises
    IllConditioned.
    """
    K = divfree_kernel(locations, None, nu=nu, kappa=kappa, sigma2=sigma2)
    K = 0.5 * (K + K.T)
    w = np.linalg.eigvalsh(K)
    if w[0] < -1e-8 * max(w[-1], 0.0):
        raise IllConditioned(f"min eigenvalue {w[0]:.3e} vs max {w[-1]:.3e}")
    return K
