"""P1 finite element assembly for the heterogeneous Helmholtz problem.

Assembles the stiffness matrix A (diffusion coefficient sampled per element
centroid), the consistent mass matrix S, and the combinations B = A - k^2 S
(the indefinite Helmholtz matrix) and Dk = A + k^2 S (the k-weighted H^1
Gram matrix).  Dirichlet boundary conditions are imposed by eliminating
boundary nodes, so all matrices live on interior dofs only.

A and S are built from the same coordinate arrays, hence share an identical
sparsity pattern; B and Dk are formed entrywise from the shared pattern so
that B_ij = A_ij - k^2 S_ij holds exactly in floating point.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh, interior_dof_maps

__all__ = [
    "CoefficientField",
    "FeSystem",
    "element_matrices",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_system",
    "assemble_gaussian_source",
    "manufactured_rhs",
    "dump_matrix",
]

# degree-2 Gauss rule on the reference triangle (3 interior points)
_QUAD_BARY = np.array([
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
])
_QUAD_W = np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])


@dataclass(frozen=True)
class CoefficientField:
    """Scalar diffusion coefficient a(x, y), evaluated per element centroid.

    ``homogeneous`` is a == 1 everywhere.  ``layered`` is a == a_max on the
    horizontal bands y in [0,0.1) u [0.2,0.3) u [0.4,0.5) u [0.6,0.7) u
    [0.8,0.9) and a == 1 elsewhere (a_min = 1 normalization).
    """

    kind: str = "homogeneous"
    a_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("homogeneous", "layered"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "layered" and self.a_max < 1.0:
            raise ValueError("layered coefficient requires a_max >= 1")

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "homogeneous":
            return np.ones_like(y)
        band = np.floor(y * 10.0).astype(np.int64)
        return np.where((band % 2 == 0) & (band < 10), self.a_max, 1.0)


@dataclass
class FeSystem:
    """Assembled matrices of one Helmholtz instance, on interior dofs.

    ``element_k`` and ``element_m`` hold the per-triangle 3x3 stiffness and
    mass blocks; subdomain-local (Neumann) matrices are re-assembled from
    them, so they use exactly the same floating-point contributions as the
    global matrices.
    """

    k: float
    A: sp.csr_matrix
    S: sp.csr_matrix
    B: sp.csr_matrix
    Dk: sp.csr_matrix
    interior_dofs: np.ndarray
    node_to_dof: np.ndarray
    mesh: TriMesh
    coeff: CoefficientField
    element_k: np.ndarray
    element_m: np.ndarray
    rhs: Optional[np.ndarray] = field(default=None)

    @property
    def n_dof(self) -> int:
        return self.A.shape[0]


def element_matrices(mesh: TriMesh, coeff: CoefficientField):
    """Per-triangle 3x3 stiffness and mass blocks.

    Stiffness uses the exact P1 gradient formula with the coefficient frozen
    at the element centroid; mass is the exact consistent P1 element matrix
    (area/12) * [[2,1,1],[1,2,1],[1,1,2]].
    """
    pts = mesh.nodes[mesh.triangles]            # (nt, 3, 2)
    p0, p1, p2 = pts[:, 0], pts[:, 1], pts[:, 2]
    # b_i = y_j - y_k, c_i = x_k - x_j (cyclic), 2*area = cross(p1-p0, p2-p0)
    b = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
    c = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
    area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) \
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    area = 0.5 * area2

    centroid = pts.mean(axis=1)
    a_elem = coeff.evaluate(centroid[:, 0], centroid[:, 1])

    scale = a_elem / (4.0 * area)
    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) \
        * scale[:, None, None]

    m_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = area[:, None, None] * m_ref[None, :, :]
    return ke, me


def _scatter(mesh: TriMesh, blocks: np.ndarray, keep_boundary: bool) -> sp.csr_matrix:
    """Sum element blocks into a global CSR matrix (canonical, sorted)."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    vals = blocks.ravel()
    if keep_boundary:
        nn = mesh.n_nodes
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(nn, nn)).tocsr()
    else:
        _, node_to_dof = interior_dof_maps(mesh)
        r = node_to_dof[rows]
        cc = node_to_dof[cols]
        keep = (r >= 0) & (cc >= 0)
        nd = int((node_to_dof >= 0).sum())
        mat = sp.coo_matrix((vals[keep], (r[keep], cc[keep])), shape=(nd, nd)).tocsr()
    mat.sort_indices()
    return mat


def assemble_stiffness(mesh: TriMesh, coeff: CoefficientField,
                       keep_boundary: bool = False) -> sp.csr_matrix:
    """Stiffness matrix A_ij = sum_T a(centroid_T) int_T grad(phi_j).grad(phi_i)."""
    ke, _ = element_matrices(mesh, coeff)
    return _scatter(mesh, ke, keep_boundary)


def assemble_mass(mesh: TriMesh, keep_boundary: bool = False) -> sp.csr_matrix:
    """Consistent (non-lumped) P1 mass matrix."""
    _, me = element_matrices(mesh, CoefficientField())
    return _scatter(mesh, me, keep_boundary)


def assemble_system(mesh: TriMesh, coeff: CoefficientField, k: float) -> FeSystem:
    """Assemble A, S, B = A - k^2 S and Dk = A + k^2 S on interior dofs."""
    if k < 0:
        raise ValueError(f"wavenumber k must be nonnegative, got {k}")
    ke, me = element_matrices(mesh, coeff)
    interior, node_to_dof = interior_dof_maps(mesh)

    tri = mesh.triangles
    rows = node_to_dof[np.repeat(tri, 3, axis=1).ravel()]
    cols = node_to_dof[np.tile(tri, (1, 3)).ravel()]
    keep = (rows >= 0) & (cols >= 0)
    rows, cols = rows[keep], cols[keep]
    nd = interior.size

    def csr_of(blocks):
        m = sp.coo_matrix((blocks.ravel()[keep], (rows, cols)), shape=(nd, nd)).tocsr()
        m.sort_indices()
        return m

    A = csr_of(ke)
    S = csr_of(me)
    # A and S come from identical (row, col) arrays -> identical patterns,
    # so B and Dk are exact entrywise combinations of the stored values.
    k2 = k * k
    B = A.copy()
    B.data = A.data - k2 * S.data
    Dk = A.copy()
    Dk.data = A.data + k2 * S.data
    return FeSystem(k=k, A=A, S=S, B=B, Dk=Dk, interior_dofs=interior,
                    node_to_dof=node_to_dof, mesh=mesh, coeff=coeff,
                    element_k=ke, element_m=me)


def _quadrature_load(mesh: TriMesh, f, keep_boundary: bool) -> np.ndarray:
    """Load vector rhs_i = int f phi_i by the 3-point degree-2 Gauss rule."""
    pts = mesh.nodes[mesh.triangles]
    p0, p1, p2 = pts[:, 0], pts[:, 1], pts[:, 2]
    area = 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
    load = np.zeros((mesh.n_triangles, 3))
    for bary, w in zip(_QUAD_BARY, _QUAD_W):
        qp = bary[0] * p0 + bary[1] * p1 + bary[2] * p2
        fv = f(qp[:, 0], qp[:, 1])
        # P1 basis values at the quadrature point are its barycentric coords
        load += (w * area * fv)[:, None] * bary[None, :]
    full = np.zeros(mesh.n_nodes)
    np.add.at(full, mesh.triangles.ravel(), load.ravel())
    if keep_boundary:
        return full
    interior, _ = interior_dof_maps(mesh)
    return full[interior]


def assemble_gaussian_source(mesh: TriMesh, keep_boundary: bool = False) -> np.ndarray:
    """Load vector of the Gaussian point-source model centered at (1/2, 1/2).

    f(x, y) = 1e4 * exp(-1e3 * ((x - 1/2)^2 + (y - 1/2)^2)).
    """
    def f(x, y):
        return 1.0e4 * np.exp(-1.0e3 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))

    return _quadrature_load(mesh, f, keep_boundary)


def manufactured_rhs(mesh: TriMesh, k: float, m: int, n: int,
                     keep_boundary: bool = False) -> np.ndarray:
    """Load vector whose exact solution (with a == 1) is sin(m pi x) sin(n pi y).

    The forcing is f = ((m^2 + n^2) pi^2 - k^2) sin(m pi x) sin(n pi y);
    wavenumbers at the discrete resonance k^2 = (m^2 + n^2) pi^2 are
    rejected because the solution degenerates there.
    """
    if m < 1 or n < 1:
        raise ValueError("mode numbers m, n must be >= 1")
    lam = (m * m + n * n) * np.pi ** 2
    if abs(k * k - lam) < 1e-8:
        raise ValueError(
            f"k^2 = {k*k:.12g} matches the eigenvalue {lam:.12g} of modes "
            f"(m={m}, n={n}); the manufactured solution degenerates"
        )
    coef = lam - k * k

    def f(x, y):
        return coef * np.sin(m * np.pi * x) * np.sin(n * np.pi * y)

    return _quadrature_load(mesh, f, keep_boundary)


def dump_matrix(mat) -> str:
    """Coordinate text dump, one ``row col value`` triple per line."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}" for i in order]
    return "\n".join(lines) + "\n"
