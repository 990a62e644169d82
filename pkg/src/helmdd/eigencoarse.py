"""Spectral coarse spaces from local generalized eigenproblems.

Three variants of the local pencil on the closed subdomain space are
supported; all use Neumann-style local matrices assembled from the same
element contributions as the global system:

* ``delta``    : A_i p = lambda * Xi^T A_i Xi p        (k-independent rhs)
* ``delta_k``  : A_i p = lambda * Xi^T (A_i + k^2 S_i) Xi p
* ``hk``       : (A_i - k^2 S_i) p = lambda * Xi^T (A_i + k^2 S_i) Xi p

where Xi is the diagonal partition-of-unity weighting (1/mu on inner dofs,
zero elsewhere).  Eigenvectors are normalized so that the weighted vectors
Xi p are orthonormal in the right-hand-side inner product.  Modes in the
kernel of the weighting (the formally infinite eigenvalues) never enter the
returned finite list.

Eigenvalues at most the threshold ``tau`` are kept; the weighted kept modes,
extended by zero, form the columns of the coarse basis Z, and the coarse
operator is B0 = Z^T B Z.

The SPD pairs (delta, delta_k) are solved either densely through the
auxiliary definite problem  Lhs x = nu (Lhs + Rhs) x  (Cholesky congruence
inside LAPACK, eigenvalue map lambda = nu / (1 - nu), modes with nu ~ 1
dropped as infinite), or - above a size cutoff - by shift-invert Lanczos on
the exact reduction to the inner-dof block, which eliminates the infinite
modes up front.  The indefinite ``hk`` pair is solved densely on the
complement of the weighting kernel.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FeSystem
from .decomp import DecompLayout
from .errors import CoarseSingularError, EigenBreakdownError

__all__ = [
    "VARIANTS",
    "LocalPencil",
    "LocalModes",
    "CoarseSpace",
    "local_neumann_matrices",
    "build_local_pencil",
    "solve_local_eigenproblem",
    "build_coarse_space",
    "theta_of",
    "eig_report_csv",
]

VARIANTS = ("delta", "delta_k", "hk")

EPS_DROP = 1e-10          # nu > 1 - EPS_DROP counts as an infinite eigenvalue
DENSE_CUTOFF = 1200       # local spaces up to this size are solved densely
HK_DENSE_CAP = 3200       # the indefinite pair has no partial path


def local_neumann_matrices(fesys: FeSystem, layout: DecompLayout, i: int,
                           cache: Optional[dict] = None):
    """Neumann-style local stiffness and mass on the overl dofs of subdomain i.

    Entries are sums of element integrals over elements inside the subdomain
    only, so these differ from principal submatrices of the global matrices
    on dofs near the subdomain boundary.  Both matrices share one sparsity
    pattern, which keeps entrywise combinations exact.
    """
    key = ("mats", i)
    if cache is not None and key in cache:
        return cache[key]
    ov = layout.overl_dofs[i]
    g2l = np.full(layout.n_dof, -1, dtype=np.int64)
    g2l[ov] = np.arange(ov.size)

    tri = fesys.mesh.triangles[layout.elements[i]]
    dofs = fesys.node_to_dof[tri]                  # -1 on boundary nodes
    loc = np.where(dofs >= 0, g2l[np.maximum(dofs, 0)], -1)

    rows = np.repeat(loc, 3, axis=1).ravel()
    cols = np.tile(loc, (1, 3)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    rows, cols = rows[keep], cols[keep]
    nloc = ov.size

    ke = fesys.element_k[layout.elements[i]].ravel()[keep]
    me = fesys.element_m[layout.elements[i]].ravel()[keep]
    A_i = sp.coo_matrix((ke, (rows, cols)), shape=(nloc, nloc)).tocsr()
    S_i = sp.coo_matrix((me, (rows, cols)), shape=(nloc, nloc)).tocsr()
    A_i.sort_indices()
    S_i.sort_indices()
    out = (A_i, S_i)
    if cache is not None:
        cache[key] = out
    return out


@dataclass
class LocalPencil:
    """One subdomain's generalized eigenproblem, on the overl dofs."""

    variant: str
    i: int
    lhs: sp.csr_matrix
    rhs: sp.csr_matrix
    weights: np.ndarray            # pou weights over overl dofs (0 off inner)
    inner_pos: np.ndarray          # positions of inner dofs inside overl


def build_local_pencil(fesys: FeSystem, layout: DecompLayout, i: int,
                       variant: str, cache: Optional[dict] = None) -> LocalPencil:
    """Assemble the local pencil (Lhs, Rhs) of the chosen variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    A_i, S_i = local_neumann_matrices(fesys, layout, i, cache)
    k2 = fesys.k ** 2

    w = np.zeros(layout.overl_dofs[i].size)
    w[layout.inner_pos[i]] = layout.pou[i]
    D = sp.diags(w)

    if variant == "delta":
        lhs = A_i
        core = A_i
    elif variant == "delta_k":
        lhs = A_i
        core = A_i.copy()
        core.data = A_i.data + k2 * S_i.data
    else:  # hk
        lhs = A_i.copy()
        lhs.data = A_i.data - k2 * S_i.data
        core = A_i.copy()
        core.data = A_i.data + k2 * S_i.data
    rhs = (D @ core @ D).tocsr()
    return LocalPencil(variant=variant, i=i, lhs=lhs, rhs=rhs, weights=w,
                       inner_pos=layout.inner_pos[i])


@dataclass
class LocalModes:
    """Ascending finite eigenpairs of one local pencil.

    ``vecs`` columns are normalized so their weighted images are orthonormal
    in the pencil's right-hand-side inner product.  ``complete`` marks that
    the whole finite spectrum was computed (dense path); otherwise the list
    is a verified prefix: every finite eigenvalue up to ``eigvals[-1]`` is
    present.
    """

    eigvals: np.ndarray
    vecs: np.ndarray
    kept: int
    complete: bool

    def first_unused(self) -> float:
        if self.kept < self.eigvals.size:
            return float(self.eigvals[self.kept])
        if self.complete:
            return np.inf
        raise RuntimeError("spectrum prefix exhausted without covering tau")

    def rethreshold(self, tau: float, max_modes: Optional[int] = None):
        """Re-cut the kept prefix for a new threshold, if covered."""
        kept = int(np.searchsorted(self.eigvals, tau, side="right"))
        if kept == self.eigvals.size and not self.complete:
            return None
        if max_modes is not None:
            kept = min(kept, max_modes)
        return LocalModes(self.eigvals, self.vecs, kept, self.complete)


def _orthonormalize(vecs: np.ndarray, rhs) -> np.ndarray:
    """Enforce exact orthonormality in the rhs inner product (Cholesky correction)."""
    if vecs.shape[1] == 0:
        return vecs
    G = vecs.T @ (rhs @ vecs)
    dev = np.abs(G - np.eye(G.shape[0])).max()
    if dev > 1e-13:
        R = la.cholesky(G, lower=False)
        vecs = la.solve_triangular(R, vecs.T, trans="T", lower=False).T
    return vecs


def _solve_dense_spd(pencil: LocalPencil) -> LocalModes:
    """Definite-pair path: Lhs x = nu (Lhs + Rhs) x, lambda = nu / (1 - nu)."""
    L = pencil.lhs.toarray()
    C = pencil.rhs.toarray()
    try:
        nu, X = la.eigh(L, L + C)
    except la.LinAlgError as exc:
        raise EigenBreakdownError(pencil.i, str(exc)) from exc
    finite = nu <= 1.0 - EPS_DROP
    nu = nu[finite]
    X = X[:, finite]
    lam = nu / (1.0 - nu)
    vecs = X / np.sqrt(1.0 - nu)[None, :]
    vecs = _orthonormalize(vecs, C)
    return LocalModes(eigvals=lam, vecs=vecs, kept=0, complete=True)


def _solve_dense_hk(pencil: LocalPencil) -> LocalModes:
    """Indefinite pair, reduced to the complement of the weighting kernel.

    The rhs vanishes identically outside the inner dofs, so discarding its
    null eigendirections is exactly the restriction to the inner block,
    where the rhs is positive definite.
    """
    inner = pencil.inner_pos
    L11 = pencil.lhs[inner][:, inner].toarray()
    C11 = pencil.rhs[inner][:, inner].toarray()
    try:
        lam, Y = la.eigh(L11, C11)
    except la.LinAlgError as exc:
        raise EigenBreakdownError(pencil.i, str(exc)) from exc
    vecs = np.zeros((pencil.lhs.shape[0], lam.size))
    vecs[inner] = Y
    vecs = _orthonormalize(vecs, pencil.rhs)
    return LocalModes(eigvals=lam, vecs=vecs, kept=0, complete=True)


def _solve_arpack_spd(pencil: LocalPencil, tau: float) -> Optional[LocalModes]:
    """Shift-invert Lanczos on the inner-block reduction of an SPD pair.

    Writing dofs as [inner, rest], the rhs is [[C11, 0], [0, 0]] with C11
    SPD, so every finite eigenpair satisfies  x2 = -A22^{-1} A21 x1  and
    (A11 - A12 A22^{-1} A21) x1 = lambda C11 x1.  Solves with the reduced
    operator are block eliminations of the shifted full matrix, which is
    what the factorization below provides.  Returns None when the requested
    mode count would exhaust the subspace (caller falls back to dense).
    """
    n = pencil.lhs.shape[0]
    inner = pencil.inner_pos
    mask = np.zeros(n, dtype=bool)
    mask[inner] = True
    rest = np.flatnonzero(~mask)
    n1 = inner.size
    if n1 < 3 or rest.size == 0:
        return None

    sigma = -0.5 * max(1.0, min(tau, 1e6) if np.isfinite(tau) else 1.0)
    shifted = (pencil.lhs - sigma * pencil.rhs).tocsc()
    try:
        full_lu = spla.splu(shifted)
    except RuntimeError as exc:
        raise EigenBreakdownError(pencil.i, f"shifted factorization: {exc}") from exc

    C11 = pencil.rhs[inner][:, inner].tocsr()
    A12 = pencil.lhs[inner][:, rest].tocsr()
    A21 = pencil.lhs[rest][:, inner].tocsr()
    A11 = pencil.lhs[inner][:, inner].tocsr()
    A22_lu = spla.splu(pencil.lhs[rest][:, rest].tocsc())

    def op_matvec(x1):
        x2 = -A22_lu.solve(A21 @ x1)
        return A11 @ x1 + A12 @ x2

    def opinv_matvec(b1):
        full = np.zeros(n)
        full[inner] = b1
        return full_lu.solve(full)[inner]

    A_op = spla.LinearOperator((n1, n1), matvec=op_matvec, dtype=float)
    OPinv = spla.LinearOperator((n1, n1), matvec=opinv_matvec, dtype=float)
    v0 = np.full(n1, 1.0 / np.sqrt(n1))

    nev = min(n1 - 1, max(12, 8 + n1 // 150))
    while True:
        try:
            lam, Y = spla.eigsh(A_op, k=nev, M=C11, sigma=sigma, which="LM",
                                OPinv=OPinv, v0=v0)
        except spla.ArpackError as exc:
            raise EigenBreakdownError(pencil.i, f"ARPACK: {exc}") from exc
        order = np.argsort(lam)
        lam = lam[order]
        Y = Y[:, order]
        if lam[-1] > tau:
            break
        if nev >= n1 - 1:
            return None
        nev = min(n1 - 1, 2 * nev)

    vecs = np.zeros((n, lam.size))
    vecs[inner] = Y
    vecs[rest] = -A22_lu.solve(A21 @ Y)
    vecs = _orthonormalize(vecs, pencil.rhs)
    return LocalModes(eigvals=lam, vecs=vecs, kept=0, complete=False)


def solve_local_eigenproblem(pencil: LocalPencil, tau: float,
                             dense_cutoff: int = DENSE_CUTOFF,
                             max_modes: Optional[int] = None) -> LocalModes:
    """Solve one local pencil and mark the kept prefix (lambda <= tau).

    The indefinite ``hk`` variant keeps every eigenvalue at most tau,
    including negative ones.
    """
    n = pencil.lhs.shape[0]
    modes = None
    if pencil.variant != "hk" and n > dense_cutoff:
        modes = _solve_arpack_spd(pencil, tau)
    if modes is None:
        if pencil.variant == "hk":
            if pencil.inner_pos.size > HK_DENSE_CAP:
                raise EigenBreakdownError(
                    pencil.i,
                    f"the indefinite pair is solved densely and capped at "
                    f"{HK_DENSE_CAP} local dofs (got {pencil.inner_pos.size}); "
                    "use a smaller instance or more subdomains")
            modes = _solve_dense_hk(pencil)
        else:
            modes = _solve_dense_spd(pencil)
    out = modes.rethreshold(tau, max_modes)
    if out is None:
        raise EigenBreakdownError(pencil.i, "incomplete spectrum below tau")
    return out


@dataclass
class CoarseSpace:
    """Global coarse basis and factorized coarse operator.

    ``Z`` holds one column per kept local mode (subdomain-major, eigenvalue
    ascending), each supported on its subdomain's inner dofs.  ``theta`` is
    the reciprocal of the smallest first-unused eigenvalue across subdomains
    (0 with ``theta_vacuous`` set when every finite mode is kept everywhere).
    """

    variant: str
    tau: float
    kept_counts: np.ndarray
    eigvals: list                     # per subdomain, computed finite prefix
    first_unused: np.ndarray          # per subdomain, lambda_{m_i + 1}
    Z: sp.csc_matrix
    B0: np.ndarray
    B0_lu: Optional[tuple]
    theta: float
    theta_vacuous: bool
    col_subdomain: np.ndarray = field(repr=False, default=None)

    @property
    def cs(self) -> int:
        return int(self.Z.shape[1])

    @property
    def cs_loc(self) -> float:
        return self.cs / self.kept_counts.size

    def coarse_solve(self, r: np.ndarray) -> np.ndarray:
        if self.B0_lu is None:
            raise CoarseSingularError("empty coarse space has no solve")
        return la.lu_solve(self.B0_lu, r)


def _factorize_coarse(B0: np.ndarray, variant: str, tau: float):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", la.LinAlgWarning)
        lu, piv = la.lu_factor(B0)
    d = np.abs(np.diag(lu))
    if d.size and d.min() <= B0.shape[0] * np.finfo(float).eps * max(d.max(), 1e-300):
        raise CoarseSingularError(
            f"coarse operator singular to working precision "
            f"(variant={variant}, tau={tau}, size={B0.shape[0]}); "
            "the instance may be resonant or the coarse basis rank-deficient"
        )
    return lu, piv


def build_coarse_space(fesys: FeSystem, layout: DecompLayout, variant: str,
                       tau: float, cache: Optional[dict] = None,
                       dense_cutoff: int = DENSE_CUTOFF,
                       max_modes: Optional[int] = None,
                       workers: int = 1) -> CoarseSpace:
    """Solve all local eigenproblems and assemble the coarse basis and B0.

    ``cache`` (any dict) memoizes local matrices and spectra across calls,
    so sweeping tau or switching variants on one instance re-solves nothing
    that is already covered.  Per-subdomain work is independent and runs on
    ``workers`` threads; the assembly of Z is a deterministic
    subdomain-major merge regardless of worker count.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    N = layout.n_subdomains

    def modes_for(i: int) -> LocalModes:
        key = (variant, i)
        if cache is not None and key in cache:
            hit = cache[key].rethreshold(tau, max_modes)
            if hit is not None:
                return hit
        pencil = build_local_pencil(fesys, layout, i, variant, cache)
        modes = solve_local_eigenproblem(pencil, tau, dense_cutoff, max_modes)
        if cache is not None:
            cache[key] = modes
        return modes

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_modes = list(pool.map(modes_for, range(N)))
    else:
        all_modes = [modes_for(i) for i in range(N)]

    rows, vals, col_sub = [], [], []
    col = 0
    kept_counts = np.zeros(N, dtype=np.int64)
    first_unused = np.zeros(N)
    eigvals = []
    for i, modes in enumerate(all_modes):
        m = modes.kept
        kept_counts[i] = m
        first_unused[i] = modes.first_unused()
        eigvals.append(modes.eigvals[: m + 1].copy())
        if m:
            weighted = layout.pou[i][:, None] * modes.vecs[layout.inner_pos[i], :m]
            rows.append(np.tile(layout.inner_dofs[i], m))
            vals.append(weighted.T.ravel())
            col_sub.extend([i] * m)
        col += m

    cs = col
    col_idx = []
    c = 0
    for i in range(N):
        m = kept_counts[i]
        if m:
            col_idx.append(np.repeat(np.arange(c, c + m), layout.inner_dofs[i].size))
        c += m
    if cs:
        Z = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(col_idx))),
            shape=(layout.n_dof, cs)).tocsc()
        B0 = (Z.T @ (fesys.B @ Z)).toarray()
        B0_lu = _factorize_coarse(B0, variant, tau)
    else:
        Z = sp.csc_matrix((layout.n_dof, 0))
        B0 = np.zeros((0, 0))
        B0_lu = None

    vacuous = bool(np.all(np.isinf(first_unused)))
    theta = 0.0 if vacuous else float(1.0 / np.min(first_unused))
    return CoarseSpace(variant=variant, tau=tau, kept_counts=kept_counts,
                       eigvals=eigvals, first_unused=first_unused, Z=Z,
                       B0=B0, B0_lu=B0_lu, theta=theta, theta_vacuous=vacuous,
                       col_subdomain=np.asarray(col_sub, dtype=np.int64))


def theta_of(coarse: CoarseSpace) -> float:
    """1 / (smallest first-unused eigenvalue); 0 with the vacuous flag set
    when every subdomain kept its entire finite spectrum."""
    return coarse.theta


def eig_report_csv(coarse: CoarseSpace) -> str:
    """Per-subdomain eigenvalue report: i, variant, lambda_1..lambda_{m_i+1}, m_i."""
    lines = []
    for i, lams in enumerate(coarse.eigvals):
        body = ",".join(f"{l:.12g}" for l in lams)
        m = coarse.kept_counts[i]
        lines.append(f"{i},{coarse.variant}," + (body + "," if body else "") + f"{m}")
    return "\n".join(lines) + "\n"
