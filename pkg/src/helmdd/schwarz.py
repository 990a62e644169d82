"""One- and two-level overlapping additive Schwarz preconditioners.

The one-level preconditioner sums zero-extended local solves with the
Dirichlet submatrices B_i of the global Helmholtz matrix on each subdomain's
zero-boundary dofs.  The two-level variant adds a coarse correction through
the spectral coarse basis Z and the factorized coarse operator B0 = Z^T B Z.

Local matrices are factorized with sparse LU (pivoting handles their
possible indefiniteness); applications accumulate subdomain contributions
in ascending index order, coarse term last, so repeated runs are bitwise
reproducible.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FeSystem
from .decomp import DecompLayout
from .eigencoarse import CoarseSpace
from .errors import LocalSingularError

__all__ = ["SchwarzPreconditioner", "factorize", "apply", "preconditioned_operator"]


class SchwarzPreconditioner:
    """Factorized additive Schwarz preconditioner.

    Instances are immutable after construction and safe to share across
    threads; ``stats`` counts local and coarse solve applications.
    """

    def __init__(self, fesys: FeSystem, layout: DecompLayout,
                 coarse: Optional[CoarseSpace], workers: int = 1):
        self.fesys = fesys
        self.layout = layout
        self.coarse = coarse
        self.level = "two" if coarse is not None else "one"
        self.stats = {"local_solves": 0, "coarse_solves": 0, "applications": 0}

        B = fesys.B.tocsr()

        def factor_one(i):
            dofs = layout.inner_dofs[i]
            Bi = B[dofs][:, dofs].tocsc()
            try:
                lu = spla.splu(Bi)
            except RuntimeError as exc:
                raise LocalSingularError(i, layout.Hi[i] * fesys.k) from exc
            d = np.abs(lu.U.diagonal())
            if d.size and d.min() <= 100 * d.size * np.finfo(float).eps * d.max():
                raise LocalSingularError(i, layout.Hi[i] * fesys.k)
            return lu

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                self.local_lu = list(pool.map(factor_one, range(layout.n_subdomains)))
        else:
            self.local_lu = [factor_one(i) for i in range(layout.n_subdomains)]

    @property
    def n_dof(self) -> int:
        return self.layout.n_dof

    def apply(self, r: np.ndarray) -> np.ndarray:
        """M^{-1} r = sum_i E_i B_i^{-1} R_i r (+ Z B0^{-1} Z^T r for two-level).

        Accepts a vector or a matrix of stacked right-hand sides.
        """
        r = np.asarray(r)
        out = np.zeros_like(r, dtype=float)
        for i in range(self.layout.n_subdomains):
            dofs = self.layout.inner_dofs[i]
            out[dofs] += self.local_lu[i].solve(r[dofs])
        self.stats["local_solves"] += self.layout.n_subdomains
        self.stats["applications"] += 1
        if self.coarse is not None and self.coarse.cs > 0:
            Z = self.coarse.Z
            out += Z @ self.coarse.coarse_solve(Z.T @ r)
            self.stats["coarse_solves"] += 1
        return out

    def __matmul__(self, r):
        return self.apply(r)


def factorize(fesys: FeSystem, layout: DecompLayout,
              coarse: Optional[CoarseSpace] = None,
              workers: int = 1) -> SchwarzPreconditioner:
    """Factorize all local Dirichlet matrices (and reference the coarse solve)."""
    return SchwarzPreconditioner(fesys, layout, coarse, workers=workers)


def apply(prec: SchwarzPreconditioner, r: np.ndarray) -> np.ndarray:
    """Apply a factorized preconditioner to a residual vector."""
    return prec.apply(r)


class PreconditionedOperator:
    """Matrix-free handle for x -> M^{-1} (B x)."""

    def __init__(self, prec: SchwarzPreconditioner, fesys: FeSystem):
        self.prec = prec
        self.B = fesys.B
        n = fesys.n_dof
        self.shape = (n, n)
        self.dtype = np.dtype(float)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.prec.apply(self.B @ x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x)


def preconditioned_operator(prec: SchwarzPreconditioner,
                            fesys: FeSystem) -> PreconditionedOperator:
    """Left-preconditioned operator handle for the Krylov solver."""
    return PreconditionedOperator(prec, fesys)
