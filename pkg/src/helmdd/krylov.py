"""GMRES in a caller-supplied SPD weighted inner product.

Full (non-restarted) GMRES with modified Gram-Schmidt orthogonalization in
<x, y>_W = y^T W x.  The Arnoldi basis V is kept together with the cached
products W V, so each orthogonalization costs one multiplication by W plus
rank-one updates; a second Gram-Schmidt pass is engaged when the candidate
norm drops by more than a factor sqrt(2) during the first pass.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import KrylovBreakdownError, WeightNotSPDError

__all__ = ["KrylovReport", "gmres_weighted", "wnorm", "history_csv"]

_REORTH_DROP = 1.0 / np.sqrt(2.0)


@dataclass
class KrylovReport:
    """Outcome of one GMRES solve.

    ``residual_history[m]`` is the recurrence-computed relative residual in
    the W-norm after m iterations (history[0] == 1 for a nonzero rhs).
    """

    iterations: int
    converged: bool
    residual_history: np.ndarray
    solution: np.ndarray
    wall_notes: Optional[dict] = None


def wnorm(W, x: np.ndarray) -> float:
    """Norm sqrt(x^T W x) induced by an SPD weight matrix."""
    x = np.asarray(x)
    q = float(x @ (W @ x))
    if q < 0:
        scale = float(x @ x) * _weight_scale(W)
        if q < -1e-12 * max(scale, 1e-300):
            raise WeightNotSPDError(
                f"quadratic form x^T W x = {q:.3e} is negative; "
                "weight matrix is not SPD"
            )
        q = 0.0
    return np.sqrt(q)


def _weight_scale(W) -> float:
    if sp.issparse(W):
        d = np.abs(W.diagonal())
    else:
        d = np.abs(np.diagonal(W))
    return float(d.max()) if d.size else 1.0


def _as_matvec(op) -> Callable[[np.ndarray], np.ndarray]:
    if callable(op) and not hasattr(op, "matvec"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda x: op @ x
    raise TypeError(f"cannot interpret {type(op)!r} as a linear operator")


def gmres_weighted(op, rhs: np.ndarray, W, tol: float = 1e-6,
                   maxit: int = 200) -> KrylovReport:
    """Full GMRES on ``op x = rhs`` in the W-inner product, zero initial guess.

    Parameters
    ----------
    op : square linear operator (callable, object with ``matvec``, or matrix).
    rhs : right-hand side; a zero rhs returns the zero solution immediately.
    W : SPD weight matrix defining the inner product and the residual norm.
    tol : relative W-norm residual at which to stop.
    maxit : iteration cap (GMRES is not restarted).

    Raises
    ------
    KrylovBreakdownError
        If the Arnoldi basis degenerates while the residual is still above
        tolerance.  The happy-breakdown case (residual at zero) returns a
        converged report instead.
    """
    matvec = _as_matvec(op)
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]

    beta = wnorm(W, rhs)
    if beta == 0.0:
        return KrylovReport(iterations=0, converged=True,
                            residual_history=np.array([0.0]),
                            solution=np.zeros(n))

    maxit = min(maxit, n)
    V = np.zeros((n, maxit + 1))
    WV = np.zeros((n, maxit + 1))
    Hmat = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)

    V[:, 0] = rhs / beta
    WV[:, 0] = (W @ rhs) / beta
    g[0] = beta
    history = [1.0]

    converged = False
    m = 0
    for j in range(maxit):
        # copy: an operator may hand back its input (or a view of it)
        w = np.array(matvec(V[:, j]), dtype=float, copy=True)
        z = W @ w
        norm_before = np.sqrt(max(float(w @ z), 0.0))

        h = np.zeros(j + 2)
        for i in range(j + 1):
            hij = float(V[:, i] @ z)
            h[i] = hij
            w -= hij * V[:, i]
            z -= hij * WV[:, i]
        norm_after = np.sqrt(max(float(w @ z), 0.0))
        if norm_after < _REORTH_DROP * norm_before:
            for i in range(j + 1):
                c = float(V[:, i] @ z)
                h[i] += c
                w -= c * V[:, i]
                z -= c * WV[:, i]
            norm_after = np.sqrt(max(float(w @ z), 0.0))
        h[j + 1] = norm_after

        # apply the accumulated Givens rotations to the new column
        for i in range(j):
            t = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1]
            h[i] = t
        denom = np.hypot(h[j], h[j + 1])
        if denom == 0.0:
            raise KrylovBreakdownError(j + 1, history[-1])
        cs[j] = h[j] / denom
        sn[j] = h[j + 1] / denom
        Hmat[: j + 2, j] = h
        Hmat[j, j] = denom
        Hmat[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        m = j + 1
        relres = abs(g[j + 1]) / beta
        history.append(relres)

        happy = norm_after <= 1e-14 * max(norm_before, beta)
        if relres <= tol:
            converged = True
            break
        if happy:
            # invariant Krylov space with residual above tol: true breakdown
            raise KrylovBreakdownError(m, relres)

        V[:, j + 1] = w / norm_after
        WV[:, j + 1] = z / norm_after

    y = np.linalg.solve(Hmat[:m, :m], g[:m]) if m else np.zeros(0)
    x = V[:, :m] @ y
    return KrylovReport(iterations=m, converged=converged,
                        residual_history=np.asarray(history), solution=x)


def history_csv(report: KrylovReport) -> str:
    """Residual history as CSV lines ``iter,relres``."""
    lines = ["iter,relres"]
    for it, r in enumerate(report.residual_history):
        lines.append(f"{it},{r:.12e}")
    return "\n".join(lines) + "\n"
