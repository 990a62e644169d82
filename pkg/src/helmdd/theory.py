"""Convergence-theory constants and numerical verification of the estimates.

Computes the k-explicit quantities that govern the two-level method,

    C_sd  = 2 + 3 Lambda^2 Theta
    s     = 8 Lambda C_sd (1 + C_stab) k Theta^{1/2}
    t     = 6 sqrt(2) Lambda C_sd H k
    c1    = (1 - max(s, t)) / C_sd
    c2    = 18 + 8 Lambda^2

together with the measured field-of-values quantities of the preconditioned
operator in the Dk geometry (delta = smallest Rayleigh quotient of the
symmetrized operator, beta = operator norm), and runs every inequality of
the stability/approximation toolbox on random samples, producing one ledger
row per check.

Caveats carried in every report: C_stab is a *discrete* surrogate at the
instance resolution h, and the unit-square geometry has diameter sqrt(2),
exceeding the unit-diameter normalization under which the constants are
derived; the domain-level Friedrichs consequence is therefore checked in
its weaker form (see ``DOMAIN_NOTE``).
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FeSystem
from .decomp import DecompLayout, extend_by_zero
from .eigencoarse import (CoarseSpace, build_local_pencil, local_neumann_matrices,
                          solve_local_eigenproblem)
from .errors import ResonanceWarning, TooLargeError
from .schwarz import SchwarzPreconditioner

__all__ = [
    "TheoryReport",
    "LedgerRow",
    "estimate_cstab",
    "theory_constants",
    "fov_bounds",
    "fov_bounds_sampled",
    "verify_lemmas",
    "ledger_csv",
    "independent_t_apply",
    "elman_violation",
    "DOMAIN_NOTE",
]

DENSE_CAP = 4000

DOMAIN_NOTE = ("discrete C_stab at resolution h; unit-square diameter sqrt(2) "
               "exceeds the unit-diameter normalization, domain-level "
               "Friedrichs checked in the weaker form S <= A")


@dataclass
class TheoryReport:
    """Constants, measured field-of-values bounds, and condition booleans."""

    C_stab: float
    Lambda: float
    Theta: float
    H: float
    k: float
    s: float
    t: float
    c1: float
    c2: float
    delta: Optional[float] = None
    beta: Optional[float] = None
    theta_threshold: Optional[float] = None   # 1/tau at the CLI threshold
    cond_s: bool = False
    cond_t: bool = False
    cond_coarse_solvable: bool = False        # sqrt(2) k L Theta^{1/2} (1+C) < 1
    cond_coarse_stable: bool = False          # 2 k L Theta^{1/2} (1+C) <= 1/2
    cond_tau: bool = False                    # tau >= 16 L^2 (1+C)^2 k^2
    notes: str = DOMAIN_NOTE

    def csv_header(self) -> str:
        return ("C_stab,Lambda,Theta,theta_threshold,H,k,s,t,c1,c2,delta,beta,"
                "cond_s,cond_t,cond_coarse_solvable,cond_coarse_stable,cond_tau")

    def csv_row(self) -> str:
        def num(x):
            return "" if x is None else f"{x:.12g}"

        return (f"{num(self.C_stab)},{num(self.Lambda)},{num(self.Theta)},"
                f"{num(self.theta_threshold)},"
                f"{num(self.H)},{num(self.k)},{num(self.s)},{num(self.t)},"
                f"{num(self.c1)},{num(self.c2)},{num(self.delta)},{num(self.beta)},"
                f"{self.cond_s},{self.cond_t},{self.cond_coarse_solvable},"
                f"{self.cond_coarse_stable},{self.cond_tau}")


def theory_constants(c_stab: float, lam: float, theta: float, H: float,
                     k: float) -> TheoryReport:
    """Fill in s, t, c1, c2 and the condition booleans from the raw inputs."""
    if min(c_stab, lam, H, k) <= 0 or theta < 0:
        raise ValueError("all theory inputs must be positive (theta >= 0)")
    c_sd = 2.0 + 3.0 * lam ** 2 * theta
    s = 8.0 * lam * c_sd * (1.0 + c_stab) * k * np.sqrt(theta)
    t = 6.0 * np.sqrt(2.0) * lam * c_sd * H * k
    c1 = (1.0 - max(s, t)) / c_sd
    c2 = 18.0 + 8.0 * lam ** 2
    core = k * lam * np.sqrt(theta) * (1.0 + c_stab)
    tau = np.inf if theta == 0 else 1.0 / theta
    return TheoryReport(
        C_stab=c_stab, Lambda=lam, Theta=theta, H=H, k=k, s=s, t=t, c1=c1, c2=c2,
        cond_s=bool(s < 1), cond_t=bool(t < 1),
        cond_coarse_solvable=bool(np.sqrt(2.0) * core < 1),
        cond_coarse_stable=bool(2.0 * core <= 0.5),
        cond_tau=bool(tau >= 16.0 * lam ** 2 * (1.0 + c_stab) ** 2 * k ** 2),
    )


def estimate_cstab(fesys: FeSystem, dense_cutoff: int = DENSE_CAP,
                   warn_threshold: float = 1e6) -> float:
    """Discrete surrogate of the solution-operator stability constant.

    Largest singular value of the load-to-solution map in the (L2, Dk) norm
    pair: the square root of the largest eigenvalue of the pencil
    Dk y = sigma^2 (B S^{-1} B) y, evaluated densely on small instances and
    by S-weighted power iteration above ``dense_cutoff``.  A near-resonant
    wavenumber makes the estimate blow up and raises ``ResonanceWarning``.
    """
    n = fesys.n_dof
    if n <= dense_cutoff:
        B = fesys.B.toarray()
        S = fesys.S.toarray()
        Dk = fesys.Dk.toarray()
        try:
            X = la.solve(B, S)
        except la.LinAlgError:
            _warn_resonance(fesys, np.inf)
            return np.inf
        G = X.T @ Dk @ X
        G = 0.5 * (G + G.T)
        sig2 = la.eigh(G, S, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
        c = float(np.sqrt(max(sig2, 0.0)))
    else:
        lu = spla.splu(fesys.B.tocsc())
        S = fesys.S
        Dk = fesys.Dk
        y = np.ones(n)
        y /= np.sqrt(y @ (S @ y))
        rq_prev = 0.0
        c = np.inf
        for _ in range(300):
            w = lu.solve(Dk @ lu.solve(S @ y))
            rq = float(y @ (S @ w))
            nw = np.sqrt(max(float(w @ (S @ w)), 1e-300))
            y = w / nw
            if abs(rq - rq_prev) <= 1e-10 * max(abs(rq), 1.0):
                break
            rq_prev = rq
        c = float(np.sqrt(max(rq, 0.0)))
    if not np.isfinite(c) or c > warn_threshold:
        _warn_resonance(fesys, c)
    return c


def _warn_resonance(fesys: FeSystem, estimate: float):
    s_min = _smallest_singular_value(fesys.B)
    warnings.warn(
        f"stability estimate {estimate:.3e} indicates a near-resonant "
        f"wavenumber k={fesys.k:.6g} (smallest singular value of B "
        f"~ {s_min:.3e})", ResonanceWarning, stacklevel=3)


def _smallest_singular_value(B: sp.spmatrix, iters: int = 30) -> float:
    """Power-iteration estimate of 1 / ||B^{-1}||_2."""
    try:
        lu = spla.splu(B.tocsc())
    except RuntimeError:
        return 0.0
    x = np.ones(B.shape[0])
    x /= np.linalg.norm(x)
    norm = 0.0
    for _ in range(iters):
        y = lu.solve(lu.solve(x), trans="T")
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
    return 1.0 / np.sqrt(norm)


def fov_bounds(prec: SchwarzPreconditioner, fesys: FeSystem,
               cap: int = DENSE_CAP):
    """Measured FoV lower bound delta and Dk-operator norm beta.

    Assembles M^{-1} B densely by probing, then computes (in the Dk
    geometry) the smallest eigenvalue of its symmetric part and its largest
    singular value.  Dense evaluation needs the full spectrum, hence the
    size cap; use ``fov_bounds_sampled`` beyond it.
    """
    n = fesys.n_dof
    if n > cap:
        raise TooLargeError(
            f"dense FoV evaluation capped at {cap} dofs (instance has {n}); "
            "use fov_bounds_sampled for randomized lower bounds")
    Bd = fesys.B.toarray()
    W = prec.apply(Bd)
    Dk = fesys.Dk.toarray()
    G = Dk @ W
    Gs = 0.5 * (G + G.T)
    delta = float(la.eigh(Gs, Dk, eigvals_only=True, subset_by_index=[0, 0])[0])
    H = W.T @ Dk @ W
    H = 0.5 * (H + H.T)
    beta2 = float(la.eigh(H, Dk, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])
    return delta, float(np.sqrt(max(beta2, 0.0)))


def fov_bounds_sampled(prec: SchwarzPreconditioner, fesys: FeSystem,
                       samples: int = 64, seed: int = 0):
    """Randomized probes: an upper bound on delta and a lower bound on beta.

    Sampling can only shrink the field of values, so the returned pair
    brackets nothing by itself; it is a cheap indicator for large instances.
    """
    rng = np.random.default_rng(seed)
    n = fesys.n_dof
    Dk = fesys.Dk
    delta_ub = np.inf
    beta_lb = 0.0
    for _ in range(samples):
        u = rng.standard_normal(n)
        nu2 = float(u @ (Dk @ u))
        w = prec.apply(fesys.B @ u)
        delta_ub = min(delta_ub, float(u @ (Dk @ w)) / nu2)
        beta_lb = max(beta_lb, np.sqrt(max(float(w @ (Dk @ w)), 0.0) / nu2))
    return delta_ub, beta_lb


def elman_violation(history: np.ndarray, delta: float, beta: float) -> float:
    """Worst violation of ||r_m||^2 <= (1 - delta^2/beta^2)^m ||r_0||^2.

    ``history`` holds relative residuals; the return value is
    max_m (history[m]^2 - rate^m), negative when the bound holds strictly.
    Only meaningful for delta > 0 (the contraction estimate presumes a
    field of values in the right half plane).
    """
    if delta <= 0:
        raise ValueError("the contraction bound requires delta > 0")
    rate = 1.0 - (delta / beta) ** 2
    hist = np.asarray(history, dtype=float)
    m = np.arange(hist.size)
    return float(np.max(hist ** 2 - rate ** m))


# ---------------------------------------------------------------------------
# Lemma ledger
# ---------------------------------------------------------------------------

@dataclass
class LedgerRow:
    """One verified inequality: worst ratio over the drawn samples."""

    name: str
    samples: int
    worst_ratio: float
    threshold: float
    status: str  # "pass" | "fail" | "skipped"

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def ledger_csv(rows) -> str:
    lines = ["check_name,samples,worst_ratio,threshold,pass"]
    for r in rows:
        lines.append(f"{r.name},{r.samples},{r.worst_ratio:.12g},"
                     f"{r.threshold:.12g},{r.status}")
    return "\n".join(lines) + "\n"


def independent_t_apply(fesys: FeSystem, layout: DecompLayout,
                        coarse: Optional[CoarseSpace]):
    """Assemble u -> T u from the per-subdomain Galerkin conditions.

    Local operators solve  b_loc(T_i u, v) = b(u, E_i v)  with b_loc
    re-assembled from element contributions (not extracted from the global
    matrix); the coarse part solves the Galerkin condition on the coarse
    basis.  Used to cross-check the preconditioned operator identity.
    """
    k2 = fesys.k ** 2
    local = []
    for i in range(layout.n_subdomains):
        A_i, S_i = local_neumann_matrices(fesys, layout, i)
        Bi = A_i.copy()
        Bi.data = A_i.data - k2 * S_i.data
        pos = layout.inner_pos[i]
        local.append(spla.splu(Bi[pos][:, pos].tocsc()))

    def T(u: np.ndarray) -> np.ndarray:
        Bu = fesys.B @ u
        out = np.zeros_like(u, dtype=float)
        for i in range(layout.n_subdomains):
            dofs = layout.inner_dofs[i]
            out[dofs] += local[i].solve(Bu[dofs])
        if coarse is not None and coarse.cs > 0:
            out += coarse.Z @ coarse.coarse_solve(coarse.Z.T @ Bu)
        return out

    return T


def _subdomain_box_sides(fesys: FeSystem, layout: DecompLayout, i: int):
    nodes = np.unique(fesys.mesh.triangles[layout.elements[i]].ravel())
    coords = fesys.mesh.nodes[nodes]
    return coords.max(axis=0) - coords.min(axis=0)


def verify_lemmas(fesys: FeSystem, layout: DecompLayout, coarse: CoarseSpace,
                  samples: int = 50, seed: int = 0,
                  cache: Optional[dict] = None,
                  slack: float = 1e-10):
    """Run every stability/approximation inequality on random samples.

    Returns a list of ``LedgerRow``; failures are rows, not exceptions.  The
    coarse space should be built with the ``delta_k`` variant (the toolbox
    is stated for it).  Passing the cache used to build the coarse space
    avoids re-solving the local eigenproblems.
    """
    rng = np.random.default_rng(seed)
    rows = []
    N = layout.n_subdomains
    Dk = fesys.Dk
    B = fesys.B
    lam = float(layout.Lambda)
    theta = coarse.theta
    c_sd = 2.0 + 3.0 * lam ** 2 * theta
    n = fesys.n_dof
    ratio_thr = 1.0 + slack

    def dknorm2(v):
        return float(v @ (Dk @ v))

    # per-subdomain machinery (delta_k pencils, local Gram matrices, solvers)
    pencils = []
    modes = []
    dk_inner = []
    dk_inner_lu = []
    b_inner_lu = []
    dk_neu = []
    for i in range(N):
        pencil = build_local_pencil(fesys, layout, i, "delta_k", cache)
        key = ("delta_k", i)
        if cache is not None and key in cache:
            md = cache[key].rethreshold(coarse.tau)
            if md is None:
                md = solve_local_eigenproblem(pencil, coarse.tau)
        else:
            md = solve_local_eigenproblem(pencil, coarse.tau)
            if cache is not None:
                cache[key] = md
        pencils.append(pencil)
        modes.append(md)
        A_i, S_i = local_neumann_matrices(fesys, layout, i, cache)
        dk_i = A_i.copy()
        dk_i.data = A_i.data + fesys.k ** 2 * S_i.data
        dk_neu.append(dk_i)
        dofs = layout.inner_dofs[i]
        dk_in = Dk[dofs][:, dofs].tocsc()
        dk_inner.append(dk_in)
        dk_inner_lu.append(spla.splu(dk_in))
        b_inner_lu.append(spla.splu(B[dofs][:, dofs].tocsc()))

    Z = coarse.Z
    have_coarse = coarse.cs > 0
    if have_coarse:
        ZDkZ = (Z.T @ (Dk @ Z)).toarray()
        ZDkZ_cho = la.cho_factor(0.5 * (ZDkZ + ZDkZ.T))

    def p0(u):
        if not have_coarse:
            return np.zeros_like(u)
        return Z @ la.cho_solve(ZDkZ_cho, Z.T @ (Dk @ u))

    def pi(i, u):
        return dk_inner_lu[i].solve((Dk @ u)[layout.inner_dofs[i]])

    def local_project(i, v_ov):
        md = modes[i]
        if md.kept == 0:
            return np.zeros_like(v_ov)
        P = md.vecs[:, : md.kept]
        return P @ (P.T @ (pencils[i].rhs @ v_ov))

    # --- partition of unity -------------------------------------------------
    pou_sum = np.zeros(n)
    for i in range(N):
        pou_sum[layout.inner_dofs[i]] += layout.pou[i]
    rows.append(LedgerRow("partition_of_unity", n,
                          float(np.abs(pou_sum - 1.0).max()), slack,
                          "pass" if np.abs(pou_sum - 1.0).max() <= slack else "fail"))

    # --- Xi-orthonormality of kept modes ------------------------------------
    dev = 0.0
    for i in range(N):
        md = modes[i]
        if md.kept == 0:
            continue
        P = md.vecs[:, : md.kept]
        G = P.T @ (pencils[i].rhs @ P)
        dev = max(dev, float(np.abs(G - np.eye(md.kept)).max()))
    rows.append(LedgerRow("xi_orthonormality", N, dev, 1e-10,
                          "pass" if dev <= 1e-10 else "fail"))

    # --- local projection bounds ---------------------------------------------
    worst_stab = 0.0
    worst_tail = 0.0
    for i in range(N):
        A_i, S_i = local_neumann_matrices(fesys, layout, i, cache)
        nloc = layout.overl_dofs[i].size
        lam_next = modes[i].first_unused()
        for _ in range(samples):
            v = rng.standard_normal(nloc)
            w = v - local_project(i, v)
            lhs = float(w @ (A_i @ w))
            rhs = float(v @ (dk_neu[i] @ v))
            worst_stab = max(worst_stab, lhs / rhs)
            tail_lhs = float(w @ (pencils[i].rhs @ w))
            if np.isinf(lam_next):
                worst_tail = max(worst_tail, tail_lhs / (slack * rhs))
            else:
                worst_tail = max(worst_tail, tail_lhs * lam_next / max(lhs, 1e-300))
    rows.append(LedgerRow("local_projection_stability", N * samples, worst_stab,
                          ratio_thr, "pass" if worst_stab <= ratio_thr else "fail"))
    rows.append(LedgerRow("local_projection_tail", N * samples, worst_tail,
                          ratio_thr, "pass" if worst_tail <= ratio_thr else "fail"))

    # --- global approximation, stable decomposition, energy identity ---------
    worst_approx = 0.0
    worst_recon = 0.0
    worst_energy_dev = 0.0
    worst_sd = 0.0
    worst_pu = 0.0
    worst_psum = 0.0
    for _ in range(samples):
        v = rng.standard_normal(n)
        nv2 = dknorm2(v)

        z0 = np.zeros(n)
        zi = []
        for i in range(N):
            v_ov = v[layout.overl_dofs[i]]
            pv = local_project(i, v_ov)
            z0 += extend_by_zero(layout, i,
                                 layout.pou[i] * pv[layout.inner_pos[i]])
            wi = v_ov - pv
            zi.append(layout.pou[i] * wi[layout.inner_pos[i]])
        approx_rhs = lam ** 2 * theta * nv2
        approx_lhs = dknorm2(v - z0)
        if approx_rhs > 0:
            worst_approx = max(worst_approx, approx_lhs / approx_rhs)
        else:
            worst_approx = max(worst_approx, approx_lhs / (slack * nv2))

        recon = z0.copy()
        energy = dknorm2(z0)
        for i in range(N):
            recon += extend_by_zero(layout, i, zi[i])
            energy += float(zi[i] @ (dk_inner[i] @ zi[i]))
        worst_recon = max(worst_recon, np.sqrt(dknorm2(v - recon) / nv2))
        worst_sd = max(worst_sd, energy / (c_sd * nv2))

        # projector identities
        p0v = p0(v)
        pv_sum = p0v.copy()
        pnorm2 = dknorm2(p0v)
        for i in range(N):
            piv = pi(i, v)
            pv_sum += extend_by_zero(layout, i, piv)
            pnorm2 += float(piv @ (dk_inner[i] @ piv))
        puu = float(v @ (Dk @ pv_sum))
        worst_energy_dev = max(worst_energy_dev,
                               abs(puu - pnorm2) / max(abs(puu), 1e-300))
        worst_pu = max(worst_pu, nv2 / (c_sd * puu) if puu > 0 else np.inf)
        worst_psum = max(worst_psum, pnorm2 / ((lam + 1.0) * nv2))

    rows.append(LedgerRow("global_coarse_approximation", samples, worst_approx,
                          ratio_thr, "pass" if worst_approx <= ratio_thr else "fail"))
    rows.append(LedgerRow("stable_decomposition_identity", samples, worst_recon,
                          slack, "pass" if worst_recon <= slack else "fail"))
    rows.append(LedgerRow("stable_decomposition_energy", samples, worst_sd,
                          ratio_thr, "pass" if worst_sd <= ratio_thr else "fail"))
    rows.append(LedgerRow("energy_identity", samples, worst_energy_dev,
                          slack, "pass" if worst_energy_dev <= slack else "fail"))
    rows.append(LedgerRow("pu_lower_bound", samples, worst_pu, ratio_thr,
                          "pass" if worst_pu <= ratio_thr else "fail"))
    rows.append(LedgerRow("projector_sum_bound", samples, worst_psum, ratio_thr,
                          "pass" if worst_psum <= ratio_thr else "fail"))

    # --- overlap stability ----------------------------------------------------
    worst_ext = 0.0
    worst_res = 0.0
    for _ in range(samples):
        total = np.zeros(n)
        loc_energy = 0.0
        for i in range(N):
            q = rng.standard_normal(layout.inner_dofs[i].size)
            total += extend_by_zero(layout, i, q)
            loc_energy += float(q @ (dk_inner[i] @ q))
        worst_ext = max(worst_ext, dknorm2(total) / (lam * loc_energy))

        v = rng.standard_normal(n)
        restr = 0.0
        for i in range(N):
            v_ov = v[layout.overl_dofs[i]]
            restr += float(v_ov @ (dk_neu[i] @ v_ov))
        worst_res = max(worst_res, restr / (lam * dknorm2(v)))
    rows.append(LedgerRow("overlap_stability_extend", samples, worst_ext,
                          ratio_thr, "pass" if worst_ext <= ratio_thr else "fail"))
    rows.append(LedgerRow("overlap_stability_restrict", samples, worst_res,
                          ratio_thr, "pass" if worst_res <= ratio_thr else "fail"))

    # --- Friedrichs per subdomain ----------------------------------------------
    worst_fr = 0.0
    S = fesys.S
    A = fesys.A
    for i in range(N):
        sides = _subdomain_box_sides(fesys, layout, i)
        L = float(min(sides))
        dofs = layout.inner_dofs[i]
        S_in = S[dofs][:, dofs]
        A_in = A[dofs][:, dofs]
        for _ in range(samples):
            u = rng.standard_normal(dofs.size)
            worst_fr = max(worst_fr, float(u @ (S_in @ u))
                           / (0.5 * L * L * float(u @ (A_in @ u))))
    rows.append(LedgerRow("friedrichs_subdomain", N * samples, worst_fr,
                          ratio_thr, "pass" if worst_fr <= ratio_thr else "fail"))

    # --- boundedness of b -------------------------------------------------------
    worst_b = 0.0
    for _ in range(2 * samples):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        worst_b = max(worst_b, abs(float(u @ (B @ v)))
                      / np.sqrt(dknorm2(u) * dknorm2(v)))
    rows.append(LedgerRow("b_boundedness", 2 * samples, worst_b, ratio_thr,
                          "pass" if worst_b <= ratio_thr else "fail"))

    # --- conditional local/coarse projector stability ---------------------------
    if layout.H * fesys.k <= 1.0 / np.sqrt(2.0):
        worst_ti = 0.0
        for _ in range(samples):
            u = rng.standard_normal(n)
            bu = B @ u
            for i in range(N):
                dofs = layout.inner_dofs[i]
                tiu = b_inner_lu[i].solve(bu[dofs])
                lhs = float(tiu @ (dk_inner[i] @ tiu))
                v_ov = u[layout.overl_dofs[i]]
                rhs = 4.0 * float(v_ov @ (dk_neu[i] @ v_ov))
                worst_ti = max(worst_ti, lhs / rhs)
        rows.append(LedgerRow("ti_stability", N * samples, worst_ti, ratio_thr,
                              "pass" if worst_ti <= ratio_thr else "fail"))
    else:
        rows.append(LedgerRow("ti_stability", 0, np.nan, ratio_thr, "skipped"))

    c_stab = estimate_cstab(fesys) if n <= DENSE_CAP else None
    core = (2.0 * fesys.k * lam * np.sqrt(theta) * (1.0 + c_stab)
            if c_stab is not None else np.inf)
    if have_coarse and c_stab is not None and core <= 0.5:
        worst_t0 = 0.0
        for _ in range(samples):
            u = rng.standard_normal(n)
            t0u = Z @ coarse.coarse_solve(Z.T @ (B @ u))
            worst_t0 = max(worst_t0, dknorm2(t0u - u) / (4.0 * dknorm2(u)))
        rows.append(LedgerRow("t0_stability", samples, worst_t0, ratio_thr,
                              "pass" if worst_t0 <= ratio_thr else "fail"))
    else:
        rows.append(LedgerRow("t0_stability", 0, np.nan, ratio_thr, "skipped"))

    return rows
