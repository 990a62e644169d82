import numpy as np
import pytest
import scipy.linalg as la

import helmdd as H
from helmdd.eigencoarse import (_solve_arpack_spd, build_coarse_space,
                                build_local_pencil, eig_report_csv,
                                local_neumann_matrices,
                                solve_local_eigenproblem, theta_of)
from helmdd.errors import CoarseSingularError
from helmdd.mesh import build_unit_square_mesh


class TestLocalMatrices:
    def test_neumann_restriction_matches_global_on_inner(self, small_instance):
        # for zero-boundary dofs every incident element is inside, so the
        # Neumann assembly agrees exactly with the global principal submatrix
        fesys, layout = small_instance
        for i in range(layout.n_subdomains):
            A_i, S_i = local_neumann_matrices(fesys, layout, i)
            pos = layout.inner_pos[i]
            dofs = layout.inner_dofs[i]
            loc = A_i[pos][:, pos].toarray()
            glob = fesys.A[dofs][:, dofs].toarray()
            np.testing.assert_array_equal(loc, glob)

    def test_symmetry_and_psd(self, small_instance):
        fesys, layout = small_instance
        for i in range(layout.n_subdomains):
            A_i, S_i = local_neumann_matrices(fesys, layout, i)
            assert abs(A_i - A_i.T).max() <= 1e-14 * abs(A_i).max()
            vals = np.linalg.eigvalsh(A_i.toarray())
            assert vals[0] >= -1e-10 * vals[-1]
            vals_s = np.linalg.eigvalsh(S_i.toarray())
            assert vals_s[0] > 0


class TestPencil:
    def test_single_domain_delta_k_rhs_is_dk(self):
        # N=1: weights are all one, so the rhs equals A + k^2 S on interior dofs
        mesh = build_unit_square_mesh(6)
        fesys = H.assemble_system(mesh, H.CoefficientField(), k=3.0)
        layout = H.add_overlap(mesh, H.partition_uniform(mesh, 1, 1), 1)
        pencil = build_local_pencil(fesys, layout, 0, "delta_k")
        np.testing.assert_allclose(pencil.rhs.toarray(), fesys.Dk.toarray(),
                                   rtol=1e-14, atol=0)

    def test_delta_rhs_independent_of_k(self):
        mesh = build_unit_square_mesh(8)
        layout = H.add_overlap(mesh, H.partition_uniform(mesh, 2, 2), 1)
        rhs = []
        for k in (1.0, 30.0):
            fesys = H.assemble_system(mesh, H.CoefficientField(), k=k)
            rhs.append(build_local_pencil(fesys, layout, 1, "delta").rhs.toarray())
        np.testing.assert_array_equal(rhs[0], rhs[1])

    def test_hk_lhs_is_delta_k_lhs_minus_k2_mass(self, small_instance):
        fesys, layout = small_instance
        p_dk = build_local_pencil(fesys, layout, 2, "delta_k")
        p_hk = build_local_pencil(fesys, layout, 2, "hk")
        _, S_i = local_neumann_matrices(fesys, layout, 2)
        np.testing.assert_array_equal(
            p_hk.lhs.toarray(), p_dk.lhs.toarray() - fesys.k ** 2 * S_i.toarray())

    def test_rhs_kernel_is_ghost_layer(self, small_instance):
        fesys, layout = small_instance
        for i in range(layout.n_subdomains):
            pencil = build_local_pencil(fesys, layout, i, "delta_k")
            C = pencil.rhs.toarray()
            vals, vecs = np.linalg.eigh(C)
            n_ghost = layout.overl_dofs[i].size - layout.inner_dofs[i].size
            n_null = np.count_nonzero(vals <= 1e-12 * vals[-1])
            assert n_null == n_ghost

    def test_unknown_variant(self, small_instance):
        fesys, layout = small_instance
        with pytest.raises(ValueError):
            build_local_pencil(fesys, layout, 0, "huh")


class TestLocalSolve:
    def test_unit_weight_rayleigh_quotient(self, small_instance):
        # a vector supported where all weights are one has quotient exactly 1
        # in the delta pencil (lhs equals rhs there)
        fesys, layout = small_instance
        i = 0
        pencil = build_local_pencil(fesys, layout, i, "delta")
        w = pencil.weights
        # dofs with weight one whose matrix neighbours also have weight one
        A_i = pencil.lhs.tocsr()
        good = []
        for p in range(w.size):
            cols = A_i.indices[A_i.indptr[p]:A_i.indptr[p + 1]]
            if w[p] == 1.0 and np.all(w[cols] == 1.0):
                good.append(p)
        assert good, "no strictly interior dof found"
        v = np.zeros(w.size)
        v[good[0]] = 1.0
        num = v @ (pencil.lhs @ v)
        den = v @ (pencil.rhs @ v)
        assert num / den == pytest.approx(1.0, rel=1e-14)

    def test_spd_eigenvalues_nonnegative(self, small_instance):
        fesys, layout = small_instance
        for variant in ("delta", "delta_k"):
            pencil = build_local_pencil(fesys, layout, 0, variant)
            modes = solve_local_eigenproblem(pencil, np.inf)
            assert np.all(modes.eigvals >= -1e-10)

    def test_tau_inf_counts_inner_dofs(self, small_instance):
        # the finite spectrum has dimension dim(V-tilde) - dim(ker Xi)
        fesys, layout = small_instance
        for i in range(layout.n_subdomains):
            pencil = build_local_pencil(fesys, layout, i, "delta_k")
            modes = solve_local_eigenproblem(pencil, np.inf)
            assert modes.eigvals.size == layout.inner_dofs[i].size
            assert modes.kept == modes.eigvals.size
            assert modes.complete

    def test_xi_orthonormal(self, small_instance):
        fesys, layout = small_instance
        pencil = build_local_pencil(fesys, layout, 1, "delta_k")
        modes = solve_local_eigenproblem(pencil, 2.0)
        P = modes.vecs
        G = P.T @ (pencil.rhs @ P)
        assert np.abs(G - np.eye(P.shape[1])).max() <= 1e-10

    def test_residual_of_eigenpairs(self, small_instance):
        # lhs p = lambda rhs p holds for the returned finite pairs
        fesys, layout = small_instance
        pencil = build_local_pencil(fesys, layout, 3, "delta_k")
        modes = solve_local_eigenproblem(pencil, np.inf)
        for j in [0, 1, modes.eigvals.size // 2, modes.eigvals.size - 1]:
            p = modes.vecs[:, j]
            r = pencil.lhs @ p - modes.eigvals[j] * (pencil.rhs @ p)
            scale = np.abs(pencil.lhs @ p).max() + abs(modes.eigvals[j])
            assert np.abs(r).max() <= 1e-8 * max(scale, 1.0)

    def test_hk_eigenvalues_can_be_negative(self):
        mesh = build_unit_square_mesh(20)
        fesys = H.assemble_system(mesh, H.CoefficientField(), k=20.0)
        layout = H.add_overlap(mesh, H.partition_uniform(mesh, 2, 2), 1)
        pencil = build_local_pencil(fesys, layout, 0, "hk")
        modes = solve_local_eigenproblem(pencil, 0.5)
        assert modes.eigvals[0] < 0
        assert np.all(np.diff(modes.eigvals) >= 0)
        # negatives below tau are kept
        assert modes.kept == np.count_nonzero(modes.eigvals <= 0.5)

    def test_arpack_matches_dense(self):
        mesh = build_unit_square_mesh(24)
        fesys = H.assemble_system(mesh, H.CoefficientField(), k=8.0)
        layout = H.add_overlap(mesh, H.partition_uniform(mesh, 2, 2), 1)
        for variant in ("delta", "delta_k"):
            pencil = build_local_pencil(fesys, layout, 0, variant)
            dense = solve_local_eigenproblem(pencil, 0.9, dense_cutoff=10 ** 9)
            arp = _solve_arpack_spd(pencil, 0.9)
            m = min(dense.eigvals.size, arp.eigvals.size)
            np.testing.assert_allclose(arp.eigvals[:m], dense.eigvals[:m],
                                       rtol=1e-9, atol=1e-11)
            assert arp.rethreshold(0.9).kept == dense.rethreshold(0.9).kept


class TestCoarseSpace:
    def test_empty_below_spectrum(self, small_instance):
        fesys, layout = small_instance
        coarse = build_coarse_space(fesys, layout, "delta_k", 1e-12)
        assert coarse.cs == 0
        assert coarse.Z.shape == (layout.n_dof, 0)
        assert theta_of(coarse) == pytest.approx(1.0 / coarse.first_unused.min())

    def test_columns_supported_on_inner_dofs(self, small_two_level):
        fesys, layout, coarse, _, _ = small_two_level
        Z = coarse.Z.tocsc()
        for c in range(coarse.cs):
            rows = Z.indices[Z.indptr[c]:Z.indptr[c + 1]]
            i = coarse.col_subdomain[c]
            assert np.all(np.isin(rows, layout.inner_dofs[i]))

    def test_kept_versus_threshold(self, small_two_level):
        _, _, coarse, _, _ = small_two_level
        for i, lams in enumerate(coarse.eigvals):
            m = coarse.kept_counts[i]
            assert np.all(lams[:m] <= coarse.tau)
            if m < lams.size:
                assert lams[m] > coarse.tau
        assert coarse.cs == coarse.kept_counts.sum()
        assert coarse.cs_loc == pytest.approx(coarse.cs / layout_n(coarse))

    def test_b0_is_galerkin_product(self, small_two_level):
        fesys, layout, coarse, _, _ = small_two_level
        B0 = (coarse.Z.T @ (fesys.B @ coarse.Z)).toarray()
        np.testing.assert_allclose(coarse.B0, B0, rtol=1e-14, atol=0)

    def test_theta_monotone_in_tau(self):
        # n_cells=40, k=10, N=4: theta decreases as tau grows
        mesh = build_unit_square_mesh(40)
        fesys = H.assemble_system(mesh, H.CoefficientField(), k=10.0)
        layout = H.add_overlap(mesh, H.partition_uniform(mesh, 2, 2), 1)
        cache = {}
        thetas = []
        for tau in (0.2, 0.4, 0.6, 0.8):
            coarse = build_coarse_space(fesys, layout, "delta_k", tau, cache=cache)
            thetas.append(coarse.theta)
        assert all(a >= b for a, b in zip(thetas, thetas[1:]))

    def test_theta_examples(self, small_instance):
        fesys, layout = small_instance
        coarse = build_coarse_space(fesys, layout, "delta_k", 1e-12)
        lam1 = coarse.first_unused.min()
        assert theta_of(coarse) == pytest.approx(1.0 / lam1)

    def test_max_modes_cap(self, small_instance):
        fesys, layout = small_instance
        full = build_coarse_space(fesys, layout, "delta_k", 0.9)
        assert full.kept_counts.max() >= 2
        capped = build_coarse_space(fesys, layout, "delta_k", 0.9, max_modes=1)
        assert np.all(capped.kept_counts <= 1)
        assert capped.cs < full.cs

    def test_rank_deficient_basis_raises(self):
        # keeping every local mode makes the coarse columns dependent
        mesh = build_unit_square_mesh(8)
        fesys = H.assemble_system(mesh, H.CoefficientField(), k=1.0)
        layout = H.add_overlap(mesh, H.partition_uniform(mesh, 2, 2), 1)
        with pytest.raises(CoarseSingularError):
            build_coarse_space(fesys, layout, "delta_k", np.inf)

    def test_cache_reuse_bit_identical(self, small_instance):
        fesys, layout = small_instance
        cache = {}
        a = build_coarse_space(fesys, layout, "delta_k", 0.6, cache=cache)
        b = build_coarse_space(fesys, layout, "delta_k", 0.6, cache=cache)
        assert np.array_equal(a.Z.toarray(), b.Z.toarray())

    def test_workers_deterministic(self, small_instance):
        fesys, layout = small_instance
        seq = build_coarse_space(fesys, layout, "delta_k", 0.8)
        par = build_coarse_space(fesys, layout, "delta_k", 0.8, workers=4)
        assert np.array_equal(seq.Z.toarray(), par.Z.toarray())
        np.testing.assert_array_equal(seq.kept_counts, par.kept_counts)


def layout_n(coarse):
    return coarse.kept_counts.size


def test_eig_report_csv(small_two_level):
    _, _, coarse, _, _ = small_two_level
    lines = eig_report_csv(coarse).strip().split("\n")
    assert len(lines) == coarse.kept_counts.size
    first = lines[0].split(",")
    assert first[0] == "0"
    assert first[1] == "delta_k"
    assert int(first[-1]) == coarse.kept_counts[0]
