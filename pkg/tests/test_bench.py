import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from helmdd.bench import (CSV_HEADER, RunConfig, RunRecord, SCHEMA_TAG,
                          diagnose, estimate_memory_gb, main, run_grid,
                          run_single)
from helmdd.errors import ConfigError


def small(**kw):
    base = dict(k=5.0, N=4, method="delta_k", tau=0.5, n_cells=12)
    base.update(kw)
    return RunConfig(**base)


class TestConfig:
    def test_defaults_valid(self):
        RunConfig().validate()

    def test_perfect_square_required(self):
        with pytest.raises(ConfigError):
            small(N=5).validate()

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            small(method="two_level").validate()

    def test_resolution_rule(self):
        cfg = RunConfig(k=20.0, kh_target=0.1)
        assert cfg.resolved_n_cells() == 200
        assert small(n_cells=16).resolved_n_cells() == 16

    def test_memory_cap(self):
        cfg = RunConfig(k=100.0, kh_target=0.1, method="one_level", maxit=200)
        est = estimate_memory_gb((cfg.resolved_n_cells() - 1) ** 2, cfg.maxit)
        assert est > 8.0
        with pytest.raises(ConfigError, match="allow_large"):
            run_single(cfg)


class TestRunSingle:
    def test_two_level_record(self):
        rec = run_single(small())
        assert rec.converged
        assert isinstance(rec.iterations, int)
        assert rec.iterations < 200
        assert rec.CS > 0
        assert rec.CS_loc == pytest.approx(rec.CS / 4)
        assert rec.n == 11 ** 2
        assert rec.L == pytest.approx(np.sqrt(2) * 5.0 / (2 * np.pi))
        assert rec.relres_final <= 1e-6

    def test_one_level_ignores_tau(self):
        rec = run_single(small(method="one_level", tau=123.0))
        assert rec.CS == 0
        row = rec.csv_row()
        parts = row.split(",")
        assert parts[3] == ""  # tau column blank for one-level

    def test_iteration_limit_record(self):
        rec = run_single(small(method="one_level", maxit=2))
        assert rec.iterations == "limit"
        assert not rec.converged

    def test_layered_medium(self):
        rec = run_single(small(medium="layered", a_max=10.0, n_cells=20))
        assert rec.converged

    def test_csv_row_matches_header(self):
        rec = run_single(small())
        assert len(rec.csv_row().split(",")) == len(CSV_HEADER.split(","))


class TestGrid:
    def test_grid_outputs(self, tmp_path):
        base = small()
        records = run_grid(base, ks=[5.0], Ns=[4], taus=[0.4, 0.6],
                           methods=["one_level", "delta_k"],
                           media=["homogeneous"], out_dir=tmp_path)
        # one_level collapses the tau axis: 1 + 2 runs
        assert len(records) == 3
        results = (tmp_path / "results.csv").read_text().strip().split("\n")
        assert results[0] == SCHEMA_TAG
        assert results[1] == CSV_HEADER
        assert len(results) == 2 + 3
        for name in ("it_vs_cs.csv", "it_vs_tau.csv", "it_vs_Hwaves.csv",
                     "cs_vs_Hwaves.csv"):
            assert (tmp_path / name).exists()

    def test_grid_determinism(self, tmp_path):
        base = small()
        run_grid(base, [5.0], [4], [0.5], ["delta_k"], ["homogeneous"],
                 tmp_path / "a")
        run_grid(base, [5.0], [4], [0.5], ["delta_k"], ["homogeneous"],
                 tmp_path / "b")
        assert (tmp_path / "a" / "results.csv").read_bytes() == \
            (tmp_path / "b" / "results.csv").read_bytes()

    def test_empty_method_list(self, tmp_path):
        with pytest.raises(ConfigError):
            run_grid(small(), [5.0], [4], [0.5], [], ["homogeneous"], tmp_path)

    def test_unknown_grid_entries(self, tmp_path):
        with pytest.raises(ConfigError):
            run_grid(small(), [5.0], [4], [0.5], ["delta_k"], ["swiss"], tmp_path)


class TestDiagnose:
    def test_single_domain_identity_row(self, tmp_path):
        cfg = RunConfig(k=5.0, N=1, method="one_level", n_cells=8)
        report, rows = diagnose(cfg, tmp_path)
        assert report.delta == pytest.approx(1.0, abs=1e-9)
        assert report.beta == pytest.approx(1.0, abs=1e-9)
        assert (tmp_path / "theory.csv").exists()

    def test_engineered_instance_all_conditions(self, tmp_path):
        # frozen small-wavenumber instance with a large threshold: every
        # sufficient condition evaluates true and delta >= c1
        cfg = RunConfig(k=0.001, N=4, method="delta_k", tau=1.0, n_cells=16)
        report, rows = diagnose(cfg, tmp_path)
        assert report.cond_s and report.cond_t
        assert report.cond_coarse_solvable and report.cond_coarse_stable
        assert report.cond_tau
        assert report.delta >= report.c1
        assert report.beta ** 2 <= report.c2
        assert (tmp_path / "lemma_ledger.csv").exists()
        assert all(r.status != "fail" for r in rows)

    def test_resonant_instance_warns(self, tmp_path):
        import scipy.linalg as la
        import helmdd as H
        mesh = H.build_unit_square_mesh(12)
        fes1 = H.assemble_system(mesh, H.CoefficientField(), k=1.0)
        lam1 = la.eigh(fes1.A.toarray(), fes1.S.toarray(), eigvals_only=True)[0]
        cfg = RunConfig(k=float(np.sqrt(lam1)), N=4, method="one_level",
                        n_cells=12)
        from helmdd.errors import ResonanceWarning
        with pytest.warns(ResonanceWarning):
            report, _ = diagnose(cfg)


class TestCli:
    def test_run_and_exit_codes(self, tmp_path):
        out = tmp_path / "row.csv"
        code = main(["run", "--k", "5", "--N", "4", "--n-cells", "12",
                     "--method", "delta_k", "--tau", "0.5",
                     "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == SCHEMA_TAG
        assert lines[1] == CSV_HEADER

    def test_config_error_exit_2(self):
        assert main(["run", "--k", "5", "--N", "3", "--n-cells", "12"]) == 2

    def test_numerical_error_exit_3(self):
        # resonant manufactured wavenumber: the coarse operator or a local
        # factor breaks; exit code 3 signals the numerical failure
        import scipy.linalg as la
        import helmdd as H
        mesh = H.build_unit_square_mesh(12)
        layout = H.add_overlap(mesh, H.partition_uniform(mesh, 2, 2), 1)
        fes1 = H.assemble_system(mesh, H.CoefficientField(), k=1.0)
        dofs = layout.inner_dofs[0]
        lam = la.eigh(fes1.A[dofs][:, dofs].toarray(),
                      fes1.S[dofs][:, dofs].toarray(), eigvals_only=True)[0]
        code = main(["run", "--k", str(np.sqrt(lam)), "--N", "4",
                     "--n-cells", "12", "--method", "one_level"])
        assert code == 3

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[run]\nk = 5.0\nN = 4\nn_cells = 12\n"
                       "method = delta_k\ntau = 0.9\n")
        out = tmp_path / "row.csv"
        code = main(["run", "--config", str(cfg), "--tau", "0.5",
                     "--out", str(out)])
        assert code == 0
        row = out.read_text().strip().split("\n")[2].split(",")
        assert float(row[3]) == 0.5  # flag wins over file

    def test_missing_config_file(self):
        assert main(["run", "--config", "/nonexistent.cfg"]) == 2

    def test_dump_mesh(self, tmp_path):
        out = tmp_path / "mesh.txt"
        assert main(["dump-mesh", "--n-cells", "4", "--out", str(out)]) == 0
        assert out.read_text().startswith("4 0.25")

    def test_dump_eigs(self, tmp_path):
        out = tmp_path / "eigs.csv"
        code = main(["dump-eigs", "--k", "5", "--N", "4", "--n-cells", "12",
                     "--method", "delta_k", "--tau", "0.5", "--out", str(out)])
        assert code == 0
        first = out.read_text().strip().split("\n")[0].split(",")
        assert first[0] == "0" and first[1] == "delta_k"

    def test_grid_cli(self, tmp_path):
        code = main(["grid", "--k-list", "5", "--n-list", "4",
                     "--tau-list", "0.5", "--methods", "one_level,delta_k",
                     "--media", "homogeneous", "--n-cells", "12",
                     "--out", str(tmp_path / "g")])
        assert code == 0
        assert (tmp_path / "g" / "results.csv").exists()

    def test_diagnose_cli(self, tmp_path):
        code = main(["diagnose", "--k", "0.001", "--N", "4", "--n-cells", "16",
                     "--method", "delta_k", "--tau", "1.0",
                     "--out", str(tmp_path / "d")])
        assert code == 0
        assert (tmp_path / "d" / "lemma_ledger.csv").exists()


def test_console_script_installed():
    result = subprocess.run([sys.executable, "-m", "helmdd.bench"],
                            capture_output=True, text=True)
    # module execution without argv hits argparse's required-subcommand error
    assert result.returncode == 2
