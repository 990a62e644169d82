"""Benchmark driver and command-line interface.

Runs the full pipeline (mesh -> assembly -> decomposition -> coarse space ->
preconditioner -> GMRES) for single configurations and cartesian grids,
producing CSV tables with one row per run plus plot-ready companion files.

Subcommands: ``run``, ``grid``, ``diagnose``, ``dump-mesh``, ``dump-eigs``.
All configuration keys are available as command-line flags and as
``key = value`` lines in an INI-style config file (section named after the
subcommand); flags override the file.  Exit codes: 0 success, 2 config
error, 3 numerical failure.
"""

import argparse
import configparser
import sys
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import assembly, decomp, eigencoarse, krylov, schwarz, theory
from .errors import ConfigError, NumericalError
from .mesh import build_unit_square_mesh, dump_mesh, mesh_for_wavenumber

__all__ = ["RunConfig", "RunRecord", "run_single", "run_grid", "diagnose", "main"]

METHODS = ("one_level", "delta", "delta_k", "hk")
MEDIA = ("homogeneous", "layered")
SCHEMA_TAG = "# schema=helmdd-run-v1"
CSV_HEADER = ("k,N,method,tau,n,L,H_waves,n_loc,iterations,converged,"
              "CS,CS_loc,relres_final")


@dataclass(frozen=True)
class RunConfig:
    """One benchmark run; ``n_cells`` defaults to the kh-resolution rule."""

    k: float = 20.0
    N: int = 4
    method: str = "delta_k"
    tau: float = 0.5
    kh_target: float = 0.1
    n_cells: Optional[int] = None
    overlap_layers: int = 1
    medium: str = "homogeneous"
    a_max: float = 1.0
    tol: float = 1e-6
    maxit: int = 200
    seed: int = 0
    residual_norm: str = "dk"       # "dk" | "euclid"
    max_modes: Optional[int] = None
    workers: int = 1
    memory_cap_gb: float = 8.0
    allow_large: bool = False
    out: Optional[str] = None

    def validate(self):
        if self.k <= 0:
            raise ConfigError(f"k must be positive, got {self.k}")
        root = round(np.sqrt(self.N))
        if self.N < 1 or root * root != self.N:
            raise ConfigError(f"N must be a perfect square, got {self.N}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.medium not in MEDIA:
            raise ConfigError(f"medium must be one of {MEDIA}, got {self.medium!r}")
        if self.method != "one_level" and not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not 0 < self.kh_target <= 1:
            raise ConfigError(f"kh_target must be in (0, 1], got {self.kh_target}")
        if self.overlap_layers < 1:
            raise ConfigError("overlap_layers must be >= 1")
        if self.tol <= 0 or self.maxit < 1:
            raise ConfigError("tol must be positive and maxit >= 1")
        if self.residual_norm not in ("dk", "euclid"):
            raise ConfigError("residual_norm must be 'dk' or 'euclid'")
        if self.medium == "layered" and self.a_max < 1:
            raise ConfigError("layered medium requires a_max >= 1")

    def resolved_n_cells(self) -> int:
        if self.n_cells is not None:
            if self.n_cells < 2:
                raise ConfigError(f"n_cells must be >= 2, got {self.n_cells}")
            return int(self.n_cells)
        return mesh_for_wavenumber(self.k, self.kh_target)


@dataclass
class RunRecord:
    """One CSV row of the results table."""

    k: float
    N: int
    method: str
    tau: float
    n: int
    L: float
    H_waves: float
    n_loc: float
    iterations: object            # int, or "limit" when the cap was hit
    converged: bool
    CS: int
    CS_loc: float
    relres_final: float
    setup: dict = field(default_factory=dict)

    def csv_row(self) -> str:
        tau = "" if self.method == "one_level" else f"{self.tau:.12g}"
        return (f"{self.k:.12g},{self.N},{self.method},{tau},{self.n},"
                f"{self.L:.12g},{self.H_waves:.12g},{self.n_loc:.12g},"
                f"{self.iterations},{str(self.converged).lower()},{self.CS},"
                f"{self.CS_loc:.12g},{self.relres_final:.12g}")


def estimate_memory_gb(n_dof: int, maxit: int) -> float:
    # LU fill + Krylov basis; calibrated so the kh=0.1 grid passes up to
    # k ~ 60 while the million-dof k=100 runs need an explicit opt-in
    return 8.5e-6 * n_dof + 1.6e-8 * n_dof * maxit


class _Instance:
    """Assembled mesh/system/layout shared across methods and thresholds."""

    def __init__(self, config: RunConfig):
        n_cells = config.resolved_n_cells()
        if config.medium == "layered" and n_cells % 10 != 0:
            warnings.warn(
                f"n_cells={n_cells} is not a multiple of 10; coefficient "
                "layers are not element-aligned (centroid sampling applies)")
        self.mesh = build_unit_square_mesh(n_cells)
        coeff = (assembly.CoefficientField()
                 if config.medium == "homogeneous"
                 else assembly.CoefficientField("layered", config.a_max))
        self.fesys = assembly.assemble_system(self.mesh, coeff, config.k)
        self.fesys.rhs = assembly.assemble_gaussian_source(self.mesh)
        px = int(round(np.sqrt(config.N)))
        owner = decomp.partition_uniform(self.mesh, px, px)
        self.layout = decomp.add_overlap(self.mesh, owner, config.overlap_layers)
        self.eigen_cache: dict = {}


def run_single(config: RunConfig, instance: Optional[_Instance] = None) -> RunRecord:
    """Execute one configuration and return its record.

    Hitting the iteration cap is reported as ``iterations="limit"``, not an
    exception; singular factorizations and resonances propagate as
    ``NumericalError``.
    """
    config.validate()
    n_cells = config.resolved_n_cells()
    n_dof = (n_cells - 1) ** 2
    est = estimate_memory_gb(n_dof, config.maxit)
    if est > config.memory_cap_gb and not config.allow_large:
        raise ConfigError(
            f"estimated memory {est:.1f} GB exceeds the {config.memory_cap_gb:.1f} GB "
            "cap; pass allow_large to run anyway")

    if instance is None:
        instance = _Instance(config)
    fesys, layout = instance.fesys, instance.layout

    t0 = time.perf_counter()
    coarse = None
    if config.method != "one_level":
        coarse = eigencoarse.build_coarse_space(
            fesys, layout, config.method, config.tau,
            cache=instance.eigen_cache, max_modes=config.max_modes,
            workers=config.workers)
    t_coarse = time.perf_counter() - t0

    t0 = time.perf_counter()
    prec = schwarz.factorize(fesys, layout, coarse, workers=config.workers)
    t_factor = time.perf_counter() - t0

    op = schwarz.preconditioned_operator(prec, fesys)
    W = fesys.Dk if config.residual_norm == "dk" else sp.identity(fesys.n_dof, format="csr")
    t0 = time.perf_counter()
    report = krylov.gmres_weighted(op, prec.apply(fesys.rhs), W,
                                   tol=config.tol, maxit=config.maxit)
    t_solve = time.perf_counter() - t0
    report.wall_notes = {"t_coarse": t_coarse, "t_factor": t_factor,
                         "t_solve": t_solve, **prec.stats}

    wavelength = 2.0 * np.pi / config.k
    n_loc = float(np.mean([d.size for d in layout.overl_dofs]))
    iterations = report.iterations if report.converged else "limit"
    return RunRecord(
        k=config.k, N=config.N, method=config.method, tau=config.tau,
        n=fesys.n_dof, L=np.sqrt(2.0) / wavelength,
        H_waves=layout.H / wavelength, n_loc=n_loc,
        iterations=iterations, converged=report.converged,
        CS=coarse.cs if coarse is not None else 0,
        CS_loc=coarse.cs_loc if coarse is not None else 0.0,
        relres_final=float(report.residual_history[-1]),
        setup={"t_coarse": t_coarse, "t_factor": t_factor, "t_solve": t_solve,
               **prec.stats},
    )


def run_grid(base: RunConfig, ks, Ns, taus, methods, media, out_dir) -> list:
    """Cartesian-product execution with per-run isolation.

    Writes ``results.csv`` plus the plot-data companions ``it_vs_cs.csv``,
    ``it_vs_tau.csv``, ``it_vs_Hwaves.csv`` and ``cs_vs_Hwaves.csv`` into
    ``out_dir``.  One failing run records a ``failed`` row and does not
    abort the grid.
    """
    for name, lst in (("k", ks), ("N", Ns), ("method", methods), ("medium", media)):
        if not lst:
            raise ConfigError(f"grid list {name!r} is empty")
    if not taus and any(m != "one_level" for m in methods):
        raise ConfigError("grid list 'tau' is empty but two-level methods requested")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r} in grid")
    for m in media:
        if m not in MEDIA:
            raise ConfigError(f"unknown medium {m!r} in grid")
    # fail on bad or oversized configurations before any run starts
    for k in ks:
        for N in Ns:
            for medium in media:
                for method in methods:
                    for tau in ([0.0] if method == "one_level" else taus):
                        cfg = replace(base, k=k, N=N, medium=medium,
                                      method=method, tau=tau)
                        cfg.validate()
                        n_dof = (cfg.resolved_n_cells() - 1) ** 2
                        est = estimate_memory_gb(n_dof, cfg.maxit)
                        if est > cfg.memory_cap_gb and not cfg.allow_large:
                            raise ConfigError(
                                f"grid entry k={k} N={N} needs ~{est:.1f} GB "
                                "(over the cap); pass allow_large")

    records = []
    for k in ks:
        for N in Ns:
            for medium in media:
                instance = None
                for method in methods:
                    tau_list = [0.0] if method == "one_level" else taus
                    for tau in tau_list:
                        config = replace(base, k=k, N=N, medium=medium,
                                         method=method, tau=tau)
                        config.validate()
                        if instance is None:
                            instance = _Instance(config)
                        try:
                            records.append(run_single(config, instance))
                        except NumericalError as exc:
                            warnings.warn(f"run {method} k={k} N={N} tau={tau} "
                                          f"failed: {exc}")
                            wavelength = 2.0 * np.pi / k
                            records.append(RunRecord(
                                k=k, N=N, method=method, tau=tau,
                                n=instance.fesys.n_dof,
                                L=np.sqrt(2.0) / wavelength,
                                H_waves=instance.layout.H / wavelength,
                                n_loc=float(np.mean([d.size for d in
                                                     instance.layout.overl_dofs])),
                                iterations="failed", converged=False,
                                CS=0, CS_loc=0.0, relres_final=np.nan))
                del instance

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_results_csv(out_dir / "results.csv", records)
    _write_companion(out_dir / "it_vs_cs.csv", records,
                     "k,N,method,tau,CS,iterations",
                     lambda r: f"{r.k:.12g},{r.N},{r.method},{r.tau:.12g},"
                               f"{r.CS},{r.iterations}")
    _write_companion(out_dir / "it_vs_tau.csv", records,
                     "k,N,method,tau,iterations",
                     lambda r: f"{r.k:.12g},{r.N},{r.method},{r.tau:.12g},"
                               f"{r.iterations}")
    _write_companion(out_dir / "it_vs_Hwaves.csv", records,
                     "k,N,method,tau,H_waves,iterations",
                     lambda r: f"{r.k:.12g},{r.N},{r.method},{r.tau:.12g},"
                               f"{r.H_waves:.12g},{r.iterations}")
    _write_companion(out_dir / "cs_vs_Hwaves.csv", records,
                     "k,N,method,tau,H_waves,CS",
                     lambda r: f"{r.k:.12g},{r.N},{r.method},{r.tau:.12g},"
                               f"{r.H_waves:.12g},{r.CS}")
    return records


def _write_results_csv(path, records):
    lines = [SCHEMA_TAG, CSV_HEADER] + [r.csv_row() for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def _write_companion(path, records, header, row_of):
    lines = [SCHEMA_TAG, header] + [row_of(r) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def diagnose(config: RunConfig, out_dir=None):
    """Theory constants, measured FoV bounds and the lemma ledger for one instance.

    Returns ``(report, ledger_rows)``; when ``out_dir`` is given, writes
    ``theory.csv`` and ``lemma_ledger.csv`` there.  Fields that need the
    dense path are left blank above its size cap.
    """
    config.validate()
    instance = _Instance(config)
    fesys, layout = instance.fesys, instance.layout

    coarse = None
    if config.method != "one_level":
        coarse = eigencoarse.build_coarse_space(
            fesys, layout, config.method, config.tau,
            cache=instance.eigen_cache, max_modes=config.max_modes,
            workers=config.workers)
    prec = schwarz.factorize(fesys, layout, coarse, workers=config.workers)

    c_stab = (theory.estimate_cstab(fesys)
              if fesys.n_dof <= theory.DENSE_CAP else None)
    theta_eff = coarse.theta if coarse is not None else 0.0
    if c_stab is not None:
        report = theory.theory_constants(c_stab, layout.Lambda,
                                         max(theta_eff, 0.0), layout.H, config.k)
    else:
        report = theory.TheoryReport(
            C_stab=np.nan, Lambda=layout.Lambda, Theta=theta_eff, H=layout.H,
            k=config.k, s=np.nan, t=np.nan, c1=np.nan, c2=18 + 8 * layout.Lambda ** 2,
            notes=theory.DOMAIN_NOTE + "; C_stab blank above dense cap")
    report.theta_threshold = (1.0 / config.tau
                              if config.method != "one_level" else None)

    if fesys.n_dof <= theory.DENSE_CAP:
        report.delta, report.beta = theory.fov_bounds(prec, fesys)

    rows = []
    if coarse is not None and coarse.variant == "delta_k":
        rows = theory.verify_lemmas(fesys, layout, coarse,
                                    samples=50, seed=config.seed,
                                    cache=instance.eigen_cache)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "theory.csv").write_text(
            report.csv_header() + "\n" + report.csv_row() + "\n")
        if rows:
            (out_dir / "lemma_ledger.csv").write_text(theory.ledger_csv(rows))
    return report, rows


# ---------------------------------------------------------------------------
# command-line interface
# ---------------------------------------------------------------------------

_FLOAT_KEYS = ("k", "tau", "kh_target", "a_max", "tol", "memory_cap_gb")
_INT_KEYS = ("N", "n_cells", "overlap_layers", "maxit", "seed", "max_modes",
             "workers")
_BOOL_KEYS = ("allow_large",)
_STR_KEYS = ("method", "medium", "residual_norm", "out")


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file; flags override it")
    for key in _FLOAT_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", type=float, default=None)
    for key in _INT_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", type=int, default=None)
    for key in _BOOL_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", action="store_true",
                       default=None)
    for key in _STR_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", default=None)


def _config_from_args(args, section: str) -> RunConfig:
    values = {}
    if args.config:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keys are case-sensitive (N vs n_cells)
        read = parser.read(args.config)
        if not read:
            raise ConfigError(f"config file {args.config!r} not found")
        if parser.has_section(section):
            values.update(dict(parser.items(section)))
        else:
            values.update(dict(parser.defaults()))
    # typed conversion of file values
    converted = {}
    for key, raw in values.items():
        if key in _FLOAT_KEYS:
            converted[key] = float(raw)
        elif key in _INT_KEYS:
            converted[key] = int(raw)
        elif key in _BOOL_KEYS:
            converted[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif key in _STR_KEYS:
            converted[key] = raw
        elif key in ("k_list", "n_list", "tau_list", "methods", "media"):
            converted[key] = raw
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key in _FLOAT_KEYS + _INT_KEYS + _BOOL_KEYS + _STR_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            converted[key] = flag
    lists = {k: converted.pop(k) for k in ("k_list", "n_list", "tau_list",
                                           "methods", "media") if k in converted}
    try:
        config = RunConfig(**converted)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config, lists


def _parse_list(text, conv):
    if text is None or not str(text).strip():
        return []
    return [conv(tok) for tok in str(text).split(",") if tok.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="helmdd",
        description="Two-level Schwarz workbench for the Helmholtz equation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration")
    _add_config_flags(p_run)

    p_grid = sub.add_parser("grid", help="run a cartesian grid of configurations")
    _add_config_flags(p_grid)
    p_grid.add_argument("--k-list", default=None, help="comma-separated wavenumbers")
    p_grid.add_argument("--n-list", default=None, help="comma-separated N values")
    p_grid.add_argument("--tau-list", default=None, help="comma-separated thresholds")
    p_grid.add_argument("--methods", default=None, help="comma-separated methods")
    p_grid.add_argument("--media", default=None, help="comma-separated media")

    p_diag = sub.add_parser("diagnose", help="theory constants and lemma ledger")
    _add_config_flags(p_diag)

    p_mesh = sub.add_parser("dump-mesh", help="write the mesh in plain text")
    p_mesh.add_argument("--n-cells", type=int, required=True)
    p_mesh.add_argument("--out", required=True)

    p_eigs = sub.add_parser("dump-eigs", help="write the local eigenvalue report")
    _add_config_flags(p_eigs)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    if args.command == "dump-mesh":
        if args.n_cells < 2:
            raise ConfigError("n_cells must be >= 2")
        Path(args.out).write_text(dump_mesh(build_unit_square_mesh(args.n_cells)))
        return 0

    config, lists = _config_from_args(args, args.command.replace("-", "_"))

    if args.command == "run":
        record = run_single(config)
        text = SCHEMA_TAG + "\n" + CSV_HEADER + "\n" + record.csv_row() + "\n"
        if config.out:
            Path(config.out).write_text(text)
        print(text, end="")
        return 0

    if args.command == "grid":
        ks = _parse_list(getattr(args, "k_list", None) or lists.get("k_list"), float)
        Ns = _parse_list(getattr(args, "n_list", None) or lists.get("n_list"), int)
        taus = _parse_list(getattr(args, "tau_list", None) or lists.get("tau_list"), float)
        methods = _parse_list(getattr(args, "methods", None) or lists.get("methods"), str)
        media = _parse_list(getattr(args, "media", None) or lists.get("media"), str)
        if not ks:
            ks = [config.k]
        if not Ns:
            Ns = [config.N]
        if not taus:
            taus = [config.tau]
        if not media:
            media = [config.medium]
        if not methods:
            raise ConfigError("grid requires a non-empty --methods list")
        out_dir = config.out or "grid_results"
        run_grid(config, ks, Ns, taus, methods, media, out_dir)
        print(f"grid results written to {out_dir}")
        return 0

    if args.command == "diagnose":
        out_dir = config.out or "diagnose_results"
        report, rows = diagnose(config, out_dir)
        print(report.csv_header())
        print(report.csv_row())
        failed = [r for r in rows if r.status == "fail"]
        print(f"lemma ledger: {len(rows)} checks, {len(failed)} failed "
              f"(written to {out_dir})")
        return 0

    if args.command == "dump-eigs":
        if config.method == "one_level":
            raise ConfigError("dump-eigs requires a two-level method")
        instance = _Instance(config)
        coarse = eigencoarse.build_coarse_space(
            instance.fesys, instance.layout, config.method, config.tau,
            cache=instance.eigen_cache, max_modes=config.max_modes,
            workers=config.workers)
        text = eigencoarse.eig_report_csv(coarse)
        if config.out:
            Path(config.out).write_text(text)
        print(text, end="")
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


def cli_entry():
    sys.exit(main())


if __name__ == "__main__":
    cli_entry()
