"""helmdd: two-level overlapping Schwarz preconditioners with spectral coarse
spaces for the heterogeneous Helmholtz equation, plus the theory-side
diagnostics that certify their convergence behaviour at desk scale."""

from .assembly import (CoefficientField, FeSystem, assemble_gaussian_source,
                       assemble_mass, assemble_stiffness, assemble_system,
                       dump_matrix, manufactured_rhs)
from .decomp import (DecompLayout, add_overlap, apply_pou, extend_by_zero,
                     layout_summary_csv, partition_uniform, restrict_to_local,
                     restrict_to_overl)
from .eigencoarse import (CoarseSpace, LocalModes, LocalPencil,
                          build_coarse_space, build_local_pencil,
                          eig_report_csv, local_neumann_matrices,
                          solve_local_eigenproblem, theta_of)
from .krylov import KrylovReport, gmres_weighted, history_csv, wnorm
from .mesh import (TriMesh, build_unit_square_mesh, dump_mesh,
                   interior_dof_maps, mesh_for_wavenumber)
from .schwarz import (SchwarzPreconditioner, factorize, preconditioned_operator)
from .theory import (LedgerRow, TheoryReport, elman_violation, estimate_cstab,
                     fov_bounds, fov_bounds_sampled, independent_t_apply,
                     ledger_csv, theory_constants, verify_lemmas)
from .bench import RunConfig, RunRecord, diagnose, run_grid, run_single

__version__ = "0.1.0"
