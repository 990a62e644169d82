"""Meshes and Helmholtz matrices on the unit square.

Builds the alternating-diagonal triangulation, picks the resolution from the
pollution rule k*h <= 0.1, and assembles the four matrices of one instance:
stiffness A, mass S, the indefinite B = A - k^2 S and the k-weighted Gram
Dk = A + k^2 S.
"""

import numpy as np

import helmdd as H

k = 12.0
n_cells = H.mesh_for_wavenumber(k, kh_target=0.1)
print(f"wavenumber k = {k}: resolution rule gives n_cells = {n_cells} "
      f"(h = {1.0/n_cells:.4g}, kh = {k/n_cells:.3g})")

mesh = H.build_unit_square_mesh(n_cells)
print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
      f"{int(mesh.boundary_mask.sum())} boundary nodes")

pts = mesh.nodes[mesh.triangles]
areas = 0.5 * ((pts[:, 1, 0] - pts[:, 0, 0]) * (pts[:, 2, 1] - pts[:, 0, 1])
               - (pts[:, 2, 0] - pts[:, 0, 0]) * (pts[:, 1, 1] - pts[:, 0, 1]))
print(f"triangle areas: all equal h^2/2 = {mesh.h**2/2:.4g}, "
      f"sum = {areas.sum():.15f}")

for coeff in (H.CoefficientField(), H.CoefficientField("layered", 10.0)):
    fes = H.assemble_system(mesh, coeff, k)
    eigs = np.linalg.eigvalsh(fes.B[:200, :200].toarray())
    print(f"\ncoefficient {coeff.kind}: {fes.n_dof} interior dofs, "
          f"nnz(B) = {fes.B.nnz}")
    print(f"  leading principal block of B has eigenvalues in "
          f"[{eigs[0]:.3g}, {eigs[-1]:.3g}] (indefinite for moderate k)")

fes = H.assemble_system(mesh, H.CoefficientField(), k)
rhs = H.assemble_gaussian_source(mesh)
print(f"\nGaussian point-source load: total mass "
      f"{H.assemble_gaussian_source(mesh, keep_boundary=True).sum():.4f} "
      f"(analytic value 10*pi = {10*np.pi:.4f})")

print("\ncoordinate dump of the first rows of A:")
print("\n".join(H.dump_matrix(fes.A[:2, :]).splitlines()[:6]))
