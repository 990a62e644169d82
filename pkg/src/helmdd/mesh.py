"""Structured P1 triangulations of the unit square.

The mesh is a Cartesian grid of ``n_cells`` x ``n_cells`` squares, each split
into two triangles along a diagonal whose direction alternates in a
checkerboard pattern.  Node ordering is row-major (y outer, x inner) and the
whole construction is deterministic, so two builds with the same ``n_cells``
are bit-identical.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TriMesh",
    "build_unit_square_mesh",
    "mesh_for_wavenumber",
    "interior_dof_maps",
    "dump_mesh",
]


@dataclass(frozen=True)
class TriMesh:
    """Triangulation of the unit square.

    Attributes
    ----------
    n_cells : grid cells per side.
    nodes : (n_nodes, 2) float array of coordinates in [0, 1]^2.
    triangles : (n_tri, 3) int array of node indices, positively oriented.
    boundary_mask : (n_nodes,) bool array, True for nodes on the boundary.
    h : mesh spacing, 1 / n_cells.
    """

    n_cells: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray
    h: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def build_unit_square_mesh(n_cells: int) -> TriMesh:
    """Build the alternating-diagonal triangulation of the unit square.

    Cell (i, j) is split along its lower-left/upper-right diagonal when
    i + j is even, and along the other diagonal when i + j is odd.  This
    checkerboard convention makes the mesh symmetric under a 180-degree
    rotation about the domain center, where the benchmark source sits.

    Parameters
    ----------
    n_cells : number of grid cells per side, at least 2.
    """
    if n_cells < 2:
        raise ValueError(f"n_cells must be >= 2, got {n_cells}")
    n = int(n_cells)
    h = 1.0 / n

    side = np.arange(n + 1) * h
    xg, yg = np.meshgrid(side, side, indexing="xy")
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    ll = jj * (n + 1) + ii
    lr = ll + 1
    ul = ll + (n + 1)
    ur = ul + 1

    even = (ii + jj) % 2 == 0
    t0 = np.where(even[:, None], np.column_stack([ll, lr, ur]),
                  np.column_stack([ll, lr, ul]))
    t1 = np.where(even[:, None], np.column_stack([ll, ur, ul]),
                  np.column_stack([lr, ur, ul]))
    # interleave so triangles stay cell-major: 2 per cell, deterministic
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = t0
    triangles[1::2] = t1

    ix = np.tile(np.arange(n + 1), n + 1)
    iy = np.repeat(np.arange(n + 1), n + 1)
    boundary = (ix == 0) | (ix == n) | (iy == 0) | (iy == n)

    nodes.setflags(write=False)
    triangles.setflags(write=False)
    boundary.setflags(write=False)
    return TriMesh(n_cells=n, nodes=nodes, triangles=triangles,
                   boundary_mask=boundary, h=h)


def mesh_for_wavenumber(k: float, kh_target: float) -> int:
    """Smallest ``n_cells`` such that ``k * (1/n_cells) <= kh_target``.

    A relative slack of 1e-12 absorbs floating-point noise so that exact
    ratios (k=20, kh_target=0.1 -> 200) resolve to the intended cell count.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if not 0 < kh_target <= 1:
        raise ValueError(f"kh_target must be in (0, 1], got {kh_target}")
    n = max(2, int(np.ceil(k / kh_target - 1e-12)))
    while k / n > kh_target * (1 + 1e-12):
        n += 1
    return n


def interior_dof_maps(mesh: TriMesh):
    """Map between interior degrees of freedom and mesh nodes.

    Returns
    -------
    interior_nodes : (n_dof,) int array, dof index -> node index.
    node_to_dof : (n_nodes,) int array, node index -> dof index (-1 on the
        boundary).
    """
    interior_nodes = np.flatnonzero(~mesh.boundary_mask)
    node_to_dof = np.full(mesh.n_nodes, -1, dtype=np.int64)
    node_to_dof[interior_nodes] = np.arange(interior_nodes.size)
    return interior_nodes, node_to_dof


def dump_mesh(mesh: TriMesh) -> str:
    """Plain-text mesh dump for debugging.

    Format: header line ``n_cells h``, then one ``x y boundary_flag`` line
    per node, then one ``i j k`` line per triangle.
    """
    lines = [f"{mesh.n_cells} {mesh.h:.17g}"]
    for (x, y), b in zip(mesh.nodes, mesh.boundary_mask):
        lines.append(f"{x:.17g} {y:.17g} {int(b)}")
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    return "\n".join(lines) + "\n"
