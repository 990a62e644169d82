"""Overlapping domain decomposition of the unit-square mesh.

The non-overlapping partition assigns each node to one of ``px * py``
rectangular strips; overlap is added by growing each subdomain's element set
through shared vertices, one layer per application.  From the grown element
sets the layout derives, per subdomain i:

* ``overl_dofs[i]``  - interior dofs whose basis support meets subdomain i
  (the local space on the closed subdomain),
* ``inner_dofs[i]``  - interior dofs whose basis support lies inside the
  closure of subdomain i (the zero-boundary local space),
* partition-of-unity weights 1/mu_j on the inner dofs,
* geometric statistics: bounding-box diameters H_i, H = max H_i, and the
  maximal element multiplicity Lambda.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh, interior_dof_maps

__all__ = [
    "DecompLayout",
    "partition_uniform",
    "add_overlap",
    "extend_by_zero",
    "restrict_to_local",
    "restrict_to_overl",
    "apply_pou",
    "layout_summary_csv",
]


@dataclass
class DecompLayout:
    """Dof index sets, weights and statistics of an overlapping decomposition."""

    n_subdomains: int
    owner: np.ndarray              # per mesh node, id of the non-overlapping strip
    overl_dofs: list               # per subdomain, sorted interior-dof indices
    inner_dofs: list               # per subdomain, sorted; subset of overl_dofs
    inner_pos: list                # positions of inner_dofs inside overl_dofs
    mu: np.ndarray                 # per interior dof, multiplicity
    pou: list                      # per subdomain, weights 1/mu over inner_dofs
    elements: list                 # per subdomain, sorted triangle indices
    Lambda: int                    # max number of subdomains containing one element
    Hi: np.ndarray                 # per subdomain, bounding-box diagonal
    H: float                       # max_i Hi
    overlap_layers: int
    n_dof: int

    @property
    def N(self) -> int:
        return self.n_subdomains


def partition_uniform(mesh: TriMesh, px: int, py: int) -> np.ndarray:
    """Assign each node to one of px*py rectangular strips.

    Node (x, y) is owned by strip (floor(x*px), floor(y*py)), clamped to the
    valid range; nodes exactly on an internal partition line therefore fall
    to the higher-index strip.  The returned owner id is  oy * px + ox.
    """
    if px < 1 or py < 1:
        raise ValueError(f"px, py must be >= 1, got ({px}, {py})")
    if px > mesh.n_cells or py > mesh.n_cells:
        raise ValueError(
            f"partition ({px} x {py}) exceeds the {mesh.n_cells}-cell grid; "
            "subdomains would be empty"
        )
    n = mesh.n_cells
    idx = np.rint(mesh.nodes / mesh.h).astype(np.int64)   # exact lattice indices
    ox = np.minimum(idx[:, 0] * px // n, px - 1)
    oy = np.minimum(idx[:, 1] * py // n, py - 1)
    return oy * px + ox


def add_overlap(mesh: TriMesh, owner: np.ndarray, layers: int = 1) -> DecompLayout:
    """Grow overlapping subdomains and compute the full layout.

    Each subdomain starts from the elements of the non-overlapping partition
    (an element belongs to the lowest-id strip among its vertices) and is
    extended ``layers`` times by all elements sharing a vertex with it.  One
    extension is the minimum-overlap configuration.
    """
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    owner = np.asarray(owner)
    n_sub = int(owner.max()) + 1
    tri = mesh.triangles
    interior, node_to_dof = interior_dof_maps(mesh)
    n_dof = interior.size

    elem_owner = owner[tri].min(axis=1)
    total_incident = np.bincount(tri.ravel(), minlength=mesh.n_nodes)

    overl_dofs, inner_dofs, inner_pos, pou, elements = [], [], [], [], []
    elem_mult = np.zeros(mesh.n_triangles, dtype=np.int64)
    mu = np.zeros(n_dof, dtype=np.int64)
    Hi = np.zeros(n_sub)

    node_mark = np.zeros(mesh.n_nodes, dtype=bool)
    for i in range(n_sub):
        elems = np.flatnonzero(elem_owner == i)
        if elems.size == 0:
            raise ValueError(f"subdomain {i} owns no elements")
        for _ in range(layers):
            node_mark[:] = False
            node_mark[tri[elems].ravel()] = True
            elems = np.flatnonzero(node_mark[tri].any(axis=1))
        elements.append(elems)
        elem_mult[elems] += 1

        sub_nodes = np.unique(tri[elems].ravel())
        ov = node_to_dof[sub_nodes]
        ov = np.sort(ov[ov >= 0])
        # inner dofs: every incident triangle lies inside the subdomain
        cnt_in = np.bincount(tri[elems].ravel(), minlength=mesh.n_nodes)
        inner_nodes = np.flatnonzero(cnt_in == total_incident)
        inn = node_to_dof[inner_nodes]
        inn = np.sort(inn[inn >= 0])

        overl_dofs.append(ov)
        inner_dofs.append(inn)
        inner_pos.append(np.searchsorted(ov, inn))
        mu[inn] += 1

        coords = mesh.nodes[sub_nodes]
        span = coords.max(axis=0) - coords.min(axis=0)
        Hi[i] = float(np.hypot(span[0], span[1]))

    if np.any(mu < 1):
        missing = np.flatnonzero(mu < 1)[:5]
        raise RuntimeError(
            f"partition-of-unity failure: dofs {missing.tolist()} belong to "
            "no subdomain's inner set"
        )
    for i in range(n_sub):
        pou.append(1.0 / mu[inner_dofs[i]])

    return DecompLayout(
        n_subdomains=n_sub, owner=owner,
        overl_dofs=overl_dofs, inner_dofs=inner_dofs, inner_pos=inner_pos,
        mu=mu, pou=pou, elements=elements,
        Lambda=int(elem_mult.max()), Hi=Hi, H=float(Hi.max()),
        overlap_layers=layers, n_dof=n_dof,
    )


def extend_by_zero(layout: DecompLayout, i: int, v_local: np.ndarray) -> np.ndarray:
    """Zero-extension of a vector on V_i (inner dofs) to a global vector."""
    dofs = layout.inner_dofs[i]
    v_local = np.asarray(v_local)
    if v_local.shape[0] != dofs.size:
        raise IndexError(
            f"local vector has {v_local.shape[0]} entries, V_{i} has {dofs.size} dofs"
        )
    out = np.zeros(layout.n_dof, dtype=v_local.dtype)
    out[dofs] = v_local
    return out


def restrict_to_local(layout: DecompLayout, i: int, v_global: np.ndarray) -> np.ndarray:
    """Restriction to V_i (inner dofs); the Euclidean adjoint of extend_by_zero."""
    return np.asarray(v_global)[layout.inner_dofs[i]]


def restrict_to_overl(layout: DecompLayout, i: int, v_global: np.ndarray) -> np.ndarray:
    """Restriction to the closed local space (overl dofs)."""
    return np.asarray(v_global)[layout.overl_dofs[i]]


def apply_pou(layout: DecompLayout, i: int, v_tilde: np.ndarray) -> np.ndarray:
    """Partition-of-unity weighting: Ṽ_i vector -> V_i vector.

    Multiplies entrywise by 1/mu on the inner dofs; everything supported on
    overl_dofs[i] \\ inner_dofs[i] is annihilated.
    """
    v_tilde = np.asarray(v_tilde)
    if v_tilde.shape[0] != layout.overl_dofs[i].size:
        raise IndexError(
            f"expected a vector over overl_dofs[{i}] "
            f"({layout.overl_dofs[i].size} dofs), got {v_tilde.shape[0]}"
        )
    return layout.pou[i] * v_tilde[layout.inner_pos[i]]


def layout_summary_csv(layout: DecompLayout, k: float) -> str:
    """One CSV line per subdomain: i, n_loc, n_inner, H_i, H_i_in_wavelengths."""
    wavelength = 2.0 * np.pi / k
    lines = ["i,n_loc,n_inner,H_i,H_i_in_wavelengths"]
    for i in range(layout.n_subdomains):
        lines.append(
            f"{i},{layout.overl_dofs[i].size},{layout.inner_dofs[i].size},"
            f"{layout.Hi[i]:.12g},{layout.Hi[i] / wavelength:.12g}"
        )
    return "\n".join(lines) + "\n"
