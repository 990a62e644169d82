import numpy as np
import pytest

import helmdd as H


@pytest.fixture(scope="session")
def mesh8():
    return H.build_unit_square_mesh(8)


@pytest.fixture(scope="session")
def small_instance(mesh8):
    """n_cells=8, k=5, N=4, overlap 1: the workhorse for algebraic checks."""
    fesys = H.assemble_system(mesh8, H.CoefficientField(), k=5.0)
    fesys.rhs = H.assemble_gaussian_source(mesh8)
    owner = H.partition_uniform(mesh8, 2, 2)
    layout = H.add_overlap(mesh8, owner, 1)
    return fesys, layout


@pytest.fixture(scope="session")
def small_two_level(small_instance):
    fesys, layout = small_instance
    cache = {}
    coarse = H.build_coarse_space(fesys, layout, "delta_k", 0.5, cache=cache)
    prec = H.factorize(fesys, layout, coarse)
    return fesys, layout, coarse, prec, cache


def dense_matrix(op, n):
    """Probe a linear operator into a dense matrix, one unit vector at a time."""
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(op(e))
    return np.column_stack(cols)
