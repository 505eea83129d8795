import numpy as np
import pytest
import scipy.sparse as sp

from app.services.assembly_service import (
    assemble_load, assemble_matrix, assemble_vector, build_discrete_space, build_dof_map,
    extend, restrict,
)
from app.services.manufactured_service import dof_interpolate
from app.services.mesh_service import generate_structured
from app.services.solver_service import solve_linear
from app.services.study_service import make_mesh
from app.services.vem_local_service import (
    local_coupling_b, local_load, local_mass, local_matrices, local_projected_mass, local_stiffness,
)
from tests.test_vem_local import _p1_triangle


@pytest.fixture(scope="module")
def spaces():
    return {
        (kind, k): build_discrete_space(make_mesh(kind, 4, rng_seed=7), k)
        for kind in ("square", "voronoi", "nonconvex")
        for k in (1, 2)
    }


# ───────────────────────── numeración ─────────────────────────
def test_dof_map_counts_on_square_grid():
    mesh = generate_structured("square", 2)
    linear = build_dof_map(mesh, 1)
    assert (linear.n_dofs, linear.n_free) == (9, 1)

    quad = build_dof_map(mesh, 2)
    assert (quad.n_vertex_dofs, quad.n_edge_dofs, quad.n_internal_dofs) == (9, 12, 4)
    assert quad.n_dofs == 25
    assert quad.n_free == 1 + 4 + 4
    assert all(len(d) == 9 for d in quad.element_dofs)


def test_shared_edges_share_a_dof():
    mesh = generate_structured("square", 2)
    dof_map = build_dof_map(mesh, 2)
    edge_dofs = np.concatenate([d[4:8] for d in dof_map.element_dofs])
    counts = np.bincount(edge_dofs - dof_map.n_vertex_dofs)
    assert sorted(counts) == [1] * 8 + [2] * 4


def test_free_index_inverts_free_dofs():
    dof_map = build_dof_map(generate_structured("mixed", 3), 2)
    index = dof_map.free_index()
    assert np.array_equal(index[dof_map.free_dofs], np.arange(dof_map.n_free))
    assert np.all(index[dof_map.dirichlet_mask] == -1)


# ───────────────────────── ensamblado ─────────────────────────
def test_triangle_mesh_reproduces_p1_finite_elements():
    mesh = generate_structured("triangle", 4)
    space = build_discrete_space(mesh, 1)
    n = mesh.n_vertices
    K = np.zeros((n, n))
    Mref = np.zeros((n, n))
    for cell in mesh.elements:
        _, _, stiffness, mass = _p1_triangle(mesh.vertices[list(cell)])
        K[np.ix_(cell, cell)] += stiffness
        Mref[np.ix_(cell, cell)] += mass
    assert np.allclose(space.stiffness.toarray(), K, atol=1e-12)
    assert np.allclose(space.mass.toarray(), Mref, atol=1e-13)


@pytest.mark.parametrize("key", [("square", 1), ("voronoi", 2), ("nonconvex", 2)])
def test_global_matrices(spaces, key):
    space = spaces[key]
    ones = np.ones(space.n_dofs)
    A = space.stiffness
    assert abs(A - A.T).max() < 1e-12
    assert np.abs(A @ ones).max() < 1e-10
    assert ones @ (space.mass @ ones) == pytest.approx(1.0, abs=1e-12)
    assert ones @ (space.projected_mass @ ones) == pytest.approx(1.0, abs=1e-12)
    assert space.quad_weights.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("key", [("voronoi", 1), ("nonconvex", 2)])
def test_global_operators_scatter_the_local_bundles(spaces, key):
    space = spaces[key]
    bundles = [local_matrices(s) for s in space.spaces]
    for e, s in enumerate(space.spaces):
        assert np.array_equal(bundles[e].A, local_stiffness(s))
        assert np.array_equal(bundles[e].M_km1, local_projected_mass(s))
    expected = assemble_matrix(space.dof_map, lambda e: local_stiffness(space.spaces[e]))
    assert abs(space.stiffness - expected).max() < 1e-14
    expected = assemble_matrix(space.dof_map, lambda e: local_mass(space.spaces[e]))
    assert abs(space.mass - expected).max() < 1e-14
    expected = assemble_matrix(space.dof_map, lambda e: local_projected_mass(space.spaces[e]))
    assert abs(space.projected_mass - expected).max() < 1e-14


def test_assemble_matrix_rejects_wrong_shapes():
    dof_map = build_dof_map(generate_structured("square", 2), 1)
    with pytest.raises(IndexError):
        assemble_matrix(dof_map, lambda e: np.eye(3))


def test_restrict_and_extend(spaces):
    space = spaces[("square", 2)]
    dof_map = space.dof_map
    rhs = np.arange(space.n_dofs, dtype=float)
    system = restrict(dof_map, space.stiffness, rhs)
    assert system.size == dof_map.n_free
    assert np.array_equal(system.rhs, rhs[dof_map.free_dofs])

    full = extend(dof_map, np.ones(dof_map.n_free))
    assert np.all(full[dof_map.dirichlet_mask] == 0.0)
    assert np.all(full[dof_map.free_dofs] == 1.0)
    assert restrict(dof_map, space.mass).rhs.shape == (dof_map.n_free,)


@pytest.mark.parametrize("key", [("square", 1), ("voronoi", 1), ("nonconvex", 2)])
def test_coupling_operator_matches_local_assembly(spaces, key, rng):
    space = spaces[key]
    dof_map = space.dof_map
    psi = rng.standard_normal(space.n_dofs)
    q = -1.0
    local = [local_coupling_b(s, psi[d], q) for s, d in zip(space.spaces, dof_map.element_dofs)]
    reference = restrict(dof_map, assemble_matrix(dof_map, lambda e: local[e])).matrix
    fast = space.coupling.matrix(psi, q)
    assert fast.shape == reference.shape
    assert abs(fast - reference).max() < 1e-12 * max(1.0, abs(reference).max())


def test_coupling_is_linear_in_potential(spaces, rng):
    op = spaces[("voronoi", 2)].coupling
    a, b = rng.standard_normal((2, spaces[("voronoi", 2)].n_dofs))
    lhs = op.matrix(2.0 * a + b, 1.0)
    rhs = 2.0 * op.matrix(a, 1.0) + op.matrix(b, 1.0)
    assert abs(lhs - rhs).max() < 1e-12


# ───────────────────────── cargas y evaluación ─────────────────────────
def test_load_matches_local_loads(spaces):
    space = spaces[("voronoi", 2)]

    def g(t, x, y):
        return np.exp(x - t) * np.cos(3 * y)

    reference = assemble_vector(space.dof_map, lambda e: local_load(space.spaces[e], g, 0.5))
    assert np.allclose(assemble_load(space, g, 0.5), reference, atol=1e-14)
    assert assemble_load(space, lambda t, x, y: 1.0, 0.0).sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("key", [("square", 1), ("voronoi", 2), ("nonconvex", 1)])
def test_point_evaluation_reproduces_linear_fields(spaces, key):
    space = spaces[key]
    u = dof_interpolate(space, lambda t, x, y: 1.0 + x - 2.0 * y, 0.0)
    x, y = space.quad_points.T
    gx, gy = space.grad_operators
    assert np.allclose(space.value_operator @ u, 1.0 + x - 2.0 * y, atol=1e-12)
    assert np.allclose(gx @ u, 1.0, atol=1e-10)
    assert np.allclose(gy @ u, -2.0, atol=1e-10)
    assert isinstance(space.value_operator, sp.csr_matrix)


@pytest.mark.parametrize(("k", "min_rate"), [(1, 1.8), (2, 2.7)])
def test_poisson_l2_rate(k, min_rate):
    def exact(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    errors = []
    for n in (8, 16):
        space = build_discrete_space(generate_structured("square", n), k)
        load = assemble_load(space, lambda t, x, y: 2.0 * np.pi ** 2 * exact(x, y), 0.0)
        system = restrict(space.dof_map, space.stiffness, load)
        u = extend(space.dof_map, solve_linear(system, symmetric=True))
        x, y = space.quad_points.T
        diff = space.value_operator @ u - exact(x, y)
        errors.append(np.sqrt(space.quad_weights @ diff ** 2))
    assert np.log2(errors[0] / errors[1]) > min_rate
