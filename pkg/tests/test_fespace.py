import numpy as np
import pytest

from errors import FESpaceError
from fespace import FESpace, Family, evaluate_fe, reference_element, weight_basis
from mesh import named_boundary
from polyform import PolyForm, exterior_derivative, wedge
from quadrature import difference, lp_norm


def barycentric_point(mesh, t, rng):
    lam = rng.dirichlet(np.ones(mesh.n + 1))
    return lam @ mesh.vertices[list(mesh.simplex(t).vertex_ids)]


@pytest.mark.parametrize("mesh_name, family, r, k, expected", [
    ("triangle", "Pminus", 1, 1, 3),
    ("square", "P", 1, 0, 4),
    ("tetrahedron", "Pminus", 1, 2, 4),
    ("triangle", "P", 1, 1, 6),
    ("square", "Pminus", 1, 1, 5),
    ("triangle", "P", 2, 0, 6),
    ("tetrahedron", "Pminus", 1, 1, 6),
])
def test_space_dimensions(request, mesh_name, family, r, k, expected):
    space = FESpace(request.getfixturevalue(mesh_name), family, r, k)
    assert space.dim == expected
    assert space.num_active == expected


def test_family_normalization(triangle):
    scalar = FESpace(triangle, "Pminus", 2, 0)
    assert scalar.family is Family.FULL and scalar.r == 2
    top = FESpace(triangle, "P", 1, 2)
    assert top.family is Family.TRIMMED and top.r == 2
    assert top.dim == 3


def test_invalid_parameters(triangle):
    with pytest.raises(FESpaceError):
        FESpace(triangle, "P", 1, 3)
    with pytest.raises(FESpaceError):
        FESpace(triangle, "P", 0, 1)
    with pytest.raises(FESpaceError):
        FESpace(triangle, "Q", 1, 1)


def test_dof_functionals(triangle):
    ned = FESpace(triangle, "Pminus", 1, 1)
    edge = triangle.find([0, 1])
    functionals = ned.dof_functionals(edge)
    assert len(functionals) == 1
    assert functionals[0].weight.allclose(PolyForm.monomial(1, 0, (0,), ()))
    assert ned.dof_functionals(triangle.find([0])) == []
    lagrange2 = FESpace(triangle, "P", 2, 0)
    assert len(lagrange2.dof_functionals(edge)) == 1
    assert weight_basis(Family.FULL, 1, 1, 0) == ()


@pytest.mark.parametrize("family, r, k, n", [
    (Family.FULL, 1, 0, 2), (Family.FULL, 2, 1, 2), (Family.TRIMMED, 2, 1, 2), (Family.TRIMMED, 3, 2, 2),
    (Family.TRIMMED, 1, 2, 3), (Family.FULL, 1, 1, 3), (Family.TRIMMED, 2, 1, 3), (Family.FULL, 2, 0, 3),
])
def test_reference_dual_basis_is_biorthogonal(family, r, k, n):
    element = reference_element(family, r, k, n)
    gram = element.dof_matrix(r) @ element.dual.T
    assert np.abs(gram - np.eye(element.nloc)).max() <= 1e-10
    assert element.condition < 1e12


def test_whitney_forms_are_the_edge_shape_functions():
    element = reference_element(Family.TRIMMED, 1, 1, 2)
    lam = [PolyForm.monomial(2, 0, (0, 0), (), r=1) - PolyForm.monomial(2, 0, (1, 0), ())
           - PolyForm.monomial(2, 0, (0, 1), ()),
           PolyForm.monomial(2, 0, (1, 0), ()), PolyForm.monomial(2, 0, (0, 1), ())]
    for l, (face, _) in enumerate(element.local_dofs):
        i, j = face
        whitney = wedge(lam[i], exterior_derivative(lam[j])) - wedge(lam[j], exterior_derivative(lam[i]))
        assert (element.dual_form(l) - whitney).max_abs() <= 1e-10


def test_hat_functions_are_barycentric():
    element = reference_element(Family.FULL, 1, 0, 2)
    expected = [PolyForm.monomial(2, 0, (0, 0), (), r=1) - PolyForm.monomial(2, 0, (1, 0), ())
                - PolyForm.monomial(2, 0, (0, 1), ()),
                PolyForm.monomial(2, 0, (1, 0), ()), PolyForm.monomial(2, 0, (0, 1), ())]
    for l, lam in enumerate(expected):
        assert (element.dual_form(l) - lam).max_abs() <= 1e-10


def test_local_dual_basis_against_functionals(square):
    space = FESpace(square, "P", 2, 1)
    t = square.cell_ids[1]
    dual = space.local_dual_basis(t)
    for s in square.all_subsimplices(t):
        for f in space.dof_functionals(s):
            for key, psi in dual.items():
                expected = 1.0 if key == (f.simplex_id, f.index) else 0.0
                assert space.apply_dof(f, psi, t) == pytest.approx(expected, abs=1e-10)


def test_apply_dof_is_linear(triangle, rng):
    space = FESpace(triangle, "Pminus", 2, 1)
    t = triangle.cell_ids[0]
    a = space.element.combine(rng.uniform(-1, 1, space.element.nloc))
    f = space.dof_functionals(triangle.find([1, 2]))[0]
    assert space.apply_dof(f, a * 2.0, t) == pytest.approx(2 * space.apply_dof(f, a, t))


def test_hat_function_support(square_fine):
    space = FESpace(square_fine, "P", 1, 0)
    center = next(v for v in square_fine.simplices_by_dim[0]
                  if np.allclose(square_fine.vertices[v.id], [0.5, 0.5]))
    hat = space.global_shape_function(center.id, 0)
    star = set(square_fine.cells_containing(center))
    for t in square_fine.cell_ids:
        if t in star:
            assert evaluate_fe(space, hat, t, [0.5, 0.5])[0] == pytest.approx(1.0)
        else:
            assert hat.local_form(t).max_abs() <= 1e-12


def test_edge_shape_function_locality(square_fine):
    space = FESpace(square_fine, "Pminus", 1, 1)
    edge = square_fine.simplices_by_dim[1][3]
    phi = space.global_shape_function(edge.id, 0)
    for t in square_fine.cells_containing(edge):
        for s in square_fine.subsimplices(t, 1):
            if s.id != edge.id:
                assert phi.trace_on(t, s.id).max_abs() <= 1e-11


@pytest.mark.parametrize("mesh_name, family, r, k", [
    ("square_fine", "P", 2, 1), ("square_fine", "Pminus", 2, 1), ("square_fine", "P", 2, 0),
    ("kuhn", "Pminus", 1, 2), ("kuhn", "P", 1, 1),
])
def test_random_members_are_conforming(request, rng, mesh_name, family, r, k):
    mesh = request.getfixturevalue(mesh_name)
    space = FESpace(mesh, family, r, k)
    u = space.random_member(rng)
    for f in mesh.simplices_by_dim[mesh.n - 1]:
        cells = mesh.cells_containing(f)
        if len(cells) == 2:
            jump = u.trace_on(cells[0], f.id) - u.trace_on(cells[1], f.id)
            assert jump.max_abs() <= 1e-10


@pytest.mark.parametrize("family, r, k", [("P", 1, 1), ("Pminus", 2, 1), ("P", 2, 0), ("Pminus", 1, 2)])
def test_dof_values_recover_coefficients(square_fine, rng, family, r, k):
    space = FESpace(square_fine, family, r, k)
    u = space.random_member(rng)
    assert np.abs(space.dof_values(u) - u.global_values()).max() <= 1e-9


@pytest.mark.parametrize("mesh_name, family, r, k, degree", [
    ("square_fine", "P", 2, 1, 2), ("square_fine", "Pminus", 2, 1, 1), ("square_fine", "P", 1, 0, 1),
    ("kuhn", "Pminus", 1, 2, 0), ("kuhn", "P", 1, 1, 1),
])
def test_interpolation_reproduces_polynomials(request, rng, poly_field, mesh_name, family, r, k, degree):
    mesh = request.getfixturevalue(mesh_name)
    space = FESpace(mesh, family, r, k)
    field = poly_field(mesh.n, k, degree, seed=3)
    u = space.interpolate(field)
    assert lp_norm(difference(field, u), mesh.cell_charts(), 2) <= 1e-10
    for _ in range(20):
        t = mesh.cell_ids[int(rng.integers(mesh.num_cells))]
        x = barycentric_point(mesh, t, rng)
        assert np.allclose(evaluate_fe(space, u, t, x), field.values(x)[0], atol=1e-10)


def test_zero_function(square):
    space = FESpace(square, "P", 2, 1)
    u = space.zero()
    assert all(v == 0.0 for v in evaluate_fe(space, u, square.cell_ids[0], [0.6, 0.2]))


def test_boundary_mask(square):
    everything = FESpace(square, "P", 1, 0, named_boundary(square, "all"))
    assert everything.dim == 4 and everything.num_active == 0
    bottom = FESpace(square, "P", 1, 0, named_boundary(square, "bottom"))
    assert bottom.num_active == 2
    with pytest.raises(FESpaceError, match="inativo"):
        bottom.global_shape_function(0, 0)
    edges = FESpace(square, "Pminus", 1, 1, named_boundary(square, "bottom"))
    assert edges.num_active == 4


def test_boundary_dofs_stay_zero(square_fine, rng):
    space = FESpace(square_fine, "Pminus", 2, 1, named_boundary(square_fine, "all"))
    u = space.random_member(rng)
    for f in space.boundary.facet_ids:
        t = square_fine.cells_containing(f)[0]
        assert u.trace_on(t, f).max_abs() <= 1e-11


def test_function_errors(square, triangle):
    space = FESpace(square, "P", 1, 0)
    other = FESpace(square, "P", 1, 0)
    with pytest.raises(FESpaceError):
        space.zero() + other.zero()
    with pytest.raises(FESpaceError):
        space.from_global(np.zeros(3))
    with pytest.raises(FESpaceError):
        evaluate_fe(space, space.zero(), square.cell_ids[0], [0.1, 0.9])
    with pytest.raises(FESpaceError):
        space.dof_index(square.find([0, 1]).id, 0)
    with pytest.raises(FESpaceError):
        space.cell_row(0)


ASSEMBLED = [
    pytest.param(family, r, k, n, marks=[pytest.mark.slow] if n == 3 and r == 3 else [])
    for n in (2, 3) for family in ("P", "Pminus") for r in (1, 2, 3) for k in range(n + 1)
]


@pytest.mark.parametrize("family, r, k, n", ASSEMBLED)
def test_assembled_shape_functions_are_biorthogonal(request, family, r, k, n):
    mesh = request.getfixturevalue("square" if n == 2 else "kuhn")
    space = FESpace(mesh, family, r, k)
    duality = np.zeros((space.dim, space.dim))
    for g, (sid, i) in enumerate(space.dofs):
        phi = space.global_shape_function(sid, i)
        duality[g] = space.dof_values(phi)
        star = set(mesh.cells_containing(sid))
        for t in mesh.cell_ids:
            if t not in star:
                assert phi.local_form(t).max_abs() <= 1e-12
    assert np.abs(duality - np.eye(space.dim)).max() <= 1e-9
