import numpy as np
import pytest
import sympy

from errors import ProjectionError
from feec_fields import X, field_from_expressions
from fespace import FESpace
from mesh import choose_representatives, mesh_sequence, named_boundary, unit_square_2, unit_square_halves
from polyform import PolyForm, basis_full, basis_trimmed, exterior_derivative
from projection import (
    Backend, averaged_taylor, broken_projection, commuting_partner, local_project_l2, local_project_taylor,
    make_weights, project, trimming_interpolation,
)
from quadrature import combine_fields, difference, lp_norm

SPACES = [("P", 1, 0), ("P", 2, 1), ("Pminus", 1, 1), ("Pminus", 2, 1), ("Pminus", 1, 2)]


def random_polyform(rng, basis):
    out = basis[0] * 0.0
    for b in basis:
        out = out + b * float(rng.uniform(-1, 1))
    return out


@pytest.mark.parametrize("family, r, k", SPACES)
@pytest.mark.parametrize("weights", ["eg", "clement"])
@pytest.mark.parametrize("backend", ["l2", "taylor"])
def test_projection_reproduces_space_members(square_fine, rng, family, r, k, weights, backend):
    space = FESpace(square_fine, family, r, k)
    u = space.random_member(rng)
    v = project(space, u, make_weights(weights, square_fine, space.boundary), backend)
    scale = max(1.0, np.abs(u.coefficients).max())
    assert np.abs(v.coefficients - u.coefficients).max() <= 1e-9 * scale


@pytest.mark.parametrize("boundary", ["all", "bottom"])
@pytest.mark.parametrize("weights", ["eg", "clement"])
def test_projection_reproduces_members_with_boundary_conditions(square_fine, rng, boundary, weights):
    space = FESpace(square_fine, "Pminus", 2, 1, named_boundary(square_fine, boundary))
    u = space.random_member(rng)
    v = project(space, u, make_weights(weights, square_fine, space.boundary), "taylor")
    assert np.abs(v.coefficients - u.coefficients).max() <= 1e-9


def test_projection_in_3d(kuhn, rng):
    space = FESpace(kuhn, "Pminus", 1, 1)
    u = space.random_member(rng)
    v = project(space, u, make_weights("eg", kuhn), "taylor")
    assert np.abs(v.coefficients - u.coefficients).max() <= 1e-9


def test_zero_field_projects_to_zero(square):
    space = FESpace(square, "P", 2, 1)
    zero = field_from_expressions("zero", 2, 1, [0, 0])
    for backend in ("l2", "taylor"):
        u = project(space, zero, make_weights("eg", square), backend)
        assert np.all(np.abs(u.coefficients) <= 1e-15)


def test_boundary_dofs_of_projection_vanish(square_fine, trig_field):
    space = FESpace(square_fine, "P", 1, 1, named_boundary(square_fine, "all"))
    u = project(space, trig_field(2, 1), make_weights("clement", square_fine, space.boundary), "l2")
    for f in space.boundary.facet_ids:
        t = square_fine.cells_containing(f)[0]
        assert u.trace_on(t, f).max_abs() <= 1e-11


@pytest.mark.parametrize("family, r, k", [("P", 1, 0), ("P", 2, 0), ("P", 2, 1), ("Pminus", 1, 1),
                                           ("Pminus", 2, 1), ("Pminus", 1, 0)])
def test_taylor_projection_commutes_with_d(square_fine, trig_field, family, r, k):
    space = FESpace(square_fine, family, r, k)
    field = trig_field(2, space.k)
    for t in square_fine.cell_ids[:4]:
        lhs = exterior_derivative(local_project_taylor(space, t, field))
        rhs = commuting_partner(space, t, field.exterior)
        assert (lhs - rhs).max_abs() <= 1e-8


def test_taylor_projection_commutes_with_d_in_3d(kuhn, trig_field):
    for family, r, k in [("Pminus", 1, 1), ("P", 1, 1), ("Pminus", 1, 2)]:
        space = FESpace(kuhn, family, r, k)
        field = trig_field(3, k)
        t = kuhn.cell_ids[2]
        lhs = exterior_derivative(local_project_taylor(space, t, field))
        rhs = commuting_partner(space, t, field.exterior)
        assert (lhs - rhs).max_abs() <= 1e-8


def test_commuting_partner_degree_check(square, trig_field):
    space = FESpace(square, "P", 1, 0)
    with pytest.raises(ProjectionError):
        commuting_partner(space, square.cell_ids[0], trig_field(2, 0))


@pytest.mark.parametrize("family, r, k, degree", [("P", 2, 1, 2), ("P", 1, 0, 1), ("Pminus", 2, 1, 1)])
def test_local_projections_reproduce_polynomials(square, poly_field, family, r, k, degree):
    space = FESpace(square, family, r, k)
    field = poly_field(2, k, degree, seed=1)
    for t in square.cell_ids:
        chart = square.chart(t)
        for piece in (local_project_taylor(space, t, field), local_project_l2(space, t, field)):
            assert lp_norm(difference(field, piece), [chart], 2) <= 1e-10


def test_averaged_taylor_reproduces_polynomials(square, poly_field):
    field = poly_field(2, 1, 2, seed=5)
    t = square.cell_ids[0]
    chart = square.chart(t)
    center = chart.to_physical(np.full((1, 2), 1 / 3))[0]
    piece = averaged_taylor(field, chart, 2, center, 0.1)
    assert lp_norm(difference(field, piece), [chart], 2) <= 1e-10
    lower = averaged_taylor(field, chart, 1, center, 0.1)
    assert lp_norm(difference(field, lower), [chart], 2) > 1e-6


def test_constant_one_form_is_exact(square):
    dx1 = field_from_expressions("dx1", 2, 1, [1, 0])
    for family, r in [("P", 1), ("Pminus", 1), ("Pminus", 2)]:
        space = FESpace(square, family, r, 1)
        u = project(space, dx1, make_weights("eg", square), "taylor")
        assert lp_norm(difference(dx1, u), square.cell_charts(), 2) <= 1e-10


def test_trimming_interpolation(rng):
    a = random_polyform(rng, basis_trimmed(2, 2, 1))
    assert (trimming_interpolation(2, 1, a) - a).max_abs() <= 1e-10
    b = random_polyform(rng, basis_full(2, 2, 0)).with_bound(3)
    assert (trimming_interpolation(2, 0, b) - b).max_abs() <= 1e-10
    for k in (0, 1):
        c = random_polyform(rng, basis_full(2, 3, k))
        lhs = exterior_derivative(trimming_interpolation(2, k, c))
        rhs = trimming_interpolation(2, k + 1, exterior_derivative(c))
        assert (lhs - rhs).max_abs() <= 1e-9


def test_trimming_interpolation_errors(rng):
    with pytest.raises(ProjectionError):
        trimming_interpolation(1, 1, random_polyform(rng, basis_full(2, 3, 1)))
    with pytest.raises(ProjectionError):
        trimming_interpolation(1, 0, random_polyform(rng, basis_full(2, 1, 1)))


def test_eg_weights(square):
    scheme = make_weights("eg", square)
    diagonal = square.find([0, 2])
    t1, t2 = square.cells_containing(diagonal)
    assert scheme.weight(diagonal.id, t1) == pytest.approx(0.5)
    assert scheme.weight(diagonal.id, t2) == pytest.approx(0.5)
    edge = square.find([0, 1])
    (only,) = square.cells_containing(edge)
    assert scheme.weight(edge.id, only) == 1.0


def test_clement_weights(square_fine):
    boundary = named_boundary(square_fine, "bottom")
    reps = choose_representatives(square_fine, boundary)
    scheme = make_weights("clement", square_fine, boundary)
    for s in square_fine.simplices:
        for t in square_fine.cells_containing(s):
            assert scheme.weight(s.id, t) == (1.0 if t == reps.cell_of(s.id) else 0.0)


def test_weight_validation(square):
    edge = square.find([0, 1])
    with pytest.raises(ProjectionError):
        make_weights("clement", square)
    with pytest.raises(ProjectionError):
        make_weights("custom", square)
    with pytest.raises(ProjectionError):
        make_weights("uniform", square)
    bad = {(s.id, t): 1.0 for s in square.simplices for t in square.cells_containing(s)}
    with pytest.raises(ProjectionError, match="somam"):
        make_weights("custom", square, custom=bad)
    good = {(s.id, t): 1.0 / len(square.cells_containing(s))
            for s in square.simplices for t in square.cells_containing(s)}
    good[(edge.id, square.cells_containing(edge)[0])] = -1.0
    with pytest.raises(ProjectionError, match="negativo"):
        make_weights("custom", square, custom=good)


def test_projection_errors(square, trig_field):
    space = FESpace(square, "P", 1, 1)
    with pytest.raises(ProjectionError):
        project(space, trig_field(2, 0), make_weights("eg", square))
    with pytest.raises(ProjectionError):
        project(space, trig_field(2, 1), make_weights("eg", square), "spline")
    assert Backend.parse("taylor") is Backend.TAYLOR


def test_broken_projection_of_polynomial_has_no_jumps(square_fine, poly_field):
    space = FESpace(square_fine, "P", 2, 1)
    broken = broken_projection(space, poly_field(2, 1, 2), "l2")
    assert broken.max_jump() <= 1e-10


def test_broken_projection_jumps_decrease(trig_field):
    field = trig_field(2, 1)
    jumps = []
    for mesh in mesh_sequence(unit_square_2(), 3):
        space = FESpace(mesh, "Pminus", 1, 1)
        jumps.append(broken_projection(space, field, "taylor").max_jump())
    assert jumps[0] > 1e-6
    assert jumps[2] < jumps[1] < jumps[0]


def test_broken_projection_is_local():
    mesh = unit_square_halves()
    right = sympy.Piecewise((0, X[0] <= 0.5), ((X[0] - 0.5) ** 2, True))
    field = field_from_expressions("right", 2, 0, [right], kink_planes=((0, 0.5),))
    broken = broken_projection(FESpace(mesh, "P", 2, 0), field, "l2")
    for t in mesh.cell_ids:
        xs = mesh.vertices[list(mesh.simplex(t).vertex_ids), 0]
        if xs.max() <= 0.5:
            assert broken.pieces[t].max_abs() <= 1e-12
        else:
            assert broken.pieces[t].max_abs() > 1e-3


def test_projection_error_decreases_under_refinement(trig_field):
    field = trig_field(2, 1)
    errors = []
    for mesh in mesh_sequence(unit_square_2(), 3):
        space = FESpace(mesh, "Pminus", 1, 1)
        u = project(space, field, make_weights("eg", mesh), "taylor")
        errors.append(lp_norm(difference(field, u), mesh.cell_charts(), 2))
    assert errors[2] < errors[1] < errors[0]
    assert errors[1] / errors[2] > 1.5


def test_dense_field_projection_uses_trimmed_family(square, trig_field):
    space = FESpace(square, "P", 1, 2)
    u = project(space, trig_field(2, 2), make_weights("eg", square), "taylor")
    assert u.form_degree == 2
    assert isinstance(u.local_form(square.cell_ids[0]), PolyForm)


def test_high_degree_trimmed_taylor_projection(square_fine, poly_field):
    # I_T ∘ Q^{r+1} usa derivadas de ordem r + 1 = 4
    space = FESpace(square_fine, "Pminus", 3, 1)
    field = poly_field(2, 1, 2, seed=4)
    u = project(space, field, make_weights("eg", square_fine), "taylor")
    assert lp_norm(difference(field, u), square_fine.cell_charts(), 2) <= 1e-9


@pytest.mark.parametrize("backend", ["l2", "taylor"])
@pytest.mark.parametrize("weights", ["eg", "clement"])
def test_projection_is_linear(square_fine, trig_field, poly_field, weights, backend):
    space = FESpace(square_fine, "Pminus", 2, 1)
    scheme = make_weights(weights, square_fine)
    f, g = trig_field(2, 1), poly_field(2, 1, 3, seed=7)
    combined = project(space, combine_fields([(2.5, f), (-0.75, g)]), scheme, backend)
    separate = (2.5 * project(space, f, scheme, backend).coefficients
                - 0.75 * project(space, g, scheme, backend).coefficients)
    assert np.abs(combined.coefficients - separate).max() <= 1e-10 * max(1.0, np.abs(separate).max())


@pytest.mark.parametrize("backend", ["l2", "taylor"])
def test_projection_depends_only_on_the_patch(backend):
    mesh = mesh_sequence(unit_square_halves(), 3)[-1]
    right = sympy.Piecewise((0, X[0] <= 0.5), ((X[0] - 0.5) ** 2, True))
    field = field_from_expressions("right", 2, 0, [right], kink_planes=((0, 0.5),))
    u = project(FESpace(mesh, "P", 1, 0), field, make_weights("eg", mesh), backend)

    def max_x(cells):
        return max(mesh.vertices[list(mesh.simplex(c).vertex_ids), 0].max() for c in cells)

    touched = 0
    for t in mesh.cell_ids:
        if max_x(mesh.cell_patch(t)) <= 0.5:
            assert u.local_form(t).max_abs() <= 1e-12
        elif max_x([t]) <= 0.5:
            touched += u.local_form(t).max_abs() > 1e-8
    # células à esquerda vizinhas da dobra recebem valores de vértices em x₀ = 0.5
    assert touched > 0


@pytest.mark.slow
@pytest.mark.parametrize("family, r, k", SPACES)
@pytest.mark.parametrize("weights", ["eg", "clement"])
@pytest.mark.parametrize("backend", ["l2", "taylor"])
def test_projection_reproduces_many_random_members(square_fine, family, r, k, weights, backend):
    space = FESpace(square_fine, family, r, k)
    scheme = make_weights(weights, square_fine, space.boundary)
    rng = np.random.default_rng(50)
    for _ in range(50):
        u = space.random_member(rng)
        v = project(space, u, scheme, backend)
        error = lp_norm(difference(u, v), square_fine.cell_charts(), 2)
        assert error <= 1e-9 * max(lp_norm(u, square_fine.cell_charts(), 2), 1e-12)
