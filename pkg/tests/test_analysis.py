import json
import math

import numpy as np
import pytest

from analysis import (
    PinStore, SpaceParams, boundary_layer_cells, boundary_test_forms, broken_bh_study, convergence_study,
    error_report, fit_slope, global_best_approx, is_aligned, local_best_errors, local_vs_global_ratio,
    local_vs_global_study, measure_constants, norm_id, quasi_optimality, shape_function_scaling,
    stability_ratio, weak_boundary_residual,
)
from errors import AnalysisError
from feec_fields import X, field_from_expressions, get_field
from fespace import FESpace
from mesh import mesh_sequence, named_boundary, refine_uniform, square_with_hole, unit_square_2, unit_square_halves
from polyform import exterior_derivative
from projection import make_weights, project
from quadrature import difference, inner_product_l2


def test_norm_ids():
    assert norm_id(0, 2) == "L2"
    assert norm_id(0, "inf") == "Linf"
    assert norm_id(1, 2) == "W1,2"
    assert norm_id(0, 1) == "L1"


def test_expected_orders():
    assert SpaceParams("P", 1, 0).expected_order(2) == 2
    assert SpaceParams("Pminus", 1, 1).expected_order(2) == 1
    assert SpaceParams("P", 2, 1).expected_order(3) == 3
    assert SpaceParams("P", 1, 2).expected_order(2) == 2
    assert SpaceParams("Pminus", 2, 0).expected_order(2) == 3


def test_error_report_of_exact_member(square_fine, rng):
    space = FESpace(square_fine, "Pminus", 2, 1)
    u = space.random_member(rng)
    report = error_report(space, u, u, ((0, 2), (1, 2), (0, "inf")))
    assert set(report) == {"L2", "W1,2", "Linf"}
    assert all(e.value <= 1e-9 for e in report.values())


def test_error_report_of_constant_perturbation(square_fine):
    eps = 1e-3
    field = field_from_expressions("eps_dx1", 2, 1, [eps, 0])
    space = FESpace(square_fine, "P", 1, 1)
    report = error_report(space, space.zero(), field)["L2"]
    assert report.value == pytest.approx(eps, rel=1e-12)
    assert math.sqrt((report.per_cell ** 2).sum()) == pytest.approx(report.value, rel=1e-12)


def test_error_report_restricted_to_cells(square_fine, trig_field):
    space = FESpace(square_fine, "P", 1, 0)
    field = trig_field(2, 0)
    u = project(space, field, make_weights("eg", square_fine), "l2")
    full = error_report(space, u, field)["L2"]
    part = error_report(space, u, field, cells=square_fine.cell_ids[:3])["L2"]
    assert part.value < full.value
    assert np.allclose(part.per_cell, full.per_cell[:3])


def test_fit_slope():
    h = [1.0, 0.5, 0.25, 0.125]
    assert fit_slope(h, [x ** 2 for x in h]) == pytest.approx(2.0)
    assert fit_slope(h, [3 * x for x in h]) == pytest.approx(1.0)
    with pytest.raises(AnalysisError):
        fit_slope(h[:2], [1.0, 0.5])


def test_global_best_approx_of_member(square_fine, poly_field):
    space = FESpace(square_fine, "P", 1, 1)
    field = poly_field(2, 1, 1)
    best = global_best_approx(space, field)
    assert best.e2 <= 1e-9
    assert np.all(local_best_errors(space, field) <= 1e-10)
    assert best.ratio == 1.0


def test_best_approx_residual_is_orthogonal(square_fine, poly_field, rng):
    space = FESpace(square_fine, "P", 1, 1, named_boundary(square_fine, "all"))
    field = poly_field(2, 1, 2, seed=5)
    best = global_best_approx(space, field)
    assert best.e2 > 1e-6
    for _ in range(20):
        w = space.random_member(rng)
        total = 0.0
        for t in square_fine.cell_ids:
            chart = square_fine.chart(t)
            v, wt = best.minimizer.local_form(t), w.local_form(t)
            total += inner_product_l2(difference(field, v), wt, chart)
            total += square_fine.diameter(t) ** 2 * inner_product_l2(
                difference(field.exterior, exterior_derivative(v)), exterior_derivative(wt), chart)
        assert abs(total) <= 1e-9


@pytest.mark.parametrize("family, r, k, boundary", [("P", 1, 0, "none"), ("Pminus", 1, 1, "all"),
                                                     ("P", 2, 1, "bottom"), ("Pminus", 2, 1, "none")])
def test_global_error_bounds_local_errors(square_fine, trig_field, family, r, k, boundary):
    space = FESpace(square_fine, family, r, k, named_boundary(square_fine, boundary))
    best = global_best_approx(space, trig_field(2, k))
    assert best.e2 >= best.local_total * (1 - 1e-9)
    assert best.ratio >= 1 - 1e-9


def test_missing_exterior_derivative(square, rng):
    space = FESpace(square, "P", 1, 1)
    with pytest.raises(AnalysisError, match="derivada"):
        global_best_approx(space, space.random_member(rng))


def test_local_vs_global_on_closed_form(square_fine):
    space = FESpace(square_fine, "Pminus", 1, 1)
    result = local_vs_global_ratio(space, get_field("closed_1form", 2))
    assert result.hypothesis_ok
    assert 1 - 1e-9 <= result.ratio <= 10.0


def test_local_vs_global_on_domain_with_hole():
    mesh = square_with_hole()
    space = FESpace(mesh, "Pminus", 1, 1)
    result = local_vs_global_ratio(space, get_field("angular_1form", 2))
    assert result.hypothesis_residual <= 1e-8
    assert 1 - 1e-9 <= result.ratio <= 10.0


def test_local_vs_global_flags_non_closed_form(square_fine):
    space = FESpace(square_fine, "Pminus", 1, 1)
    result = local_vs_global_ratio(space, get_field("smooth_1form", 2))
    assert not result.hypothesis_ok
    assert result.ratio >= 1 - 1e-9


def test_local_vs_global_hypothesis_uses_the_conforming_next_space(square_fine):
    # dω = 2x₀ dx₀ pertence a P_1Λ¹ quebrado, mas não a P⁻_1Λ¹ (Whitney)
    space = FESpace(square_fine, "P", 1, 0)
    result = local_vs_global_ratio(space, field_from_expressions("square_x", 2, 0, [X[0] ** 2]))
    assert not result.hypothesis_ok
    assert result.hypothesis_residual > 1e-4
    product = field_from_expressions("product", 2, 0, [X[0] * X[1]])
    assert local_vs_global_ratio(space, product).hypothesis_ok is False
    linear = field_from_expressions("linear", 2, 0, [2 * X[0] - X[1]])
    assert local_vs_global_ratio(space, linear).hypothesis_residual <= 1e-10


def test_local_vs_global_of_member(square_fine, poly_field):
    space = FESpace(square_fine, "P", 1, 1)
    result = local_vs_global_ratio(space, poly_field(2, 1, 0))
    assert result.ratio == 1.0


def test_measured_constants(square_fine, trig_field):
    space = FESpace(square_fine, "Pminus", 1, 1)
    field = trig_field(2, 1)
    scheme = make_weights("eg", square_fine)
    stability = stability_ratio(space, field, scheme, "l2")
    assert 0.0 < stability < 10.0
    assert quasi_optimality(space, field, scheme, "taylor") > 0.0
    constants = measure_constants(space, field, scheme, "taylor", ["stability", "shape_scaling"])
    assert set(constants) == {"stability", "shape_scaling"}
    with pytest.raises(AnalysisError):
        measure_constants(space, field, scheme, "taylor", ["unknown"])


def test_shape_function_scaling_is_mesh_independent():
    values = [shape_function_scaling(FESpace(mesh, "P", 1, 0)) for mesh in mesh_sequence(unit_square_2(), 3)]
    assert values[1] == pytest.approx(values[0], rel=1e-9)
    assert values[2] == pytest.approx(values[0], rel=1e-9)


def test_convergence_study_rejects_unrefined_sequence(square):
    with pytest.raises(AnalysisError):
        convergence_study([square, square], SpaceParams("P", 1, 0), get_field("smooth_scalar", 2))


@pytest.mark.slow
@pytest.mark.parametrize("family, r, k, field, norm, expected", [
    ("P", 1, 0, "smooth_scalar", (0, 2), 2.0),
    ("Pminus", 1, 1, "smooth_1form", (0, 2), 1.0),
    ("P", 2, 0, "smooth_scalar", (1, 2), 2.0),
])
def test_convergence_rates(square_levels, family, r, k, field, norm, expected):
    report = convergence_study(square_levels, SpaceParams(family, r, k), get_field(field, 2), norms=[norm])
    key = norm_id(*norm)
    assert report.expected_slopes[key] == expected
    assert report.slopes[key] == pytest.approx(expected, abs=0.25)
    series = report.series(key)
    assert all(b < a for a, b in zip(series, series[1:]))


@pytest.mark.slow
def test_convergence_with_boundary_conditions(square_levels):
    report = convergence_study(square_levels, SpaceParams("P", 1, 0, boundary="bottom"),
                               get_field("bc_scalar", 2), weights="clement", diagnostics=["stability"])
    assert "L2@boundary" in report.levels[0].errors
    assert report.slopes["L2"] == pytest.approx(2.0, abs=0.25)
    assert len(report.constant_series("stability")) == 4
    payload = report.to_dict()
    assert payload["metadata"]["boundary"] == "bottom"
    json.dumps(payload)


def test_alignment():
    field = get_field("kinked_scalar", 2)
    square = unit_square_2()
    assert not is_aligned(square, field)
    assert is_aligned(refine_uniform(square), field)
    assert is_aligned(unit_square_halves(), field)
    assert is_aligned(square, get_field("smooth_scalar", 2))


@pytest.mark.slow
def test_broken_bramble_hilbert_recovers_full_rate():
    meshes = mesh_sequence(unit_square_halves(), 4)
    report = broken_bh_study(meshes, SpaceParams("P", 1, 0), get_field("kinked_scalar", 2))
    assert report.slopes["L2"] == pytest.approx(2.0, abs=0.3)
    assert all(c == 1.0 for c in report.constant_series("aligned"))
    ratios = report.constant_series("ratio")
    assert all(0.0 < x < 20.0 for x in ratios)


def test_broken_bramble_hilbert_requires_alignment():
    meshes = mesh_sequence(unit_square_2(), 2)
    field = get_field("kinked_scalar", 2)
    with pytest.raises(AnalysisError, match="alinhado"):
        broken_bh_study(meshes, SpaceParams("P", 1, 0), field)
    report = broken_bh_study(meshes, SpaceParams("P", 1, 0), field, require_alignment=False)
    assert report.constant_series("aligned") == [0.0, 1.0]
    assert report.slopes == {}


def test_local_vs_global_study(square_levels):
    report = local_vs_global_study(square_levels[:3], SpaceParams("Pminus", 1, 1), get_field("closed_1form", 2))
    assert set(report.levels[0].errors) == {"E2", "local"}
    assert all(x >= 1 - 1e-9 for x in report.constant_series("ratio"))
    errors = report.series("E2")
    assert errors[2] < errors[1] < errors[0]
    assert "E2" in report.slopes


@pytest.mark.parametrize("k, field", [(0, "bc_scalar"), (1, "bc_1form")])
def test_weak_boundary_conditions(square_fine, k, field):
    source = get_field(field, 2)
    constrained = FESpace(square_fine, "P", 2, k, named_boundary(square_fine, "bottom"))
    free = FESpace(square_fine, "P", 2, k)
    forms = boundary_test_forms(constrained, count=10, seed=3)
    assert len(forms) == 10
    u = project(constrained, source, make_weights("clement", square_fine, constrained.boundary), "taylor")
    assert max(abs(weak_boundary_residual(u, eta)) for eta in forms) <= 1e-9
    shifted = get_field("smooth_scalar" if k == 0 else "smooth_1form", 2)
    v = project(free, shifted, make_weights("eg", square_fine), "taylor")
    assert max(abs(weak_boundary_residual(v, eta)) for eta in forms) > 1e-6


def test_boundary_catalog_fields():
    bottom = np.array([[0.3, 0.0], [0.7, 0.0]])
    assert np.abs(get_field("bc_scalar", 2).values(bottom)).max() == 0.0
    assert np.abs(get_field("bc_violating_scalar", 2).values(bottom)).min() > 1.0


def test_boundary_helpers(square_fine):
    space = FESpace(square_fine, "P", 1, 2, named_boundary(square_fine, "bottom"))
    assert boundary_test_forms(space) == []
    assert boundary_test_forms(FESpace(square_fine, "P", 1, 0)) == []
    near = boundary_layer_cells(square_fine, FESpace(square_fine, "P", 1, 0, named_boundary(square_fine, "bottom")))
    assert near
    for t in near:
        assert square_fine.vertices[list(square_fine.simplex(t).vertex_ids), 1].min() == 0.0


def test_weak_residual_checks_degrees(square, rng):
    u = FESpace(square, "P", 1, 0).random_member(rng)
    with pytest.raises(AnalysisError):
        weak_boundary_residual(u, u)


def test_pin_store(tmp_path):
    path = tmp_path / "pins" / "constants.json"
    store = PinStore(path, tolerance=0.2)
    assert store.check("exp.stability", 2.0).status == "pinned"
    store.save()
    reloaded = PinStore(path, tolerance=0.2)
    ok = reloaded.check("exp.stability", 2.3)
    assert ok.status == "ok" and ok.ok
    assert ok.drift == pytest.approx(0.15)
    drift = reloaded.check("exp.stability", 3.0)
    assert drift.status == "drift" and not drift.ok


def test_pin_store_rejects_invalid_file(tmp_path):
    path = tmp_path / "pins.json"
    path.write_text("{not json")
    with pytest.raises(AnalysisError):
        PinStore(path)


@pytest.mark.slow
def test_boundary_layer_error_detects_incompatible_field(square_levels):
    params = SpaceParams("P", 1, 0, boundary="bottom")
    compatible = convergence_study(square_levels, params, get_field("bc_scalar", 2), weights="clement")
    violating = convergence_study(square_levels, params, get_field("bc_violating_scalar", 2), weights="clement")
    # camada de medida ~h: campo compatível ~h^{r+1+1/2}, campo não nulo na fronteira ~h^{1/2}
    assert compatible.slopes["L2@boundary"] >= 1.75
    assert violating.slopes["L2@boundary"] <= 1.0
    assert violating.slopes["L2"] < compatible.slopes["L2"] - 0.75


@pytest.mark.slow
@pytest.mark.parametrize("weights", ["eg", "clement"])
def test_stability_and_quasi_optimality_are_mesh_uniform(square_levels, weights):
    report = convergence_study(square_levels, SpaceParams("Pminus", 1, 1), get_field("smooth_flux", 2),
                               weights=weights, backend="l2", diagnostics=["stability", "quasi_optimality"])
    stability = report.constant_series("stability")
    assert len(stability) == 4 and all(0.0 < x <= 1.0 for x in stability)
    # o nível 0 ainda é pré-assintótico
    tail = stability[2:]
    assert max(tail) / min(tail) <= 1.2
    quasi = report.constant_series("quasi_optimality")
    assert all(0.0 < x < 5.0 for x in quasi)
