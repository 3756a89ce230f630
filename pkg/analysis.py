"""
feecavg - Análise
Medições de erro, estudos de convergência, o estudo de Bramble–Hilbert
quebrado, melhores aproximações global (E₂) e locais (e_{2,T}), constantes
medidas (estabilidade, quase-otimalidade, escala das funções de forma), o
teste fraco de condições de contorno e o registro de valores fixados.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.stats import linregress

from errors import AnalysisError
from fespace import FEFunction, FESpace, Family, reference_integral
from mesh import SimplicialComplex, named_boundary
from polyform import exterior_derivative, wedge
from projection import Backend, WeightScheme, make_weights, project
from quadrature import (
    aggregate, cell_lp_norms, cell_sobolev_seminorms, cell_values, default_order, difference,
    normalize_p, simplex_rule,
)

logger = logging.getLogger("feecavg.analysis")

PIN_TOLERANCE = 0.2
SLOPE_LEVELS = 3
ERROR_FLOOR = 1e-12


def norm_id(s: int, p) -> str:
    p = normalize_p(p)
    label = "inf" if p == np.inf else str(int(p))
    return f"L{label}" if s == 0 else f"W{s},{label}"


@dataclass(frozen=True)
class SpaceParams:
    """Descrição de um espaço independente da malha."""
    family: str
    r: int
    k: int
    boundary: str = "none"
    name: Optional[str] = None

    def build(self, mesh: SimplicialComplex) -> FESpace:
        return FESpace(mesh, self.family, self.r, self.k, named_boundary(mesh, self.boundary))

    def expected_order(self, mesh_dim: int) -> int:
        """m da estimativa h^{m-s}: r+1 (P) ou r (Pminus), após a normalização das famílias."""
        family = Family.parse(self.family)
        if self.k == mesh_dim and family is Family.FULL:
            return self.r + 1
        if self.k == 0 or family is Family.FULL:
            return self.r + 1
        return self.r


# ============================================================================
# ERROS
# ============================================================================

@dataclass
class NormError:
    s: int
    p: float
    value: float
    per_cell: np.ndarray = field(repr=False)


def error_report(space: FESpace, u, source, norms: Sequence[tuple[int, object]] = ((0, 2),),
                 cells: Optional[Sequence[int]] = None) -> dict[str, NormError]:
    """Normas de (ω - u) por célula e globais; cells restringe a região."""
    mesh = space.mesh
    charts = [mesh.chart(t) for t in (mesh.cell_ids if cells is None else cells)]
    err = difference(source, u)
    out = {}
    for s, p in norms:
        p = normalize_p(p)
        if s == 0:
            per_cell = cell_lp_norms(err, charts, p)
            value = aggregate(per_cell, p)
        elif s >= 1:
            table = cell_sobolev_seminorms(err, charts, s, p)
            per_cell = table.sum(axis=1)
            value = float(sum(aggregate(table[:, j], p) for j in range(table.shape[1])))
        else:
            raise AnalysisError(f"Ordem de seminorma inválida: {s}")
        out[norm_id(s, p)] = NormError(s, p, value, per_cell)
    return out


def fit_slope(h: Sequence[float], errors: Sequence[float], last: int = SLOPE_LEVELS) -> float:
    """Inclinação de log e contra log h nos últimos níveis."""
    if len(h) < last:
        raise AnalysisError(f"Inclinações exigem ≥ {last} níveis, recebido {len(h)}")
    x = np.log(np.asarray(h[-last:], dtype=float))
    y = np.log(np.maximum(np.asarray(errors[-last:], dtype=float), 1e-300))
    return float(linregress(x, y).slope)


# ============================================================================
# RELATÓRIOS
# ============================================================================

@dataclass
class LevelRecord:
    level: int
    h_max: float
    num_cells: int
    errors: dict[str, float]
    constants: dict[str, float] = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    levels: list[LevelRecord]
    slopes: dict[str, float]
    expected_slopes: dict[str, float]
    metadata: dict[str, object]

    def series(self, key: str) -> list[float]:
        return [rec.errors[key] for rec in self.levels]

    def constant_series(self, key: str) -> list[float]:
        return [rec.constants[key] for rec in self.levels if key in rec.constants]

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "levels": [asdict(rec) for rec in self.levels],
                "slopes": self.slopes, "expected_slopes": self.expected_slopes}


def _check_levels(meshes: Sequence[SimplicialComplex]) -> list[float]:
    h = [m.h_max() for m in meshes]
    if any(b >= a for a, b in zip(h, h[1:])):
        raise AnalysisError(f"Sequência de malhas com h não decrescente: {h}")
    return h


def _fit_all(h: list[float], levels: list[LevelRecord]) -> dict[str, float]:
    if len(levels) < SLOPE_LEVELS:
        return {}
    return {key: fit_slope(h, [rec.errors[key] for rec in levels]) for key in levels[0].errors}


def convergence_study(meshes: Sequence[SimplicialComplex], params: SpaceParams, source,
                      weights: str = "eg", backend: Union[str, Backend] = "taylor",
                      norms: Sequence[tuple[int, object]] = ((0, 2),),
                      diagnostics: Sequence[str] = ()) -> ConvergenceReport:
    """Projeta ω em cada malha e ajusta as taxas h^{m-s}."""
    h = _check_levels(meshes)
    records = []
    for level, mesh in enumerate(meshes):
        space = params.build(mesh)
        scheme = make_weights(weights, mesh, space.boundary)
        u = project(space, source, scheme, backend)
        report = error_report(space, u, source, norms)
        errors = {key: e.value for key, e in report.items()}
        if len(space.boundary):
            near = boundary_layer_cells(mesh, space)
            errors["L2@boundary"] = error_report(space, u, source, ((0, 2),), cells=near)["L2"].value
        constants = measure_constants(space, source, scheme, backend, diagnostics, u)
        records.append(LevelRecord(level, h[level], mesh.num_cells, errors, constants))
        logger.info("Nível %d: h = %.4f, erros = %s, constantes = %s", level, h[level],
                    _fmt(errors), _fmt(constants))
    m = params.expected_order(meshes[0].n)
    expected = {norm_id(s, p): float(m - s) for s, p in norms}
    report = ConvergenceReport(records, _fit_all(h, records), expected, _metadata(params, source, weights, backend))
    if report.slopes:
        logger.info("Inclinações: %s (esperado %s)", _fmt(report.slopes), _fmt(expected))
    return report


def _metadata(params: SpaceParams, source, weights, backend) -> dict:
    return {"space": params.name or f"{params.family}_{params.r}Λ^{params.k}",
            "family": params.family, "r": params.r, "k": params.k, "boundary": params.boundary,
            "weights": str(weights), "backend": Backend.parse(backend).value,
            "field": getattr(source, "name", "field")}


def _fmt(values: dict) -> str:
    return ", ".join(f"{k}={v:.4g}" for k, v in values.items())


def is_aligned(mesh: SimplicialComplex, source, tol: float = 1e-12) -> bool:
    """Cada célula fica de um só lado de cada hiperplano de dobra do campo."""
    for axis, value in getattr(source, "kink_planes", ()):
        for t in mesh.cell_ids:
            coords = mesh.vertices[list(mesh.simplex(t).vertex_ids), axis]
            if coords.min() < value - tol and coords.max() > value + tol:
                return False
    return True


def broken_bh_study(meshes: Sequence[SimplicialComplex], params: SpaceParams, source,
                    weights: str = "eg", backend: Union[str, Backend] = "taylor",
                    require_alignment: bool = True) -> ConvergenceReport:
    """Erro conforme ‖ω - 𝒫ω‖ contra o erro local quebrado (Σ e_{2,T}²)^{1/2}."""
    h = _check_levels(meshes)
    records = []
    for level, mesh in enumerate(meshes):
        aligned = is_aligned(mesh, source)
        if require_alignment and not aligned:
            raise AnalysisError(f"Campo '{getattr(source, 'name', 'field')}' não está alinhado à malha do nível {level}")
        space = params.build(mesh)
        scheme = make_weights(weights, mesh, space.boundary)
        u = project(space, source, scheme, backend)
        conforming = error_report(space, u, source, ((0, 2),))["L2"].value
        broken = float(np.sqrt((local_best_errors(space, source) ** 2).sum()))
        ratio = conforming / max(broken, ERROR_FLOOR)
        records.append(LevelRecord(level, h[level], mesh.num_cells,
                                   {"L2": conforming, "broken": broken},
                                   {"ratio": ratio, "aligned": float(aligned)}))
        logger.info("Nível %d: conforme = %.4e, quebrado = %.4e, razão = %.4f", level, conforming, broken, ratio)
    m = params.expected_order(meshes[0].n)
    return ConvergenceReport(records, _fit_all(h, records), {"L2": float(m), "broken": float(m)},
                             _metadata(params, source, weights, backend))


# ============================================================================
# MELHOR APROXIMAÇÃO
# ============================================================================

@dataclass
class BestApproxResult:
    e2: float
    minimizer: FEFunction = field(repr=False)
    local_errors: np.ndarray = field(repr=False)

    @property
    def local_total(self) -> float:
        return float(np.sqrt((self.local_errors ** 2).sum()))

    @property
    def ratio(self) -> float:
        if self.e2 <= ERROR_FLOOR and self.local_total <= ERROR_FLOOR:
            return 1.0
        return self.e2 / max(self.local_total, ERROR_FLOOR)


def _exterior_of(space: FESpace, source, dsource):
    if space.k == space.mesh.n:
        return None
    d = dsource if dsource is not None else getattr(source, "exterior", None)
    if d is None:
        raise AnalysisError(f"Campo '{getattr(source, 'name', 'field')}' sem a derivada exterior dω")
    return d


def _local_system(space: FESpace, t: int, source, dsource) -> tuple[np.ndarray, np.ndarray]:
    """Matriz e lado direito de min ‖ω - v‖² + h_T² ‖dω - dv‖² sobre 𝒫Λ^k(T)."""
    chart = space.mesh.chart(t)
    vol = chart.volume
    psi, rule = space.local_basis_values(t)
    A = vol * np.einsum("q,iqc,jqc->ij", rule.weights, psi, psi)
    b = vol * np.einsum("q,iqc,qc->i", rule.weights, psi, cell_values(source, chart, rule.ref_points))
    if dsource is not None:
        h2 = space.mesh.diameter(t) ** 2
        dpsi, _ = space.local_basis_values(t, derivative=True)
        dvals = cell_values(dsource, chart, rule.ref_points)
        A = A + h2 * vol * np.einsum("q,iqc,jqc->ij", rule.weights, dpsi, dpsi)
        b = b + h2 * vol * np.einsum("q,iqc,qc->i", rule.weights, dpsi, dvals)
    return A, b


def _graph_error(space: FESpace, t: int, source, dsource, local) -> float:
    chart = space.mesh.chart(t)
    rule = simplex_rule(space.mesh.n, default_order(space.r))
    z = rule.ref_points
    vals = cell_values(source, chart, z) - chart.ambient_values(local, z)
    total = rule.weights @ (vals ** 2).sum(axis=1)
    if dsource is not None:
        dvals = cell_values(dsource, chart, z) - chart.ambient_values(exterior_derivative(local), z)
        total += space.mesh.diameter(t) ** 2 * (rule.weights @ (dvals ** 2).sum(axis=1))
    return float(np.sqrt(max(chart.volume * total, 0.0)))


def local_best_errors(space: FESpace, source, dsource=None) -> np.ndarray:
    """e_{2,T}: minimização local sem condições de contorno, célula a célula."""
    dsource = _exterior_of(space, source, dsource)
    out = []
    for t in space.mesh.cell_ids:
        A, b = _local_system(space, t, source, dsource)
        coef = scipy.linalg.solve(A, b, assume_a="pos")
        out.append(_graph_error(space, t, source, dsource, space.element.combine(coef)))
    return np.array(out)


def _normal_solution(space: FESpace, source, dsource) -> FEFunction:
    """Minimizador global de Σ_T ‖ω - v‖² + h_T² ‖dω - dv‖² sobre os graus ativos (sem dω: projeção L²)."""
    rows, cols, vals = [], [], []
    rhs = np.zeros(space.dim)
    for row, t in enumerate(space.mesh.cell_ids):
        A, b = _local_system(space, t, source, dsource)
        dofs = space.cell_dofs[row]
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(A.ravel())
        np.add.at(rhs, dofs, b)
    K = scipy.sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(space.dim, space.dim)).tocsr()
    active = np.flatnonzero(space.active)
    if len(active) == 0:
        return space.zero()
    K_act = K[active][:, active].tocsc()
    coef = scipy.sparse.linalg.spsolve(K_act, rhs[active])
    if not np.all(np.isfinite(coef)):
        raise AnalysisError("Sistema normal singular na melhor aproximação global")
    return FEFunction(space, np.atleast_1d(coef))


def global_best_approx(space: FESpace, source, dsource=None) -> BestApproxResult:
    """E₂ pelas equações normais (massa + derivada ponderada por h²) sobre os graus ativos."""
    dsource = _exterior_of(space, source, dsource)
    minimizer = _normal_solution(space, source, dsource)
    per_cell = np.array([_graph_error(space, t, source, dsource, minimizer.local_form(t))
                         for t in space.mesh.cell_ids])
    e2 = float(np.sqrt((per_cell ** 2).sum()))
    return BestApproxResult(e2, minimizer, local_best_errors(space, source, dsource))


@dataclass
class LocalGlobalResult:
    ratio: float
    e2: float
    local_total: float
    hypothesis_residual: float
    hypothesis_ok: bool


def local_vs_global_ratio(space: FESpace, source, dsource=None, tol: float = 1e-8) -> LocalGlobalResult:
    """E₂ / (Σ e_{2,T}²)^{1/2}, com verificação de dω no espaço conforme seguinte do complexo.

    d leva P_rΛ^k e P⁻_rΛ^k para dentro de P⁻_rΛ^{k+1}(𝒯, 𝒰); o resíduo é a distância L² de dω
    a esse espaço, medida pela projeção L² global (não quebrada).
    """
    dsource_resolved = _exterior_of(space, source, dsource)
    residual = 0.0
    if dsource_resolved is not None:
        mesh = space.mesh
        dspace = FESpace(mesh, Family.TRIMMED, space.r, space.k + 1, space.boundary)
        projected = _normal_solution(dspace, dsource_resolved, None)
        charts = mesh.cell_charts()
        residual = aggregate(cell_lp_norms(difference(dsource_resolved, projected), charts, 2), 2)
        scale = max(1.0, aggregate(cell_lp_norms(source, charts, 2), 2))
        residual /= scale
    ok = residual <= tol
    if not ok:
        logger.warning("dω fora do espaço discreto (resíduo relativo %.3e); razão apenas diagnóstica", residual)
    best = global_best_approx(space, source, dsource)
    return LocalGlobalResult(best.ratio, best.e2, best.local_total, residual, ok)


# ============================================================================
# CONSTANTES MEDIDAS
# ============================================================================

def stability_ratio(space: FESpace, source, weights: WeightScheme, backend, u: Optional[FEFunction] = None) -> float:
    """max_T ‖𝒫ω‖_{L²(T)} / Σ_{T' ∩ T ≠ ∅} ‖ω‖_{L²(T')}."""
    mesh = space.mesh
    u = project(space, source, weights, backend) if u is None else u
    charts = mesh.cell_charts()
    proj = cell_lp_norms(u, charts, 2)
    orig = dict(zip(mesh.cell_ids, cell_lp_norms(source, charts, 2)))
    ratio = 0.0
    for i, t in enumerate(mesh.cell_ids):
        denom = sum(orig[c] for c in mesh.cell_patch(t))
        if denom > ERROR_FLOOR:
            ratio = max(ratio, proj[i] / denom)
    return float(ratio)


def quasi_optimality(space: FESpace, source, weights: WeightScheme, backend,
                     u: Optional[FEFunction] = None, dsource=None) -> float:
    """‖ω - 𝒫ω‖_{L²} / E₂(ω)."""
    u = project(space, source, weights, backend) if u is None else u
    err = error_report(space, u, source, ((0, 2),))["L2"].value
    best = global_best_approx(space, source, dsource)
    return err / max(best.e2, ERROR_FLOOR)


def shape_function_scaling(space: FESpace) -> float:
    """max ‖φ_{S,i}‖_{L²(T)} · h_S^{k - n/2}; h de um vértice é o seu diâmetro de vértice."""
    mesh = space.mesh
    exponent = space.k - mesh.n / 2
    hs = {}
    worst = 0.0
    for row, t in enumerate(mesh.cell_ids):
        norms = np.sqrt(np.maximum(np.diag(space.local_mass(t)), 0.0))
        for l, g in enumerate(space.cell_dofs[row]):
            if not space.active[g]:
                continue
            sid = space.dofs[g][0]
            if sid not in hs:
                s = mesh.simplex(sid)
                hs[sid] = mesh.vertex_diameter(sid) if s.dim == 0 else mesh.diameter(s)
            worst = max(worst, norms[l] * hs[sid] ** exponent)
    return float(worst)


def measure_constants(space: FESpace, source, weights: WeightScheme, backend,
                      diagnostics: Sequence[str], u: Optional[FEFunction] = None) -> dict[str, float]:
    out = {}
    for name in diagnostics:
        if name == "stability":
            out[name] = stability_ratio(space, source, weights, backend, u)
        elif name == "quasi_optimality":
            out[name] = quasi_optimality(space, source, weights, backend, u)
        elif name == "local_vs_global":
            out[name] = local_vs_global_ratio(space, source).ratio
        elif name == "shape_scaling":
            out[name] = shape_function_scaling(space)
        else:
            raise AnalysisError(f"Diagnóstico desconhecido: '{name}'")
    return out


# ============================================================================
# CONDIÇÕES DE CONTORNO
# ============================================================================

def boundary_layer_cells(mesh: SimplicialComplex, space: FESpace) -> list[int]:
    """Células com algum vértice em 𝒰."""
    marked = {v.id for v in mesh.simplices_by_dim[0] if v.id in space.boundary}
    return [t for t in mesh.cell_ids if marked & set(mesh.simplex(t).vertex_ids)]


def boundary_test_forms(space: FESpace, count: int = 10, seed: int = 0) -> list[FEFunction]:
    """Formas-teste conformes de P_n Λ^{n-k-1}, combinações das funções de forma das facetas de 𝒰."""
    mesh = space.mesh
    degree = mesh.n - space.k - 1
    if degree < 0 or not space.boundary.facet_ids:
        return []
    test_space = FESpace(mesh, "P", mesh.n, degree)
    basis = [test_space.dof_index(f, i) for f in space.boundary.facet_ids
             for i in range(test_space.dofs_per_simplex(f))]
    if not basis:
        return []
    rng = np.random.default_rng(seed)
    forms = []
    for _ in range(count):
        coeffs = np.zeros(test_space.dim)
        coeffs[basis] = rng.standard_normal(len(basis))
        forms.append(test_space.from_global(coeffs))
    return forms


def weak_boundary_residual(u: FEFunction, eta: FEFunction) -> float:
    """∫ u ∧ dη + (-1)^k ∫ du ∧ η = (-1)^k ∫_∂Ω tr u ∧ tr η."""
    mesh = u.space.mesh
    k = u.space.k
    if eta.space.mesh is not mesh or eta.space.k != mesh.n - k - 1:
        raise AnalysisError("Forma-teste incompatível com a função testada")
    sign = -1.0 if k % 2 else 1.0
    total = 0.0
    for t in mesh.cell_ids:
        a, b = u.local_form(t), eta.local_form(t)
        integrand = wedge(a, exterior_derivative(b)) + sign * wedge(exterior_derivative(a), b)
        total += mesh.orientation(t) * reference_integral(integrand)
    return float(total)


# ============================================================================
# VALORES FIXADOS
# ============================================================================

@dataclass
class PinResult:
    key: str
    value: float
    pinned: float
    drift: float
    status: str

    @property
    def ok(self) -> bool:
        return self.status in ("pinned", "ok")


class PinStore:
    """Constantes medidas fixadas na primeira execução, com tolerância relativa."""

    def __init__(self, path: Union[str, Path], tolerance: float = PIN_TOLERANCE):
        self.path = Path(path)
        self.tolerance = tolerance
        self.values: dict[str, float] = {}
        if self.path.exists():
            try:
                self.values = {k: float(v) for k, v in json.loads(self.path.read_text(encoding="utf-8")).items()}
            except (json.JSONDecodeError, TypeError, ValueError) as e:
                raise AnalysisError(f"Arquivo de valores fixados inválido '{self.path}': {e}")

    def check(self, key: str, value: float) -> PinResult:
        if key not in self.values:
            self.values[key] = float(value)
            logger.info("Valor fixado: %s = %.6g", key, value)
            return PinResult(key, value, value, 0.0, "pinned")
        pinned = self.values[key]
        drift = abs(value - pinned) / max(abs(pinned), ERROR_FLOOR)
        status = "ok" if drift <= self.tolerance else "drift"
        logger.info("Valor fixado %s: %.6g (fixado %.6g, desvio %.1f%%)", key, value, pinned, 100 * drift)
        return PinResult(key, value, pinned, drift, status)

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.values, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def local_vs_global_study(meshes: Sequence[SimplicialComplex], params: SpaceParams, source) -> ConvergenceReport:
    """E₂ e (Σ e_{2,T}²)^{1/2} por nível, com a razão entre eles."""
    h = _check_levels(meshes)
    records = []
    for level, mesh in enumerate(meshes):
        result = local_vs_global_ratio(params.build(mesh), source)
        records.append(LevelRecord(level, h[level], mesh.num_cells,
                                   {"E2": result.e2, "local": result.local_total},
                                   {"ratio": result.ratio, "hypothesis_residual": result.hypothesis_residual}))
        logger.info("Nível %d: E₂ = %.4e, local = %.4e, razão = %.4f", level, result.e2, result.local_total, result.ratio)
    m = params.expected_order(meshes[0].n)
    return ConvergenceReport(records, _fit_all(h, records), {"E2": float(m), "local": float(m)},
                             _metadata(params, source, "-", "l2"))
