"""
feecavg - Projeções
Projeções locais P_T (ortogonal em L² e por média de Taylor), interpolação
aparada I_T, esquemas de pesos c(S, T) e a projeção global por médias de
graus de liberdade.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from math import factorial
from typing import Mapping, Optional, Union

import numpy as np
import scipy.linalg

from errors import ProjectionError
from fespace import FEFunction, FESpace, Family, reference_element
from mesh import BoundarySubcomplex, Representatives, SimplicialComplex, choose_representatives
from polyform import PolyForm, SimplexChart, compose_affine, multi_indices, trace
from quadrature import ball_rule, cell_partials, cell_values, simplex_rule

logger = logging.getLogger("feecavg.projection")

BALL_SCALE = 0.9
BUMP_POWER = 4
WEIGHT_SUM_TOL = 1e-14


class Backend(Enum):
    L2 = "l2"
    TAYLOR = "taylor"

    @classmethod
    def parse(cls, value: Union[str, "Backend"]) -> "Backend":
        try:
            return value if isinstance(value, Backend) else cls(value)
        except ValueError:
            raise ProjectionError(f"Backend desconhecido: '{value}' (use 'l2' ou 'taylor')")


class WeightKind(Enum):
    ERN_GUERMOND = "eg"
    CLEMENT = "clement"
    CUSTOM = "custom"


# ============================================================================
# CAMPOS QUEBRADOS
# ============================================================================

@dataclass
class BrokenField:
    """Uma forma polinomial por célula, em coordenadas de referência."""
    mesh: SimplicialComplex
    form_degree: int
    pieces: dict[int, PolyForm]

    def __post_init__(self):
        missing = set(self.mesh.cell_ids) - set(self.pieces)
        if missing:
            raise ProjectionError(f"Campo quebrado sem as células {sorted(missing)[:5]}")

    def cell_values(self, chart: SimplexChart, z: np.ndarray) -> np.ndarray:
        return chart.ambient_values(self.pieces[chart.simplex_id], z)

    def cell_partials(self, chart: SimplexChart, z: np.ndarray, alpha) -> np.ndarray:
        piece = self.pieces[chart.simplex_id]
        return chart.ambient_values(chart.ambient_partial(piece, alpha), z)

    def facet_jumps(self, order: int = 8) -> dict[int, float]:
        """‖tr_{T1} − tr_{T2}‖_{L²(F)} em cada faceta interior."""
        mesh = self.mesh
        jumps = {}
        for f in mesh.simplices_by_dim[mesh.n - 1]:
            cells = mesh.cells_containing(f)
            if len(cells) != 2:
                continue
            t1, t2 = cells
            diff = (trace(self.pieces[t1], mesh.local_face(t1, f))
                    - trace(self.pieces[t2], mesh.local_face(t2, f)))
            rule = simplex_rule(mesh.n - 1, order)
            vals = diff.values(rule.ref_points)
            jumps[f.id] = float(np.sqrt(mesh.volume(f) * (rule.weights @ (vals ** 2).sum(axis=1))))
        return jumps

    def max_jump(self) -> float:
        return max(self.facet_jumps().values(), default=0.0)


# ============================================================================
# PESOS
# ============================================================================

@dataclass(frozen=True)
class WeightScheme:
    """c(S, T) ≥ 0 com Σ_{T ∋ S} c(S, T) = 1 para cada simplexo S."""
    kind: WeightKind
    weights: Mapping[tuple[int, int], float] = field(repr=False)

    def weight(self, simplex_id: int, cell_id: int) -> float:
        return self.weights.get((simplex_id, cell_id), 0.0)

    def validate(self, mesh: SimplicialComplex):
        for (s, t), c in self.weights.items():
            if c < 0:
                raise ProjectionError(f"Peso negativo c({s}, {t}) = {c}")
            if t not in mesh.cells_containing(s):
                raise ProjectionError(f"Peso c({s}, {t}) para célula que não contém o simplexo")
        for s in mesh.simplices:
            total = sum(self.weight(s.id, t) for t in mesh.cells_containing(s))
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise ProjectionError(f"Pesos do simplexo {s.vertex_ids} somam {total}, esperado 1")


def make_weights(kind: Union[str, WeightKind], mesh: SimplicialComplex,
                 boundary: Optional[BoundarySubcomplex] = None,
                 representatives: Optional[Representatives] = None,
                 custom: Optional[Mapping[tuple[int, int], float]] = None) -> WeightScheme:
    kind = kind if isinstance(kind, WeightKind) else _parse_kind(kind)
    weights: dict[tuple[int, int], float] = {}
    if kind is WeightKind.ERN_GUERMOND:
        for s in mesh.simplices:
            cells = mesh.cells_containing(s)
            for t in cells:
                weights[(s.id, t)] = 1.0 / len(cells)
    elif kind is WeightKind.CLEMENT:
        if representatives is None:
            if boundary is None:
                raise ProjectionError("Pesos de Clément exigem representantes ou o subcomplexo 𝒰")
            representatives = choose_representatives(mesh, boundary)
        for s in mesh.simplices:
            weights[(s.id, representatives.cell_of(s.id))] = 1.0
    else:
        if custom is None:
            raise ProjectionError("Esquema de pesos personalizado sem pesos")
        weights = {(int(s), int(t)): float(c) for (s, t), c in custom.items()}
    scheme = WeightScheme(kind, weights)
    scheme.validate(mesh)
    return scheme


def _parse_kind(value: str) -> WeightKind:
    try:
        return WeightKind(value)
    except ValueError:
        raise ProjectionError(f"Tipo de pesos desconhecido: '{value}' (use 'eg', 'clement' ou 'custom')")


# ============================================================================
# PROJEÇÕES LOCAIS
# ============================================================================

def local_l2_dofs(space: FESpace, t: int, source, order: Optional[int] = None) -> np.ndarray:
    """Graus de liberdade locais da projeção L²(T) sobre 𝒫Λ^k(T)."""
    chart = space.mesh.chart(t)
    psi, rule = space.local_basis_values(t, order)
    mass = chart.volume * np.einsum("q,iqc,jqc->ij", rule.weights, psi, psi)
    values = cell_values(source, chart, rule.ref_points)
    rhs = chart.volume * np.einsum("q,iqc,qc->i", rule.weights, psi, values)
    try:
        factor = scipy.linalg.cho_factor(mass)
    except np.linalg.LinAlgError:
        raise ProjectionError(f"Matriz de massa local singular na célula {t}")
    return scipy.linalg.cho_solve(factor, rhs)


def local_project_l2(space: FESpace, t: int, source, order: Optional[int] = None) -> PolyForm:
    """P_T pela projeção ortogonal em L²(T)."""
    return space.element.combine(local_l2_dofs(space, t, source, order))


def averaged_taylor(source, chart: SimplexChart, degree: int, center: np.ndarray, radius: float) -> PolyForm:
    """Polinômio de Taylor médio (componente a componente, coordenadas ambientes).

    Média sobre a bola B(center, radius) com peso (1 - |ξ|²)^4 normalizado;
    o resultado é devolvido na referência da célula.
    """
    n = chart.ambient_dim
    k = source.form_degree
    xi, w = ball_rule(n)
    bump = w * (1.0 - (xi ** 2).sum(axis=1)) ** BUMP_POWER
    omega = bump / bump.sum()
    delta = radius * xi
    z = chart.to_reference(center + delta)

    derivs = {alpha: cell_partials(source, chart, z, alpha) for alpha in multi_indices(n, degree)}
    shifts = {gamma: np.prod((-delta) ** np.array(gamma), axis=1) for gamma in multi_indices(n, degree)}
    ncomp = next(iter(derivs.values())).shape[1]
    coeffs = np.zeros((degree + 1,) * n + (ncomp,))
    for beta in multi_indices(n, degree):
        acc = np.zeros(ncomp)
        for gamma in multi_indices(n, degree - sum(beta)):
            key = tuple(b + g for b, g in zip(beta, gamma))
            acc += (omega * shifts[gamma]) @ derivs[key] / _factorial(gamma)
        coeffs[beta] = acc / _factorial(beta)
    ref = compose_affine(coeffs, chart.jacobian, chart.origin - center)
    P = chart.pullback_matrix(k)
    return PolyForm(chart.dim, k, degree, ref @ P.T)


def _factorial(alpha) -> float:
    return float(np.prod([factorial(a) for a in alpha]))


def trimming_interpolation(r: int, k: int, a: PolyForm) -> PolyForm:
    """I_T: interpolação canônica de P_{r+1}Λ^k em P⁻_r Λ^k (na referência)."""
    if a.form_degree != k:
        raise ProjectionError(f"Forma de grau {a.form_degree} para interpolação de grau {k}")
    if a.actual_degree(tol=1e-14) > r + 1:
        raise ProjectionError(f"Forma de grau polinomial {a.actual_degree()} excede r + 1 = {r + 1}")
    element = reference_element(Family.TRIMMED, r, k, a.sim_dim)
    return element.interpolate(a.with_bound(r + 1))


def _taylor_ball(space: FESpace, t: int) -> tuple[np.ndarray, float]:
    center, inradius = space.mesh.incenter(t)
    return center, BALL_SCALE * inradius


def local_project_taylor(space: FESpace, t: int, source) -> PolyForm:
    """P_T comutante: Q^r (família P) ou I_T ∘ Q^{r+1} (família Pminus)."""
    chart = space.mesh.chart(t)
    center, radius = _taylor_ball(space, t)
    if space.family is Family.FULL:
        return averaged_taylor(source, chart, space.r, center, radius)
    return trimming_interpolation(space.r, space.k,
                                  averaged_taylor(source, chart, space.r + 1, center, radius))


def local_taylor_dofs(space: FESpace, t: int, source) -> np.ndarray:
    chart = space.mesh.chart(t)
    center, radius = _taylor_ball(space, t)
    if space.family is Family.FULL:
        a = averaged_taylor(source, chart, space.r, center, radius)
        return space.element.dof_matrix(space.r) @ a.vector()
    a = averaged_taylor(source, chart, space.r + 1, center, radius)
    return space.element.dof_matrix(space.r + 1) @ a.vector()


def commuting_partner(space: FESpace, t: int, dsource) -> PolyForm:
    """Q_T com d P_T ω = Q_T dω: Q^{r-1} (família P) ou I^{k+1}_r ∘ Q^r (família Pminus)."""
    if dsource.form_degree != space.k + 1:
        raise ProjectionError(f"Derivada de grau {dsource.form_degree}, esperado {space.k + 1}")
    chart = space.mesh.chart(t)
    center, radius = _taylor_ball(space, t)
    if space.family is Family.FULL:
        return averaged_taylor(dsource, chart, space.r - 1, center, radius)
    a = averaged_taylor(dsource, chart, space.r, center, radius)
    return trimming_interpolation(space.r, space.k + 1, a.with_bound(space.r))


def local_dofs(space: FESpace, t: int, source, backend: Union[str, Backend]) -> np.ndarray:
    backend = Backend.parse(backend)
    if backend is Backend.L2:
        return local_l2_dofs(space, t, source)
    return local_taylor_dofs(space, t, source)


# ============================================================================
# PROJEÇÃO GLOBAL
# ============================================================================

def broken_projection(space: FESpace, source, backend: Union[str, Backend]) -> BrokenField:
    """{P_T ω}_T em todas as células."""
    pieces = {t: space.element.combine(local_dofs(space, t, source, backend)) for t in space.mesh.cell_ids}
    return BrokenField(space.mesh, space.k, pieces)


def _weight_table(space: FESpace, weights: WeightScheme) -> np.ndarray:
    table = np.zeros(space.cell_dofs.shape)
    for row, t in enumerate(space.mesh.cell_ids):
        for l, g in enumerate(space.cell_dofs[row]):
            table[row, l] = weights.weight(space.dofs[g][0], t)
    return table


def project(space: FESpace, source, weights: WeightScheme, backend: Union[str, Backend] = Backend.L2) -> FEFunction:
    """𝒫ω: coeficiente de (S, i) = Σ_{T ∋ S} c(S, T) φ*_{S,i}(P_T ω); S ∈ 𝒰 fica nulo."""
    backend = Backend.parse(backend)
    if source.form_degree != space.k:
        raise ProjectionError(f"Campo de grau {source.form_degree} projetado em espaço de grau {space.k}")
    local = np.array([local_dofs(space, t, source, backend) for t in space.mesh.cell_ids])
    table = _weight_table(space, weights)
    coefficients = np.zeros(space.dim)
    np.add.at(coefficients, space.cell_dofs.ravel(), (table * local).ravel())
    return space.from_global(coefficients)
