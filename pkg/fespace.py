"""
feecavg - Espaços de Elementos Finitos
Espaços globais conformes das famílias P (completa) e Pminus (aparada),
graus de liberdade ω ↦ ∫_S η ∧ tr_S ω, bases duais locais (biortogonais) e
máscara de condições de contorno pelo subcomplexo 𝒰.

Os graus de liberdade são intrínsecos e a ordem local dos vértices de cada
célula coincide com a ordem global, portanto a tabela do elemento de
referência vale para todas as células sem trocas de sinal.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import combinations
from math import factorial
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from errors import FESpaceError, UnisolvenceError
from mesh import BoundarySubcomplex, SimplicialComplex, Simplex, boundary_subcomplex
from polyform import (
    PolyForm, SimplexChart, basis_full, basis_trimmed, exterior_derivative, form_indices, multi_indices,
    trace, trace_matrix, wedge,
)
from quadrature import cell_values, default_order, monomial_integral, simplex_rule

logger = logging.getLogger("feecavg.fespace")

CONDITION_LIMIT = 1e12


class Family(Enum):
    FULL = "P"
    TRIMMED = "Pminus"

    @classmethod
    def parse(cls, value: Union[str, "Family"]) -> "Family":
        if isinstance(value, Family):
            return value
        aliases = {"P": cls.FULL, "A": cls.FULL, "full": cls.FULL,
                   "Pminus": cls.TRIMMED, "B": cls.TRIMMED, "trimmed": cls.TRIMMED}
        if value not in aliases:
            raise FESpaceError(f"Família desconhecida: '{value}' (use 'P' ou 'Pminus')")
        return aliases[value]


def reference_integral(a: PolyForm) -> float:
    """∫ de uma m-forma sobre o m-simplexo de referência, exato a partir dos coeficientes."""
    if a.form_degree != a.sim_dim:
        raise FESpaceError(f"Integral de forma de grau {a.form_degree} sobre simplexo de dimensão {a.sim_dim}")
    if a.sim_dim == 0:
        return float(a.coeffs[0])
    return float(sum(a.coeffs[alpha + (0,)] * monomial_integral(alpha)
                     for alpha in multi_indices(a.sim_dim, a.poly_degree_bound)))


@lru_cache(maxsize=None)
def weight_basis(family: Family, r: int, k: int, m: int) -> tuple[PolyForm, ...]:
    """Formas-peso η dos graus de liberdade num m-simplexo.

    P:      η ∈ P⁻_{r+k-m} Λ^{m-k}
    Pminus: η ∈ P_{r+k-m-1} Λ^{m-k}
    """
    if m < k:
        return ()
    if family is Family.FULL:
        degree = r + k - m
        return basis_trimmed(m, degree, m - k) if degree >= 1 else ()
    degree = r + k - m - 1
    return basis_full(m, degree, m - k) if degree >= 0 else ()


@lru_cache(maxsize=None)
def _weight_integrals(family: Family, r: int, k: int, m: int, q: int) -> np.ndarray:
    """W[i, j] = ∫ η_i ∧ b_j, b_j a base monomial de P_q Λ^k no m-simplexo."""
    etas = weight_basis(family, r, k, m)
    monos = basis_full(m, q, k)
    return np.array([[reference_integral(wedge(eta, b)) for b in monos] for eta in etas]).reshape(len(etas), len(monos))


@lru_cache(maxsize=None)
def _weight_pair_values(family: Family, r: int, k: int, m: int, order: int) -> np.ndarray:
    """G[i, q, σ] = (η_i ∧ dx_σ)(z_q) nos nós da regra de ordem dada."""
    etas = weight_basis(family, r, k, m)
    sigmas = form_indices(m, k)
    z = simplex_rule(m, order).ref_points
    out = np.zeros((len(etas), len(z), len(sigmas)))
    for i, eta in enumerate(etas):
        for c, sigma in enumerate(sigmas):
            out[i, :, c] = wedge(eta, PolyForm.monomial(m, k, (0,) * m, sigma)).values(z)[:, 0]
    return out


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Tabelas do n-simplexo de referência para (família, r, k)."""
    family: Family
    r: int
    k: int
    n: int
    shape_basis: tuple[PolyForm, ...]
    local_dofs: tuple[tuple[tuple[int, ...], int], ...]
    dual: np.ndarray
    condition: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def nloc(self) -> int:
        return len(self.local_dofs)

    def faces(self) -> list[tuple[int, ...]]:
        out = []
        for face, _ in self.local_dofs:
            if not out or out[-1] != face:
                out.append(face)
        return out

    def dof_matrix(self, q: int) -> np.ndarray:
        """D_q: valores dos graus de liberdade locais = D_q @ a.vector(q)."""
        if q not in self._cache:
            rows = []
            for face in self.faces():
                W = _weight_integrals(self.family, self.r, self.k, len(face) - 1, q)
                rows.append(W @ trace_matrix(self.n, face, self.k, q))
            self._cache[q] = np.vstack(rows)
        return self._cache[q]

    def dual_form(self, index: int) -> PolyForm:
        return PolyForm.from_vector(self.n, self.k, self.r, self.dual[index])

    def dual_forms(self) -> list[PolyForm]:
        if "forms" not in self._cache:
            self._cache["forms"] = [self.dual_form(l) for l in range(self.nloc)]
        return self._cache["forms"]

    def dual_derivatives(self) -> list[PolyForm]:
        if "derivatives" not in self._cache:
            self._cache["derivatives"] = [exterior_derivative(f) for f in self.dual_forms()]
        return self._cache["derivatives"]

    def combine(self, local_coeffs: np.ndarray) -> PolyForm:
        """Σ_l c_l ψ_l como forma na referência."""
        return PolyForm.from_vector(self.n, self.k, self.r, np.asarray(local_coeffs) @ self.dual)

    def interpolate(self, a: PolyForm) -> PolyForm:
        """Interpolação canônica (pelos graus de liberdade) de uma forma de referência."""
        return self.combine(self.dof_matrix(a.poly_degree_bound) @ a.vector())


@lru_cache(maxsize=None)
def reference_element(family: Family, r: int, k: int, n: int) -> ReferenceElement:
    if family is Family.FULL:
        shape = basis_full(n, r, k)
    else:
        shape = basis_trimmed(n, r, k)
    local = []
    for m in range(k, n + 1):
        count = len(weight_basis(family, r, k, m))
        for face in combinations(range(n + 1), m + 1):
            local.extend((face, i) for i in range(count))
    element = ReferenceElement(family, r, k, n, shape, tuple(local), np.zeros((0, 0)), 0.0)
    if len(local) != len(shape):
        raise UnisolvenceError(
            f"{len(local)} graus de liberdade para {len(shape)} funções de base "
            f"({family.value}, r={r}, k={k}, n={n})")
    B = np.array([b.vector() for b in shape])
    A = element.dof_matrix(r) @ B.T
    condition = float(np.linalg.cond(A))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise UnisolvenceError(
            f"Matriz local de graus de liberdade mal condicionada ({family.value}, r={r}, k={k}, n={n}): "
            f"cond = {condition:.3e}", condition)
    Q, R, perm = scipy.linalg.qr(A, pivoting=True)
    inv = np.zeros_like(A)
    inv[perm, :] = scipy.linalg.solve_triangular(R, Q.T)
    dual = inv.T @ B
    logger.debug("Elemento de referência (%s, r=%d, k=%d, n=%d): %d graus de liberdade, cond = %.3e",
                 family.value, r, k, n, len(local), condition)
    return ReferenceElement(family, r, k, n, shape, tuple(local), dual, condition, element._cache)


# ============================================================================
# ESPAÇO GLOBAL
# ============================================================================

@dataclass(frozen=True)
class DofFunctional:
    """ω ↦ ∫_S η ∧ tr_S ω, com η na referência de S."""
    simplex_id: int
    index: int
    weight: PolyForm

    @property
    def home_dim(self) -> int:
        return self.weight.sim_dim


class FESpace:
    """Espaço 𝒫Λ^k(𝒯, 𝒰) de uma família, com graus de liberdade globais (S, i)."""

    def __init__(self, mesh: SimplicialComplex, family: Union[str, Family], r: int, k: int,
                 boundary: Optional[BoundarySubcomplex] = None):
        family = Family.parse(family)
        n = mesh.n
        if not 0 <= k <= n:
            raise FESpaceError(f"Grau de forma k={k} fora de [0, {n}]")
        if k == 0 and family is Family.TRIMMED:
            logger.info("k = 0: família Pminus normalizada para P (P_r Λ^0 = P⁻_r Λ^0)")
            family = Family.FULL
        elif k == n and family is Family.FULL:
            logger.info("k = n: P_%d Λ^n normalizado para P⁻_%d Λ^n", r, r + 1)
            family, r = Family.TRIMMED, r + 1
        if r < 1:
            raise FESpaceError(f"Grau polinomial r={r} deve ser ≥ 1")
        self.mesh = mesh
        self.family = family
        self.r = r
        self.k = k
        self.boundary = boundary if boundary is not None else boundary_subcomplex(mesh, None)
        self.element = reference_element(family, r, k, n)

        self.dofs: list[tuple[int, int]] = []
        self._first: dict[int, int] = {}
        for s in mesh.simplices:
            count = len(weight_basis(family, r, k, s.dim))
            if count:
                self._first[s.id] = len(self.dofs)
                self.dofs.extend((s.id, i) for i in range(count))
        self.active = np.array([sid not in self.boundary for sid, _ in self.dofs], dtype=bool)
        self.active_index = np.full(len(self.dofs), -1, dtype=int)
        self.active_index[self.active] = np.arange(int(self.active.sum()))

        cell_ids = mesh.cell_ids
        self.cell_dofs = np.zeros((len(cell_ids), self.element.nloc), dtype=int)
        self._cell_row = {t: row for row, t in enumerate(cell_ids)}
        for row, t in enumerate(cell_ids):
            verts = mesh.simplex(t).vertex_ids
            for l, (face, i) in enumerate(self.element.local_dofs):
                sid = mesh.find(verts[j] for j in face).id
                self.cell_dofs[row, l] = self._first[sid] + i
        logger.debug("Espaço %s: %d graus de liberdade (%d ativos)", self, self.dim, self.num_active)

    @property
    def dim(self) -> int:
        return len(self.dofs)

    @property
    def num_active(self) -> int:
        return int(self.active.sum())

    def dof_index(self, simplex_id: int, i: int) -> int:
        if simplex_id not in self._first or i >= self.dofs_per_simplex(simplex_id):
            raise FESpaceError(f"Grau de liberdade ({simplex_id}, {i}) inexistente")
        return self._first[simplex_id] + i

    def dofs_per_simplex(self, simplex_id: int) -> int:
        return len(weight_basis(self.family, self.r, self.k, self.mesh.simplex(simplex_id).dim))

    def cell_row(self, t: int) -> int:
        if t not in self._cell_row:
            raise FESpaceError(f"Simplexo {t} não é célula")
        return self._cell_row[t]

    def local_dofs_of(self, t: int) -> np.ndarray:
        return self.cell_dofs[self.cell_row(t)]

    def dof_functionals(self, s: Union[Simplex, int]) -> list[DofFunctional]:
        s = self.mesh.simplex(s) if isinstance(s, int) else s
        etas = weight_basis(self.family, self.r, self.k, s.dim)
        return [DofFunctional(s.id, i, eta) for i, eta in enumerate(etas)]

    def local_dual_basis(self, t: int) -> dict[tuple[int, int], PolyForm]:
        """ψ^T_{S,i} para todos os (S, i) com S ⊆ T."""
        dofs = self.local_dofs_of(t)
        return {self.dofs[g]: self.element.dual_form(l) for l, g in enumerate(dofs)}

    def apply_dof(self, f: DofFunctional, a: PolyForm, t: int) -> float:
        """φ*(a) para a forma a na referência da célula t."""
        face = self.mesh.local_face(t, f.simplex_id)
        return reference_integral(wedge(f.weight, trace(a, face)))

    def global_shape_function(self, simplex_id: int, i: int) -> "FEFunction":
        g = self.dof_index(simplex_id, i)
        if not self.active[g]:
            raise FESpaceError(f"Grau de liberdade ({simplex_id}, {i}) é inativo (S ∈ 𝒰)")
        coeffs = np.zeros(self.num_active)
        coeffs[self.active_index[g]] = 1.0
        return FEFunction(self, coeffs)

    def zero(self) -> "FEFunction":
        return FEFunction(self, np.zeros(self.num_active))

    def random_member(self, rng: np.random.Generator) -> "FEFunction":
        return FEFunction(self, rng.uniform(-1.0, 1.0, self.num_active))

    def from_global(self, values: np.ndarray) -> "FEFunction":
        """Restringe um vetor sobre todos os graus de liberdade aos ativos."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise FESpaceError(f"Vetor global com formato {values.shape}, esperado ({self.dim},)")
        return FEFunction(self, values[self.active])

    def interpolate(self, source, order: Optional[int] = None) -> "FEFunction":
        """Interpolação canônica: aplica cada φ*_{S,i} ao campo por quadratura em S."""
        return self.from_global(self.dof_values(source, order))

    def local_basis_values(self, t: int, order: Optional[int] = None, derivative: bool = False):
        """Valores ambientes de ψ_l (ou dψ_l) nos nós: (nloc, nq, C), com a regra usada."""
        chart = self.mesh.chart(t)
        order = default_order(self.r) if order is None else order
        rule = simplex_rule(self.mesh.n, order)
        forms = self.element.dual_derivatives() if derivative else self.element.dual_forms()
        values = np.stack([chart.ambient_values(f, rule.ref_points) for f in forms])
        return values, rule

    def local_mass(self, t: int, order: Optional[int] = None, derivative: bool = False) -> np.ndarray:
        """M_ij = ∫_T ⟨ψ_i, ψ_j⟩ (ou ⟨dψ_i, dψ_j⟩) na métrica euclidiana ambiente."""
        values, rule = self.local_basis_values(t, order, derivative)
        return self.mesh.volume(t) * np.einsum("q,iqc,jqc->ij", rule.weights, values, values)

    def dof_values(self, source, order: Optional[int] = None) -> np.ndarray:
        """Valores de todos os graus de liberdade globais de um campo medível célula a célula."""
        order = default_order(self.r + 1) if order is None else order
        out = np.zeros(self.dim)
        mesh = self.mesh
        for sid, first in self._first.items():
            s = mesh.simplex(sid)
            m = s.dim
            t = mesh.cells_containing(sid)[0]
            chart_s, chart_t = mesh.chart(s), mesh.chart(t)
            rule = simplex_rule(m, order)
            z_t = chart_t.to_reference(chart_s.to_physical(rule.ref_points))
            amb = cell_values(source, chart_t, z_t)
            tr = amb @ chart_s.pullback_matrix(self.k).T
            pairs = _weight_pair_values(self.family, self.r, self.k, m, order)
            out[first:first + len(pairs)] = np.einsum("q,iqc,qc->i", rule.weights, pairs, tr) / factorial(m)
        return out

    def __repr__(self):
        return f"FESpace({self.family.value}, r={self.r}, k={self.k}, cells={self.mesh.num_cells})"


def build_space(mesh: SimplicialComplex, family: Union[str, Family], r: int, k: int,
                boundary: Optional[BoundarySubcomplex] = None) -> FESpace:
    return FESpace(mesh, family, r, k, boundary)


# ============================================================================
# FUNÇÕES
# ============================================================================

class FEFunction:
    """Vetor de coeficientes sobre os graus de liberdade ativos de um espaço."""

    def __init__(self, space: FESpace, coefficients: np.ndarray):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.num_active,):
            raise FESpaceError(
                f"Vetor com formato {coefficients.shape}, esperado ({space.num_active},) graus ativos")
        self.space = space
        self.coefficients = coefficients
        self._local: dict[int, PolyForm] = {}

    @property
    def form_degree(self) -> int:
        return self.space.k

    def global_values(self) -> np.ndarray:
        """Coeficientes sobre todos os graus de liberdade (inativos nulos)."""
        out = np.zeros(self.space.dim)
        out[self.space.active] = self.coefficients
        return out

    def local_form(self, t: int) -> PolyForm:
        if t not in self._local:
            full = self.global_values()
            self._local[t] = self.space.element.combine(full[self.space.local_dofs_of(t)])
        return self._local[t]

    def cell_values(self, chart: SimplexChart, z: np.ndarray) -> np.ndarray:
        return chart.ambient_values(self.local_form(chart.simplex_id), z)

    def cell_partials(self, chart: SimplexChart, z: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
        local = self.local_form(chart.simplex_id)
        return chart.ambient_values(chart.ambient_partial(local, alpha), z)

    def trace_on(self, t: int, s: int) -> PolyForm:
        """Traço da restrição à célula t sobre o subsimplexo s (referência de s)."""
        return trace(self.local_form(t), self.space.mesh.local_face(t, s))

    def __add__(self, other: "FEFunction") -> "FEFunction":
        self._check_same(other)
        return FEFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other: "FEFunction") -> "FEFunction":
        self._check_same(other)
        return FEFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, scalar: float) -> "FEFunction":
        return FEFunction(self.space, float(scalar) * self.coefficients)

    __rmul__ = __mul__

    def _check_same(self, other: "FEFunction"):
        if other.space is not self.space:
            raise FESpaceError("Operação entre funções de espaços diferentes")

    def __repr__(self):
        return f"FEFunction({self.space}, |c|∞={np.abs(self.coefficients).max(initial=0.0):.3e})"


def evaluate_fe(space: FESpace, u: FEFunction, t: int, point: Sequence[float]) -> tuple[float, ...]:
    """Componentes ambientes de u no ponto físico dentro da célula t."""
    chart = space.mesh.chart(t)
    point = np.asarray(point, dtype=float).reshape(1, -1)
    if not chart.contains(point, tol=1e-10)[0]:
        raise FESpaceError(f"Ponto {point.ravel()} fora da célula {t}")
    return tuple(u.cell_values(chart, chart.to_reference(point))[0])
