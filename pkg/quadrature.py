"""
feecavg - Quadratura
Regras de integração em simplexos e na bola unitária, integrais de k-formas,
produto interno L² e normas L^p / seminormas de Sobolev de ordem inteira.

Qualquer objeto que exponha cell_values(chart, z) e cell_partials(chart, z, α)
(componentes ambientes nos pontos de referência z da célula) pode ser medido:
campos amostrados, funções de elementos finitos, campos quebrados e diferenças.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from math import factorial, prod
from typing import Callable, Optional, Protocol, Sequence, Union

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from errors import QuadratureError
from polyform import PolyForm, SimplexChart, form_indices, multi_indices

logger = logging.getLogger("feecavg.quadrature")

MAX_ORDER = 14
LINF_ORDER = 10
EXACTNESS_TOL = 1e-13
ANY_ORDER = float("inf")


def default_order(r: int) -> int:
    """Ordem padrão 2r + 4, limitada pela maior regra disponível."""
    return min(2 * r + 4, MAX_ORDER)


def monomial_integral(alpha: Sequence[int]) -> float:
    """∫ z^α sobre o simplexo de referência de dimensão len(α)."""
    d = len(alpha)
    return prod(factorial(a) for a in alpha) / factorial(sum(alpha) + d)


# ============================================================================
# REGRAS
# ============================================================================

@dataclass(frozen=True)
class QuadratureRule:
    """Regra com nós baricêntricos e pesos normalizados (soma 1)."""
    dim: int
    exactness_order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def ref_points(self) -> np.ndarray:
        """Nós em coordenadas de referência (z_i = λ_i, i ≥ 1)."""
        return self.nodes[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _collapsed_points(d: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Produto colapsado de Gauss–Jacobi; pesos somam 1/d!."""
    if d == 0:
        return np.zeros((1, 0)), np.ones(1)
    t, w = roots_jacobi(q, d - 1, 0)
    x = (1.0 + t) / 2.0
    w = w / 2.0 ** d
    sub_pts, sub_w = _collapsed_points(d - 1, q)
    pts, wts = [], []
    for xi, wi in zip(x, w):
        block = np.empty((len(sub_w), d))
        block[:, 0] = xi
        block[:, 1:] = (1.0 - xi) * sub_pts
        pts.append(block)
        wts.append(wi * sub_w)
    return np.vstack(pts), np.concatenate(wts)


@lru_cache(maxsize=None)
def simplex_rule(dim: int, order: int) -> QuadratureRule:
    """Regra exata até a ordem pedida no simplexo de referência de dimensão dim."""
    if dim not in (0, 1, 2, 3):
        raise QuadratureError(f"Dimensão {dim} sem regra de quadratura")
    if order < 0 or order > MAX_ORDER:
        raise QuadratureError(f"Ordem {order} não suportada (máximo {MAX_ORDER})")
    q = order // 2 + 1
    pts, wts = _collapsed_points(dim, q)
    wts = wts * factorial(dim)
    nodes = np.hstack([1.0 - pts.sum(axis=1, keepdims=True), pts])
    rule = QuadratureRule(dim, order, nodes, wts)
    _verify_rule(rule)
    return rule


def _verify_rule(rule: QuadratureRule):
    z = rule.ref_points
    for alpha in multi_indices(rule.dim, rule.exactness_order):
        approx = rule.weights @ np.prod(z ** np.array(alpha), axis=1) if rule.dim else rule.weights.sum()
        exact = monomial_integral(alpha) * factorial(rule.dim)
        if abs(approx - exact) > EXACTNESS_TOL:
            raise QuadratureError(
                f"Regra (dim={rule.dim}, ordem={rule.exactness_order}) falha no monômio {alpha}: "
                f"{approx} != {exact}")


@lru_cache(maxsize=None)
def ball_rule(n: int, radial: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Regra produto na bola unitária de R^n; os pesos somam o volume da bola."""
    t, w = roots_legendre(radial)
    rho = (1.0 + t) / 2.0
    if n == 2:
        angles = 2.0 * np.pi * np.arange(32) / 32
        wr = w / 2.0 * rho
        pts = np.array([[r * np.cos(a), r * np.sin(a)] for r in rho for a in angles])
        wts = np.array([wi * 2.0 * np.pi / 32 for wi in wr for _ in angles])
        return pts, wts
    if n == 3:
        c, wc = roots_legendre(12)
        phis = 2.0 * np.pi * np.arange(24) / 24
        wr = w / 2.0 * rho ** 2
        pts, wts = [], []
        for r, wri in zip(rho, wr):
            for ct, wct in zip(c, wc):
                st = np.sqrt(1.0 - ct ** 2)
                for phi in phis:
                    pts.append([r * st * np.cos(phi), r * st * np.sin(phi), r * ct])
                    wts.append(wri * wct * 2.0 * np.pi / 24)
        return np.array(pts), np.array(wts)
    raise QuadratureError(f"Regra na bola disponível apenas para n ∈ {{2, 3}}, recebido {n}")


# ============================================================================
# CAMPOS
# ============================================================================

class CellField(Protocol):
    form_degree: int

    def cell_values(self, chart: SimplexChart, z: np.ndarray) -> np.ndarray: ...

    def cell_partials(self, chart: SimplexChart, z: np.ndarray, alpha: Sequence[int]) -> np.ndarray: ...


Evaluator = Callable[[np.ndarray], np.ndarray]
DerivativeEvaluator = Callable[[np.ndarray, tuple[int, ...]], np.ndarray]


@dataclass(frozen=True)
class FieldSample:
    """Forma diferencial dada por avaliadores em coordenadas ambientes.

    evaluator(x) devolve (npts, C(n,k)) componentes em relação a dx_σ;
    derivative(x, α) devolve ∂^α dessas componentes para |α| ≤ max_derivative_order
    (ANY_ORDER quando o avaliador deriva simbolicamente).
    kink_planes lista hiperplanos (eixo, valor) fora dos quais o campo é suave.
    """
    form_degree: int
    dim: int
    evaluator: Evaluator
    derivative: Optional[DerivativeEvaluator] = None
    max_derivative_order: float = 0
    name: str = "field"
    kink_planes: tuple[tuple[int, float], ...] = ()
    exterior: Optional["FieldSample"] = field(default=None, repr=False)

    @property
    def ncomp(self) -> int:
        return len(form_indices(self.dim, self.form_degree))

    @property
    def piecewise(self) -> bool:
        return bool(self.kink_planes)

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.asarray(self.evaluator(x), dtype=float).reshape(len(x), self.ncomp)
        return out

    def partials(self, x: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) == 0:
            return self.values(x)
        if self.derivative is None or sum(alpha) > self.max_derivative_order:
            raise QuadratureError(
                f"Campo '{self.name}' não fornece derivadas de ordem {sum(alpha)} "
                f"(máximo {self.max_derivative_order if self.derivative else 0:g})")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.derivative(x, alpha), dtype=float).reshape(len(x), self.ncomp)

    def cell_values(self, chart: SimplexChart, z: np.ndarray) -> np.ndarray:
        return self.values(chart.to_physical(z))

    def cell_partials(self, chart: SimplexChart, z: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
        return self.partials(chart.to_physical(z), alpha)

    def scaled(self, c: float) -> "FieldSample":
        return combine_fields([(c, self)])


def combine_fields(terms: Sequence[tuple[float, FieldSample]], name: Optional[str] = None) -> FieldSample:
    """Combinação linear Σ c_i ω_i de campos de mesmo grau."""
    if not terms:
        raise QuadratureError("Combinação linear vazia")
    k, n = terms[0][1].form_degree, terms[0][1].dim
    if any((f.form_degree, f.dim) != (k, n) for _, f in terms):
        raise QuadratureError("Combinação de campos com graus ou dimensões diferentes")
    order = min(f.max_derivative_order if f.derivative else 0 for _, f in terms)

    def evaluator(x):
        return sum(c * f.values(x) for c, f in terms)

    def derivative(x, alpha):
        return sum(c * f.partials(x, alpha) for c, f in terms)

    exterior = None
    if all(f.exterior is not None for _, f in terms):
        exterior = combine_fields([(c, f.exterior) for c, f in terms])
    planes = tuple(sorted({p for _, f in terms for p in f.kink_planes}))
    label = name or " + ".join(f"{c:g}*{f.name}" for c, f in terms)
    return FieldSample(k, n, evaluator, derivative if order else None, order, label, planes, exterior)


@dataclass(frozen=True)
class FieldDifference:
    """a − b, ambos medidos célula a célula."""
    a: object
    b: object

    @property
    def form_degree(self) -> int:
        return self.a.form_degree

    def cell_values(self, chart, z):
        return cell_values(self.a, chart, z) - cell_values(self.b, chart, z)

    def cell_partials(self, chart, z, alpha):
        return cell_partials(self.a, chart, z, alpha) - cell_partials(self.b, chart, z, alpha)


def difference(a, b) -> FieldDifference:
    if a.form_degree != b.form_degree:
        raise QuadratureError(f"Diferença entre formas de graus {a.form_degree} e {b.form_degree}")
    return FieldDifference(a, b)


def cell_values(obj: Union[PolyForm, CellField], chart: SimplexChart, z: np.ndarray) -> np.ndarray:
    """Componentes ambientes; PolyForm é interpretada na referência da célula."""
    if isinstance(obj, PolyForm):
        return chart.ambient_values(obj, z)
    return obj.cell_values(chart, z)


def cell_partials(obj, chart: SimplexChart, z: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
    if isinstance(obj, PolyForm):
        return chart.ambient_values(chart.ambient_partial(obj, alpha), z)
    return obj.cell_partials(chart, z, alpha)


# ============================================================================
# INTEGRAIS
# ============================================================================

def integrate_form(a: Union[PolyForm, FieldSample], chart: SimplexChart, order: Optional[int] = None) -> float:
    """∫_S a para uma k-forma com k = dim S, na orientação de S.

    PolyForm é tomada nas coordenadas de referência de S; FieldSample é
    avaliado nos pontos físicos e puxado para a referência.
    """
    d = chart.dim
    if a.form_degree != d:
        raise QuadratureError(f"Forma de grau {a.form_degree} integrada sobre simplexo de dimensão {d}")
    if isinstance(a, PolyForm):
        if a.sim_dim != d:
            raise QuadratureError(f"Forma sobre d={a.sim_dim} integrada num simplexo de dimensão {d}")
        rule = simplex_rule(d, min(a.poly_degree_bound if order is None else order, MAX_ORDER))
        vals = a.values(rule.ref_points)[:, 0]
    else:
        rule = simplex_rule(d, MAX_ORDER if order is None else order)
        amb = a.values(chart.to_physical(rule.ref_points))
        vals = (amb @ chart.pullback_matrix(d).T)[:, 0]
    return chart.orientation * float(rule.weights @ vals) / factorial(d)


def inner_product_l2(a, b, chart: SimplexChart, order: int = MAX_ORDER) -> float:
    """∫_T ⟨a, b⟩ com a métrica euclidiana das componentes ambientes."""
    if a.form_degree != b.form_degree:
        raise QuadratureError(f"Produto interno entre graus {a.form_degree} e {b.form_degree}")
    rule = simplex_rule(chart.dim, order)
    z = rule.ref_points
    va, vb = cell_values(a, chart, z), cell_values(b, chart, z)
    return chart.volume * float(rule.weights @ np.einsum("qc,qc->q", va, vb))


# ============================================================================
# NORMAS
# ============================================================================

def normalize_p(p) -> float:
    if isinstance(p, str) and p.lower() in ("inf", "infinity"):
        return np.inf
    try:
        value = float(p)
    except (TypeError, ValueError):
        raise QuadratureError(f"Expoente p inválido: {p!r}")
    if value not in (1.0, 2.0, np.inf):
        raise QuadratureError(f"Expoente p={p} fora de {{1, 2, inf}}")
    return value


def _cell_norm(values_fn: Callable[[np.ndarray], np.ndarray], chart: SimplexChart, p: float, order: int) -> float:
    if p == np.inf:
        rule = simplex_rule(chart.dim, LINF_ORDER)
        pointwise = np.linalg.norm(values_fn(rule.ref_points), axis=1)
        return float(pointwise.max()) if pointwise.size else 0.0
    rule = simplex_rule(chart.dim, order)
    pointwise = np.linalg.norm(values_fn(rule.ref_points), axis=1)
    return float((chart.volume * (rule.weights @ pointwise ** p)) ** (1.0 / p))


def aggregate(cell_norms: np.ndarray, p) -> float:
    """Combina normas por célula na norma global correspondente."""
    p = normalize_p(p)
    cell_norms = np.asarray(cell_norms, dtype=float)
    if cell_norms.size == 0:
        return 0.0
    if p == np.inf:
        return float(cell_norms.max())
    return float((cell_norms ** p).sum() ** (1.0 / p))


def cell_lp_norms(err, charts: Sequence[SimplexChart], p, order: int = MAX_ORDER) -> np.ndarray:
    p = normalize_p(p)
    return np.array([_cell_norm(lambda z, c=c: cell_values(err, c, z), c, p, order) for c in charts])


def lp_norm(err, charts: Sequence[SimplexChart], p, order: int = MAX_ORDER) -> float:
    """‖err‖_{L^p} sobre as células dadas; p = inf usa os nós da regra de ordem 10."""
    return aggregate(cell_lp_norms(err, charts, p, order), p)


def _alphas(n: int, m: int) -> list[tuple[int, ...]]:
    return [a for a in product(range(m + 1), repeat=n) if sum(a) == m]


def cell_sobolev_seminorms(err, charts: Sequence[SimplexChart], m: int, p,
                           order: int = MAX_ORDER) -> np.ndarray:
    """Por célula e por multi-índice: matriz (ncells, n_α) de ‖∂^α err‖_{L^p(T)}."""
    if m < 1:
        raise QuadratureError(f"Ordem de seminorma deve ser ≥ 1, recebido {m}")
    p = normalize_p(p)
    if not charts:
        return np.zeros((0, 0))
    alphas = _alphas(charts[0].ambient_dim, m)
    out = np.zeros((len(charts), len(alphas)))
    for i, chart in enumerate(charts):
        for j, alpha in enumerate(alphas):
            out[i, j] = _cell_norm(lambda z, a=alpha, c=chart: cell_partials(err, c, z, a), chart, p, order)
    return out


def sobolev_seminorm(err, charts: Sequence[SimplexChart], m: int, p, order: int = MAX_ORDER) -> float:
    """|err|_{W^{m,p}} = Σ_{|α|=m} ‖∂^α err‖_{L^p}, com derivadas ambientes."""
    table = cell_sobolev_seminorms(err, charts, m, p, order)
    if table.size == 0:
        return 0.0
    return float(sum(aggregate(table[:, j], p) for j in range(table.shape[1])))
