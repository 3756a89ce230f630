"""
feecavg - Proxies Vetoriais
Tradução entre formas diferenciais e cálculo vetorial em 2D/3D: espaços
nomeados (Lagrange, Nédélec de 1ª e 2ª espécie, BDM, RT) e a identificação
de d com grad, rot e div.
"""

import logging
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
import sympy

from analysis import error_report
from errors import FESpaceError
from feec_fields import X, field_from_expressions, symbolic_exterior
from fespace import FEFunction, FESpace, Family, evaluate_fe
from mesh import BoundarySubcomplex, SimplicialComplex
from polyform import basis_full, basis_trimmed, span_residual
from projection import WeightScheme, make_weights, project
from quadrature import FieldSample

logger = logging.getLogger("feecavg.vecproxy")


class ProxyKind(Enum):
    SCALAR = "scalar"          # k = 0
    TANGENTIAL = "tangential"  # k = 1, u_i dx_i
    FLUX = "flux"              # k = n-1
    DENSITY = "density"        # k = n


def form_degree_of(kind: ProxyKind, n: int) -> int:
    return {ProxyKind.SCALAR: 0, ProxyKind.TANGENTIAL: 1, ProxyKind.FLUX: n - 1, ProxyKind.DENSITY: n}[kind]


# (família, grau da forma em função de n, proxy)
NAMED_SPACES = {
    "BDM": (Family.FULL, lambda n: n - 1, ProxyKind.FLUX),
    "Lagrange": (Family.FULL, lambda n: 0, ProxyKind.SCALAR),
    "Ned1": (Family.TRIMMED, lambda n: 1, ProxyKind.TANGENTIAL),
    "Ned2": (Family.FULL, lambda n: 1, ProxyKind.TANGENTIAL),
    "RT": (Family.TRIMMED, lambda n: n - 1, ProxyKind.FLUX),
}


def named_params(name: str, n: int) -> tuple[Family, int, ProxyKind]:
    if name not in NAMED_SPACES:
        raise FESpaceError(f"Espaço nomeado desconhecido: '{name}'")
    if n not in (2, 3):
        raise FESpaceError(f"Espaço '{name}' só existe em dimensão 2 ou 3, recebido {n}")
    family, degree, kind = NAMED_SPACES[name]
    return family, degree(n), kind


def named_space(name: str, mesh: SimplicialComplex, r: int,
                boundary: Optional[BoundarySubcomplex] = None) -> FESpace:
    family, k, _ = named_params(name, mesh.n)
    return FESpace(mesh, family, r, k, boundary)


def reference_basis(name: str, n: int, r: int):
    family, k, _ = named_params(name, n)
    return basis_full(n, r, k) if family is Family.FULL else basis_trimmed(n, r, k)


def inclusion_residual(small: tuple[str, int], big: tuple[str, int], n: int) -> float:
    """max resíduo de mínimos quadrados da base de `small` no espaço gerado por `big`."""
    (a, ra), (b, rb) = small, big
    if named_params(a, n)[1] != named_params(b, n)[1]:
        raise FESpaceError(f"Espaços '{a}' e '{b}' têm graus de forma diferentes")
    target = reference_basis(b, n, rb)
    return max(span_residual(target, f) for f in reference_basis(a, n, ra))


# ============================================================================
# IDENTIFICAÇÃO FORMA ↔ VETOR
# ============================================================================

def _flux_matrix(n: int) -> np.ndarray:
    """Componentes da (n-1)-forma em função do vetor: ω = M v."""
    if n == 3:
        # dx0∧dx1 = v3, dx0∧dx2 = -v2, dx1∧dx2 = v1
        return np.array([[0, 0, 1], [0, -1, 0], [1, 0, 0]], dtype=float)
    # dx0 = -v2, dx1 = v1
    return np.array([[0, -1], [1, 0]], dtype=float)


def proxy_to_form_matrix(kind: ProxyKind, n: int) -> np.ndarray:
    if kind is ProxyKind.FLUX:
        return _flux_matrix(n)
    size = n if kind is ProxyKind.TANGENTIAL else 1
    return np.eye(size)


def to_form_components(kind: ProxyKind, n: int, vectors: np.ndarray) -> np.ndarray:
    return np.asarray(vectors, dtype=float) @ proxy_to_form_matrix(kind, n).T


def to_proxy_components(kind: ProxyKind, n: int, components: np.ndarray) -> np.ndarray:
    # as matrizes são ortogonais
    return np.asarray(components, dtype=float) @ proxy_to_form_matrix(kind, n)


class VectorProxyField:
    """Campo em linguagem vetorial apoiado numa FieldSample de forma."""

    def __init__(self, kind: ProxyKind, sample: FieldSample):
        if sample.form_degree != form_degree_of(kind, sample.dim):
            raise FESpaceError(f"Proxy {kind.value} incompatível com {sample.form_degree}-forma em R^{sample.dim}")
        self.kind = kind
        self.sample = sample

    @property
    def dim(self) -> int:
        return self.sample.dim

    def values(self, x: np.ndarray) -> np.ndarray:
        return to_proxy_components(self.kind, self.dim, self.sample.values(x))

    def __repr__(self):
        return f"VectorProxyField({self.kind.value}, {self.sample.name})"


def proxy_field(name: str, kind: Union[str, ProxyKind], n: int, components: Sequence) -> VectorProxyField:
    """Campo escalar/vetorial dado por expressões sympy, convertido para forma."""
    kind = ProxyKind(kind)
    M = proxy_to_form_matrix(kind, n)
    exprs = [sympy.sympify(c) for c in components]
    if len(exprs) != M.shape[1]:
        raise FESpaceError(f"Proxy {kind.value} em R^{n} espera {M.shape[1]} componentes, recebeu {len(exprs)}")
    form = [sum(int(M[i, j]) * exprs[j] for j in range(len(exprs))) for i in range(M.shape[0])]
    return VectorProxyField(kind, field_from_expressions(name, n, form_degree_of(kind, n), form))


def proxy_to_form(v: VectorProxyField) -> FieldSample:
    return v.sample


def form_to_proxy(sample: FieldSample, kind: Union[str, ProxyKind]) -> VectorProxyField:
    return VectorProxyField(ProxyKind(kind), sample)


def _next_kind(kind: ProxyKind, n: int) -> ProxyKind:
    k = form_degree_of(kind, n) + 1
    if k == n:
        return ProxyKind.DENSITY
    if k == n - 1:
        return ProxyKind.FLUX
    raise FESpaceError(f"Sem proxy para d de {kind.value} em R^{n}")


def proxy_derivative(kind: Union[str, ProxyKind], n: int, components: Sequence) -> tuple[ProxyKind, tuple]:
    """d lido em linguagem vetorial: grad, rot (curl) ou div, conforme o proxy."""
    kind = ProxyKind(kind)
    k = form_degree_of(kind, n)
    M = proxy_to_form_matrix(kind, n)
    exprs = [sympy.sympify(c) for c in components]
    form = [sum(int(M[i, j]) * exprs[j] for j in range(len(exprs))) for i in range(M.shape[0])]
    dform = symbolic_exterior(form, n, k)
    target = _next_kind(kind, n) if k > 0 else ProxyKind.TANGENTIAL
    Mt = proxy_to_form_matrix(target, n)
    proxy = tuple(sympy.simplify(sum(int(Mt[i, j]) * dform[i] for i in range(Mt.shape[0])))
                  for j in range(Mt.shape[1]))
    return target, proxy


def grad(f, n: int) -> tuple:
    return tuple(sympy.diff(f, X[i]) for i in range(n))


def curl(u: Sequence, n: int) -> tuple:
    if n == 2:
        return (sympy.diff(u[1], X[0]) - sympy.diff(u[0], X[1]),)
    return (sympy.diff(u[2], X[1]) - sympy.diff(u[1], X[2]),
            sympy.diff(u[0], X[2]) - sympy.diff(u[2], X[0]),
            sympy.diff(u[1], X[0]) - sympy.diff(u[0], X[1]))


def div(u: Sequence, n: int) -> tuple:
    return (sum(sympy.diff(u[i], X[i]) for i in range(n)),)


def evaluate_proxy(u: FEFunction, kind: Union[str, ProxyKind], t: int, point: Sequence[float]) -> np.ndarray:
    values = np.array(evaluate_fe(u.space, u, t, point))
    return to_proxy_components(ProxyKind(kind), u.space.mesh.n, values)


def projection_named(name: str, mesh: SimplicialComplex, r: int, boundary: Optional[BoundarySubcomplex],
                     field: Union[FieldSample, VectorProxyField], weights: Union[str, WeightScheme] = "eg",
                     backend: str = "taylor", norms=((0, 2),)):
    """𝒫 no espaço nomeado, com o relatório de erros; 𝒰 mascara os graus de liberdade."""
    sample = field.sample if isinstance(field, VectorProxyField) else field
    space = named_space(name, mesh, r, boundary)
    scheme = weights if isinstance(weights, WeightScheme) else make_weights(weights, mesh, space.boundary)
    u = project(space, sample, scheme, backend)
    report = error_report(space, u, sample, norms)
    logger.info("%s_%d: %s", name, r, ", ".join(f"{k}={e.value:.4e}" for k, e in report.items()))
    return u, report
