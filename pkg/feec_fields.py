"""
feecavg - Catálogo de Campos
Formas diferenciais analíticas com derivadas exatas (sympy), usadas como
campos de teste das projeções e dos estudos de convergência.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import sympy

from errors import ConfigError
from polyform import form_indices
from quadrature import ANY_ORDER, FieldSample

logger = logging.getLogger("feecavg.fields")

X = sympy.symbols("x0:3", real=True)


# ============================================================================
# CONSTRUÇÃO
# ============================================================================

def _lambdify(expr, n: int) -> Callable[[np.ndarray], np.ndarray]:
    fn = sympy.lambdify(X[:n], expr, modules="numpy")

    def evaluate(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(fn(*x.T), dtype=float), (len(x),))
    return evaluate


def symbolic_exterior(components: Sequence, n: int, k: int) -> tuple:
    """Componentes de dω: (dω)_τ = Σ_j (-1)^j ∂_{τ_j} ω_{τ sem τ_j}."""
    index = {sigma: i for i, sigma in enumerate(form_indices(n, k))}
    out = []
    for tau in form_indices(n, k + 1):
        term = sympy.Integer(0)
        for j, axis in enumerate(tau):
            rest = tau[:j] + tau[j + 1:]
            term += (-1) ** j * sympy.diff(components[index[rest]], X[axis])
        out.append(sympy.simplify(term))
    return tuple(out)


def field_from_expressions(name: str, n: int, k: int, components: Sequence,
                           kink_planes: tuple[tuple[int, float], ...] = (),
                           with_exterior: bool = True) -> FieldSample:
    """FieldSample a partir de expressões sympy nas variáveis x0..x{n-1}."""
    components = tuple(sympy.sympify(c) for c in components)
    if len(components) != len(form_indices(n, k)):
        raise ConfigError(f"Campo '{name}': {len(components)} componentes para uma {k}-forma em R^{n}")
    evaluators = [_lambdify(c, n) for c in components]
    cache: dict[tuple[int, ...], list] = {}

    def evaluator(x):
        return np.stack([f(x) for f in evaluators], axis=1)

    def derivative(x, alpha):
        if alpha not in cache:
            variables = [v for axis, a in enumerate(alpha) for v in [X[axis]] * a]
            cache[alpha] = [_lambdify(sympy.diff(c, *variables), n) for c in components]
        return np.stack([f(x) for f in cache[alpha]], axis=1)

    exterior = None
    if with_exterior and k < n:
        exterior = field_from_expressions(f"d({name})", n, k + 1, symbolic_exterior(components, n, k),
                                          kink_planes, with_exterior=False)
    return FieldSample(k, n, evaluator, derivative, ANY_ORDER, name, tuple(kink_planes), exterior)


# ============================================================================
# CATÁLOGO
# ============================================================================

@dataclass(frozen=True)
class FieldEntry:
    """Entrada do catálogo: grau da forma (k ou "n-1"/"n"), dimensões aceitas e construtor."""
    name: str
    description: str
    dims: tuple[int, ...]
    degree: Callable[[int], int]
    build: Callable[[int], tuple]
    kink_planes: tuple[tuple[int, float], ...] = ()


def _scalar(n: int):
    x, y = X[0], X[1]
    base = sympy.sin(sympy.pi * x) * sympy.cos(sympy.pi * y / 2) + x * y
    return base * sympy.exp(X[2] / 2) if n == 3 else base


def _smooth_scalar(n):
    return (_scalar(n),)


def _smooth_1form(n):
    x, y = X[0], X[1]
    if n == 2:
        return (sympy.sin(y) + x ** 2, sympy.cos(x * y))
    z = X[2]
    return (sympy.sin(y + z) + x ** 2, sympy.cos(x * y) + z, sympy.exp(x - y) * z)


def _smooth_flux(n):
    x, y = X[0], X[1]
    if n == 2:
        return (sympy.cos(x + y), x * sympy.exp(y))
    z = X[2]
    return (sympy.cos(x + y) * z, x * sympy.exp(y - z), sympy.sin(x * z) + y)


def _smooth_density(n):
    return (sympy.exp(X[0]) * sympy.cos(sum(X[1:n])),)


def _closed_1form(n):
    return tuple(sympy.diff(_scalar(n), X[i]) for i in range(n))


def _angular_1form(n):
    x, y = X[0] - sympy.Rational(1, 2), X[1] - sympy.Rational(1, 2)
    rho = x ** 2 + y ** 2
    return (-y / rho, x / rho)


def _kinked_scalar(n):
    x, y = X[0], X[1]
    half = sympy.Rational(1, 2)
    kink = sympy.Piecewise((half - x, x < half), (x - half, True))
    return (kink * (1 + y ** 2) + sympy.sin(y),)


def _bc_scalar(n):
    # nula em x₁ = 0
    return (X[1] * sympy.exp(X[0]) * sympy.cos(X[1]),)


def _bc_violating_scalar(n):
    # não se anula em x₁ = 0
    return (sympy.exp(X[0]) * sympy.cos(X[1]),)


def _bc_1form(n):
    # componente tangencial nula em x₁ = 0
    x, y = X[0], X[1]
    return (y * sympy.sin(x + 1), sympy.cos(x) + y)


FIELD_CATALOG: dict[str, FieldEntry] = {
    "angular_1form": FieldEntry("angular_1form", "1-forma fechada não exata em torno de (0.5, 0.5)",
                                (2,), lambda n: 1, _angular_1form),
    "bc_1form": FieldEntry("bc_1form", "1-forma com traço tangencial nulo em x₁ = 0",
                           (2,), lambda n: 1, _bc_1form),
    "bc_scalar": FieldEntry("bc_scalar", "escalar nulo em x₁ = 0", (2, 3), lambda n: 0, _bc_scalar),
    "bc_violating_scalar": FieldEntry("bc_violating_scalar", "escalar não nulo em x₁ = 0", (2, 3), lambda n: 0,
                                      _bc_violating_scalar),
    "closed_1form": FieldEntry("closed_1form", "dφ de smooth_scalar", (2, 3), lambda n: 1, _closed_1form),
    "kinked_scalar": FieldEntry("kinked_scalar", "escalar Lipschitz com dobra em x₀ = 0.5",
                                (2,), lambda n: 0, _kinked_scalar, kink_planes=((0, 0.5),)),
    "smooth_1form": FieldEntry("smooth_1form", "1-forma suave não fechada", (2, 3), lambda n: 1, _smooth_1form),
    "smooth_density": FieldEntry("smooth_density", "n-forma suave", (2, 3), lambda n: n, _smooth_density),
    "smooth_flux": FieldEntry("smooth_flux", "(n-1)-forma suave", (2, 3), lambda n: n - 1, _smooth_flux),
    "smooth_scalar": FieldEntry("smooth_scalar", "0-forma suave (seno, cosseno)", (2, 3), lambda n: 0, _smooth_scalar),
}


@lru_cache(maxsize=None)
def get_field(name: str, n: int) -> FieldSample:
    """Retorna o campo do catálogo para a dimensão n."""
    entry = FIELD_CATALOG.get(name)
    if entry is None:
        raise ConfigError(f"Campo desconhecido: '{name}'")
    if n not in entry.dims:
        raise ConfigError(f"Campo '{name}' não está definido em dimensão {n}")
    k = entry.degree(n)
    logger.debug("Campo '%s': %d-forma em R^%d", name, k, n)
    return field_from_expressions(name, n, k, entry.build(n), entry.kink_planes)


def field_degree(name: str, n: int) -> int:
    if name not in FIELD_CATALOG:
        raise ConfigError(f"Campo desconhecido: '{name}'")
    return FIELD_CATALOG[name].degree(n)


def is_field(name: str) -> bool:
    return name in FIELD_CATALOG
