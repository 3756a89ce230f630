import numpy as np
import pytest
import sympy

from feec_fields import X, field_from_expressions
from mesh import (
    mesh_sequence, reference_tetrahedron, reference_triangle, refine_uniform, unit_cube_kuhn_6, unit_square_2,
)
from polyform import form_indices, multi_indices


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def square():
    return unit_square_2()


@pytest.fixture
def square_fine():
    return refine_uniform(unit_square_2())


@pytest.fixture
def triangle():
    return reference_triangle()


@pytest.fixture
def tetrahedron():
    return reference_tetrahedron()


@pytest.fixture
def kuhn():
    return unit_cube_kuhn_6()


@pytest.fixture
def square_levels():
    return mesh_sequence(unit_square_2(), 4)


def _trig_field(n: int, k: int):
    comps = []
    for c in range(len(form_indices(n, k))):
        expr = sympy.sin(X[0] + (c + 1) * X[1]) + sympy.cos((c + 2) * X[0] - X[1])
        if n == 3:
            expr = expr * sympy.exp(X[2] / (c + 2))
        comps.append(expr)
    return field_from_expressions(f"trig_{n}_{k}", n, k, comps)


def _poly_field(n: int, k: int, degree: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    comps = []
    for _ in form_indices(n, k):
        comps.append(sum(float(rng.uniform(-1, 1)) * sympy.prod([X[i] ** a for i, a in enumerate(alpha)])
                         for alpha in multi_indices(n, degree)))
    return field_from_expressions(f"poly_{n}_{k}_{degree}", n, k, comps)


@pytest.fixture
def trig_field():
    """Campo suave com componentes trigonométricas distintas: trig_field(n, k)."""
    return _trig_field


@pytest.fixture
def poly_field():
    """Campo polinomial aleatório de grau total ≤ degree: poly_field(n, k, degree, seed)."""
    return _poly_field
