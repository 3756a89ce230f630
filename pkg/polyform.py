"""
feecavg - Formas Polinomiais
Álgebra de k-formas diferenciais polinomiais sobre um simplexo de referência:
bases das famílias completa e aparada, produto exterior, derivada exterior,
operador de Koszul, traços e avaliação pontual.

Uma forma sobre um d-simplexo é guardada em coordenadas de referência
(x_1, ..., x_d) como um tensor denso de coeficientes com formato
(r+1,)*d + (C(d,k),): o índice do tensor é o expoente α e o último eixo
enumera os k-subconjuntos crescentes σ, de modo que a forma é
Σ c[α, σ] x^α dx_σ.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations, product
from math import comb, factorial
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.signal import convolve

from errors import PolyFormError

logger = logging.getLogger("feecavg.polyform")

IDENTITY_TOL = 1e-12
RANK_TOL = 1e-10


# ============================================================================
# ÍNDICES
# ============================================================================

@lru_cache(maxsize=None)
def multi_indices(d: int, r: int) -> tuple[tuple[int, ...], ...]:
    """Multi-índices α com |α| ≤ r, em ordem graduada (grau crescente)."""
    if d == 0:
        return ((),)
    out = []
    for total in range(r + 1):
        level = [a for a in product(range(total + 1), repeat=d) if sum(a) == total]
        out.extend(sorted(level, reverse=True))
    return tuple(out)


@lru_cache(maxsize=None)
def form_indices(d: int, k: int) -> tuple[tuple[int, ...], ...]:
    """k-subconjuntos crescentes de {0, ..., d-1}; vazio quando k > d."""
    if k < 0:
        raise PolyFormError(f"Grau de forma negativo: {k}")
    return tuple(combinations(range(d), k))


@lru_cache(maxsize=None)
def _component_lookup(d: int, k: int) -> dict[tuple[int, ...], int]:
    return {sigma: i for i, sigma in enumerate(form_indices(d, k))}


@lru_cache(maxsize=None)
def _degree_mask(d: int, r: int) -> np.ndarray:
    if d == 0:
        return np.ones(1, dtype=bool)
    grids = np.indices((r + 1,) * d)
    return grids.sum(axis=0) <= r


def _permutation_sign(seq: Sequence[int]) -> int:
    """Sinal da permutação que ordena seq (sem repetições)."""
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inversions % 2 else 1


def dim_full(d: int, r: int, k: int) -> int:
    """Dimensão de P_r Λ^k em d dimensões."""
    if r < 0 or k < 0 or k > d:
        return 0
    return comb(d + r, d) * comb(d, k)


def dim_trimmed(d: int, r: int, k: int) -> int:
    """Dimensão de P_r^- Λ^k em d dimensões."""
    if r < 1 or k < 0 or k > d:
        return 0
    return comb(r + k - 1, k) * comb(d + r, d - k)


# ============================================================================
# FORMAS
# ============================================================================

@dataclass(frozen=True, eq=False)
class PolyForm:
    """k-forma polinomial de grau ≤ r sobre um d-simplexo (coordenadas de referência)."""
    sim_dim: int
    form_degree: int
    poly_degree_bound: int
    coeffs: np.ndarray

    def __post_init__(self):
        d, k, r = self.sim_dim, self.form_degree, self.poly_degree_bound
        if d < 0 or k < 0 or r < 0:
            raise PolyFormError(f"Parâmetros inválidos (d={d}, k={k}, r={r})")
        shape = (r + 1,) * d + (len(form_indices(d, k)),)
        arr = np.array(self.coeffs, dtype=float)
        if arr.shape != shape:
            raise PolyFormError(f"Tensor de coeficientes com formato {arr.shape}, esperado {shape}")
        if d > 0:
            arr[~_degree_mask(d, r)] = 0.0
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    # --- construtores ---------------------------------------------------

    @classmethod
    def zero(cls, d: int, k: int, r: int = 0) -> "PolyForm":
        return cls(d, k, r, np.zeros((r + 1,) * d + (len(form_indices(d, k)),)))

    @classmethod
    def monomial(cls, d: int, k: int, alpha: Sequence[int], sigma: Sequence[int],
                 coeff: float = 1.0, r: Optional[int] = None) -> "PolyForm":
        """Forma coeff · x^α dx_σ."""
        alpha, sigma = tuple(alpha), tuple(sigma)
        if len(alpha) != d:
            raise PolyFormError(f"Multi-índice {alpha} não tem {d} entradas")
        lookup = _component_lookup(d, k)
        if sigma not in lookup:
            raise PolyFormError(f"Índice de forma {sigma} inválido para (d={d}, k={k})")
        r = sum(alpha) if r is None else r
        if sum(alpha) > r:
            raise PolyFormError(f"Monômio de grau {sum(alpha)} excede o limite {r}")
        coeffs = np.zeros((r + 1,) * d + (len(lookup),))
        coeffs[alpha + (lookup[sigma],)] = coeff
        return cls(d, k, r, coeffs)

    @classmethod
    def from_vector(cls, d: int, k: int, r: int, vector: np.ndarray) -> "PolyForm":
        """Inverso de vector(): coeficientes na ordem (α, σ)."""
        ncomp = len(form_indices(d, k))
        index = _flat_index(d, r)
        vector = np.asarray(vector, dtype=float)
        if vector.size != len(multi_indices(d, r)) * ncomp:
            raise PolyFormError(f"Vetor de tamanho {vector.size} incompatível com (d={d}, k={k}, r={r})")
        coeffs = np.zeros((r + 1,) * d + (ncomp,))
        coeffs[index] = vector.reshape(coeffs[index].shape)
        return cls(d, k, r, coeffs)

    # --- acesso ---------------------------------------------------------

    @property
    def components(self) -> tuple[tuple[int, ...], ...]:
        return form_indices(self.sim_dim, self.form_degree)

    @property
    def ncomp(self) -> int:
        return len(self.components)

    def vector(self, r: Optional[int] = None) -> np.ndarray:
        """Coeficientes achatados na ordem (α graduado, σ)."""
        form = self if r is None else self.with_bound(r)
        return form.coeffs[_flat_index(form.sim_dim, form.poly_degree_bound)].ravel()

    def terms(self, tol: float = 0.0) -> dict[tuple[tuple[int, ...], tuple[int, ...]], float]:
        """Mapa esparso (α, σ) -> coeficiente, sem entradas nulas."""
        out = {}
        for alpha in multi_indices(self.sim_dim, self.poly_degree_bound):
            for s, sigma in enumerate(self.components):
                value = float(self.coeffs[alpha + (s,)])
                if abs(value) > tol:
                    out[(alpha, sigma)] = value
        return out

    def actual_degree(self, tol: float = 0.0) -> int:
        degrees = [sum(alpha) for alpha, _ in self.terms(tol)]
        return max(degrees) if degrees else 0

    def with_bound(self, r: int) -> "PolyForm":
        """Mesma forma com outro limite de grau (falha se perder termos)."""
        cur = self.poly_degree_bound
        if r == cur:
            return self
        d, nc = self.sim_dim, self.ncomp
        if d == 0:
            return PolyForm(0, self.form_degree, r, self.coeffs.copy())
        if r > cur:
            coeffs = np.zeros((r + 1,) * d + (nc,))
            coeffs[(slice(0, cur + 1),) * d] = self.coeffs
            return PolyForm(d, self.form_degree, r, coeffs)
        if self.actual_degree(tol=1e-14) > r:
            raise PolyFormError(f"Forma de grau {self.actual_degree()} não cabe no limite {r}")
        return PolyForm(d, self.form_degree, r, self.coeffs[(slice(0, r + 1),) * d].copy())

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0

    def is_zero(self, tol: float = IDENTITY_TOL) -> bool:
        return self.max_abs() <= tol

    def allclose(self, other: "PolyForm", tol: float = IDENTITY_TOL) -> bool:
        return (self - other).max_abs() <= tol * max(1.0, self.max_abs(), other.max_abs())

    # --- aritmética -----------------------------------------------------

    def _aligned(self, other: "PolyForm") -> tuple["PolyForm", "PolyForm"]:
        if (self.sim_dim, self.form_degree) != (other.sim_dim, other.form_degree):
            raise PolyFormError(
                f"Formas incompatíveis: (d={self.sim_dim}, k={self.form_degree}) e "
                f"(d={other.sim_dim}, k={other.form_degree})")
        r = max(self.poly_degree_bound, other.poly_degree_bound)
        return self.with_bound(r), other.with_bound(r)

    def __add__(self, other: "PolyForm") -> "PolyForm":
        a, b = self._aligned(other)
        return PolyForm(a.sim_dim, a.form_degree, a.poly_degree_bound, a.coeffs + b.coeffs)

    def __sub__(self, other: "PolyForm") -> "PolyForm":
        a, b = self._aligned(other)
        return PolyForm(a.sim_dim, a.form_degree, a.poly_degree_bound, a.coeffs - b.coeffs)

    def __neg__(self) -> "PolyForm":
        return PolyForm(self.sim_dim, self.form_degree, self.poly_degree_bound, -self.coeffs)

    def __mul__(self, scalar: float) -> "PolyForm":
        return PolyForm(self.sim_dim, self.form_degree, self.poly_degree_bound, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    # --- avaliação ------------------------------------------------------

    def values(self, points: np.ndarray) -> np.ndarray:
        """Componentes (npts, ncomp) nos pontos de referência (npts, d)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return polyval_tensor(self.coeffs, points, self.sim_dim)

    def __repr__(self):
        return (f"PolyForm(d={self.sim_dim}, k={self.form_degree}, r={self.poly_degree_bound}, "
                f"terms={len(self.terms(1e-14))})")


@lru_cache(maxsize=None)
def _flat_index(d: int, r: int) -> tuple:
    if d == 0:
        return (slice(None),)
    idx = np.array(multi_indices(d, r), dtype=int)
    return tuple(idx.T)


def polyval_tensor(coeffs: np.ndarray, points: np.ndarray, d: int) -> np.ndarray:
    """Avalia um tensor de coeficientes (…, ncomp) em pontos (npts, d)."""
    npts = points.shape[0]
    ncomp = coeffs.shape[-1]
    if ncomp == 0:
        return np.zeros((npts, 0))
    if d == 0:
        return np.broadcast_to(coeffs, (npts, ncomp)).copy()
    if points.shape[1] != d:
        raise PolyFormError(f"Pontos com {points.shape[1]} coordenadas, esperado {d}")
    if d == 1:
        vals = npoly.polyval(points[:, 0], coeffs, tensor=True)
    elif d == 2:
        vals = npoly.polyval2d(points[:, 0], points[:, 1], coeffs)
    elif d == 3:
        vals = npoly.polyval3d(points[:, 0], points[:, 1], points[:, 2], coeffs)
    else:
        raise PolyFormError(f"Avaliação suportada até d=3, recebido d={d}")
    return np.asarray(vals).reshape(ncomp, npts).T


def _polymul(p: np.ndarray, q: np.ndarray, d: int) -> np.ndarray:
    if d == 0:
        return p * q
    return convolve(p, q, method="direct")


# ============================================================================
# OPERAÇÕES
# ============================================================================

def wedge(a: PolyForm, b: PolyForm) -> PolyForm:
    """Produto exterior a ∧ b."""
    if a.sim_dim != b.sim_dim:
        raise PolyFormError(f"Produto exterior entre dimensões {a.sim_dim} e {b.sim_dim}")
    d = a.sim_dim
    k = a.form_degree + b.form_degree
    if k > d:
        raise PolyFormError(f"Grau {a.form_degree} + {b.form_degree} excede a dimensão {d}")
    r = a.poly_degree_bound + b.poly_degree_bound
    lookup = _component_lookup(d, k)
    coeffs = np.zeros((r + 1,) * d + (len(lookup),))
    for i, sa in enumerate(a.components):
        pa = a.coeffs[..., i]
        if not pa.any():
            continue
        for j, sb in enumerate(b.components):
            if set(sa) & set(sb):
                continue
            pb = b.coeffs[..., j]
            if not pb.any():
                continue
            merged = sa + sb
            tau = tuple(sorted(merged))
            coeffs[..., lookup[tau]] += _permutation_sign(merged) * _polymul(pa, pb, d)
    return PolyForm(d, k, r, coeffs)


def partial(a: PolyForm, axis: int) -> PolyForm:
    """Derivada ∂/∂x_axis de cada componente."""
    d, r = a.sim_dim, a.poly_degree_bound
    if not 0 <= axis < d:
        raise PolyFormError(f"Eixo {axis} inválido para d={d}")
    r_new = max(r - 1, 0)
    der = npoly.polyder(a.coeffs, axis=axis)
    out = np.zeros((r_new + 1,) * d + (a.ncomp,))
    view = der[(slice(0, r_new + 1),) * d]
    out[tuple(slice(0, s) for s in view.shape[:-1])] = view
    return PolyForm(d, a.form_degree, r_new, out)


def exterior_derivative(a: PolyForm) -> PolyForm:
    """Derivada exterior; em grau máximo devolve a (k+1)-forma nula."""
    d, k, r = a.sim_dim, a.form_degree, a.poly_degree_bound
    r_new = max(r - 1, 0)
    lookup = _component_lookup(d, k + 1)
    coeffs = np.zeros((r_new + 1,) * d + (len(lookup),))
    if k >= d or r == 0:
        return PolyForm(d, k + 1, r_new, coeffs)
    for i in range(d):
        der = partial(a, i).coeffs
        for s, sigma in enumerate(a.components):
            if i in sigma:
                continue
            sign = -1 if sum(1 for j in sigma if j < i) % 2 else 1
            tau = tuple(sorted(sigma + (i,)))
            coeffs[..., lookup[tau]] += sign * der[..., s]
    return PolyForm(d, k + 1, r_new, coeffs)


def _times_coordinate(p: np.ndarray, axis: int, d: int) -> np.ndarray:
    """Multiplica um tensor escalar (grau r) por x_axis, resultado com grau r+1."""
    r = p.shape[0] - 1
    out = np.zeros((r + 2,) * d)
    target = tuple(slice(1, r + 2) if ax == axis else slice(0, r + 1) for ax in range(d))
    out[target] = p
    return out


def koszul(a: PolyForm) -> PolyForm:
    """Contração com o campo posição x (κ); baixa o grau de forma em 1."""
    d, k, r = a.sim_dim, a.form_degree, a.poly_degree_bound
    if k == 0:
        raise PolyFormError("Operador de Koszul indefinido para 0-formas")
    lookup = _component_lookup(d, k - 1)
    coeffs = np.zeros((r + 2,) * d + (len(lookup),))
    for s, sigma in enumerate(a.components):
        p = a.coeffs[..., s]
        if not p.any():
            continue
        for j, axis in enumerate(sigma):
            rest = sigma[:j] + sigma[j + 1:]
            sign = -1 if j % 2 else 1
            coeffs[..., lookup[rest]] += sign * _times_coordinate(p, axis, d)
    return PolyForm(d, k - 1, r + 1, coeffs)


def _linear_power_table(A: np.ndarray, b: np.ndarray, r: int) -> list[list[np.ndarray]]:
    """Potências L_i^p, p ≤ r, das formas lineares L_i(z) = b_i + Σ_j A_ij z_j."""
    d_old, d_new = A.shape
    table = []
    for i in range(d_old):
        if d_new == 0:
            lin = np.array(b[i])
        else:
            lin = np.zeros((2,) * d_new)
            lin[(0,) * d_new] = b[i]
            for j in range(d_new):
                idx = [0] * d_new
                idx[j] = 1
                lin[tuple(idx)] = A[i, j]
        powers = [np.ones((1,) * d_new) if d_new else np.array(1.0)]
        for _ in range(r):
            powers.append(_polymul(powers[-1], lin, d_new))
        table.append(powers)
    return table


def compose_affine(coeffs: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Substitui y = A z + b num tensor de coeficientes (…, C), componente a componente."""
    A = np.asarray(A, dtype=float)
    d_old, d_new = A.shape
    b = np.asarray(b, dtype=float).reshape(d_old)
    r = coeffs.shape[0] - 1 if d_old else 0
    ncomp = coeffs.shape[-1]
    out = np.zeros((r + 1,) * d_new + (ncomp,))
    powers = _linear_power_table(A, b, r)
    for alpha in multi_indices(d_old, r):
        coef = coeffs[alpha] if d_old else coeffs
        if not coef.any():
            continue
        mono = np.ones((1,) * d_new) if d_new else np.array(1.0)
        for i, ai in enumerate(alpha):
            if ai:
                mono = _polymul(mono, powers[i][ai], d_new)
        if d_new == 0:
            out += mono * coef
        else:
            out[tuple(slice(0, s) for s in mono.shape)] += mono[..., None] * coef
    return out


def pullback(a: PolyForm, A: np.ndarray, b: np.ndarray) -> PolyForm:
    """Pullback pela aplicação afim y = A z + b (A com formato d_old × d_new)."""
    d_old, k, r = a.sim_dim, a.form_degree, a.poly_degree_bound
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        A = A.reshape(d_old, -1)
    if A.shape[0] != d_old:
        raise PolyFormError(f"Aplicação com {A.shape[0]} linhas para forma em d={d_old}")
    d_new = A.shape[1]
    out_comps = form_indices(d_new, k)
    if not out_comps or a.ncomp == 0:
        return PolyForm.zero(d_new, k, r)
    if k == 0:
        minors = np.ones((1, 1))
    else:
        minors = np.array([[np.linalg.det(A[np.ix_(sigma, tau)]) for tau in out_comps]
                           for sigma in a.components])
    return PolyForm(d_new, k, r, compose_affine(a.coeffs, A, b) @ minors)


@lru_cache(maxsize=None)
def reference_vertices(d: int) -> np.ndarray:
    """Vértices do simplexo de referência: 0, e_1, ..., e_d."""
    return np.vstack([np.zeros((1, d)), np.eye(d)]) if d else np.zeros((1, 0))


@lru_cache(maxsize=None)
def face_map(d: int, face: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Aplicação afim (A, b) da referência da face para a referência do simplexo."""
    if (not face or list(face) != sorted(set(face)) or face[0] < 0 or face[-1] > d):
        raise PolyFormError(f"Face {face} não é subsimplexo de um {d}-simplexo")
    verts = reference_vertices(d)
    base = verts[face[0]]
    A = np.array([verts[v] - base for v in face[1:]]).T.reshape(d, len(face) - 1)
    return A, base.copy()


def trace(a: PolyForm, face: tuple[int, ...]) -> PolyForm:
    """Traço tr_{S,F} sobre a face dada pelos índices locais (crescentes) dos vértices."""
    A, b = face_map(a.sim_dim, tuple(face))
    return pullback(a, A, b)


@lru_cache(maxsize=None)
def trace_matrix(d: int, face: tuple[int, ...], k: int, r: int) -> np.ndarray:
    """Matriz do traço sobre os vetores de coeficientes de grau r."""
    cols = []
    for alpha in multi_indices(d, r):
        for sigma in form_indices(d, k):
            cols.append(trace(PolyForm.monomial(d, k, alpha, sigma, r=r), face).vector())
    m = len(face) - 1
    size = len(multi_indices(m, r)) * len(form_indices(m, k))
    return np.array(cols).T.reshape(size, len(cols))


def evaluate(a: PolyForm, point: Sequence[float], vectors: Sequence[Sequence[float]] = ()) -> float:
    """Avaliação multilinear alternada de a no ponto sobre k vetores."""
    if len(vectors) != a.form_degree:
        raise PolyFormError(f"Forma de grau {a.form_degree} avaliada com {len(vectors)} vetores")
    point = np.asarray(point, dtype=float).reshape(1, a.sim_dim)
    if a.sim_dim and (point.min() < -1e-8 or point.sum() > 1 + 1e-8):
        raise PolyFormError(f"Ponto {point.ravel()} fora do simplexo de referência")
    comps = a.values(point)[0]
    if a.form_degree == 0:
        return float(comps[0])
    V = np.asarray(vectors, dtype=float).T.reshape(a.sim_dim, a.form_degree)
    return float(sum(c * np.linalg.det(V[list(sigma), :]) for c, sigma in zip(comps, a.components)))


# ============================================================================
# BASES
# ============================================================================

def _check_params(d: int, r: int, k: int, min_r: int):
    if d < 0 or d > 3 or k < 0 or k > d or r < min_r:
        raise PolyFormError(f"Parâmetros inválidos para a base: d={d}, r={r}, k={k}")


@lru_cache(maxsize=None)
def basis_full(d: int, r: int, k: int) -> tuple[PolyForm, ...]:
    """Base monomial x^α dx_σ de P_r Λ^k."""
    _check_params(d, r, k, 0)
    return tuple(PolyForm.monomial(d, k, alpha, sigma, r=r)
                 for alpha in multi_indices(d, r) for sigma in form_indices(d, k))


def select_independent(vectors: Iterable[np.ndarray], tol: float = RANK_TOL) -> list[int]:
    """Índices de um subconjunto maximal independente, escolhido na ordem dada."""
    chosen, basis = [], []
    for i, v in enumerate(vectors):
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        w = v.copy()
        for _ in range(2):
            for q in basis:
                w -= (q @ w) * q
        wn = np.linalg.norm(w)
        if wn > tol * max(norm, 1.0):
            basis.append(w / wn)
            chosen.append(i)
    return chosen


@lru_cache(maxsize=None)
def basis_trimmed(d: int, r: int, k: int) -> tuple[PolyForm, ...]:
    """Base de P_r^- Λ^k = P_{r-1}Λ^k + κ P_{r-1}Λ^{k+1}, extraída por seleção de posto."""
    _check_params(d, r, k, 1)
    generators = [f.with_bound(r) for f in basis_full(d, r - 1, k)]
    if k + 1 <= d:
        generators += [koszul(f) for f in basis_full(d, r - 1, k + 1)]
    chosen = select_independent(g.vector() for g in generators)
    expected = dim_trimmed(d, r, k)
    if len(chosen) != expected:
        raise PolyFormError(f"Base aparada com {len(chosen)} elementos, esperado {expected} (d={d}, r={r}, k={k})")
    return tuple(generators[i] for i in chosen)


def span_residual(forms: Sequence[PolyForm], target: PolyForm) -> float:
    """Resíduo relativo de mínimos quadrados de target no espaço gerado por forms."""
    r = max([target.poly_degree_bound] + [f.poly_degree_bound for f in forms])
    y = target.vector(r)
    if not forms:
        return float(np.linalg.norm(y))
    M = np.array([f.vector(r) for f in forms]).T
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return float(np.linalg.norm(M @ coef - y) / max(np.linalg.norm(y), 1.0))


# ============================================================================
# CARTAS
# ============================================================================

@dataclass(frozen=True, eq=False)
class SimplexChart:
    """Aplicação afim x = origin + J z da referência para o simplexo físico."""
    simplex_id: int
    origin: np.ndarray
    jacobian: np.ndarray

    @property
    def dim(self) -> int:
        return self.jacobian.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.jacobian.shape[0]

    @cached_property
    def gram_determinant(self) -> float:
        J = self.jacobian
        if self.dim == 0:
            return 1.0
        if self.dim == self.ambient_dim:
            return float(np.linalg.det(J))
        return float(np.sqrt(np.linalg.det(J.T @ J)))

    @property
    def orientation(self) -> int:
        """Sinal do determinante para células; +1 para simplexos de codimensão positiva."""
        return -1 if self.gram_determinant < 0 else 1

    @property
    def volume(self) -> float:
        return abs(self.gram_determinant) / factorial(self.dim)

    @cached_property
    def inverse(self) -> np.ndarray:
        if self.dim != self.ambient_dim:
            raise PolyFormError(f"Carta do simplexo {self.simplex_id} não é invertível (d < n)")
        if abs(self.gram_determinant) < 1e-300:
            raise PolyFormError(f"Jacobiano singular no simplexo {self.simplex_id}")
        return np.linalg.inv(self.jacobian)

    def to_physical(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(1, -1)
        return self.origin + z @ self.jacobian.T

    def to_reference(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - self.origin) @ self.inverse.T

    def contains(self, x: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        z = self.to_reference(x)
        return (z.min(axis=1) >= -tol) & (z.sum(axis=1) <= 1 + tol)

    @cached_property
    def _matrix_cache(self) -> dict:
        return {}

    def ambient_matrix(self, k: int) -> np.ndarray:
        """M com componentes ambientes = M @ componentes de referência."""
        key = ("ambient", k)
        if key not in self._matrix_cache:
            amb, ref = form_indices(self.ambient_dim, k), form_indices(self.dim, k)
            if k == 0:
                M = np.ones((1, 1))
            else:
                inv = self.inverse
                M = np.array([[np.linalg.det(inv[np.ix_(tau, sigma)]) for tau in ref]
                              for sigma in amb]).reshape(len(amb), len(ref))
            self._matrix_cache[key] = M
        return self._matrix_cache[key]

    def pullback_matrix(self, k: int) -> np.ndarray:
        """P com componentes de referência = P @ componentes ambientes."""
        key = ("pullback", k)
        if key not in self._matrix_cache:
            amb, ref = form_indices(self.ambient_dim, k), form_indices(self.dim, k)
            if k == 0:
                P = np.ones((1, 1))
            else:
                J = self.jacobian
                P = np.array([[np.linalg.det(J[np.ix_(sigma, tau)]) for sigma in amb]
                              for tau in ref]).reshape(len(ref), len(amb))
            self._matrix_cache[key] = P
        return self._matrix_cache[key]

    def ambient_values(self, a: PolyForm, z: np.ndarray) -> np.ndarray:
        """Componentes ambientes (npts, C(n,k)) de uma forma de referência."""
        return a.values(z) @ self.ambient_matrix(a.form_degree).T

    def ambient_partial(self, a: PolyForm, alpha: Sequence[int]) -> PolyForm:
        """∂^α em coordenadas ambientes, aplicado componente a componente."""
        inv = self.inverse
        out = a
        for j, count in enumerate(alpha):
            for _ in range(count):
                terms = [inv[i, j] * partial(out, i) for i in range(self.dim)]
                out = terms[0]
                for term in terms[1:]:
                    out = out + term
        return out

    def ambient_form(self, a: PolyForm) -> PolyForm:
        """Reescreve uma forma de referência em coordenadas ambientes."""
        inv = self.inverse
        return pullback(a, inv, -inv @ self.origin)

    def reference_form(self, a: PolyForm) -> PolyForm:
        """Reescreve uma forma ambiente em coordenadas de referência."""
        return pullback(a, self.jacobian, self.origin)
