"""
feecavg - Malhas Simpliciais
Complexos simpliciais em R^n (n ∈ {2, 3}): construção e validação, reticulado
de subsimplexos, estrelas, sinais de orientação, medida de forma, refinamento
uniforme, subcomplexos de fronteira e representantes (F_S, T_S).

Ids globais são atribuídos dimensão por dimensão: primeiro os vértices (id =
índice do vértice), depois arestas, faces e células, cada bloco em ordem
lexicográfica das tuplas crescentes de vértices.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations, permutations
from math import factorial
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from errors import MeshError
from polyform import SimplexChart

logger = logging.getLogger("feecavg.mesh")

GEOMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Simplex:
    """Simplexo com vértices em ordem crescente (orientação canônica)."""
    id: int
    dim: int
    vertex_ids: tuple[int, ...]

    def __repr__(self):
        return f"Simplex({self.id}, {self.vertex_ids})"


@dataclass(frozen=True)
class BoundarySubcomplex:
    """Subcomplexo 𝒰 fechado por subsimplexos, gerado por facetas de fronteira."""
    member_ids: frozenset[int]
    facet_ids: tuple[int, ...] = ()

    def __contains__(self, simplex_id: int) -> bool:
        return simplex_id in self.member_ids

    def __len__(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class Representatives:
    """Escolha S ↦ (F_S, T_S); para células F_S é None e T_S = S."""
    facet: dict[int, Optional[int]]
    cell: dict[int, int]

    def facet_of(self, simplex_id: int) -> Optional[int]:
        return self.facet[simplex_id]

    def cell_of(self, simplex_id: int) -> int:
        return self.cell[simplex_id]


class SimplicialComplex:
    """Complexo simplicial conforme; imutável após a construção."""

    def __init__(self, vertices: np.ndarray, cells: Sequence[Sequence[int]]):
        self.vertices = np.array(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise MeshError(f"Vértices devem ter formato (nv, n) com n ∈ {{2, 3}}, recebido {self.vertices.shape}")
        self.n = self.vertices.shape[1]
        self.cell_orders = [tuple(int(v) for v in c) for c in cells]
        self._validate_cells()

        self.simplices_by_dim: list[list[Simplex]] = []
        self.simplices: list[Simplex] = []
        self._ids: dict[tuple[int, ...], int] = {}
        self._enumerate()

        self._cells_of: dict[int, list[int]] = {s.id: [] for s in self.simplices}
        for cell in self.simplices_by_dim[self.n]:
            for d in range(self.n + 1):
                for sub in combinations(cell.vertex_ids, d + 1):
                    self._cells_of[self._ids[sub]].append(cell.id)
        self._superstar_cache: dict[tuple[int, int], tuple[int, ...]] = {}
        self._charts: dict[int, SimplexChart] = {}

        self._check_facets()
        self._check_hanging_vertices()
        self._check_face_connected()
        logger.debug("Complexo construído: %s", self.counts())

    # --- construção -----------------------------------------------------

    def _validate_cells(self):
        nv = len(self.vertices)
        if not self.cell_orders:
            raise MeshError("Complexo sem células")
        seen = set()
        for c in self.cell_orders:
            if len(c) != self.n + 1:
                raise MeshError(f"Célula {c} não tem {self.n + 1} vértices")
            if any(v < 0 or v >= nv for v in c):
                raise MeshError(f"Célula {c} referencia vértice inexistente (nv={nv})")
            key = tuple(sorted(c))
            if len(set(key)) != len(key):
                raise MeshError(f"Célula degenerada {c}: vértices repetidos")
            if key in seen:
                raise MeshError(f"Célula {c} repetida: interseção não conforme")
            seen.add(key)
            pts = self.vertices[list(key)]
            J = (pts[1:] - pts[0]).T
            h = max(np.linalg.norm(pts[i] - pts[j]) for i, j in combinations(range(len(key)), 2))
            if abs(np.linalg.det(J)) <= GEOMETRY_TOL * h ** self.n:
                raise MeshError(f"Célula degenerada {c}: volume nulo")
        used = {v for c in self.cell_orders for v in c}
        if len(used) != nv:
            missing = sorted(set(range(nv)) - used)
            raise MeshError(f"Vértices sem célula: {missing[:5]}")

    def _enumerate(self):
        sorted_cells = [tuple(sorted(c)) for c in self.cell_orders]
        next_id = 0
        for d in range(self.n + 1):
            subs = sorted({sub for c in sorted_cells for sub in combinations(c, d + 1)})
            layer = []
            for sub in subs:
                s = Simplex(next_id, d, sub)
                self._ids[sub] = next_id
                layer.append(s)
                self.simplices.append(s)
                next_id += 1
            self.simplices_by_dim.append(layer)

    def _check_facets(self):
        for facet in self.simplices_by_dim[self.n - 1]:
            count = len(self._cells_of[facet.id])
            if count > 2:
                raise MeshError(f"Faceta {facet.vertex_ids} pertence a {count} células: interseção não conforme")

    def _check_hanging_vertices(self):
        for facet in self.boundary_facets():
            pts = self.vertices[list(facet.vertex_ids)]
            A = (pts[1:] - pts[0]).T
            others = np.setdiff1d(np.arange(len(self.vertices)), facet.vertex_ids)
            rhs = (self.vertices[others] - pts[0]).T
            coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            resid = np.linalg.norm(A @ coef - rhs, axis=0)
            inside = (resid < 1e-10) & (coef.min(axis=0) >= -1e-10) & (coef.sum(axis=0) <= 1 + 1e-10)
            if inside.any():
                v = int(others[np.argmax(inside)])
                raise MeshError(f"Vértice {v} sobre a faceta {facet.vertex_ids}: interseção não conforme")

    def _check_face_connected(self):
        for d in range(self.n - 1):
            for s in self.simplices_by_dim[d]:
                cells = self._cells_of[s.id]
                if len(cells) > 1:
                    reached = self._face_bfs(cells[0], s.id)
                    if len(reached) != len(cells):
                        raise MeshError(f"Estrela de {s.vertex_ids} não é conexa por facetas")
        reached = self._face_bfs(self.cell_ids[0], None)
        if len(reached) != self.num_cells:
            raise MeshError("Complexo não é conexo por facetas")

    def _face_bfs(self, start: int, common: Optional[int]) -> dict[int, Optional[int]]:
        """Busca em largura pelas facetas que contêm o simplexo common."""
        parent: dict[int, Optional[int]] = {start: None}
        queue = deque([start])
        allowed = None if common is None else set(self._cells_of[common])
        common_vs = set() if common is None else set(self.simplices[common].vertex_ids)
        while queue:
            t = queue.popleft()
            for f in combinations(self.simplices[t].vertex_ids, self.n):
                if not common_vs.issubset(f):
                    continue
                for nb in self._cells_of[self._ids[f]]:
                    if nb not in parent and (allowed is None or nb in allowed):
                        parent[nb] = t
                        queue.append(nb)
        return parent

    # --- acesso ---------------------------------------------------------

    @property
    def cell_ids(self) -> list[int]:
        return [c.id for c in self.simplices_by_dim[self.n]]

    @property
    def num_cells(self) -> int:
        return len(self.simplices_by_dim[self.n])

    def counts(self) -> tuple[int, ...]:
        return tuple(len(layer) for layer in self.simplices_by_dim)

    def simplex(self, simplex_id: int) -> Simplex:
        if not 0 <= simplex_id < len(self.simplices):
            raise MeshError(f"Simplexo {simplex_id} inexistente")
        return self.simplices[simplex_id]

    def find(self, vertex_ids: Iterable[int]) -> Simplex:
        key = tuple(sorted(int(v) for v in vertex_ids))
        if key not in self._ids:
            raise MeshError(f"Simplexo {key} não pertence ao complexo")
        return self.simplices[self._ids[key]]

    def subsimplices(self, s: Union[Simplex, int], d: int) -> list[Simplex]:
        """Δ_d(S) em ordem canônica."""
        s = self.simplex(s) if isinstance(s, int) else s
        if not 0 <= d <= s.dim:
            raise MeshError(f"Dimensão {d} fora de [0, {s.dim}] para {s.vertex_ids}")
        return [self.simplices[self._ids[sub]] for sub in combinations(s.vertex_ids, d + 1)]

    def all_subsimplices(self, s: Union[Simplex, int]) -> list[Simplex]:
        s = self.simplex(s) if isinstance(s, int) else s
        return [sub for d in range(s.dim + 1) for sub in self.subsimplices(s, d)]

    def superstar(self, s: Union[Simplex, int], d: int) -> list[Simplex]:
        """∇_d(𝒯, S): os d-simplexos que contêm S."""
        s = self.simplex(s) if isinstance(s, int) else s
        key = (s.id, d)
        if key not in self._superstar_cache:
            if d < s.dim or d > self.n:
                self._superstar_cache[key] = ()
            else:
                found = set()
                vs = set(s.vertex_ids)
                for t in self._cells_of[s.id]:
                    for sub in combinations(self.simplices[t].vertex_ids, d + 1):
                        if vs.issubset(sub):
                            found.add(self._ids[sub])
                self._superstar_cache[key] = tuple(sorted(found))
        return [self.simplices[i] for i in self._superstar_cache[key]]

    def cells_containing(self, s: Union[Simplex, int]) -> list[int]:
        sid = s if isinstance(s, int) else s.id
        return sorted(self._cells_of[sid])

    def is_subsimplex(self, s: Union[Simplex, int], t: Union[Simplex, int]) -> bool:
        s = self.simplex(s) if isinstance(s, int) else s
        t = self.simplex(t) if isinstance(t, int) else t
        return set(s.vertex_ids).issubset(t.vertex_ids)

    def local_face(self, t: Union[Simplex, int], s: Union[Simplex, int]) -> tuple[int, ...]:
        """Posições (crescentes) dos vértices de S entre os vértices de T."""
        s = self.simplex(s) if isinstance(s, int) else s
        t = self.simplex(t) if isinstance(t, int) else t
        try:
            return tuple(t.vertex_ids.index(v) for v in s.vertex_ids)
        except ValueError:
            raise MeshError(f"{s.vertex_ids} não é subsimplexo de {t.vertex_ids}")

    def boundary_facets(self) -> list[Simplex]:
        return [f for f in self.simplices_by_dim[self.n - 1] if len(self._cells_of[f.id]) == 1]

    def is_boundary_facet(self, s: Union[Simplex, int]) -> bool:
        sid = s if isinstance(s, int) else s.id
        return self.simplices[sid].dim == self.n - 1 and len(self._cells_of[sid]) == 1

    # --- geometria ------------------------------------------------------

    def chart(self, s: Union[Simplex, int]) -> SimplexChart:
        s = self.simplex(s) if isinstance(s, int) else s
        if s.id not in self._charts:
            pts = self.vertices[list(s.vertex_ids)]
            J = (pts[1:] - pts[0]).T.reshape(self.n, s.dim)
            self._charts[s.id] = SimplexChart(s.id, pts[0].copy(), J)
        return self._charts[s.id]

    def cell_charts(self) -> list[SimplexChart]:
        return [self.chart(t) for t in self.cell_ids]

    def centroid(self, s: Union[Simplex, int]) -> np.ndarray:
        s = self.simplex(s) if isinstance(s, int) else s
        return self.vertices[list(s.vertex_ids)].mean(axis=0)

    def diameter(self, s: Union[Simplex, int]) -> float:
        s = self.simplex(s) if isinstance(s, int) else s
        pts = self.vertices[list(s.vertex_ids)]
        if len(pts) == 1:
            return 0.0
        return float(max(np.linalg.norm(a - b) for a, b in combinations(pts, 2)))

    def volume(self, s: Union[Simplex, int]) -> float:
        return self.chart(s).volume

    def orientation(self, s: Union[Simplex, int]) -> int:
        """Células herdam a orientação ambiente; os demais simplexos, a canônica."""
        s = self.simplex(s) if isinstance(s, int) else s
        return self.chart(s).orientation if s.dim == self.n else 1

    def orientation_sign(self, f: Union[Simplex, int], t: Union[Simplex, int]) -> int:
        """o(F, T) = (-1)^j · orientação de T, j a posição do vértice omitido."""
        f = self.simplex(f) if isinstance(f, int) else f
        t = self.simplex(t) if isinstance(t, int) else t
        if t.dim != self.n or f.dim != self.n - 1 or not set(f.vertex_ids).issubset(t.vertex_ids):
            raise MeshError(f"{f.vertex_ids} não é faceta de {t.vertex_ids}")
        omitted = next(v for v in t.vertex_ids if v not in f.vertex_ids)
        j = t.vertex_ids.index(omitted)
        return (-1 if j % 2 else 1) * self.orientation(t)

    def h_max(self) -> float:
        return max(self.diameter(t) for t in self.cell_ids)

    def shape_measure(self) -> float:
        """μ(𝒯) = max h_S^d / vol_d(S) sobre simplexos de dimensão ≥ 1."""
        mu = 0.0
        for d in range(1, self.n + 1):
            for s in self.simplices_by_dim[d]:
                mu = max(mu, self.diameter(s) ** d / self.volume(s))
        return mu

    def vertex_diameter(self, v: int) -> float:
        """Menor comprimento das arestas incidentes no vértice (diagnóstico)."""
        return min(self.diameter(e) for e in self.superstar(v, 1))

    def incenter(self, t: Union[Simplex, int]) -> tuple[np.ndarray, float]:
        """Centro e raio da bola inscrita na célula."""
        t = self.simplex(t) if isinstance(t, int) else t
        pts = self.vertices[list(t.vertex_ids)]
        areas = np.array([self.volume(self.find(np.delete(t.vertex_ids, i))) for i in range(self.n + 1)])
        center = (areas[:, None] * pts).sum(axis=0) / areas.sum()
        radius = self.n * self.volume(t) / areas.sum()
        return center, float(radius)

    def cell_patch(self, t: Union[Simplex, int]) -> list[int]:
        """Células que compartilham ao menos um vértice com T (inclui T)."""
        t = self.simplex(t) if isinstance(t, int) else t
        return sorted({c for v in t.vertex_ids for c in self._cells_of[v]})

    def face_connection(self, t0: int, t: int, s: Union[Simplex, int]) -> list[int]:
        """Caminho T0 = … = T de células contendo S, ligadas por facetas que contêm S."""
        s = self.simplex(s) if isinstance(s, int) else s
        cells = self._cells_of[s.id]
        if t0 not in cells or t not in cells:
            raise MeshError(f"{s.vertex_ids} não está contido nas células {t0} e {t}")
        parent = self._face_bfs(t0, s.id)
        if t not in parent:
            raise MeshError(f"Sem conexão por facetas de {t0} a {t} através de {s.vertex_ids}")
        path = []
        node = t
        while node != t0:
            path.append(node)
            node = parent[node]
        return path[::-1]

    def to_json(self) -> dict:
        return {"dimension": self.n, "vertices": self.vertices.tolist(),
                "cells": [list(c) for c in self.cell_orders]}

    def __repr__(self):
        return f"SimplicialComplex(n={self.n}, counts={self.counts()})"


def build_complex(vertices, cells) -> SimplicialComplex:
    return SimplicialComplex(vertices, cells)


# ============================================================================
# REFINAMENTO
# ============================================================================

def refine_uniform(mesh: SimplicialComplex) -> SimplicialComplex:
    """Refinamento vermelho (2D) ou de Bey (3D): cada célula gera 2^n filhas."""
    if mesh.n not in (2, 3):
        raise MeshError(f"Refinamento uniforme apenas para n ∈ {{2, 3}}, recebido {mesh.n}")
    nv = len(mesh.vertices)
    edges = mesh.simplices_by_dim[1]
    edge_pos = {e.vertex_ids: i for i, e in enumerate(edges)}
    mids = np.array([mesh.vertices[list(e.vertex_ids)].mean(axis=0) for e in edges])
    vertices = np.vstack([mesh.vertices, mids])

    def m(a, b):
        return nv + edge_pos[tuple(sorted((a, b)))]

    cells = []
    for order in mesh.cell_orders:
        if mesh.n == 2:
            x0, x1, x2 = order
            cells += [(x0, m(x0, x1), m(x0, x2)),
                      (m(x0, x1), x1, m(x1, x2)),
                      (m(x0, x2), m(x1, x2), x2),
                      (m(x0, x1), m(x1, x2), m(x0, x2))]
        else:
            x0, x1, x2, x3 = order
            x01, x02, x03 = m(x0, x1), m(x0, x2), m(x0, x3)
            x12, x13, x23 = m(x1, x2), m(x1, x3), m(x2, x3)
            cells += [(x0, x01, x02, x03), (x01, x1, x12, x13),
                      (x02, x12, x2, x23), (x03, x13, x23, x3),
                      (x01, x02, x03, x13), (x01, x02, x12, x13),
                      (x02, x03, x13, x23), (x02, x12, x13, x23)]
    fine = SimplicialComplex(vertices, cells)
    logger.info("Refinamento: %d -> %d células", mesh.num_cells, fine.num_cells)
    return fine


def mesh_sequence(base: SimplicialComplex, levels: int) -> list[SimplicialComplex]:
    """Nível 0 é a malha base; cada nível seguinte é um refinamento uniforme."""
    if levels < 1:
        raise MeshError(f"Número de níveis deve ser ≥ 1, recebido {levels}")
    meshes = [base]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


# ============================================================================
# FRONTEIRA E REPRESENTANTES
# ============================================================================

Selector = Union[Callable[[np.ndarray], bool], Iterable[int], None]


def boundary_subcomplex(mesh: SimplicialComplex, selector: Selector) -> BoundarySubcomplex:
    """𝒰 gerado pelas facetas de fronteira escolhidas e seus subsimplexos.

    selector é um predicado sobre o baricentro (avaliado só nas facetas de
    fronteira) ou uma lista explícita de ids de facetas.
    """
    if selector is None:
        chosen = []
    elif callable(selector):
        chosen = [f.id for f in mesh.boundary_facets() if selector(mesh.centroid(f))]
    else:
        chosen = sorted({int(i) for i in selector})
        for fid in chosen:
            if not mesh.is_boundary_facet(fid):
                raise MeshError(f"Simplexo {fid} não é faceta de fronteira")
    members = {s.id for fid in chosen for s in mesh.all_subsimplices(fid)}
    return BoundarySubcomplex(frozenset(members), tuple(chosen))


def _on_plane(axis: int, value: float) -> Callable[[np.ndarray], bool]:
    return lambda c: abs(c[axis] - value) < 1e-12


BOUNDARY_SELECTORS: dict[str, Callable[[np.ndarray], bool] | None] = {
    "all": lambda c: True,
    "bottom": _on_plane(1, 0.0),
    "left": _on_plane(0, 0.0),
    "none": None,
}


def named_boundary(mesh: SimplicialComplex, name: str) -> BoundarySubcomplex:
    if name not in BOUNDARY_SELECTORS:
        raise MeshError(f"Seletor de fronteira desconhecido: '{name}'")
    return boundary_subcomplex(mesh, BOUNDARY_SELECTORS[name])


def choose_representatives(mesh: SimplicialComplex, boundary: BoundarySubcomplex) -> Representatives:
    """F_S e T_S com desempate pelo menor id; S ∈ 𝒰 exige F_S ∈ 𝒰."""
    facet: dict[int, Optional[int]] = {}
    cell: dict[int, int] = {}
    for s in mesh.simplices:
        if s.dim == mesh.n:
            facet[s.id], cell[s.id] = None, s.id
            continue
        candidates = [f.id for f in mesh.superstar(s, mesh.n - 1)]
        if s.id in boundary:
            candidates = [f for f in candidates if f in boundary]
            if not candidates:
                raise MeshError(f"Simplexo {s.vertex_ids} ∈ 𝒰 sem faceta de 𝒰 que o contenha")
        facet[s.id] = min(candidates)
        cell[s.id] = min(mesh.cells_containing(facet[s.id]))
    return Representatives(facet, cell)


# ============================================================================
# GERADORES
# ============================================================================

def unit_square_2() -> SimplicialComplex:
    return build_complex([[0, 0], [1, 0], [1, 1], [0, 1]], [(0, 1, 2), (0, 2, 3)])


def unit_square_halves() -> SimplicialComplex:
    """Quadrado unitário alinhado com a reta x₀ = 1/2."""
    vertices = [[0, 0], [0.5, 0], [1, 0], [0, 1], [0.5, 1], [1, 1]]
    return build_complex(vertices, [(0, 1, 4), (0, 4, 3), (1, 2, 5), (1, 5, 4)])


def square_with_hole() -> SimplicialComplex:
    """Grade 4×4 do quadrado unitário sem o bloco central 2×2 (não simplesmente conexo)."""
    squares = [(i, j) for j in range(4) for i in range(4) if not (i in (1, 2) and j in (1, 2))]
    used = sorted({(i + a, j + b) for i, j in squares for a in (0, 1) for b in (0, 1)},
                  key=lambda p: (p[1], p[0]))
    index = {p: k for k, p in enumerate(used)}
    vertices = [[0.25 * i, 0.25 * j] for i, j in used]
    cells = []
    for i, j in squares:
        v00, v10 = index[(i, j)], index[(i + 1, j)]
        v01, v11 = index[(i, j + 1)], index[(i + 1, j + 1)]
        cells += [(v00, v10, v11), (v00, v11, v01)]
    return build_complex(vertices, cells)


def unit_cube_kuhn_6() -> SimplicialComplex:
    """Triangulação de Kuhn do cubo unitário em 6 tetraedros."""
    vertices = [[(b >> 0) & 1, (b >> 1) & 1, (b >> 2) & 1] for b in range(8)]
    cells = []
    for perm in permutations(range(3)):
        path, cur = [0], 0
        for axis in perm:
            cur |= 1 << axis
            path.append(cur)
        cells.append(tuple(path))
    return build_complex(vertices, cells)


def reference_triangle() -> SimplicialComplex:
    return build_complex([[0, 0], [1, 0], [0, 1]], [(0, 1, 2)])


def reference_tetrahedron() -> SimplicialComplex:
    return build_complex([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [(0, 1, 2, 3)])


MESH_GENERATORS: dict[str, Callable[[], SimplicialComplex]] = {
    "reference_tetrahedron": reference_tetrahedron,
    "reference_triangle": reference_triangle,
    "square_with_hole": square_with_hole,
    "unit_cube_kuhn_6": unit_cube_kuhn_6,
    "unit_square_2": unit_square_2,
    "unit_square_halves": unit_square_halves,
}


def generate_mesh(name: str) -> SimplicialComplex:
    if name not in MESH_GENERATORS:
        raise MeshError(f"Gerador de malha desconhecido: '{name}'")
    return MESH_GENERATORS[name]()


def load_mesh_json(path: Union[str, Path]) -> SimplicialComplex:
    """Lê {"dimension": n, "vertices": [[...]], "cells": [[...]]}."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise MeshError(f"Não foi possível ler a malha '{path}': {e}")
    except json.JSONDecodeError as e:
        raise MeshError(f"Malha '{path}' com JSON inválido (linha {e.lineno}, coluna {e.colno})")
    for key in ("dimension", "vertices", "cells"):
        if key not in data:
            raise MeshError(f"Malha '{path}' sem a chave '{key}'")
    mesh = build_complex(data["vertices"], data["cells"])
    if mesh.n != data["dimension"]:
        raise MeshError(f"Malha '{path}' declara dimensão {data['dimension']} mas tem vértices em R^{mesh.n}")
    return mesh
