"""Uniform triangulations of the unit square.

Every mesh is the "criss" pattern: the square is cut into ``2**level``
cells per direction and each cell is split along its lower-left to
upper-right diagonal.  Vertices are numbered lexicographically by
``(y, x)`` and elements cell by cell (lower triangle first), so that the
whole hierarchy is deterministic and exactly nested.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, InputError, StructuralError

MAX_LEVEL = 12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of ``[0, 1]^2``.

    Attributes
    ----------
    vertices : (nv, 2) float array
    elements : (ne, 3) int array, counterclockwise vertex triples
    level : int
    parent : Mesh or None
        The coarser mesh this one was obtained from by :func:`refine`.
    """

    vertices: np.ndarray
    elements: np.ndarray
    level: int
    parent: Optional["Mesh"] = field(default=None, repr=False)

    @property
    def cell_size(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def n_cells(self) -> int:
        return 2 ** self.level

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    def jacobians(self):
        """Affine data of all elements.

        Returns
        -------
        B : (ne, 2, 2) array with columns ``p1 - p0`` and ``p2 - p0``
        b : (ne, 2) array, the first vertex
        det : (ne,) array
        """
        p = self.vertices[self.elements]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        return B, p[:, 0].copy(), det

    def areas(self) -> np.ndarray:
        return 0.5 * self.jacobians()[2]

    def locate(self, points) -> np.ndarray:
        """Index of an element containing each point (structured lookup).

        Points on shared edges are attributed to one of the neighbours;
        for continuous piecewise polynomials the choice is immaterial.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(pts < -1e-12) or np.any(pts > 1 + 1e-12):
            raise InputError("points outside the unit square")
        n = self.n_cells
        s = pts[:, 0] * n
        t = pts[:, 1] * n
        i = np.clip(np.floor(s).astype(np.int64), 0, n - 1)
        j = np.clip(np.floor(t).astype(np.int64), 0, n - 1)
        upper = (t - j) > (s - i)
        return 2 * (j * n + i) + upper

    def edges(self):
        """Unique edges and, per edge, the number of adjacent elements."""
        e = self.elements
        all_edges = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
        all_edges.sort(axis=1)
        uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
        return uniq, counts

    def vertex_to_elements(self) -> sp.csr_matrix:
        """Incidence matrix (nv x ne) with ones where a vertex belongs to an element."""
        ne = self.num_elements
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(ne), 3)
        return sp.csr_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(self.num_vertices, ne)
        )


@dataclass(frozen=True)
class ElementMap:
    """Affine map ``x = B @ xhat + b`` from the reference triangle to element ``index``."""

    index: int
    B: np.ndarray
    b: np.ndarray
    det: float
    inv_T: np.ndarray

    def __call__(self, xhat):
        xhat = np.asarray(xhat, dtype=float)
        return xhat @ self.B.T + self.b

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        return (x - self.b) @ self.inv_T

    def jacobian(self, xhat=None):
        # affine: constant Jacobian
        return self.B


def build_uniform(level: int) -> Mesh:
    """Criss triangulation of the unit square with ``2**level`` cells per side."""
    level = int(level)
    if level < 0:
        raise InputError("level must be nonnegative")
    if level > MAX_LEVEL:
        raise CapacityError(f"level {level} exceeds memory guard {MAX_LEVEL}")
    n = 2 ** level
    coords = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(coords, coords)  # row index = y
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (jj * (n + 1) + ii).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    return Mesh(vertices=vertices, elements=elements, level=level)


def refine(m: Mesh) -> Mesh:
    """Uniform refinement; the returned mesh keeps a link to ``m``."""
    child = build_uniform(m.level + 1)
    return Mesh(child.vertices, child.elements, child.level, parent=m)


def is_refinement_of(fine: Mesh, coarse: Mesh) -> bool:
    """True when ``fine`` is ``coarse`` or an iterated uniform refinement of it."""
    if fine.level < coarse.level:
        return False
    # uniform criss meshes of the unit square are nested by construction;
    # cheap sanity check on the coordinates of the coarse vertices
    stride = 2 ** (fine.level - coarse.level)
    nf = fine.n_cells + 1
    nc = coarse.n_cells + 1
    jj, ii = np.divmod(np.arange(nc * nc), nc)
    idx = (jj * stride) * nf + ii * stride
    return bool(np.array_equal(fine.vertices[idx], coarse.vertices))


def element_map(m: Mesh, k: int) -> ElementMap:
    if not 0 <= k < m.num_elements:
        raise IndexError(f"element index {k} out of range")
    p = m.vertices[m.elements[k]]
    B = np.column_stack([p[1] - p[0], p[2] - p[0]])
    det = float(np.linalg.det(B))
    return ElementMap(k, B, p[0].copy(), det, np.linalg.inv(B).T)


def patch(m: Mesh, k: int) -> set:
    """Elements sharing at least one vertex with element ``k`` (``k`` included)."""
    if not 0 <= k < m.num_elements:
        raise IndexError(f"element index {k} out of range")
    v2e = m.vertex_to_elements()
    rows = v2e[m.elements[k]]
    return set(int(i) for i in np.unique(rows.indices))


def patch_sizes(m: Mesh) -> np.ndarray:
    """Cardinality of every element patch."""
    v2e = m.vertex_to_elements()
    e2e = (v2e.T @ v2e).tocsr()
    return np.diff(e2e.indptr)


def dump_mesh(m: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"vertices {m.num_vertices}\n")
        for x, y in m.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"elements {m.num_elements}\n")
        for i, j, k in m.elements:
            fh.write(f"{i} {j} {k}\n")


def load_mesh(path) -> Mesh:
    """Read a mesh dump.  The level is recovered from the element count."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if lines[0][0] != "vertices":
        raise StructuralError("mesh dump must start with 'vertices N'")
    nv = int(lines[0][1])
    vertices = np.array(lines[1:1 + nv], dtype=float)
    head = lines[1 + nv]
    if head[0] != "elements":
        raise StructuralError("missing 'elements M' line")
    ne = int(head[1])
    elements = np.array(lines[2 + nv:2 + nv + ne], dtype=np.int64)
    if vertices.shape != (nv, 2) or elements.shape != (ne, 3):
        raise StructuralError("mesh dump is truncated")
    level = int(round(np.log(ne / 2) / np.log(4)))
    return Mesh(vertices=vertices, elements=elements, level=level)
