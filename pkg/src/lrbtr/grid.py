"""Structured two-level quadrilateral meshes of the unit square.

The coarse grid has ``n_H x n_H`` subdomains; every subdomain carries its own
``s x s`` fine grid.  Degrees of freedom are nodal values of bilinear
functions, numbered subdomain by subdomain, so a function is continuous
inside a subdomain and may jump across subdomain interfaces.

Numbering conventions
---------------------
* subdomain ``j = jy * n_H + jx``
* global fine cell ``c = cy * n_h + cx`` with ``n_h = n_H * s``
* local node ``a = ly * (s + 1) + lx`` and global dof ``j * (s + 1)**2 + a``
* the four nodes of a cell are ordered lexicographically:
  (0, 0), (1, 0), (0, 1), (1, 1)
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

INNER = 0
INTERFACE = 1
BOUNDARY = 2

# local edges of a fine cell
LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
EDGE_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
OPPOSITE_EDGE = np.array([RIGHT, LEFT, TOP, BOTTOM])


@dataclass(frozen=True)
class Faces:
    """All fine faces of a mesh, stored as flat arrays.

    ``minus`` is the cell the normal points away from, ``plus`` the cell on
    the other side or ``-1`` on the domain boundary.  ``edge`` is the local
    edge of the minus cell the face lies on.
    """
    minus: np.ndarray
    plus: np.ndarray
    edge: np.ndarray
    kind: np.ndarray
    length: float

    def __len__(self):
        return len(self.minus)

    @property
    def normal(self):
        return EDGE_NORMALS[self.edge]

    def count(self, kind):
        return int(np.count_nonzero(self.kind == kind))


@dataclass(frozen=True)
class OversamplingPatch:
    """A coarse cell plus one layer of vertex neighbours.

    ``outer_faces`` indexes the fine faces on the patch boundary that are not
    on the domain boundary; ``outer_minus`` is the member-side cell of each,
    ``outer_edge`` its local edge (so the normal points out of the patch).
    """
    center: int
    members: tuple
    outer_faces: np.ndarray
    outer_minus: np.ndarray
    outer_edge: np.ndarray


@dataclass(frozen=True)
class TwoLevelMesh:
    n_H: int
    s: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_H) < 1 or int(self.s) < 1:
            raise ValueError(f'mesh sizes must be positive, got n_H={self.n_H}, s={self.s}')

    @property
    def n_h(self):
        return self.n_H * self.s

    @property
    def h(self):
        return 1.0 / self.n_h

    @property
    def num_subdomains(self):
        return self.n_H ** 2

    @property
    def local_size(self):
        return (self.s + 1) ** 2

    @property
    def num_dofs(self):
        return self.num_subdomains * self.local_size

    @property
    def num_cells(self):
        return self.n_h ** 2

    @cached_property
    def coarse_cells(self):
        """``(N_H, 4)`` array of ``[x0, y0, x1, y1]`` per subdomain."""
        H = 1.0 / self.n_H
        jy, jx = np.divmod(np.arange(self.num_subdomains), self.n_H)
        return np.stack([jx * H, jy * H, (jx + 1) * H, (jy + 1) * H], axis=1)

    @cached_property
    def cell_index(self):
        """``(cx, cy)`` integer coordinates of every global fine cell."""
        cy, cx = np.divmod(np.arange(self.num_cells), self.n_h)
        return cx, cy

    @cached_property
    def cell_subdomain(self):
        cx, cy = self.cell_index
        return (cy // self.s) * self.n_H + cx // self.s

    @cached_property
    def cells_of_subdomain(self):
        """``(N_H, s*s)`` global cell indices, local lexicographic order."""
        order = np.argsort(self.cell_subdomain, kind='stable')
        return order.reshape(self.num_subdomains, self.s * self.s)

    @cached_property
    def cell_centers(self):
        cx, cy = self.cell_index
        return np.stack([(cx + 0.5) * self.h, (cy + 0.5) * self.h], axis=1)

    @cached_property
    def cell_dofs(self):
        """``(n_cells, 4)`` global dofs of the cell nodes."""
        cx, cy = self.cell_index
        s = self.s
        lx, ly = cx % s, cy % s
        base = self.cell_subdomain * self.local_size + ly * (s + 1) + lx
        return np.stack([base, base + 1, base + s + 1, base + s + 2], axis=1)

    @cached_property
    def dof_coords(self):
        s = self.s
        ly, lx = np.divmod(np.arange(self.local_size), s + 1)
        x0 = self.coarse_cells[:, 0][:, None] + lx[None, :] * self.h
        y0 = self.coarse_cells[:, 1][:, None] + ly[None, :] * self.h
        return np.stack([x0.ravel(), y0.ravel()], axis=1)

    def subdomain_dofs(self, j):
        return np.arange(j * self.local_size, (j + 1) * self.local_size)

    def dofs_of(self, subdomains):
        return np.concatenate([self.subdomain_dofs(j) for j in subdomains])

    @cached_property
    def faces(self):
        n = self.n_h
        c = np.arange(self.num_cells).reshape(n, n)  # c[cy, cx]
        minus, plus, edge = [], [], []
        # interior vertical faces, normal +x
        minus.append(c[:, :-1].ravel()); plus.append(c[:, 1:].ravel())
        edge.append(np.full(n * (n - 1), RIGHT))
        # interior horizontal faces, normal +y
        minus.append(c[:-1, :].ravel()); plus.append(c[1:, :].ravel())
        edge.append(np.full(n * (n - 1), TOP))
        # boundary faces, normal outward
        for cells, e in ((c[:, 0], LEFT), (c[:, -1], RIGHT), (c[0, :], BOTTOM), (c[-1, :], TOP)):
            minus.append(cells); plus.append(np.full(n, -1)); edge.append(np.full(n, e))
        minus = np.concatenate(minus)
        plus = np.concatenate(plus)
        edge = np.concatenate(edge)
        sd = self.cell_subdomain
        kind = np.where(plus < 0, BOUNDARY,
                        np.where(sd[minus] == sd[np.maximum(plus, 0)], INNER, INTERFACE))
        return Faces(minus, plus, edge, kind, self.h)

    @cached_property
    def coupling_faces(self):
        """Indices of interface and boundary faces (where jumps can be nonzero)."""
        return np.flatnonzero(self.faces.kind != INNER)

    def neighbors(self, j):
        """Subdomains sharing an edge with ``j``."""
        jy, jx = divmod(j, self.n_H)
        out = []
        for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            if 0 <= jx + dx < self.n_H and 0 <= jy + dy < self.n_H:
                out.append((jy + dy) * self.n_H + jx + dx)
        return sorted(out)

    def patch(self, j):
        if not 0 <= j < self.num_subdomains:
            raise IndexError(f'subdomain index {j} out of range [0, {self.num_subdomains})')
        key = ('patch', j)
        if key in self._cache:
            return self._cache[key]
        jy, jx = divmod(j, self.n_H)
        members = tuple(sorted(
            (jy + dy) * self.n_H + jx + dx
            for dy in (-1, 0, 1) for dx in (-1, 0, 1)
            if 0 <= jx + dx < self.n_H and 0 <= jy + dy < self.n_H))
        faces = self.faces
        inside = np.zeros(self.num_subdomains, dtype=bool)
        inside[list(members)] = True
        sd = self.cell_subdomain
        cand = np.flatnonzero(faces.kind == INTERFACE)
        m_in = inside[sd[faces.minus[cand]]]
        p_in = inside[sd[faces.plus[cand]]]
        outer = cand[m_in != p_in]
        flip = ~inside[sd[faces.minus[outer]]]
        outer_minus = np.where(flip, faces.plus[outer], faces.minus[outer])
        outer_edge = np.where(flip, OPPOSITE_EDGE[faces.edge[outer]], faces.edge[outer])
        p = OversamplingPatch(j, members, outer, outer_minus, outer_edge)
        self._cache[key] = p
        return p


def build_mesh(n_H, s):
    """Two-level mesh with ``n_H**2`` subdomains of ``s x s`` fine cells each."""
    if int(n_H) != n_H or int(s) != s:
        raise ValueError('mesh sizes must be integers')
    return TwoLevelMesh(int(n_H), int(s))
