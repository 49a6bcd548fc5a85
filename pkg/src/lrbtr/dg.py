"""Symmetric interior penalty assembly on two-level meshes.

Functions are bilinear and continuous on each subdomain, so jump terms only
live on subdomain interfaces and on the domain boundary.  The bilinear form

    a(v, w; mu) = sum_t int_t A(mu) grad v . grad w
                - sum_e int_e {A(mu) grad v . n}[w] + {A(mu) grad w . n}[v]
                + sum_e sigma_e / |e| int_e [v][w]

is stored as ``sum_q mu_q B_q + P`` with ``B_q`` collecting the volume and
consistency contributions of diffusion component ``q`` and a
parameter-independent penalty ``P``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .grid import BOUNDARY, OPPOSITE_EDGE, EDGE_NORMALS, LEFT, RIGHT, BOTTOM, TOP

GAUSS_1D = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_W = np.array([0.5, 0.5])
DEFAULT_SIGMA0 = 16.0


def q1_values(pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.stack([(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y], axis=1)


def q1_gradients(pts):
    """Reference-cell gradients, shape ``(npts, 4, 2)``."""
    x, y = pts[:, 0], pts[:, 1]
    gx = np.stack([-(1 - y), 1 - y, -y, y], axis=1)
    gy = np.stack([-(1 - x), -x, 1 - x, x], axis=1)
    return np.stack([gx, gy], axis=2)


def _cell_quadrature():
    gx, gy = np.meshgrid(GAUSS_1D, GAUSS_1D, indexing='xy')
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    w = np.outer(GAUSS_W, GAUSS_W).ravel()
    return pts, w


def _edge_points(edge):
    g = GAUSS_1D
    if edge == LEFT:
        return np.stack([np.zeros(2), g], axis=1)
    if edge == RIGHT:
        return np.stack([np.ones(2), g], axis=1)
    if edge == BOTTOM:
        return np.stack([g, np.zeros(2)], axis=1)
    return np.stack([g, np.ones(2)], axis=1)


def reference_stiffness():
    """Bilinear stiffness on a square; independent of the cell size in 2d."""
    pts, w = _cell_quadrature()
    G = q1_gradients(pts)
    return np.einsum('g,gid,gjd->ij', w, G, G)


def reference_mass():
    """Mass matrix of the unit reference square (scale by ``h**2``)."""
    pts, w = _cell_quadrature()
    V = q1_values(pts)
    return np.einsum('g,gi,gj->ij', w, V, V)


def _face_traces(edge, normal):
    pts = _edge_points(edge)
    return q1_values(pts), q1_gradients(pts) @ normal


def reference_face_matrices(edge, boundary=False):
    """Reference face matrices for a face on local edge ``edge`` of the minus cell.

    Returns ``(penalty, flux_minus, flux_plus)``; for inner faces these act on
    the 8 dofs ``[minus, plus]``.  ``flux_*`` are the symmetric consistency
    contributions of one side, already carrying the average weight and the
    minus sign.  On boundary faces ``flux_plus`` is ``None``.
    """
    n = EDGE_NORMALS[edge]
    W = np.diag(GAUSS_W)
    Tm, Dm = _face_traces(edge, n)
    if boundary:
        J, Fm = Tm, Dm
        Cm = -(Fm.T @ W @ J + J.T @ W @ Fm)
        return J.T @ W @ J, Cm, None
    Tp, Dp = _face_traces(OPPOSITE_EDGE[edge], n)
    z = np.zeros_like(Tm)
    J = np.hstack([Tm, -Tp])
    Fm = np.hstack([Dm, z])
    Fp = np.hstack([z, Dp])
    Cm = -0.5 * (Fm.T @ W @ J + J.T @ W @ Fm)
    Cp = -0.5 * (Fp.T @ W @ J + J.T @ W @ Fp)
    return J.T @ W @ J, Cm, Cp


class AffineOperator:
    """``sum_q theta_q B_q + C`` stored on one shared CSR pattern.

    ``data[q]`` holds the values of ``B_q``; ``constant`` those of ``C``.
    """

    def __init__(self, shape, indptr, indices, data, constant):
        self.shape = shape
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self.constant = constant

    @classmethod
    def from_triplets(cls, shape, rows, cols, vals, comp, num_components):
        """``comp == num_components`` marks the constant part."""
        n = shape[1]
        keys = rows.astype(np.int64) * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        nnz = len(uniq)
        data = np.zeros((num_components + 1, nnz))
        for q in range(num_components + 1):
            m = comp == q
            if np.any(m):
                data[q] = np.bincount(inv[m], weights=vals[m], minlength=nnz)
        r = uniq // n
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(shape, indptr, (uniq % n).astype(np.int64), data[:-1], data[-1])

    @property
    def num_components(self):
        return len(self.data)

    def _csr(self, values):
        return sps.csr_matrix((values, self.indices, self.indptr), shape=self.shape)

    def assemble(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_components,):
            raise ValueError(f'expected {self.num_components} coefficients, got {theta.shape}')
        return self._csr(theta @ self.data + self.constant)

    def component(self, q):
        return self._csr(self.data[q].copy())

    def constant_part(self):
        return self._csr(self.constant.copy())

    def components(self):
        return [self.component(q) for q in range(self.num_components)]

    def apply2_components(self, v, w):
        """``[v^T B_q w for q]`` without forming the matrices."""
        if getattr(self, '_rows', None) is None:
            self._rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        return self.data @ (v[self._rows] * w[self.indices])


def _cell_triplets(dofs, local, weights):
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    vals = (weights[:, None] * local.ravel()[None, :]).ravel()
    return rows, cols, vals


def assemble_volume(mesh, cell_values, cells=None):
    """``sum_t int_t c grad v . grad w`` for a piecewise constant ``c`` on the fine cells."""
    cell_values = np.asarray(cell_values, dtype=float)
    if cell_values.shape != (mesh.num_cells,):
        raise ValueError(f'need one value per fine cell ({mesh.num_cells}), got {cell_values.shape}')
    if cells is None:
        cells = np.flatnonzero(cell_values)
    r, c, v = _cell_triplets(mesh.cell_dofs[cells], reference_stiffness(), cell_values[cells])
    return sps.csr_matrix((v, (r, c)), shape=(mesh.num_dofs,) * 2)


def assemble_mass(mesh):
    dofs = mesh.cell_dofs
    r, c, v = _cell_triplets(dofs, reference_mass() * mesh.h ** 2, np.ones(len(dofs)))
    return sps.csr_matrix((v, (r, c)), shape=(mesh.num_dofs,) * 2)


def assemble_rhs(mesh, f):
    """Load vector of ``int f v``; ``f`` is a constant or a vectorized callable of points."""
    pts, w = _cell_quadrature()
    V = q1_values(pts)
    h = mesh.h
    if callable(f):
        cx, cy = mesh.cell_index
        x = (cx[:, None] + pts[None, :, 0]) * h
        y = (cy[:, None] + pts[None, :, 1]) * h
        fv = np.asarray(f(np.stack([x, y], axis=-1)), dtype=float)
        local = h ** 2 * np.einsum('g,cg,gi->ci', w, fv, V)
    else:
        local = np.broadcast_to(float(f) * h ** 2 * (w @ V), (mesh.num_cells, 4))
    return np.bincount(mesh.cell_dofs.ravel(), weights=local.ravel(), minlength=mesh.num_dofs)


def _face_blocks(mesh, face_ids):
    """Group faces by (edge, boundary) so reference matrices can be shared."""
    faces = mesh.faces
    for edge in (LEFT, RIGHT, BOTTOM, TOP):
        for boundary in (False, True):
            sel = face_ids[(faces.edge[face_ids] == edge) & ((faces.kind[face_ids] == BOUNDARY) == boundary)]
            if len(sel):
                yield edge, boundary, sel


def face_triplets(mesh, face_ids, cell_xi, cell_values, penalty_weight, num_components):
    """Triplets ``(rows, cols, vals, comp)`` of the face terms on ``face_ids``.

    ``cell_xi``/``cell_values`` have shape ``(num_fields, n_cells)``;
    ``penalty_weight`` is ``sigma_e`` per face (indexed like ``mesh.faces``).
    The penalty goes into component ``num_components``.
    """
    faces = mesh.faces
    dofs = mesh.cell_dofs
    R, C, V, Q = [], [], [], []
    for e, boundary, sel in _face_blocks(mesh, np.asarray(face_ids)):
        P_ref, Cm_ref, Cp_ref = reference_face_matrices(e, boundary)
        m = faces.minus[sel]
        if boundary:
            fd = dofs[m]
        else:
            fd = np.hstack([dofs[m], dofs[faces.plus[sel]]])
        k = fd.shape[1]
        rows = np.repeat(fd, k, axis=1)
        cols = np.tile(fd, (1, k))
        sides = [(m, Cm_ref)]
        if not boundary:
            sides.append((faces.plus[sel], Cp_ref))
        parts = [(penalty_weight[sel][:, None] * P_ref.ravel()[None, :],
                  np.full(len(sel), num_components))]
        for cells, Cref in sides:
            for f in range(cell_xi.shape[0]):
                parts.append((cell_values[f, cells][:, None] * Cref.ravel()[None, :], cell_xi[f, cells]))
        for vals, comp in parts:
            R.append(rows.ravel()); C.append(cols.ravel()); V.append(vals.ravel())
            Q.append(np.repeat(comp, k * k))
    if not R:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0), z
    return np.concatenate(R), np.concatenate(C), np.concatenate(V), np.concatenate(Q)


def assemble_face(mesh, face_ids, cell_xi, cell_values, penalty_weight, num_components):
    """Consistency matrices per component and the penalty matrix on ``face_ids``."""
    r, c, v, q = face_triplets(mesh, face_ids, cell_xi, cell_values, penalty_weight, num_components)
    shape = (mesh.num_dofs,) * 2
    cons = [sps.csr_matrix((v[q == i], (r[q == i], c[q == i])), shape=shape) for i in range(num_components)]
    pen = sps.csr_matrix((v[q == num_components], (r[q == num_components], c[q == num_components])), shape=shape)
    return cons, pen


def penalty_weights(mesh, cell_upper, sigma0=DEFAULT_SIGMA0):
    """``sigma_e = sigma0 * max(A_ub)`` over the cells adjacent to each face."""
    faces = mesh.faces
    up = cell_upper[faces.minus]
    inner = faces.plus >= 0
    up[inner] = np.maximum(up[inner], cell_upper[faces.plus[inner]])
    return sigma0 * up


@dataclass
class DGDiscretization:
    """All parameter-independent matrices of the DG model on a mesh."""
    mesh: object
    operator: AffineOperator
    volume: AffineOperator
    mass: sps.csr_matrix
    cell_xi: np.ndarray
    cell_values: np.ndarray
    sigma: np.ndarray


def discretize(mesh, diffusion, space, sigma0=DEFAULT_SIGMA0):
    """Assemble the affine DG operator for ``diffusion`` over parameter box ``space``."""
    cell_xi, cell_values = diffusion.cell_data(mesh.n_h)
    P = diffusion.num_parameters
    cell_upper = np.sum(space.upper[cell_xi] * cell_values, axis=0)
    sigma = penalty_weights(mesh, cell_upper, sigma0)

    K = reference_stiffness()
    rows, cols, vals, comp = [], [], [], []
    for f in range(cell_xi.shape[0]):
        r, c, v = _cell_triplets(mesh.cell_dofs, K, cell_values[f])
        rows.append(r); cols.append(c); vals.append(v); comp.append(np.repeat(cell_xi[f], 16))
    volume = AffineOperator.from_triplets((mesh.num_dofs,) * 2, *map(np.concatenate, (rows, cols, vals, comp)), P)
    r, c, v, q = face_triplets(mesh, mesh.coupling_faces, cell_xi, cell_values, sigma, P)
    rows.append(r); cols.append(c); vals.append(v); comp.append(q)
    operator = AffineOperator.from_triplets((mesh.num_dofs,) * 2, *map(np.concatenate, (rows, cols, vals, comp)), P)
    return DGDiscretization(mesh, operator, volume, assemble_mass(mesh), cell_xi, cell_values, sigma)


class EnergyProduct:
    """SPD product matrix with a cached factorization for Riesz solves."""

    def __init__(self, matrix):
        self.matrix = sps.csc_matrix(matrix)
        self._lu = None

    @classmethod
    def from_discretization(cls, disc, mu_ref):
        """Broken H1 part at ``mu_ref`` plus the jump penalty."""
        penalty = disc.operator.constant_part()
        return cls(disc.volume.assemble(mu_ref) + penalty)

    @property
    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix)
        return self._lu

    def apply2(self, u, v):
        return u @ (self.matrix @ v)

    def norm(self, u):
        return float(np.sqrt(max(self.apply2(u, u), 0.0)))

    def riesz(self, r):
        return self.lu.solve(np.asarray(r, dtype=float))

    def dual_norm(self, r):
        r = np.asarray(r, dtype=float)
        return float(np.sqrt(max(r @ self.riesz(r), 0.0)))


def dual_norm(product, functional):
    """``sqrt(r^T G^{-1} r)``."""
    return product.dual_norm(functional)


def dump_triplets(matrix, path):
    coo = sps.coo_matrix(matrix)
    with open(path, 'w') as fp:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fp.write(f'{i} {j} {float(v)!r}\n')
