"""Localized reduced basis surrogate with online enrichment.

Each subdomain carries its own orthonormal basis; the global reduced space
is their direct sum, so the reduced operators inherit the block sparsity of
the DG coupling (only subdomains sharing an edge interact).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .dg import AffineOperator

DEPENDENCY_RTOL = 1e-7
DEPENDENCY_ATOL = 1e-12


class LocalReducedBasis:
    """Per-subdomain bases, orthonormal in the local restriction of the energy product."""

    def __init__(self, mesh, product, rtol=DEPENDENCY_RTOL, atol=DEPENDENCY_ATOL):
        self.mesh = mesh
        G = sps.csr_matrix(product.matrix)
        self.local_products = [G[d][:, d].toarray() for d in map(mesh.subdomain_dofs, range(mesh.num_subdomains))]
        self.bases = [np.zeros((mesh.local_size, 0)) for _ in range(mesh.num_subdomains)]
        self.rtol = rtol
        self.atol = atol

    @property
    def sizes(self):
        return [b.shape[1] for b in self.bases]

    @property
    def dim(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def gram(self, j):
        b = self.bases[j]
        return b.T @ self.local_products[j] @ b

    def extend(self, j, vectors):
        """Gram-Schmidt new vectors into basis ``j``; returns how many were kept."""
        G = self.local_products[j]
        basis = self.bases[j]
        added = 0
        V = np.asarray(vectors, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        for v in V.T:
            v = v.copy()
            n0 = np.sqrt(max(v @ G @ v, 0.0))
            if n0 <= self.atol:
                continue
            # two passes for stability
            for _ in range(2):
                if basis.shape[1]:
                    v -= basis @ (basis.T @ (G @ v))
            n1 = np.sqrt(max(v @ G @ v, 0.0))
            if n1 <= self.rtol * n0 or n1 <= self.atol:
                continue
            basis = np.hstack([basis, (v / n1)[:, None]])
            added += 1
        self.bases[j] = basis
        return added

    def matrix(self):
        """Global basis as a sparse ``(num_dofs, N)`` block-diagonal matrix."""
        return sps.block_diag(self.bases, format='csr') if self.dim else \
            sps.csr_matrix((self.mesh.num_dofs, 0))

    def reconstruct(self, coeffs):
        return self.matrix() @ coeffs

    def block_of(self, j):
        o = self.offsets
        return slice(o[j], o[j + 1])


def pou_functions(mesh):
    """Coarse bilinear hat functions of the four corners of each subdomain.

    Returns an array of shape ``(num_subdomains, local_size, 4)``; corner
    order matches the cell node order.
    """
    s = mesh.s
    ly, lx = np.divmod(np.arange(mesh.local_size), s + 1)
    X, Y = lx / s, ly / s
    hats = np.stack([(1 - X) * (1 - Y), X * (1 - Y), (1 - X) * Y, X * Y], axis=1)
    return np.broadcast_to(hats, (mesh.num_subdomains,) + hats.shape)


def initialize_pou(mesh, product):
    basis = LocalReducedBasis(mesh, product)
    for j, hats in enumerate(pou_functions(mesh)):
        basis.extend(j, hats)
    return basis


@dataclass(frozen=True)
class EstimatorData:
    """Constants of the output error bound, calibrated once per model.

    ``alpha_ref``  smallest eigenvalue of ``a(mu_ref)`` w.r.t. the energy product
    ``mass_bound`` largest eigenvalue of the L2 mass w.r.t. the energy product
    """
    mu_ref: np.ndarray
    alpha_ref: float
    mass_bound: float

    def coercivity_lower_bound(self, mu):
        """Min-theta bound; the penalty part has coefficient one."""
        return self.alpha_ref * min(1.0, float(np.min(np.asarray(mu) / self.mu_ref)))


def calibrate(fom):
    G = fom.product.matrix
    A = fom.assemble(fom.mu_ref).tocsc()
    # fixed start vector: ARPACK otherwise draws a random one and results differ in the last bits
    v0 = np.ones(fom.dim)
    alpha = spla.eigsh(A, k=1, M=G, sigma=0.0, which='LM', v0=v0, return_eigenvectors=False)[0]
    # largest eigenvalue of M w.r.t. G == 1 / smallest of G w.r.t. M
    mass = sps.csc_matrix(fom.mass)
    lam = spla.eigsh(G, k=1, M=mass, sigma=0.0, which='LM', v0=v0, return_eigenvectors=False)[0]
    return EstimatorData(np.asarray(fom.mu_ref, dtype=float), float(alpha), float(1.0 / lam))


@dataclass
class ReducedCounters:
    primal: int = 0
    dual: int = 0
    local: int = 0

    @property
    def reduced(self):
        return self.primal + self.dual


@dataclass(frozen=True)
class ReducedSolution:
    mu: np.ndarray
    c: np.ndarray
    d: np.ndarray
    value: float
    gradient: np.ndarray
    estimate: float


def _project_affine(op, B):
    """``B^T op B`` component by component, as an :class:`AffineOperator`."""
    R, C, V, Q = [], [], [], []
    Bt = B.T.tocsr()
    for q in range(op.num_components + 1):
        K = op.component(q) if q < op.num_components else op.constant_part()
        red = (Bt @ K @ B).tocoo()
        R.append(red.row); C.append(red.col); V.append(red.data); Q.append(np.full(red.nnz, q))
    N = B.shape[1]
    return AffineOperator.from_triplets((N, N), *map(np.concatenate, (R, C, V, Q)), op.num_components)


class ReducedModel:
    """Galerkin projection of a :class:`~lrbtr.fom.FullOrderModel` onto a local basis.

    Primal and adjoint problems share the reduced space.
    """

    def __init__(self, fom, basis=None, estimator_data=None, workers=1):
        self.fom = fom
        self.basis = initialize_pou(fom.mesh, fom.product) if basis is None else basis
        self.estimator_data = calibrate(fom) if estimator_data is None else estimator_data
        self.counters = ReducedCounters()
        self.workers = workers
        self.project()

    def project(self):
        fom = self.fom
        B = self.basis.matrix()
        Bt = B.T.tocsr()
        self.B = B
        self.operator = _project_affine(fom.operator, B)
        self.rhs = Bt @ fom.rhs
        self.mass = (Bt @ fom.mass @ B).tocsr()
        spec = fom.spec
        if spec is not None:
            self.md = Bt @ (fom.mass @ spec.u_d)
            self.ud2 = float(spec.u_d @ (fom.mass @ spec.u_d))
        self._lu_key = None

    @property
    def dim(self):
        return self.basis.dim

    def assemble(self, mu):
        return self.operator.assemble(mu)

    def _factor(self, mu):
        key = np.asarray(mu, dtype=float).tobytes()
        if key != self._lu_key:
            self._lu = spla.splu(self.assemble(mu).tocsc())
            self._lu_key = key
        return self._lu

    def solve_primal(self, mu):
        mu = self.fom.space.parse(mu)
        self.counters.primal += 1
        return self._factor(mu).solve(self.rhs)

    def dual_rhs(self, c):
        return self.fom.spec.sigma_d * (self.mass @ c - self.md)

    def solve_dual(self, mu, c):
        mu = self.fom.space.parse(mu)
        self.counters.dual += 1
        return self._factor(mu).solve(self.dual_rhs(c))

    def reconstruct(self, c):
        return self.B @ c

    def objective(self, c, mu):
        spec = self.fom.spec
        misfit = float(c @ (self.mass @ c) - 2.0 * c @ self.md + self.ud2)
        d = np.asarray(mu, dtype=float) - spec.mu_d
        return 0.5 * spec.sigma_d * max(misfit, 0.0) + 0.5 * float(spec.sigma @ d ** 2) + 1.0

    def gradient(self, mu, c, d):
        spec = self.fom.spec
        return spec.sigma * (np.asarray(mu) - spec.mu_d) - self.operator.apply2_components(d, c)

    def value(self, mu):
        return self.objective(self.solve_primal(mu), mu)

    def estimate(self, mu, c, d):
        """Bound on ``|J_h(mu) - J_N(mu)|`` from primal and adjoint residual dual norms.

        With ``e = u_h - u_N`` and the shared reduced space,
        ``J_h - J_N = r_du(u_N, p_N)[e] + sigma_d/2 |e|^2_L2``, and
        ``|e| <= |r_pr(u_N)|' / alpha_LB(mu)``.
        """
        fom = self.fom
        A = fom.assemble(mu)
        u = self.reconstruct(c)
        p = self.reconstruct(d)
        r_pr = fom.rhs - A @ u
        r_du = fom.dual_rhs(u) - A @ p
        ed = self.estimator_data
        delta_pr = fom.product.dual_norm(r_pr) / ed.coercivity_lower_bound(mu)
        return delta_pr * fom.product.dual_norm(r_du) + 0.5 * fom.spec.sigma_d * ed.mass_bound * delta_pr ** 2

    def primal_estimate(self, mu, c):
        r = self.fom.rhs - self.fom.assemble(mu) @ self.reconstruct(c)
        return self.fom.product.dual_norm(r) / self.estimator_data.coercivity_lower_bound(mu)

    def solve(self, mu, with_estimate=True):
        mu = self.fom.space.parse(mu)
        c = self.solve_primal(mu)
        d = self.solve_dual(mu, c)
        est = self.estimate(mu, c, d) if with_estimate else np.nan
        return ReducedSolution(mu, c, d, self.objective(c, mu), self.gradient(mu, c, d), est)

    def value_and_gradient(self, mu):
        sol = self.solve(mu, with_estimate=False)
        return sol.value, sol.gradient

    def enrich_local(self, mu, c=None):
        """One oversampling sweep: a local correction per subdomain.

        On the patch ``O_T`` around each subdomain the correction ``phi``
        solves ``a(u_N + phi, v; mu) = l(v)`` for all ``v`` supported in the
        patch, with ``u_N`` held fixed outside.  Its restriction to the centre
        subdomain extends the local basis.  Returns the number of new vectors.
        """
        fom = self.fom
        mesh = fom.mesh
        mu = fom.space.parse(mu)
        if c is None:
            c = self.solve_primal(mu)
        A = fom.assemble(mu).tocsr()
        r = fom.rhs - A @ self.reconstruct(c)

        def local_solve(j):
            patch = mesh.patch(j)
            dofs = mesh.dofs_of(patch.members)
            phi = spla.spsolve(A[dofs][:, dofs].tocsc(), r[dofs])
            k = patch.members.index(j)
            return phi[k * mesh.local_size:(k + 1) * mesh.local_size]

        js = range(mesh.num_subdomains)
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                corrections = list(ex.map(local_solve, js))
        else:
            corrections = [local_solve(j) for j in js]
        self.counters.local += mesh.num_subdomains
        added = sum(self.basis.extend(j, phi[:, None]) for j, phi in enumerate(corrections))
        self.project()
        return added

    def enrich_global(self, u, p):
        """Add the subdomain restrictions of full-order primal and dual snapshots."""
        mesh = self.fom.mesh
        added = 0
        for j in range(mesh.num_subdomains):
            d = mesh.subdomain_dofs(j)
            added += self.basis.extend(j, np.stack([u[d], p[d]], axis=1))
        self.project()
        return added

    def block(self, i, j):
        """Block ``(i, j)`` of the summed absolute values of all reduced operator parts."""
        op = self.operator
        A = op._csr(np.abs(op.data).sum(axis=0) + np.abs(op.constant))
        return A[self.basis.block_of(i), self.basis.block_of(j)].toarray()

    def dump_sizes(self, path, iteration, mode='a'):
        with open(path, mode) as fp:
            for j, n in enumerate(self.basis.sizes):
                fp.write(f'{iteration},{j},{n}\n')
