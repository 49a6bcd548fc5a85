"""DG multiscale full-order model: primal/adjoint solves, objective, gradient."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .dg import EnergyProduct, assemble_rhs, discretize, q1_values, _cell_quadrature, DEFAULT_SIGMA0


@dataclass
class ObjectiveSpec:
    """``J(v, mu) = sigma_d/2 |v - u_d|^2_L2 + 1/2 sum sigma_i (mu_i - mu_d_i)^2 + 1``."""
    sigma_d: float
    sigma: np.ndarray
    mu_d: np.ndarray
    u_d: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.mu_d = np.asarray(self.mu_d, dtype=float)
        if self.sigma_d < 0 or np.any(self.sigma < 0):
            raise ValueError('objective weights must be non-negative')


def objective(spec, u, mu, mass):
    e = u - spec.u_d
    d = np.asarray(mu, dtype=float) - spec.mu_d
    return 0.5 * spec.sigma_d * float(e @ (mass @ e)) + 0.5 * float(spec.sigma @ d ** 2) + 1.0


def l2_norm_squared(mesh, v):
    """``int v^2`` by 2x2 Gauss quadrature cell by cell."""
    pts, w = _cell_quadrature()
    vals = v[mesh.cell_dofs] @ q1_values(pts).T
    return float(mesh.h ** 2 * np.sum(vals ** 2 @ w))


@dataclass(frozen=True)
class FomSolution:
    mu: np.ndarray
    u: np.ndarray
    p: np.ndarray
    value: float
    gradient: np.ndarray


@dataclass
class SolveCounters:
    primal: int = 0
    dual: int = 0

    @property
    def total(self):
        return self.primal + self.dual


def projected_gradient_norm(space, mu, grad):
    """First-order criticality ``|mu - P(mu - grad)|_2`` for the box."""
    return float(np.linalg.norm(mu - space.project(mu - grad)))


class FullOrderModel:
    """The global DG problem ``a(u, v; mu) = l(v)`` with a quadratic output.

    Parameters
    ----------
    mesh
        A :class:`~lrbtr.grid.TwoLevelMesh`.
    diffusion
        An :class:`~lrbtr.coeff.AffineDiffusion`.
    space
        The parameter box; its upper bounds fix the penalty.
    f
        Constant source or vectorized callable.
    mu_ref
        Parameter of the energy product, box midpoint by default.
    """

    def __init__(self, mesh, diffusion, space, f=10.0, sigma0=DEFAULT_SIGMA0, mu_ref=None):
        self.mesh = mesh
        self.diffusion = diffusion
        self.space = space
        self.disc = discretize(mesh, diffusion, space, sigma0)
        self.operator = self.disc.operator
        self.mass = self.disc.mass
        self.rhs = assemble_rhs(mesh, f)
        self.mu_ref = space.midpoint if mu_ref is None else np.asarray(mu_ref, dtype=float)
        self.product = EnergyProduct.from_discretization(self.disc, self.mu_ref)
        self.spec = None
        self.counters = SolveCounters()
        self._lu_key = None
        self._lu = None

    @property
    def num_parameters(self):
        return self.operator.num_components

    @property
    def dim(self):
        return self.mesh.num_dofs

    def set_objective(self, sigma_d, sigma, mu_d):
        """Use ``u_d = u_h(mu_d)``; the desired-state solve is not counted."""
        mu_d = self.space.parse(mu_d)
        u_d = self._factor(mu_d).solve(self.rhs)
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (self.num_parameters,)).copy()
        self.spec = ObjectiveSpec(float(sigma_d), sigma, mu_d, u_d)
        return self.spec

    def assemble(self, mu):
        return self.operator.assemble(mu)

    def _factor(self, mu):
        key = np.asarray(mu, dtype=float).tobytes()
        if key != self._lu_key:
            self._lu = spla.splu(self.assemble(mu).tocsc())
            self._lu_key = key
        return self._lu

    def factorization(self, mu):
        return self._factor(mu)

    def solve_primal(self, mu):
        mu = self.space.parse(mu)
        self.counters.primal += 1
        return self._factor(mu).solve(self.rhs)

    def dual_rhs(self, u):
        return self.spec.sigma_d * (self.mass @ (u - self.spec.u_d))

    def solve_dual(self, mu, u):
        # the operator is symmetric, so the primal factorization is reused
        mu = self.space.parse(mu)
        self.counters.dual += 1
        return self._factor(mu).solve(self.dual_rhs(u))

    def objective(self, u, mu):
        return objective(self.spec, u, mu, self.mass)

    def gradient(self, mu, u, p):
        """``sigma_i (mu_i - mu_d_i) - a_i(u, p)`` with ``a_i`` the i-th affine component."""
        mu = np.asarray(mu, dtype=float)
        return self.spec.sigma * (mu - self.spec.mu_d) - self.operator.apply2_components(p, u)

    def solve(self, mu):
        mu = self.space.parse(mu)
        u = self.solve_primal(mu)
        p = self.solve_dual(mu, u)
        return FomSolution(mu, u, p, self.objective(u, mu), self.gradient(mu, u, p))

    def value(self, mu):
        return self.objective(self.solve_primal(mu), mu)

    def primal_residual(self, mu, u):
        return self.rhs - self.assemble(mu) @ u

    def dual_residual(self, mu, u, p):
        return self.dual_rhs(u) - self.assemble(mu) @ p

    def foc(self, mu, grad):
        return projected_gradient_norm(self.space, mu, grad)

    def optimality_residuals(self, mu, u, p):
        """Dual norms of the state and adjoint residuals and the box-stationarity defect."""
        mu = self.space.parse(mu)
        g = self.gradient(mu, u, p)
        return (self.product.dual_norm(self.primal_residual(mu, u)),
                self.product.dual_norm(self.dual_residual(mu, u, p)),
                self.foc(mu, g))
