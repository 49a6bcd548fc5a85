"""Relaxed trust-region optimization with localized reduced models.

The outer loop builds the reduced model on the fly: every accepted iterate
triggers a sweep of local oversampling corrections, and full-order solves are
only spent when the reduced first-order condition claims convergence.
A plain projected BFGS on the full-order model serves as the baseline.
"""
import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .fom import projected_gradient_norm
from .lrbm import ReducedModel

logger = logging.getLogger(__name__)


@dataclass
class TrustRegionConfig:
    delta0: float = 0.1
    shrink: float = 0.5
    boundary_fraction: float = 0.95
    eps0: float = 1e-2
    eps_cutoff: int = 10
    tau_foc: float = 3e-6
    tau_sub: float = None
    max_outer: int = 50
    max_inner: int = 400
    max_bfgs: int = 1000
    armijo_slope: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    curvature_tol: float = 1e-10
    active_eps: float = 1e-3
    workers: int = 1

    def __post_init__(self):
        if self.tau_sub is None:
            self.tau_sub = 0.5 * self.tau_foc
        for name in ('delta0', 'eps0', 'tau_foc', 'tau_sub', 'armijo_slope'):
            if not getattr(self, name) > 0:
                raise ValueError(f'{name} must be positive')
        if not (0 < self.shrink < 1 and 0 < self.boundary_fraction < 1 and 0 < self.backtrack < 1):
            raise ValueError('shrink, boundary_fraction and backtrack must lie in (0, 1)')

    def relaxation(self, k):
        """``eps0 * 2**-k`` up to the cutoff, zero afterwards."""
        return self.eps0 * 2.0 ** (-k) if k <= self.eps_cutoff else 0.0


@dataclass
class BFGSResult:
    mu: np.ndarray
    value: float
    gradient: np.ndarray
    state: object
    iterations: int
    foc: float
    reason: str
    agc: tuple = None
    path: list = field(default_factory=list)
    values: list = field(default_factory=list)
    focs: list = field(default_factory=list)


def _active_direction(space, mu, g, H, eps):
    """Projected BFGS direction: identity on the epsilon-active set, ``-H g`` elsewhere."""
    act = ((mu - space.lower <= eps) & (g > 0)) | ((space.upper - mu <= eps) & (g < 0))
    d = -g.copy()
    ina = ~act
    if np.any(ina):
        d[ina] = -H[np.ix_(ina, ina)] @ g[ina]
    return d


def projected_bfgs(value, gradient, space, mu0, tol, max_iter, cfg, feasible=None, on_boundary=None):
    """Projected BFGS with Armijo backtracking on a box.

    ``value(mu) -> (J, state)`` and ``gradient(mu, state) -> g`` are kept
    apart so that rejected line-search trials never pay for a gradient.
    ``feasible(mu, state)`` rejects a trial like a failed Armijo test;
    ``on_boundary(mu, state)`` flags iterates near the trust-region boundary,
    and two consecutive flags stop the iteration.
    """
    mu = space.project(mu0)
    J, st = value(mu)
    g = gradient(mu, st)
    n = len(mu)
    H = np.eye(n)
    foc = projected_gradient_norm(space, mu, g)
    res = BFGSResult(mu, J, g, st, 0, foc, 'foc', (mu, J), [mu], [J], [foc])
    if foc <= tol:
        return res
    hits = 0
    reason = 'max_iter'
    it = 0
    while it < max_iter:
        d = _active_direction(space, mu, g, H, min(cfg.active_eps, foc))
        t = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks + 1):
            trial = space.project(mu + t * d)
            step = trial - mu
            slope = g @ step
            if slope < 0:
                Jt, st_t = value(trial)
                if Jt <= J + cfg.armijo_slope * slope and (feasible is None or feasible(trial, st_t)):
                    accepted = True
                    break
            t *= cfg.backtrack
        if not accepted:
            reason = 'stall'
            break
        g_new = gradient(trial, st_t)
        y = g_new - g
        sy = step @ y
        if sy > cfg.curvature_tol * np.linalg.norm(step) * np.linalg.norm(y):
            if it == 0:
                H = (sy / (y @ y)) * np.eye(n)
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(step, y)
            H = V @ H @ V.T + rho * np.outer(step, step)
        mu, J, g, st = trial, Jt, g_new, st_t
        it += 1
        res.path.append(mu)
        if it == 1:
            res.agc = (mu, J)
        foc = projected_gradient_norm(space, mu, g)
        res.values.append(J)
        res.focs.append(foc)
        if foc <= tol:
            reason = 'foc'
            break
        if on_boundary is not None and on_boundary(mu, st):
            hits += 1
            if hits >= 2:
                reason = 'boundary'
                break
        else:
            hits = 0
    res.mu, res.value, res.gradient, res.state = mu, J, g, st
    res.iterations, res.foc, res.reason = it, foc, reason
    return res


@dataclass
class SubproblemResult:
    mu: np.ndarray
    value: float
    estimate: float
    mu_agc: np.ndarray
    value_agc: float
    inner_iterations: int
    reason: str


def solve_subproblem(rm, mu_k, radius, cfg):
    """Minimize the reduced functional inside ``estimate / value <= radius``.

    The first accepted iterate is a projected-gradient step and serves as
    the approximate generalized Cauchy point.
    """
    space = rm.fom.space

    def value(mu):
        sol = rm.solve(mu)
        return sol.value, sol

    def gradient(mu, sol):
        return sol.gradient

    def feasible(mu, sol):
        return sol.estimate / sol.value <= radius

    def on_boundary(mu, sol):
        return sol.estimate / sol.value >= cfg.boundary_fraction * radius

    res = projected_bfgs(value, gradient, space, mu_k, cfg.tau_sub, cfg.max_inner, cfg,
                         feasible=feasible, on_boundary=on_boundary)
    mu_agc, value_agc = res.agc
    return SubproblemResult(res.mu, res.value, res.state.estimate, mu_agc, value_agc, res.iterations, res.reason)


class Decision(enum.Enum):
    ACCEPT = 'accept'
    REJECT = 'reject'
    # bounds overlap: decided with the enriched surrogate
    NEEDS_FOM = 'needs-fom'


def check_sufficient_decrease(value, estimate, value_agc, eps):
    """Cheap sufficient / necessary tests of ``J_next(mu_next) <= J(mu_agc) + eps``."""
    target = value_agc + eps
    if value + estimate <= target:
        return Decision.ACCEPT
    if value - estimate > target:
        return Decision.REJECT
    return Decision.NEEDS_FOM


@dataclass
class OptimizationReport:
    algorithm: str
    mu: np.ndarray
    value: float
    foc: float
    converged: bool
    iterates: list
    counters: dict
    history: list = field(default_factory=list)
    wall_time: float = 0.0

    def mu_error(self, mu_opt):
        return float(np.linalg.norm(self.mu - mu_opt) / np.linalg.norm(mu_opt))

    def decay(self, mu_opt):
        n = np.linalg.norm(mu_opt)
        return [float(np.linalg.norm(mu_opt - m) / n) for m in self.iterates]


@dataclass
class TrustRegionState:
    k: int
    mu: np.ndarray
    rm: ReducedModel
    delta: float
    value: float
    gradient: np.ndarray
    iterates: list
    history: list = field(default_factory=list)
    inner: int = 0
    converged: bool = False
    final_foc: float = np.inf


def _counters(fom, rm, outer, inner):
    return {'fom': fom.counters.total, 'fom_primal': fom.counters.primal, 'fom_dual': fom.counters.dual,
            'reduced': rm.counters.reduced, 'local': rm.counters.local, 'outer': outer, 'inner': inner}


def _fom_check(state, cfg):
    """FOM first-order check at the current iterate; enrich globally if it fails."""
    fom = state.rm.fom
    sol = fom.solve(state.mu)
    foc = fom.foc(state.mu, sol.gradient)
    state.final_foc = foc
    if foc <= cfg.tau_foc:
        state.converged = True
        return foc, 0
    return foc, state.rm.enrich_global(sol.u, sol.p)


def _rom_foc_step(state, cfg):
    """Reduced first-order check, escalating to the full model when it holds."""
    rm = state.rm
    rom_foc = projected_gradient_norm(rm.fom.space, state.mu, state.gradient)
    fom_foc, added = np.nan, 0
    if rom_foc <= cfg.tau_foc:
        fom_foc, added = _fom_check(state, cfg)
        if added:
            sol = rm.solve(state.mu)
            state.value, state.gradient = sol.value, sol.gradient
    return rom_foc, fom_foc, added


def init_state(fom, mu0, cfg):
    mu0 = fom.space.project(mu0)
    rm = ReducedModel(fom, workers=cfg.workers)
    rm.enrich_local(mu0)
    sol = rm.solve(mu0)
    state = TrustRegionState(0, mu0, rm, cfg.delta0, sol.value, sol.gradient, [mu0])
    rom_foc, fom_foc, added = _rom_foc_step(state, cfg)
    state.history.append(dict(k=0, inner_iterations=0, value=state.value, estimate=sol.estimate, delta=state.delta,
                              eps=cfg.relaxation(0), ratio=sol.estimate / sol.value, rom_foc=rom_foc,
                              fom_foc=fom_foc, decision='init', accepted=True,
                              **_counters(fom, rm, 0, 0)))
    return state


def outer_step(state, cfg):
    """One outer iteration: subproblem, acceptance, enrichment, termination checks."""
    rm = state.rm
    fom = rm.fom
    k = state.k
    eps = cfg.relaxation(k)
    radius = state.delta + eps
    sub = solve_subproblem(rm, state.mu, radius, cfg)
    state.inner += sub.inner_iterations
    ratio = sub.estimate / sub.value
    decision = check_sufficient_decrease(sub.value, sub.estimate, sub.value_agc, eps)
    if ratio > radius:
        # only possible when the subproblem could not leave an infeasible start
        decision = Decision.REJECT
        rm.enrich_local(state.mu)
    accepted = decision is Decision.ACCEPT
    enriched = False
    if decision is Decision.NEEDS_FOM:
        rm.enrich_local(sub.mu)
        enriched = True
        accepted = rm.value(sub.mu) <= sub.value_agc + eps
    delta_used = state.delta
    rom_foc = fom_foc = np.nan
    if accepted:
        if not enriched:
            rm.enrich_local(sub.mu)
        sol = rm.solve(sub.mu, with_estimate=False)
        state.mu, state.value, state.gradient = sub.mu, sol.value, sol.gradient
        rom_foc, fom_foc, _ = _rom_foc_step(state, cfg)
    else:
        state.delta *= cfg.shrink
    state.k = k + 1
    state.iterates.append(state.mu)
    state.history.append(dict(k=k + 1, inner_iterations=sub.inner_iterations, value=sub.value, estimate=sub.estimate,
                              delta=delta_used, eps=eps, ratio=ratio, rom_foc=rom_foc, fom_foc=fom_foc,
                              decision=decision.value, accepted=bool(accepted),
                              **_counters(fom, rm, k + 1, state.inner)))
    logger.info('outer %d: J_N=%.10g est=%.3e delta=%.3e %s rom_foc=%.3e fom_foc=%.3e N=%d',
                k + 1, sub.value, sub.estimate, delta_used, decision.value, rom_foc, fom_foc, rm.dim)
    return state


def run_tr(fom, cfg, mu0):
    """Relaxed trust-region optimization with an adaptively enriched local reduced model."""
    t0 = time.perf_counter()
    state = init_state(fom, mu0, cfg)
    while not state.converged and state.k < cfg.max_outer:
        outer_step(state, cfg)
    if not state.converged:
        logger.warning('trust-region budget exhausted after %d outer iterations', state.k)
    return OptimizationReport('TR-LRBM', state.mu, state.value, state.final_foc, state.converged,
                              state.iterates, _counters(fom, state.rm, state.k, state.inner),
                              state.history, time.perf_counter() - t0)


def run_bfgs_fom(fom, cfg, mu0):
    """Projected BFGS driven by full-order solves only."""
    t0 = time.perf_counter()
    space = fom.space
    counts = {'gradients': 0, 'rejected': 0}

    def value(mu):
        u = fom.solve_primal(mu)
        return fom.objective(u, mu), u

    def gradient(mu, u):
        counts['gradients'] += 1
        return fom.gradient(mu, u, fom.solve_dual(mu, u))

    res = projected_bfgs(value, gradient, space, mu0, cfg.tau_foc, cfg.max_bfgs, cfg)
    counters = {'fom': fom.counters.total, 'fom_primal': fom.counters.primal, 'fom_dual': fom.counters.dual,
                'gradients': counts['gradients'], 'outer': res.iterations}
    counters['rejected_trials'] = counters['fom_primal'] - counters['gradients']
    history = [dict(k=i, value=v, fom_foc=f) for i, (v, f) in enumerate(zip(res.values, res.focs))]
    if res.reason != 'foc':
        logger.warning('baseline BFGS stopped early: %s', res.reason)
    return OptimizationReport('BFGS-FOM', res.mu, res.value, res.foc, res.reason == 'foc',
                              res.path, counters, history, time.perf_counter() - t0)
