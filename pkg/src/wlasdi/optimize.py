"""Optimizers over a box-constrained objective: quasi-Newton BFGS with a
backtracking Armijo line search, a Nelder-Mead simplex, differential
evolution, and a radial-basis interpolant of the objective itself (the
cheap derivative-free baseline).

Box bounds are enforced by clamping every trial point into the box before
evaluation and adding a quadratic penalty rho * dist(x, box)^2 to the
wrapped objective, so interior minimizers are unaffected and iterates can
never report a point outside the box.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ParameterDomain
from .providers import TrainingCoefficients, fit_rbf

__all__ = [
    "OptProblem",
    "OptResult",
    "bfgs_minimize",
    "nelder_mead_minimize",
    "differential_evolution",
    "rbf_objective_surrogate",
]


@dataclass
class OptProblem:
    domain: ParameterDomain
    evaluate: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.x0 is None:
            self.x0 = self.domain.center()
        self.x0 = self.domain.validate(self.x0)
        if not self.domain.contains(self.x0):
            raise ValueError("x0 must lie inside the domain")


@dataclass
class OptResult:
    mu_hat: np.ndarray
    f_hat: float
    n_func: int = 0
    n_grad: int = 0
    wall_seconds: float = 0.0
    converged: bool = False
    trace: list = field(default_factory=list)


class _Counted:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


def _penalized(problem: OptProblem, fn: _Counted, rho: float):
    dom = problem.domain

    def wrapped(x):
        xc = dom.clamp(x)
        return fn(xc) + rho * float(np.sum((x - xc) ** 2))

    return wrapped


def _penalized_grad(problem: OptProblem, gn: _Counted, rho: float):
    dom = problem.domain

    def wrapped(x):
        xc = dom.clamp(x)
        g = np.asarray(gn(xc), dtype=float).copy()
        outside = x != xc
        g[outside] = 0.0  # clamp has zero derivative in clipped components
        return g + 2.0 * rho * (x - xc)

    return wrapped


def bfgs_minimize(
    problem: OptProblem,
    grad_tol: float = 1e-8,
    max_iter: int = 200,
    armijo_c: float = 1e-4,
    backtrack: float = 0.5,
    max_backtracks: int = 40,
) -> OptResult:
    """BFGS with backtracking Armijo line search and clamp-plus-penalty bounds."""
    if problem.gradient is None:
        raise ValueError("bfgs_minimize requires a gradient callable")
    t0 = time.perf_counter()
    fn = _Counted(problem.evaluate)
    gn = _Counted(problem.gradient)
    x = problem.x0.copy()
    f0 = fn(x)
    rho = 1e3 * abs(f0) + 1.0
    f = _penalized(problem, fn, rho)
    g = _penalized_grad(problem, gn, rho)

    n = x.size
    hess_inv = np.eye(n)
    fx = f0
    gx = g(x)
    trace = [(x.copy(), fx)]
    converged = False
    best_x, best_f = x.copy(), fx

    for _ in range(max_iter):
        if np.max(np.abs(gx)) <= grad_tol:
            converged = True
            break
        p = -hess_inv @ gx
        slope = float(gx @ p)
        if slope >= 0.0:  # reset on a non-descent direction
            hess_inv = np.eye(n)
            p = -gx
            slope = float(gx @ p)
        alpha = 1.0
        f_new = None
        for _ in range(max_backtracks):
            trial = x + alpha * p
            f_trial = f(trial)
            if f_trial <= fx + armijo_c * alpha * slope:
                f_new = f_trial
                break
            alpha *= backtrack
        if f_new is None:
            break  # line search failed; return best iterate
        x_new = x + alpha * p
        g_new = g(x_new)
        s = x_new - x
        y = g_new - gx
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            rho_k = 1.0 / sy
            v = np.eye(n) - rho_k * np.outer(s, y)
            hess_inv = v @ hess_inv @ v.T + rho_k * np.outer(s, s)
        x, fx, gx = x_new, f_new, g_new
        trace.append((problem.domain.clamp(x), fx))
        if fx < best_f:
            best_x, best_f = x.copy(), fx
    else:
        converged = np.max(np.abs(gx)) <= grad_tol

    if fx < best_f:
        best_x, best_f = x, fx
    return OptResult(
        mu_hat=problem.domain.clamp(best_x),
        f_hat=float(best_f),
        n_func=fn.calls,
        n_grad=gn.calls,
        wall_seconds=time.perf_counter() - t0,
        converged=converged,
        trace=trace,
    )


def nelder_mead_minimize(
    problem: OptProblem,
    tol: float = 1e-8,
    max_iter: int = 5000,
    initial_step: float = 0.05,
) -> OptResult:
    """Simplex search with reflection/expansion/contraction/shrink.

    Trial points are clamped into the box before evaluation; the stored
    vertices are the clamped points so the simplex never leaves the box.
    Converged once the simplex diameter drops below ``tol``.
    """
    t0 = time.perf_counter()
    fn = _Counted(problem.evaluate)
    dom = problem.domain
    n = problem.x0.size

    simplex = [problem.x0.copy()]
    widths = dom.upper - dom.lower
    for i in range(n):
        v = problem.x0.copy()
        v[i] += initial_step * widths[i]
        simplex.append(dom.clamp(v))
    simplex = np.asarray(simplex)
    values = np.array([fn(v) for v in simplex])

    converged = False
    trace = []
    for _ in range(max_iter):
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        trace.append((simplex[0].copy(), float(values[0])))
        diameter = np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1))
        if diameter <= tol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]

        reflected = dom.clamp(centroid + (centroid - worst))
        f_r = fn(reflected)
        if f_r < values[0]:
            expanded = dom.clamp(centroid + 2.0 * (centroid - worst))
            f_e = fn(expanded)
            if f_e < f_r:
                simplex[-1], values[-1] = expanded, f_e
            else:
                simplex[-1], values[-1] = reflected, f_r
        elif f_r < values[-2]:
            simplex[-1], values[-1] = reflected, f_r
        else:
            if f_r < values[-1]:
                contracted = dom.clamp(centroid + 0.5 * (reflected - centroid))
            else:
                contracted = dom.clamp(centroid + 0.5 * (worst - centroid))
            f_c = fn(contracted)
            if f_c < min(f_r, values[-1]):
                simplex[-1], values[-1] = contracted, f_c
            else:
                for i in range(1, n + 1):
                    simplex[i] = dom.clamp(simplex[0] + 0.5 * (simplex[i] - simplex[0]))
                    values[i] = fn(simplex[i])

    best = int(np.argmin(values))
    trace.append((simplex[best].copy(), float(values[best])))
    return OptResult(
        mu_hat=dom.clamp(simplex[best]),
        f_hat=float(values[best]),
        n_func=fn.calls,
        n_grad=0,
        wall_seconds=time.perf_counter() - t0,
        converged=converged,
        trace=trace,
    )


def differential_evolution(
    problem: OptProblem,
    pop: int = 20,
    f_weight: float = 0.7,
    crossover: float = 0.9,
    seed: int = 0,
    max_gen: int = 100,
) -> OptResult:
    """DE/rand/1/bin with bound clipping; bit-deterministic for a fixed seed."""
    if pop < 4:
        raise ValueError("population must be >= 4")
    t0 = time.perf_counter()
    fn = _Counted(problem.evaluate)
    dom = problem.domain
    rng = np.random.default_rng(seed)
    n = problem.x0.size

    population = dom.sample(rng, pop)
    population[0] = problem.x0
    values = np.array([fn(x) for x in population])

    trace = []
    for _ in range(max_gen):
        for i in range(pop):
            choices = [j for j in range(pop) if j != i]
            r1, r2, r3 = rng.choice(choices, size=3, replace=False)
            mutant = population[r1] + f_weight * (population[r2] - population[r3])
            mutant = dom.clamp(mutant)
            mask = rng.random(n) < crossover
            mask[rng.integers(n)] = True
            trial = np.where(mask, mutant, population[i])
            f_trial = fn(trial)
            if f_trial <= values[i]:
                population[i] = trial
                values[i] = f_trial
        gen_best = int(np.argmin(values))
        trace.append((population[gen_best].copy(), float(values[gen_best])))

    best = int(np.argmin(values))
    return OptResult(
        mu_hat=dom.clamp(population[best]),
        f_hat=float(values[best]),
        n_func=fn.calls,
        n_grad=0,
        wall_seconds=time.perf_counter() - t0,
        converged=True,
        trace=trace,
    )


def rbf_objective_surrogate(training_mus, training_fs, epsilon: float | None = None):
    """Gaussian RBF interpolant of scalar objective samples.

    Exact at the training parameters; returns a callable evaluator meant to
    be handed to a derivative-free optimizer.
    """
    mus = np.atleast_2d(np.asarray(training_mus, dtype=float))
    fs = np.asarray(training_fs, dtype=float).reshape(-1)
    if mus.shape[0] != fs.size:
        raise ValueError("one objective value per training parameter required")
    provider = fit_rbf(
        TrainingCoefficients(mus, fs.reshape(-1, 1, 1)), epsilon=epsilon
    )

    def evaluate(mu) -> float:
        return float(provider.coefficients(np.asarray(mu, dtype=float))[0, 0])

    return evaluate
