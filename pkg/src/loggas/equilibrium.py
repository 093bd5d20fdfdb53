"""Equilibrium measures for even convex fields and the interaction fixed point.

Energy convention: I_V(mu) = int V dmu + int int log|s-t|^{-1} dmu dmu, whose
minimiser satisfies V + 2 U^mu = const on its support.  For V = c t^2 this
gives a semicircle of radius sqrt(2/c).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import brentq

from .errors import HypothesisViolated, NoConvergence, NotConvex, QuadratureNotConverged
from .measure import Measure1D, chebyshev_angles
from .model import ExternalField, InteractionKernel, convolve_measure, shifted_field

log = logging.getLogger(__name__)

DEFAULT_NODES = 128


@dataclass(frozen=True)
class EquilibriumSolution:
    measure: Measure1D
    endpoint: float
    residual: float
    iterations: int
    field: Optional[ExternalField] = None
    initializer: str = ""
    history: tuple = ()

    def summary(self):
        out = dict(self.measure.summary())
        out.update(endpoint=self.endpoint, residual=self.residual, iterations=self.iterations)
        if self.initializer:
            out["initializer"] = self.initializer
        return out


# ---------------------------------------------------------------------------
# reference measures
# ---------------------------------------------------------------------------
def arcsine_measure(l, m=DEFAULT_NODES):
    """Density 1/(pi sqrt(l^2 - t^2)) on [-l, l]."""
    if not l > 0:
        raise ValueError("l must be positive")
    return Measure1D.from_smooth_part(lambda t: np.full(np.shape(t), 1.0 / np.pi), -l, l, m)


def semicircle_measure(omega, m=DEFAULT_NODES):
    """Density 2/(pi omega^2) sqrt(omega^2 - t^2) on [-omega, omega]."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    return Measure1D.from_smooth_part(lambda t: 2.0 / (np.pi * omega ** 2) * (omega ** 2 - np.square(t)),
                                      -omega, omega, m)


def semicircle_density(omega, t):
    t = np.asarray(t, dtype=float)
    return 2.0 / (np.pi * omega ** 2) * np.sqrt(np.maximum(omega ** 2 - t * t, 0.0))


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------
def log_potential(mu, z):
    """U^mu(z) = int log|z-t|^{-1} dmu(t)."""
    val = mu.log_potential(z)
    if not np.all(np.isfinite(val)):
        raise QuadratureNotConverged("log potential is not finite", operation="log_potential")
    return val


def energy_functional(V, mu):
    """int V dmu + int int log|s-t|^{-1} dmu dmu."""
    val = mu.integrate(V.eval) + mu.log_energy()
    if not math.isfinite(val):
        raise QuadratureNotConverged("energy integral is not finite", operation="energy_functional")
    return val


def f_functional(Q, l, coefficient=2.0, m=DEFAULT_NODES):
    """log(l/2) - coefficient * int Q d(arcsine on [-l, l]).

    With the energy convention above the support radius maximises this for
    coefficient = 1/2; the default keeps the coefficient 2 of the F-functional
    as usually quoted for this model.
    """
    val = math.log(l / 2) - coefficient * arcsine_measure(l, m).integrate(Q.eval)
    if not math.isfinite(val):
        raise QuadratureNotConverged("F functional is not finite", operation="f_functional")
    return val


# ---------------------------------------------------------------------------
# one-cut solver
# ---------------------------------------------------------------------------
def _check_convex(V, radius_hint=10.0):
    grid = np.linspace(-radius_hint, radius_hint, 401)
    d2 = V.deriv2(grid)
    if np.any(d2 < -1e-12) or not np.any(d2 > 0):
        raise NotConvex("field fails the convexity check", operation="solve_equilibrium",
                        min_second_derivative=float(np.min(d2)))
    if not np.allclose(V.eval(grid), V.eval(-grid), rtol=1e-10, atol=1e-10):
        raise NotConvex("one-cut solver requires an even field", operation="solve_equilibrium")


def _endpoint_condition(V, m):
    theta = chebyshev_angles(m)
    y = np.cos(theta)

    def f(b):
        s = b * y
        return float(np.mean(s * V.deriv1(s))) / 2.0 - 1.0

    return f


def _find_endpoint(V, m):
    f = _endpoint_condition(V, m)
    lo, hi = 0.5, 1.0
    for _ in range(200):
        if f(hi) > 0:
            break
        lo, hi = hi, hi * 2
    else:
        raise NoConvergence("no upper bracket for the endpoint", operation="solve_equilibrium")
    for _ in range(200):
        if f(lo) < 0:
            break
        hi, lo = lo, lo / 2
    else:
        raise NoConvergence("no lower bracket for the endpoint", operation="solve_equilibrium")
    try:
        return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (RuntimeError, ValueError) as exc:
        raise NoConvergence(f"endpoint search failed: {exc}", operation="solve_equilibrium") from exc


def _smooth_part(V, b, m):
    """g(t) = (b^2 - t^2)/(2 pi^2) int (V'(s)-V'(t))/(s-t) ds/sqrt(b^2-s^2) at the Chebyshev nodes."""
    s = b * np.cos(chebyshev_angles(m))
    ds = s[None, :] - s[:, None]
    diag = np.eye(m, dtype=bool)
    d1 = V.deriv1(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (d1[None, :] - d1[:, None]) / np.where(diag, 1.0, ds)
    q[diag] = V.deriv2(s)
    inner = np.pi / m * q.sum(axis=1)
    return s, (b * b - s * s) / (2 * np.pi ** 2) * inner


def euler_lagrange_residual(V, mu, outside_factor=1.5, n_out=200):
    """(spread of V + 2U^mu over the support nodes, worst violation outside)."""
    inside = V.eval(mu.nodes) + 2 * mu.log_potential(mu.nodes)
    const = float(np.mean(inside))
    spread = float(np.max(np.abs(inside - const)))
    a, b = mu.support
    hw = 0.5 * (b - a)
    out = np.concatenate([np.linspace(b, b + outside_factor * hw, n_out)[1:],
                          np.linspace(a - outside_factor * hw, a, n_out)[:-1]])
    outside = V.eval(out) + 2 * mu.log_potential(out)
    violation = float(max(0.0, np.max(const - outside)))
    return spread, violation


def solve_equilibrium(V, tol=1e-10, m=DEFAULT_NODES, check=True):
    """Equilibrium measure of an even convex field on a single interval [-b, b]."""
    if check:
        _check_convex(V)
    b = _find_endpoint(V, m)
    s, g = _smooth_part(V, b, m)
    if np.any(g < -tol):
        raise NoConvergence("negative density: field outside the one-cut regime", operation="solve_equilibrium")
    mu = Measure1D.from_smooth_part(lambda t: np.maximum(g, 0.0), -b, b, m)
    mass_err = abs(mu.total_mass - 1.0)
    mu = mu.normalized()
    spread, violation = euler_lagrange_residual(V, mu)
    residual = max(spread, violation, mass_err)
    if not residual <= tol:
        raise NoConvergence(f"variational residual {residual:.3e} exceeds tol {tol:.1e}",
                            operation="solve_equilibrium", residual=residual)
    return EquilibriumSolution(mu, float(b), float(residual), 1, V)


# ---------------------------------------------------------------------------
# interaction fixed point
# ---------------------------------------------------------------------------
class _ChebField:
    """W(t) on [-L, L] stored as Chebyshev coefficients."""

    def __init__(self, L, coef):
        self.L = L
        self.coef = coef
        self.d1 = C.chebder(coef) / L
        self.d2 = C.chebder(coef, 2) / L ** 2

    @classmethod
    def fit(cls, fn, L, deg):
        x = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        return cls(L, C.chebfit(x, fn(L * x), deg))

    def mix(self, other, lam):
        return _ChebField(self.L, (1 - lam) * self.coef + lam * other.coef)

    def field(self, Q):
        L = self.L
        return ExternalField(
            lambda t: Q.eval(t) + C.chebval(np.asarray(t) / L, self.coef),
            lambda t: Q.deriv1(t) + C.chebval(np.asarray(t) / L, self.d1),
            lambda t: Q.deriv2(t) + C.chebval(np.asarray(t) / L, self.d2),
            Q.convexity_lower_bound, Q.symmetric, "shifted",
        )


def _sup_change(mu_a, mu_b, n=2001):
    r = max(mu_a.radius, mu_b.radius)
    grid = np.linspace(-r, r, n)
    return float(np.max(np.abs(mu_a.density_at(grid) - mu_b.density_at(grid))))


def check_fixed_point_hypothesis(Q, h, radius, factor=3.0, n=801):
    """h'' >= -inf Q'' on a grid covering differences of points in the domain."""
    grid = np.linspace(-2 * factor * radius, 2 * factor * radius, n)
    worst = float(np.min(h.deriv2(grid)))
    if worst < -Q.convexity_lower_bound - 1e-12:
        raise HypothesisViolated("h'' falls below -inf Q''", operation="fixed_point_interaction",
                                 min_h2=worst, alpha_Q=Q.convexity_lower_bound)


def fixed_point_interaction(Q, h, tol=1e-10, max_iter=200, damping=0.5, m=DEFAULT_NODES,
                            cheb_degree=96, domain_factor=3.0):
    """Fixed point mu = equilibrium measure of Q + h_mu, by damped iteration.

    The iteration starts from mu_0 = equilibrium measure of Q and mixes the
    mean-field term h_mu with weight ``damping`` per step.
    """
    sol0 = solve_equilibrium(Q, tol=max(tol, 1e-10), m=m)
    if h.is_zero:
        return EquilibriumSolution(sol0.measure, sol0.endpoint, sol0.residual, 1, Q,
                                   "solve_equilibrium(Q)", (0.0,))
    check_fixed_point_hypothesis(Q, h, sol0.endpoint)
    L = domain_factor * sol0.endpoint
    hmu = lambda mu: (lambda t: convolve_measure(h.eval, mu, t))
    W = _ChebField.fit(hmu(sol0.measure), L, cheb_degree)
    prev = sol0.measure
    history = []
    for it in range(1, max_iter + 1):
        V = W.field(Q)
        grid = np.linspace(-1.5 * prev.radius, 1.5 * prev.radius, 401)
        if np.min(V.deriv2(grid)) < -1e-12:
            raise HypothesisViolated("Q'' + (h'')_mu lost convexity", operation="fixed_point_interaction",
                                     iteration=it)
        try:
            sol = solve_equilibrium(V, tol=max(tol, 1e-9), m=m, check=False)
        except NoConvergence as exc:
            raise NoConvergence(f"inner solve failed at iteration {it}: {exc}",
                                operation="fixed_point_interaction") from exc
        if sol.endpoint > L:
            raise NoConvergence("support left the interpolation domain", operation="fixed_point_interaction")
        change = _sup_change(prev, sol.measure)
        history.append(change)
        log.debug("fixed point iteration %d: sup density change %.3e", it, change)
        prev = sol.measure
        if change <= tol:
            Vstar = shifted_field(Q, h, sol.measure)
            spread, violation = euler_lagrange_residual(Vstar, sol.measure)
            return EquilibriumSolution(sol.measure, sol.endpoint, max(spread, violation), it, Vstar,
                                       "solve_equilibrium(Q)", tuple(history))
        W = W.mix(_ChebField.fit(hmu(sol.measure), L, cheb_degree), damping)
    raise NoConvergence(f"no convergence after {max_iter} iterations", operation="fixed_point_interaction",
                        last_change=history[-1])
