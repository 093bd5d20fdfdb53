"""Orthonormal polynomials for exponential weights and their kernels.

Recurrence convention: t p_k = a[k] p_{k+1} + b[k] p_k + a[k-1] p_{k-1}, with
p_0 = norm0.  Weighted functions psi_k = p_k w^{1/2} are evaluated by carrying
the recurrence with a per-point log scale, so e^{-N V} never underflows in an
intermediate step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .errors import EdgeTooClose, NumericallyNegative, PrecisionLoss
from .model import MixtureGaussianParams

log = logging.getLogger(__name__)

MAX_DOUBLE_DEGREE = 200
PANEL_NODES = 16
_RESCALE = 1e120


@dataclass(frozen=True)
class WeightSpec:
    """w(t) = exp(log_weight(t)) on [-L, L]; log_weight typically -N V(t) + f(t)."""

    log_weight: Callable[[np.ndarray], np.ndarray]
    domain: tuple
    n_scale: int = 1
    extended: bool = False

    def __post_init__(self):
        a, b = self.domain
        if not b > a:
            raise ValueError("empty domain")
        probe = np.asarray(self.log_weight(np.linspace(a, b, 33)), dtype=float)
        if not np.all(np.isfinite(probe)):
            raise ValueError("log weight must be finite on the domain")

    @classmethod
    def from_field(cls, V, n, L, f=None, extended=False):
        if f is None:
            lw = lambda t: -n * V.eval(np.asarray(t, dtype=float))
        else:
            lw = lambda t: -n * V.eval(np.asarray(t, dtype=float)) + f(np.asarray(t, dtype=float))
        return cls(lw, (-float(L), float(L)), int(n), extended)

    def scaled(self, factor):
        """Weight multiplied by a positive constant."""
        lf = math.log(factor)
        return WeightSpec(lambda t: self.log_weight(t) + lf, self.domain, self.n_scale, self.extended)

    def __call__(self, t):
        return np.exp(self.log_weight(np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class RecurrenceTable:
    a: np.ndarray
    b: np.ndarray
    log_norm0: float
    degree_max: int
    drift: float = 0.0

    @property
    def norm0(self):
        return math.exp(self.log_norm0)

    def jacobi_matrix(self, n):
        return np.diag(self.b[:n]) + np.diag(self.a[: n - 1], 1) + np.diag(self.a[: n - 1], -1)


def gaussian_table(c, n, degree):
    """Closed-form recurrence for the weight exp(-c n t^2) (scaled Hermite)."""
    k = np.arange(degree)
    a = np.sqrt((k + 1) / (2.0 * c * n))
    return RecurrenceTable(a, np.zeros(degree), -0.25 * math.log(math.pi / (c * n)), degree)


# ---------------------------------------------------------------------------
# Stieltjes / Lanczos
# ---------------------------------------------------------------------------
def composite_legendre(a, b, n_nodes, dtype=float):
    panels = max(1, -(-n_nodes // PANEL_NODES))
    gx, gw = np.polynomial.legendre.leggauss(PANEL_NODES)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return x.astype(dtype), w.astype(dtype)


def _lanczos(x, w, degree):
    """Jacobi coefficients of the discrete measure sum w_i delta_{x_i} (sum w = 1)."""
    m = x.size
    Q = np.zeros((m, degree + 1), dtype=x.dtype)
    a = np.zeros(degree, dtype=x.dtype)
    b = np.zeros(degree, dtype=x.dtype)
    Q[:, 0] = np.sqrt(w)
    for k in range(degree):
        v = x * Q[:, k]
        b[k] = Q[:, k] @ v
        v = v - b[k] * Q[:, k]
        if k > 0:
            v = v - a[k - 1] * Q[:, k - 1]
        for _ in range(2):
            v = v - Q[:, : k + 1] @ (Q[:, : k + 1].T @ v)
        a[k] = np.sqrt(v @ v)
        if not a[k] > 0:
            raise PrecisionLoss("discrete measure exhausted", achievable_degree=k, operation="stieltjes_recurrence")
        Q[:, k + 1] = v / a[k]
    return a, b


def _discretise(weight, n_nodes, dtype):
    x, gw = composite_legendre(weight.domain[0], weight.domain[1], n_nodes, dtype)
    lw = np.asarray(weight.log_weight(x.astype(float)), dtype=dtype)
    shift = lw.max()
    w = gw * np.exp(lw - shift)
    total = w.sum()
    return x, gw, w / total, float(np.log(total) + shift)


def stieltjes_recurrence(weight, degree, rtol=1e-12, max_doublings=5):
    """Recurrence coefficients up to ``degree`` by Lanczos on composite Gauss-Legendre nodes."""
    if degree > MAX_DOUBLE_DEGREE and not weight.extended:
        raise PrecisionLoss(f"degree {degree} needs extended precision (limit {MAX_DOUBLE_DEGREE})",
                            achievable_degree=MAX_DOUBLE_DEGREE, operation="stieltjes_recurrence")
    dtype = np.longdouble if weight.extended else np.float64
    n_nodes = 8 * (degree + 1)
    prev = None
    for _ in range(max_doublings + 1):
        x, gw, w, log_mass = _discretise(weight, n_nodes, dtype)
        a, b = _lanczos(x, w, degree)
        if prev is not None:
            scale = float(np.max(np.abs(a)))
            change = max(float(np.max(np.abs(a - prev[0]))), float(np.max(np.abs(b - prev[1])))) / scale
            if change <= rtol:
                break
        prev = (a, b)
        n_nodes *= 2
    else:
        raise PrecisionLoss("recurrence coefficients did not stabilise under node doubling",
                            achievable_degree=None, operation="stieltjes_recurrence")
    table = RecurrenceTable(a.astype(float), b.astype(float), -0.5 * log_mass, degree)
    drift_by_degree = _orthonormality_drift(table, weight, x, gw)
    drift = float(np.max(drift_by_degree))
    if drift > 1e-8:
        ok = np.nonzero(drift_by_degree > 1e-8)[0]
        raise PrecisionLoss(f"orthogonality drift {drift:.2e}", achievable_degree=int(ok[0]) - 1,
                            operation="stieltjes_recurrence")
    if drift > 1e-10:
        log.warning("orthonormality drift %.2e exceeds 1e-10", drift)
    if weight.extended:
        return RecurrenceTable(np.asarray(a), np.asarray(b), -0.5 * log_mass, degree, drift)
    return RecurrenceTable(table.a, table.b, table.log_norm0, degree, drift)


def _orthonormality_drift(table, weight, x, gw):
    psi = weighted_functions(table, weight, x, table.degree_max)
    G = (psi * gw) @ psi.T
    err = np.abs(G - np.eye(G.shape[0]))
    return np.max(np.tril(err), axis=1)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------
def _scaled_recurrence(table, t, n, log_scale0, derivative=False):
    """Yield (k, v_k, dv_k, s) with p_k w^{1/2} = v_k e^{s} for k = 0..n."""
    a, b = table.a, table.b
    dt = a.dtype
    v_prev = np.zeros(t.shape, dtype=dt)
    v = np.ones(t.shape, dtype=dt)
    dv_prev = np.zeros(t.shape, dtype=dt)
    dv = np.zeros(t.shape, dtype=dt)
    s = np.asarray(log_scale0, dtype=float) * np.ones(t.shape)
    yield 0, v, dv, s
    for k in range(n):
        a_prev = a[k - 1] if k > 0 else 0.0
        v_next = ((t - b[k]) * v - a_prev * v_prev) / a[k]
        if derivative:
            dv_next = ((t - b[k]) * dv + v - a_prev * dv_prev) / a[k]
            dv_prev, dv = dv, dv_next
        v_prev, v = v, v_next
        mag = np.maximum(np.abs(v), np.abs(v_prev))
        big = (mag > _RESCALE) | ((mag < 1 / _RESCALE) & (mag > 0))
        if np.any(big):
            f = np.where(big, mag, 1.0)
            v, v_prev = v / f, v_prev / f
            if derivative:
                dv, dv_prev = dv / f, dv_prev / f
            s = s + np.log(f.astype(float))
        if not np.all(np.isfinite(v)):
            raise PrecisionLoss("recurrence overflow", achievable_degree=k, operation="cd_kernel")
        yield k + 1, v, dv, s


def _unscale(v, s):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        return np.sign(v) * np.exp(np.log(np.abs(v)) + s)


def weighted_functions(table, weight, t, n):
    """psi_k(t) = p_k(t) w(t)^{1/2} for k = 0..n, shape (n+1,) + t.shape."""
    t = np.asarray(t, dtype=table.a.dtype)
    if n > table.degree_max:
        raise ValueError("table degree too small")
    s0 = table.log_norm0 + 0.5 * np.asarray(weight.log_weight(t.astype(float)), dtype=float)
    out = np.empty((n + 1,) + t.shape)
    for k, v, _, s in _scaled_recurrence(table, t, n, s0):
        out[k] = _unscale(v, s)
    return out


@dataclass(frozen=True)
class KernelEvaluator:
    table: RecurrenceTable
    weight: WeightSpec
    n_terms: int

    def __post_init__(self):
        if self.table.degree_max < self.n_terms:
            raise ValueError("recurrence table must reach degree n_terms")

    def psi(self, t):
        return weighted_functions(self.table, self.weight, t, self.n_terms)

    def matrix(self, points):
        """[K_N(t_i, t_j)] for a list of points (weighted kernel)."""
        p = self.psi(np.asarray(points, dtype=float))[: self.n_terms]
        return p.T @ p

    def cross(self, t, s):
        """K_N(t_i, s_j) for two point lists by direct summation."""
        pt = self.psi(np.asarray(t, dtype=float))[: self.n_terms]
        ps = self.psi(np.asarray(s, dtype=float))[: self.n_terms]
        return pt.T @ ps

    def diag(self, t):
        return np.sum(self.psi(t)[: self.n_terms] ** 2, axis=0)

    def rho1(self, t):
        return self.diag(t) / self.n_terms


def evaluator_for_field(V, n, L, f=None, extended=False):
    w = WeightSpec.from_field(V, n, L, f, extended)
    return KernelEvaluator(stieltjes_recurrence(w, n), w, n)


def gaussian_evaluator(c, n, L=None):
    """Kernel for exp(-c n t^2) from the closed-form Hermite recurrence."""
    if L is None:
        L = 1.5 * math.sqrt(2.0 / c)
    w = WeightSpec(lambda t: -c * n * np.square(t), (-L, L), n)
    return KernelEvaluator(gaussian_table(c, n, n), w, n)


def cd_kernel(ev, t, s, near=1e-6):
    """Weighted Christoffel-Darboux kernel K_N(t,s) sqrt(w(t) w(s)).

    Two-term form for separated arguments, confluent (derivative) form on the
    diagonal, and the direct sum for nearly coincident arguments.
    """
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    n = ev.n_terms
    aN = float(ev.table.a[n - 1])
    lw = lambda u: 0.5 * np.asarray(ev.weight.log_weight(u), dtype=float)
    width = ev.weight.domain[1] - ev.weight.domain[0]
    out = np.empty(t.shape)
    same = t == s
    close = (np.abs(t - s) <= near * width) & ~same
    far = ~(same | close)
    if np.any(far):
        tf, sf = t[far], s[far]
        pt = weighted_functions(ev.table, ev.weight, tf, n)
        ps = weighted_functions(ev.table, ev.weight, sf, n)
        out[far] = aN * (pt[n] * ps[n - 1] - pt[n - 1] * ps[n]) / (tf - sf)
    if np.any(close):
        pt = weighted_functions(ev.table, ev.weight, t[close], n)[:n]
        ps = weighted_functions(ev.table, ev.weight, s[close], n)[:n]
        out[close] = np.sum(pt * ps, axis=0)
    if np.any(same):
        td = t[same].astype(ev.table.a.dtype)
        s0 = ev.table.log_norm0 + lw(t[same])
        last = {}
        for k, v, dv, sc in _scaled_recurrence(ev.table, td, n, s0, derivative=True):
            if k >= n - 1:
                last[k] = (np.asarray(v, dtype=float).copy(), np.asarray(dv, dtype=float).copy(), sc)
        (v1, d1, s1), (v2, d2, s2) = last[n - 1], last[n]
        # both entries of the final pair share the scale s2
        v1 = v1 * np.exp(s1 - s2)
        d1 = d1 * np.exp(s1 - s2)
        out[same] = aN * (d2 * v1 - d1 * v2) * np.exp(2 * s2)
    return out if out.ndim else float(out)


def correlation_from_kernel(ev, points):
    """rho^k = (N-k)!/N! det[K_N(t_i, t_j)]."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    k, n = pts.size, ev.n_terms
    if k > n:
        raise ValueError("more points than particles")
    det = np.linalg.det(ev.matrix(pts))
    val = float(math.exp(gammaln(n - k + 1) - gammaln(n + 1)) * det)
    if val < -1e-10:
        raise NumericallyNegative(f"correlation {val:.3e} is negative", operation="correlation_from_kernel")
    return val


def hadamard_bound(ev, points, sharp=True):
    """Upper bound on rho^k from Hadamard's inequality.

    sharp: (N-k)! N^k / N! prod rho^1; otherwise the weaker (N/(N-k))^k prod rho^1.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    k, n = pts.size, ev.n_terms
    prod = float(np.prod(ev.rho1(pts)))
    if sharp:
        return math.exp(gammaln(n - k + 1) + k * math.log(n) - gammaln(n + 1)) * prod
    return (n / (n - k)) ** k * prod


def christoffel_function(weight, n, t, table=None):
    """lambda_n(W, t) = min over deg < n polynomials P with P(t)=1 of int P^2 W."""
    if table is None:
        table = stieltjes_recurrence(weight, n)
    if n > table.degree_max + 1:
        raise PrecisionLoss("table degree too small for n", achievable_degree=table.degree_max,
                            operation="christoffel_function")
    t = np.asarray(t, dtype=float)
    psi = weighted_functions(table, weight, t, max(n - 1, 0))[:n]
    return np.exp(np.asarray(weight.log_weight(t), dtype=float)) / np.sum(psi ** 2, axis=0)


def rho1_sup(ev, grid=None, n_grid=2001):
    if grid is None:
        grid = np.linspace(*ev.weight.domain, n_grid)
    return float(np.max(ev.rho1(grid)))


# ---------------------------------------------------------------------------
# Gaussian family and the sine kernel
# ---------------------------------------------------------------------------
def shifted_hermite_kernel(p: MixtureGaussianParams, eta, n, t, s, weighted=True):
    """Kernel for the weight exp(-N(alpha+gamma) t^2 + eta sqrt(gamma) t).

    Completing the square shows the weighted kernel is the Gaussian kernel
    translated by delta = omega' eta / (2N).  The unweighted kernel carries the
    constant factor exp(-gamma eta^2 / (4 N (alpha+gamma))).
    """
    c = p.alpha + p.gamma
    delta = p.shift(eta, n)
    ev = gaussian_evaluator(c, n)
    t = np.asarray(t, dtype=float) - delta
    s = np.asarray(s, dtype=float) - delta
    k = cd_kernel(ev, t, s)
    if weighted:
        return k
    # unweighted: divide by sqrt(w*(t) w*(s)) for the shifted weight
    lw = lambda u: -c * n * np.square(u)
    return k * np.exp(-0.5 * (lw(t) + lw(s))) * unweighted_shift_factor(p, eta, n)


def unweighted_shift_factor(p, eta, n):
    """K*(t,s) / K(t-delta, s-delta) for the unweighted kernels."""
    return math.exp(-p.gamma * eta ** 2 / (4 * n * (p.alpha + p.gamma)))


def printed_shift_factor(p, eta, n):
    """exp(omega'' eta^2 / N): the prefactor as usually quoted for this identity."""
    return math.exp(p.omega_dblprime * eta ** 2 / n)


def sine_kernel(t):
    """S(t) = sin(pi t)/(pi t), S(0) = 1."""
    return np.sinc(t)


def sine_det(points):
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    return float(np.linalg.det(np.sinc(pts[:, None] - pts[None, :])))


def rescaled_kernel_error(ev, mu, a, box, grid, margin=0.1):
    """sup over a lattice in [-box, box]^2 of |K(a + t/D, a + s/D)/D - S(t - s)|, D = N mu(a)."""
    dens = float(mu.density_at(a))
    if not dens > 0:
        raise EdgeTooClose("density vanishes at the base point", operation="rescaled_kernel_error")
    scale = ev.n_terms * dens
    lo, hi = mu.support
    inner = margin * (hi - lo) / 2
    if a - box / scale < lo + inner or a + box / scale > hi - inner:
        raise EdgeTooClose("rescaled window leaves the interior of the support",
                           operation="rescaled_kernel_error", a=a, box=box)
    u = np.array([0.0]) if box == 0 else np.linspace(-box, box, grid)
    K = ev.matrix(a + u / scale) / scale
    return float(np.max(np.abs(K - np.sinc(u[:, None] - u[None, :]))))
