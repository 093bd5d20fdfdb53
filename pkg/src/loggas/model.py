"""Ensemble definitions: external fields, pair interactions and log-densities.

The interacting ensemble on R^N has unnormalised log-density

    2 sum_{i<j} log|x_i - x_j| - N sum_j Q(x_j) - sum_{i<j} h(x_i - x_j)

and is compared against the invariant ensemble with field V = Q + h_mu, where
h_mu(t) = int h(t - s) dmu(s).  The remainder U(x) (the centred quadratic
interaction energy) is available both as a double sum and through the Fourier
transform of h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DuplicatePositions, QuadratureFailure, QuadratureNotConverged

SQRT_2PI = math.sqrt(2 * math.pi)
DUPLICATE_RTOL = 1e-12

Fn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# external fields
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ExternalField:
    eval: Fn
    deriv1: Fn
    deriv2: Fn
    convexity_lower_bound: float
    symmetric: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, t):
        return self.eval(np.asarray(t, dtype=float))

    def to_config(self):
        return {"kind": self.name, **self.params}

    def check_invariants(self, grid):
        grid = np.asarray(grid, dtype=float)
        ok = bool(np.all(self.deriv2(grid) >= self.convexity_lower_bound - 1e-9))
        if self.symmetric:
            ok &= bool(np.allclose(self.eval(grid), self.eval(-grid), rtol=1e-12, atol=1e-12))
        return ok

    def __add__(self, other):
        return ExternalField(
            lambda t: self.eval(t) + other.eval(t),
            lambda t: self.deriv1(t) + other.deriv1(t),
            lambda t: self.deriv2(t) + other.deriv2(t),
            self.convexity_lower_bound + other.convexity_lower_bound,
            self.symmetric and other.symmetric,
        )


def quadratic_field(alpha):
    """Q(t) = alpha t^2."""
    alpha = float(alpha)
    return ExternalField(
        lambda t: alpha * np.square(t),
        lambda t: 2 * alpha * np.asarray(t, dtype=float),
        lambda t: np.full(np.shape(t), 2 * alpha),
        2 * alpha,
        True,
        "quadratic",
        {"alpha": alpha},
    )


def quartic_field(a=0.0):
    """Q(t) = t^4/4 + a t^2.  Convex for a >= 0."""
    a = float(a)
    return ExternalField(
        lambda t: np.power(t, 4) / 4 + a * np.square(t),
        lambda t: np.power(t, 3) + 2 * a * np.asarray(t, dtype=float),
        lambda t: 3 * np.square(t) + 2 * a,
        2 * a,
        True,
        "quartic",
        {"a": a},
    )


def zero_field():
    return ExternalField(
        lambda t: np.zeros(np.shape(t)),
        lambda t: np.zeros(np.shape(t)),
        lambda t: np.zeros(np.shape(t)),
        0.0,
        True,
        "zero",
        {},
    )


# ---------------------------------------------------------------------------
# pair interactions
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class InteractionKernel:
    """Even pair interaction h with optional closed-form Fourier transform.

    ``fourier`` follows hhat(t) = (2 pi)^{-1/2} int e^{-its} h(s) ds.  When it
    is None the kernel has no L^1 transform (e.g. the quadratic kernel).
    """

    eval: Fn
    deriv1: Fn
    deriv2: Fn
    fourier: Optional[Fn] = None
    inf_deriv2: float = -np.inf
    fourier_cutoff: float = 12.0
    name: str = "custom"
    params: dict = field(default_factory=dict)
    is_zero: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, t):
        return self.eval(np.asarray(t, dtype=float))

    def to_config(self):
        return {"kind": self.name, **self.params}

    def _split_tables(self):
        # hhat sampled on [0, cutoff]; h^{+-} recovered by cosine quadrature
        if "split" not in self._cache:
            if self.fourier is None:
                raise QuadratureFailure("kernel has no Fourier transform; cannot split into definite parts",
                                        operation="pos_part")
            x, w = np.polynomial.legendre.leggauss(400)
            s = 0.5 * self.fourier_cutoff * (x + 1)
            w = 0.5 * self.fourier_cutoff * w
            hh = self.fourier(s)
            self._cache["split"] = (s, w, np.maximum(hh, 0.0), np.maximum(-hh, 0.0))
        return self._cache["split"]

    def _inverse(self, part, t):
        s, w, hp, hm = self._split_tables()
        vals = hp if part == "+" else hm
        t = np.asarray(t, dtype=float)
        return (2.0 / SQRT_2PI) * (np.cos(np.multiply.outer(t, s)) @ (w * vals))

    def pos_part(self, t):
        """h^+ : inverse transform of max(hhat, 0) (positive semi-definite)."""
        return self._inverse("+", t)

    def neg_part(self, t):
        """h^- : inverse transform of max(-hhat, 0), so that h = h^+ - h^-."""
        return self._inverse("-", t)

    def is_positive_definite(self, tol=0.0):
        if self.fourier is None:
            return False
        _, _, _, hm = self._split_tables()
        return bool(np.max(hm) <= tol)


def zero_kernel():
    z = lambda t: np.zeros(np.shape(t))
    return InteractionKernel(z, z, z, z, 0.0, 1.0, "zero", {}, True)


def quadratic_kernel(gamma):
    """h(t) = gamma t^2 (no Fourier transform)."""
    gamma = float(gamma)
    return InteractionKernel(
        lambda t: gamma * np.square(t),
        lambda t: 2 * gamma * np.asarray(t, dtype=float),
        lambda t: np.full(np.shape(t), 2 * gamma),
        None,
        2 * gamma,
        0.0,
        "quadratic",
        {"gamma": gamma},
        gamma == 0.0,
    )


def gaussian_kernel(c, width=1.0):
    """h(t) = c exp(-t^2 / (2 width^2)); hhat(t) = c width exp(-width^2 t^2 / 2)."""
    c, width = float(c), float(width)
    w2 = width * width

    def h(t):
        return c * np.exp(-np.square(t) / (2 * w2))

    def d1(t):
        t = np.asarray(t, dtype=float)
        return -t / w2 * h(t)

    def d2(t):
        t = np.asarray(t, dtype=float)
        return (np.square(t) / w2 - 1) / w2 * h(t)

    # min of (u^2-1)e^{-u^2/2} is -1 at u=0, max is 2e^{-3/2} at u^2=3
    inf_d2 = -c / w2 if c >= 0 else c * 2 * math.exp(-1.5) / w2
    cutoff = math.sqrt(2 * 45 * math.log(10)) / width
    return InteractionKernel(
        h, d1, d2,
        lambda t: c * width * np.exp(-w2 * np.square(t) / 2),
        inf_d2, cutoff, "gaussian", {"c": c, "width": width}, c == 0.0,
    )


def sum_kernel(k1, k2):
    """Pointwise sum of two kernels (Fourier transform only if both have one)."""
    four = None
    if k1.fourier is not None and k2.fourier is not None:
        four = lambda t: k1.fourier(t) + k2.fourier(t)
    return InteractionKernel(
        lambda t: k1.eval(t) + k2.eval(t),
        lambda t: k1.deriv1(t) + k2.deriv1(t),
        lambda t: k1.deriv2(t) + k2.deriv2(t),
        four,
        k1.inf_deriv2 + k2.inf_deriv2,
        max(k1.fourier_cutoff, k2.fourier_cutoff),
        "sum",
        {"terms": [k1.to_config(), k2.to_config()]},
        k1.is_zero and k2.is_zero,
    )


# ---------------------------------------------------------------------------
# parameter bundles
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EnsembleSpec:
    n_particles: int
    field: ExternalField
    interaction: InteractionKernel
    truncation_half_width: float = np.inf

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if not self.truncation_half_width > 0:
            raise ValueError("truncation half-width must be positive")

    def with_truncation(self, support_radius, factor=1.5):
        return EnsembleSpec(self.n_particles, self.field, self.interaction, factor * support_radius)

    def check_truncation(self, support_radius, margin=1.1):
        return self.truncation_half_width >= margin * support_radius


@dataclass(frozen=True)
class MixtureGaussianParams:
    """Parameters of the model Q = alpha t^2, h = gamma t^2."""

    alpha: float
    gamma: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma >= 0):
            raise ValueError("need alpha > 0 and gamma >= 0")

    @property
    def omega(self):
        """(alpha + gamma)^{-1/2}, the radius quoted for this model in the literature we follow."""
        return 1.0 / math.sqrt(self.alpha + self.gamma)

    @property
    def support_radius(self):
        """Radius of the limiting semicircle for weight exp(-N (alpha+gamma) t^2)."""
        return math.sqrt(2.0 / (self.alpha + self.gamma))

    @property
    def omega_prime(self):
        return math.sqrt(self.gamma) / (self.alpha + self.gamma)

    @property
    def omega_dblprime(self):
        return self.omega_prime ** 2 / 4

    def shift(self, eta, n):
        """Translation of the eta-conditioned ensemble: omega' eta / (2n)."""
        return self.omega_prime * eta / (2 * n)

    def spec(self, n, truncation=np.inf):
        return EnsembleSpec(n, quadratic_field(self.alpha), quadratic_kernel(self.gamma), truncation)


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------
def as_config(x):
    """Validate a particle configuration and return it sorted ascending."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    if not np.all(np.isfinite(x)):
        raise ValueError("positions must be finite")
    return x


def check_distinct(x, operation=None):
    xs = np.sort(np.asarray(x, dtype=float), axis=-1)
    gaps = np.diff(xs, axis=-1)
    tol = DUPLICATE_RTOL * (1 + np.abs(xs[..., 1:]))
    if np.any(gaps <= tol):
        raise DuplicatePositions("two positions coincide within tolerance", operation=operation)


def _pair_sums(x, fn):
    """sum_{i<j} fn(x_i - x_j) for a batch (..., N)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    iu, ju = np.triu_indices(n, 1)
    d = x[..., iu] - x[..., ju]
    return np.sum(fn(d), axis=-1)


def log_vandermonde(x):
    """2 sum_{i<j} log|x_i - x_j| (batched over leading axes)."""
    return _pair_sums(x, lambda d: 2 * np.log(np.abs(d)))


def log_density_h(spec, x):
    """Unnormalised log-density of the interacting ensemble at x (batched)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n_particles:
        raise ValueError("configuration size does not match n_particles")
    if spec.n_particles < 2:
        raise ValueError("need at least two particles")
    check_distinct(x, "log_density_h")
    n = spec.n_particles
    val = log_vandermonde(x) - n * np.sum(spec.field.eval(x), axis=-1)
    if not spec.interaction.is_zero:
        val = val - _pair_sums(x, spec.interaction.eval)
    return val


def log_density_invariant(field, n, x):
    """Unnormalised log-density 2 sum log|x_i-x_j| - n sum V(x_j)."""
    x = np.asarray(x, dtype=float)
    check_distinct(x, "log_density_invariant")
    return log_vandermonde(x) - n * np.sum(field.eval(x), axis=-1)


def energy_statistic(field, x):
    """Sum over ordered pairs i != j of log|x_i-x_j|^{-1} + Q(x_i)/2 + Q(x_j)/2."""
    x = as_config(x)
    check_distinct(x, "energy_statistic")
    n = x.size
    d = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(d, 1.0)
    q = field.eval(x)
    return float(-np.sum(np.log(d)) + (n - 1) * np.sum(q))


def pair_energy(field, t, s):
    """k_Q(t, s) = log|t-s|^{-1} + Q(t)/2 + Q(s)/2."""
    return -np.log(np.abs(np.subtract(t, s))) + 0.5 * field.eval(t) + 0.5 * field.eval(s)


def psi_lower(field, t):
    """psi_Q(t) = Q(t) - log(t^2 + 1); k_Q(t,s) >= (psi_Q(t) + psi_Q(s))/2."""
    t = np.asarray(t, dtype=float)
    return field.eval(t) - np.log1p(t * t)


# ---------------------------------------------------------------------------
# mean-field quantities
# ---------------------------------------------------------------------------
def convolve_measure(fn, mu, t):
    """int fn(t - s) dmu(s) by the measure's quadrature."""
    if mu.nodes.size == 0:
        raise QuadratureFailure("measure carries no quadrature nodes", operation="shifted_field")
    t = np.asarray(t, dtype=float)
    return fn(np.subtract.outer(t, mu.nodes)) @ mu.masses


def shifted_field(field, h, mu):
    """V(t) = Q(t) + h_mu(t), derivatives taken under the integral."""
    if mu.nodes.size == 0:
        raise QuadratureFailure("measure carries no quadrature nodes", operation="shifted_field")
    if h.is_zero:
        return field
    lb = field.convexity_lower_bound + h.inf_deriv2
    return ExternalField(
        lambda t: field.eval(t) + convolve_measure(h.eval, mu, t),
        lambda t: field.deriv1(t) + convolve_measure(h.deriv1, mu, t),
        lambda t: field.deriv2(t) + convolve_measure(h.deriv2, mu, t),
        lb,
        field.symmetric and mu.is_symmetric(),
        "shifted",
        {"base": field.to_config(), "kernel": h.to_config()},
    )


def interaction_energy_direct(h, mu, x):
    """U(x) = -1/2 sum_{i,j} [h(x_i-x_j) - h_mu(x_i) - h_mu(x_j) + h_mumu]."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("positions must be finite")
    if h.is_zero:
        return 0.0
    n = x.size
    pair = np.sum(h.eval(np.subtract.outer(x, x)))
    hmu = convolve_measure(h.eval, mu, x)
    hmumu = float(mu.masses @ convolve_measure(h.eval, mu, mu.nodes))
    return float(-0.5 * (pair - 2 * n * np.sum(hmu) + n * n * hmumu))


class QuadratureResult(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class QuadratureSpec:
    cutoff: Optional[float] = None  # defaults to the kernel's fourier_cutoff
    n_nodes: int = 64
    rtol: float = 1e-12
    max_doublings: int = 8


def interaction_energy_fourier(h, mu, x, quad=QuadratureSpec()):
    """U(x) = -(2 sqrt(2 pi))^{-1} int |u_N(t) - N phi_mu(t)|^2 hhat(t) dt.

    u_N(t) = sum_j e^{i t x_j}, phi_mu the characteristic function of mu.  The
    integrand is even, so we integrate over [0, cutoff] with Gauss-Legendre and
    double the node count until two passes agree.
    """
    x = np.asarray(x, dtype=float).ravel()
    if h.is_zero:
        return QuadratureResult(0.0, 0.0)
    if h.fourier is None:
        raise QuadratureFailure("kernel has no Fourier transform", operation="interaction_energy_fourier")
    n = x.size
    cutoff = quad.cutoff if quad.cutoff is not None else h.fourier_cutoff

    def integral(m):
        gx, gw = np.polynomial.legendre.leggauss(m)
        t = 0.5 * cutoff * (gx + 1)
        w = 0.5 * cutoff * gw
        u = np.exp(1j * np.outer(t, x)).sum(axis=1)
        phi = np.exp(1j * np.outer(t, mu.nodes)) @ mu.masses
        centred = np.abs(u - n * phi) ** 2
        return -(1.0 / SQRT_2PI) * float(np.sum(w * centred * h.fourier(t)))

    m = quad.n_nodes
    prev = integral(m)
    for _ in range(quad.max_doublings):
        m *= 2
        cur = integral(m)
        err = abs(cur - prev)
        if err <= quad.rtol * max(1.0, abs(cur)):
            tail = abs(h.fourier(np.array([cutoff]))[0]) * (n * n + n * n) * 1.0
            return QuadratureResult(cur, err + tail)
        prev = cur
    raise QuadratureNotConverged("Fourier representation did not converge",
                                 operation="interaction_energy_fourier", last_change=err)


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------
FIELD_BUILDERS = {
    "quadratic": (quadratic_field, {"alpha": "float > 0"}),
    "quartic": (quartic_field, {"a": "float >= 0 (Q = t^4/4 + a t^2)"}),
    "zero": (zero_field, {}),
}

KERNEL_BUILDERS = {
    "zero": (zero_kernel, {}),
    "quadratic": (quadratic_kernel, {"gamma": "float >= 0"}),
    "gaussian": (gaussian_kernel, {"c": "float", "width": "float > 0 (default 1)"}),
}


def field_from_config(cfg):
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind not in FIELD_BUILDERS:
        raise KeyError(f"unknown field kind {kind!r}")
    return FIELD_BUILDERS[kind][0](**cfg)


def kernel_from_config(cfg):
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "sum":
        a, b = cfg["terms"]
        return sum_kernel(kernel_from_config(a), kernel_from_config(b))
    if kind not in KERNEL_BUILDERS:
        raise KeyError(f"unknown kernel kind {kind!r}")
    return KERNEL_BUILDERS[kind][0](**cfg)
