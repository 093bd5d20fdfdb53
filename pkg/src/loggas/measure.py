"""Compactly supported probability densities with attached quadrature rules.

Two flavours share one type:

* ``kind="chebyshev"``: nodes are Gauss-Chebyshev (first kind) points of the
  support [a, b] and the density has the form g(t) / sqrt((t-a)(b-t)) with g
  smooth.  Arcsine, semicircle and all equilibrium measures are of this form,
  which lets us integrate against log|z - t| exactly on the Chebyshev basis.
* ``kind="discrete"``: nodes are bin centres (or atoms) and ``weights`` are bin
  widths; used for histograms and point-mass approximations.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureFailure


def chebyshev_angles(m):
    """Angles theta_k of the m first-kind Chebyshev points, ordered so cos(theta) ascends."""
    k = np.arange(m)
    return (2 * (m - 1 - k) + 1) * np.pi / (2 * m)


@dataclass(frozen=True, eq=False)
class Measure1D:
    support: tuple
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    kind: str = "chebyshev"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # ---- construction -------------------------------------------------
    @classmethod
    def from_smooth_part(cls, g, a, b, m=128):
        """Chebyshev measure with density g(t)/sqrt((t-a)(b-t)) on [a, b].

        ``g`` is evaluated at m Gauss-Chebyshev nodes; the total mass is whatever
        g implies (no renormalisation here).
        """
        if not b > a:
            raise ValueError("empty support")
        theta = chebyshev_angles(m)
        c, hw = 0.5 * (a + b), 0.5 * (b - a)
        y = np.cos(theta)
        t = c + hw * y
        root = hw * np.sin(theta)  # sqrt((t-a)(b-t)) without cancellation
        gv = np.asarray(g(t), dtype=float) * np.ones_like(t)
        weights = np.pi / m * root
        with np.errstate(divide="ignore"):
            density = gv / root
        return cls((float(a), float(b)), t, weights, density, "chebyshev")

    @classmethod
    def point_mass(cls, x, width=1e-9):
        return cls((x - width / 2, x + width / 2), np.array([float(x)]),
                   np.array([width]), np.array([1.0 / width]), "discrete")

    # ---- basic quantities ---------------------------------------------
    @property
    def masses(self):
        return self.weights * self.density

    @property
    def total_mass(self):
        return float(np.sum(self.masses))

    @property
    def radius(self):
        return max(abs(self.support[0]), abs(self.support[1]))

    def integrate(self, f):
        if self.nodes.size == 0:
            raise QuadratureFailure("measure carries no quadrature nodes", operation="integrate")
        return float(np.sum(self.masses * np.asarray(f(self.nodes))))

    def moment(self, k):
        return self.integrate(lambda t: t ** k)

    def normalized(self):
        s = self.total_mass
        return Measure1D(self.support, self.nodes, self.weights, self.density / s, self.kind)

    def is_symmetric(self, tol=1e-8):
        a, b = self.support
        if abs(a + b) > tol * max(1.0, b - a):
            return False
        return bool(np.allclose(self.density, self.density[::-1], atol=tol * np.max(self.density)))

    # ---- Chebyshev representation -------------------------------------
    def _map(self, t):
        a, b = self.support
        return (np.asarray(t, dtype=float) - 0.5 * (a + b)) / (0.5 * (b - a))

    @property
    def smooth_coefficients(self):
        """Chebyshev coefficients of g = density * sqrt((t-a)(b-t)) in the mapped variable."""
        if self.kind != "chebyshev":
            raise TypeError("smooth representation only exists for Chebyshev measures")
        if "coef" not in self._cache:
            m = self.nodes.size
            theta = chebyshev_angles(m)
            g = self.masses * m / np.pi
            n = np.arange(m)
            coef = 2.0 / m * np.cos(np.outer(n, theta)) @ g
            coef[0] /= 2
            self._cache["coef"] = coef
        return self._cache["coef"]

    def smooth_part(self, t):
        return np.polynomial.chebyshev.chebval(np.clip(self._map(t), -1, 1), self.smooth_coefficients)

    def density_at(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.support
        if self.kind == "discrete":
            edges = self._edges()
            idx = np.searchsorted(edges, t, side="right") - 1
            ok = (idx >= 0) & (idx < self.nodes.size) & (t <= edges[-1])
            out = np.where(ok, self.density[np.clip(idx, 0, self.nodes.size - 1)], 0.0)
            return out
        inside = (t > a) & (t < b)
        with np.errstate(invalid="ignore", divide="ignore"):
            root = np.sqrt(np.where(inside, (t - a) * (b - t), 1.0))
            out = np.where(inside, self.smooth_part(t) / root, 0.0)
        return out

    def _edges(self):
        if "edges" not in self._cache:
            half = self.weights / 2
            self._cache["edges"] = np.concatenate([self.nodes - half, [self.nodes[-1] + half[-1]]])
        return self._cache["edges"]

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "discrete":
            edges = self._edges()
            cum = np.concatenate([[0.0], np.cumsum(self.masses)])
            return np.interp(t, edges, cum)
        y = np.clip(self._map(t), -1.0, 1.0)
        theta = np.arccos(y)
        coef = self.smooth_coefficients
        n = np.arange(1, coef.size)
        # int_a^t rho = int_theta^pi g(cos u) du
        val = coef[0] * (np.pi - theta)
        val = val - np.sum(coef[1:, None] * np.sin(np.outer(n, np.atleast_1d(theta))) / n[:, None], axis=0).reshape(theta.shape)
        return val

    def quantiles(self, probs):
        """Inverse CDF by bisection (vectorised)."""
        probs = np.asarray(probs, dtype=float) * self.total_mass
        lo = np.full(probs.shape, self.support[0])
        hi = np.full(probs.shape, self.support[1])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < probs
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def log_potential(self, z):
        """U(z) = int log|z - t|^{-1} dmu(t).

        For Chebyshev measures the log kernel is integrated exactly against the
        Chebyshev expansion of g, so z may lie inside the support.
        """
        z = np.asarray(z, dtype=float)
        if self.kind != "chebyshev":
            d = np.abs(z[..., None] - self.nodes)
            return -np.sum(self.masses * np.log(d), axis=-1)
        a, b = self.support
        hw = 0.5 * (b - a)
        coef = self.smooth_coefficients
        x = self._map(z)
        mass = np.pi * coef[0]
        ax = np.abs(x)
        inside = ax <= 1.0
        n = np.arange(1, coef.size)
        xin = np.clip(x, -1, 1)
        # int log|x-y| T_n(y) dy / sqrt(1-y^2)
        term_in = np.polynomial.chebyshev.chebval(xin, np.concatenate([[0.0], coef[1:] / n]))
        with np.errstate(invalid="ignore"):
            r = np.sqrt(np.maximum(x * x - 1.0, 0.0))
            zeta = np.where(inside, 0.0, x - np.sign(x) * r)
            log_out = np.log(np.where(inside, 1.0, ax + r))
        powers = zeta[..., None] ** n
        term_out = np.sum(coef[1:] / n * powers, axis=-1)
        integral = np.where(
            inside,
            -np.pi * coef[0] * np.log(2.0) - np.pi * term_in,
            np.pi * coef[0] * (log_out - np.log(2.0)) - np.pi * term_out,
        )
        return -(mass * np.log(hw) + integral)

    def log_energy(self):
        """int int log|s - t|^{-1} dmu dmu."""
        if self.kind != "chebyshev":
            raise TypeError("log energy needs the Chebyshev representation")
        return float(np.sum(self.masses * self.log_potential(self.nodes)))

    # ---- export --------------------------------------------------------
    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "weight", "density"])
        for row in zip(self.nodes, self.weights, self.density):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def summary(self):
        return {
            "kind": self.kind,
            "support": [float(self.support[0]), float(self.support[1])],
            "n_nodes": int(self.nodes.size),
            "mass": self.total_mass,
            "mean": self.moment(1),
            "second_moment": self.moment(2),
        }
