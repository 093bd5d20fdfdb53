"""Statistics on samples and kernels: densities, local spacings, k-point
correlations, the Mercer / Karhunen-Loeve linearisation of exp(U) and
concentration diagnostics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats as sps
from scipy.special import erf

from .errors import EmptyWindow, NotPSD, TooFewSamples, VarianceBlowup
from .measure import Measure1D
from .model import interaction_energy_direct
from .sampler import make_rng


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int
    raw: Optional[np.ndarray] = None

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centres(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self):
        return self.counts / (self.total * self.widths)

    @property
    def errors(self):
        """Binomial standard error of each bin density."""
        p = self.counts / self.total
        return np.sqrt(p * (1 - p) / self.total) / self.widths

    def to_measure(self):
        return Measure1D((float(self.edges[0]), float(self.edges[-1])), self.centres, self.widths,
                         self.density, "discrete")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["left", "right", "count", "density", "stderr"])
        for row in zip(self.edges[:-1], self.edges[1:], self.counts, self.density, self.errors):
            w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), repr(float(row[3])),
                        repr(float(row[4]))])
        return buf.getvalue()


def empirical_density(samples, grid=100, min_particles=1000):
    """Normalised histogram of all particle positions.

    ``grid`` is either an edge array or a bin count over the sample range.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < min_particles:
        raise TooFewSamples(f"{x.size} particles, need {min_particles}", operation="empirical_density")
    if np.ndim(grid) == 0:
        lo, hi = float(x.min()), float(x.max())
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, int(grid) + 1)
    else:
        edges = np.asarray(grid, dtype=float)
    counts, _ = np.histogram(x, edges)
    return Histogram(edges, counts, int(x.size))


def ks_distance(samples, cdf):
    """Kolmogorov-Smirnov distance between pooled samples and a reference CDF."""
    return float(sps.kstest(np.asarray(samples, dtype=float).ravel(), cdf).statistic)


def ks_two_sample(a, b):
    return float(sps.ks_2samp(np.ravel(a), np.ravel(b)).statistic)


# ---------------------------------------------------------------------------
# local statistics
# ---------------------------------------------------------------------------
def default_window(mu):
    return 0.1 * mu.radius


def _scale(mu, a, n):
    lo, hi = mu.support
    dens = float(mu.density_at(a))
    if not (lo < a < hi) or not dens > 0:
        raise EmptyWindow("base point is not interior to the support", operation="unfold", a=a)
    return n * dens


def unfold(x, mu, a, window):
    """Positions within ``window`` of a, mapped to N mu(a) (x - a) and sorted."""
    x = np.sort(np.asarray(x, dtype=float))
    scale = _scale(mu, a, x.size)
    sel = x[np.abs(x - a) <= window]
    if sel.size == 0:
        raise EmptyWindow("no particles in the window", operation="unfold", a=a, window=window)
    return scale * (sel - a)


def unfold_batch(samples, mu, a, window):
    """Unfold each configuration; configurations with an empty window are skipped."""
    samples = np.sort(np.atleast_2d(np.asarray(samples, dtype=float)), axis=1)
    scale = _scale(mu, a, samples.shape[1])
    out = []
    for x in samples:
        sel = x[np.abs(x - a) <= window]
        if sel.size:
            out.append(scale * (sel - a))
    if not out:
        raise EmptyWindow("no particles in the window", operation="unfold", a=a, window=window)
    return out


def spacing_distribution(unfolded, bins=None, min_gaps=10_000):
    """Histogram of consecutive gaps pooled over unfolded configurations."""
    gaps = np.concatenate([np.diff(np.sort(u)) for u in unfolded])
    if gaps.size < min_gaps:
        raise TooFewSamples(f"{gaps.size} gaps, need {min_gaps}", operation="spacing_distribution")
    if bins is None:
        bins = np.linspace(0.0, 4.0, 41)
    counts, edges = np.histogram(gaps, bins)
    return Histogram(edges, counts, int(gaps.size), gaps)


def surmise_pdf(s):
    """Wigner surmise for beta = 2: (32/pi^2) s^2 exp(-4 s^2/pi)."""
    s = np.asarray(s, dtype=float)
    return np.where(s >= 0, 32 / np.pi ** 2 * s * s * np.exp(-4 * s * s / np.pi), 0.0)


def surmise_cdf(s):
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    return erf(2 * s / np.sqrt(np.pi)) - 4 * s / np.pi * np.exp(-4 * s * s / np.pi)


def surmise_ks(gaps):
    if isinstance(gaps, Histogram):
        gaps = gaps.raw
    return ks_distance(gaps, surmise_cdf)


def poisson_control(n_points, size, seed, box=1.0):
    """i.i.d. uniform configurations on [-box, box], unit density after unfolding by n/(2 box)."""
    return np.sort(make_rng(seed, 7).uniform(-box, box, (size, n_points)), axis=1)


@dataclass(frozen=True)
class KPointEstimate:
    k: int
    edges: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    n_configs: int

    def centres(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def to_csv(self):
        c = self.centres()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"t{i + 1}" for i in range(self.k)] + ["estimate", "stderr", "count"])
        for idx in np.ndindex(*self.estimate.shape):
            w.writerow([repr(float(c[i])) for i in idx]
                       + [repr(float(self.estimate[idx])), repr(float(self.stderr[idx])), int(self.counts[idx])])
        return buf.getvalue()


def _tuple_counts(t, k, edges):
    """Histogram of ordered k-tuples of distinct entries of t."""
    m = t.size
    if m < k:
        return np.zeros((edges.size - 1,) * k)
    grids = np.meshgrid(*([np.arange(m)] * k), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    distinct = np.ones(idx.shape[0], dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            distinct &= idx[:, i] != idx[:, j]
    pts = t[idx[distinct]]
    h, _ = np.histogramdd(pts, bins=[edges] * k)
    return h


def empirical_kpoint(samples, mu, a, k, box, bins, n_batches=None, min_expected=20):
    """Binned rescaled k-point correlation near a on [-box, box]^k.

    Estimates N!/(N-k)! rho^k(a + t/D) / D^k with D = N mu(a) from ordered
    k-tuple counts.  Error bars are Poisson unless ``n_batches`` is given, in
    which case they come from batch means over contiguous blocks of samples.
    """
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    S, n = samples.shape
    scale = _scale(mu, a, n)
    edges = np.linspace(-box, box, bins + 1)
    cell = (edges[1] - edges[0]) ** k
    per = np.zeros((S,) + (bins,) * k) if n_batches else None
    total = np.zeros((bins,) * k)
    for s, x in enumerate(samples):
        t = scale * (x - a)
        t = t[np.abs(t) <= box]
        h = _tuple_counts(t, k, edges)
        total += h
        if per is not None:
            per[s] = h
    expected = S * cell  # counts per bin at unit correlation
    if expected < min_expected:
        raise TooFewSamples(f"about {expected:.1f} expected counts per bin, need {min_expected}",
                            operation="empirical_kpoint")
    est = total / (S * cell)
    if n_batches:
        blocks = np.array_split(np.arange(S), n_batches)
        means = np.stack([per[b].sum(axis=0) / (b.size * cell) for b in blocks])
        err = means.std(axis=0, ddof=1) / math.sqrt(n_batches)
    else:
        err = np.sqrt(total) / (S * cell)
    return KPointEstimate(k, edges, est, err, total, S)


def sine_det_cell_average(edges, k, order=6):
    """Average of det[S(t_i - t_j)] over each cell of a k-dimensional grid."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    pts = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * gx[None, :]  # (bins, order)
    bins = edges.size - 1
    out = np.zeros((bins,) * k)
    for idx in np.ndindex(*out.shape):
        axes = [pts[i] for i in idx]
        g = np.meshgrid(*axes, indexing="ij")
        wt = np.ones(())
        for _ in range(k):
            wt = np.multiply.outer(wt, gw)
        P = np.stack([gi.ravel() for gi in g], axis=1)
        M = np.sinc(P[:, :, None] - P[:, None, :])
        out[idx] = np.sum(np.linalg.det(M) * wt.ravel()) / 2 ** k
    return out


def sine_det_centres(edges, k):
    from .orthopoly import sine_det

    c = 0.5 * (edges[1:] + edges[:-1])
    out = np.zeros((c.size,) * k)
    for idx in np.ndindex(*out.shape):
        out[idx] = sine_det([c[i] for i in idx])
    return out


def kpoint_agreement(est, reference="average", n_sigma=3.0):
    """Fraction of bins whose estimate lies within n_sigma error bars of det[S]."""
    ref = sine_det_cell_average(est.edges, est.k) if reference == "average" else sine_det_centres(est.edges, est.k)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = np.abs(est.estimate - ref) <= n_sigma * est.stderr
    return float(np.mean(ok)), ref


# ---------------------------------------------------------------------------
# Mercer / Karhunen-Loeve
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MercerDecomposition:
    """Eigenpairs of the integral operator with kernel -h(t-s)/2 on [-L, L]."""

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # (n_nodes, rank) values on the nodes
    nodes: np.ndarray
    weights: np.ndarray
    truncation_rank: int
    kernel: object
    all_eigenvalues: np.ndarray

    def _k(self, t, s):
        return -0.5 * self.kernel.eval(np.subtract.outer(t, s))

    def functions(self, t):
        """Nystrom extension theta_i(t), shape t.shape + (rank,)."""
        t = np.asarray(t, dtype=float)
        lam = self.eigenvalues
        safe = lam > 1e-14 * max(1.0, float(lam[0]) if lam.size else 1.0)
        proj = (self._k(t, self.nodes) * self.weights) @ self.eigenfunctions
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(safe, proj / np.where(safe, lam, 1.0), 0.0)

    def reconstruct(self, t, s):
        ft, fs = self.functions(t), self.functions(s)
        return (ft * self.eigenvalues) @ np.swapaxes(fs, -1, -2) if ft.ndim > 1 else float(
            np.sum(ft * fs * self.eigenvalues))

    def orthonormality_error(self):
        G = (self.eigenfunctions.T * self.weights) @ self.eigenfunctions
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def mercer_decompose(h, L, m=64, n_nodes=None, psd_tol=1e-8):
    """Nystrom discretisation of -h(t-s)/2 on Gauss-Legendre nodes of [-L, L]."""
    if n_nodes is None:
        n_nodes = max(2 * m, 128)
    gx, gw = np.polynomial.legendre.leggauss(n_nodes)
    x, w = L * gx, L * gw
    sw = np.sqrt(w)
    A = -0.5 * h.eval(np.subtract.outer(x, x)) * sw[:, None] * sw[None, :]
    A = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(A)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if vals[-1] < -psd_tol:
        raise NotPSD("-h/2 is not positive semi-definite on the domain", operation="mercer_decompose",
                     min_eigenvalue=float(vals[-1]))
    m = min(m, n_nodes)
    lam = np.maximum(vals[:m], 0.0)
    theta = vecs[:, :m] / sw[:, None]
    return MercerDecomposition(lam, theta, x, w, m, h, vals)


@dataclass(frozen=True)
class GPCheck:
    mc_estimate: float
    stderr: float
    exact: float
    truncated_exact: float
    n_mc: int

    @property
    def z_score(self):
        return (self.mc_estimate - self.exact) / self.stderr if self.stderr > 0 else 0.0

    def passes(self, n_sigma=3.0):
        return abs(self.mc_estimate - self.exact) <= n_sigma * self.stderr + 1e-15 * abs(self.exact)


def gp_linearization_check(h, mu, x, n_mc, seed, m=64, L=None, covariance_scale=2.0, decomposition=None,
                           max_rel_stderr=0.2):
    """Monte Carlo of E exp(sum_j G(x_j) - N int G dmu) against exp(U(x)).

    G = sum_i sqrt(covariance_scale * lambda_i) xi_i theta_i with (lambda, theta)
    the Mercer pairs of -h/2.  covariance_scale = 2 gives Cov G = -h, whose
    expectation is exp(U); covariance_scale = 1 gives exp(U/2).
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if h.is_zero:
        return GPCheck(1.0, 0.0, 1.0, 1.0, n_mc)
    if decomposition is None:
        if L is None:
            L = 1.05 * max(float(np.max(np.abs(x))), mu.radius)
        decomposition = mercer_decompose(h, L, m)
    dec = decomposition
    c = dec.functions(x).sum(axis=0) - n * (mu.masses @ dec.functions(mu.nodes))
    amp = np.sqrt(covariance_scale * dec.eigenvalues) * c
    rng = make_rng(seed, 8)
    xi = rng.standard_normal((n_mc, amp.size))
    vals = np.exp(xi @ amp)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_mc))
    if se > max_rel_stderr * est:
        raise VarianceBlowup(f"relative standard error {se / est:.2f}", operation="gp_linearization_check")
    exact = math.exp(interaction_energy_direct(h, mu, x))
    return GPCheck(est, se, exact, math.exp(0.5 * float(amp @ amp)), n_mc)


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    f: object
    lipschitz: float
    sup_norm: float
    third_derivative_sup: float


def batch_means_stderr(values, n_batches=20):
    v = np.asarray(values, dtype=float)
    if v.size < 2 * n_batches:
        return float(v.std(ddof=1) / math.sqrt(v.size))
    means = np.array([b.mean() for b in np.array_split(v, n_batches)])
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def concentration_check(samples_by_n, tf, mu, convexity, eps_grid=None, n_batches=20, min_samples=100):
    """Empirical tails and biases of linear statistics sum_j f(x_j).

    samples_by_n maps N to an (S, N) sample array for the field with inf V'' = convexity.
    """
    report = {"convexity": convexity, "lipschitz": tf.lipschitz, "per_n": {}}
    mean_f = mu.integrate(tf.f)
    norm = tf.sup_norm + tf.third_derivative_sup
    c_hat = 0.0
    all_ok = True
    for n, samples in sorted(samples_by_n.items()):
        samples = np.atleast_2d(samples)
        if samples.shape[0] < min_samples:
            raise TooFewSamples(f"{samples.shape[0]} samples at N={n}", operation="concentration_check")
        stat = tf.f(samples).sum(axis=1)
        mean = float(stat.mean())
        se = batch_means_stderr(stat, n_batches)
        dev = np.abs(stat - mean)
        eps = np.asarray(eps_grid if eps_grid is not None else np.linspace(0.1, 3.0, 15) * stat.std(), float)
        freq = np.array([np.mean(dev > e) for e in eps])
        bound = 2 * np.exp(-convexity * eps ** 2 / (2 * tf.lipschitz ** 2))
        slack = 3 * np.sqrt(np.maximum(freq * (1 - freq), 1.0 / stat.size) / stat.size)
        ok = bool(np.all(freq <= bound + slack))
        all_ok &= ok
        bias = abs(mean - n * mean_f)
        c_hat = max(c_hat, bias / norm if norm > 0 else 0.0)
        report["per_n"][int(n)] = {
            "mean": mean, "stderr": se, "bias": bias, "eps": eps.tolist(),
            "tail_frequency": freq.tolist(), "bound": bound.tolist(), "tail_ok": ok,
        }
    report["empirical_constant"] = c_hat
    report["tail_ok"] = all_ok
    return report
