"""Independent reference computations used only by the test suite."""
import numpy as np


def _G(u):
    # G'' = log|u|, G(0) = 0
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * u * u * np.log(np.abs(u)) - 0.75 * u * u
    return np.where(u == 0, 0.0, out)


def cell_log_kernel(n, width):
    """K_ij = mean over cell_i x cell_j of log|s - t|^{-1} for equal cells."""
    d = np.arange(-(n - 1), n) * width
    vals = -(_G(d + width) - 2 * _G(d) + _G(d - width)) / width ** 2
    idx = np.arange(n)
    return vals[(idx[:, None] - idx[None, :]) + n - 1]


def project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _minimize(V, L, n, iters):
    edges = np.linspace(-L, L, n + 1)
    width = edges[1] - edges[0]
    centres = 0.5 * (edges[1:] + edges[:-1])
    # cell averages of V by 5-point Gauss-Legendre
    gx, gw = np.polynomial.legendre.leggauss(5)
    vcell = (V(centres[:, None] + 0.5 * width * gx[None, :]) @ gw) / 2
    K = cell_log_kernel(n, width)
    lip = 2 * np.max(np.linalg.eigvalsh(K))
    step = 1.0 / lip
    p = np.full(n, 1.0 / n)
    y, tk = p.copy(), 1.0
    for _ in range(iters):
        p_new = project_simplex(y - step * (vcell + 2 * K @ y))
        tk_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        y = p_new + (tk - 1) / tk_new * (p_new - p)
        p, tk = p_new, tk_new
    return edges, p / width


def _edge_radius(edges, dens, frac=0.25):
    """Right support edge: extrapolate density^2 (linear near a square-root edge) to zero."""
    centres = 0.5 * (edges[1:] + edges[:-1])
    right = np.nonzero(dens > 1e-10)[0][-1]
    width = edges[1] - edges[0]
    peak = np.max(dens)
    # use cells whose density is between frac*peak and 2*frac*peak, away from the edge cell
    sel = np.nonzero((dens > frac * peak) & (dens < 2.5 * frac * peak) & (centres > 0))[0]
    sel = sel[sel < right - 1]
    if sel.size < 3:
        sel = np.arange(max(right - 8, 0), right - 1)
    coef = np.polyfit(centres[sel], dens[sel] ** 2, 2 if sel.size > 4 else 1)
    roots = np.roots(coef)
    roots = roots[np.isreal(roots)].real
    roots = roots[(roots > centres[sel].max() - width) & (roots < edges[-1])]
    return float(roots.min()) if roots.size else float(edges[right + 1])


def grid_equilibrium(V, L0=4.0, n=400, iters=5000):
    """Minimise int V dmu + int int log|s-t|^{-1} over piecewise-constant densities.

    Two passes: the second refines the box to 1.15 x the first-pass radius.
    Returns (edges, density, radius).
    """
    edges, dens = _minimize(V, L0, n, iters)
    r = _edge_radius(edges, dens)
    edges, dens = _minimize(V, 1.15 * r, n, iters)
    return edges, dens, _edge_radius(edges, dens)


def interior_cell_error(edges, dens, mu, edge_cells=10):
    """Sup |cell average of mu - oracle cell density| over cells > edge_cells widths inside supp mu."""
    avg = np.diff(mu.cdf(edges)) / np.diff(edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    width = edges[1] - edges[0]
    keep = (mu.support[1] - np.abs(centres)) / width > edge_cells + 0.5
    return float(np.max(np.abs(avg - dens)[keep]))


def monomial_christoffel(logw, domain, n, t, nodes=4000):
    """1 / (v^T G^{-1} v) with G the monomial Gram matrix of the weight (direct minimisation)."""
    x, w = np.polynomial.legendre.leggauss(nodes // 20)
    a, b = domain
    edges = np.linspace(a, b, 21)
    xs = np.concatenate([0.5 * (lo + hi) + 0.5 * (hi - lo) * x for lo, hi in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([0.5 * (hi - lo) * w for lo, hi in zip(edges[:-1], edges[1:])]) * np.exp(logw(xs))
    V = np.vander(xs, n, increasing=True)
    G = (V.T * ws) @ V
    v = np.vander(np.atleast_1d(t), n, increasing=True).T
    return 1.0 / np.sum(v * np.linalg.solve(G, v), axis=0)
