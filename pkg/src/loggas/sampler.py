"""Samplers: Metropolis for the interacting ensemble, exact samplers for the Gaussian model.

All randomness comes from counter-based Philox streams keyed by (seed, stream id),
so each chain or batch is reproducible independently of how work is split.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InitFailure, StuckChain
from .model import MixtureGaussianParams, log_density_h

log = logging.getLogger(__name__)


def make_rng(seed, *stream):
    """Generator for substream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SamplerConfig:
    n_sweeps: int
    burn_in: int
    thinning: int = 1
    step_size: float = 0.05
    seed: int = 0
    adapt: bool = True
    n_chains: int = 1
    target_acceptance: float = 0.4
    adapt_every: int = 10

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_sweeps:
            raise ValueError("need 0 <= burn_in < n_sweeps")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.thinning < 1 or self.n_chains < 1:
            raise ValueError("thinning and n_chains must be positive")

    @property
    def records_per_chain(self):
        return len(range(self.burn_in, self.n_sweeps, self.thinning))


@dataclass
class ChainDiagnostics:
    acceptance_rate: float
    autocorrelation_time_estimate: float
    energy_trace: list
    step_size: float
    per_chain_acceptance: list = field(default_factory=list)

    @property
    def flagged(self):
        return not 0.1 <= self.acceptance_rate <= 0.9

    def to_dict(self):
        return {
            "acceptance_rate": self.acceptance_rate,
            "autocorrelation_time_estimate": self.autocorrelation_time_estimate,
            "step_size": self.step_size,
            "flagged": self.flagged,
            "energy_trace": [float(e) for e in self.energy_trace],
        }


# ---------------------------------------------------------------------------
# Metropolis
# ---------------------------------------------------------------------------
def site_log_ratio(spec, x, i, new):
    """log P(x with x_i -> new) - log P(x), for a batch x of shape (C, N)."""
    old = x[:, i]
    others = np.delete(x, i, axis=1)
    d_new = new[:, None] - others
    d_old = old[:, None] - others
    with np.errstate(divide="ignore"):
        delta = 2 * np.sum(np.log(np.abs(d_new)) - np.log(np.abs(d_old)), axis=1)
    delta -= spec.n_particles * (spec.field.eval(new) - spec.field.eval(old))
    if not spec.interaction.is_zero:
        delta -= np.sum(spec.interaction.eval(d_new) - spec.interaction.eval(d_old), axis=1)
    return delta


def default_initial_config(spec):
    """Quantiles (k + 1/2)/N of the limiting measure of the ensemble."""
    from .equilibrium import fixed_point_interaction, solve_equilibrium

    if spec.interaction.is_zero:
        mu = solve_equilibrium(spec.field).measure
    else:
        mu = fixed_point_interaction(spec.field, spec.interaction, tol=1e-9).measure
    n = spec.n_particles
    return mu.quantiles((np.arange(n) + 0.5) / n)


def integrated_autocorrelation_time(trace, c=5.0):
    """Sokal's windowed estimate from a (chains, T) array; averages the chain ACFs."""
    x = np.atleast_2d(np.asarray(trace, dtype=float))
    T = x.shape[1]
    if T < 4:
        return float("nan")
    x = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(x, n=2 * T, axis=1)
    acf = np.fft.irfft(f * np.conj(f), axis=1)[:, :T].mean(axis=0)
    if acf[0] <= 0:
        return 1.0
    acf = acf / acf[0]
    tau = 2 * np.cumsum(acf) - 1
    window = np.nonzero(np.arange(T) >= c * tau)[0]
    m = window[0] if window.size else T - 1
    return float(max(tau[m], 1.0))


def _run_chains(spec, cfg, x0, chain_ids):
    C, n = len(chain_ids), spec.n_particles
    L = spec.truncation_half_width
    rngs = [make_rng(cfg.seed, 1, c) for c in chain_ids]
    x = np.array(np.broadcast_to(x0, (C, n)), dtype=float)
    step = np.full(C, float(cfg.step_size))
    window_acc = np.zeros(C)
    window_sweeps = 0
    post_acc = np.zeros(C)
    records, energies = [], []
    for sweep in range(cfg.n_sweeps):
        z = np.stack([r.standard_normal(n) for r in rngs])
        u = np.stack([r.random(n) for r in rngs])
        acc = np.zeros(C)
        for i in range(n):
            new = x[:, i] + step * z[:, i]
            inside = np.abs(new) <= L
            delta = site_log_ratio(spec, x, i, new)
            ok = inside & (np.log(u[:, i]) < delta)
            x[ok, i] = new[ok]
            acc += ok
        acc /= n
        if sweep < cfg.burn_in:
            if cfg.adapt:
                window_acc += acc
                window_sweeps += 1
                if window_sweeps == cfg.adapt_every:
                    step *= np.exp(window_acc / window_sweeps - cfg.target_acceptance)
                    window_acc[:] = 0
                    window_sweeps = 0
            continue
        post_acc += acc
        energies.append(log_density_h(spec, x))
        if (sweep - cfg.burn_in) % cfg.thinning == 0:
            records.append(x.copy())
    post_acc /= cfg.n_sweeps - cfg.burn_in
    return np.stack(records, axis=1), np.stack(energies, axis=1), post_acc, step


def mcmc_sample(spec, cfg, init=None, n_workers=1, sort=True):
    """Single-site Gaussian Metropolis on [-L, L]^N targeting the interacting ensemble.

    Returns (samples, diagnostics); samples has shape (n_chains * records, N),
    chain-major, each row sorted unless ``sort`` is False.
    """
    n = spec.n_particles
    x0 = default_initial_config(spec) if init is None else np.asarray(init, dtype=float)
    if x0.shape[-1] != n:
        raise InitFailure("initial configuration has the wrong size", operation="mcmc_sample")
    if np.any(np.abs(x0) > spec.truncation_half_width):
        raise InitFailure("initial configuration leaves the truncation box", operation="mcmc_sample")
    try:
        ld = log_density_h(spec, np.atleast_2d(x0))
    except Exception as exc:
        raise InitFailure(f"log density undefined at the initial configuration: {exc}",
                          operation="mcmc_sample") from exc
    if not np.all(np.isfinite(ld)):
        raise InitFailure("log density not finite at the initial configuration", operation="mcmc_sample")

    ids = np.arange(cfg.n_chains)
    groups = [g for g in np.array_split(ids, max(1, min(n_workers, cfg.n_chains))) if g.size]
    if len(groups) == 1:
        parts = [_run_chains(spec, cfg, x0, groups[0])]
    else:
        with ThreadPoolExecutor(len(groups)) as pool:
            parts = list(pool.map(lambda g: _run_chains(spec, cfg, x0, g), groups))
    recs = np.concatenate([p[0] for p in parts])
    energy = np.concatenate([p[1] for p in parts])
    acc = np.concatenate([p[2] for p in parts])
    step = np.concatenate([p[3] for p in parts])

    rate = float(np.mean(acc))
    if rate < 0.01:
        raise StuckChain(f"acceptance rate {rate:.4f} after adaptation", operation="mcmc_sample")
    diag = ChainDiagnostics(rate, integrated_autocorrelation_time(energy), list(energy.mean(axis=0)),
                            float(np.mean(step)), [float(a) for a in acc])
    if diag.flagged:
        log.warning("acceptance rate %.3f outside [0.1, 0.9]", rate)
    samples = recs.reshape(-1, n)
    if sort:
        samples = np.sort(samples, axis=1)
    return samples, diag


# ---------------------------------------------------------------------------
# exact samplers
# ---------------------------------------------------------------------------
def _tridiagonal_eigs(rng, n, size):
    d = rng.standard_normal((size, n))
    if n == 1:
        return d
    off = np.sqrt(rng.chisquare(2.0 * np.arange(n - 1, 0, -1), size=(size, n - 1)) / 2)
    H = np.zeros((size, n, n))
    i = np.arange(n)
    H[:, i, i] = d
    H[:, i[:-1], i[1:]] = off
    H[:, i[1:], i[:-1]] = off
    return np.linalg.eigvalsh(H)


def gue_tridiagonal_batch(n, c, size, seed, stream=0, chunk=50_000):
    """size x n array of samples with joint density prop. to prod|x_i-x_j|^2 exp(-c n sum x^2)."""
    if n < 1 or not c > 0:
        raise ValueError("need n >= 1 and c > 0")
    scale = 1.0 / math.sqrt(2 * c * n)
    out = np.empty((size, n))
    for k, start in enumerate(range(0, size, chunk)):
        m = min(chunk, size - start)
        out[start:start + m] = scale * _tridiagonal_eigs(make_rng(seed, 2, stream, k), n, m)
    return out


def gue_tridiagonal_sample(n, c, seed):
    """One sample of the Gaussian unitary ensemble with weight exp(-c n t^2), sorted."""
    return gue_tridiagonal_batch(n, c, 1, seed)[0]


def sample_eta(p: MixtureGaussianParams, seed, size=None):
    """Mixing variable: centred Gaussian with variance 2(alpha+gamma)/alpha."""
    sd = math.sqrt(2 * (p.alpha + p.gamma) / p.alpha)
    return make_rng(seed, 3).normal(0.0, sd, size)


def mixture_exact_batch(p: MixtureGaussianParams, n, size, seed):
    """Exact samples of the alpha t^2 / gamma t^2 model as shifted Gaussian ensembles."""
    eta = np.atleast_1d(sample_eta(p, seed, size))
    y = gue_tridiagonal_batch(n, p.alpha + p.gamma, size, seed)
    return y + p.shift(eta, n)[:, None]


def mixture_exact_sample(p: MixtureGaussianParams, n, seed):
    return mixture_exact_batch(p, n, 1, seed)[0]


# ---------------------------------------------------------------------------
# partition ratio
# ---------------------------------------------------------------------------
def partition_ratio(p: MixtureGaussianParams, eta):
    """Z^eta / Z = exp(gamma eta^2 / (4(alpha+gamma))) * sqrt(1 - gamma/(alpha+gamma))."""
    c = p.alpha + p.gamma
    return math.exp(p.gamma * eta ** 2 / (4 * c)) * math.sqrt(1 - p.gamma / c)


def partition_ratio_printed(p: MixtureGaussianParams, eta):
    """The closed form as commonly quoted: exp(gamma eta^2 / (4(alpha+gamma))) / sqrt(1 - gamma/(alpha+gamma))."""
    c = p.alpha + p.gamma
    return math.exp(p.gamma * eta ** 2 / (4 * c)) / math.sqrt(1 - p.gamma / c)


@dataclass(frozen=True)
class RatioEstimate:
    estimate: float
    stderr: float
    effective_sample_size: float
    n_draws: int


def partition_ratio_is(p: MixtureGaussianParams, eta, n, n_draws, seed, inflation=2.0, chunk=100_000):
    """Importance-sampling estimate of Z^eta / Z = E_P[exp(eta sqrt(gamma) M1 - gamma M1^2)].

    Proposal: Gaussian ensemble with weight exp(-(alpha+gamma) n t^2) translated
    rigidly by tau ~ N(0, s^2); its density is prop. to the Vandermonde factor
    times exp(-(alpha+gamma) n M2 + A M1^2).  The variance s^2 is ``inflation``
    times the value making A = gamma, so the weights exp((gamma - A) M1^2) are
    bounded.  The self-normalised estimator uses the model's log-density.
    """
    c = p.alpha + p.gamma
    spec = p.spec(n)
    s2 = inflation * p.gamma / (2 * c * p.alpha * n * n)
    A = (c * n) ** 2 / (c * n * n + 1 / (2 * s2))
    rng = make_rng(seed, 4)
    logw_all, f_all = [], []
    for k, start in enumerate(range(0, n_draws, chunk)):
        m = min(chunk, n_draws - start)
        y = _tridiagonal_eigs(make_rng(seed, 5, k), n, m) / math.sqrt(2 * c * n)
        x = y + rng.normal(0.0, math.sqrt(s2), m)[:, None]
        M1 = x.sum(axis=1)
        M2 = np.square(x).sum(axis=1)
        log_q = _log_vdm(x) - c * n * M2 + A * M1 ** 2
        logw_all.append(log_density_h(spec, x) - log_q)
        f_all.append(np.exp(eta * math.sqrt(p.gamma) * M1 - p.gamma * M1 ** 2))
    logw = np.concatenate(logw_all)
    f = np.concatenate(f_all)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    est = float(w @ f)
    se = float(math.sqrt(np.sum(w ** 2 * (f - est) ** 2)))
    return RatioEstimate(est, se, float(1.0 / np.sum(w ** 2)), n_draws)


def _log_vdm(x):
    n = x.shape[-1]
    iu, ju = np.triu_indices(n, 1)
    return 2 * np.sum(np.log(np.abs(x[..., iu] - x[..., ju])), axis=-1)
