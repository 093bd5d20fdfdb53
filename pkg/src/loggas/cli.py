"""Command-line front end: ``loggas run --config exp.yaml --out DIR`` and ``loggas list-models``.

Config files are YAML; see ``docs/config.md`` for the schema.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from . import equilibrium as eq
from . import model
from . import orthopoly as op
from . import sampler as smp
from . import stats as st
from .errors import ConfigInvalid, LogGasError

log = logging.getLogger("loggas")

KINDS = (
    "equilibrium", "fixed-point", "kernel-universality", "sample-and-spacings",
    "kpoint", "gp-identity", "concentration", "mixture-validate",
)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------
@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    model: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    output: str | None = None
    raw: dict = field(default_factory=dict)

    def field_(self):
        return model.field_from_config(self.model.get("field", {"kind": "quadratic", "alpha": 1.0}))

    def kernel(self):
        return model.kernel_from_config(self.model.get("kernel", {"kind": "zero"}))

    def mixture_params(self):
        return model.MixtureGaussianParams(float(self.model["alpha"]), float(self.model["gamma"]))


def _require(cond, msg):
    if not cond:
        raise ConfigInvalid(msg, operation="run")


def parse_config(data):
    _require(isinstance(data, dict), "config must be a mapping")
    kind = data.get("experiment")
    _require(kind in KINDS, f"experiment must be one of {', '.join(KINDS)}")
    _require("seed" in data, "seed is required")
    seed = data["seed"]
    _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0, "seed must be a non-negative integer")
    sections = {}
    for key in ("model", "solver", "sampler", "analysis"):
        sec = data.get(key, {}) or {}
        _require(isinstance(sec, dict), f"{key} must be a mapping")
        sections[key] = sec
    unknown = set(data) - {"experiment", "seed", "output", "model", "solver", "sampler", "analysis"}
    _require(not unknown, f"unknown top-level keys: {sorted(unknown)}")
    cfg = ExperimentConfig(kind, seed, output=data.get("output"), raw=data, **sections)
    try:
        if "field" in cfg.model:
            cfg.field_()
        if "kernel" in cfg.model:
            cfg.kernel()
        if kind == "mixture-validate" or cfg.model.get("alpha") is not None:
            cfg.mixture_params()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"model section invalid: {exc}", operation="run") from exc
    if kind == "mixture-validate":
        _require("eta" in cfg.analysis, "mixture-validate needs analysis.eta")
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot read config: {exc}", operation="run") from exc
    return parse_config(data)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------
def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class Artifacts:
    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def text(self, name, content):
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        self.files.append(name)
        return path

    def json(self, name, obj):
        return self.text(name, dumps_json(obj))

    def csv_rows(self, name, header, rows):
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(_fmt(v) for v in r))
        return self.text(name, "\n".join(lines) + "\n")

    def manifest(self, cfg, wall):
        entries = []
        for name in self.files:
            data = (self.out / name).read_bytes()
            entries.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        doc = {
            "experiment": cfg.kind,
            "seed": cfg.seed,
            "inputs": cfg.raw,
            "versions": {"loggas": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_time_seconds": wall,
            "artifacts": entries,
        }
        (self.out / "manifest.json").write_text(dumps_json(doc), encoding="utf-8")
        return doc


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------
def _radius_factor(cfg):
    return float(cfg.model.get("truncation_factor", 1.5))


def run_equilibrium(cfg, art, threads):
    V = cfg.field_()
    sol = eq.solve_equilibrium(V, tol=float(cfg.solver.get("tol", 1e-10)), m=int(cfg.solver.get("nodes", 128)))
    art.text("measure.csv", sol.measure.to_csv())
    art.json("summary.json", {"config": cfg.raw, **sol.summary()})
    return sol.summary()


def run_fixed_point(cfg, art, threads):
    Q, h = cfg.field_(), cfg.kernel()
    sol = eq.fixed_point_interaction(Q, h, tol=float(cfg.solver.get("tol", 1e-10)),
                                     max_iter=int(cfg.solver.get("max_iter", 200)),
                                     damping=float(cfg.solver.get("damping", 0.5)),
                                     m=int(cfg.solver.get("nodes", 128)))
    report = {"config": cfg.raw, **sol.summary(), "history": list(sol.history)}
    fp, kp = Q.params, h.params
    if Q.name == "quadratic" and h.name == "quadratic":
        a, g = fp["alpha"], kp["gamma"]
        b = sol.endpoint
        grid = np.linspace(-b, b, 2001)
        dev = np.max(np.abs(sol.measure.density_at(grid) - eq.semicircle_density(b, grid)))
        report["semicircle"] = {
            "support_radius": b,
            "predicted_radius_sqrt_2_over_alpha_plus_gamma": math.sqrt(2 / (a + g)),
            "quoted_omega_inverse_sqrt_alpha_plus_gamma": 1 / math.sqrt(a + g),
            "radius_over_quoted_omega": b * math.sqrt(a + g),
            "sup_deviation_from_semicircle": dev,
            "note": "support radius exceeds the quoted omega by a factor sqrt(2)",
        }
    art.text("measure.csv", sol.measure.to_csv())
    art.json("summary.json", report)
    return report


def run_kernel_universality(cfg, art, threads):
    V = cfg.field_()
    an = cfg.analysis
    ns = [int(n) for n in an.get("n_values", [25, 50, 100])]
    a, box, grid = float(an.get("a", 0.0)), float(an.get("box", 2.0)), int(an.get("grid", 41))
    mu = eq.solve_equilibrium(V).measure
    L = _radius_factor(cfg) * mu.radius
    rows, errs = [], {}
    ev = None
    for n in ns:
        ev = op.evaluator_for_field(V, n, L, extended=bool(an.get("extended", False)))
        e = op.rescaled_kernel_error(ev, mu, a, box, grid)
        errs[n] = e
        rows.append((n, e))
    art.csv_rows("kernel_error.csv", ["n", "sup_error"], rows)
    scale = ev.n_terms * float(mu.density_at(a))
    u = np.linspace(-box, box, grid)
    K = ev.matrix(a + u / scale) / scale
    art.csv_rows("kernel_grid.csv", ["t", "s", "value"],
                 [(u[i], u[j], K[i, j]) for i in range(grid) for j in range(grid)])
    decreasing = all(errs[ns[i + 1]] < errs[ns[i]] for i in range(len(ns) - 1))
    report = {"config": cfg.raw, "errors": errs, "strictly_decreasing": decreasing}
    art.json("report.json", report)
    return report


def _model_samples(cfg, threads):
    """Samples of the configured ensemble plus its limiting measure."""
    Q, h = cfg.field_(), cfg.kernel()
    n = int(cfg.model["n"])
    method = cfg.sampler.get("method", "mcmc")
    if method == "exact":
        p = cfg.mixture_params()
        size = int(cfg.sampler.get("n_samples", 1000))
        samples = smp.mixture_exact_batch(p, n, size, cfg.seed)
        mu = eq.semicircle_measure(p.support_radius)
        return samples, mu, None
    mu = (eq.solve_equilibrium(Q) if h.is_zero else eq.fixed_point_interaction(Q, h)).measure
    spec = model.EnsembleSpec(n, Q, h, _radius_factor(cfg) * mu.radius)
    s = cfg.sampler
    scfg = smp.SamplerConfig(int(s.get("n_sweeps", 2000)), int(s.get("burn_in", 200)), int(s.get("thinning", 10)),
                             float(s.get("step_size", 0.05)), cfg.seed, bool(s.get("adapt", True)),
                             int(s.get("n_chains", 8)))
    samples, diag = smp.mcmc_sample(spec, scfg, n_workers=threads)
    return samples, mu, diag


def run_sample_and_spacings(cfg, art, threads):
    samples, mu, diag = _model_samples(cfg, threads)
    an = cfg.analysis
    a = float(an.get("a", 0.0))
    window = float(an.get("window", st.default_window(mu)))
    hist = st.empirical_density(samples, np.linspace(-1.2 * mu.radius, 1.2 * mu.radius, int(an.get("bins", 60)) + 1))
    min_gaps = int(an.get("min_gaps", 10_000))
    sp = st.spacing_distribution(st.unfold_batch(samples, mu, a, window), min_gaps=min_gaps)
    pc = st.poisson_control(samples.shape[1], samples.shape[0], cfg.seed, box=1.0)
    flat = model_uniform()
    psp = st.spacing_distribution(st.unfold_batch(pc, flat, 0.0, 0.1), min_gaps=min(min_gaps, 1000))
    art.text("density.csv", hist.to_csv())
    art.text("spacings.csv", sp.to_csv())
    report = {
        "config": cfg.raw,
        "density_ks": st.ks_distance(samples, mu.cdf),
        "spacing_ks_vs_surmise": st.surmise_ks(sp),
        "poisson_control_ks_vs_surmise": st.surmise_ks(psp),
        "n_gaps": sp.total,
        "mean_gap": float(np.mean(sp.raw)),
    }
    if diag is not None:
        report["diagnostics"] = diag.to_dict()
    art.json("report.json", report)
    return report


def model_uniform():
    """Uniform density on [-1, 1] as a Chebyshev measure (Poisson control unfolding)."""
    return eq.Measure1D.from_smooth_part(lambda t: 0.5 * np.sqrt(np.maximum((1 - t) * (1 + t), 0.0)), -1, 1, 64)


def run_kpoint(cfg, art, threads):
    samples, mu, diag = _model_samples(cfg, threads)
    an = cfg.analysis
    k, box, bins = int(an.get("k", 2)), float(an.get("box", 2.0)), int(an.get("bins", 8))
    nb = an.get("n_batches", 16 if diag is not None else None)
    est = st.empirical_kpoint(samples, mu, float(an.get("a", 0.0)), k, box, bins, n_batches=nb)
    frac, _ = st.kpoint_agreement(est, an.get("reference", "average"))
    art.text("kpoint.csv", est.to_csv())
    report = {"config": cfg.raw, "fraction_within_3_sigma": frac, "n_configs": est.n_configs}
    if diag is not None:
        report["diagnostics"] = diag.to_dict()
    art.json("report.json", report)
    return report


def run_gp_identity(cfg, art, threads):
    h = cfg.kernel()
    an = cfg.analysis
    n, n_cfg = int(cfg.model.get("n", 4)), int(an.get("n_configs", 10))
    mu = eq.semicircle_measure(float(an.get("measure_radius", 1.0)))
    L = float(an.get("L", 1.05 * mu.radius))
    dec = st.mercer_decompose(h, L, int(an.get("rank", 64)))
    rng = smp.make_rng(cfg.seed, 9)
    rows, checks = [], []
    for i in range(n_cfg):
        x = np.sort(rng.uniform(-mu.radius, mu.radius, n))
        c = st.gp_linearization_check(h, mu, x, int(an.get("n_mc", 100_000)), cfg.seed + i, decomposition=dec)
        checks.append(c.passes())
        rows.append((i, c.mc_estimate, c.stderr, c.exact, c.z_score))
    art.csv_rows("gp_identity.csv", ["config", "mc_estimate", "stderr", "exact", "z_score"], rows)
    report = {"config": cfg.raw, "all_within_3_sigma": all(checks), "n_configs": n_cfg,
              "eigenvalues": dec.eigenvalues[:10]}
    art.json("report.json", report)
    return report


TEST_FUNCTIONS = {
    "linear": lambda p, L: st.TestFunction(lambda t: t, 1.0, L, 0.0),
    "cos": lambda p, L: st.TestFunction(lambda t: np.cos(p.get("freq", 1.0) * t), abs(p.get("freq", 1.0)),
                                        1.0, abs(p.get("freq", 1.0)) ** 3),
}


def run_concentration(cfg, art, threads):
    V = cfg.field_()
    an = cfg.analysis
    mu = eq.solve_equilibrium(V).measure
    L = _radius_factor(cfg) * mu.radius
    fspec = dict(an.get("function", {"kind": "linear"}))
    fkind = fspec.pop("kind", "linear")
    if fkind not in TEST_FUNCTIONS:
        raise ConfigInvalid(f"unknown test function {fkind!r}", operation="run")
    tf = TEST_FUNCTIONS[fkind](fspec, L)
    size = int(an.get("n_samples", 2000))
    out = {}
    for n in an.get("n_values", [16, 32, 64, 128]):
        n = int(n)
        if V.name == "quadratic":
            out[n] = smp.gue_tridiagonal_batch(n, V.params["alpha"], size, cfg.seed, stream=n)
        else:
            spec = model.EnsembleSpec(n, V, model.zero_kernel(), L)
            s = cfg.sampler
            scfg = smp.SamplerConfig(int(s.get("n_sweeps", 2000)), int(s.get("burn_in", 200)),
                                     int(s.get("thinning", 5)), float(s.get("step_size", 0.05)),
                                     cfg.seed + n, True, int(s.get("n_chains", 8)))
            out[n] = smp.mcmc_sample(spec, scfg, n_workers=threads)[0]
    report = st.concentration_check(out, tf, mu, V.convexity_lower_bound)
    report["config"] = cfg.raw
    art.json("report.json", report)
    return report


def run_mixture_validate(cfg, art, threads):
    p = cfg.mixture_params()
    an = cfg.analysis
    eta, n = float(an["eta"]), int(cfg.model.get("n", 16))
    draws = int(an.get("n_draws", 1_000_000))
    est = smp.partition_ratio_is(p, eta, n, draws, cfg.seed)
    printed = smp.partition_ratio_printed(p, eta)
    corrected = smp.partition_ratio(p, eta)
    report = {
        "config": cfg.raw,
        "closed_form_quoted": printed,
        "closed_form_corrected": corrected,
        "importance_sampling_estimate": est.estimate,
        "stderr": est.stderr,
        "effective_sample_size": est.effective_sample_size,
        "z_quoted": (est.estimate - printed) / est.stderr,
        "z_corrected": (est.estimate - corrected) / est.stderr,
    }
    art.json("report.json", report)
    art.csv_rows("ratio.csv", ["eta", "quoted", "corrected", "estimate", "stderr"],
                 [(eta, printed, corrected, est.estimate, est.stderr)])
    return report


RUNNERS = {
    "equilibrium": run_equilibrium,
    "fixed-point": run_fixed_point,
    "kernel-universality": run_kernel_universality,
    "sample-and-spacings": run_sample_and_spacings,
    "kpoint": run_kpoint,
    "gp-identity": run_gp_identity,
    "concentration": run_concentration,
    "mixture-validate": run_mixture_validate,
}


def run(cfg, out, threads=1):
    art = Artifacts(out)
    t0 = time.perf_counter()
    report = RUNNERS[cfg.kind](cfg, art, threads)
    art.manifest(cfg, time.perf_counter() - t0)
    return report


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------
EXAMPLE_PARAMS = {
    ("field", "quadratic"): {"alpha": 1.0},
    ("field", "quartic"): {"a": 0.0},
    ("field", "zero"): {},
    ("kernel", "zero"): {},
    ("kernel", "quadratic"): {"gamma": 1.0},
    ("kernel", "gaussian"): {"c": 0.4, "width": 1.0},
}


def list_builtin_models():
    cat = {"fields": {}, "kernels": {}}
    for name, (_, schema) in model.FIELD_BUILDERS.items():
        cat["fields"][name] = {"parameters": schema, "example": {"kind": name, **EXAMPLE_PARAMS[("field", name)]}}
    for name, (_, schema) in model.KERNEL_BUILDERS.items():
        cat["kernels"][name] = {"parameters": schema, "example": {"kind": name, **EXAMPLE_PARAMS[("kernel", name)]}}
    return cat


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser():
    ap = argparse.ArgumentParser(prog="loggas", description="beta=2 log-gas experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True, help="YAML experiment file")
    r.add_argument("--out", help="output directory (overrides config 'output')")
    r.add_argument("--threads", type=int, default=1, help="worker threads for independent chains")
    r.add_argument("--verbose", action="store_true")
    lm = sub.add_parser("list-models", help="print built-in fields and kernels")
    lm.add_argument("--verbose", action="store_true")
    return ap


def _error_exit(exc, out):
    doc = exc.to_dict() if isinstance(exc, LogGasError) else {
        "error": type(exc).__name__, "module": "unknown", "operation": None, "message": str(exc), "details": {}}
    text = dumps_json(doc)
    sys.stderr.write(text)
    if out is not None:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(text, encoding="utf-8")
        except OSError:
            pass
    return 2 if isinstance(exc, ConfigInvalid) else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-models":
        sys.stdout.write(dumps_json(list_builtin_models()))
        return 0
    out = args.out
    try:
        cfg = load_config(args.config)
        out = out or cfg.output
        if out is None:
            raise ConfigInvalid("no output directory given", operation="run")
        if args.threads < 1:
            raise ConfigInvalid("--threads must be positive", operation="run")
        run(cfg, out, args.threads)
    except Exception as exc:  # surfaced as a machine-readable report
        log.debug("experiment failed", exc_info=True)
        return _error_exit(exc, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
