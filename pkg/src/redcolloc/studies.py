"""Experiment drivers: stability maps, greedy convergence and effectivity studies."""
import csv
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import precond as pc
from .greedy import ZERO_ERROR_RTOL, EstimatorMode, ExactSigma, train_ercm, train_lsrcm
from .problem import build_problem, training_grid
from .reduced import precompute, reconstruct, solve_batch
from .truth import h1_norm, l2_norm, solve_truth

logger = logging.getLogger(__name__)

# Explicit P(mu) L(mu) products are only formed up to this many nodes per direction.
MAX_EXPLICIT_NX = 41

PROFILES = {
    "desk": dict(nx=41, train_counts=(32, 32), n_max=20, sample_count=257, param_counts=(32, 32)),
    "paper": dict(nx=81, train_counts=(64, 64), n_max=20, sample_count=1057, param_counts=(64, 64)),
}


@dataclass
class StudyConfig:
    problem: str = "diffusion2d"
    nx: int = 41
    train_counts: tuple = (32, 32)
    n_max: int = 20
    preconds: tuple = ("none", "center", "interp_q1")
    method: str = "lsrcm"
    sample_count: int = 257
    seed: int = 0
    param_counts: tuple = (32, 32)
    out_dir: str = "."
    threads: int = 1

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        self.preconds = tuple(pc.canonical_kind(k) for k in self.preconds)
        if self.method not in ("lsrcm", "ercm"):
            raise ValueError(f"unknown method {self.method!r}")


def resolve_config(profile="desk", **overrides):
    """StudyConfig for a named profile; ``None`` overrides are ignored."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    if profile == "paper":
        warnings.warn("profile 'paper' (81x81 grid, 64x64 training set, 1057 samples) "
                      "takes hours and several GB of memory", RuntimeWarning, stacklevel=2)
    params = dict(PROFILES[profile])
    params.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(**params)


@dataclass
class ScalarField2D:
    axes: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("field values do not match its axes")

    @property
    def spread(self):
        return float(self.values.max() / self.values.min())


def random_sample(domain, count, seed=0):
    """``count`` points uniform in the box, from a Philox (64-bit counter-based) generator."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    return lo + (hi - lo) * rng.random((int(count), domain.dim))


def stability_map(problem, precond_spec, counts=(16, 16)):
    """``sigma_min(P(mu) L(mu))`` over a uniform parameter grid."""
    nx = problem.grid.gx.n_pts
    if nx > MAX_EXPLICIT_NX:
        raise ValueError(f"stability maps form dense P(mu)L(mu); nx={nx} exceeds {MAX_EXPLICIT_NX}")
    data = pc.build(precond_spec, problem)
    terms, theta, _, _ = pc.preconditioned_affine_terms(data, problem)
    T = np.stack(terms)
    grid = training_grid(problem.domain, counts)
    values = np.array([sla.svdvals(np.tensordot(theta(mu), T, axes=1))[-1] for mu in grid])
    axes = tuple(np.linspace(a, b, c) for a, b, c in zip(problem.domain.lower, problem.domain.upper, counts))
    return ScalarField2D(axes, values.reshape(tuple(counts)))


def truth_snapshots(problem, sample, threads=1):
    """Truth solutions at each sample point, one column per point."""
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        cols = list(pool.map(lambda mu: solve_truth(problem, mu).values, sample))
    return np.column_stack(cols)


def train(problem, training_set, method, precond_spec, n_max, **kwargs):
    """Train a basis and precompute its online model; returns ``(model, basis, history, data)``."""
    data = pc.build(precond_spec, problem)
    trainer = train_lsrcm if method == "lsrcm" else train_ercm
    basis, history = trainer(problem, training_set, data, n_max=n_max, **kwargs)
    return precompute(basis, problem, data), basis, history, data


def convergence_study(problem, training_set, method, preconds, n_max, sample, threads=1, truth=None):
    """Max and median L2/H1 errors against truth over ``sample`` for N = 1..n_max, per preconditioner."""
    truth = truth_snapshots(problem, sample, threads) if truth is None else truth
    rows = []
    for spec in preconds:
        model, basis, history, _ = train(problem, training_set, method, spec, n_max)
        for n in range(1, model.N + 1):
            sub = model.truncate(n)
            coeffs, _ = solve_batch(sub, sample)
            err = reconstruct(sub, coeffs) - truth
            l2, h1 = l2_norm(err, problem.grid), h1_norm(err, problem.grid)
            rows.append({"method": method, "precond": pc.canonical_kind(spec), "N": n,
                         "max_l2": l2.max(), "median_l2": np.median(l2),
                         "max_h1": h1.max(), "median_h1": np.median(h1)})
        logger.info("%s/%s: N=%d max L2 error %.3e", method, spec, model.N, rows[-1]["max_l2"])
    return rows


def effectivity_study(problem, models, sample, certified=True, truth=None, threads=1):
    """Effectivity ``delta / ||e||_2`` per sample point for each preconditioned model.

    ``models`` maps a preconditioner kind to ``(model, precond_data)``.
    Points where the true error is numerically zero (snapshot parameters) are dropped. Returns
    ``(rows, summary)``; the summary holds min, max and spread (max/min) per kind.
    """
    truth = truth_snapshots(problem, sample, threads) if truth is None else truth
    rows, summary = [], {}
    for kind, (model, data) in models.items():
        coeffs, delta = solve_batch(model, sample)
        err = np.linalg.norm(reconstruct(model, coeffs) - truth, axis=0)
        if certified:
            delta = EstimatorMode("residual_over_sigma", ExactSigma(problem, data)).scale(sample, delta)
        keep = err > ZERO_ERROR_RTOL * np.linalg.norm(truth, axis=0)
        eff = delta[keep] / err[keep]
        for mu, e in zip(sample[keep], eff):
            rows.append({"precond": kind, **{f"mu_{k + 1}": v for k, v in enumerate(mu)}, "effectivity": e})
        summary[kind] = {"min": eff.min(), "max": eff.max(), "spread": eff.max() / eff.min()}
    return rows, summary


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def emit_csv(table, path, header=None):
    """Write a list of dict rows (or a header plus list rows) as CSV with 17 significant digits."""
    rows = list(table)
    if header is None:
        header = list(rows[0].keys()) if rows else []
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                vals = [row[k] for k in header] if isinstance(row, dict) else row
                w.writerow([_fmt(v) for v in vals])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def emit_heatmap(field, path):
    """16-bit binary PGM of a 2D field plus a ``.txt`` sidecar with range, scaling and axes.

    Columns follow the first axis; rows follow the second axis with its
    largest value at the top. The field is mapped through log10 when its
    dynamic range exceeds 100.
    """
    v = np.asarray(field.values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    use_log = lo > 0 and hi / lo > 100
    s = np.log10(v) if use_log else v
    smin, smax = float(s.min()), float(s.max())
    scaled = np.zeros_like(s) if smax == smin else (s - smin) / (smax - smin)
    img = np.round(scaled * 65535).astype(">u2").T[::-1]
    height, width = img.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
            fh.write(img.tobytes())
        with open(str(path) + ".txt", "w") as fh:
            fh.write(f"min {lo!r}\nmax {hi!r}\nscale {'log10' if use_log else 'linear'}\n")
            for k, ax in enumerate(field.axes):
                fh.write(f"axis{k + 1} {' '.join(repr(float(a)) for a in ax)}\n")
    except OSError as exc:
        raise OSError(f"cannot write heatmap to {path}: {exc}") from exc
    return path


STUDIES = ("stability", "convergence", "effectivity")


def run_study(name, cfg):
    """Run a named study and write its outputs under ``cfg.out_dir``; returns the written paths."""
    if name not in STUDIES:
        raise ValueError(f"unknown study {name!r}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    problem = build_problem(cfg.problem, cfg.nx)
    out = []
    if name == "stability":
        if cfg.nx > MAX_EXPLICIT_NX:
            logger.warning("stability maps are capped at nx=%d (requested %d)", MAX_EXPLICIT_NX, cfg.nx)
            problem = build_problem(cfg.problem, MAX_EXPLICIT_NX)
        for kind in cfg.preconds:
            f = stability_map(problem, kind, cfg.param_counts)
            out.append(emit_heatmap(f, os.path.join(cfg.out_dir, f"stability_{kind}.pgm")))
            logger.info("stability %s: sigma_min in [%.3e, %.3e]", kind, f.values.min(), f.values.max())
        return out
    Xi = training_grid(problem.domain, cfg.train_counts)
    sample = random_sample(problem.domain, cfg.sample_count, cfg.seed)
    truth = truth_snapshots(problem, sample, cfg.threads)
    if name == "convergence":
        rows = convergence_study(problem, Xi, cfg.method, cfg.preconds, cfg.n_max, sample, truth=truth)
        out.append(emit_csv(rows, os.path.join(cfg.out_dir, f"convergence_{cfg.method}.csv")))
        return out
    if name == "effectivity":
        models = {}
        for kind in cfg.preconds:
            model, _, _, data = train(problem, Xi, cfg.method, kind, cfg.n_max)
            models[kind] = (model, data)
        rows, summary = effectivity_study(problem, models, sample, truth=truth)
        out.append(emit_csv(rows, os.path.join(cfg.out_dir, f"effectivity_{cfg.method}.csv")))
        srows = [{"precond": k, **v} for k, v in summary.items()]
        out.append(emit_csv(srows, os.path.join(cfg.out_dir, f"effectivity_{cfg.method}_summary.csv")))
    return out
