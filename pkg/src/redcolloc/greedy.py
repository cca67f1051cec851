"""Greedy offline training for the least-squares (LSRCM) and empirical (ERCM) reduced collocation methods."""
import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import precond as pc
from .exceptions import ConvergenceError, GreedyAbort, LinearDependenceError
from .numerics import sigma_min
from .problem import center
from .reduced import (assemble_model, precompute_burgers, preconditioned_snapshots, reconstruct,
                      solve_ercm_batch, solve_ls_batch, solve_online, solve_online_burgers)
from .truth import NewtonConfig, solve_truth, solve_truth_burgers

logger = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-13
# Errors below this fraction of the truth norm count as zero (snapshot reproduction).
ZERO_ERROR_RTOL = 1e-11


@dataclass
class ReducedBasis:
    vectors: np.ndarray = field(repr=False)
    selected_mu: np.ndarray
    reduced_points: np.ndarray
    method: str
    precond: str
    inner_product: str = "opweighted"

    @property
    def N(self):
        return self.vectors.shape[1]


@dataclass
class GreedyRound:
    """One greedy round: the parameter added and the max estimate over the training set after adding it."""

    index: int
    mu: np.ndarray
    max_delta: float
    point: int = -1
    elapsed: float = 0.0


@dataclass
class GreedyHistory:
    rounds: list = field(default_factory=list)
    stop_reason: str = ""
    failures: list = field(default_factory=list)

    @property
    def max_deltas(self):
        return np.array([r.max_delta for r in self.rounds])

    def rows(self, timing=False):
        d = len(self.rounds[0].mu) if self.rounds else 1
        header = ["round"] + [f"mu_{k + 1}" for k in range(d)] + ["max_delta", "point"]
        rows = [header + (["elapsed_s"] if timing else [])]
        for r in self.rounds:
            row = [r.index] + [f"{v:.17g}" for v in r.mu] + [f"{r.max_delta:.17g}", r.point]
            rows.append(row + ([f"{r.elapsed:.3f}"] if timing else []))
        return rows

    def write_csv(self, path, timing=False):
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows(timing))


# --- inner products and Gram-Schmidt ----------------------------------------------------------

class InnerProduct:
    """``(u, v) = (S u) . (S v)`` for a fixed linear map ``S``.

    ``l2`` uses the identity, ``l2cc`` Clenshaw-Curtis weights, and
    ``opweighted`` the weighted L2 product of ``L(mu_c) u`` and ``L(mu_c) v``.
    """

    def __init__(self, kind, problem=None):
        self.kind = kind
        self.S = None
        if kind == "l2":
            return
        if problem is None:
            raise ValueError(f"inner product {kind!r} needs a problem")
        w = problem.grid.quad_weights(interior=True) if hasattr(problem.grid, "gy") else \
            problem.grid.quad_weights[1:-1]
        sw = np.sqrt(w)
        if kind == "l2cc":
            self.S = sw
        elif kind == "opweighted":
            self.S = sw[:, None] * problem.assemble(center(problem.domain))
        else:
            raise ValueError(f"unknown inner product {kind!r}")

    def transform(self, v):
        if self.S is None:
            return np.array(v, dtype=float)
        if self.S.ndim == 1:
            return self.S[:, None] * v if np.ndim(v) == 2 else self.S * v
        return self.S @ v

    def __call__(self, u, v):
        return self.transform(u).T @ self.transform(v)


def mgs_append(Q, v, ip, SQ=None, tol=1e-12):
    """Orthonormalize ``v`` against the columns of ``Q`` (assumed orthonormal) and append it.

    Returns ``(Q_new, SQ_new)`` where ``SQ`` caches ``ip.transform(Q)``. A
    second projection pass keeps orthogonality at rounding level.
    """
    n = len(v)
    Q = np.zeros((n, 0)) if Q is None else Q
    SQ = ip.transform(Q) if SQ is None else SQ
    w = np.array(v, dtype=float)
    sw = ip.transform(w)
    norm0 = np.linalg.norm(sw)
    for _ in range(2):
        for j in range(Q.shape[1]):
            h = SQ[:, j] @ sw
            w -= h * Q[:, j]
            sw -= h * SQ[:, j]
    norm = np.linalg.norm(sw)
    if norm0 == 0.0 or norm <= tol * norm0:
        raise LinearDependenceError(f"vector #{Q.shape[1] + 1} is linearly dependent on its predecessors",
                                    index=Q.shape[1])
    return np.column_stack([Q, w / norm]), np.column_stack([SQ, sw / norm])


def mgs(vectors, inner_product="l2cc", problem=None, tol=1e-12):
    """Modified Gram-Schmidt on the columns of ``vectors``.

    ``inner_product`` is an :class:`InnerProduct` or one of its kind names.
    """
    ip = inner_product if isinstance(inner_product, InnerProduct) else InnerProduct(inner_product, problem)
    V = np.atleast_2d(np.asarray(vectors, dtype=float).T).T
    Q, SQ = None, None
    for j in range(V.shape[1]):
        try:
            Q, SQ = mgs_append(Q, V[:, j], ip, SQ, tol)
        except LinearDependenceError as exc:
            raise LinearDependenceError(str(exc), index=j) from None
    return Q


# --- error estimation ---------------------------------------------------------------------------

class ExactSigma:
    """``mu -> sigma_min(P(mu) L(mu))`` computed exactly on demand and cached per parameter."""

    def __init__(self, problem, precond):
        self.problem = problem
        self.precond = precond
        self.cache = {}

    def __call__(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.ndim == 2:
            return np.array([self(m) for m in mu])
        key = tuple(mu.tolist())
        if key not in self.cache:
            self.cache[key] = sigma_min(pc.apply(self.precond, mu, self.problem.assemble(mu)))
        return self.cache[key]


@dataclass
class EstimatorMode:
    """``residual`` gives ``||P(mu)(L(mu) u_N - f(mu))||_2``; ``residual_over_sigma`` divides it by ``sigma(mu)``."""

    kind: str = "residual"
    sigma: object = None

    def __post_init__(self):
        if self.kind not in ("residual", "residual_over_sigma"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "residual_over_sigma" and self.sigma is None:
            raise ValueError("residual_over_sigma needs a sigma source")

    def scale(self, mu, residual):
        if self.kind == "residual":
            return residual
        s = np.asarray(self.sigma(mu), dtype=float)
        if np.any(s <= 0):
            raise ValueError("sigma lower bound must be positive")
        return residual / s


def estimate(mu, basis, coeffs, precond, problem, mode=None):
    """Full-order estimate of the error of ``sum_j coeffs_j basis_j`` at ``mu``."""
    mode = mode or EstimatorMode()
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    U = basis.vectors if isinstance(basis, ReducedBasis) else np.asarray(basis)
    r = problem.assemble(mu) @ (U @ coeffs) - problem.rhs(mu)
    return float(mode.scale(mu, np.linalg.norm(pc.apply(precond, mu, r))))


def effectivity(mu, model, precond, problem, mode=None):
    """Ratio of the online estimate to the true Euclidean error.

    Returns ``inf`` when the error is numerically zero (below
    ``ZERO_ERROR_RTOL`` times the truth norm), e.g. at snapshot parameters.
    """
    mode = mode or EstimatorMode()
    sol = solve_online(model, mu)
    u = solve_truth(problem, mu).values
    err = np.linalg.norm(reconstruct(model, sol.coeffs) - u)
    if err <= ZERO_ERROR_RTOL * np.linalg.norm(u):
        return np.inf
    return float(mode.scale(sol.mu, sol.delta)) / err


# --- trainers -----------------------------------------------------------------------------------

def _seed_index(n, seed):
    return 0 if seed is None else int(np.random.Generator(np.random.Philox(seed)).integers(n))


def _as_precond(precond, problem):
    return precond if isinstance(precond, pc.PreconditionerData) else pc.build(precond, problem)


def _training_set(training_set, n_max):
    Xi = np.atleast_2d(np.asarray(training_set, dtype=float))
    if Xi.shape[0] == 0:
        raise ValueError("empty training set")
    if n_max < 1 or n_max > Xi.shape[0]:
        raise ValueError(f"n_max must lie in [1, {Xi.shape[0]}], got {n_max}")
    return Xi


def _sweep(method, problem, data, U, mus, V, G, points, Xi, mode):
    model = assemble_model(method, problem, data, U, mus, V, G, points)
    if method == "lsrcm":
        c, delta = solve_ls_batch(model, Xi)
    else:
        c, delta, _ = solve_ercm_batch(model, Xi)
    if mode.kind != "residual":
        delta = mode.scale(Xi, delta)
    return delta


def _record(history, t0, mu, delta, point, progress):
    r = GreedyRound(len(history.rounds) + 1, np.array(mu), float(np.max(delta)), int(point),
                    time.perf_counter() - t0)
    history.rounds.append(r)
    logger.info("round %d: mu=%s max delta=%.3e", r.index, r.mu.tolist(), r.max_delta)
    if progress is not None:
        progress(r)


def _next_index(delta, selected, stop_tol, n, n_max, history):
    if n >= n_max:
        history.stop_reason = "n_max reached"
        return None
    if np.max(delta) <= stop_tol:
        history.stop_reason = "tolerance reached"
        return None
    k = int(np.argmax(delta))
    if k in selected:
        history.stop_reason = "greedy would reselect a parameter (basis saturated)"
        return None
    return k


def train_lsrcm(problem, training_set, precond="none", n_max=20, stop_tol=0.0, seed=None,
                inner_product="opweighted", estimator=None, progress=None):
    """Greedy training for the least-squares reduced collocation method.

    Returns ``(ReducedBasis, GreedyHistory)``. The basis is kept orthonormal
    in ``inner_product`` (``opweighted`` by default, i.e.
    ``(L(mu_c) u, L(mu_c) v)`` in the Clenshaw-Curtis L2 product).
    """
    Xi = _training_set(training_set, n_max)
    data = _as_precond(precond, problem)
    mode = estimator or EstimatorMode()
    ip = InnerProduct(inner_product, problem)
    history = GreedyHistory()
    t0 = time.perf_counter()

    k = _seed_index(len(Xi), seed)
    selected = [k]
    U, SU = mgs_append(None, solve_truth(problem, Xi[k]).values, ip, tol=DEGENERATE_TOL)
    V, G = preconditioned_snapshots(U, problem, data)
    while True:
        delta = _sweep("lsrcm", problem, data, U, Xi[selected], V, G, (), Xi, mode)
        _record(history, t0, Xi[selected[-1]], delta, -1, progress)
        k = _next_index(delta, selected, stop_tol, U.shape[1], n_max, history)
        if k is None:
            break
        u = solve_truth(problem, Xi[k]).values
        try:
            U, SU = mgs_append(U, u, ip, SU, tol=DEGENERATE_TOL)
        except LinearDependenceError:
            history.stop_reason = f"degenerate snapshot at mu={Xi[k].tolist()}"
            logger.warning(history.stop_reason)
            break
        selected.append(k)
        V = np.concatenate([V, preconditioned_snapshots(U[:, -1:], problem, data)[0]], axis=2)
    basis = ReducedBasis(U, Xi[selected], np.zeros(0, dtype=np.int64), "lsrcm", data.kind, inner_product)
    return basis, history


def interpolation_residual(U, points, u):
    """Subtract from ``u`` the combination of columns of ``U`` matching ``u`` at ``points``."""
    if U is None or U.shape[1] == 0:
        return np.array(u, dtype=float)
    alpha = np.linalg.solve(U[points], u[points])
    return u - U @ alpha


class _ErcmBuilder:
    """Steps iv-vi of the empirical greedy: interpolate out, pick the point, normalize, orthonormalize."""

    def __init__(self, ip):
        self.ip = ip
        self.U = None
        self.SU = None
        self.points = []

    def add(self, u):
        xi = interpolation_residual(self.U, self.points, u)
        x = int(np.argmax(np.abs(xi)))
        if np.abs(xi[x]) <= DEGENERATE_TOL * np.max(np.abs(u)):
            raise LinearDependenceError("new snapshot is interpolated exactly by the basis",
                                        index=len(self.points))
        xi = xi / xi[x]
        self.U, self.SU = mgs_append(self.U, xi, self.ip, self.SU, tol=DEGENERATE_TOL)
        self.points.append(x)
        return x


def train_ercm(problem, training_set, precond="none", n_max=20, stop_tol=0.0, seed=None,
               estimator=None, progress=None):
    """Greedy training for the empirical reduced collocation method.

    Reduced points are chosen among interior nodes as the maximizers of the
    interpolation residual; basis columns are then orthonormalized in the
    Clenshaw-Curtis L2 product (the points stay fixed).
    """
    Xi = _training_set(training_set, n_max)
    data = _as_precond(precond, problem)
    mode = estimator or EstimatorMode()
    builder = _ErcmBuilder(InnerProduct("l2cc", problem))
    history = GreedyHistory()
    t0 = time.perf_counter()

    k = _seed_index(len(Xi), seed)
    selected = [k]
    builder.add(solve_truth(problem, Xi[k]).values)
    V, G = preconditioned_snapshots(builder.U, problem, data)
    while True:
        delta = _sweep("ercm", problem, data, builder.U, Xi[selected], V, G, builder.points, Xi, mode)
        _record(history, t0, Xi[selected[-1]], delta, builder.points[-1], progress)
        k = _next_index(delta, selected, stop_tol, len(selected), n_max, history)
        if k is None:
            break
        try:
            builder.add(solve_truth(problem, Xi[k]).values)
        except LinearDependenceError:
            history.stop_reason = f"basis saturated at mu={Xi[k].tolist()}"
            logger.warning(history.stop_reason)
            break
        selected.append(k)
        V = np.concatenate([V, preconditioned_snapshots(builder.U[:, -1:], problem, data)[0]], axis=2)
    basis = ReducedBasis(builder.U, Xi[selected], np.array(builder.points, dtype=np.int64), "ercm",
                         data.kind, "l2cc")
    return basis, history


def _burgers_sweep(problem, basis, Xi, cfg, history):
    model = precompute_burgers(basis, problem)
    order = np.argsort(Xi[:, 0], kind="stable")
    delta = np.full(len(Xi), np.nan)
    warm = {}
    for i in order:
        mu = float(Xi[i, 0])
        try:
            sol = solve_online_burgers(model, mu, cfg, warm_start=warm)
        except ConvergenceError as exc:
            logger.warning("reduced Newton failed at mu=%g: %s", mu, exc)
            history.failures.append(mu)
            continue
        delta[i] = np.linalg.norm(problem.residual(model.basis @ sol.coeffs, mu))
    failed = np.isnan(delta)
    if failed.sum() > 0.1 * len(Xi):
        raise GreedyAbort(f"reduced Newton failed on {failed.sum()} of {len(Xi)} training parameters")
    return np.where(failed, -np.inf, delta)


def train_ercm_burgers(problem, training_set, n_max=8, stop_tol=0.0, seed=None, cfg=None, progress=None):
    """Empirical greedy for viscous Burgers with Newton truth and reduced solves.

    The estimate is the full nodal residual norm of the reconstructed
    reduced solution. Parameters where the reduced Newton iteration fails
    are skipped; more than 10% failures abort training.
    """
    Xi = _training_set(training_set, n_max)
    cfg = cfg or NewtonConfig()
    builder = _ErcmBuilder(InnerProduct("l2cc", problem))
    history = GreedyHistory()
    t0 = time.perf_counter()

    def truth(mu):
        return solve_truth_burgers(problem, mu, cfg).values

    k = _seed_index(len(Xi), seed)
    selected = [k]
    builder.add(truth(Xi[k]))
    while True:
        basis = ReducedBasis(builder.U, Xi[selected], np.array(builder.points), "ercm-burgers", "none", "l2cc")
        delta = _burgers_sweep(problem, basis, Xi, cfg, history)
        _record(history, t0, Xi[selected[-1]], delta, builder.points[-1], progress)
        k = _next_index(delta, selected, stop_tol, len(selected), n_max, history)
        if k is None:
            break
        try:
            builder.add(truth(Xi[k]))
        except LinearDependenceError:
            history.stop_reason = f"basis saturated at mu={Xi[k].tolist()}"
            break
        selected.append(k)
    return basis, history
