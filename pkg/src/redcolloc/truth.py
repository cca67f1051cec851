"""High-fidelity collocation solvers and discrete norms."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, SingularMatrixError
from .numerics import Grid1D, Grid2D, factor

logger = logging.getLogger(__name__)


@dataclass
class TruthSolution:
    mu: np.ndarray
    values: np.ndarray = field(repr=False)
    residual_norm: float
    iterations: int = 1
    residual_history: list = field(default_factory=list, repr=False)


@dataclass
class NewtonConfig:
    """Stopping rules for Newton iterations.

    Iteration stops once ``||R||_2 <= abs_tol``. It also stops when the
    Newton step falls below ``step_tol * max(1, ||u||)``: at that point the
    residual has hit its rounding floor, which on fine grids sits above a
    strict ``abs_tol`` because of the size of the second-derivative matrix.
    """

    max_iter: int = 50
    abs_tol: float = 1e-12
    step_tol: float = 1e-14
    initial_guess: np.ndarray = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


def solve_truth(problem, mu):
    """Direct collocation solve of ``L(mu) u = f(mu)`` on the interior nodes.

    ``mu`` may lie outside the training box; only its dimension is checked.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.shape != (problem.domain.dim,):
        raise ValueError(f"expected {problem.domain.dim} parameter values, got {mu.shape[0]}")
    L = problem.assemble(mu)
    f = problem.rhs(mu)
    u = factor(L).solve(f)
    return TruthSolution(mu, u, float(np.linalg.norm(L @ u - f)))


def newton(residual, jacobian, u0, cfg, label="Newton"):
    """Damping-free Newton iteration shared by the truth and reduced Burgers solvers.

    Returns ``(u, residual_history)``.
    """
    u = np.array(u0, dtype=float)
    r = residual(u)
    history = [float(np.linalg.norm(r))]
    for _ in range(cfg.max_iter):
        if history[-1] <= cfg.abs_tol:
            return u, history
        try:
            step = factor(jacobian(u)).solve(r)
        except SingularMatrixError as exc:
            raise ConvergenceError(f"{label}: singular Jacobian ({exc})", history) from exc
        u = u - step
        r = residual(u)
        history.append(float(np.linalg.norm(r)))
        if not np.isfinite(history[-1]):
            raise ConvergenceError(f"{label}: residual diverged", history)
        if np.linalg.norm(step) <= cfg.step_tol * max(1.0, np.linalg.norm(u)):
            return u, history
    if history[-1] <= cfg.abs_tol:
        return u, history
    raise ConvergenceError(
        f"{label}: no convergence after {cfg.max_iter} iterations (residual {history[-1]:.3e})", history
    )


def _burgers_newton(problem, mu, cfg, u0):
    D, D2, f = problem.D, problem.D2, problem.rhs(mu)

    def residual(u):
        return u * (D @ u) - mu * (D2 @ u) - f

    def jacobian(u):
        return np.diag(D @ u) + u[:, None] * D - mu * D2

    return newton(residual, jacobian, u0, cfg, label=f"Burgers truth solve at mu={mu:g}")


def solve_truth_burgers(problem, mu, cfg=None):
    """Newton solve of ``u*(D u) - mu D2 u = f(mu)``.

    Falls back to viscosity continuation (from ``4 * mu`` downwards) when the
    plain iteration fails from the initial guess.
    """
    cfg = cfg or NewtonConfig()
    mu = float(problem.domain.check(mu)[0])
    if mu <= 0:
        raise ValueError("Burgers solves need a positive viscosity")
    u0 = np.zeros(problem.size) if cfg.initial_guess is None else cfg.initial_guess
    try:
        u, hist = _burgers_newton(problem, mu, cfg, u0)
    except ConvergenceError:
        logger.info("Newton failed at mu=%g, retrying with viscosity continuation", mu)
        u = np.zeros(problem.size)
        for m in np.geomspace(4.0 * mu, mu, 6):
            u, hist = _burgers_newton(problem, m, cfg, u)
    if len(hist) >= 3 and hist[-3] > 0:
        logger.debug("Newton residuals %s, quadratic constant ~ %.3g", hist, hist[-2] / hist[-3] ** 2)
    return TruthSolution(np.array([mu]), u, hist[-1], len(hist) - 1, hist)


def _extend(u, grid):
    u = np.asarray(u, dtype=float)
    if isinstance(grid, Grid2D):
        if u.shape[0] == grid.n_full:
            full = u
        elif u.shape[0] == grid.n_interior:
            full = np.zeros((grid.n_full,) + u.shape[1:])
            full[grid.interior_index] = u
        else:
            raise ValueError(f"field of length {u.shape[0]} does not match the grid")
        return full
    if u.shape[0] == grid.n_pts:
        return u
    if u.shape[0] == grid.n_interior:
        full = np.zeros((grid.n_pts,) + u.shape[1:])
        full[1:-1] = u
        return full
    raise ValueError(f"field of length {u.shape[0]} does not match the grid")


def _weighted_l2_sq(full, grid):
    w = grid.quad_weights(interior=False) if isinstance(grid, Grid2D) else grid.quad_weights
    return np.einsum("i,i...->...", w, full**2)


def l2_norm(u, grid):
    """Clenshaw-Curtis L2 norm of a nodal field (columns of ``u`` are separate fields).

    Interior-sized input is zero-extended to the boundary.
    """
    return np.sqrt(_weighted_l2_sq(_extend(u, grid), grid))


def h1_norm(u, grid):
    """H1 norm with spectral derivatives of the zero-extended field."""
    full = _extend(u, grid)
    total = _weighted_l2_sq(full, grid)
    if isinstance(grid, Grid2D):
        nx, ny = grid.gx.n_pts, grid.gy.n_pts
        U = full.reshape((nx, ny) + full.shape[1:])
        ux = np.tensordot(grid.gx.diff(1), U, axes=(1, 0)).reshape(full.shape)
        uy = np.moveaxis(np.tensordot(grid.gy.diff(1), U, axes=(1, 1)), 0, 1).reshape(full.shape)
        total = total + _weighted_l2_sq(ux, grid) + _weighted_l2_sq(uy, grid)
    elif isinstance(grid, Grid1D):
        total = total + _weighted_l2_sq(grid.diff(1) @ full, grid)
    return np.sqrt(total)
