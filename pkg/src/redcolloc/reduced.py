"""Offline-online decomposition and online reduced solvers.

Offline, every preconditioned affine term ``t = (i, q)`` is applied to every
basis column, giving vectors ``v_{t,j} = P_i L_q xi_j`` and right-hand side
images ``g_{r'} = P_i f_r``. These are stacked into
``S = [v_{1,1} .. v_{T,N} | g_1 .. g_{T_f}]`` and only the triangular factor
``R`` of ``S = Q R`` is kept. ``R^T R`` is the Gram matrix of all those
vectors, so the normal equations and the residual norm of any reduced
solution are available from ``R`` alone, without cancellation in the
residual. ERCM models also keep the rows of the ``v_{t,j}`` at the reduced
points.

Nothing of size ``n`` (number of interior nodes) is touched by the online
path except :func:`reconstruct`.
"""
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConvergenceError, SingularMatrixError
from .precond import block_weights
from .problem import AFFINE_COEFFICIENTS, ParameterDomain

# Condition number above which an online N x N system is treated as singular.
SINGULAR_COND = 1e14


@dataclass
class OnlineSolution:
    mu: np.ndarray
    coeffs: np.ndarray
    delta: float
    wall_time: float = 0.0
    flagged: bool = False
    iterations: int = 0


@dataclass
class ReducedModel:
    method: str
    problem_name: str
    precond: str
    domain: ParameterDomain
    nx: int
    n_op_terms: int
    n_rhs_terms: int
    basis: np.ndarray = field(repr=False)
    selected_mu: np.ndarray = field(repr=False)
    r_factor: np.ndarray = field(repr=False)
    reduced_points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    point_blocks: np.ndarray = field(default=None, repr=False)
    point_rhs: np.ndarray = field(default=None, repr=False)

    @property
    def N(self):
        return self.basis.shape[1]

    @property
    def n_blocks(self):
        return 1 if self.precond in ("none", "center") else 2**self.domain.dim

    @property
    def n_terms(self):
        return self.n_blocks * self.n_op_terms

    def coefficients(self, mu):
        """``(theta, phi)``: weights of the preconditioned operator and rhs terms."""
        mu = np.asarray(mu, dtype=float)
        op, rhs = AFFINE_COEFFICIENTS[self.problem_name]
        w = block_weights(self.precond, self.domain, mu)[..., :, None]
        theta = (w * op(mu)[..., None, :]).reshape(mu.shape[:-1] + (-1,))
        phi = (w * rhs(mu)[..., None, :]).reshape(mu.shape[:-1] + (-1,))
        return theta, phi

    def truncate(self, n):
        """Model restricted to the first ``n`` basis columns (and reduced points)."""
        N, T = self.N, self.n_terms
        if not 1 <= n <= N:
            raise ValueError(f"cannot truncate a {N}-column model to {n}")
        cols = np.concatenate([np.arange(t * N, t * N + n) for t in range(T)] +
                              [np.arange(T * N, self.r_factor.shape[1])])
        out = replace(self, basis=self.basis[:, :n], selected_mu=self.selected_mu[:n],
                      r_factor=self.r_factor[:, cols])
        if self.method == "ercm":
            out.reduced_points = self.reduced_points[:n]
            out.point_blocks = self.point_blocks[:, :n, :n]
            out.point_rhs = self.point_rhs[:, :n]
        return out

    def residual_norms(self, theta, phi, coeffs):
        """Preconditioned full residual norms for a batch of coefficient vectors."""
        A, b = self._r_system(theta, phi)
        return np.linalg.norm(np.einsum("mkj,mj->mk", A, coeffs) - b, axis=1)

    def _r_system(self, theta, phi):
        T, N = self.n_terms, self.N
        R = self.r_factor
        A = np.einsum("mt,ktj->mkj", theta, R[:, : T * N].reshape(-1, T, N))
        b = phi @ R[:, T * N :].T
        return A, b


def preconditioned_snapshots(basis, problem, precond):
    """``(V, G)`` with ``V[:, t, j] = P_t L_q xi_j`` and ``G[:, r] = P_t f_r``."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float).T).T
    LU = [Lq @ basis for Lq in problem.terms]
    V = np.stack([precond.apply_block(i, LqU) for i in range(precond.n_blocks) for LqU in LU], axis=1)
    F = np.column_stack(problem.rhs_terms)
    G = np.column_stack([precond.apply_block(i, F) for i in range(precond.n_blocks)])
    return V, G


def assemble_model(method, problem, precond, basis, selected_mu, V, G, reduced_points=()):
    """Build a :class:`ReducedModel` from precomputed preconditioned snapshot images."""
    n, T, N = V.shape
    S = np.hstack([V.reshape(n, T * N), G])
    R = np.ascontiguousarray(np.linalg.qr(S, mode="r"))
    nx = problem.grid.gx.n_pts
    mus = np.atleast_2d(np.asarray(selected_mu, dtype=float))
    model = ReducedModel(method, problem.name, precond.kind, problem.domain, nx, problem.n_terms,
                         problem.n_rhs_terms, np.ascontiguousarray(basis), mus, R)
    if method == "ercm":
        pts = np.asarray(reduced_points, dtype=np.int64)
        if pts.size != N:
            raise ValueError(f"ERCM model needs {N} reduced points, got {pts.size}")
        model.reduced_points = pts
        model.point_blocks = np.ascontiguousarray(V[pts].transpose(1, 0, 2))
        model.point_rhs = np.ascontiguousarray(G[pts].T)
    elif method != "lsrcm":
        raise ValueError(f"unknown method {method!r}")
    return model


def precompute(basis, problem, precond):
    """Offline stage: all ``n``-dependent work for a trained :class:`~redcolloc.greedy.ReducedBasis`."""
    if basis.precond != precond.kind:
        raise ValueError(f"basis trained with {basis.precond!r}, preconditioner is {precond.kind!r}")
    V, G = preconditioned_snapshots(basis.vectors, problem, precond)
    return assemble_model(basis.method, problem, precond, basis.vectors, basis.selected_mu, V, G,
                          basis.reduced_points)


def _batch_solve(M, rhs):
    """Solve a stack of small systems, returning NaN rows where they are singular."""
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(M)
    bad = ~(cond < SINGULAR_COND)
    c = np.full(rhs.shape, np.nan)
    if np.any(~bad):
        c[~bad] = np.linalg.solve(M[~bad], rhs[~bad][..., None])[..., 0]
    return c, bad, cond


def solve_ls_batch(model, mu):
    """LSRCM online solve for a batch ``mu`` of shape ``(M, d)``; returns ``(coeffs, deltas)``."""
    theta, phi = model.coefficients(mu)
    A, b = model._r_system(theta, phi)
    normal = np.einsum("mkj,mkl->mjl", A, A)
    c, bad, cond = _batch_solve(normal, np.einsum("mkj,mk->mj", A, b))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SingularMatrixError(
            f"normal matrix at mu={np.asarray(mu)[k].tolist()} is numerically singular (cond ~ {cond[k]:.2e})")
    return c, np.linalg.norm(np.einsum("mkj,mj->mk", A, c) - b, axis=1)


def solve_ercm_batch(model, mu, fallback=True):
    """ERCM online solve for a batch; returns ``(coeffs, deltas, flagged)``.

    A singular N x N system is retried once with the last basis column and
    reduced point dropped; such rows come back flagged.
    """
    theta, phi = model.coefficients(mu)
    M = np.einsum("mt,tkj->mkj", theta, model.point_blocks)
    rhs = phi @ model.point_rhs
    c, bad, cond = _batch_solve(M, rhs)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        if not fallback or model.N == 1:
            raise SingularMatrixError(
                f"reduced collocation system at mu={np.asarray(mu)[k].tolist()} is singular (cond ~ {cond[k]:.2e})")
        sub = model.truncate(model.N - 1)
        c_sub, _, _ = solve_ercm_batch(sub, np.asarray(mu)[bad], fallback=False)
        c[bad] = np.column_stack([c_sub, np.zeros(len(c_sub))])
    return c, model.residual_norms(theta, phi, c), bad


def solve_online_ls(model, mu):
    """Least-squares reduced solve at a single parameter."""
    if model.method != "lsrcm":
        raise ValueError("solve_online_ls needs an LSRCM model")
    mu = model.domain.check(mu)
    t0 = time.perf_counter()
    c, delta = solve_ls_batch(model, mu[None, :])
    return OnlineSolution(mu, c[0], float(delta[0]), time.perf_counter() - t0)


def solve_online_ercm(model, mu):
    """Reduced-collocation solve at a single parameter."""
    if model.method != "ercm":
        raise ValueError("solve_online_ercm needs an ERCM model")
    mu = model.domain.check(mu)
    t0 = time.perf_counter()
    c, delta, flagged = solve_ercm_batch(model, mu[None, :])
    return OnlineSolution(mu, c[0], float(delta[0]), time.perf_counter() - t0, bool(flagged[0]))


def solve_online(model, mu):
    if isinstance(model, NonlinearReducedModel):
        return solve_online_burgers(model, mu)
    return solve_online_ls(model, mu) if model.method == "lsrcm" else solve_online_ercm(model, mu)


def solve_batch(model, mu):
    """Coefficients and residual estimates for an ``(M, d)`` batch of parameters."""
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    if model.method == "lsrcm":
        return solve_ls_batch(model, mu)
    c, delta, _ = solve_ercm_batch(model, mu)
    return c, delta


def reconstruct(model, coeffs):
    """Nodal values ``sum_j c_j xi_j`` (a batch of coefficient rows gives a column per row)."""
    coeffs = np.asarray(coeffs, dtype=float)
    return model.basis @ coeffs.T if coeffs.ndim == 2 else model.basis @ coeffs


# --- nonlinear (viscous Burgers) -------------------------------------------------------------

@dataclass
class NonlinearReducedModel:
    """Reduced Burgers model on the ERCM reduced points.

    With ``u = U c`` the reduced equations read
    ``(A c) * (B c) - mu L2R c = f_R(mu)`` where ``A = U[pts]``,
    ``B = (D U)[pts]`` and ``L2R = (D2 U)[pts]``. The full nodal residual
    norm of the reconstruction is available through the triangular factor
    of ``[xi_j * D xi_k | D2 xi_j | g | h]``.
    """

    problem_name: str
    domain: ParameterDomain
    nx: int
    basis: np.ndarray = field(repr=False)
    selected_mu: np.ndarray = field(repr=False)
    reduced_points: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    L2R: np.ndarray = field(repr=False)
    forcing_base: np.ndarray = field(repr=False)
    forcing_slope: np.ndarray = field(repr=False)
    r_factor: np.ndarray = field(repr=False)
    method: str = "ercm-burgers"
    precond: str = "none"

    @property
    def N(self):
        return self.basis.shape[1]

    def forcing(self, mu):
        return self.forcing_base - mu * self.forcing_slope

    def residual(self, c, mu):
        return (self.A @ c) * (self.B @ c) - mu * (self.L2R @ c) - self.forcing(mu)

    def jacobian(self, c, mu):
        return (self.B @ c)[:, None] * self.A + (self.A @ c)[:, None] * self.B - mu * self.L2R

    def full_residual_norm(self, c, mu):
        w = np.concatenate([np.outer(c, c).ravel(), -mu * c, [-1.0, mu]])
        return float(np.linalg.norm(self.r_factor @ w))

    def truncate(self, n):
        N = self.N
        pairs = (np.arange(n)[:, None] * N + np.arange(n)[None, :]).ravel()
        cols = np.concatenate([pairs, N * N + np.arange(n), [N * N + N, N * N + N + 1]])
        pts = slice(0, n)
        return replace(self, basis=self.basis[:, :n], selected_mu=self.selected_mu[:n],
                       reduced_points=self.reduced_points[:n], A=self.A[pts, :n], B=self.B[pts, :n],
                       L2R=self.L2R[pts, :n], forcing_base=self.forcing_base[:n],
                       forcing_slope=self.forcing_slope[:n], r_factor=self.r_factor[:, cols])


def precompute_burgers(basis, problem):
    """Reduced Burgers blocks for a basis trained by ``train_ercm_burgers``."""
    U = np.asarray(basis.vectors, dtype=float)
    pts = np.asarray(basis.reduced_points, dtype=np.int64)
    DU, D2U = problem.D @ U, problem.D2 @ U
    N = U.shape[1]
    quad = (U[:, :, None] * DU[:, None, :]).reshape(-1, N * N)
    S = np.column_stack([quad, D2U, problem.forcing_base, problem.forcing_slope])
    R = np.ascontiguousarray(np.linalg.qr(S, mode="r"))
    return NonlinearReducedModel(problem.name, problem.domain, problem.grid.n_pts, U,
                                 np.atleast_2d(np.asarray(basis.selected_mu, dtype=float)), pts,
                                 U[pts], DU[pts], D2U[pts], problem.forcing_base[pts],
                                 problem.forcing_slope[pts], R)


def solve_online_burgers(model, mu, cfg=None, warm_start=None):
    """Newton iteration on the N x N reduced Burgers system.

    ``warm_start`` maps previously queried parameters (floats) to their
    coefficient vectors; the nearest one seeds the iteration, else zero.
    """
    from .truth import NewtonConfig, newton

    cfg = cfg or NewtonConfig()
    mu = float(model.domain.check(mu)[0])
    t0 = time.perf_counter()
    c0 = np.zeros(model.N)
    if cfg.initial_guess is not None:
        c0 = np.asarray(cfg.initial_guess, dtype=float)
    elif warm_start:
        c0 = warm_start[min(warm_start, key=lambda m: abs(m - mu))]
    try:
        c, hist = newton(lambda c: model.residual(c, mu), lambda c: model.jacobian(c, mu), c0, cfg,
                         label=f"reduced Burgers solve at mu={mu:g}")
    except ConvergenceError:
        if not np.any(c0):
            raise
        c, hist = newton(lambda c: model.residual(c, mu), lambda c: model.jacobian(c, mu),
                         np.zeros(model.N), cfg, label=f"reduced Burgers solve at mu={mu:g}")
    if warm_start is not None:
        warm_start[mu] = c
    return OnlineSolution(np.array([mu]), c, model.full_residual_norm(c, mu), time.perf_counter() - t0,
                          iterations=len(hist) - 1)
