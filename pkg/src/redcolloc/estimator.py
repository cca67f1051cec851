"""Estimator-style front end: parameters in, reduced solutions out.

``fit`` runs the offline stage on a training set of parameters (rows of
``X``); ``transform`` returns reduced coefficients, ``predict`` nodal
reduced solutions on the interior nodes, ``estimate_error`` the online
residual estimate.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import precond as pc
from .greedy import train_ercm, train_ercm_burgers, train_lsrcm
from .problem import build_problem
from .reduced import precompute, precompute_burgers, reconstruct, solve_batch, solve_online_burgers
from .truth import NewtonConfig


def check_parameters(X, domain, name="X"):
    """Validate an ``(n_samples, d)`` parameter array and check it lies in ``domain``."""
    X = check_array(X, dtype=np.float64, ensure_2d=False, input_name=name)
    X = X.reshape(-1, domain.dim) if X.ndim == 1 else X
    if X.shape[1] != domain.dim:
        raise ValueError(f"{name} has {X.shape[1]} columns, the parameter domain has dimension {domain.dim}")
    for mu in X:
        domain.check(mu)
    return X


class ReducedCollocationSolver(BaseEstimator):
    """Reduced collocation model of a linear parametrized problem.

    Parameters
    ----------
    problem : str
        Problem name, currently ``"diffusion2d"``.
    nx : int
        Chebyshev points per direction of the truth grid.
    method : {"lsrcm", "ercm"}
        Least-squares or empirical reduced collocation.
    precond : str
        ``none``, ``center``, ``interp`` or ``interp-diag`` (long names accepted).
    n_max : int
        Maximum reduced dimension.
    stop_tol : float
        Greedy stopping tolerance on the max estimate.
    seed : int or None
        Seed for the first training parameter; ``None`` picks the first row.
    inner_product : str
        Orthonormalization product for LSRCM.

    Attributes
    ----------
    problem_ : AffineProblem
    precond_ : PreconditionerData
    basis_ : ReducedBasis
    history_ : GreedyHistory
    model_ : ReducedModel
    n_components_ : int
        Reduced dimension actually reached.
    """

    def __init__(self, problem="diffusion2d", nx=25, method="lsrcm", precond="none", n_max=10,
                 stop_tol=0.0, seed=None, inner_product="opweighted"):
        self.problem = problem
        self.nx = nx
        self.method = method
        self.precond = precond
        self.n_max = n_max
        self.stop_tol = stop_tol
        self.seed = seed
        self.inner_product = inner_product

    def fit(self, X, y=None):
        """Greedy training over the parameter rows of ``X``."""
        if self.method not in ("lsrcm", "ercm"):
            raise ValueError(f"method must be 'lsrcm' or 'ercm', got {self.method!r}")
        self.problem_ = build_problem(self.problem, self.nx)
        X = check_parameters(X, self.problem_.domain)
        self.precond_ = pc.build(self.precond, self.problem_)
        if self.method == "lsrcm":
            self.basis_, self.history_ = train_lsrcm(self.problem_, X, self.precond_, self.n_max, self.stop_tol,
                                                     self.seed, self.inner_product)
        else:
            self.basis_, self.history_ = train_ercm(self.problem_, X, self.precond_, self.n_max, self.stop_tol,
                                                    self.seed)
        self.model_ = precompute(self.basis_, self.problem_, self.precond_)
        self.n_components_ = self.model_.N
        return self

    def transform(self, X):
        """Reduced coefficients, shape ``(n_samples, N)``."""
        check_is_fitted(self, "model_")
        return solve_batch(self.model_, check_parameters(X, self.model_.domain))[0]

    def predict(self, X):
        """Reduced solutions at the interior nodes, shape ``(n_samples, n_interior)``."""
        coeffs = self.transform(X)
        return reconstruct(self.model_, coeffs).T

    def estimate_error(self, X):
        """Online residual estimate at each parameter row."""
        check_is_fitted(self, "model_")
        return solve_batch(self.model_, check_parameters(X, self.model_.domain))[1]


class BurgersReducedCollocationSolver(BaseEstimator):
    """Empirical reduced collocation model of the 1D viscous Burgers problem.

    Parameters
    ----------
    nx : int
        Chebyshev points of the truth grid.
    rhs_spec : str
        ``"fixed"`` (forcing manufactured at mu = 1, held fixed) or ``"manufactured"``.
    n_max : int
    stop_tol : float
    seed : int or None
    abs_tol : float
        Newton residual tolerance for truth and reduced solves.
    """

    def __init__(self, nx=65, rhs_spec="fixed", n_max=8, stop_tol=0.0, seed=None, abs_tol=1e-12):
        self.nx = nx
        self.rhs_spec = rhs_spec
        self.n_max = n_max
        self.stop_tol = stop_tol
        self.seed = seed
        self.abs_tol = abs_tol

    def _cfg(self):
        return NewtonConfig(abs_tol=self.abs_tol)

    def fit(self, X, y=None):
        self.problem_ = build_problem("burgers1d", self.nx, rhs_spec=self.rhs_spec)
        X = check_parameters(X, self.problem_.domain)
        self.basis_, self.history_ = train_ercm_burgers(self.problem_, X, self.n_max, self.stop_tol, self.seed,
                                                        self._cfg())
        self.model_ = precompute_burgers(self.basis_, self.problem_)
        self.n_components_ = self.model_.N
        return self

    def _solve(self, X):
        check_is_fitted(self, "model_")
        X = check_parameters(X, self.model_.domain)
        warm = {}
        order = np.argsort(X[:, 0], kind="stable")
        sols = [None] * len(X)
        for i in order:
            sols[i] = solve_online_burgers(self.model_, X[i], self._cfg(), warm_start=warm)
        return sols

    def transform(self, X):
        return np.array([s.coeffs for s in self._solve(X)])

    def predict(self, X):
        coeffs = self.transform(X)
        return reconstruct(self.model_, coeffs).T

    def estimate_error(self, X):
        return np.array([s.delta for s in self._solve(X)])
