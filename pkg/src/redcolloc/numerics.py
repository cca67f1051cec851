"""Dense kernels and Chebyshev spectral operators.

Everything here is a pure function of its arguments. Matrices are plain
``numpy.ndarray`` objects of dtype float64.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh

from .exceptions import RankDeficiencyError, SingularMatrixError

# Above this size sigma_min/cond2 switch from a full SVD to Lanczos on the factored inverse.
DENSE_SVD_LIMIT = 2500
MAX_KRON_ENTRIES = 2**31


def cheb_points(n):
    """Chebyshev-Gauss-Lobatto nodes ``cos(j*pi/n)``, ``j = 0..n``, descending."""
    n = int(n)
    if n < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {n}")
    x = np.cos(np.pi * np.arange(n + 1) / n)
    # symmetric rounding: keeps the midpoint exactly 0 and the grid odd-symmetric
    return (x - x[::-1]) / 2.0


def cheb_diff_matrix(n):
    """First-order Chebyshev differentiation matrix on ``cheb_points(n)``.

    Off-diagonal entries use the classical closed form; each diagonal entry
    is minus the sum of the off-diagonal entries in its row, so that the
    derivative of a constant vanishes to rounding.
    """
    x = cheb_points(n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def cheb_diff2_matrix(n):
    """Second-order differentiation matrix, ``D @ D``."""
    if int(n) < 2:
        raise ValueError(f"second derivative needs degree >= 2, got {n}")
    D = cheb_diff_matrix(n)
    return D @ D


def clenshaw_curtis_weights(n):
    """Clenshaw-Curtis quadrature weights on ``cheb_points(n)``.

    Exact for polynomials of degree <= n on [-1, 1]; the weights sum to 2.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {n}")
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = theta[1:n]
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
        v -= np.cos(n * inner) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    w[1:n] = 2.0 * v / n
    return w


def kron(A, B):
    """Kronecker product with a guard against absurd allocation sizes."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    size = A.shape[0] * B.shape[0] * A.shape[1] * B.shape[1]
    if size > MAX_KRON_ENTRIES:
        raise MemoryError(f"Kronecker product would hold {size} entries")
    return np.kron(A, B)


@dataclass(frozen=True)
class Grid1D:
    """Chebyshev-Gauss-Lobatto grid with ``n_pts`` nodes on [-1, 1]."""

    n_pts: int
    points: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n_pts):
        n_pts = int(n_pts)
        if n_pts < 2:
            raise ValueError(f"a grid needs at least 2 nodes, got {n_pts}")
        return cls(n_pts, cheb_points(n_pts - 1), clenshaw_curtis_weights(n_pts - 1))

    @property
    def interior(self):
        return self.points[1:-1]

    @property
    def n_interior(self):
        return self.n_pts - 2

    def diff(self, order=1):
        D = cheb_diff_matrix(self.n_pts - 1)
        return D if order == 1 else D @ D


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid ``gx x gy``; nodes are ordered with y varying fastest.

    The full-grid ordinal of node ``(i, j)`` (``x`` index ``i``, ``y`` index
    ``j``) is ``i * gy.n_pts + j``. ``interior_index[k]`` maps the k-th
    interior unknown to its full-grid ordinal.
    """

    gx: Grid1D
    gy: Grid1D
    interior_index: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, nx, ny=None):
        gx = Grid1D.build(nx)
        gy = Grid1D.build(nx if ny is None else ny)
        i, j = np.meshgrid(np.arange(1, gx.n_pts - 1), np.arange(1, gy.n_pts - 1), indexing="ij")
        return cls(gx, gy, (i * gy.n_pts + j).ravel())

    @property
    def n_full(self):
        return self.gx.n_pts * self.gy.n_pts

    @property
    def n_interior(self):
        return self.interior_index.size

    def coordinates(self, interior=True):
        """Node coordinates as an ``(n, 2)`` array."""
        X, Y = np.meshgrid(self.gx.points, self.gy.points, indexing="ij")
        xy = np.column_stack([X.ravel(), Y.ravel()])
        return xy[self.interior_index] if interior else xy

    def quad_weights(self, interior=True):
        w = np.outer(self.gx.quad_weights, self.gy.quad_weights).ravel()
        return w[self.interior_index] if interior else w


class Factorization:
    """LU factorization with partial pivoting supporting repeated solves."""

    def __init__(self, lu, piv, shape):
        self.lu = lu
        self.piv = piv
        self.shape = shape

    def solve(self, b, trans=0):
        return sla.lu_solve((self.lu, self.piv), b, trans=trans, check_finite=False)


def factor(A, rtol=None):
    """LU-factor the square matrix ``A``.

    Raises
    ------
    SingularMatrixError
        If a pivot of ``U`` is negligible relative to the largest one; the
        offending zero-based pivot index is attached as ``pivot``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"factor needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    d = np.abs(np.diag(lu))
    scale = d.max() if n else 0.0
    tol = (n * np.finfo(float).eps if rtol is None else rtol) * scale
    bad = np.flatnonzero(d <= tol)
    if scale == 0.0 or bad.size:
        k = int(bad[0]) if bad.size else 0
        raise SingularMatrixError(f"matrix is singular to working precision at pivot {k}", pivot=k)
    return Factorization(lu, piv, A.shape)


def solve(F, b):
    """Solve ``A x = b`` for a vector or a block of right-hand sides."""
    return F.solve(np.asarray(b, dtype=float))


def least_squares_solve(A, b, method="qr"):
    """Minimize ``||A x - b||_2`` for a tall, full-column-rank ``A``.

    ``method="qr"`` uses a Householder QR factorization; ``method="normal"``
    solves the normal equations ``A^T A x = A^T b`` via Cholesky.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise ValueError(f"least squares needs a tall matrix, got shape {A.shape}")
    m, n = A.shape
    if method == "qr":
        Q, R, perm = sla.qr(A, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > max(m, n) * np.finfo(float).eps * d[0])) if d[0] > 0 else 0
        if rank < n:
            raise RankDeficiencyError(f"matrix has estimated rank {rank} < {n}", rank=rank)
        x = np.empty(n)
        x[perm] = sla.solve_triangular(R, Q.T @ b)
        return x
    if method == "normal":
        G = A.T @ A
        try:
            cf = sla.cho_factor(G)
        except np.linalg.LinAlgError:
            rank = np.linalg.matrix_rank(A)
            raise RankDeficiencyError(f"normal matrix is not positive definite (rank {rank})", rank=rank)
        return sla.cho_solve(cf, A.T @ b)
    raise ValueError(f"unknown least-squares method {method!r}")


def _sigma_extremes_lanczos(A):
    n = A.shape[0]
    try:
        F = factor(A)
    except SingularMatrixError:
        smin = 0.0
    else:
        op = LinearOperator((n, n), matvec=lambda v: F.solve(F.solve(v, trans=1)), dtype=float)
        lam = eigsh(op, k=1, which="LM", tol=1e-12, return_eigenvectors=False, v0=np.ones(n))[0]
        smin = 1.0 / np.sqrt(lam)
    op = LinearOperator((n, n), matvec=lambda v: A.T @ (A @ v), dtype=float)
    smax = np.sqrt(eigsh(op, k=1, which="LM", tol=1e-12, return_eigenvectors=False, v0=np.ones(n))[0])
    return smin, smax


def singular_value_extremes(A):
    """Return ``(sigma_min, sigma_max)`` of ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        raise ValueError("empty matrix")
    if not np.any(A):
        return 0.0, 0.0
    if max(A.shape) > DENSE_SVD_LIMIT and A.shape[0] == A.shape[1]:
        return _sigma_extremes_lanczos(A)
    s = sla.svdvals(A)
    smin = s[-1] if A.shape[0] >= A.shape[1] else 0.0
    return float(smin), float(s[0])


def sigma_min(A):
    """Smallest singular value (0 for a zero matrix)."""
    return singular_value_extremes(A)[0]


def cond2(A):
    """Spectral condition number; ``inf`` when ``sigma_min`` is zero."""
    smin, smax = singular_value_extremes(A)
    return np.inf if smin == 0.0 else smax / smin
