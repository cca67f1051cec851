"""Parametrized problems in affine form and parameter-domain geometry.

Dirichlet conditions are imposed by deleting boundary rows and columns, so
every operator acts on interior unknowns only.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError
from .numerics import Grid1D, Grid2D, kron

DIFFUSION_DOMAIN = ((-0.99, -0.99), (0.99, 0.99))
BURGERS_DOMAIN = ((0.5,), (2.0,))


@dataclass(frozen=True)
class ParameterDomain:
    """Axis-aligned box ``[lower, upper]`` in ``R^d``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must have the same nonzero length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"empty parameter box {lo} .. {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return len(self.lower)

    def contains(self, mu, atol=1e-12):
        mu = np.asarray(mu, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return bool(np.all(mu >= lo - atol) and np.all(mu <= hi + atol))

    def check(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.shape[-1] != self.dim:
            raise DomainError(f"expected {self.dim} parameter components, got {mu.shape[-1]}")
        if not self.contains(mu):
            raise DomainError(f"parameter {mu.tolist()} lies outside {self.lower} .. {self.upper}")
        return mu


def center(domain):
    """Arithmetic midpoint of the box."""
    return (np.asarray(domain.lower) + np.asarray(domain.upper)) / 2.0


def corners(domain):
    """The ``2**d`` vertices, lexicographic in (lower=0, upper=1) bits, first axis slowest."""
    return [np.array(c) for c in itertools.product(*zip(domain.lower, domain.upper))]


def normalize(domain, mu):
    """Map ``mu`` (shape ``(..., d)``) affinely onto the unit box."""
    mu = np.asarray(mu, dtype=float)
    if not domain.contains(mu):
        raise DomainError(f"parameter {mu.tolist()} lies outside {domain.lower} .. {domain.upper}")
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    return np.clip((mu - lo) / (hi - lo), 0.0, 1.0)


def training_grid(domain, counts):
    """Uniform tensor grid including the endpoints, first axis slowest.

    Returns an array of shape ``(prod(counts), d)``.
    """
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != domain.dim:
        raise ValueError(f"need {domain.dim} counts, got {len(counts)}")
    if min(counts) < 2:
        raise ValueError("each training-grid count must be >= 2")
    axes = [np.linspace(a, b, c) for a, b, c in zip(domain.lower, domain.upper, counts)]
    return np.array(list(itertools.product(*axes)))


# Affine coefficient functions. They accept ``mu`` of shape (..., d) and
# return (..., Q); they are looked up by problem name when a reduced model
# is reloaded without its full-order operators.

def diffusion2d_operator_coefficients(mu):
    mu = np.asarray(mu, dtype=float)
    one = np.ones(mu.shape[:-1])
    return np.stack([one, mu[..., 0], one, mu[..., 1]], axis=-1)


def diffusion2d_rhs_coefficients(mu):
    mu = np.asarray(mu, dtype=float)
    return np.ones(mu.shape[:-1] + (1,))


AFFINE_COEFFICIENTS = {
    "diffusion2d": (diffusion2d_operator_coefficients, diffusion2d_rhs_coefficients),
}


@dataclass
class AffineProblem:
    """``L(mu) = sum_q coeff_q(mu) terms[q]`` and ``f(mu) = sum_r rhs_coeff_r(mu) rhs_terms[r]``."""

    name: str
    grid: object
    domain: ParameterDomain
    terms: list = field(repr=False)
    coeff: object = field(repr=False)
    rhs_terms: list = field(repr=False)
    rhs_coeff: object = field(repr=False)

    @property
    def n_terms(self):
        return len(self.terms)

    @property
    def n_rhs_terms(self):
        return len(self.rhs_terms)

    @property
    def size(self):
        return self.terms[0].shape[0]

    def assemble(self, mu):
        a = self.coeff(np.asarray(mu, dtype=float))
        L = a[0] * self.terms[0]
        for aq, Lq in zip(a[1:], self.terms[1:]):
            L = L + aq * Lq
        return L

    def rhs(self, mu):
        b = self.rhs_coeff(np.asarray(mu, dtype=float))
        return sum(br * fr for br, fr in zip(b, self.rhs_terms))


def build_diffusion2d(grid, domain=None):
    """``(1 + mu1 x) u_xx + (1 + mu2 y) u_yy = exp(4xy)`` with zero Dirichlet data.

    Terms are ``[dxx, diag(x) dxx, dyy, diag(y) dyy]`` restricted to the
    interior; ``coeff(mu) = (1, mu1, 1, mu2)``.
    """
    if not isinstance(grid, Grid2D):
        grid = Grid2D.build(grid)
    domain = domain or ParameterDomain(*DIFFUSION_DOMAIN)
    idx = grid.interior_index
    Dxx = kron(grid.gx.diff(2), np.eye(grid.gy.n_pts))[np.ix_(idx, idx)]
    Dyy = kron(np.eye(grid.gx.n_pts), grid.gy.diff(2))[np.ix_(idx, idx)]
    xy = grid.coordinates()
    x, y = xy[:, 0], xy[:, 1]
    terms = [Dxx, x[:, None] * Dxx, Dyy, y[:, None] * Dyy]
    op, rhs = AFFINE_COEFFICIENTS["diffusion2d"]
    return AffineProblem("diffusion2d", grid, domain, terms, op, [np.exp(4.0 * x * y)], rhs)


def manufactured_burgers_solution(x):
    """Default manufactured profile ``(1 - x^2) sin(pi x)``."""
    return (1.0 - x**2) * np.sin(np.pi * x)


@dataclass
class NonlinearProblem:
    """Interior-restricted 1D viscous Burgers problem ``u u_x - mu u_xx = f(mu)``.

    The forcing is affine in the viscosity: ``f(mu) = g - mu * h``.
    """

    name: str
    grid: Grid1D
    domain: ParameterDomain
    D: np.ndarray = field(repr=False)
    D2: np.ndarray = field(repr=False)
    forcing_base: np.ndarray = field(repr=False)
    forcing_slope: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.D.shape[0]

    def rhs(self, mu):
        mu = float(np.atleast_1d(mu)[0])
        return self.forcing_base - mu * self.forcing_slope

    def residual(self, u, mu):
        mu = float(np.atleast_1d(mu)[0])
        return u * (self.D @ u) - mu * (self.D2 @ u) - self.rhs(mu)


def build_burgers1d(grid, rhs_spec="fixed", domain=None, solution=manufactured_burgers_solution,
                    reference_mu=1.0):
    """Viscous Burgers problem on a Chebyshev grid.

    ``rhs_spec`` selects the forcing:

    - ``"fixed"``: the forcing that makes ``solution`` exact at
      ``reference_mu``, held fixed for every viscosity (the solution then
      genuinely varies with ``mu``);
    - ``"manufactured"``: the forcing that makes ``solution`` exact at
      every ``mu``;
    - an array of interior nodal values used verbatim for every ``mu``.

    Forcing from a profile is computed with the discrete operators, so the
    profile is an exact discrete solution.
    """
    if not isinstance(grid, Grid1D):
        grid = Grid1D.build(grid)
    if grid.n_pts < 8:
        raise ValueError(f"Burgers grid needs at least 8 nodes, got {grid.n_pts}")
    domain = domain or ParameterDomain(*BURGERS_DOMAIN)
    D = grid.diff(1)
    D2 = D @ D
    inner = slice(1, -1)
    if isinstance(rhs_spec, str):
        u = solution(grid.points)
        u[0] = u[-1] = 0.0
        g = (u * (D @ u))[inner]
        h = (D2 @ u)[inner]
        if rhs_spec == "manufactured":
            base, slope = g, h
        elif rhs_spec == "fixed":
            base, slope = g - reference_mu * h, np.zeros_like(h)
        else:
            raise ValueError(f"unknown rhs_spec {rhs_spec!r}")
    else:
        base = np.asarray(rhs_spec, dtype=float)
        if base.shape != (grid.n_interior,):
            raise ValueError(f"nodal forcing must have {grid.n_interior} interior values")
        slope = np.zeros_like(base)
    return NonlinearProblem("burgers1d", grid, domain, D[inner, inner], D2[inner, inner], base, slope)


def build_problem(name, nx, **kwargs):
    """Build a problem by name (``"diffusion2d"`` or ``"burgers1d"``)."""
    if name == "diffusion2d":
        return build_diffusion2d(Grid2D.build(nx), **kwargs)
    if name == "burgers1d":
        return build_burgers1d(Grid1D.build(nx), **kwargs)
    raise ValueError(f"unknown problem {name!r}")
