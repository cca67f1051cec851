"""Analytical preconditioners for parametrized collocation operators.

Four kinds are supported:

``none``
    ``P = I``.
``center``
    ``P = L(mu_c)^{-1}`` with ``mu_c`` the center of the parameter box.
``interp_q1``
    Multilinear (Q1) interpolation of the corner inverses
    ``P(mu) = sum_i w_i(mu) L(mu_{V_i})^{-1}``.
``interp_q1_diag``
    Same weights, with each corner inverse replaced by the inverse of the
    corner operator's diagonal.

Inverses are never formed; factorizations are stored and applied
action by action. Every kind is affine in ``mu`` through its weights, so
``P(mu) L(mu)`` expands into ``Q_P * Q_a`` parameter-independent terms.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SingularMatrixError
from .numerics import factor
from .problem import center, corners, normalize

KINDS = ("none", "center", "interp_q1", "interp_q1_diag")
CLI_NAMES = {"none": "none", "center": "center", "interp": "interp_q1", "interp-diag": "interp_q1_diag"}


def canonical_kind(kind):
    kind = CLI_NAMES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown preconditioner {kind!r}; expected one of {sorted(CLI_NAMES)}")
    return kind


def q1_weights(mu_hat, d=None):
    """Tensor-product Q1 weights in the corner order of :func:`problem.corners`.

    ``mu_hat`` has shape ``(..., d)`` with entries in [0, 1]; the result has
    shape ``(..., 2**d)`` and sums to one along the last axis.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    if mu_hat.ndim == 0:
        mu_hat = mu_hat[None]
    d = mu_hat.shape[-1] if d is None else d
    if mu_hat.shape[-1] != d:
        raise ValueError(f"expected {d} unit-box coordinates, got {mu_hat.shape[-1]}")
    if np.any(mu_hat < 0.0) or np.any(mu_hat > 1.0):
        raise ValueError("Q1 weights need coordinates inside the unit box")
    w = np.ones(mu_hat.shape[:-1] + (1,))
    for k in range(d):
        t = mu_hat[..., k : k + 1]
        pair = np.concatenate([1.0 - t, t], axis=-1)
        w = (w[..., :, None] * pair[..., None, :]).reshape(mu_hat.shape[:-1] + (-1,))
    return w


def block_weights(kind, domain, mu):
    """Weights of the ``Q_P`` preconditioner blocks at ``mu`` (shape ``(..., Q_P)``)."""
    mu = np.asarray(mu, dtype=float)
    if kind in ("none", "center"):
        return np.ones(mu.shape[:-1] + (1,))
    return q1_weights(normalize(domain, mu), domain.dim)


@dataclass
class PreconditionerData:
    kind: str
    domain: object
    factors: list = field(default_factory=list, repr=False)
    inv_diags: list = field(default_factory=list, repr=False)

    @property
    def n_blocks(self):
        return 1 if self.kind in ("none", "center") else 2**self.domain.dim

    def weights(self, mu):
        return block_weights(self.kind, self.domain, mu)

    def apply_block(self, i, target):
        """Apply the i-th parameter-independent block ``P_i`` to ``target``."""
        target = np.asarray(target, dtype=float)
        if self.kind == "none":
            return target.copy()
        if self.kind == "interp_q1_diag":
            d = self.inv_diags[i]
            return d[:, None] * target if target.ndim == 2 else d * target
        return self.factors[i].solve(target)


def build(spec, problem):
    """Factor the operators the preconditioner needs (a one-time offline cost)."""
    kind = canonical_kind(spec)
    data = PreconditionerData(kind, problem.domain)
    if kind == "none":
        return data
    points = [center(problem.domain)] if kind == "center" else corners(problem.domain)
    for mu in points:
        L = problem.assemble(mu)
        if kind == "interp_q1_diag":
            diag = np.diag(L)
            if np.any(diag == 0.0):
                raise SingularMatrixError(f"operator at mu={mu.tolist()} has a zero diagonal entry")
            data.inv_diags.append(1.0 / diag)
        else:
            try:
                data.factors.append(factor(L))
            except SingularMatrixError as exc:
                raise SingularMatrixError(f"operator at mu={mu.tolist()} is singular: {exc}", exc.pivot) from exc
    return data


def apply(data, mu, target):
    """Compute ``P(mu) @ target`` for a vector or matrix ``target``."""
    target = np.asarray(target, dtype=float)
    w = data.weights(np.atleast_1d(np.asarray(mu, dtype=float)))
    out = np.zeros_like(target)
    for i, wi in enumerate(w):
        if wi != 0.0:
            out += wi * data.apply_block(i, target)
    return out


def preconditioned_affine_terms(data, problem):
    """Affine expansion of ``P(mu) L(mu)`` and ``P(mu) f(mu)``.

    Returns ``(terms, coeff, rhs_terms, rhs_coeff)``. ``terms[i * Q_a + q]``
    is ``P_i L_q`` and ``coeff(mu)[i * Q_a + q] = w_i(mu) a_q(mu)``; the
    right-hand side expansion is laid out the same way. Dense products are
    formed, so this is meant for moderate grid sizes.
    """
    terms = [data.apply_block(i, Lq) for i in range(data.n_blocks) for Lq in problem.terms]
    rhs_terms = [data.apply_block(i, fr) for i in range(data.n_blocks) for fr in problem.rhs_terms]
    return terms, preconditioned_coefficients(data, problem.coeff), rhs_terms, \
        preconditioned_coefficients(data, problem.rhs_coeff)


def preconditioned_coefficients(data, coeff):
    """Coefficient closure ``mu -> kron(w(mu), coeff(mu))`` (batched over leading axes)."""
    kind, domain = data.kind, data.domain

    def theta(mu):
        mu = np.asarray(mu, dtype=float)
        w = block_weights(kind, domain, mu)
        a = coeff(mu)
        return (w[..., :, None] * a[..., None, :]).reshape(mu.shape[:-1] + (-1,))

    return theta
