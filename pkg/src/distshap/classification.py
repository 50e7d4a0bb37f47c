"""Distributional Shapley bounds for binary classification via the IRLS transform.

A logistic model is fitted by iteratively reweighted least squares; each
datum is then mapped to its working response and weight, after which the
weighted point is valued with the sub-Gaussian regression bounds (the
working-response model has unit conditional variance, so no noise estimate
is needed). Only the lower bound is recommended for ranking; the upper
bound is exposed for comparison but ranks poorly in practice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidParameterError,
    NotConvergedError,
    SaturationError,
    SingularMatrixError,
)
from .estimates import BoundParams, BoundsResult
from .numerics import SpdMatrix, estimate_second_moment, inv_logit, mahalanobis_sq

__all__ = [
    "IRLSState",
    "BinaryPointQuery",
    "irls_fit",
    "transform_query",
    "estimate_weighted_second_moment",
    "dshapley_binary_bounds",
]

_WEIGHT_FLOOR = 1e-10


@dataclass
class IRLSState:
    """Outcome of an IRLS logistic fit."""

    beta: np.ndarray
    iterations: int
    converged: bool
    final_step_norm: float


@dataclass
class BinaryPointQuery:
    """A labelled datum mapped to its working-response statistics.

    ``pi_star`` is the fitted class-1 probability, ``w_star`` its variance
    weight, ``z_star`` the working response, ``e2_b`` the weighted squared
    error and ``d_tilde`` the weighted Mahalanobis statistic driving the
    value bounds.
    """

    x_star: np.ndarray
    y_star: int
    pi_star: float
    w_star: float
    z_star: float
    e2_b: float
    d_tilde: float

    def __post_init__(self):
        self.x_star = np.asarray(self.x_star, dtype=float)
        if self.y_star not in (0, 1):
            raise InvalidParameterError("y_star must be 0 or 1")
        if not (0.0 < self.w_star <= 0.25):
            raise InvalidParameterError("w_star must lie in (0, 0.25]")
        if self.e2_b < 0 or self.d_tilde < 0:
            raise InvalidParameterError("e2_b and d_tilde must be nonnegative")


def irls_fit(x, y, tol: float = 1e-8, max_iter: int = 100) -> IRLSState:
    """Fit logistic-regression coefficients by iteratively reweighted least squares.

    Iterates the weighted normal equations on the working responses until the
    relative step norm drops to ``tol``. Equals the maximum-likelihood
    estimate at convergence. Separable data never converge (the MLE does not
    exist); the returned state then has ``converged=False`` and a growing
    coefficient norm.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = x.shape
    if n <= p:
        raise InsufficientDataError(f"need more than p={p} samples, got {n}")
    classes = np.unique(y)
    if not np.array_equal(classes, [0.0, 1.0]):
        if classes.size < 2:
            raise InvalidParameterError("both classes must be present")
        raise InvalidParameterError("labels must be 0/1")

    beta = np.zeros(p)
    step = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = x @ beta
        pi = inv_logit(eta)
        w = np.maximum(pi * (1.0 - pi), _WEIGHT_FLOOR)
        z = eta + (y - pi) / w
        wx = w[:, None] * x
        try:
            beta_new = np.linalg.solve(x.T @ wx, wx.T @ z)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"weighted normal equations are singular: {exc}") from exc
        step = float(np.linalg.norm(beta_new - beta) / (1.0 + np.linalg.norm(beta_new)))
        beta = beta_new
        if step <= tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"IRLS did not converge in {max_iter} iterations "
            f"(coefficient norm {np.linalg.norm(beta):.3g}, still moving); "
            "the data may be separable", stacklevel=2)
    return IRLSState(beta=beta, iterations=it, converged=converged, final_step_norm=step)


def estimate_weighted_second_moment(x, beta, ridge: float = 0.0) -> SpdMatrix:
    """Uncentered second moment of the weight-scaled inputs ``sqrt(w) * x``.

    Weights are the fitted variance weights ``pi (1 - pi)`` at ``beta``.
    """
    x = np.asarray(x, dtype=float)
    pi = inv_logit(x @ np.asarray(beta, dtype=float))
    w = pi * (1.0 - pi)
    return estimate_second_moment(np.sqrt(w)[:, None] * x, ridge)


def transform_query(x_star, y_star, state: IRLSState, sigma_tilde_inv: SpdMatrix,
                    *, clamp_weight: bool = False) -> BinaryPointQuery:
    """Map a labelled datum to its working-response query.

    Refuses to proceed on a non-converged fit (the transformed quantities
    are meaningless when the MLE diverges). A probability that saturates to
    numerically 0 or 1 raises ``SaturationError`` unless ``clamp_weight``
    opts into flooring the weight at 1e-12.
    """
    if not state.converged:
        raise NotConvergedError("transform requires a converged IRLS fit")
    if y_star not in (0, 1):
        raise InvalidParameterError("y_star must be 0 or 1")
    x_star = np.asarray(x_star, dtype=float)
    eta = float(x_star @ state.beta)
    pi = inv_logit(eta)
    w = pi * (1.0 - pi)
    if w <= 0.0:
        if not clamp_weight:
            raise SaturationError(
                f"fitted probability saturated (linear predictor {eta:.3g})")
        w = 1e-12
    z = eta + (y_star - pi) / w
    e2_b = (y_star - pi) ** 2 / w
    d_tilde = w * mahalanobis_sq(x_star, sigma_tilde_inv)
    return BinaryPointQuery(x_star=x_star, y_star=int(y_star), pi_star=pi,
                            w_star=w, z_star=z, e2_b=e2_b, d_tilde=d_tilde)


def dshapley_binary_bounds(query: BinaryPointQuery, m: int, q: int,
                           params: BoundParams | None = None) -> BoundsResult:
    """Deterministic lower/upper value bounds for a transformed binary datum.

    Same envelope construction as the regression bounds at zero ridge, with
    the conditional variance fixed at 1 by the working-response model.
    Summation runs until the running lower bound's relative change drops to
    ``params.rho``; indices with vacuous concentration (deviation >= 1) are
    skipped and counted.
    """
    params = params if params is not None else BoundParams()
    p = query.x_star.shape[0]
    if q < p + 3:
        raise InvalidParameterError(f"binary bounds need q >= p + 3, got q={q}, p={p}")
    js = np.arange(q - 1, m, dtype=float)
    if js.size == 0:
        return BoundsResult(lower=0.0, upper=0.0, skipped_terms=0)

    delta = (params.C * np.sqrt(p) + np.sqrt(np.log(js * m) / (2.0 * params.c))) / np.sqrt(js)
    valid = delta < 1.0
    skipped = int(np.count_nonzero(~valid))
    if not valid.any():
        return BoundsResult(lower=0.0, upper=0.0, skipped_terms=skipped)

    js_v, delta_v = js[valid], delta[valid]
    env_up = 1.0 / (js_v * (1.0 - delta_v) ** 2)
    env_lo = 1.0 / (js_v * (1.0 + delta_v) ** 2)
    t, e2b = query.d_tilde, query.e2_b
    ratio = ((1.0 + t * env_lo) / (1.0 + t * env_up)) ** 2
    lower_terms = t * env_lo ** 2 / (1.0 + t * env_up) ** 2 * ((2.0 + t * env_lo) - e2b / ratio)
    upper_terms = t * env_up ** 2 / (1.0 + t * env_lo) ** 2 * ((2.0 + t * env_up) - ratio * e2b)

    running = np.cumsum(lower_terms) / m
    prev = running[:-1]
    cur = running[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(prev / cur - 1.0)
    ok = (cur != 0.0) & (rel <= params.rho)
    if ok.any():
        k = int(np.argmax(ok)) + 2
        stopped_at = int(js_v[k - 1])
    else:
        k = js_v.size
        stopped_at = None
    return BoundsResult(lower=float(np.sum(lower_terms[:k]) / m),
                        upper=float(np.sum(upper_terms[:k]) / m),
                        skipped_terms=skipped,
                        stopped_at_j=stopped_at)
