"""Seedable randomness and the small SPD linear-algebra kernel shared by every estimator.

All operations here are pure given their inputs. Parallel Monte-Carlo work
should be partitioned by stream so results do not depend on scheduling.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidParameterError, RankDeficiencyError, SingularMatrixError

__all__ = [
    "RandomStream",
    "SpdMatrix",
    "sample_chi_squared",
    "spd_inverse",
    "estimate_second_moment",
    "mahalanobis_sq",
    "inv_logit",
]


class RandomStream:
    """Reproducible random source keyed by ``(seed, stream_id)``.

    Identical ``(seed, stream_id)`` pairs replay bit-identical draw
    sequences; distinct stream ids give statistically independent
    sequences. :meth:`substream` derives further independent streams
    (one per valued point, grid entry, repetition, ...) so parallel
    work stays reproducible regardless of execution order.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(i) for i in _path)
        self._generator = None

    @property
    def generator(self) -> np.random.Generator:
        """The underlying generator, created lazily on first use."""
        if self._generator is None:
            key = (self.stream_id,) + self._path
            self._generator = np.random.default_rng(
                np.random.SeedSequence(self.seed, spawn_key=key)
            )
        return self._generator

    def substream(self, index: int) -> "RandomStream":
        """Independent child stream identified by ``index``."""
        return RandomStream(self.seed, self.stream_id, self._path + (int(index),))

    def __repr__(self):
        path = "".join(f".{i}" for i in self._path)
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}{path})"


def sample_chi_squared(k: int, rng: RandomStream, size=None):
    """Draw from the chi-squared distribution with ``k`` degrees of freedom.

    Sampling goes through the Gamma(k/2, scale=2) equivalence provided by
    the generator. Returns a float when ``size`` is None, otherwise an array.
    """
    if k < 1:
        raise InvalidParameterError("degrees of freedom must be a positive integer")
    draws = rng.generator.chisquare(k, size=size)
    return float(draws) if size is None else draws


def _cholesky_lower(matrix: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor via LAPACK, raising with the failing pivot index."""
    factor, info = lapack.dpotrf(matrix, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise SingularMatrixError(
            "matrix is not positive definite", pivot=int(info)
        )
    if info < 0:
        raise InvalidParameterError(f"illegal value in Cholesky argument {-info}")
    return factor


class SpdMatrix:
    """A symmetric positive definite matrix with a cached Cholesky factor.

    Symmetry is required to within 1e-12 relative tolerance and the
    factorization must succeed. Construct with ``validate=False`` only when
    the caller takes responsibility for those invariants.
    """

    _SYM_RTOL = 1e-12

    def __init__(self, values, validate: bool = True):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InvalidParameterError("SpdMatrix requires a square 2-d array")
        self.values = values
        self._chol = None
        if validate:
            scale = np.linalg.norm(values)
            asym = np.linalg.norm(values - values.T)
            if scale > 0 and asym > self._SYM_RTOL * scale:
                raise InvalidParameterError(
                    f"matrix is not symmetric (relative asymmetry {asym / scale:.3e})"
                )
            self._chol = _cholesky_lower(values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def cholesky(self) -> np.ndarray:
        if self._chol is None:
            self._chol = _cholesky_lower(self.values)
        return self._chol

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


def spd_inverse(matrix: SpdMatrix, jitter: float = 0.0) -> SpdMatrix:
    """Invert an SPD matrix by Cholesky factorization.

    A failing factorization is retried once with a jitter of
    ``1e-10 * trace / p`` added to the diagonal; small empirical second
    moments can sit right at the edge of positive definiteness.
    """
    values = matrix.values if isinstance(matrix, SpdMatrix) else np.asarray(matrix, float)
    p = values.shape[0]
    if jitter:
        values = values + jitter * np.eye(p)
    try:
        factor = _cholesky_lower(values)
    except SingularMatrixError:
        retry = 1e-10 * np.trace(values) / p
        factor = _cholesky_lower(values + retry * np.eye(p))
    inv, info = lapack.dpotri(factor, lower=1)
    if info != 0:
        raise SingularMatrixError("Cholesky inverse failed", pivot=int(abs(info)))
    # dpotri fills one triangle only
    inv = np.tril(inv) + np.tril(inv, -1).T
    return SpdMatrix(inv)


def estimate_second_moment(samples, ridge: float = 0.0) -> SpdMatrix:
    """Uncentered second moment ``(1/N) sum_i x_i x_i^T + ridge * I``.

    Requires at least ``p`` samples when ``ridge`` is zero; the result must
    be positive definite, which holds whenever the samples span R^p or the
    ridge is positive.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise InvalidParameterError("samples must form an (N, p) array")
    n, p = x.shape
    if ridge < 0:
        raise InvalidParameterError("ridge must be nonnegative")
    if ridge == 0.0 and n < p:
        raise RankDeficiencyError(
            f"{n} samples cannot identify a {p}-dimensional second moment without a ridge"
        )
    moment = (x.T @ x) / n + ridge * np.eye(p)
    # exact symmetrization guards against accumulation asymmetry
    moment = 0.5 * (moment + moment.T)
    return SpdMatrix(moment)


def mahalanobis_sq(x, sigma_inv: SpdMatrix) -> float:
    """Quadratic form ``x^T sigma_inv x`` (squared Mahalanobis distance from zero)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != sigma_inv.dim:
        raise InvalidParameterError(
            f"dimension mismatch: vector of length {x.shape} vs matrix dim {sigma_inv.dim}"
        )
    return max(float(x @ sigma_inv.values @ x), 0.0)


def inv_logit(t):
    """Numerically stable sigmoid ``exp(t) / (1 + exp(t))``.

    Saturates to 0 or 1 for very large ``|t|`` instead of overflowing;
    accepts scalars or arrays.
    """
    arr = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(arr))
    out = np.where(arr >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if np.ndim(t) == 0:
        return float(out)
    return out
