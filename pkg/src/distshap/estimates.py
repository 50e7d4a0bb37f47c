"""Result containers and Monte-Carlo control knobs shared by the estimators."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidParameterError


@dataclass
class MCControls:
    """Two-level early-stopping thresholds for the sampled estimators.

    ``max_inner`` caps the per-term draws; the inner loop stops once the
    running mean's relative change drops to ``rho1``, the outer sum once the
    cumulative value's relative change drops to ``rho2``.
    """

    max_inner: int = 10000
    rho1: float = 0.01
    rho2: float = 0.005

    def __post_init__(self):
        if self.max_inner < 1:
            raise InvalidParameterError("max_inner must be at least 1")
        for name in ("rho1", "rho2"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise InvalidParameterError(f"{name} must lie in (0, 1)")


@dataclass
class BoundParams:
    """Concentration constants for the closed-form value bounds.

    ``C`` and ``c`` depend only on the sub-Gaussian norm of the inputs and
    default to 1. ``rho`` is the relative-change threshold for the early stop
    of the classification lower-bound sum.
    """

    C: float = 1.0
    c: float = 1.0
    rho: float = 0.005

    def __post_init__(self):
        if self.C <= 0 or self.c <= 0:
            raise InvalidParameterError("C and c must be strictly positive")
        if not (0.0 < self.rho < 1.0):
            raise InvalidParameterError("rho must lie in (0, 1)")


@dataclass
class ValueEstimate:
    """A point value with its Monte-Carlo standard error and convergence metadata.

    ``inner_iters_used`` records the draws consumed per summation term (0 for
    terms skipped entirely); ``truncated_at_j`` is the term index at which the
    outer early stop fired, or None if the whole sum was evaluated.
    """

    value: float
    std_error: float
    inner_iters_used: list = field(default_factory=list)
    truncated_at_j: int | None = None

    def __post_init__(self):
        if self.std_error < 0:
            raise InvalidParameterError("std_error must be nonnegative")


@dataclass
class BoundsResult:
    """A lower/upper value bound pair.

    Iterating yields ``(lower, upper)`` so the result unpacks like a tuple.
    ``skipped_terms`` counts summation indices dropped because the
    concentration deviation reached 1 (the bound is vacuous there);
    ``stopped_at_j`` is the index where the early stop fired, if any.
    """

    lower: float
    upper: float
    skipped_terms: int = 0
    stopped_at_j: int | None = None

    def __iter__(self):
        yield self.lower
        yield self.upper
