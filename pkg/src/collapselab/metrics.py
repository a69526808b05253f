"""Collapse diagnostics: nearest-neighbor entropy, generalization score,
mean nearest-neighbor distance, Gaussian moments, and the Frechet distance
between moment summaries.

The entropy estimator is the gamma-th nearest-neighbor form

    H(D) = psi(n) - psi(gamma) + log c_d + (d/n) * sum_x log eps_gamma(x)

where eps_gamma(x) is the distance from x to its gamma-th neighbor within
D and c_d is the unit-ball volume. Duplicate points drive eps to zero, so
distances below EPS_FLOOR are clamped and counted: collapse shows up as a
crashing estimate plus a rising duplicate count rather than -inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionError,
    DomainError,
    EmptyDatasetError,
    InsufficientPointsError,
    NumericalError,
)
from .neighbors import kth_nn_within, nn_cross
from .specfun import digamma, log_unit_ball_volume
from .tensorset import DistanceMetric, PointSet

EPS_FLOOR = 1e-12
_EIG_TOL = -1e-9


def _assemble_estimate(size: int, dim: int, gamma: int, log_distance_sum: float) -> float:
    return digamma(size) - digamma(gamma) + log_unit_ball_volume(dim) + (dim / size) * log_distance_sum


@dataclass(frozen=True)
class EntropyReport:
    """Entropy estimate plus the pieces needed to rebuild and audit it."""

    estimate: float
    gamma: int
    duplicate_count: int
    log_distance_sum: float
    size: int
    dim: int

    def reconstruct(self) -> float:
        """Re-evaluate the estimate from the stored fields (bit-identical)."""
        return _assemble_estimate(self.size, self.dim, self.gamma, self.log_distance_sum)


def kl_entropy(ps: PointSet, gamma: int = 1, metric: DistanceMetric = DistanceMetric()) -> EntropyReport:
    if not isinstance(gamma, int) or isinstance(gamma, bool) or gamma < 1:
        raise DomainError(f"gamma must be a positive integer, got {gamma!r}")
    if ps.size <= gamma:
        raise InsufficientPointsError(f"entropy with gamma={gamma} needs at least {gamma + 1} points, got {ps.size}")
    res = kth_nn_within(ps, gamma, metric)
    eps = res.distances
    clamped = eps < EPS_FLOOR
    duplicate_count = int(np.count_nonzero(clamped))
    log_sum = float(np.log(np.where(clamped, EPS_FLOOR, eps)).sum())
    dim = metric.feature_map.output_dim(ps.dim)
    return EntropyReport(
        estimate=_assemble_estimate(ps.size, dim, gamma, log_sum),
        gamma=gamma,
        duplicate_count=duplicate_count,
        log_distance_sum=log_sum,
        size=ps.size,
        dim=dim,
    )


def generalization_score(generated: PointSet, training: PointSet, metric: DistanceMetric = DistanceMetric()) -> float:
    """Mean distance from each generated point to its nearest training point.

    Zero means every generated point coincides with a training point: pure
    memorization. Self-matches are not excluded by design.
    """
    if generated.size == 0:
        raise EmptyDatasetError("generated set is empty")
    if training.size == 0:
        raise EmptyDatasetError("training set is empty")
    if generated.dim != training.dim:
        raise DimensionError(f"generated dimension {generated.dim} != training dimension {training.dim}")
    res = nn_cross(generated, training, metric)
    return float(res.distances.mean())


def mnnd(ps: PointSet, metric: DistanceMetric = DistanceMetric()) -> float:
    """Mean nearest-neighbor distance within a set, self excluded."""
    if ps.size < 2:
        raise InsufficientPointsError(f"mean neighbor distance needs at least 2 points, got {ps.size}")
    res = kth_nn_within(ps, 1, metric)
    return float(res.distances.mean())


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Mean vector and maximum-likelihood (1/n) covariance."""

    mean: np.ndarray
    covariance: np.ndarray
    trace_cov: float


def moment_summary(ps: PointSet) -> MomentSummary:
    if ps.size < 2:
        raise InsufficientPointsError(f"moment summary needs at least 2 points, got {ps.size}")
    mean = ps.data.mean(axis=0)
    centered = ps.data - mean
    cov = centered.T @ centered / ps.size
    cov = (cov + cov.T) / 2.0
    mean.setflags(write=False)
    cov.setflags(write=False)
    return MomentSummary(mean=mean, covariance=cov, trace_cov=float(np.trace(cov)))


def _psd_eigvals(cov: np.ndarray, side: str) -> np.ndarray:
    w = np.linalg.eigvalsh(cov)
    if w.min() < _EIG_TOL:
        raise NumericalError(f"{side} covariance is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return np.clip(w, 0.0, None)


def frechet_gaussian_distance(a: MomentSummary, b: MomentSummary) -> float:
    """Frechet distance between the Gaussians defined by two moment summaries.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the matrix
    square root taken through the symmetric eigendecomposition of
    S_a^{1/2} S_b S_a^{1/2}. Eigenvalues below -1e-9 are an error; tiny
    negatives from roundoff clamp to zero.
    """
    if a.mean.shape != b.mean.shape:
        raise DimensionError(f"moment summaries of dimension {a.mean.shape[0]} vs {b.mean.shape[0]}")
    wa, va = np.linalg.eigh(a.covariance)
    if wa.min() < _EIG_TOL:
        raise NumericalError(f"first covariance is not positive semidefinite (min eigenvalue {wa.min():.3e})")
    _psd_eigvals(b.covariance, "second")
    root_a = (va * np.sqrt(np.clip(wa, 0.0, None))) @ va.T
    inner = root_a @ b.covariance @ root_a
    inner = (inner + inner.T) / 2.0
    wm = np.linalg.eigvalsh(inner)
    if wm.min() < _EIG_TOL:
        raise NumericalError(f"cross term is not positive semidefinite (min eigenvalue {wm.min():.3e})")
    wm = np.clip(wm, 0.0, None)
    mean_term = float(np.square(a.mean - b.mean).sum())
    value = mean_term + float(np.trace(a.covariance) + np.trace(b.covariance)) - 2.0 * float(np.sqrt(wm).sum())
    return max(value, 0.0)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"series of length {x.size} vs {y.size}")
    if x.size < 2:
        raise InsufficientPointsError(f"correlation needs at least 2 points, got {x.size}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.square(xc).sum())
    syy = float(np.square(yc).sum())
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("correlation of a constant series is undefined")
    r = float(np.dot(xc, yc)) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))
