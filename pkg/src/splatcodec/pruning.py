"""Preparation-stage pruning: importance thresholding and geometry tails.

Pruning removes whole Gaussians before encoding; all six attribute groups
stay row-aligned throughout. Starting from N Gaussians, importance pruning
at theta1 percent followed by per-axis tail pruning at theta2 percent leaves

    floor-composed N * (1 - theta1/100) * (1 - theta2/100)^3

primitives, evaluated with an integer floor at each of the four steps. The
post-pruning fine-tuning that normally compensates the quality loss needs a
differentiable renderer and is outside this codec; pruned models remain
directly encodable.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .fitting import fit_laplace
from .model import GaussianCloud


def _check_percent(value: float, name: str) -> None:
    if not 0.0 <= value < 100.0:
        raise ValidationError(f"{name} must be in [0, 100), got {value}")


def importance_prune(cloud: GaussianCloud, scores: np.ndarray, theta1: float) -> GaussianCloud:
    """Drop the floor(N * theta1/100) lowest-scoring Gaussians.

    Ties break on the original index: among equal scores, lower indices are
    pruned first. theta1 = 0 returns the cloud unchanged.
    """
    _check_percent(theta1, "theta1")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size != cloud.count:
        raise ValueError(f"scores length {scores.size} != cloud count {cloud.count}")
    k = int(cloud.count * theta1 / 100.0)
    if k == 0:
        return cloud
    drop = np.argsort(scores, kind="stable")[:k]
    keep = np.ones(cloud.count, dtype=bool)
    keep[drop] = False
    return cloud.filtered(keep)


def proxy_importance(cloud: GaussianCloud) -> np.ndarray:
    """Built-in stand-in importance score: sigmoid(opacity) * exp(sum log-scales).

    This approximates "how much does this Gaussian cover and show" without a
    renderer; it is NOT the render-based scoring used to produce published
    pruning results. Pass externally computed scores to importance_prune for
    that (the CLI reads them from a sidecar file).
    """
    opacity = cloud.opacity[:, 0].astype(np.float64)
    log_volume = cloud.scaling.astype(np.float64).sum(axis=1)
    # sigmoid via exp of negative magnitude, stable for |opacity| large
    sig = np.where(opacity >= 0, 1.0 / (1.0 + np.exp(-opacity)),
                   np.exp(np.minimum(opacity, 0.0)) / (1.0 + np.exp(np.minimum(opacity, 0.0))))
    return sig * np.exp(log_volume)


def geometry_prune(cloud: GaussianCloud, theta2: float) -> GaussianCloud:
    """Per-axis tail pruning of positions far from the scene center.

    Coordinates are first centered on the per-axis median; then for x, y, z
    in turn, the floor(current_N * theta2/100) Gaussians with the largest
    |centered coordinate| on that axis are removed. theta2 is meant to be
    small (tails only); theta2 = 0 is the identity.
    """
    _check_percent(theta2, "theta2")
    if theta2 == 0.0 or cloud.count == 0:
        return cloud
    centered = cloud.geometry.astype(np.float64) - np.median(
        cloud.geometry.astype(np.float64), axis=0
    )
    alive = np.arange(cloud.count)
    for axis in range(3):
        n = alive.size
        k = int(n * theta2 / 100.0)
        if k == 0:
            continue
        mag = np.abs(centered[alive, axis])
        drop = np.argsort(-mag, kind="stable")[:k]
        keep = np.ones(n, dtype=bool)
        keep[drop] = False
        alive = alive[keep]
    mask = np.zeros(cloud.count, dtype=bool)
    mask[alive] = True
    return cloud.filtered(mask)


def rectify_shac(cloud: GaussianCloud, tail_prob: float = 1e-4) -> GaussianCloud:
    """Clamp each SH AC channel to the fitted Laplace's central quantile band.

    Each channel is clipped to mu +/- b*ln(1/(2*tail_prob)), i.e. the
    [tail_prob, 1 - tail_prob] quantiles of its fitted Laplace. Squeezing the
    extreme outliers narrows the channel range and therefore the min-max
    quantization step; values already inside the band are untouched.
    """
    if not 0.0 < tail_prob <= 0.01:
        raise ValidationError(f"tail_prob must be in (0, 0.01], got {tail_prob}")
    if cloud.count < 2:
        return cloud
    sh_ac = cloud.sh_ac.copy()
    half_width = np.log(1.0 / (2.0 * tail_prob))
    for c in range(sh_ac.shape[1]):
        params = fit_laplace(sh_ac[:, c])
        lo = np.float32(params.mu - params.b * half_width)
        hi = np.float32(params.mu + params.b * half_width)
        np.clip(sh_ac[:, c], lo, hi, out=sh_ac[:, c])
    return GaussianCloud(
        geometry=cloud.geometry,
        rotation=cloud.rotation,
        scaling=cloud.scaling,
        opacity=cloud.opacity,
        sh_dc=cloud.sh_dc,
        sh_ac=sh_ac,
    )


def pruned_count(n: int, theta1: float, theta2: float) -> int:
    """The exact survivor count of importance_prune + geometry_prune.

    Sequential integer contract: each stage removes floor(current * theta/100).
    """
    n -= int(n * theta1 / 100.0)
    for _ in range(3):
        n -= int(n * theta2 / 100.0)
    return n
