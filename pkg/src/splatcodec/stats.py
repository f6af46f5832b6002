"""Histogram, Shannon entropy, and normalized mutual information.

NMI(X, Y) = 2 I(X;Y) / (H(X) + H(Y)) over a joint histogram, in [0, 1]:
1 means perfect dependence, 0 independence. Channel pairs in a splat model
are overwhelmingly near 0 (apart from color-space ties between matching SH
coefficients), which is what justifies coding every channel on its own.

All logs are base 2 so entropies read as bits per sample. Entropy and MI
terms are summed with math.fsum, so results are independent of summation
order (in particular nmi(x, y) == nmi(y, x) bit-exactly).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import AttributeGroup, GaussianCloud, channel

DEFAULT_NMI_BINS = 256


@dataclass(frozen=True)
class Histogram:
    """Counts over bin_count uniform bins; the top edge is inclusive."""

    edges: np.ndarray  # bin_count + 1, strictly increasing
    counts: np.ndarray  # bin_count, non-negative ints

    @property
    def bin_count(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def pmf(self) -> np.ndarray:
        return self.counts / self.total


def _edges(values: np.ndarray, bin_count: int) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    if lo == hi:
        # Degenerate range: widen symmetrically so all samples land in one bin.
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bin_count + 1)


def histogram(values: np.ndarray, bin_count: int) -> Histogram:
    """Uniform histogram spanning [min, max]; every value is counted."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValidationError("histogram of empty input")
    if not np.all(np.isfinite(values)):
        raise ValidationError("histogram input must be finite")
    if bin_count < 1:
        raise ValidationError("bin_count must be positive")
    edges = _edges(values, bin_count)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges=edges, counts=counts)


def _entropy_bits(counts: np.ndarray, total: int) -> float:
    nz = counts[counts > 0]
    p = nz / total
    return -math.fsum(p * np.log2(p))


def shannon_entropy(h: Histogram) -> float:
    """-sum p log2 p over occupied bins, in bits; in [0, log2 bin_count]."""
    total = h.total
    if total <= 0:
        raise ValidationError("entropy of an empty histogram")
    return max(0.0, _entropy_bits(h.counts, total))


def nmi(x: np.ndarray, y: np.ndarray, bin_count: int = DEFAULT_NMI_BINS) -> float:
    """Normalized mutual information of two equal-length channels.

    Marginals come from the joint table itself, so nmi(x, x) is 1 to within
    float rounding and the result is clamped into [0, 1] against noise at
    magnitude below 1e-12. Defined as 0 when both marginal entropies vanish.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValidationError("nmi needs at least 2 samples")

    joint, _, _ = np.histogram2d(x, y, bins=[_edges(x, bin_count), _edges(y, bin_count)])
    return _nmi_from_joint(joint)


def _nmi_from_joint(joint: np.ndarray) -> float:
    total = joint.sum()
    px = joint.sum(axis=1) / total
    py = joint.sum(axis=0) / total
    hx = _entropy_bits(joint.sum(axis=1).astype(np.int64), int(total))
    hy = _entropy_bits(joint.sum(axis=0).astype(np.int64), int(total))
    if hx + hy == 0.0:
        return 0.0

    pij = joint / total
    mask = pij > 0
    terms = pij[mask] * np.log2(pij[mask] / (np.outer(px, py)[mask]))
    mi = math.fsum(terms)
    value = 2.0 * mi / (hx + hy)
    if value < 0.0:
        if value < -1e-12:
            raise AssertionError(f"NMI fell below 0 beyond float noise: {value}")
        value = 0.0
    return min(value, 1.0)


@dataclass(frozen=True)
class NmiMatrix:
    """Symmetric NMI matrix over a labeled set of channels."""

    labels: list
    values: np.ndarray

    def submatrix(self, rows: list, cols: list) -> np.ndarray:
        idx = {label: i for i, label in enumerate(self.labels)}
        r = [idx[label] for label in rows]
        c = [idx[label] for label in cols]
        return self.values[np.ix_(r, c)]


def channel_labels() -> list:
    """Labels for the 56 non-geometry channels, in container order."""
    labels = []
    for group in (
        AttributeGroup.ROTATION,
        AttributeGroup.SCALING,
        AttributeGroup.OPACITY,
        AttributeGroup.SHDC,
        AttributeGroup.SHAC,
    ):
        labels += [f"{group.field}_{i}" for i in range(group.channel_count)]
    return labels


def nmi_heatmap(
    cloud: GaussianCloud,
    bin_count: int = DEFAULT_NMI_BINS,
    threads: int | None = None,
) -> NmiMatrix:
    """Pairwise NMI over all 56 non-geometry channels.

    The interesting blocks are the intra-SH-AC correlations (15x15 per color
    channel) and SH AC against rotation/scaling/opacity/SH DC; both are
    submatrices of the returned full symmetric matrix. Pairs are independent
    and may be computed in parallel; the result does not depend on scheduling.
    """
    if cloud.count < 2:
        raise ValidationError("nmi_heatmap needs at least 2 Gaussians")

    labels = channel_labels()
    columns = []
    for group in (
        AttributeGroup.ROTATION,
        AttributeGroup.SCALING,
        AttributeGroup.OPACITY,
        AttributeGroup.SHDC,
        AttributeGroup.SHAC,
    ):
        for i in range(group.channel_count):
            columns.append(np.asarray(channel(cloud, group, i), dtype=np.float64))

    k = len(columns)
    values = np.eye(k)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]

    def one(pair):
        i, j = pair
        return i, j, nmi(columns[i], columns[j], bin_count)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    for i, j, v in results:
        values[i, j] = values[j, i] = v

    # A constant channel has zero entropy; its self-NMI is 0 by convention.
    for i, col in enumerate(columns):
        if col.size and col.min() == col.max():
            values[i, i] = 0.0
    return NmiMatrix(labels=labels, values=values)
