"""Per-channel probability models and their fixed-point PMFs.

Three model families cover the six attribute groups:

* SH AC channels follow a Laplace distribution remarkably well; the MLE is
  closed-form (mu = median, b = mean absolute deviation about the median).
* Rotation, scaling and opacity channels are fit with 1-4 component Gaussian
  mixtures via EM, picking the component count by BIC.
* SH DC has no convenient parametric shape and uses the empirical index
  histogram directly.

Every model is discretized into an integer frequency table ("Pmf") over the
channel's quantization levels, with a fixed total of 2**16 and a floor of 1
per level so the range coder never sees a zero-probability symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .errors import ValidationError
from .quantize import QuantGrid, apply_grid

PMF_TOTAL = 1 << 16
B_FLOOR = 1e-8
VAR_FLOOR = 1e-8
MAX_COMPONENTS = 4
EM_MAX_ITER = 200
EM_TOL_PER_SAMPLE = 1e-6
GMM_SAMPLE_CAP = 30_000


@dataclass(frozen=True)
class LaplaceParams:
    """Location/scale of a Laplace density, in channel units."""

    mu: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValidationError(f"Laplace scale must be positive, got {self.b}")

    def cdf(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mu) / self.b
        return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))


@dataclass(frozen=True)
class GmmParams:
    """A 1..4 component univariate Gaussian mixture."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if not (1 <= len(w) <= MAX_COMPONENTS) or len(m) != len(w) or len(v) != len(w):
            raise ValidationError("mixture parameter arrays must share length 1..4")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError(f"mixture weights sum to {w.sum()}, not 1")
        if (v < VAR_FLOOR * (1 - 1e-12)).any():
            raise ValidationError("mixture variance below floor")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def k(self) -> int:
        return len(self.weights)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for w, m, v in zip(self.weights, self.means, self.variances):
            out += w * ndtr((x - m) / np.sqrt(v))
        return out


@dataclass(frozen=True)
class Pmf:
    """Integer frequency table over L quantization levels, summing to 2**16."""

    freqs: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.uint32)
        if f.ndim != 1 or len(f) < 2:
            raise ValidationError("Pmf needs at least 2 levels")
        if (f < 1).any():
            raise ValidationError("Pmf frequencies must all be >= 1")
        if int(f.sum()) != PMF_TOTAL:
            raise ValidationError(f"Pmf frequencies sum to {int(f.sum())}, not {PMF_TOTAL}")
        object.__setattr__(self, "freqs", f)

    @property
    def levels(self) -> int:
        return len(self.freqs)

    @property
    def total(self) -> int:
        return PMF_TOTAL

    def entropy_bits(self) -> float:
        p = self.freqs / PMF_TOTAL
        return float(-(p * np.log2(p)).sum())


def fit_laplace(values: np.ndarray) -> LaplaceParams:
    """Maximum-likelihood Laplace fit: mu = median, b = mean |x - mu|.

    For even N the median is the mean of the two central order statistics.
    A zero deviation (constant input) is floored so downstream PMFs stay
    well-defined.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise ValidationError("fit_laplace needs at least 2 samples")
    if not np.all(np.isfinite(values)):
        raise ValidationError("fit_laplace input must be finite")
    mu = float(np.median(values))
    b = float(np.abs(values - mu).mean())
    return LaplaceParams(mu=mu, b=max(b, B_FLOOR))


def refine_laplace_binned(counts: np.ndarray, grid: QuantGrid, seed: LaplaceParams) -> LaplaceParams:
    """Laplace parameters maximizing the likelihood of a quantized channel.

    At coarse depths the closed-form fit on reconstructed values understates
    the scale (the median's level absorbs all near-median deviations), which
    can cost ~1% rate. This refines (mu, b) against the binned likelihood
    sum(counts_i * log(mass_i)) with the same midpoint-edge bins used by
    discretize_pmf. Depends only on (counts, grid, seed), so re-encoding a
    decoded model reproduces identical parameters.
    """
    from scipy.optimize import minimize

    counts = np.asarray(counts, dtype=np.float64)
    step = grid.step
    if step == 0.0 or counts.sum() <= 0 or np.count_nonzero(counts) < 2:
        return seed

    occupied = np.nonzero(counts)[0]
    n_occ = counts[occupied]
    lo = grid.v_min + (occupied - 0.5) * step  # -inf for level 0
    hi = grid.v_min + (occupied + 0.5) * step  # +inf for level L-1
    first = occupied[0] == 0
    last = occupied[-1] == grid.levels - 1
    b0 = max(seed.b, B_FLOOR)

    def neg_ll(theta):
        # parameters normalized by the grid step / seed scale, so fixed
        # optimizer tolerances mean the same thing on every channel
        mu = seed.mu + theta[0] * step
        model = LaplaceParams(mu=mu, b=max(b0 * np.exp(theta[1]), B_FLOOR))
        f_lo = model.cdf(lo)
        f_hi = model.cdf(hi)
        if first:
            f_lo[0] = 0.0
        if last:
            f_hi[-1] = 1.0
        mass = np.maximum(f_hi - f_lo, 1e-300)
        return -(n_occ * np.log(mass)).sum()

    res = minimize(neg_ll, np.zeros(2), method="Nelder-Mead",
                   options={"maxiter": 300, "xatol": 1e-4, "fatol": 1e-9 * counts.sum()})
    refined = LaplaceParams(
        mu=float(seed.mu + res.x[0] * step),
        b=float(max(b0 * np.exp(res.x[1]), B_FLOOR)),
    )
    return refined if neg_ll(res.x) <= neg_ll(np.zeros(2)) else seed


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty(k)
    centers[0] = x[rng.integers(x.size)]
    d2 = (x - centers[0]) ** 2
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = x[rng.integers(x.size, size=k - j)]
            break
        centers[j] = x[rng.choice(x.size, p=d2 / total)]
        d2 = np.minimum(d2, (x - centers[j]) ** 2)
    return centers


def _em(x: np.ndarray, k: int, rng: np.random.Generator):
    """EM for a k-component mixture; returns (weights, means, variances, ll_trace).

    Initialization is k-means++ with one hard-assignment refinement; the EM
    loop itself runs in a compiled kernel. The log-likelihood trace is
    non-decreasing (pure EM updates; the variance floor only engages on
    degenerate components).
    """
    centers = np.sort(_kmeanspp_centers(x, k, rng))
    assign = np.abs(x[:, None] - centers[None, :]).argmin(axis=1)
    weights = np.full(k, 1.0 / k)
    means = centers.copy()
    variances = np.full(k, max(float(x.var()), VAR_FLOOR))
    for j in range(k):
        sel = assign == j
        if sel.sum() >= 2:
            weights[j] = sel.mean()
            means[j] = x[sel].mean()
            variances[j] = max(float(x[sel].var()), VAR_FLOOR)
    weights = np.maximum(weights, 1e-6)
    weights /= weights.sum()

    trace = _kernels.em_iterate(
        np.ascontiguousarray(x, dtype=np.float64),
        weights, means, variances,
        VAR_FLOOR, EM_MAX_ITER, EM_TOL_PER_SAMPLE * x.size,
    )
    return weights, means, variances, trace


def fit_gmm(
    values: np.ndarray,
    max_k: int = MAX_COMPONENTS,
    seed=0,
    sample_cap: int | None = GMM_SAMPLE_CAP,
) -> GmmParams:
    """Fit a Gaussian mixture, choosing k in 1..max_k by BIC.

    Initialization is k-means++ on a PRNG derived from ``seed``, so results
    are reproducible. Inputs beyond ``sample_cap`` are thinned with an even
    deterministic stride before fitting; parameter estimates at 50k samples
    are far tighter than what the codec's rate depends on, and this keeps
    encoding time flat in the model size. Pass ``sample_cap=None`` to fit on
    everything.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValidationError("fit_gmm input must be finite")
    if not 1 <= max_k <= MAX_COMPONENTS:
        raise ValidationError(f"max_k must be in 1..{MAX_COMPONENTS}")
    if x.size < 8 * max_k:
        raise ValidationError(f"fit_gmm needs at least {8 * max_k} samples, got {x.size}")
    if x.min() == x.max():
        return GmmParams(weights=np.ones(1), means=np.array([x[0]]), variances=np.array([VAR_FLOOR]))

    if sample_cap is not None and x.size > sample_cap:
        pick = np.floor(np.linspace(0, x.size, sample_cap, endpoint=False)).astype(np.int64)
        x = x[pick]
    n = x.size

    best = None
    best_bic = np.inf
    rng = np.random.default_rng(seed)
    for k in range(1, max_k + 1):
        weights, means, variances, trace = _em(x, k, rng)
        ll = trace[-1]
        n_params = 3 * k - 1
        bic = -2.0 * ll + n_params * np.log(n)
        if bic < best_bic:
            best_bic = bic
            best = (weights, means, variances)

    weights, means, variances = best
    order = np.argsort(means)
    weights = weights[order]
    return GmmParams(
        weights=weights / weights.sum(),
        means=means[order],
        variances=variances[order],
    )


def _scale_to_freqs(masses: np.ndarray) -> np.ndarray:
    """Scale probability masses to integer freqs: all >= 1, summing to 2**16.

    Primary rule: round each mass against the full total with a floor of 1,
    then let the largest level absorb the rounding residue. If extreme
    concentration at large L would drive the largest level below the floor,
    fall back to reserving 1 count per level up front and distributing the
    remaining total proportionally.
    """
    L = len(masses)
    if L > PMF_TOTAL:
        raise ValidationError(f"{L} levels cannot all hold freq >= 1 within total {PMF_TOTAL}")
    masses = np.maximum(np.asarray(masses, dtype=np.float64), 0.0)
    s = masses.sum()
    masses = np.full(L, 1.0 / L) if s <= 0 else masses / s

    freqs = np.maximum(np.rint(masses * PMF_TOTAL).astype(np.int64), 1)
    top = int(freqs.argmax())
    residue = PMF_TOTAL - int(freqs.sum())
    if freqs[top] + residue >= 1:
        freqs[top] += residue
    else:
        freqs = 1 + np.floor(masses * (PMF_TOTAL - L)).astype(np.int64)
        freqs[int(freqs.argmax())] += PMF_TOTAL - int(freqs.sum())
    return freqs.astype(np.uint32)


def _apportion(masses: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment to integer freqs >= 1 summing to 2**16.

    Every level lands within one unit of its proportional share (after the
    floor of 1), so relative frequencies survive the fixed-point conversion
    essentially undistorted.
    """
    L = len(masses)
    if L > PMF_TOTAL:
        raise ValidationError(f"{L} levels cannot all hold freq >= 1 within total {PMF_TOTAL}")
    masses = np.maximum(np.asarray(masses, dtype=np.float64), 0.0)
    s = masses.sum()
    target = np.full(L, PMF_TOTAL / L) if s <= 0 else masses * (PMF_TOTAL / s)
    freqs = np.maximum(np.rint(target).astype(np.int64), 1)
    deficit = PMF_TOTAL - int(freqs.sum())
    while deficit != 0:
        if deficit > 0:
            order = np.argsort(freqs - target, kind="stable")  # most underallocated first
            bump = order[: min(deficit, L)]
            freqs[bump] += 1
            deficit -= len(bump)
        else:
            reducible = np.nonzero(freqs > 1)[0]
            order = reducible[np.argsort(target[reducible] - freqs[reducible], kind="stable")]
            cut = order[: min(-deficit, len(order))]
            freqs[cut] -= 1
            deficit += len(cut)
    return freqs.astype(np.uint32)


def fit_empirical(values: np.ndarray, grid: QuantGrid) -> Pmf:
    """Fixed-point PMF of a channel's quantization-index occupancy.

    ``values`` may be the integer indices themselves or raw reals, which are
    then quantized under ``grid``. Empty levels are floored at frequency 1
    (smoothing) so every symbol stays codable.
    """
    values = np.asarray(values)
    if values.dtype.kind in "iu":
        idx = values.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= grid.levels):
            raise IndexError(f"index out of range for L={grid.levels}")
    else:
        idx = apply_grid(values, grid)
    counts = np.bincount(idx, minlength=grid.levels).astype(np.float64)
    return Pmf(freqs=_apportion(counts))


def discretize_pmf(model, grid: QuantGrid) -> Pmf:
    """Integer PMF of ``model`` over the grid's quantization levels.

    Level i receives the model mass between the midpoints of neighboring
    dequantized level centers, with open outer tails folded into the first
    and last levels (quantization clamps out-of-range values to the boundary
    levels, so coded symbols and model support coincide).
    """
    L = grid.levels
    if L < 2:
        raise ValidationError("discretize_pmf needs at least 2 levels")
    step = grid.step
    if step == 0.0:
        # Degenerate channel: every sample quantizes to level 0.
        freqs = np.ones(L, dtype=np.int64)
        freqs[0] = PMF_TOTAL - (L - 1)
        return Pmf(freqs=freqs.astype(np.uint32))

    interior = grid.v_min + (np.arange(1, L, dtype=np.float64) - 0.5) * step
    cdf = model.cdf(interior)
    masses = np.diff(np.concatenate(([0.0], cdf, [1.0])))
    return Pmf(freqs=_scale_to_freqs(masses))
