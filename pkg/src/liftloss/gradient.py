"""Per-row effective gradient of the binned lift loss.

The loss jumps whenever a row crosses a bin boundary, so plain derivatives
miss the part of the signal that comes from regrouping rows. The effective
gradient adds a finite-difference slope for rows near a boundary: shift the
row's prediction just far enough to cross, apply the resulting changes to
the two affected bins (one row leaves, one bin gains it, both lifts move),
and divide the exact loss change by the prediction shift. Rows deep inside a
bin keep only the smooth bias-channel derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import (
    DEFAULT_MAX_SORT,
    CutPoints,
    InnerCuts,
    Segment,
    assign_bins,
    assign_segments,
    compute_cuts,
    inner_cuts,
)
from .dataset import ABDataset
from .loss import SubsetStats, subset_stats

__all__ = [
    "GradConfig",
    "EffectiveGradient",
    "bias_gradient",
    "loss_partials",
    "migration_terms",
    "effective_gradient",
]

# PointGradient: the per-row gradient is a plain float64 array aligned with
# the dataset rows; see EffectiveGradient.point_grad.


@dataclass(frozen=True)
class GradConfig:
    """Knobs for the effective gradient.

    `migration_step_scale` sets the probe shift as a fraction of the segment
    width (0.5 probes half a segment, so about half the segment's rows would
    actually cross). `rebin_every` is the cut-refresh cadence used by the
    trainer; `max_sort` bounds the sample used for quantile cuts.
    """

    n_bins: int
    migration_step_scale: float = 0.5
    rebin_every: int = 1
    max_sort: int = DEFAULT_MAX_SORT

    def __post_init__(self) -> None:
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2 for gradient descent, got {self.n_bins}")
        if not self.migration_step_scale > 0:
            raise ValueError("migration_step_scale must be positive")
        if self.rebin_every < 1:
            raise ValueError("rebin_every must be a positive integer")
        if self.max_sort < self.n_bins:
            raise ValueError("max_sort must be at least n_bins")


@dataclass(frozen=True)
class EffectiveGradient:
    """Effective gradient plus the bin structure it was computed on."""

    point_grad: np.ndarray
    stats: SubsetStats
    cuts: CutPoints
    inner: InnerCuts
    bins: np.ndarray
    segments: np.ndarray


def bias_gradient(stats: SubsetStats, bin_index):
    """Smooth part of d(loss)/d(prediction) for rows in the given bin(s).

    Equals 2 * (mean_pred_n - lift_n) / total_size; accepts a scalar bin
    index or an array of per-row bins.
    """
    idx = np.asarray(bin_index) - 1
    g = 2.0 * (stats.mean_pred[idx] - stats.lift[idx]) / stats.total_size
    if np.isscalar(bin_index) or np.ndim(bin_index) == 0:
        return float(g)
    return g


def loss_partials(stats: SubsetStats) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin partial derivatives of the loss w.r.t. bin lift and bin size.

    Everything else (mean predictions, global lift, total size) is treated
    as constant. Returns (d_loss/d_lift, d_loss/d_size) arrays.
    """
    weight = stats.size / stats.total_size
    pred_gap = stats.mean_pred - stats.lift
    sep_gap = stats.lift - stats.global_lift
    d_lift = weight * (-2.0 * pred_gap - 2.0 * sep_gap)
    d_size = (pred_gap**2 - sep_gap**2) / stats.total_size
    return d_lift, d_size


def _lift_deltas(stats: SubsetStats, y, treated, from0, to0):
    """Lift changes in the source and destination bins when a row moves.

    Uses the pre-move arm counts as denominators. For a treated row the
    source lift moves toward the remaining treated mean and the destination
    lift absorbs the new outcome; control rows mirror with flipped signs
    because lift subtracts the control mean.
    """
    d_from_t = (stats.mean_y_t[from0] - y) / stats.size_t[from0]
    d_to_t = (y - stats.mean_y_t[to0]) / stats.size_t[to0]
    d_from_c = (y - stats.mean_y_c[from0]) / stats.size_c[from0]
    d_to_c = (stats.mean_y_c[to0] - y) / stats.size_c[to0]
    d_from = np.where(treated, d_from_t, d_from_c)
    d_to = np.where(treated, d_to_t, d_to_c)
    return d_from, d_to


def _delta_loss(stats: SubsetStats, d_lift, d_size, y, treated, from0, to0):
    """Exact loss change when one row moves from bin `from0` to `to0` (0-based).

    The per-bin loss contribution is linear in the bin's lift, so the change
    splits into lift terms, size terms, and one size-lift cross term per bin;
    summing them reproduces a full loss re-evaluation to machine precision.
    """
    dl_from, dl_to = _lift_deltas(stats, y, treated, from0, to0)
    slope_from = -2.0 * (stats.mean_pred[from0] - stats.global_lift) / stats.total_size
    slope_to = -2.0 * (stats.mean_pred[to0] - stats.global_lift) / stats.total_size
    return (
        d_lift[from0] * dl_from
        - d_size[from0]
        + d_lift[to0] * dl_to
        + d_size[to0]
        - dl_from * slope_from  # size drops by one in the source bin
        + dl_to * slope_to  # and grows by one in the destination
    )


def migration_terms(
    stats: SubsetStats,
    cuts: CutPoints,
    inner: InnerCuts,
    y: float,
    treated: bool,
    bin_index: int,
    direction: str,
    scale: float = 0.5,
    segment: int | None = None,
) -> float:
    """Migration part of the effective gradient for one boundary row.

    `direction` is "up" (top-segment row probing the boundary above) or
    "down" (bottom-segment row probing the boundary below). The prediction
    shift is `scale` times the segment width, signed by direction, and the
    returned value is the exact loss change divided by that shift.
    """
    n_bins = stats.n_bins
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    if segment is not None:
        expected = Segment.TOP if direction == "up" else Segment.BOTTOM
        if segment != expected:
            raise ValueError(
                f"migration {direction} applies to {expected.name.lower()}-segment rows, "
                f"got segment {Segment(segment).name.lower()}"
            )
    if direction == "up":
        if bin_index >= n_bins:
            raise ValueError(f"bin {bin_index} has no upper neighbor to migrate into")
        from0, to0 = bin_index - 1, bin_index
        boundary = bin_index - 1
        dp = scale * (cuts.cuts[boundary] - inner.minus[boundary])
    else:
        if bin_index <= 1:
            raise ValueError(f"bin {bin_index} has no lower neighbor to migrate into")
        from0, to0 = bin_index - 1, bin_index - 2
        boundary = bin_index - 2
        dp = scale * (cuts.cuts[boundary] - inner.plus[boundary])
    d_lift, d_size = loss_partials(stats)
    delta = _delta_loss(
        stats,
        d_lift,
        d_size,
        float(y),
        bool(treated),
        np.asarray(from0),
        np.asarray(to0),
    )
    return float(delta / dp)


def _migration_gradient(
    stats: SubsetStats,
    cuts: CutPoints,
    inner: InnerCuts,
    outcome: np.ndarray,
    treated: np.ndarray,
    bins: np.ndarray,
    segments: np.ndarray,
    scale: float,
) -> np.ndarray:
    """Vectorized migration contributions; zero for middle-segment rows."""
    d_lift, d_size = loss_partials(stats)
    out = np.zeros(outcome.shape)
    for seg, step in ((Segment.TOP, 1), (Segment.BOTTOM, -1)):
        mask = segments == seg
        if not mask.any():
            continue
        b = bins[mask]
        from0 = b - 1
        to0 = b - 1 + step
        boundary = b - 1 if step == 1 else b - 2
        edge = cuts.cuts[boundary]
        dp = scale * (edge - (inner.minus[boundary] if step == 1 else inner.plus[boundary]))
        delta = _delta_loss(stats, d_lift, d_size, outcome[mask], treated[mask], from0, to0)
        out[mask] = delta / dp
    return out


def effective_gradient(
    dataset: ABDataset,
    predictions,
    config: GradConfig,
    cached_global_lift: float | None = None,
    cuts: CutPoints | None = None,
) -> EffectiveGradient:
    """Full per-row gradient: bias channel plus boundary migrations.

    Pass `cuts` to reuse boundaries from an earlier step instead of
    recomputing quantiles (the trainer does this on its `rebin_every`
    cadence). Raises EmptyArmInBinError when a bin lacks an arm and
    DegeneratePredictionsError when the predictions cannot fill the bins.
    """
    p = np.asarray(predictions, dtype=np.float64)
    if p.shape != (len(dataset),):
        raise ValueError("predictions must align with the dataset rows")
    if cuts is None:
        cuts = compute_cuts(p, config.n_bins, max_sort=config.max_sort)
    bins = assign_bins(p, cuts)
    stats = subset_stats(dataset, p, bins, cuts.n_bins, cached_global_lift)
    inner = inner_cuts(cuts, p)
    segments = assign_segments(p, cuts, inner, bins=bins)
    grad = bias_gradient(stats, bins)
    grad += _migration_gradient(
        stats,
        cuts,
        inner,
        dataset.outcome,
        dataset.is_treatment,
        bins,
        segments,
        config.migration_step_scale,
    )
    if not np.isfinite(grad).all():
        raise FloatingPointError("effective gradient produced non-finite values")
    return EffectiveGradient(grad, stats, cuts, inner, bins, segments)
