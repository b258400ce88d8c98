"""Independent numerical checks of the effective gradient.

Both checks here deliberately avoid the gradient module's own arithmetic:
the bias channel is compared against central finite differences of the loss
with the bin structure frozen, and the migration channel against a literal
re-evaluation of the loss after moving one row between bins.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .binning import DEFAULT_MAX_SORT, Segment, assign_bins, assign_segments, compute_cuts, inner_cuts
from .dataset import ABDataset
from .gradient import bias_gradient, migration_terms
from .loss import SubsetStats, subset_stats, true_lift_loss

__all__ = [
    "GradCheckResult",
    "bias_fd_check",
    "migration_recompute_check",
    "moved_row_stats",
    "run_gradcheck",
]

BIAS_TOLERANCE = 1e-6
MIGRATION_TOLERANCE = 1e-10


def _rel_err(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(a - b) / scale


def bias_fd_check(
    dataset: ABDataset,
    predictions: np.ndarray,
    n_bins: int,
    sample_rows: int = 100,
    seed: int = 0,
    max_sort: int = DEFAULT_MAX_SORT,
) -> float:
    """Max relative error of the bias gradient vs frozen-structure central FD.

    Freezes bin membership and every statistic except the perturbed bin's
    mean prediction, then differences the loss around +/- eps shifts of a
    single row's prediction.
    """
    cuts = compute_cuts(predictions, n_bins, max_sort=max_sort)
    bins = assign_bins(predictions, cuts)
    stats = subset_stats(dataset, predictions, bins, n_bins)
    rng = np.random.default_rng(seed)
    rows = rng.choice(len(dataset), size=min(sample_rows, len(dataset)), replace=False)
    worst = 0.0
    for i in rows:
        b0 = bins[i] - 1
        eps = 1e-4 * max(1.0, abs(float(predictions[i])))
        shift = eps / stats.size[b0]
        hi = stats.mean_pred.copy()
        hi[b0] += shift
        lo = stats.mean_pred.copy()
        lo[b0] -= shift
        loss_hi = true_lift_loss(replace(stats, mean_pred=hi)).loss
        loss_lo = true_lift_loss(replace(stats, mean_pred=lo)).loss
        fd = (loss_hi - loss_lo) / (2.0 * eps)
        worst = max(worst, _rel_err(fd, bias_gradient(stats, int(bins[i]))))
    return worst


def moved_row_stats(stats: SubsetStats, y: float, treated: bool, from0: int, to0: int) -> SubsetStats:
    """Stats after one row moves between bins, with the lift updates applied
    incrementally using the pre-move arm counts; mean predictions and the
    global lift stay fixed."""
    size = stats.size.copy()
    size_t = stats.size_t.copy()
    size_c = stats.size_c.copy()
    lift = stats.lift.copy()
    if treated:
        lift[from0] += (stats.mean_y_t[from0] - y) / stats.size_t[from0]
        lift[to0] += (y - stats.mean_y_t[to0]) / stats.size_t[to0]
        size_t[from0] -= 1
        size_t[to0] += 1
    else:
        lift[from0] += (y - stats.mean_y_c[from0]) / stats.size_c[from0]
        lift[to0] += (stats.mean_y_c[to0] - y) / stats.size_c[to0]
        size_c[from0] -= 1
        size_c[to0] += 1
    size[from0] -= 1
    size[to0] += 1
    return replace(stats, size=size, size_t=size_t, size_c=size_c, lift=lift)


def migration_recompute_check(
    dataset: ABDataset,
    predictions: np.ndarray,
    n_bins: int,
    scale: float = 0.5,
    sabotage: bool = False,
    max_sort: int = DEFAULT_MAX_SORT,
) -> tuple[float, int]:
    """Compare migration terms against full loss re-evaluation after a move.

    Covers every top/bottom row. Returns (max relative error, rows checked).
    `sabotage` flips the sign of the computed terms, for verifying that the
    check actually detects a wrong gradient.
    """
    cuts = compute_cuts(predictions, n_bins, max_sort=max_sort)
    bins = assign_bins(predictions, cuts)
    stats = subset_stats(dataset, predictions, bins, n_bins)
    inner = inner_cuts(cuts, predictions)
    segments = assign_segments(predictions, cuts, inner, bins=bins)
    def bin_contributions(s: SubsetStats, idx) -> float:
        w = s.size[idx] / s.total_size
        return float(
            (w * ((s.mean_pred[idx] - s.lift[idx]) ** 2 - (s.lift[idx] - s.global_lift) ** 2)).sum()
        )

    oracles = []
    computeds = []
    for i in np.flatnonzero(segments != Segment.MIDDLE):
        up = segments[i] == Segment.TOP
        b = int(bins[i])
        from0 = b - 1
        to0 = b if up else b - 2
        boundary = b - 1 if up else b - 2
        if up:
            dp = scale * (cuts.cuts[boundary] - inner.minus[boundary])
        else:
            dp = scale * (cuts.cuts[boundary] - inner.plus[boundary])
        moved = moved_row_stats(
            stats, float(dataset.outcome[i]), bool(dataset.arm[i]), from0, to0
        )
        # only the two affected bins change, so the loss difference reduces to
        # them; summing the untouched bins would just add cancellation noise
        affected = np.array([from0, to0])
        oracles.append(
            (bin_contributions(moved, affected) - bin_contributions(stats, affected)) / dp
        )
        computed = migration_terms(
            stats,
            cuts,
            inner,
            float(dataset.outcome[i]),
            bool(dataset.arm[i]),
            b,
            "up" if up else "down",
            scale=scale,
            segment=int(segments[i]),
        )
        computeds.append(-computed if sabotage else computed)
    if not oracles:
        return 0.0, 0
    a = np.asarray(computeds)
    b = np.asarray(oracles)
    # normalize each row against its own magnitude or the instance's largest
    # slope, whichever is bigger: rows whose terms cancel to nearly zero would
    # otherwise amplify double-precision noise into spurious relative error
    denom = np.maximum(np.abs(a), np.abs(b))
    floor = max(float(denom.max()), 1e-300)
    worst = float((np.abs(a - b) / np.maximum(denom, floor)).max())
    return worst, a.size


@dataclass(frozen=True)
class GradCheckResult:
    bias_max_rel_err: float
    migration_max_rel_err: float
    migration_rows_checked: int

    @property
    def passed(self) -> bool:
        return (
            self.bias_max_rel_err <= BIAS_TOLERANCE
            and self.migration_max_rel_err <= MIGRATION_TOLERANCE
        )


def run_gradcheck(
    dataset: ABDataset,
    predictions: np.ndarray,
    n_bins: int,
    scale: float = 0.5,
    sample_rows: int = 100,
    seed: int = 0,
    sabotage: bool = False,
    max_sort: int = DEFAULT_MAX_SORT,
) -> GradCheckResult:
    bias_err = bias_fd_check(dataset, predictions, n_bins, sample_rows, seed, max_sort)
    mig_err, checked = migration_recompute_check(
        dataset, predictions, n_bins, scale, sabotage=sabotage, max_sort=max_sort
    )
    return GradCheckResult(bias_err, mig_err, checked)
