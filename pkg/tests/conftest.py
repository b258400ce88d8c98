import numpy as np
import pytest

from liftloss import ABDataset


def make_dataset(preds_or_feats, outcome, arm, true_lift=None) -> ABDataset:
    """Build a small dataset; 1-d feature input becomes a single column."""
    feats = np.asarray(preds_or_feats, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    return ABDataset(feats, np.asarray(outcome, dtype=np.float64), np.asarray(arm), true_lift)


@pytest.fixture
def six_row_instance():
    """Two-bin hand instance used by the migration oracle tests.

    Predictions [0.10, 0.45, 0.48, 0.55, 0.80, 0.90] split at 0.515; row 2 is
    the top segment of bin 1 and row 3 the bottom segment of bin 2.
    """
    preds = np.array([0.10, 0.45, 0.48, 0.55, 0.80, 0.90])
    arm = np.array([0, 1, 1, 0, 1, 0], dtype=np.int8)
    y = np.array([0.5, 1.0, 2.0, 1.0, 3.0, 1.5])
    return make_dataset(preds, y, arm), preds
