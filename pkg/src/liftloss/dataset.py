"""A/B-test data model, CSV I/O, and the synthetic experiment generator."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Arm",
    "NoiseDistribution",
    "ABRow",
    "ABDataset",
    "DataGenConfig",
    "CsvFormatError",
    "generate",
    "load_csv",
    "save_csv",
]


class Arm(enum.IntEnum):
    """Experiment arm of a row: 1 = treatment, 0 = control."""

    CONTROL = 0
    TREATMENT = 1


class NoiseDistribution(enum.Enum):
    UNIFORM01 = "uniform"
    STD_NORMAL = "normal"


class CsvFormatError(ValueError):
    """Raised when an input CSV does not follow the expected schema."""


@dataclass(frozen=True)
class ABRow:
    """Single experiment record; `true_lift` is known only for synthetic data."""

    features: np.ndarray
    outcome: float
    arm: Arm
    true_lift: float | None = None


@dataclass(frozen=True)
class ABDataset:
    """Columnar store of A/B-test rows.

    `features` has shape (n, d); `outcome` and `arm` have shape (n,).
    `true_lift` is optional and only carried for synthetic data where the
    generating process is known. Arrays are made read-only on construction,
    so datasets can be shared across threads safely.
    """

    features: np.ndarray
    outcome: np.ndarray
    arm: np.ndarray
    true_lift: np.ndarray | None = None

    def __post_init__(self) -> None:
        feats = np.array(self.features, dtype=np.float64)
        y = np.array(self.outcome, dtype=np.float64)
        arm = np.array(self.arm, dtype=np.int8)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-d (n, d), got shape {feats.shape}")
        n = feats.shape[0]
        if y.shape != (n,) or arm.shape != (n,):
            raise ValueError(
                f"misaligned columns: features {feats.shape}, outcome {y.shape}, arm {arm.shape}"
            )
        if not np.isfinite(feats).all():
            raise ValueError("features contain non-finite values")
        if not np.isfinite(y).all():
            raise ValueError("outcome contains non-finite values")
        if not np.isin(arm, (0, 1)).all():
            raise ValueError("arm values must be 0 (control) or 1 (treatment)")
        n_t = int(arm.sum())
        if n_t == 0:
            raise ValueError("no treatment rows")
        if n_t == n:
            raise ValueError("no control rows")
        lift = self.true_lift
        if lift is not None:
            lift = np.array(lift, dtype=np.float64)
            if lift.shape != (n,):
                raise ValueError(f"true_lift shape {lift.shape} does not match n={n}")
            if not np.isfinite(lift).all():
                raise ValueError("true_lift contains non-finite values")
            lift.setflags(write=False)
        for arr in (feats, y, arm):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "arm", arm)
        object.__setattr__(self, "true_lift", lift)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_treatment(self) -> int:
        return int(self.arm.sum())

    @property
    def n_control(self) -> int:
        return len(self) - self.n_treatment

    @property
    def is_treatment(self) -> np.ndarray:
        return self.arm == Arm.TREATMENT

    def row(self, i: int) -> ABRow:
        lift = None if self.true_lift is None else float(self.true_lift[i])
        return ABRow(self.features[i], float(self.outcome[i]), Arm(int(self.arm[i])), lift)

    def take(self, indices: np.ndarray) -> "ABDataset":
        """Subset by row indices (used for minibatching)."""
        lift = None if self.true_lift is None else self.true_lift[indices]
        return ABDataset(self.features[indices], self.outcome[indices], self.arm[indices], lift)


@dataclass(frozen=True)
class DataGenConfig:
    """Knobs for the synthetic generator.

    Each row draws three independent noise values (r1, r2, r3). The visible
    features are (r1, r3); r2 stays hidden. Treated rows get an extra
    `lift_coefficient * r3` added to the outcome, so the per-row lift is
    known exactly and stored in `true_lift`.
    """

    n_rows: int
    treatment_fraction: float = 0.7
    seed: int = 0
    noise_distribution: NoiseDistribution = NoiseDistribution.UNIFORM01
    lift_coefficient: float = 0.5

    def __post_init__(self) -> None:
        if self.n_rows < 2:
            raise ValueError(f"n_rows must be >= 2, got {self.n_rows}")
        if not 0.0 < self.treatment_fraction < 1.0:
            raise ValueError(
                f"treatment_fraction must be strictly between 0 and 1, got {self.treatment_fraction}"
            )
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if not np.isfinite(self.lift_coefficient):
            raise ValueError("lift_coefficient must be finite")


def generate(config: DataGenConfig) -> ABDataset:
    """Draw a synthetic randomized-experiment dataset.

    Deterministic given `config.seed`. Arm labels are i.i.d.
    Bernoulli(treatment_fraction), independent of the features. Note that for
    very small n_rows a draw can land all rows in one arm, which fails the
    dataset invariant and raises.
    """
    rng = np.random.default_rng(config.seed)
    if config.noise_distribution is NoiseDistribution.UNIFORM01:
        r = rng.random((config.n_rows, 3))
    else:
        r = rng.standard_normal((config.n_rows, 3))
    treated = rng.random(config.n_rows) < config.treatment_fraction
    lift = config.lift_coefficient * r[:, 2]
    outcome = r[:, 0] + r[:, 1] + np.where(treated, lift, 0.0)
    features = r[:, [0, 2]]
    return ABDataset(features, outcome, treated.astype(np.int8), lift)


def save_csv(dataset: ABDataset, path: str | Path) -> None:
    """Write a dataset to CSV at full float precision (round-trips exactly)."""
    d = dataset.d
    header = [f"f{j}" for j in range(d)] + ["y", "arm"]
    has_lift = dataset.true_lift is not None
    if has_lift:
        header.append("true_lift")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.append(repr(float(dataset.outcome[i])))
            row.append(str(int(dataset.arm[i])))
            if has_lift:
                row.append(repr(float(dataset.true_lift[i])))
            writer.writerow(row)


def _parse_float(text: str, column: str, line_no: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise CsvFormatError(
            f"line {line_no}: invalid value for column '{column}': {text!r}"
        ) from None


def load_csv(path: str | Path) -> ABDataset:
    """Read a dataset CSV with header ``f0,...,f{d-1},y,arm[,true_lift]``.

    Parse failures report the offending physical line number (header is
    line 1).
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file") from None
        header = [h.strip() for h in header]
        has_lift = header and header[-1] == "true_lift"
        base = header[:-1] if has_lift else header
        d = len(base) - 2
        expected = [f"f{j}" for j in range(d)] + ["y", "arm"]
        if d < 1 or base != expected:
            raise CsvFormatError(
                f"line 1: expected header f0,...,f{{d-1}},y,arm[,true_lift], got {','.join(header)}"
            )
        n_cols = len(header)
        feats: list[list[float]] = []
        ys: list[float] = []
        arms: list[int] = []
        lifts: list[float] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != n_cols:
                raise CsvFormatError(
                    f"line {line_no}: expected {n_cols} fields, got {len(row)}"
                )
            feats.append([_parse_float(row[j], f"f{j}", line_no) for j in range(d)])
            ys.append(_parse_float(row[d], "y", line_no))
            arm_text = row[d + 1].strip()
            if arm_text not in ("0", "1"):
                raise CsvFormatError(
                    f"line {line_no}: arm value must be 0 or 1, got {arm_text!r}"
                )
            arms.append(int(arm_text))
            if has_lift:
                lifts.append(_parse_float(row[d + 2], "true_lift", line_no))
    if not feats:
        raise CsvFormatError("no data rows")
    return ABDataset(
        np.array(feats, dtype=np.float64),
        np.array(ys, dtype=np.float64),
        np.array(arms, dtype=np.int8),
        np.array(lifts, dtype=np.float64) if has_lift else None,
    )
