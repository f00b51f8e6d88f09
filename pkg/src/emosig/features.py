"""Window features: the 15-statistic set and the regression-line set.

Every public operation is a thin wrapper over a matrix kernel that computes
features for a whole stack of windows at once, so the single-window path and
the batch path cannot drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .datamodel import ActivityLabel, CHANNEL_ORDER, ChannelKind, EMOTION_ORDER, EmotionLabel
from .segmentation import Window, WindowGroup

#: Fixed order of the statistical feature set.
STAT_FEATURE_NAMES: tuple[str, ...] = (
    "mean",
    "median",
    "std",
    "var",
    "min",
    "max",
    "range",
    "rms",
    "skewness",
    "kurtosis",
    "mean_abs_diff",
    "mean_abs_diff_z",
    "mean_abs_diff2",
    "mean_abs_diff2_z",
    "slope",
)

#: Fixed order of the regression-line feature set, per channel.
SELECTED_FEATURE_NAMES: tuple[str, ...] = (
    "mean_abs_diff",
    "slope_sqrt",
    "intercept_sqrt",
    "intercept_sqrt_cubed",
)

#: Channels the selected set is computed on, in this order.
SELECTED_CHANNELS: tuple[ChannelKind, ...] = (
    ChannelKind.BVP,
    ChannelKind.ST,
    ChannelKind.EMG_H,
    ChannelKind.EMG_L,
)


class FeatureSetKind(Enum):
    ALL = "all"
    SELECTED = "selected"


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float


def _slope_intercept_matrix(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least squares of each row on indices 1..n, closed form."""
    n = x.shape[1]
    idx_mean = (n + 1) / 2.0
    centered_idx = np.arange(1, n + 1, dtype=np.float64) - idx_mean
    sxx = n * (n * n - 1) / 12.0
    row_mean = x.mean(axis=1)
    slope = (x @ centered_idx) / sxx
    intercept = row_mean - slope * idx_mean
    return slope, intercept


def _stat_matrix(x: np.ndarray) -> np.ndarray:
    """The 15 statistics for each row of a (windows, samples) matrix."""
    if x.ndim != 2 or x.shape[1] < 3:
        raise ValueError("statistics need windows of at least 3 samples")
    mean = x.mean(axis=1)
    median = np.median(x, axis=1)
    var = x.var(axis=1)
    std = np.sqrt(var)
    lo = x.min(axis=1)
    hi = x.max(axis=1)
    rms = np.sqrt(np.mean(x * x, axis=1))
    centered = x - mean[:, None]
    m3 = np.mean(centered**3, axis=1)
    m4 = np.mean(centered**4, axis=1)
    safe_std = np.where(std > 0, std, 1.0)
    skew = np.where(std > 0, m3 / safe_std**3, 0.0)
    kurt = np.where(std > 0, m4 / safe_std**4 - 3.0, 0.0)
    d1 = np.mean(np.abs(np.diff(x, axis=1)), axis=1)
    d2 = np.mean(np.abs(np.diff(x, n=2, axis=1)), axis=1)
    d1z = np.where(std > 0, d1 / safe_std, 0.0)
    d2z = np.where(std > 0, d2 / safe_std, 0.0)
    slope, _ = _slope_intercept_matrix(x)
    return np.column_stack(
        [mean, median, std, var, lo, hi, hi - lo, rms, skew, kurt, d1, d1z, d2, d2z, slope]
    )


def _selected_matrix(x: np.ndarray) -> np.ndarray:
    """mean abs first difference plus the three regression-line features."""
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("selected features need windows of at least 2 samples")
    mad = np.mean(np.abs(np.diff(x, axis=1)), axis=1)
    slope, intercept = _slope_intercept_matrix(x)
    slope_sqrt = np.sqrt(np.abs(slope))
    intercept_sqrt = np.sqrt(np.abs(intercept))
    return np.column_stack([mad, slope_sqrt, intercept_sqrt, intercept_sqrt**3])


def linear_fit(window: Window) -> RegressionFit:
    """Ordinary least squares of the window samples on indices 1..n."""
    if window.n < 2:
        raise ValueError("linear fit needs at least 2 samples")
    slope, intercept = _slope_intercept_matrix(window.samples[None, :])
    return RegressionFit(slope=float(slope[0]), intercept=float(intercept[0]))


def regression_features(window: Window) -> tuple[float, float, float]:
    """Square roots of absolute slope and intercept, and the cubed root term."""
    fit = linear_fit(window)
    slope_sqrt = np.sqrt(abs(fit.slope))
    intercept_sqrt = np.sqrt(abs(fit.intercept))
    return float(slope_sqrt), float(intercept_sqrt), float(intercept_sqrt**3)


def mean_abs_first_diff(window: Window) -> float:
    """Mean of the absolute first differences."""
    if window.n < 2:
        raise ValueError("first differences need at least 2 samples")
    return float(np.mean(np.abs(np.diff(window.samples))))


def statistical_features(window: Window) -> dict[str, float]:
    """The 15 statistics of one window, keyed and ordered by STAT_FEATURE_NAMES."""
    if window.n < 3:
        raise ValueError("statistical features need at least 3 samples")
    row = _stat_matrix(window.samples[None, :])[0]
    return dict(zip(STAT_FEATURE_NAMES, map(float, row)))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: dict[str, float]
    emotion: EmotionLabel
    activity: ActivityLabel
    participant_id: str
    window_index: int


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Feature matrix for many groups sharing one (set kind, channel layout)."""

    names: tuple[str, ...]
    x: np.ndarray
    emotions: np.ndarray  # int8 index into EMOTION_ORDER
    activities: np.ndarray  # int8 ActivityLabel value
    window_indices: np.ndarray
    participant_id: str

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


def _feature_channels(
    group: WindowGroup, kind: FeatureSetKind
) -> tuple[ChannelKind, ...]:
    if kind is FeatureSetKind.SELECTED:
        missing = [c.value for c in SELECTED_CHANNELS if c not in group.windows]
        if missing:
            raise ValueError(f"missing required channel {missing[0]}")
        return SELECTED_CHANNELS
    return group.channels()


def extract_table(groups: list[WindowGroup], kind: FeatureSetKind) -> FeatureTable:
    """Feature matrix over groups; all groups must share the channel layout."""
    if not groups:
        raise ValueError("no window groups to extract features from")
    channels = _feature_channels(groups[0], kind)
    for g in groups[1:]:
        if _feature_channels(g, kind) != channels:
            raise ValueError("window groups have inconsistent channel layouts")
    per_channel = SELECTED_FEATURE_NAMES if kind is FeatureSetKind.SELECTED else STAT_FEATURE_NAMES
    names = tuple(f"{c.value}.{f}" for c in channels for f in per_channel)

    blocks: list[np.ndarray] = []
    for c in channels:
        stack = np.stack([g.windows[c].samples for g in groups])
        blocks.append(
            _selected_matrix(stack)
            if kind is FeatureSetKind.SELECTED
            else _stat_matrix(stack)
        )
    x = np.concatenate(blocks, axis=1)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value")
    emotion_code = {label: i for i, label in enumerate(EMOTION_ORDER)}
    return FeatureTable(
        names=names,
        x=x,
        emotions=np.asarray([emotion_code[g.emotion] for g in groups], dtype=np.int8),
        activities=np.asarray([g.activity.value for g in groups], dtype=np.int8),
        window_indices=np.asarray([g.window_index for g in groups], dtype=np.int64),
        participant_id=groups[0].participant_id,
    )


def extract(group: WindowGroup, kind: FeatureSetKind) -> FeatureVector:
    """Feature vector of one group; see extract_table for the batch path."""
    table = extract_table([group], kind)
    return FeatureVector(
        values=dict(zip(table.names, map(float, table.x[0]))),
        emotion=group.emotion,
        activity=group.activity,
        participant_id=group.participant_id,
        window_index=group.window_index,
    )


def write_feature_csv(table: FeatureTable, path) -> None:
    """Write a feature matrix as CSV with label columns appended."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            list(table.names) + ["emotion", "activity", "participant", "window_index"]
        )
        for i in range(table.n):
            row = [repr(float(v)) for v in table.x[i]]
            row.append(EMOTION_ORDER[table.emotions[i]].name)
            row.append(ActivityLabel(int(table.activities[i])).name)
            row.append(table.participant_id)
            row.append(str(int(table.window_indices[i])))
            writer.writerow(row)
