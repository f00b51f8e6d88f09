"""Core data types and disk format for multi-channel physiological recordings.

A recording lives in a directory holding one CSV per channel plus a
``recording.json`` sidecar. The sidecar declares participant, scenario, the
sampling rate and units of every channel, and the annotation intervals.
All times are seconds from recording start and intervals are half-open
``[start_s, end_s)``. Sample ``i`` of a channel is taken to occur at time
``i / fs_hz``, so an interval owns exactly the samples whose timestamps fall
inside it.

Channel CSVs have the header ``sample_index,value`` and one row per sample.
Values are written with the shortest decimal representation that round-trips
to the same float64, and the loader reads them back bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

_TIME_EPS = 1e-9


class ChannelKind(Enum):
    """Signal channels, raw and derived."""

    EMG_RAW = "EMG_RAW"
    EMG_H = "EMG_H"
    EMG_L = "EMG_L"
    EDA = "EDA"
    ST = "ST"
    PZT = "PZT"
    BVP = "BVP"


#: Channels produced by preprocessing rather than recorded directly.
DERIVED_KINDS = frozenset({ChannelKind.EMG_H, ChannelKind.EMG_L})

#: Deterministic ordering used whenever channels are iterated.
CHANNEL_ORDER: tuple[ChannelKind, ...] = tuple(ChannelKind)


class Scenario(Enum):
    S_A = "S_A"
    S_E = "S_E"
    S_EA = "S_EA"


class EmotionLabel(Enum):
    NEUTRAL = "NEUTRAL"
    HPHA = "HPHA"
    HNHA = "HNHA"


#: Fixed label order for confusion matrices, votes and reports.
EMOTION_ORDER: tuple[EmotionLabel, ...] = (
    EmotionLabel.NEUTRAL,
    EmotionLabel.HPHA,
    EmotionLabel.HNHA,
)


class ActivityLabel(Enum):
    SITTING = 0
    STANDING = 1
    WALKING = 2
    WALKING_UPSTAIRS = 3
    WALKING_DOWNSTAIRS = 4

    @property
    def exertion_rank(self) -> int:
        """Relative physical effort, 0 for sitting up to 4 for stair descent."""
        return self.value


ACTIVITY_ORDER: tuple[ActivityLabel, ...] = tuple(ActivityLabel)


@dataclass(frozen=True)
class EmotionCategorySpec:
    """Self-assessment ranges that define an emotion category."""

    label: EmotionLabel
    pleasure_range: tuple[float, float]
    arousal_range: tuple[float, float]


EMOTION_CATEGORIES: dict[EmotionLabel, EmotionCategorySpec] = {
    EmotionLabel.NEUTRAL: EmotionCategorySpec(
        EmotionLabel.NEUTRAL, (4.18, 5.64), (4.6, 5.48)
    ),
    EmotionLabel.HPHA: EmotionCategorySpec(
        EmotionLabel.HPHA, (6.06, 7.9), (6.0, 7.54)
    ),
    EmotionLabel.HNHA: EmotionCategorySpec(
        EmotionLabel.HNHA, (1.57, 2.92), (6.07, 8.16)
    ),
}


class RecordingError(ValueError):
    """Raised for malformed recording directories, files or annotations.

    Messages name the offending file and, for row-level problems, the
    1-based CSV line number.
    """


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Immutable uniformly sampled signal."""

    channel: ChannelKind
    fs_hz: float
    samples: np.ndarray
    units: str

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not (self.fs_hz > 0) or not math.isfinite(self.fs_hz):
            raise ValueError(f"fs_hz must be positive and finite, got {self.fs_hz}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"non-finite sample at index {bad}")
        arr = arr.copy() if arr is self.samples else arr
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n / self.fs_hz

    def with_samples(
        self,
        samples: np.ndarray,
        *,
        channel: ChannelKind | None = None,
        fs_hz: float | None = None,
        units: str | None = None,
    ) -> "TimeSeries":
        """Copy of this series with some fields replaced."""
        return TimeSeries(
            channel=self.channel if channel is None else channel,
            fs_hz=self.fs_hz if fs_hz is None else fs_hz,
            samples=samples,
            units=self.units if units is None else units,
        )


@dataclass(frozen=True)
class AnnotationInterval:
    """Half-open labelled interval ``[start_s, end_s)``."""

    start_s: float
    end_s: float
    label: EmotionLabel | ActivityLabel

    def __post_init__(self) -> None:
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(
                f"invalid interval [{self.start_s}, {self.end_s}): "
                "need 0 <= start_s < end_s"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def _check_disjoint(intervals: list[AnnotationInterval], what: str) -> None:
    ordered = sorted(intervals, key=lambda iv: (iv.start_s, iv.end_s))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start_s < prev.end_s - _TIME_EPS:
            raise RecordingError(
                f"overlapping {what} annotations: "
                f"[{prev.start_s}, {prev.end_s}) and [{cur.start_s}, {cur.end_s})"
            )


@dataclass
class Recording:
    """One participant session: channels plus emotion and activity annotations."""

    participant_id: str
    scenario: Scenario
    channels: dict[ChannelKind, TimeSeries]
    emotion_annotations: list[AnnotationInterval] = field(default_factory=list)
    activity_annotations: list[AnnotationInterval] = field(default_factory=list)

    def validate(self) -> "Recording":
        """Check structural invariants, raising RecordingError on violation."""
        if not self.participant_id:
            raise RecordingError("participant_id must be non-empty")
        if not self.channels:
            raise RecordingError("recording has no channels")
        for kind, ts in self.channels.items():
            if ts.channel is not kind:
                raise RecordingError(
                    f"channel map key {kind.value} holds series tagged "
                    f"{ts.channel.value}"
                )
        for iv in self.emotion_annotations:
            if not isinstance(iv.label, EmotionLabel):
                raise RecordingError(
                    f"emotion annotation carries non-emotion label {iv.label!r}"
                )
        for iv in self.activity_annotations:
            if not isinstance(iv.label, ActivityLabel):
                raise RecordingError(
                    f"activity annotation carries non-activity label {iv.label!r}"
                )
        _check_disjoint(self.emotion_annotations, "emotion")
        _check_disjoint(self.activity_annotations, "activity")

        ends = [iv.end_s for iv in self.emotion_annotations]
        ends += [iv.end_s for iv in self.activity_annotations]
        if ends:
            horizon = max(ends)
            for kind, ts in self.channels.items():
                # Sample i covers [i/fs, (i+1)/fs); allow the last annotated
                # instant to overhang the final sample by at most one period.
                if ts.n + 1 < horizon * ts.fs_hz - _TIME_EPS:
                    raise RecordingError(
                        f"channel {kind.value} ends at {ts.duration_s:.6f}s but "
                        f"annotations extend to {horizon:.6f}s"
                    )

        if self.scenario is Scenario.S_E and self.emotion_annotations:
            sitting = sorted(
                (
                    iv
                    for iv in self.activity_annotations
                    if iv.label is ActivityLabel.SITTING
                ),
                key=lambda iv: iv.start_s,
            )
            if not _intervals_cover(sitting, self.emotion_annotations):
                raise RecordingError(
                    "scenario S_E requires sitting annotation covering every "
                    "emotion interval"
                )
        return self


def _intervals_cover(
    cover: list[AnnotationInterval], targets: list[AnnotationInterval]
) -> bool:
    """True if the (sorted, disjoint) cover contains every target interval."""
    for tgt in targets:
        lo = tgt.start_s
        for c in cover:
            if c.start_s <= lo + _TIME_EPS and lo < c.end_s:
                lo = c.end_s
                if lo >= tgt.end_s - _TIME_EPS:
                    break
        if lo < tgt.end_s - _TIME_EPS:
            return False
    return True


@dataclass
class StudyCorpus:
    """A set of recordings spanning participants and scenarios."""

    recordings: list[Recording]

    def validate(self) -> "StudyCorpus":
        seen: set[tuple[str, Scenario]] = set()
        for rec in self.recordings:
            rec.validate()
            key = (rec.participant_id, rec.scenario)
            if key in seen:
                raise RecordingError(
                    f"duplicate recording for participant {rec.participant_id} "
                    f"scenario {rec.scenario.value}"
                )
            seen.add(key)
        return self

    def participants(self) -> list[str]:
        return sorted({rec.participant_id for rec in self.recordings})

    def get(self, participant_id: str, scenario: Scenario) -> Recording | None:
        for rec in self.recordings:
            if rec.participant_id == participant_id and rec.scenario is scenario:
                return rec
        return None


# ---------------------------------------------------------------------------
# Disk format


def _format_value(x: float) -> str:
    return repr(float(x))


def save_recording(rec: Recording, signal_dir: str | Path) -> Path:
    """Write a recording directory; returns the directory path.

    Layout: one ``<CHANNEL>.csv`` per channel with header
    ``sample_index,value``, plus ``recording.json`` holding participant,
    scenario, per-channel rate and units, and a flat annotation list of
    ``(start_s, end_s, kind, label)`` entries.
    """
    rec.validate()
    out = Path(signal_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind in CHANNEL_ORDER:
        if kind not in rec.channels:
            continue
        ts = rec.channels[kind]
        df = pd.DataFrame(
            {"sample_index": np.arange(ts.n, dtype=np.int64), "value": ts.samples}
        )
        df.to_csv(out / f"{kind.value}.csv", index=False)
    annotations = []
    for iv in sorted(rec.emotion_annotations, key=lambda iv: iv.start_s):
        annotations.append(
            {
                "start_s": iv.start_s,
                "end_s": iv.end_s,
                "kind": "emotion",
                "label": iv.label.name,
            }
        )
    for iv in sorted(rec.activity_annotations, key=lambda iv: iv.start_s):
        annotations.append(
            {
                "start_s": iv.start_s,
                "end_s": iv.end_s,
                "kind": "activity",
                "label": iv.label.name,
            }
        )
    sidecar = {
        "participant_id": rec.participant_id,
        "scenario": rec.scenario.value,
        "channels": {
            kind.value: {
                "fs_hz": rec.channels[kind].fs_hz,
                "units": rec.channels[kind].units,
            }
            for kind in CHANNEL_ORDER
            if kind in rec.channels
        },
        "annotations": annotations,
    }
    (out / "recording.json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )
    return out


def _parse_sidecar_pairs(pairs: list[tuple[str, object]]) -> dict:
    keys = [k for k, _ in pairs]
    dupes = {k for k in keys if keys.count(k) > 1}
    if dupes:
        raise RecordingError(f"duplicate key {sorted(dupes)[0]!r} in sidecar")
    return dict(pairs)


def _load_channel_csv(
    path: Path, kind: ChannelKind, fs_hz: float, units: str
) -> TimeSeries:
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except Exception as exc:
        raise RecordingError(f"{path}: unreadable channel CSV ({exc})") from exc
    if list(df.columns) != ["sample_index", "value"]:
        raise RecordingError(
            f"{path}: expected header 'sample_index,value', got "
            f"{','.join(map(str, df.columns))!r}"
        )
    if len(df) == 0:
        raise RecordingError(f"{path}: channel file has no samples")
    raw = df["value"]
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
    if raw.dtype == object:
        parsed_nan = np.asarray(raw.isna())
        bad = np.flatnonzero(np.isnan(values) & ~parsed_nan)
        if bad.size:
            line = int(bad[0]) + 2  # header is line 1
            raise RecordingError(
                f"{path}: malformed value {raw.iloc[int(bad[0])]!r} at line {line}"
            )
    nonfinite = np.flatnonzero(~np.isfinite(values))
    if nonfinite.size:
        line = int(nonfinite[0]) + 2
        raise RecordingError(f"{path}: non-finite value at line {line}")
    idx = pd.to_numeric(df["sample_index"], errors="coerce").to_numpy(dtype=np.float64)
    expected = np.arange(len(df), dtype=np.float64)
    if not np.array_equal(idx, expected):
        bad = int(np.flatnonzero(idx != expected)[0])
        raise RecordingError(
            f"{path}: sample_index must run 0..n-1, broken at line {bad + 2}"
        )
    try:
        return TimeSeries(channel=kind, fs_hz=fs_hz, samples=values, units=units)
    except ValueError as exc:
        raise RecordingError(f"{path}: {exc}") from exc


def load_recording(signal_dir: str | Path) -> Recording:
    """Load and validate a recording directory written by save_recording."""
    root = Path(signal_dir)
    sidecar_path = root / "recording.json"
    if not root.is_dir():
        raise RecordingError(f"{root}: recording directory does not exist")
    if not sidecar_path.is_file():
        raise RecordingError(f"{sidecar_path}: missing sidecar")
    try:
        sidecar = json.loads(
            sidecar_path.read_text(encoding="utf-8"),
            object_pairs_hook=_parse_sidecar_pairs,
        )
    except RecordingError:
        raise
    except Exception as exc:
        raise RecordingError(f"{sidecar_path}: invalid JSON ({exc})") from exc

    for key in ("participant_id", "scenario", "channels", "annotations"):
        if key not in sidecar:
            raise RecordingError(f"{sidecar_path}: missing key {key!r}")
    try:
        scenario = Scenario(sidecar["scenario"])
    except ValueError as exc:
        raise RecordingError(
            f"{sidecar_path}: unknown scenario {sidecar['scenario']!r}"
        ) from exc

    channels: dict[ChannelKind, TimeSeries] = {}
    declared: set[str] = set()
    for name, meta in sidecar["channels"].items():
        try:
            kind = ChannelKind(name)
        except ValueError as exc:
            raise RecordingError(
                f"{sidecar_path}: unknown channel {name!r}"
            ) from exc
        declared.add(name)
        if not isinstance(meta, dict) or "fs_hz" not in meta or "units" not in meta:
            raise RecordingError(
                f"{sidecar_path}: channel {name} needs fs_hz and units"
            )
        csv_path = root / f"{name}.csv"
        if not csv_path.is_file():
            raise RecordingError(f"{csv_path}: missing channel file")
        channels[kind] = _load_channel_csv(
            csv_path, kind, float(meta["fs_hz"]), str(meta["units"])
        )

    for stray in sorted(root.glob("*.csv")):
        if stray.stem not in declared:
            raise RecordingError(f"{stray}: channel file not declared in sidecar")

    emotion: list[AnnotationInterval] = []
    activity: list[AnnotationInterval] = []
    for i, entry in enumerate(sidecar["annotations"]):
        try:
            kind_field = entry["kind"]
            start_s = float(entry["start_s"])
            end_s = float(entry["end_s"])
            label_name = entry["label"]
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordingError(
                f"{sidecar_path}: malformed annotation entry {i}"
            ) from exc
        try:
            if kind_field == "emotion":
                emotion.append(
                    AnnotationInterval(start_s, end_s, EmotionLabel[label_name])
                )
            elif kind_field == "activity":
                activity.append(
                    AnnotationInterval(start_s, end_s, ActivityLabel[label_name])
                )
            else:
                raise RecordingError(
                    f"{sidecar_path}: annotation entry {i} has unknown kind "
                    f"{kind_field!r}"
                )
        except (KeyError, ValueError) as exc:
            if isinstance(exc, RecordingError):
                raise
            raise RecordingError(
                f"{sidecar_path}: annotation entry {i}: {exc}"
            ) from exc

    rec = Recording(
        participant_id=str(sidecar["participant_id"]),
        scenario=scenario,
        channels=channels,
        emotion_annotations=emotion,
        activity_annotations=activity,
    )
    try:
        return rec.validate()
    except RecordingError as exc:
        raise RecordingError(f"{sidecar_path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Label-driven slicing


@dataclass(frozen=True, eq=False)
class LabeledSegment:
    """A channel slice carrying one emotion label and one activity label.

    ``segment_index`` identifies the (emotion x activity) intersection the
    slice came from; slices of different channels from the same intersection
    share it. ``start_sample`` is the index of the first sample within the
    source channel, so absolute sample times survive slicing.
    """

    ts: TimeSeries
    emotion: EmotionLabel
    activity: ActivityLabel
    start_s: float
    end_s: float
    segment_index: int
    start_sample: int
    participant_id: str
    scenario: Scenario


def slice_by_labels(rec: Recording) -> list[LabeledSegment]:
    """Slice every channel by the (emotion x activity) interval intersections.

    Returns segments ordered by intersection start time, channels in
    declaration order within each intersection. Intersections too short to
    contain a sample of some channel contribute no segment for that channel.
    """
    rec.validate()
    spans: list[tuple[float, float, EmotionLabel, ActivityLabel]] = []
    for em in rec.emotion_annotations:
        for act in rec.activity_annotations:
            lo = max(em.start_s, act.start_s)
            hi = min(em.end_s, act.end_s)
            if hi - lo > _TIME_EPS:
                spans.append((lo, hi, em.label, act.label))
    spans.sort(key=lambda t: (t[0], t[1]))

    out: list[LabeledSegment] = []
    for seg_idx, (lo, hi, em_label, act_label) in enumerate(spans):
        for kind in CHANNEL_ORDER:
            if kind not in rec.channels:
                continue
            ts = rec.channels[kind]
            i0 = int(math.ceil(lo * ts.fs_hz - _TIME_EPS))
            i1 = int(math.ceil(hi * ts.fs_hz - _TIME_EPS))
            i0 = max(i0, 0)
            i1 = min(i1, ts.n)
            if i1 <= i0:
                continue
            out.append(
                LabeledSegment(
                    ts=ts.with_samples(ts.samples[i0:i1]),
                    emotion=em_label,
                    activity=act_label,
                    start_s=lo,
                    end_s=hi,
                    segment_index=seg_idx,
                    start_sample=i0,
                    participant_id=rec.participant_id,
                    scenario=rec.scenario,
                )
            )
    return out


def resample_linear(ts: TimeSeries, target_fs_hz: float) -> TimeSeries:
    """Resample by linear interpolation onto a uniform grid at target_fs_hz.

    Output sample j sits at time j / target_fs_hz; the grid stops at the last
    instant covered by the input, so no extrapolation ever happens. At the
    original rate this is the identity.
    """
    if not (target_fs_hz > 0) or not math.isfinite(target_fs_hz):
        raise ValueError(f"target_fs_hz must be positive and finite, got {target_fs_hz}")
    if ts.n < 2:
        raise ValueError("resampling needs at least 2 samples")
    ratio = ts.fs_hz / target_fs_hz
    m = int(math.floor((ts.n - 1) / ratio + _TIME_EPS)) + 1
    positions = np.arange(m, dtype=np.float64) * ratio
    resampled = np.interp(positions, np.arange(ts.n, dtype=np.float64), ts.samples)
    return ts.with_samples(resampled, fs_hz=target_fs_hz)
