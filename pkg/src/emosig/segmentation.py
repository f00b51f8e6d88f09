"""Sliding-window segmentation and cross-channel window alignment.

Windows are cut from labeled segments, never across label boundaries. Window
and stride lengths are given in milliseconds and converted per channel rate
with round-half-up; only fully contained windows are emitted. Windows from
different channels covering the same span of time join into a WindowGroup,
the unit that feature extraction consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import (
    ActivityLabel,
    CHANNEL_ORDER,
    ChannelKind,
    EmotionLabel,
    LabeledSegment,
    Scenario,
)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class WindowSpec:
    """Window length and hop in milliseconds; stride defaults to the length."""

    length_ms: int
    stride_ms: int | None = None

    def __post_init__(self) -> None:
        if self.stride_ms is None:
            object.__setattr__(self, "stride_ms", self.length_ms)
        if self.length_ms < 1 or self.stride_ms < 1:
            raise ValueError("length_ms and stride_ms must be >= 1")
        if self.stride_ms > self.length_ms:
            raise ValueError(
                f"stride_ms {self.stride_ms} must not exceed length_ms {self.length_ms}"
            )


@dataclass(frozen=True, eq=False)
class Window:
    """A fixed-length run of samples from exactly one labeled segment."""

    channel: ChannelKind
    samples: np.ndarray
    emotion: EmotionLabel
    activity: ActivityLabel
    participant_id: str
    scenario: Scenario
    window_index: int
    start_s: float
    fs_hz: float
    segment_index: int

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])


def samples_per_window(length_ms: int, fs_hz: float) -> int:
    """Window length in samples at the given rate, clamped to at least 2."""
    return max(2, _round_half_up(length_ms * fs_hz / 1000.0))


def segment(labeled_segment: LabeledSegment, spec: WindowSpec) -> list[Window]:
    """Cut one labeled segment into windows per spec.

    Window starts step by the stride in samples; a trailing remainder shorter
    than one window is dropped. A rate too low to give two samples per window
    is an error, the caller must resample or skip the channel.
    """
    seg = labeled_segment
    fs = seg.ts.fs_hz
    n = _round_half_up(spec.length_ms * fs / 1000.0)
    if n < 2:
        raise ValueError(
            f"window shorter than 2 samples: {spec.length_ms} ms at {fs} Hz "
            f"on channel {seg.ts.channel.value}"
        )
    stride = max(1, _round_half_up(spec.stride_ms * fs / 1000.0))
    out: list[Window] = []
    total = seg.ts.n
    for k, off in enumerate(range(0, total - n + 1, stride)):
        out.append(
            Window(
                channel=seg.ts.channel,
                samples=seg.ts.samples[off : off + n],
                emotion=seg.emotion,
                activity=seg.activity,
                participant_id=seg.participant_id,
                scenario=seg.scenario,
                window_index=k,
                start_s=(seg.start_sample + off) / fs,
                fs_hz=fs,
                segment_index=seg.segment_index,
            )
        )
    return out


def window_sweep() -> list[WindowSpec]:
    """The standard length sweep: 100 ms to 600 ms in 50 ms steps."""
    return [WindowSpec(length_ms) for length_ms in range(100, 601, 50)]


@dataclass(frozen=True, eq=False)
class WindowGroup:
    """Windows of several channels covering the same span of time."""

    windows: dict[ChannelKind, Window]
    emotion: EmotionLabel
    activity: ActivityLabel
    participant_id: str
    scenario: Scenario
    segment_index: int
    window_index: int
    start_s: float

    def channels(self) -> tuple[ChannelKind, ...]:
        return tuple(k for k in CHANNEL_ORDER if k in self.windows)


def align_windows(
    channel_windows: dict[ChannelKind, list[Window]],
    spec: WindowSpec,
    required: set[ChannelKind] | None = None,
) -> list[WindowGroup]:
    """Join per-channel windows into cross-channel groups by start time.

    Windows pair when their start times agree within half a stride, which
    absorbs the per-rate rounding of the ms-to-sample conversion. Groups
    missing any required channel are dropped; by default every channel
    present in the input is required.
    """
    if required is None:
        required = set(channel_windows)
    tolerance = spec.stride_ms / 2000.0

    by_segment: dict[int, dict[ChannelKind, list[Window]]] = {}
    for kind, windows in channel_windows.items():
        for w in windows:
            by_segment.setdefault(w.segment_index, {}).setdefault(kind, []).append(w)

    groups: list[WindowGroup] = []
    for seg_idx in sorted(by_segment):
        bucket = by_segment[seg_idx]
        if any(kind not in bucket for kind in required):
            continue
        # Anchor on the scarcest channel so every candidate span exists there.
        anchor_kind = min(
            bucket, key=lambda k: (len(bucket[k]), CHANNEL_ORDER.index(k))
        )
        starts = {
            kind: np.asarray([w.start_s for w in ws])
            for kind, ws in bucket.items()
        }
        for anchor in bucket[anchor_kind]:
            members: dict[ChannelKind, Window] = {}
            complete = True
            for kind, ws in bucket.items():
                if kind is anchor_kind:
                    members[kind] = anchor
                    continue
                pos = int(np.searchsorted(starts[kind], anchor.start_s))
                best = None
                for j in (pos - 1, pos):
                    if 0 <= j < len(ws):
                        delta = abs(starts[kind][j] - anchor.start_s)
                        if delta <= tolerance and (
                            best is None or delta < best[0]
                        ):
                            best = (delta, j)
                if best is None:
                    complete = False
                    if kind in required:
                        break
                else:
                    members[kind] = ws[best[1]]
            if all(kind in members for kind in required):
                groups.append(
                    WindowGroup(
                        windows=members,
                        emotion=anchor.emotion,
                        activity=anchor.activity,
                        participant_id=anchor.participant_id,
                        scenario=anchor.scenario,
                        segment_index=seg_idx,
                        window_index=anchor.window_index,
                        start_s=anchor.start_s,
                    )
                )
    return groups
