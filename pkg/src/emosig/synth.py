"""Deterministic synthetic corpus generator with ground truth by construction.

Each recording is participant baseline + emotion component + activity
interference + white noise. The emotion component places class information
where the regression-line features can see it: ST drifts linearly with a
per-emotion slope, EMG carries two triangle carriers (one above the high-band
cutoff, one below the low-band cutoff) with per-emotion amplitudes, BVP is a
triangle pulse wave with per-emotion amplitude, EDA a per-emotion tonic
level, PZT a per-emotion breathing rate.

Construction rules that keep the pipeline's filters well behaved:
  The annotated blocks are separated by unannotated rest gaps, so filter
  warm-up never intersects a labelled window, and every transition happens
  mid-gap: drifts keep their slope for a while past the block end before
  ramping back to baseline, amplitudes and rates crossfade between blocks,
  and the breathing phase is accumulated so rate changes never jump. Inside
  an annotated block every parameter is constant, which keeps each block's
  windows statistically alike from the first window to the last, in both
  scenarios.

Activity interference is additive: band-limited noise plus a slow triangle
baseline wander, both scaled by a per-activity gain ladder that strictly
increases with exertion rank, times global amplitude knobs that may be zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .datamodel import (
    ACTIVITY_ORDER,
    ActivityLabel,
    AnnotationInterval,
    ChannelKind,
    EMOTION_ORDER,
    EmotionLabel,
    Recording,
    Scenario,
    StudyCorpus,
    TimeSeries,
)

#: Per-channel scale of the motion artifact, in channel units.
_ARTIFACT_SCALE = {
    ChannelKind.EMG_RAW: 6.0,
    ChannelKind.EDA: 0.15,
    ChannelKind.ST: 0.03,
    ChannelKind.PZT: 30.0,
    ChannelKind.BVP: 10.0,
}
#: Per-channel scale of the baseline wander, in channel units.
_WANDER_SCALE = {
    ChannelKind.EMG_RAW: 3.0,
    ChannelKind.EDA: 0.25,
    ChannelKind.ST: 0.05,
    ChannelKind.PZT: 40.0,
    ChannelKind.BVP: 15.0,
}
#: Per-channel scale of the white observation noise, in channel units.
_NOISE_SCALE = {
    ChannelKind.EMG_RAW: 1.5,
    ChannelKind.EDA: 0.02,
    ChannelKind.ST: 0.004,
    ChannelKind.PZT: 5.0,
    ChannelKind.BVP: 2.0,
}

_UNITS = {
    ChannelKind.EMG_RAW: "microvolt",
    ChannelKind.EDA: "microsiemens",
    ChannelKind.ST: "celsius",
    ChannelKind.PZT: "au",
    ChannelKind.BVP: "au",
}

_EMG_HIGH_CARRIER_HZ = 62.5  # above the 40 Hz high-band cutoff
_EMG_LOW_CARRIER_HZ = 2.0  # below the 5 Hz low-band cutoff
_BVP_PULSE_HZ = 1.25  # 75 beats per minute
_EDA_WAVE_HZ = 0.05
_EDA_WAVE_AMP = 0.3
_ARTIFACT_SMOOTH_S = 0.005


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs. Per-emotion tuples follow EMOTION_ORDER."""

    n_participants: int = 6
    seed: int = 42
    trial_duration_s: float = 120.0
    activity_segment_s: float = 20.0
    rest_gap_s: float = 20.0
    plux_fs_hz: float = 1000.0
    bvp_fs_hz: float = 64.0
    st_drift: tuple[float, float, float] = (0.0, 0.005, 0.02)  # celsius/s
    emg_high_amp: tuple[float, float, float] = (4.0, 16.0, 48.0)
    emg_low_amp: tuple[float, float, float] = (30.0, 10.0, 3.0)
    bvp_amp: tuple[float, float, float] = (20.0, 60.0, 140.0)
    eda_level: tuple[float, float, float] = (0.0, 0.9, 2.2)
    pzt_rate_hz: tuple[float, float, float] = (0.25, 0.30, 0.35)
    pzt_amp: float = 100.0
    activity_gain: tuple[float, float, float, float, float] = (0.0, 1.0, 2.0, 3.5, 5.0)
    motion_artifact_amp: float = 0.35
    baseline_wander_amp: float = 0.35
    noise_sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.n_participants < 1:
            raise ValueError("n_participants must be >= 1")
        if min(self.trial_duration_s, self.activity_segment_s, self.rest_gap_s) <= 0:
            raise ValueError("durations must be positive")
        gains = self.activity_gain
        if len(gains) != len(ACTIVITY_ORDER):
            raise ValueError("activity_gain needs one entry per activity")
        if any(b <= a for a, b in zip(gains, gains[1:])):
            raise ValueError(
                "activity_gain must strictly increase with exertion rank"
            )
        numeric = (
            list(self.st_drift)
            + list(self.emg_high_amp)
            + list(self.emg_low_amp)
            + list(self.bvp_amp)
            + list(self.eda_level)
            + list(self.pzt_rate_hz)
            + list(gains)
            + [
                self.pzt_amp,
                self.motion_artifact_amp,
                self.baseline_wander_amp,
                self.noise_sigma,
            ]
        )
        if not all(math.isfinite(v) for v in numeric):
            raise ValueError("config values must be finite")
        if (
            min(self.motion_artifact_amp, self.baseline_wander_amp, self.noise_sigma)
            < 0
        ):
            raise ValueError("amplitudes must be non-negative")

    def without_noise(self) -> "SynthConfig":
        """Copy with zero noise and zero interference."""
        from dataclasses import replace

        return replace(
            self, noise_sigma=0.0, motion_artifact_amp=0.0, baseline_wander_amp=0.0
        )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-sample labels at the plux rate; -1 where unannotated."""

    fs_hz: float
    emotion_codes: np.ndarray
    activity_codes: np.ndarray


@dataclass(frozen=True)
class _Timeline:
    emotion_spans: list[tuple[EmotionLabel, float, float]]
    activity_blocks: list[tuple[ActivityLabel, float, float]]
    total_s: float


def _timeline(scenario: Scenario, cfg: SynthConfig) -> _Timeline:
    gap = cfg.rest_gap_s
    if scenario is Scenario.S_E:
        order = [
            EmotionLabel.NEUTRAL,
            EmotionLabel.HPHA,
            EmotionLabel.NEUTRAL,
            EmotionLabel.HNHA,
            EmotionLabel.NEUTRAL,
        ]
        spans = []
        t = gap
        for e in order:
            spans.append((e, t, t + cfg.trial_duration_s))
            t += cfg.trial_duration_s + gap
        total = t
        activities = [(ActivityLabel.SITTING, 0.0, total)]
        return _Timeline(spans, activities, total)
    if scenario is Scenario.S_EA:
        spans = []
        activities = []
        t = gap
        for e in EMOTION_ORDER:
            trial_len = cfg.activity_segment_s * len(ACTIVITY_ORDER)
            spans.append((e, t, t + trial_len))
            for act in ACTIVITY_ORDER:
                activities.append((act, t, t + cfg.activity_segment_s))
                t += cfg.activity_segment_s
            t += gap
        return _Timeline(spans, activities, t)
    # S_A: the activity cycle alone, no emotion annotations.
    activities = []
    t = gap
    for act in ACTIVITY_ORDER:
        activities.append((act, t, t + cfg.activity_segment_s))
        t += cfg.activity_segment_s
    return _Timeline([], activities, t + gap)


def _triangle(phase: np.ndarray) -> np.ndarray:
    """Unit triangle wave: 0 at integer phase, peaks +1 at .25 and -1 at .75."""
    frac = np.mod(phase, 1.0)
    return np.where(
        frac < 0.25,
        4.0 * frac,
        np.where(frac < 0.75, 2.0 - 4.0 * frac, 4.0 * frac - 4.0),
    )


# Rest gaps split into a hold (the block's trend keeps going, so the block
# end itself has no kink), a mid-gap transition, and a lead (the next block's
# trend is already in force, so the block start has no kink either). Every
# kink the low-pass filters react to therefore sits a lead or hold away from
# the nearest annotated sample, and both scenarios enter each block with the
# same local signal shape.
_GAP_HOLD_FRAC = 0.35
_GAP_RAMP_FRAC = 0.30
_GAP_LEAD_FRAC = 1.0 - _GAP_HOLD_FRAC - _GAP_RAMP_FRAC


def _ramp_knots(
    spans: list[tuple[EmotionLabel, float, float]],
    per_emotion_slope: tuple[float, float, float],
    base: float,
    gap_s: float,
    total_s: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear knots: per-span drift lines joined by mid-gap returns.

    Each span's drift line passes through (span start, base) and extends a
    lead before the span and a hold past its end.
    """
    code = {label: i for i, label in enumerate(EMOTION_ORDER)}
    hold = _GAP_HOLD_FRAC * gap_s
    lead = _GAP_LEAD_FRAC * gap_s
    ts = [0.0]
    vs = [base]
    for e, t0, t1 in spans:
        slope = per_emotion_slope[code[e]]
        ts.append(t0 - lead)
        vs.append(base - slope * lead)
        ts.append(t1 + hold)
        vs.append(base + slope * (t1 - t0 + hold))
    ts.append(total_s)
    vs.append(base)
    return np.asarray(ts), np.asarray(vs)


def _level_knots(
    spans: list[tuple[EmotionLabel, float, float]],
    per_emotion_value: tuple[float, float, float],
    rest_value: float,
    gap_s: float,
    total_s: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear knots: constant value per span, mid-gap crossfades.

    The value holds from a lead before each span until a hold past its end,
    then crossfades toward the next span's value (or the rest value after the
    last span).
    """
    code = {label: i for i, label in enumerate(EMOTION_ORDER)}
    hold = _GAP_HOLD_FRAC * gap_s
    lead = _GAP_LEAD_FRAC * gap_s
    ts = [0.0]
    vs = [per_emotion_value[code[spans[0][0]]] if spans else rest_value]
    for i, (e, t0, t1) in enumerate(spans):
        val = per_emotion_value[code[e]]
        if i > 0:
            ts.append(t0 - lead)
            vs.append(val)
        ts.append(t1 + hold)
        vs.append(val)
    ts.append(total_s)
    vs.append(vs[-1] if not spans else rest_value)
    return np.asarray(ts), np.asarray(vs)


def _add_interference(
    signal: np.ndarray,
    t: np.ndarray,
    fs: float,
    kind: ChannelKind,
    blocks: list[tuple[ActivityLabel, float, float]],
    cfg: SynthConfig,
    rng: np.random.Generator,
) -> None:
    if cfg.motion_artifact_amp == 0 and cfg.baseline_wander_amp == 0:
        return
    smooth = max(1, int(round(_ARTIFACT_SMOOTH_S * fs)))
    for act, t0, t1 in blocks:
        gain = cfg.activity_gain[act.value]
        if gain == 0:
            continue
        i0 = int(round(t0 * fs))
        i1 = min(int(round(t1 * fs)), len(signal))
        m = i1 - i0
        if m <= 0:
            continue
        if cfg.motion_artifact_amp > 0:
            rough = rng.standard_normal(m)
            band = np.convolve(rough, np.ones(smooth), mode="same") / math.sqrt(smooth)
            signal[i0:i1] += (
                cfg.motion_artifact_amp * _ARTIFACT_SCALE[kind] * gain * band
            )
        if cfg.baseline_wander_amp > 0:
            f_w = rng.uniform(0.3, 0.5)
            phase = rng.uniform(0.0, 1.0)
            wander = _triangle(f_w * (t[i0:i1] - t0) + phase)
            signal[i0:i1] += (
                cfg.baseline_wander_amp * _WANDER_SCALE[kind] * gain * wander
            )


def generate_recording(
    participant_index: int, scenario: Scenario, cfg: SynthConfig
) -> tuple[Recording, GroundTruth]:
    """One recording plus its per-sample ground truth, pure in all inputs."""
    tl = _timeline(scenario, cfg)
    base_rng = make_rng(cfg.seed, "participant", participant_index)
    base_st = base_rng.uniform(32.5, 34.5)
    base_eda = base_rng.uniform(2.0, 8.0)

    channels: dict[ChannelKind, TimeSeries] = {}
    for kind in (
        ChannelKind.EMG_RAW,
        ChannelKind.EDA,
        ChannelKind.ST,
        ChannelKind.PZT,
        ChannelKind.BVP,
    ):
        fs = cfg.bvp_fs_hz if kind is ChannelKind.BVP else cfg.plux_fs_hz
        n = int(round(tl.total_s * fs))
        t = np.arange(n) / fs

        def envelope(per_emotion: tuple[float, float, float]) -> np.ndarray:
            ts_k, vs_k = _level_knots(
                tl.emotion_spans, per_emotion, per_emotion[0], cfg.rest_gap_s, tl.total_s
            )
            return np.interp(t, ts_k, vs_k)

        if kind is ChannelKind.ST:
            ts_k, vs_k = _ramp_knots(
                tl.emotion_spans, cfg.st_drift, base_st, cfg.rest_gap_s, tl.total_s
            )
            signal = np.interp(t, ts_k, vs_k)
        elif kind is ChannelKind.EDA:
            signal = base_eda + envelope(cfg.eda_level)
            signal += _EDA_WAVE_AMP * _triangle(_EDA_WAVE_HZ * t)
        elif kind is ChannelKind.EMG_RAW:
            signal = envelope(cfg.emg_high_amp) * _triangle(_EMG_HIGH_CARRIER_HZ * t)
            signal += envelope(cfg.emg_low_amp) * _triangle(_EMG_LOW_CARRIER_HZ * t)
        elif kind is ChannelKind.PZT:
            # Accumulated phase keeps the wave continuous through rate changes.
            phase = np.cumsum(envelope(cfg.pzt_rate_hz)) / fs
            signal = 500.0 + cfg.pzt_amp * _triangle(phase)
        else:  # BVP
            signal = envelope(cfg.bvp_amp) * _triangle(_BVP_PULSE_HZ * t)

        art_rng = make_rng(cfg.seed, "artifact", participant_index, scenario, kind)
        _add_interference(signal, t, fs, kind, tl.activity_blocks, cfg, art_rng)
        if cfg.noise_sigma > 0:
            noise_rng = make_rng(cfg.seed, "noise", participant_index, scenario, kind)
            signal += cfg.noise_sigma * _NOISE_SCALE[kind] * noise_rng.standard_normal(n)

        channels[kind] = TimeSeries(
            channel=kind, fs_hz=fs, samples=signal, units=_UNITS[kind]
        )

    emotion_annotations = [
        AnnotationInterval(t0, t1, e) for e, t0, t1 in tl.emotion_spans
    ]
    activity_annotations = [
        AnnotationInterval(t0, t1, act) for act, t0, t1 in tl.activity_blocks
    ]
    rec = Recording(
        participant_id=f"p{participant_index:02d}",
        scenario=scenario,
        channels=channels,
        emotion_annotations=emotion_annotations,
        activity_annotations=activity_annotations,
    ).validate()

    n_ref = int(round(tl.total_s * cfg.plux_fs_hz))
    emotion_codes = np.full(n_ref, -1, dtype=np.int8)
    code = {label: i for i, label in enumerate(EMOTION_ORDER)}
    for e, t0, t1 in tl.emotion_spans:
        i0 = int(round(t0 * cfg.plux_fs_hz))
        i1 = min(int(round(t1 * cfg.plux_fs_hz)), n_ref)
        emotion_codes[i0:i1] = code[e]
    activity_codes = np.full(n_ref, -1, dtype=np.int8)
    for act, t0, t1 in tl.activity_blocks:
        i0 = int(round(t0 * cfg.plux_fs_hz))
        i1 = min(int(round(t1 * cfg.plux_fs_hz)), n_ref)
        activity_codes[i0:i1] = act.value
    truth = GroundTruth(
        fs_hz=cfg.plux_fs_hz,
        emotion_codes=emotion_codes,
        activity_codes=activity_codes,
    )
    return rec, truth


def generate_corpus(cfg: SynthConfig) -> StudyCorpus:
    """One S_E and one S_EA recording per participant."""
    recordings = []
    for pidx in range(cfg.n_participants):
        for scenario in (Scenario.S_E, Scenario.S_EA):
            rec, _ = generate_recording(pidx, scenario, cfg)
            recordings.append(rec)
    return StudyCorpus(recordings).validate()
