"""Signal conditioning: IIR filter design, filtering, smoothing, routing.

Filters are Butterworth designs built from the analog prototype. The analog
cutoff is prewarped so the bilinear transform lands the -3 dB point exactly
on the requested digital cutoff, poles and zeros map through the bilinear
transform, and conjugate pairs collapse into second-order sections. Each
section is normalized to unit gain at its reference frequency (DC for
low-pass, Nyquist for high-pass) so coefficient magnitudes stay tame and the
cascade has unit passband gain by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.signal import sosfilt

from .datamodel import ChannelKind, Recording, TimeSeries

_POLE_IMAG_TOL = 1e-9


class FilterKind(Enum):
    LOW_PASS = "low_pass"
    HIGH_PASS = "high_pass"


class FilterMode(Enum):
    """CAUSAL runs the cascade forward once from zero initial state.

    ZERO_PHASE runs it forward then backward, squaring the magnitude response
    and cancelling phase, at the cost of needing the whole signal up front.
    """

    CAUSAL = "causal"
    ZERO_PHASE = "zero_phase"


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    order: int
    cutoff_hz: float
    fs_hz: float

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not (self.fs_hz > 0) or not math.isfinite(self.fs_hz):
            raise ValueError(f"fs_hz must be positive, got {self.fs_hz}")
        if not (0.0 < self.cutoff_hz < self.fs_hz / 2):
            raise ValueError(
                f"cutoff_hz must lie in (0, fs/2) = (0, {self.fs_hz / 2}), "
                f"got {self.cutoff_hz}"
            )


@dataclass(frozen=True, eq=False)
class IIRFilter:
    """Cascade of second-order sections in ``[b0 b1 b2 a0 a1 a2]`` rows.

    ``a0`` is always 1. First-order sections appear with ``b2 == a2 == 0``.
    ``overall_gain`` multiplies the cascade output once.
    """

    spec: FilterSpec
    sections: np.ndarray
    overall_gain: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.sections, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 6:
            raise ValueError("sections must have shape (n_sections, 6)")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "sections", arr)

    @property
    def order(self) -> int:
        first_order = np.sum(self.sections[:, 5] == 0.0)
        return int(2 * len(self.sections) - first_order)

    @property
    def fs_hz(self) -> float:
        return self.spec.fs_hz

    def poles(self) -> np.ndarray:
        """Digital poles of every section, for stability checks."""
        out = []
        for _, _, _, _, a1, a2 in self.sections:
            if a2 == 0.0:
                out.append(complex(-a1, 0.0))
            else:
                out.extend(np.roots([1.0, a1, a2]))
        return np.asarray(out, dtype=np.complex128)


def _prototype_poles(order: int) -> np.ndarray:
    k = np.arange(1, order + 1, dtype=np.float64)
    theta = np.pi * (2.0 * k + order - 1.0) / (2.0 * order)
    poles = np.exp(1j * theta)
    # Odd orders carry one real pole at exactly -1; scrub rounding dust.
    real = np.abs(poles.imag) < _POLE_IMAG_TOL
    poles[real] = poles[real].real
    return poles


@lru_cache(maxsize=None)
def design_butterworth(spec: FilterSpec) -> IIRFilter:
    """Design the Butterworth cascade for the given spec.

    The prewarped analog cutoff is 2 fs tan(pi fc / fs), which makes the
    digital magnitude at fc equal 1/sqrt(2) exactly. Sections are ordered by
    increasing pole radius so the sections closest to the unit circle run
    last.
    """
    fs = spec.fs_hz
    warped = 2.0 * fs * math.tan(math.pi * spec.cutoff_hz / fs)
    proto = _prototype_poles(spec.order)
    if spec.kind is FilterKind.LOW_PASS:
        analog = warped * proto
    else:
        analog = warped / proto
    digital = (2.0 * fs + analog) / (2.0 * fs - analog)
    if np.any(np.abs(digital) >= 1.0):
        raise ValueError(
            f"unstable design: pole radius {np.max(np.abs(digital))} >= 1"
        )

    rows: list[tuple[float, float, list[float]]] = []
    for p in digital:
        if p.imag > _POLE_IMAG_TOL:
            a1 = -2.0 * p.real
            a2 = abs(p) ** 2
            if spec.kind is FilterKind.LOW_PASS:
                g = (1.0 + a1 + a2) / 4.0
                b = [g, 2.0 * g, g]
            else:
                g = (1.0 - a1 + a2) / 4.0
                b = [g, -2.0 * g, g]
            rows.append((abs(p), a1, b + [1.0, a1, a2]))
        elif abs(p.imag) <= _POLE_IMAG_TOL:
            a1 = -p.real
            if spec.kind is FilterKind.LOW_PASS:
                g = (1.0 + a1) / 2.0
                b = [g, g, 0.0]
            else:
                g = (1.0 - a1) / 2.0
                b = [g, -g, 0.0]
            rows.append((abs(p.real), a1, b + [1.0, a1, 0.0]))
    rows.sort(key=lambda r: (r[0], r[1]))
    sections = np.asarray([r[2] for r in rows], dtype=np.float64)
    return IIRFilter(spec=spec, sections=sections, overall_gain=1.0)


def freq_response(filt: IIRFilter, f_hz: float | np.ndarray) -> np.ndarray | complex:
    """Complex response at the given frequencies in Hz."""
    f = np.asarray(f_hz, dtype=np.float64)
    z1 = np.exp(-2j * np.pi * f / filt.fs_hz)
    z2 = z1 * z1
    h = np.full(f.shape, filt.overall_gain, dtype=np.complex128)
    for b0, b1, b2, _, a1, a2 in filt.sections:
        h *= (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
    if np.isscalar(f_hz):
        return complex(h[()])
    return h


def apply_iir(
    filt: IIRFilter, ts: TimeSeries, mode: FilterMode = FilterMode.ZERO_PHASE
) -> TimeSeries:
    """Run the cascade over a series, returning a new series.

    CAUSAL filters forward once from zero initial state. ZERO_PHASE filters
    forward, reverses, filters again and reverses back; it requires at least
    3x the filter order in samples so both passes see enough signal.
    """
    if abs(filt.fs_hz - ts.fs_hz) > 1e-9:
        raise ValueError(
            f"filter designed for {filt.fs_hz} Hz applied to {ts.fs_hz} Hz series"
        )
    # sosfilt needs writable buffers for both coefficients and signal
    sos = np.array(filt.sections)
    x = np.array(ts.samples)
    if mode is FilterMode.CAUSAL:
        y = sosfilt(sos, x) * filt.overall_gain
    elif mode is FilterMode.ZERO_PHASE:
        if ts.n < 3 * filt.order:
            raise ValueError(
                f"zero-phase filtering needs at least {3 * filt.order} samples, "
                f"got {ts.n}"
            )
        fwd = sosfilt(sos, x)
        y = sosfilt(sos, np.ascontiguousarray(fwd[::-1]))[::-1] * (
            filt.overall_gain**2
        )
    else:  # pragma: no cover
        raise ValueError(f"unknown mode {mode!r}")
    return ts.with_samples(np.ascontiguousarray(y))


def rolling_median(ts: TimeSeries, width: int = 7) -> TimeSeries:
    """Centered rolling median with edge replication at the boundaries."""
    if width < 1 or width % 2 == 0:
        raise ValueError(f"width must be odd and >= 1, got {width}")
    if width == 1:
        return ts
    half = width // 2
    padded = np.pad(ts.samples, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, width)
    return ts.with_samples(np.median(windows, axis=-1))


def normalize_percentage(ts: TimeSeries) -> TimeSeries:
    """Min-max scale onto [0, 100]; a constant series maps to 50 everywhere."""
    lo = float(np.min(ts.samples))
    hi = float(np.max(ts.samples))
    if hi == lo:
        scaled = np.full(ts.n, 50.0)
    else:
        # Divide before scaling so the extremes land on 0 and 100 exactly.
        scaled = (ts.samples - lo) / (hi - lo) * 100.0
    return ts.with_samples(scaled, units="percent")


# ---------------------------------------------------------------------------
# Channel conditioning pipelines


@dataclass(frozen=True)
class FilterStep:
    kind: FilterKind
    cutoff_hz: float
    order: int


@dataclass(frozen=True)
class MedianStep:
    width: int = 7


@dataclass(frozen=True)
class NormalizeStep:
    pass


@dataclass(frozen=True)
class PipelineStage:
    """Derives one output channel from one input channel."""

    source: ChannelKind
    target: ChannelKind
    steps: tuple[object, ...]


#: Fixed conditioning routes. EMG splits into a high band (activation bursts)
#: and a low band (slow tension level); EDA and ST keep only their slow
#: components; the respiration belt is despiked, smoothed and rescaled to a
#: percentage; BVP passes through untouched.
PREPROCESS_PIPELINES: tuple[PipelineStage, ...] = (
    PipelineStage(
        ChannelKind.EMG_RAW,
        ChannelKind.EMG_H,
        (FilterStep(FilterKind.HIGH_PASS, 40.0, 5),),
    ),
    PipelineStage(
        ChannelKind.EMG_RAW,
        ChannelKind.EMG_L,
        (FilterStep(FilterKind.LOW_PASS, 5.0, 4),),
    ),
    PipelineStage(
        ChannelKind.EDA,
        ChannelKind.EDA,
        (FilterStep(FilterKind.LOW_PASS, 0.5, 4),),
    ),
    PipelineStage(
        ChannelKind.ST,
        ChannelKind.ST,
        (FilterStep(FilterKind.LOW_PASS, 0.25, 4),),
    ),
    PipelineStage(
        ChannelKind.PZT,
        ChannelKind.PZT,
        (MedianStep(7), FilterStep(FilterKind.LOW_PASS, 1.0, 1), NormalizeStep()),
    ),
    PipelineStage(ChannelKind.BVP, ChannelKind.BVP, ()),
)


def _run_steps(
    ts: TimeSeries, target: ChannelKind, steps: tuple[object, ...], mode: FilterMode
) -> TimeSeries:
    out = ts.with_samples(ts.samples, channel=target)
    for step in steps:
        if isinstance(step, FilterStep):
            filt = design_butterworth(
                FilterSpec(step.kind, step.order, step.cutoff_hz, out.fs_hz)
            )
            out = apply_iir(filt, out, mode)
        elif isinstance(step, MedianStep):
            out = rolling_median(out, step.width)
        elif isinstance(step, NormalizeStep):
            out = normalize_percentage(out)
        else:  # pragma: no cover
            raise TypeError(f"unknown pipeline step {step!r}")
    return out


def preprocess(rec: Recording, mode: FilterMode = FilterMode.ZERO_PHASE) -> Recording:
    """Condition every raw channel of a recording along its fixed route.

    Returns a new recording whose channel set is the routed outputs (EMG_RAW
    is replaced by EMG_H and EMG_L). Annotations and identity are preserved.
    Recordings already holding derived channels are rejected.
    """
    sources = {stage.source for stage in PREPROCESS_PIPELINES}
    for kind in rec.channels:
        if kind not in sources:
            raise ValueError(
                f"channel {kind.value} is a derived channel, not raw input"
            )
    channels: dict[ChannelKind, TimeSeries] = {}
    for stage in PREPROCESS_PIPELINES:
        if stage.source not in rec.channels:
            continue
        channels[stage.target] = _run_steps(
            rec.channels[stage.source], stage.target, stage.steps, mode
        )
    return Recording(
        participant_id=rec.participant_id,
        scenario=rec.scenario,
        channels=channels,
        emotion_annotations=list(rec.emotion_annotations),
        activity_annotations=list(rec.activity_annotations),
    )


def format_filter_dump(filt: IIRFilter) -> str:
    """Plain-text coefficient dump, one section per line, 17 significant digits."""
    lines = [
        " ".join(f"{coef:.17g}" for coef in row) for row in np.asarray(filt.sections)
    ]
    lines.append(f"gain {filt.overall_gain:.17g}")
    return "\n".join(lines) + "\n"
