"""Recording data model: persistence round-trips, slicing and resampling."""

from __future__ import annotations

import json

import numpy as np
import pytest

from emosig.datamodel import (
    ActivityLabel,
    AnnotationInterval,
    ChannelKind,
    EMOTION_CATEGORIES,
    EmotionLabel,
    Recording,
    RecordingError,
    Scenario,
    StudyCorpus,
    TimeSeries,
    load_recording,
    resample_linear,
    save_recording,
    slice_by_labels,
)


def _ts(kind, fs, samples, units="au"):
    return TimeSeries(channel=kind, fs_hz=fs, samples=np.asarray(samples, float), units=units)


def _simple_recording(rng=None):
    rng = rng or np.random.default_rng(7)
    n = 4000
    channels = {
        ChannelKind.ST: _ts(ChannelKind.ST, 1000.0, 33.0 + rng.standard_normal(n) * 0.01, "celsius"),
        ChannelKind.BVP: _ts(ChannelKind.BVP, 64.0, rng.standard_normal(256), "au"),
    }
    return Recording(
        participant_id="p00",
        scenario=Scenario.S_EA,
        channels=channels,
        emotion_annotations=[
            AnnotationInterval(0.0, 2.0, EmotionLabel.NEUTRAL),
            AnnotationInterval(2.0, 4.0, EmotionLabel.HPHA),
        ],
        activity_annotations=[
            AnnotationInterval(0.0, 1.0, ActivityLabel.SITTING),
            AnnotationInterval(1.0, 4.0, ActivityLabel.WALKING),
        ],
    )


class TestTimeSeries:
    def test_samples_are_immutable_float64(self):
        ts = _ts(ChannelKind.ST, 10.0, [1, 2, 3])
        assert ts.samples.dtype == np.float64
        with pytest.raises(ValueError):
            ts.samples[0] = 9.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            _ts(ChannelKind.ST, 10.0, [1.0, np.nan])

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError, match="fs_hz"):
            _ts(ChannelKind.ST, 0.0, [1.0, 2.0])

    def test_duration(self):
        assert _ts(ChannelKind.ST, 10.0, np.zeros(25)).duration_s == 2.5


class TestAnnotations:
    def test_interval_requires_positive_length(self):
        with pytest.raises(ValueError):
            AnnotationInterval(2.0, 2.0, EmotionLabel.NEUTRAL)
        with pytest.raises(ValueError):
            AnnotationInterval(-1.0, 2.0, EmotionLabel.NEUTRAL)

    def test_overlap_rejected(self):
        rec = _simple_recording()
        rec.emotion_annotations.append(AnnotationInterval(1.5, 2.5, EmotionLabel.HNHA))
        with pytest.raises(RecordingError, match="overlap"):
            rec.validate()

    def test_wrong_label_type_rejected(self):
        rec = _simple_recording()
        rec.emotion_annotations.append(AnnotationInterval(4.0, 5.0, ActivityLabel.SITTING))
        rec.channels[ChannelKind.ST] = _ts(ChannelKind.ST, 1000.0, np.zeros(5000), "celsius")
        rec.channels[ChannelKind.BVP] = _ts(ChannelKind.BVP, 64.0, np.zeros(320), "au")
        with pytest.raises(RecordingError, match="non-emotion"):
            rec.validate()

    def test_annotations_beyond_signal_rejected(self):
        rec = _simple_recording()
        rec.emotion_annotations.append(AnnotationInterval(4.0, 9.0, EmotionLabel.HNHA))
        with pytest.raises(RecordingError, match="extend"):
            rec.validate()

    def test_s_e_requires_sitting_cover(self):
        rec = _simple_recording()
        rec.scenario = Scenario.S_E
        with pytest.raises(RecordingError, match="sitting"):
            rec.validate()

    def test_s_e_with_sitting_cover_passes(self):
        rec = _simple_recording()
        rec.scenario = Scenario.S_E
        rec.activity_annotations = [AnnotationInterval(0.0, 4.0, ActivityLabel.SITTING)]
        rec.validate()


class TestCategories:
    def test_category_table(self):
        hpha = EMOTION_CATEGORIES[EmotionLabel.HPHA]
        assert hpha.pleasure_range == (6.06, 7.9)
        assert hpha.arousal_range == (6.0, 7.54)
        hnha = EMOTION_CATEGORIES[EmotionLabel.HNHA]
        assert hnha.pleasure_range == (1.57, 2.92)
        assert hnha.arousal_range == (6.07, 8.16)
        neutral = EMOTION_CATEGORIES[EmotionLabel.NEUTRAL]
        assert neutral.pleasure_range == (4.18, 5.64)
        assert neutral.arousal_range == (4.6, 5.48)

    def test_exertion_ranks_strictly_increase(self):
        ranks = [a.exertion_rank for a in ActivityLabel]
        assert ranks == sorted(set(ranks))
        assert ActivityLabel.SITTING.exertion_rank == 0
        assert ActivityLabel.WALKING_DOWNSTAIRS.exertion_rank == 4


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        rec = _simple_recording(rng)
        # Adversarial values: shortest-repr edge cases must survive the trip.
        tricky = np.array([0.1 + 0.2, 1e-17, -0.0, 33.123456789012345, 2**-40])
        samples = np.concatenate([tricky, rng.standard_normal(4000 - 5)])
        rec.channels[ChannelKind.ST] = _ts(ChannelKind.ST, 1000.0, samples, "celsius")
        save_recording(rec, tmp_path / "rec")
        back = load_recording(tmp_path / "rec")
        assert back.participant_id == rec.participant_id
        assert back.scenario is rec.scenario
        assert set(back.channels) == set(rec.channels)
        for kind, ts in rec.channels.items():
            got = back.channels[kind]
            assert got.fs_hz == ts.fs_hz
            assert got.units == ts.units
            assert np.array_equal(
                got.samples.view(np.uint64), ts.samples.view(np.uint64)
            ), f"{kind} not bit-exact"
        assert back.emotion_annotations == rec.emotion_annotations
        assert back.activity_annotations == rec.activity_annotations

    def test_nan_token_reports_line(self, tmp_path):
        rec = _simple_recording()
        out = save_recording(rec, tmp_path / "rec")
        csv = out / "BVP.csv"
        lines = csv.read_text().splitlines()
        lines[3] = lines[3].split(",")[0] + ",NaN"
        csv.write_text("\n".join(lines) + "\n")
        with pytest.raises(RecordingError, match=r"BVP\.csv.*line 4"):
            load_recording(out)

    def test_malformed_number_reports_line(self, tmp_path):
        rec = _simple_recording()
        out = save_recording(rec, tmp_path / "rec")
        csv = out / "BVP.csv"
        lines = csv.read_text().splitlines()
        lines[5] = lines[5].split(",")[0] + ",12.0.5"
        csv.write_text("\n".join(lines) + "\n")
        with pytest.raises(RecordingError, match=r"line 6"):
            load_recording(out)

    def test_missing_channel_file(self, tmp_path):
        out = save_recording(_simple_recording(), tmp_path / "rec")
        (out / "ST.csv").unlink()
        with pytest.raises(RecordingError, match="missing channel file"):
            load_recording(out)

    def test_undeclared_channel_file(self, tmp_path):
        out = save_recording(_simple_recording(), tmp_path / "rec")
        (out / "EDA.csv").write_text("sample_index,value\n0,1.0\n")
        with pytest.raises(RecordingError, match="not declared"):
            load_recording(out)

    def test_duplicate_channel_in_sidecar(self, tmp_path):
        out = save_recording(_simple_recording(), tmp_path / "rec")
        sidecar = out / "recording.json"
        text = sidecar.read_text()
        text = text.replace('"ST": {', '"ST": {"fs_hz": 1.0, "units": "x"}, "ST": {', 1)
        sidecar.write_text(text)
        with pytest.raises(RecordingError, match="duplicate key"):
            load_recording(out)

    def test_unknown_scenario(self, tmp_path):
        out = save_recording(_simple_recording(), tmp_path / "rec")
        sidecar = out / "recording.json"
        data = json.loads(sidecar.read_text())
        data["scenario"] = "S_X"
        sidecar.write_text(json.dumps(data))
        with pytest.raises(RecordingError, match="unknown scenario"):
            load_recording(out)

    def test_bad_header(self, tmp_path):
        out = save_recording(_simple_recording(), tmp_path / "rec")
        csv = out / "ST.csv"
        body = csv.read_text().splitlines()[1:]
        csv.write_text("idx,val\n" + "\n".join(body) + "\n")
        with pytest.raises(RecordingError, match="header"):
            load_recording(out)

    def test_corpus_duplicate_pair_rejected(self):
        rec_a = _simple_recording()
        rec_b = _simple_recording()
        with pytest.raises(RecordingError, match="duplicate recording"):
            StudyCorpus([rec_a, rec_b]).validate()


class TestSliceByLabels:
    def test_intersection_labels_and_order(self):
        rec = _simple_recording()
        segs = slice_by_labels(rec)
        st = [s for s in segs if s.ts.channel is ChannelKind.ST]
        # Emotion blocks [0,2),[2,4) crossed with activities [0,1),[1,4):
        # three intersections in start order.
        assert [(s.emotion, s.activity) for s in st] == [
            (EmotionLabel.NEUTRAL, ActivityLabel.SITTING),
            (EmotionLabel.NEUTRAL, ActivityLabel.WALKING),
            (EmotionLabel.HPHA, ActivityLabel.WALKING),
        ]
        assert [s.ts.n for s in st] == [1000, 1000, 2000]
        assert [s.start_sample for s in st] == [0, 1000, 2000]
        # Channels of the same intersection share segment_index.
        by_seg = {}
        for s in segs:
            by_seg.setdefault(s.segment_index, []).append(s.ts.channel)
        assert all(
            set(chs) == {ChannelKind.ST, ChannelKind.BVP} for chs in by_seg.values()
        )

    def test_boundary_sample_ownership(self):
        # Sample at exactly t=end belongs to the next interval, never both.
        rec = _simple_recording()
        segs = [s for s in slice_by_labels(rec) if s.ts.channel is ChannelKind.ST]
        src = rec.channels[ChannelKind.ST].samples
        assert np.array_equal(segs[0].ts.samples, src[0:1000])
        assert np.array_equal(segs[1].ts.samples, src[1000:2000])
        total = sum(s.ts.n for s in segs)
        assert total == 4000

    def test_unannotated_gap_excluded(self):
        rec = _simple_recording()
        rec.emotion_annotations = [AnnotationInterval(0.5, 1.5, EmotionLabel.HNHA)]
        segs = [s for s in slice_by_labels(rec) if s.ts.channel is ChannelKind.ST]
        assert [(s.ts.n, s.start_sample) for s in segs] == [(500, 500), (500, 1000)]

    def test_segment_values_match_source(self):
        rec = _simple_recording()
        for seg in slice_by_labels(rec):
            src = rec.channels[seg.ts.channel].samples
            assert np.array_equal(
                seg.ts.samples, src[seg.start_sample : seg.start_sample + seg.ts.n]
            )


class TestResample:
    def test_identity_at_original_rate(self):
        rng = np.random.default_rng(3)
        ts = _ts(ChannelKind.BVP, 64.0, rng.standard_normal(257))
        out = resample_linear(ts, 64.0)
        assert out.fs_hz == 64.0
        assert np.array_equal(out.samples, ts.samples)

    def test_two_point_upsample(self):
        ts = _ts(ChannelKind.BVP, 1.0, [1.0, 3.0])
        out = resample_linear(ts, 2.0)
        assert np.array_equal(out.samples, [1.0, 2.0, 3.0])

    def test_ramp_downsample_oracle(self):
        # A ramp at 100 Hz resampled to 50 Hz must equal the directly
        # constructed ramp at 50 Hz, max abs deviation 0.
        ramp = _ts(ChannelKind.ST, 100.0, np.arange(100, dtype=float))
        out = resample_linear(ramp, 50.0)
        direct = np.arange(50, dtype=float) * 2.0
        assert out.n == 50
        assert np.max(np.abs(out.samples - direct)) == 0.0

    def test_never_extrapolates(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(2, 200))
            fs = float(rng.uniform(3.0, 500.0))
            target = float(rng.uniform(3.0, 500.0))
            ts = _ts(ChannelKind.EDA, fs, rng.standard_normal(n))
            out = resample_linear(ts, target)
            assert out.n >= 1
            last_t = (out.n - 1) / target
            assert last_t <= (n - 1) / fs + 1e-9
            assert np.all(out.samples <= np.max(ts.samples) + 1e-12)
            assert np.all(out.samples >= np.min(ts.samples) - 1e-12)

    def test_rejects_too_short(self):
        with pytest.raises(ValueError, match="at least 2"):
            resample_linear(_ts(ChannelKind.ST, 10.0, [1.0]), 5.0)
