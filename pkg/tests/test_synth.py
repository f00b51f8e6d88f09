"""Generator contracts: construction identities, determinism, structure."""

from dataclasses import replace

import numpy as np
import pytest

from emosig.datamodel import (
    ACTIVITY_ORDER,
    ActivityLabel,
    ChannelKind,
    EMOTION_ORDER,
    EmotionLabel,
    Scenario,
    resample_linear,
    slice_by_labels,
)
from emosig.dsp import FilterMode, preprocess
from emosig.features import FeatureSetKind, extract_table
from emosig.learn import ModelKind, predict_batch, train_arrays
from emosig.segmentation import WindowSpec, align_windows, segment
from emosig.synth import GroundTruth, SynthConfig, generate_corpus, generate_recording


def quiet_config(**overrides) -> SynthConfig:
    cfg = SynthConfig(**overrides)
    return cfg.without_noise()


def small_config(**overrides) -> SynthConfig:
    defaults = dict(n_participants=2, trial_duration_s=40.0)
    defaults.update(overrides)
    return SynthConfig(**defaults)


def fitted_slope_per_second(samples: np.ndarray, fs: float) -> float:
    n = len(samples)
    idx = np.arange(1, n + 1, dtype=np.float64)
    sxx = n * (n * n - 1) / 12.0
    per_sample = float(np.sum((idx - idx.mean()) * (samples - samples.mean())) / sxx)
    return per_sample * fs


def selected_tables(rec, spec):
    pre = preprocess(rec, FilterMode.ZERO_PHASE)
    channels = dict(pre.channels)
    channels[ChannelKind.BVP] = resample_linear(channels[ChannelKind.BVP], 80.0)
    pre = replace(pre, channels=channels)
    per_channel = {}
    for kind in (ChannelKind.BVP, ChannelKind.ST, ChannelKind.EMG_H, ChannelKind.EMG_L):
        windows = []
        for seg in slice_by_labels(pre):
            if seg.ts.channel is kind:
                windows.extend(segment(seg, spec))
        per_channel[kind] = windows
    return extract_table(align_windows(per_channel, spec), FeatureSetKind.SELECTED)


class TestConfigValidation:
    def test_gain_ladder_must_strictly_increase(self):
        with pytest.raises(ValueError, match="strictly increase"):
            SynthConfig(activity_gain=(0.0, 1.0, 1.0, 3.5, 5.0))
        with pytest.raises(ValueError, match="strictly increase"):
            SynthConfig(activity_gain=(0.0, 2.0, 1.0, 3.5, 5.0))

    def test_gain_ladder_needs_five_entries(self):
        with pytest.raises(ValueError, match="one entry per activity"):
            SynthConfig(activity_gain=(0.0, 1.0, 2.0))

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            SynthConfig(noise_sigma=-0.1)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            SynthConfig(st_drift=(0.0, float("nan"), 0.02))

    def test_participants_and_durations(self):
        with pytest.raises(ValueError):
            SynthConfig(n_participants=0)
        with pytest.raises(ValueError):
            SynthConfig(trial_duration_s=0.0)

    def test_without_noise_zeroes_the_three_knobs(self):
        cfg = SynthConfig().without_noise()
        assert cfg.noise_sigma == 0.0
        assert cfg.motion_artifact_amp == 0.0
        assert cfg.baseline_wander_amp == 0.0


class TestConstructionIdentities:
    def test_st_block_is_exactly_baseline_plus_drift(self):
        drifts = (0.003, 0.005, 0.02)
        cfg = quiet_config(st_drift=drifts)
        rec, _ = generate_recording(0, Scenario.S_E, cfg)
        st = rec.channels[ChannelKind.ST]
        per_emotion = dict(zip(EMOTION_ORDER, drifts))
        for interval in rec.emotion_annotations:
            i0 = int(round(interval.start_s * st.fs_hz))
            i1 = int(round(interval.end_s * st.fs_hz))
            block = st.samples[i0:i1]
            drift = per_emotion[interval.label]
            t_rel = np.arange(i1 - i0) / st.fs_hz
            baseline = block[0]
            assert np.max(np.abs(block - (baseline + drift * t_rel))) < 1e-9
            assert abs(fitted_slope_per_second(block, st.fs_hz) - drift) < 1e-9

    def test_neutral_block_flat_at_baseline_by_default(self):
        cfg = quiet_config()
        rec, _ = generate_recording(2, Scenario.S_E, cfg)
        st = rec.channels[ChannelKind.ST]
        first = rec.emotion_annotations[0]
        assert first.label is EmotionLabel.NEUTRAL
        i0 = int(round(first.start_s * st.fs_hz))
        i1 = int(round(first.end_s * st.fs_hz))
        block = st.samples[i0:i1]
        assert np.max(np.abs(block - block[0])) < 1e-12

    def test_drift_rank_recoverable_from_st_slope_feature(self):
        cfg = quiet_config()
        rec_e, _ = generate_recording(0, Scenario.S_E, cfg)
        table = selected_tables(rec_e, WindowSpec(300))
        col = table.names.index("ST.slope_sqrt")
        class_means = [
            float(table.x[table.emotions == code, col].mean()) for code in range(3)
        ]
        # default drifts order NEUTRAL < HPHA < HNHA
        assert class_means[0] < class_means[1] < class_means[2]


class TestDeterminism:
    def test_same_inputs_bit_identical(self):
        cfg = small_config()
        a, truth_a = generate_recording(1, Scenario.S_EA, cfg)
        b, truth_b = generate_recording(1, Scenario.S_EA, cfg)
        assert a.channels.keys() == b.channels.keys()
        for kind in a.channels:
            assert np.array_equal(a.channels[kind].samples, b.channels[kind].samples)
        assert a.emotion_annotations == b.emotion_annotations
        assert a.activity_annotations == b.activity_annotations
        assert np.array_equal(truth_a.emotion_codes, truth_b.emotion_codes)
        assert np.array_equal(truth_a.activity_codes, truth_b.activity_codes)

    def test_seed_changes_samples(self):
        a, _ = generate_recording(0, Scenario.S_E, small_config(seed=1))
        b, _ = generate_recording(0, Scenario.S_E, small_config(seed=2))
        assert not np.array_equal(
            a.channels[ChannelKind.ST].samples, b.channels[ChannelKind.ST].samples
        )

    def test_participants_differ(self):
        cfg = small_config()
        a, _ = generate_recording(0, Scenario.S_E, cfg)
        b, _ = generate_recording(1, Scenario.S_E, cfg)
        assert not np.array_equal(
            a.channels[ChannelKind.ST].samples, b.channels[ChannelKind.ST].samples
        )


class TestStructure:
    def test_s_ea_activity_annotations_per_trial(self):
        cfg = SynthConfig()
        rec, _ = generate_recording(0, Scenario.S_EA, cfg)
        assert len(rec.emotion_annotations) == 3
        assert [iv.label for iv in rec.emotion_annotations] == list(EMOTION_ORDER)
        assert len(rec.activity_annotations) == 15
        for trial_idx, trial in enumerate(rec.emotion_annotations):
            inside = [
                iv
                for iv in rec.activity_annotations
                if trial.start_s <= iv.start_s and iv.end_s <= trial.end_s
            ]
            assert len(inside) == 5
            assert [iv.label for iv in inside] == list(ACTIVITY_ORDER)
            for k, iv in enumerate(inside):
                assert iv.duration_s == pytest.approx(cfg.activity_segment_s)
                assert iv.start_s == pytest.approx(
                    trial.start_s + k * cfg.activity_segment_s
                )

    def test_s_e_block_order_and_sitting_cover(self):
        cfg = SynthConfig()
        rec, _ = generate_recording(0, Scenario.S_E, cfg)
        labels = [iv.label for iv in rec.emotion_annotations]
        assert labels == [
            EmotionLabel.NEUTRAL,
            EmotionLabel.HPHA,
            EmotionLabel.NEUTRAL,
            EmotionLabel.HNHA,
            EmotionLabel.NEUTRAL,
        ]
        for iv in rec.emotion_annotations:
            assert iv.duration_s == pytest.approx(cfg.trial_duration_s)
        assert len(rec.activity_annotations) == 1
        sit = rec.activity_annotations[0]
        assert sit.label is ActivityLabel.SITTING
        assert sit.start_s == 0.0
        assert sit.end_s >= rec.emotion_annotations[-1].end_s

    def test_channel_rates_and_lengths(self):
        cfg = SynthConfig()
        rec, truth = generate_recording(0, Scenario.S_E, cfg)
        total = 5 * cfg.trial_duration_s + 6 * cfg.rest_gap_s
        for kind, ts in rec.channels.items():
            expect_fs = cfg.bvp_fs_hz if kind is ChannelKind.BVP else cfg.plux_fs_hz
            assert ts.fs_hz == expect_fs
            assert ts.n == int(round(total * expect_fs))
        assert truth.fs_hz == cfg.plux_fs_hz
        assert len(truth.emotion_codes) == int(round(total * cfg.plux_fs_hz))

    def test_ground_truth_matches_annotations(self):
        cfg = small_config()
        rec, truth = generate_recording(1, Scenario.S_EA, cfg)
        n = len(truth.emotion_codes)
        fs = truth.fs_hz
        expect_emotion = np.full(n, -1, dtype=np.int8)
        for iv in rec.emotion_annotations:
            i0, i1 = int(round(iv.start_s * fs)), int(round(iv.end_s * fs))
            expect_emotion[i0:i1] = EMOTION_ORDER.index(iv.label)
        expect_activity = np.full(n, -1, dtype=np.int8)
        for iv in rec.activity_annotations:
            i0, i1 = int(round(iv.start_s * fs)), int(round(iv.end_s * fs))
            expect_activity[i0:i1] = iv.label.value
        assert np.array_equal(truth.emotion_codes, expect_emotion)
        assert np.array_equal(truth.activity_codes, expect_activity)
        # rest gaps exist and are unlabeled
        assert np.any(truth.emotion_codes == -1)

    def test_corpus_has_both_scenarios_per_participant(self):
        corpus = generate_corpus(small_config(n_participants=3))
        assert len(corpus.recordings) == 6
        assert corpus.participants() == ["p00", "p01", "p02"]
        for pid in corpus.participants():
            assert corpus.get(pid, Scenario.S_E) is not None
            assert corpus.get(pid, Scenario.S_EA) is not None

    def test_baselines_shared_across_scenarios(self):
        cfg = small_config().without_noise()
        rec_e, _ = generate_recording(1, Scenario.S_E, cfg)
        rec_ea, _ = generate_recording(1, Scenario.S_EA, cfg)
        # both recordings open in rest at the participant's ST/EDA baselines
        assert (
            rec_e.channels[ChannelKind.ST].samples[0]
            == rec_ea.channels[ChannelKind.ST].samples[0]
        )
        assert (
            rec_e.channels[ChannelKind.EDA].samples[0]
            == rec_ea.channels[ChannelKind.EDA].samples[0]
        )

    def test_baselines_differ_across_participants(self):
        cfg = small_config().without_noise()
        a, _ = generate_recording(0, Scenario.S_E, cfg)
        b, _ = generate_recording(1, Scenario.S_E, cfg)
        assert (
            a.channels[ChannelKind.ST].samples[0]
            != b.channels[ChannelKind.ST].samples[0]
        )


class TestInterference:
    def test_sitting_segments_untouched_by_interference(self):
        quiet = quiet_config()
        loud = replace(
            quiet, motion_artifact_amp=1.0, baseline_wander_amp=1.0
        )
        rec_q, _ = generate_recording(0, Scenario.S_EA, quiet)
        rec_l, truth = generate_recording(0, Scenario.S_EA, loud)
        fs = truth.fs_hz
        emg_q = rec_q.channels[ChannelKind.EMG_RAW].samples
        emg_l = rec_l.channels[ChannelKind.EMG_RAW].samples
        sitting = [
            iv for iv in rec_l.activity_annotations if iv.label is ActivityLabel.SITTING
        ]
        assert sitting
        for iv in sitting:
            i0, i1 = int(round(iv.start_s * fs)), int(round(iv.end_s * fs))
            assert np.array_equal(emg_q[i0:i1], emg_l[i0:i1])
        changed = [
            iv
            for iv in rec_l.activity_annotations
            if iv.label is not ActivityLabel.SITTING
        ]
        for iv in changed:
            i0, i1 = int(round(iv.start_s * fs)), int(round(iv.end_s * fs))
            assert not np.array_equal(emg_q[i0:i1], emg_l[i0:i1])

    def test_interference_power_increases_with_exertion(self):
        cfg = replace(
            quiet_config(), motion_artifact_amp=1.0, baseline_wander_amp=1.0
        )
        rec, truth = generate_recording(0, Scenario.S_EA, cfg)
        fs = truth.fs_hz
        emg = rec.channels[ChannelKind.EMG_RAW].samples
        trial = rec.emotion_annotations[0]
        powers = []
        for iv in rec.activity_annotations:
            if not (trial.start_s <= iv.start_s and iv.end_s <= trial.end_s):
                continue
            i0, i1 = int(round(iv.start_s * fs)), int(round(iv.end_s * fs))
            # first differences suppress the emotion carrier, leaving artifact
            powers.append(float(np.var(np.diff(emg[i0:i1]))))
        assert len(powers) == 5
        assert all(b > a for a, b in zip(powers, powers[1:]))


class TestSeparability:
    def test_zero_noise_knn_is_perfect_across_activities(self):
        cfg = quiet_config()
        for participant in (0, 1):
            rec_e, _ = generate_recording(participant, Scenario.S_E, cfg)
            rec_ea, _ = generate_recording(participant, Scenario.S_EA, cfg)
            # 250-300 ms windows straddle block edges the hardest
            for length_ms in (250, 300):
                train = selected_tables(rec_e, WindowSpec(length_ms))
                test = selected_tables(rec_ea, WindowSpec(length_ms))
                model = train_arrays(
                    ModelKind.KNN3, train.x, train.emotions, seed=participant
                )
                pred = predict_batch(model, test.x)
                assert np.array_equal(pred, test.emotions)
