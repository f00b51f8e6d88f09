"""Cross-context evaluation harness: train while sitting, test under load.

For every participant the S_E recording (emotions while sitting) supplies the
training windows and the S_EA recording (the same emotions during five
physical activities) supplies the test windows. The harness sweeps window
lengths, classifiers, feature sets and repeats, scores each combination
overall and per activity, and aggregates into four plot-ready tables.

Nothing derived from S_EA data can reach training: training tables are built
from the S_E recording alone, and the standardizer is fit inside the model
trainer on the training matrix.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import derive_seed
from .datamodel import (
    ACTIVITY_ORDER,
    ActivityLabel,
    CHANNEL_ORDER,
    ChannelKind,
    EMOTION_ORDER,
    EmotionLabel,
    Recording,
    Scenario,
    StudyCorpus,
    resample_linear,
    slice_by_labels,
)
from .dsp import FilterMode, preprocess
from .features import FeatureSetKind, FeatureTable, extract_table
from .learn import (
    EvaluationMetrics,
    ForestParams,
    ModelKind,
    evaluate_codes,
    predict_batch,
    train_arrays,
)
from .segmentation import WindowSpec, align_windows, segment, window_sweep


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep definition. `jobs` only controls execution, not results."""

    window_specs: tuple[WindowSpec, ...] = field(
        default_factory=lambda: tuple(window_sweep())
    )
    classifier_kinds: tuple[ModelKind, ...] = (
        ModelKind.KNN3,
        ModelKind.DT,
        ModelKind.RF,
    )
    feature_set_kinds: tuple[FeatureSetKind, ...] = (
        FeatureSetKind.ALL,
        FeatureSetKind.SELECTED,
    )
    repeats: int = 10
    base_seed: int = 42
    filter_mode: FilterMode = FilterMode.ZERO_PHASE
    required_channels: tuple[ChannelKind, ...] = (
        ChannelKind.BVP,
        ChannelKind.EDA,
        ChannelKind.ST,
        ChannelKind.PZT,
        ChannelKind.EMG_H,
        ChannelKind.EMG_L,
    )
    rate_compatible_resample: bool = True
    forest: ForestParams = field(default_factory=ForestParams)
    jobs: int | None = None

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.window_specs:
            raise ValueError("window_specs must not be empty")
        if not self.classifier_kinds or not self.feature_set_kinds:
            raise ValueError("need at least one classifier and one feature set")
        if len({spec.length_ms for spec in self.window_specs}) != len(
            self.window_specs
        ):
            raise ValueError("duplicate window lengths in window_specs")


@dataclass(frozen=True)
class RunKey:
    participant_id: str
    classifier: ModelKind
    feature_set: FeatureSetKind
    window_ms: int
    repeat: int


@dataclass(frozen=True, eq=False)
class RunEntry:
    overall: EvaluationMetrics
    per_activity: dict[ActivityLabel, EvaluationMetrics]


@dataclass(frozen=True)
class SkipRecord:
    participant_id: str
    window_ms: int
    reason: str


@dataclass(frozen=True, eq=False)
class RunResult:
    entries: dict[RunKey, RunEntry]
    skips: tuple[SkipRecord, ...]
    config: ExperimentConfig
    corpus_hash: str


def corpus_content_hash(corpus: StudyCorpus) -> str:
    """SHA-256 over every sample, annotation and identity field of a corpus."""
    h = hashlib.sha256()

    def put(text: str) -> None:
        token = text.encode("utf-8")
        h.update(len(token).to_bytes(4, "little"))
        h.update(token)

    for rec in sorted(
        corpus.recordings, key=lambda r: (r.participant_id, r.scenario.value)
    ):
        put(rec.participant_id)
        put(rec.scenario.value)
        for kind in CHANNEL_ORDER:
            if kind not in rec.channels:
                continue
            ts = rec.channels[kind]
            put(kind.value)
            put(repr(float(ts.fs_hz)))
            put(ts.units)
            h.update(np.ascontiguousarray(ts.samples, dtype="<f8").tobytes())
        for name, intervals in (
            ("emotion", rec.emotion_annotations),
            ("activity", rec.activity_annotations),
        ):
            for iv in intervals:
                put(f"{name} {repr(iv.start_s)} {repr(iv.end_s)} {iv.label.name}")
    return h.hexdigest()


def alignment_rate(fs_hz: float, specs: tuple[WindowSpec, ...]) -> float:
    """Smallest integer rate >= fs_hz at which every stride is whole samples.

    Channels resampled to such a rate produce windows whose start times land
    exactly on the cross-channel stride grid, so alignment never pairs
    windows that are offset by a rounded fraction of a stride.
    """
    if all(spec.stride_ms * fs_hz % 1000.0 == 0.0 for spec in specs):
        return fs_hz
    candidate = int(np.ceil(fs_hz))
    limit = candidate + 1000
    while candidate <= limit:
        if all(spec.stride_ms * candidate % 1000 == 0 for spec in specs):
            return float(candidate)
        candidate += 1
    raise ValueError(f"no rate-compatible resampling target for fs={fs_hz}")


def _conditioned(rec: Recording, config: ExperimentConfig) -> Recording:
    pre = preprocess(rec, config.filter_mode)
    if not config.rate_compatible_resample:
        return pre
    channels = dict(pre.channels)
    changed = False
    for kind, ts in channels.items():
        target = alignment_rate(ts.fs_hz, config.window_specs)
        if target != ts.fs_hz:
            channels[kind] = resample_linear(ts, target)
            changed = True
    return replace(pre, channels=channels) if changed else pre


def participant_tables(
    corpus: StudyCorpus, participant_id: str, config: ExperimentConfig
) -> tuple[dict[tuple[int, FeatureSetKind], tuple[FeatureTable, FeatureTable]], list[SkipRecord]]:
    """(train, test) feature tables per (window_ms, feature_set), plus skips.

    Training tables come from the participant's S_E recording only; test
    tables from S_EA only.
    """
    rec_e = corpus.get(participant_id, Scenario.S_E)
    rec_ea = corpus.get(participant_id, Scenario.S_EA)
    if rec_e is None or rec_ea is None:
        missing = Scenario.S_E if rec_e is None else Scenario.S_EA
        raise ValueError(
            f"participant {participant_id} lacks an {missing.value} recording"
        )
    required = set(config.required_channels)
    sides = {}
    for role, rec in (("train", rec_e), ("test", rec_ea)):
        conditioned = _conditioned(rec, config)
        missing_channels = required - set(conditioned.channels)
        if missing_channels:
            names = ", ".join(sorted(k.value for k in missing_channels))
            raise ValueError(
                f"participant {participant_id} {rec.scenario.value} lacks "
                f"required channels: {names}"
            )
        sides[role] = slice_by_labels(conditioned)

    tables: dict[tuple[int, FeatureSetKind], tuple[FeatureTable, FeatureTable]] = {}
    skips: list[SkipRecord] = []
    for spec in config.window_specs:
        groups = {}
        for role, segments in sides.items():
            per_channel: dict[ChannelKind, list] = {k: [] for k in required}
            for seg in segments:
                if seg.ts.channel in required:
                    per_channel[seg.ts.channel].extend(segment(seg, spec))
            groups[role] = align_windows(per_channel, spec, required=required)
        if not groups["train"]:
            skips.append(
                SkipRecord(participant_id, spec.length_ms, "no training windows")
            )
            continue
        if not groups["test"]:
            skips.append(
                SkipRecord(participant_id, spec.length_ms, "no test windows")
            )
            continue
        for fset in config.feature_set_kinds:
            tables[(spec.length_ms, fset)] = (
                extract_table(groups["train"], fset),
                extract_table(groups["test"], fset),
            )
    return tables, skips


def _score(
    train: FeatureTable,
    test: FeatureTable,
    classifier: ModelKind,
    seed: int,
    config: ExperimentConfig,
) -> RunEntry:
    forest = config.forest if classifier is ModelKind.RF else None
    model = train_arrays(classifier, train.x, train.emotions, seed, forest)
    pred = predict_batch(model, test.x)
    overall = evaluate_codes(test.emotions, pred)
    per_activity: dict[ActivityLabel, EvaluationMetrics] = {}
    for activity in ACTIVITY_ORDER:
        mask = test.activities == activity.value
        if np.any(mask):
            per_activity[activity] = evaluate_codes(test.emotions[mask], pred[mask])
    return RunEntry(overall=overall, per_activity=per_activity)


def _evaluate_participant(
    corpus: StudyCorpus, participant_id: str, config: ExperimentConfig
) -> tuple[dict[RunKey, RunEntry], list[SkipRecord]]:
    tables, skips = participant_tables(corpus, participant_id, config)
    entries: dict[RunKey, RunEntry] = {}
    for fset in config.feature_set_kinds:
        for classifier in config.classifier_kinds:
            # KNN3 and DT ignore the seed (no random draws), so one trained
            # model stands in for every repeat; RF is retrained per repeat.
            deterministic = classifier is not ModelKind.RF
            for spec in config.window_specs:
                pair = tables.get((spec.length_ms, fset))
                if pair is None:
                    continue
                train, test = pair
                cached: RunEntry | None = None
                for repeat in range(config.repeats):
                    seed = derive_seed(
                        config.base_seed,
                        participant_id,
                        classifier,
                        spec.length_ms,
                        repeat,
                    )
                    if cached is None or not deterministic:
                        cached = _score(train, test, classifier, seed, config)
                    entries[
                        RunKey(
                            participant_id,
                            classifier,
                            fset,
                            spec.length_ms,
                            repeat,
                        )
                    ] = cached
    return entries, skips


def cross_context_eval(corpus: StudyCorpus, config: ExperimentConfig) -> RunResult:
    """Run the full grid; deterministic in (corpus, config.base_seed)."""
    participants = corpus.participants()
    if not participants:
        raise ValueError("corpus has no recordings")
    corpus_hash = corpus_content_hash(corpus)

    jobs = config.jobs if config.jobs is not None else 1
    jobs = max(1, min(jobs, len(participants)))
    if jobs == 1:
        results = [
            _evaluate_participant(corpus, pid, config) for pid in participants
        ]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_evaluate_participant, corpus, pid, config)
                for pid in participants
            ]
            results = [f.result() for f in futures]

    entries: dict[RunKey, RunEntry] = {}
    skips: list[SkipRecord] = []
    for participant_entries, participant_skips in results:
        entries.update(participant_entries)
        skips.extend(participant_skips)
    return RunResult(
        entries=entries,
        skips=tuple(skips),
        config=config,
        corpus_hash=corpus_hash,
    )


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class WindowAccuracyRow:
    classifier: ModelKind
    feature_set: FeatureSetKind
    window_ms: int
    mean_accuracy: float


@dataclass(frozen=True)
class ParticipantStabilityRow:
    participant_id: str
    classifier: ModelKind
    feature_set: FeatureSetKind
    mean_accuracy: float
    std_accuracy: float


@dataclass(frozen=True)
class EmotionFMeasureRow:
    classifier: ModelKind
    feature_set: FeatureSetKind
    emotion: EmotionLabel
    mean_f_measure: float


@dataclass(frozen=True)
class ActivityAccuracyRow:
    classifier: ModelKind
    feature_set: FeatureSetKind
    activity: ActivityLabel
    mean_accuracy: float


@dataclass(frozen=True, eq=False)
class AggregateReport:
    accuracy_by_window: tuple[WindowAccuracyRow, ...]
    participant_stability: tuple[ParticipantStabilityRow, ...]
    f_by_emotion: tuple[EmotionFMeasureRow, ...]
    accuracy_by_activity: tuple[ActivityAccuracyRow, ...]
    config: ExperimentConfig
    corpus_hash: str
    skips: tuple[SkipRecord, ...]


def aggregate(result: RunResult) -> AggregateReport:
    """Reduce a run to the four report tables; skipped cells never enter."""
    if not result.entries:
        raise ValueError("run result is empty")
    config = result.config
    participants = sorted({key.participant_id for key in result.entries})

    by_window: list[WindowAccuracyRow] = []
    stability: list[ParticipantStabilityRow] = []
    f_rows: list[EmotionFMeasureRow] = []
    act_rows: list[ActivityAccuracyRow] = []

    for classifier in config.classifier_kinds:
        for fset in config.feature_set_kinds:
            selected = {
                key: entry
                for key, entry in result.entries.items()
                if key.classifier is classifier and key.feature_set is fset
            }
            for spec in config.window_specs:
                accs = [
                    entry.overall.accuracy
                    for key, entry in selected.items()
                    if key.window_ms == spec.length_ms
                ]
                if accs:
                    by_window.append(
                        WindowAccuracyRow(
                            classifier, fset, spec.length_ms, float(np.mean(accs))
                        )
                    )
            for pid in participants:
                window_means = []
                for spec in config.window_specs:
                    accs = [
                        entry.overall.accuracy
                        for key, entry in selected.items()
                        if key.participant_id == pid
                        and key.window_ms == spec.length_ms
                    ]
                    if accs:
                        window_means.append(float(np.mean(accs)))
                if window_means:
                    values = np.asarray(window_means)
                    stability.append(
                        ParticipantStabilityRow(
                            pid,
                            classifier,
                            fset,
                            float(values.mean()),
                            float(values.std()),
                        )
                    )
            for emotion in EMOTION_ORDER:
                fs = [
                    entry.overall.per_class[emotion].f_measure
                    for entry in selected.values()
                ]
                if fs:
                    f_rows.append(
                        EmotionFMeasureRow(classifier, fset, emotion, float(np.mean(fs)))
                    )
            for activity in ACTIVITY_ORDER:
                accs = [
                    entry.per_activity[activity].accuracy
                    for entry in selected.values()
                    if activity in entry.per_activity
                ]
                if accs:
                    act_rows.append(
                        ActivityAccuracyRow(
                            classifier, fset, activity, float(np.mean(accs))
                        )
                    )

    return AggregateReport(
        accuracy_by_window=tuple(by_window),
        participant_stability=tuple(stability),
        f_by_emotion=tuple(f_rows),
        accuracy_by_activity=tuple(act_rows),
        config=config,
        corpus_hash=result.corpus_hash,
        skips=result.skips,
    )


# ---------------------------------------------------------------------------
# Export


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_report(report: AggregateReport, out_dir: str | Path) -> list[Path]:
    """Write the four report CSVs plus a run manifest; byte-deterministic."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / "accuracy_by_window.csv"
    _write_csv(
        path,
        ["classifier", "feature_set", "window_ms", "mean_accuracy"],
        [
            [r.classifier.value, r.feature_set.value, str(r.window_ms), repr(r.mean_accuracy)]
            for r in report.accuracy_by_window
        ],
    )
    written.append(path)

    path = out / "accuracy_by_participant.csv"
    _write_csv(
        path,
        ["participant", "classifier", "feature_set", "mean_accuracy", "std_accuracy"],
        [
            [
                r.participant_id,
                r.classifier.value,
                r.feature_set.value,
                repr(r.mean_accuracy),
                repr(r.std_accuracy),
            ]
            for r in report.participant_stability
        ],
    )
    written.append(path)

    path = out / "f_measure_by_emotion.csv"
    _write_csv(
        path,
        ["classifier", "feature_set", "emotion", "mean_f_measure"],
        [
            [r.classifier.value, r.feature_set.value, r.emotion.name, repr(r.mean_f_measure)]
            for r in report.f_by_emotion
        ],
    )
    written.append(path)

    path = out / "accuracy_by_activity.csv"
    _write_csv(
        path,
        ["classifier", "feature_set", "activity", "mean_accuracy"],
        [
            [r.classifier.value, r.feature_set.value, r.activity.name, repr(r.mean_accuracy)]
            for r in report.accuracy_by_activity
        ],
    )
    written.append(path)

    config = report.config
    lines = [
        f"emosig run manifest (version {__version__})",
        f"corpus_hash {report.corpus_hash}",
        "windows_ms " + " ".join(str(s.length_ms) for s in config.window_specs),
        "strides_ms " + " ".join(str(s.stride_ms) for s in config.window_specs),
        "classifiers " + " ".join(k.value for k in config.classifier_kinds),
        "feature_sets " + " ".join(k.value for k in config.feature_set_kinds),
        f"repeats {config.repeats}",
        f"base_seed {config.base_seed}",
        f"filter_mode {config.filter_mode.value}",
        "required_channels " + " ".join(k.value for k in config.required_channels),
        f"rate_compatible_resample {str(config.rate_compatible_resample).lower()}",
        f"forest_trees {config.forest.n_trees}",
        f"forest_bootstrap {str(config.forest.bootstrap).lower()}",
        f"forest_max_features {config.forest.max_features}",
        f"forest_min_samples_split {config.forest.min_samples_split}",
        f"skips {len(report.skips)}",
    ]
    for skip in report.skips:
        lines.append(
            f"skip {skip.participant_id} {skip.window_ms} {skip.reason}"
        )
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)
    return written
