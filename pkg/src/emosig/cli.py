"""Command-line front end: corpus synthesis, evaluation runs, inspection.

Three subcommands share one binary so scripted studies stay in a single
pipeline: ``synth`` writes a labelled corpus to disk, ``run`` executes the
train-low-exertion / test-under-activity sweep and emits the report tables,
and ``inspect`` summarizes a stored recording (optionally dumping a filtered
channel for debugging).

Exit codes are stable for scripting: 0 success, 1 runtime or data error,
2 usage error.
"""

import argparse
import json
import sys
from pathlib import Path

from .datamodel import (
    ChannelKind,
    Recording,
    RecordingError,
    StudyCorpus,
    load_recording,
    save_recording,
)
from .dsp import FilterMode, preprocess
from .features import FeatureSetKind
from .learn import ForestParams, ModelKind
from .protocol import (
    ExperimentConfig,
    aggregate,
    corpus_content_hash,
    cross_context_eval,
    export_report,
)
from .segmentation import WindowSpec
from .synth import SynthConfig, generate_corpus

_CLASSIFIER_TOKENS = {
    "knn": ModelKind.KNN3,
    "knn3": ModelKind.KNN3,
    "dt": ModelKind.DT,
    "rf": ModelKind.RF,
}
_FEATURE_TOKENS = {
    "all": FeatureSetKind.ALL,
    "selected": FeatureSetKind.SELECTED,
}


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonnegative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = _nonnegative_float(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _token_list(text: str, table: dict, what: str) -> tuple:
    out = []
    for token in text.split(","):
        token = token.strip().lower()
        if token not in table:
            options = " ".join(sorted(set(table)))
            raise argparse.ArgumentTypeError(
                f"unknown {what} {token!r} (choose from: {options})"
            )
        if table[token] in out:
            raise argparse.ArgumentTypeError(f"duplicate {what} {token!r}")
        out.append(table[token])
    return tuple(out)


def _classifiers(text: str) -> tuple[ModelKind, ...]:
    return _token_list(text, _CLASSIFIER_TOKENS, "classifier")


def _features(text: str) -> tuple[FeatureSetKind, ...]:
    return _token_list(text, _FEATURE_TOKENS, "feature set")


def _windows(text: str) -> tuple[WindowSpec, ...]:
    specs = []
    for token in text.split(","):
        try:
            specs.append(WindowSpec(int(token.strip())))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad window length {token!r}: {exc}")
    return tuple(specs)


def _channels(text: str) -> tuple[ChannelKind, ...]:
    kinds = []
    for token in text.split(","):
        token = token.strip().upper()
        try:
            kinds.append(ChannelKind[token])
        except KeyError:
            options = " ".join(k.name for k in ChannelKind)
            raise argparse.ArgumentTypeError(
                f"unknown channel {token!r} (choose from: {options})"
            )
    return tuple(kinds)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emosig",
        description="Activity-robust physiological emotion recognition pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser(
        "synth", help="generate a labelled synthetic corpus directory"
    )
    synth.add_argument("--participants", type=_positive_int, default=6)
    synth.add_argument("--seed", type=int, default=42)
    synth.add_argument("--out", required=True, help="corpus output directory")
    synth.add_argument(
        "--trial-duration", type=_positive_float, default=120.0, metavar="SECONDS"
    )
    synth.add_argument(
        "--activity-segment", type=_positive_float, default=20.0, metavar="SECONDS"
    )
    synth.add_argument(
        "--rest-gap", type=_positive_float, default=20.0, metavar="SECONDS"
    )
    synth.add_argument("--noise-sigma", type=_nonnegative_float, default=1.0)
    synth.add_argument(
        "--motion-artifact-amp", type=_nonnegative_float, default=0.35
    )
    synth.add_argument(
        "--baseline-wander-amp", type=_nonnegative_float, default=0.35
    )
    synth.set_defaults(func=cmd_synth)

    run = sub.add_parser(
        "run", help="evaluate classifiers on a corpus and write report tables"
    )
    run.add_argument("--corpus", required=True, help="corpus directory to load")
    run.add_argument("--out", required=True, help="report output directory")
    run.add_argument(
        "--config",
        default=None,
        help="JSON file supplying run settings; explicit flags win",
    )
    # the remaining flags mirror ExperimentConfig; None means "not given"
    run.add_argument("--classifiers", type=_classifiers, default=None)
    run.add_argument("--features", type=_features, default=None)
    run.add_argument(
        "--windows", type=_windows, default=None, metavar="MS[,MS...]"
    )
    run.add_argument("--repeats", type=_positive_int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--jobs", type=_positive_int, default=None)
    run.add_argument(
        "--filter-mode", choices=[m.value for m in FilterMode], default=None
    )
    run.add_argument("--channels", type=_channels, default=None)
    run.add_argument("--no-rate-resample", action="store_true")
    run.add_argument("--trees", type=_positive_int, default=None)
    run.add_argument("--no-bootstrap", action="store_true")
    run.add_argument("--max-features", choices=("sqrt", "all"), default=None)
    run.add_argument("--min-samples-split", type=_positive_int, default=None)
    run.set_defaults(func=cmd_run)

    inspect = sub.add_parser("inspect", help="summarize one recording directory")
    inspect.add_argument("recording", help="recording directory to inspect")
    inspect.add_argument(
        "--dump-filtered",
        default=None,
        metavar="CHANNEL",
        help="write <CHANNEL>_filtered.csv with the preprocessed samples",
    )
    inspect.add_argument(
        "--filter-mode",
        choices=[m.value for m in FilterMode],
        default=FilterMode.ZERO_PHASE.value,
    )
    inspect.add_argument(
        "--out", default=".", help="directory for dumped files (default: .)"
    )
    inspect.set_defaults(func=cmd_inspect)
    return parser


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        n_participants=args.participants,
        seed=args.seed,
        trial_duration_s=args.trial_duration,
        activity_segment_s=args.activity_segment,
        rest_gap_s=args.rest_gap,
        noise_sigma=args.noise_sigma,
        motion_artifact_amp=args.motion_artifact_amp,
        baseline_wander_amp=args.baseline_wander_amp,
    )
    corpus = generate_corpus(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rec in corpus.recordings:
        save_recording(rec, out / f"{rec.participant_id}_{rec.scenario.value}")
    print(f"wrote {len(corpus.recordings)} recordings to {out}")
    print(f"corpus_hash {corpus_content_hash(corpus)}")
    return 0


def _load_corpus(root: Path) -> StudyCorpus:
    if not root.is_dir():
        raise RecordingError(f"{root}: corpus directory does not exist")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subdirs:
        raise RecordingError(f"{root}: contains no recording directories")
    recordings: list[Recording] = []
    problems: list[str] = []
    for subdir in subdirs:
        try:
            recordings.append(load_recording(subdir))
        except (RecordingError, ValueError, OSError) as exc:
            problems.append(f"{subdir}: {exc}")
    if problems:
        raise RecordingError("\n".join(problems))
    return StudyCorpus(recordings).validate()


def _file_settings(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    return data


def _setting(args_value, file_cfg: dict, key: str, default, convert=None):
    """Flag beats config file beats built-in default."""
    if args_value is not None:
        return args_value
    if key in file_cfg:
        value = file_cfg[key]
        if convert is not None and isinstance(value, str):
            try:
                return convert(value)
            except argparse.ArgumentTypeError as exc:
                raise ValueError(f"config key {key}: {exc}")
        return value
    return default


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    file_cfg = _file_settings(args.config)

    windows = _setting(args.windows, file_cfg, "windows", None, _windows)
    if windows is not None and not isinstance(windows[0], WindowSpec):
        windows = tuple(WindowSpec(int(w)) for w in windows)

    bootstrap = (
        False
        if args.no_bootstrap
        else bool(_setting(None, file_cfg, "bootstrap", True))
    )
    forest = ForestParams(
        n_trees=int(_setting(args.trees, file_cfg, "trees", 100)),
        bootstrap=bootstrap,
        max_features=_setting(args.max_features, file_cfg, "max_features", "sqrt"),
        min_samples_split=int(
            _setting(args.min_samples_split, file_cfg, "min_samples_split", 2)
        ),
    )
    resample = (
        False
        if args.no_rate_resample
        else bool(_setting(None, file_cfg, "rate_resample", True))
    )
    kwargs = dict(
        classifier_kinds=_setting(
            args.classifiers, file_cfg, "classifiers", None, _classifiers
        ),
        feature_set_kinds=_setting(
            args.features, file_cfg, "features", None, _features
        ),
        repeats=int(_setting(args.repeats, file_cfg, "repeats", 10)),
        base_seed=int(_setting(args.seed, file_cfg, "seed", 42)),
        filter_mode=FilterMode(
            _setting(args.filter_mode, file_cfg, "filter_mode", "zero_phase")
        ),
        required_channels=_setting(
            args.channels, file_cfg, "channels", None, _channels
        ),
        rate_compatible_resample=resample,
        forest=forest,
        jobs=_setting(args.jobs, file_cfg, "jobs", None),
    )
    if windows is not None:
        kwargs["window_specs"] = windows
    # fall back to dataclass defaults for anything still unset
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    return ExperimentConfig(**kwargs)


def cmd_run(args: argparse.Namespace) -> int:
    corpus = _load_corpus(Path(args.corpus))
    config = _experiment_config(args)
    result = cross_context_eval(corpus, config)
    report = aggregate(result)
    files = export_report(report, Path(args.out))
    for path in files:
        print(f"wrote {path}")
    print(f"corpus_hash {result.corpus_hash}")
    if result.skips:
        print(f"skipped {len(result.skips)} grid cells (see manifest)")
    return 0


def _print_inspection(rec: Recording) -> None:
    print(f"recording {rec.participant_id} scenario {rec.scenario.value}")
    print(f"channels {len(rec.channels)}")
    for kind in ChannelKind:
        ts = rec.channels.get(kind)
        if ts is None:
            continue
        print(
            f"  {kind.name} fs_hz {ts.fs_hz} samples {len(ts.samples)} "
            f"units {ts.units}"
        )
    for title, intervals in (
        ("emotions", rec.emotion_annotations),
        ("activities", rec.activity_annotations),
    ):
        print(f"{title} {len(intervals)}")
        for iv in intervals:
            print(f"  {iv.start_s:.3f} {iv.end_s:.3f} {iv.label.name}")
    overlaps = []
    for emo in rec.emotion_annotations:
        for act in rec.activity_annotations:
            lo = max(emo.start_s, act.start_s)
            hi = min(emo.end_s, act.end_s)
            if hi > lo:
                overlaps.append((lo, hi, emo.label.name, act.label.name))
    print(f"intersections {len(overlaps)}")
    for lo, hi, emotion, activity in sorted(overlaps):
        print(f"  {lo:.3f} {hi:.3f} {emotion} {activity}")


def cmd_inspect(args: argparse.Namespace) -> int:
    rec = load_recording(args.recording)
    _print_inspection(rec)
    if args.dump_filtered is None:
        return 0

    token = args.dump_filtered.strip().upper()
    try:
        kind = ChannelKind[token]
    except KeyError:
        raise ValueError(f"unknown channel {args.dump_filtered!r}")
    processed = preprocess(rec, FilterMode(args.filter_mode))
    ts = processed.channels.get(kind)
    if ts is None:
        present = " ".join(k.name for k in processed.channels)
        raise ValueError(
            f"channel {kind.name} not present after preprocessing "
            f"(have: {present})"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{kind.name}_filtered.csv"
    lines = ["sample_index,value"]
    lines.extend(f"{i},{float(v)!r}" for i, v in enumerate(ts.samples))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"dumped {kind.name} {len(ts.samples)} rows to {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except RecordingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
