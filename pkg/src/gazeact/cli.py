"""Command line entry point: gaze-act <subcommand>.

Exit codes: 0 success, 2 protocol error, 3 parse error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .core import (
    ParameterError,
    ParseError,
    PipelineConfig,
    ProtocolError,
    classes_for_mode,
    discover_sessions,
    load_config,
    load_session,
    parse_gaze_log,
    resample_gaze,
)
from .encoding import encode_gaze_channel, write_symbol_csv
from .evaluation import (
    fit_channels,
    featurize_session,
    run_synthetic_selftest,
    run_two_fold,
    write_report,
)
from .forest import ForestParams, load_forest, predict_proba, save_forest, train_forest
from .fusion import concat_labeled, read_feature_csv, write_feature_csv
from .tracking import encode_motion_channel, list_frame_files, parse_flow_csv
from .vocab import assign_words, fit_kmeans, load_vocab, save_vocab


def _channels_arg(text):
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if getattr(args, "classes", None):
        overrides["class_mode"] = args.classes
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    return cfg.with_overrides(**overrides) if overrides else cfg.validate()


def _cmd_encode_gaze(args) -> int:
    cfg = _load_cfg(args)
    samples = parse_gaze_log(args.gaze, sample_rate=cfg.sample_rate)
    resampled = resample_gaze(samples, cfg.sample_rate)
    symbols = encode_gaze_channel(resampled, cfg)
    write_symbol_csv(symbols, args.out)
    print(f"wrote {len(symbols)} symbols to {args.out}")
    return 0


def _cmd_encode_motion(args) -> int:
    cfg = _load_cfg(args)
    if args.flows:
        source = parse_flow_csv(args.flows)
    else:
        source = list_frame_files(args.frames)
        if len(source) < 2:
            raise ProtocolError(f"frame directory {args.frames} holds fewer than 2 frames")
    symbols = encode_motion_channel(source, cfg)
    write_symbol_csv(symbols, args.out)
    print(f"wrote {len(symbols)} symbols to {args.out}")
    return 0


def _cmd_vocab(args) -> int:
    cfg = _load_cfg(args)
    if args.fit:
        stacks = []
        for path in args.embeddings:
            arr, _ = gio.read_embeddings(path)
            stacks.append(arr)
        model = fit_kmeans(np.vstack(stacks), cfg.k_visual_words, seed=cfg.rng_seed)
        save_vocab(model, args.out)
        print(
            f"fit {model.k} visual words on {sum(len(s) for s in stacks)} frames "
            f"(inertia {model.training_inertia:.4g}); wrote {args.out}"
        )
        return 0
    model = load_vocab(args.model)
    arr, _ = gio.read_embeddings(args.embeddings[0])
    words = assign_words(arr, model)
    with open(args.out, "w") as fh:
        fh.write("frame_index,word\n")
        for i, w in enumerate(words):
            fh.write(f"{i},{int(w)}\n")
    print(f"assigned {len(words)} frames to visual words; wrote {args.out}")
    return 0


def _load_dataset(args, cfg):
    keys = discover_sessions(args.data)
    if not keys:
        raise ProtocolError(f"no sessions found under {args.data}")
    return [load_session(args.data, subj, idx, cfg) for subj, idx in keys]


def _cmd_featurize(args) -> int:
    cfg = _load_cfg(args)
    sessions = _load_dataset(args, cfg)
    channels = args.channels
    fit = fit_channels(sessions, cfg, channels)
    windows = concat_labeled([featurize_session(s, cfg, fit) for s in sessions])
    write_feature_csv(windows, args.out)
    print(
        f"featurized {len(sessions)} session(s) -> {len(windows.labels)} windows "
        f"({windows.matrix.shape[1]} dims, channels {'+'.join(windows.channels)}); wrote {args.out}"
    )
    print("note: thresholds/vocabulary were fit on all given sessions; "
          "use `pipeline` for leakage-free fold evaluation")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    windows = read_feature_csv(args.features)
    params = ForestParams(
        n_trees=args.trees if args.trees else cfg.n_trees,
        mtry=cfg.mtry,
        min_leaf=cfg.min_leaf,
        max_depth=cfg.max_depth,
        seed=cfg.rng_seed,
    )
    class_names = [c.value for c in classes_for_mode(cfg.class_mode)]
    y = [lab.value for lab in windows.labels]
    model = train_forest(windows.matrix, y, params, classes=class_names)
    save_forest(model, args.out)
    print(
        f"trained {params.n_trees} trees on {len(y)} windows; "
        f"OOB error {model.oob_error:.4f}; wrote {args.out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    from .evaluation import confusion_matrix, mean_average_precision

    model = load_forest(args.model)
    windows = read_feature_csv(args.features)
    y = [lab.value for lab in windows.labels]
    proba = predict_proba(model, windows.matrix)
    pred = [model.classes[i] for i in np.argmax(proba, axis=1)]
    accuracy = float(np.mean([p == t for p, t in zip(pred, y)]))
    matrix, support = confusion_matrix(y, pred, model.classes)
    map_score, _ = mean_average_precision(proba, y, model.classes)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "accuracy": accuracy,
        "mAP": map_score,
        "classes": model.classes,
        "confusion": matrix.tolist(),
        "confusion_support": support.tolist(),
        "n_windows": len(y),
    }
    with open(out_dir / "evaluation.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"accuracy {accuracy:.4f}, mAP {map_score:.4f} on {len(y)} windows; wrote {out_dir}/evaluation.json")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_cfg(args)
    sessions = _load_dataset(args, cfg)
    report = run_two_fold(sessions, cfg, channels=args.channels, n_jobs=args.jobs)
    write_report(report, args.out)
    print(f"two-fold overall accuracy {report.overall_accuracy:.4f}, mAP {report.mAP:.4f}")
    if report.reference_delta is not None:
        print(
            f"reference accuracy {report.reference_accuracy:.4f} "
            f"(delta {report.reference_delta:+.4f})"
        )
    print(f"wrote {Path(args.out) / 'report.json'}")
    return 0


def _cmd_selftest(args) -> int:
    report = run_synthetic_selftest(seed=args.seed if args.seed is not None else 0, n_jobs=args.jobs)
    if args.out:
        write_report(report, args.out)
    ok = report.overall_accuracy >= 0.95
    print(f"selftest overall accuracy {report.overall_accuracy:.4f} (threshold 0.95)")
    for d in report.fold_details:
        print(f"  fold train={d['train_keys'][0][1]}: accuracy {d['accuracy']:.4f}, mAP {d['mAP']:.4f}")
    print("selftest PASS" if ok else "selftest FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaze-act", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, channels=False, classes=False, seed=True, config=True):
        if config:
            p.add_argument("--config", help="pipeline config JSON")
        if channels:
            p.add_argument(
                "--channels",
                type=_channels_arg,
                default=("eye", "ego", "visual"),
                help="comma-separated subset of eye,ego,visual",
            )
        if classes:
            p.add_argument("--classes", type=int, choices=(5, 6), help="class mode")
        if seed:
            p.add_argument("--seed", type=int, help="RNG seed override")

    p = sub.add_parser("encode-gaze", help="gaze CSV -> symbol CSV")
    p.add_argument("--gaze", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_encode_gaze)

    p = sub.add_parser("encode-motion", help="frames or flow CSV -> symbol CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", help="directory of numbered image files")
    src.add_argument("--flows", help="precomputed flow CSV")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_encode_motion)

    p = sub.add_parser("vocab", help="fit or apply the visual vocabulary")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--fit", action="store_true")
    mode.add_argument("--assign", action="store_true")
    p.add_argument("--embeddings", nargs="+", required=True)
    p.add_argument("--model", help="existing vocabulary (for --assign)")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("featurize", help="dataset -> labeled feature CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    common(p, channels=True, classes=True)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", help="feature CSV -> forest model")
    p.add_argument("--features", required=True)
    p.add_argument("--trees", type=int)
    p.add_argument("--out", required=True)
    common(p, classes=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="forest model + feature CSV -> metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pipeline", help="full two-fold protocol on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    common(p, channels=True, classes=True)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("selftest", help="synthetic end-to-end check")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    common(p, config=False)
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 3
    except ProtocolError as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return 2
    except ParameterError as e:
        print(f"parameter error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
