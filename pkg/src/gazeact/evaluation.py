"""Two-fold evaluation protocol, metrics, and report assembly.

Fold A trains on every subject's first session and tests on the second;
fold B swaps them. Quantization thresholds, the visual vocabulary, and the
forest are fit on the training fold only, and every training window carries
a (subject, session) provenance tag that is checked against the fold before
fitting anything.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ParameterError,
    PipelineConfig,
    ProtocolError,
    classes_for_mode,
    gaze_arrays,
    resample_gaze,
)
from .encoding import SymbolSequence, encode_signal, estimate_thresholds, signal_coefficients
from .forest import ForestModel, ForestParams, predict_proba, train_forest
from .fusion import (
    CHANNEL_BINS,
    LabeledWindows,
    concat_labeled,
    fuse_streams,
    label_windows,
    normalize_channels,
    window_histogram,
)
from .tracking import encode_motion_channel, estimate_flow_sequence, motion_coefficients
from .vocab import VocabModel, assign_words, fit_kmeans

#: Published two-fold accuracies on the UTokyo first-person activity dataset,
#: used only to report deltas and ordering checks when that dataset is run.
UTOKYO_REFERENCE_ACCURACY = {
    (6, ("eye", "ego", "visual")): 0.7709,
    (6, ("eye", "ego")): 0.7249,
    (6, ("visual",)): 0.4503,
    (5, ("eye", "ego", "visual")): 0.8565,
    (5, ("eye", "ego")): 0.7938,
    (5, ("visual",)): 0.6297,
}


@dataclass
class FoldSpec:
    train_keys: list  # of (subject, session)
    test_keys: list

    def validate(self):
        overlap = set(self.train_keys) & set(self.test_keys)
        if overlap:
            raise ProtocolError(f"train and test folds overlap: {sorted(overlap)}")
        if not self.train_keys or not self.test_keys:
            raise ProtocolError("both folds must be non-empty")
        return self


@dataclass
class EvalReport:
    classes: list  # class-name strings in report order
    confusion: np.ndarray  # (C, C) row-normalized, pooled over folds
    confusion_support: np.ndarray  # (C,) test windows per true class
    per_class_accuracy: np.ndarray  # (C,)
    overall_accuracy: float
    per_subject_accuracy: dict
    mAP: float
    fold_details: list
    channels: tuple
    class_mode: int
    reference_accuracy: float | None = None
    reference_delta: float | None = None
    taus: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "confusion_support": self.confusion_support.tolist(),
            "per_class_accuracy": self.per_class_accuracy.tolist(),
            "overall_accuracy": self.overall_accuracy,
            "per_subject_accuracy": dict(self.per_subject_accuracy),
            "mAP": self.mAP,
            "fold_details": self.fold_details,
            "channels": list(self.channels),
            "class_mode": self.class_mode,
            "reference_accuracy": self.reference_accuracy,
            "reference_delta": self.reference_delta,
            "taus": self.taus,
        }


# --- metrics -------------------------------------------------------------------


def confusion_counts(truth, predicted, classes) -> np.ndarray:
    if len(truth) != len(predicted):
        raise ParameterError(f"{len(truth)} truth labels vs {len(predicted)} predictions")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if t not in index:
            raise ParameterError(f"unknown truth label {t!r}")
        if p not in index:
            raise ParameterError(f"unknown predicted label {p!r}")
        counts[index[t], index[p]] += 1
    return counts


def normalize_confusion(counts: np.ndarray):
    """Row-normalize a count matrix; zero-support rows stay all-zero and are
    reported through the returned support vector."""
    support = counts.sum(axis=1)
    matrix = np.zeros(counts.shape, dtype=np.float64)
    nz = support > 0
    matrix[nz] = counts[nz] / support[nz, None]
    return matrix, support


def confusion_matrix(truth, predicted, classes):
    """Row-normalized confusion matrix and per-class support (rows = truth)."""
    return normalize_confusion(confusion_counts(truth, predicted, classes))


def average_precision(scores, positives) -> float:
    """Non-interpolated AP: mean precision at each positive in score order.

    Ties in score are broken by original index (stable sort).
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if not positives.any():
        raise ParameterError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    pos_sorted = positives[order]
    cum_hits = np.cumsum(pos_sorted)
    ranks = np.arange(1, len(scores) + 1)
    return float(np.mean(cum_hits[pos_sorted] / ranks[pos_sorted]))


def mean_average_precision(scores: np.ndarray, truth, classes):
    """Unweighted mean AP over the classes present in truth.

    `scores` rows are per-class vote fractions aligned with `classes`.
    Classes without positives are excluded with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != len(classes):
        raise ParameterError(f"scores shape {scores.shape} does not match {len(classes)} classes")
    if len(truth) != len(scores):
        raise ParameterError("scores and truth must have equal length")
    index = {c: i for i, c in enumerate(classes)}
    truth_idx = np.array([index[t] for t in truth])
    aps = {}
    for i, c in enumerate(classes):
        positives = truth_idx == i
        if not positives.any():
            warnings.warn(f"class {c!r} absent from truth; excluded from mAP")
            continue
        aps[c] = average_precision(scores[:, i], positives)
    if not aps:
        raise ParameterError("no class present in truth")
    return float(np.mean(list(aps.values()))), aps


# --- featurization under a frozen fit ------------------------------------------


@dataclass
class ChannelFit:
    """Everything learned on a training fold that featurization depends on."""

    channels: tuple
    taus_gaze: tuple | None = None
    taus_motion: tuple | None = None
    vocab: VocabModel | None = None


def _session_flows(session, config):
    if session.flows is not None:
        return session.flows
    if session.frames is not None:
        return estimate_flow_sequence(session.frames, config)
    raise ProtocolError(
        f"session {session.key} has neither frames nor precomputed flows for the ego channel"
    )


def fit_channels(train_sessions, config: PipelineConfig, channels, flow_cache=None) -> ChannelFit:
    """Estimate thresholds and the visual vocabulary from training sessions only."""
    channels = normalize_channels(channels)
    fit = ChannelFit(channels=channels)
    override = None
    if config.tau_small is not None:
        override = (config.tau_small, config.tau_large)
    if "eye" in channels:
        if override:
            fit.taus_gaze = override
        else:
            coeffs = []
            for s in train_sessions:
                resampled = resample_gaze(s.gaze, config.sample_rate)
                _, x, y, _ = gaze_arrays(resampled)
                cx, cy = signal_coefficients(x, y, config)
                coeffs.extend([cx.values, cy.values])
            fit.taus_gaze = estimate_thresholds(coeffs)
    if "ego" in channels:
        if override:
            fit.taus_motion = override
        else:
            coeffs = []
            for s in train_sessions:
                flows = flow_cache[s.key] if flow_cache else _session_flows(s, config)
                wx, wy = motion_coefficients(flows, config)
                coeffs.extend([wx, wy])
            fit.taus_motion = estimate_thresholds(coeffs)
    if "visual" in channels:
        stacks = []
        for s in train_sessions:
            if s.embeddings is None:
                raise ProtocolError(f"session {s.key} has no embeddings for the visual channel")
            stacks.append(s.embeddings)
        fit.vocab = fit_kmeans(
            np.vstack(stacks), config.k_visual_words, seed=config.rng_seed
        )
    return fit


def featurize_session(session, config: PipelineConfig, fit: ChannelFit, flow_cache=None) -> LabeledWindows:
    """Windowed, fused, labeled features for one session under a frozen fit."""
    streams = {}
    spans = []
    symbol_streams = {}
    if "eye" in fit.channels:
        resampled = resample_gaze(session.gaze, config.sample_rate)
        t, x, y, _ = gaze_arrays(resampled)
        symbol_streams["eye"] = encode_signal(t, x, y, config, taus=fit.taus_gaze)
    if "ego" in fit.channels:
        flows = flow_cache[session.key] if flow_cache else _session_flows(session, config)
        symbol_streams["ego"] = encode_motion_channel(flows, config, taus=fit.taus_motion)
    if "visual" in fit.channels:
        if session.embeddings is None:
            raise ProtocolError(f"session {session.key} has no embeddings for the visual channel")
        words = assign_words(session.embeddings, fit.vocab)
        t = np.arange(len(words)) / config.sample_rate
        symbol_streams["visual"] = SymbolSequence(t, words)

    for seq in symbol_streams.values():
        spans.append((float(seq.t[0]), float(seq.t[-1]) + 1.0 / config.sample_rate))
    span = (max(s[0] for s in spans), min(s[1] for s in spans))

    for name, seq in symbol_streams.items():
        streams[name] = window_histogram(
            seq.t,
            seq.codes,
            CHANNEL_BINS[name],
            config.window_seconds,
            config.stride_seconds,
            span,
        )
    features = fuse_streams(streams, config.stride_seconds)
    return label_windows(
        features,
        session.labels,
        config.class_mode,
        config.window_seconds,
        subject_id=session.subject_id,
        session_index=session.session_index,
    )


# --- the two-fold protocol -------------------------------------------------------


def two_fold_spec(sessions) -> list:
    subjects = sorted({s.subject_id for s in sessions})
    have = {(s.subject_id, s.session_index) for s in sessions}
    for subj in subjects:
        for idx in (1, 2):
            if (subj, idx) not in have:
                raise ProtocolError(f"subject {subj} is missing session {idx}")
    first = [(subj, 1) for subj in subjects]
    second = [(subj, 2) for subj in subjects]
    return [
        FoldSpec(train_keys=first, test_keys=second).validate(),
        FoldSpec(train_keys=second, test_keys=first).validate(),
    ]


def _assert_provenance(windows: LabeledWindows, allowed_keys):
    allowed = set(allowed_keys)
    seen = set(zip(windows.subjects, windows.sessions))
    leaked = seen - allowed
    if leaked:
        raise ProtocolError(f"training examples from outside the training fold: {sorted(leaked)}")


def run_fold(sessions, fold: FoldSpec, config: PipelineConfig, channels, flow_cache=None, n_jobs: int = 1):
    """Train on the fold's training sessions, evaluate on its test sessions."""
    fold.validate()
    by_key = {s.key: s for s in sessions}
    train_sessions = [by_key[k] for k in fold.train_keys]
    test_sessions = [by_key[k] for k in fold.test_keys]
    channels = normalize_channels(channels)
    class_names = [c.value for c in classes_for_mode(config.class_mode)]

    fit = fit_channels(train_sessions, config, channels, flow_cache=flow_cache)
    train = concat_labeled([featurize_session(s, config, fit, flow_cache) for s in train_sessions])
    test = concat_labeled([featurize_session(s, config, fit, flow_cache) for s in test_sessions])
    _assert_provenance(train, fold.train_keys)

    params = ForestParams(
        n_trees=config.n_trees,
        mtry=config.mtry,
        min_leaf=config.min_leaf,
        max_depth=config.max_depth,
        seed=config.rng_seed,
    )
    y_train = [lab.value for lab in train.labels]
    model = train_forest(train.matrix, y_train, params, classes=class_names, n_jobs=n_jobs)

    y_test = [lab.value for lab in test.labels]
    proba = predict_proba(model, test.matrix)
    pred_idx = np.argmax(proba, axis=1)
    predicted = [class_names[i] for i in pred_idx]
    truth_idx = np.array([class_names.index(lab) for lab in y_test])
    accuracy = float(np.mean(pred_idx == truth_idx))
    counts = confusion_counts(y_test, predicted, class_names)

    per_subject = {}
    subj_arr = np.array(test.subjects)
    for subj in sorted(set(test.subjects)):
        mask = subj_arr == subj
        per_subject[subj] = float(np.mean(pred_idx[mask] == truth_idx[mask]))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        map_score, per_class_ap = mean_average_precision(proba, y_test, class_names)

    detail = {
        "train_keys": [list(k) for k in fold.train_keys],
        "test_keys": [list(k) for k in fold.test_keys],
        "n_train_windows": len(train.labels),
        "n_test_windows": len(test.labels),
        "n_dropped_train": train.n_dropped,
        "n_dropped_test": test.n_dropped,
        "accuracy": accuracy,
        "oob_error": model.oob_error,
        "mAP": map_score,
        "per_class_ap": per_class_ap,
        "per_subject_accuracy": per_subject,
        "taus_gaze": list(fit.taus_gaze) if fit.taus_gaze else None,
        "taus_motion": list(fit.taus_motion) if fit.taus_motion else None,
    }
    return detail, counts, model


def run_two_fold(sessions, config: PipelineConfig, channels=("eye", "ego", "visual"), n_jobs: int = 1) -> EvalReport:
    """The full protocol: fold swap, pooled confusion, averaged accuracy.

    Overall accuracy is the arithmetic mean of the two fold accuracies; the
    confusion matrix pools test windows of both folds before normalizing.
    """
    config.validate()
    channels = normalize_channels(channels)
    folds = two_fold_spec(sessions)
    class_names = [c.value for c in classes_for_mode(config.class_mode)]

    flow_cache = None
    if "ego" in channels:
        flow_cache = {s.key: _session_flows(s, config) for s in sessions}

    details = []
    counts_total = np.zeros((len(class_names), len(class_names)), dtype=np.int64)
    for fold in folds:
        detail, counts, _ = run_fold(sessions, fold, config, channels, flow_cache=flow_cache, n_jobs=n_jobs)
        details.append(detail)
        counts_total += counts

    matrix, support = normalize_confusion(counts_total)
    overall = float(np.mean([d["accuracy"] for d in details]))
    subjects = sorted({s.subject_id for s in sessions})
    per_subject = {
        subj: float(np.mean([d["per_subject_accuracy"][subj] for d in details])) for subj in subjects
    }
    map_score = float(np.mean([d["mAP"] for d in details]))
    per_class = np.where(support > 0, np.diag(matrix), 0.0)

    ref_key = (config.class_mode, channels)
    ref = UTOKYO_REFERENCE_ACCURACY.get(ref_key)
    return EvalReport(
        classes=class_names,
        confusion=matrix,
        confusion_support=support,
        per_class_accuracy=per_class,
        overall_accuracy=overall,
        per_subject_accuracy=per_subject,
        mAP=map_score,
        fold_details=details,
        channels=channels,
        class_mode=config.class_mode,
        reference_accuracy=ref,
        reference_delta=(overall - ref) if ref is not None else None,
        taus={
            "gaze": details[0]["taus_gaze"],
            "motion": details[0]["taus_motion"],
        },
    )


def check_reference_ordering(accuracies: dict) -> list:
    """Ordering checks against the published reference relations.

    `accuracies` maps (class_mode, channels tuple) to overall accuracy; only
    relations whose operands are present are checked. Returns violation
    strings (empty = all orderings hold).
    """
    out = []
    combos = [("eye", "ego", "visual"), ("eye", "ego"), ("visual",)]
    for mode in (5, 6):
        present = [c for c in combos if (mode, c) in accuracies]
        for stronger, weaker in zip(present, present[1:]):
            a, b = accuracies[(mode, stronger)], accuracies[(mode, weaker)]
            if a < b:
                out.append(
                    f"{mode}-class: channels {'+'.join(stronger)} ({a:.4f}) below {'+'.join(weaker)} ({b:.4f})"
                )
    for combo in combos:
        if (5, combo) in accuracies and (6, combo) in accuracies:
            a5, a6 = accuracies[(5, combo)], accuracies[(6, combo)]
            if a5 < a6:
                out.append(f"channels {'+'.join(combo)}: 5-class ({a5:.4f}) below 6-class ({a6:.4f})")
    return out


def run_synthetic_selftest(seed: int = 0, config: PipelineConfig | None = None, n_jobs: int = 1) -> EvalReport:
    """Generate three separable synthetic activity regimes and run the full
    two-fold pipeline on them."""
    from .synthetic import make_synthetic_sessions

    if config is None:
        config = PipelineConfig(sample_rate=6.0, rng_seed=seed, class_mode=5)
    sessions = make_synthetic_sessions(seed=seed, rate=config.sample_rate)
    return run_two_fold(sessions, config, n_jobs=n_jobs)


# --- report output ----------------------------------------------------------------


def write_report(report: EvalReport, out_dir) -> None:
    """Emit report.json and confusion.csv into a directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    with open(out_dir / "confusion.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["truth\\predicted"] + list(report.classes) + ["support"])
        for i, name in enumerate(report.classes):
            w.writerow(
                [name]
                + [f"{v:.6f}" for v in report.confusion[i]]
                + [int(report.confusion_support[i])]
            )
