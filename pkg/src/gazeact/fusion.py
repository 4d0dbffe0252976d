"""Sliding-window histograms per channel and feature-level fusion.

Every channel is reduced to normalized histograms over the same sliding
windows (same clock, same stride), then the per-channel blocks are
concatenated in a fixed order: eye symbols, ego-motion symbols, visual words.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ActivityLabel, AlignmentError, LabelTrack, ParameterError, ParseError

CHANNEL_ORDER = ("eye", "ego", "visual")
CHANNEL_BINS = {"eye": 25, "ego": 25, "visual": 15}


def normalize_channels(channels) -> tuple:
    """Validate a channel subset and return it in canonical order."""
    chans = tuple(c for c in CHANNEL_ORDER if c in set(channels))
    unknown = set(channels) - set(CHANNEL_ORDER)
    if unknown:
        raise ParameterError(f"unknown channels: {sorted(unknown)}")
    if not chans:
        raise ParameterError("at least one channel is required")
    return chans


def feature_dim(channels) -> int:
    return sum(CHANNEL_BINS[c] for c in normalize_channels(channels))


@dataclass
class WindowedHistograms:
    """Normalized histograms over sliding windows of one symbol/word stream.

    Rows with count == 0 had no samples in the window and were filled with
    the uniform distribution (quality flag: counts[i] == 0).
    """

    centers: np.ndarray  # (m,) window-center times
    bins: np.ndarray  # (m, n_bins), rows sum to 1
    counts: np.ndarray  # (m,) samples per window


def window_count(span_seconds: float, window: float, stride: float) -> int:
    return int(math.floor((span_seconds - window) / stride + 1e-9)) + 1


def window_histogram(times, codes, n_bins: int, window: float, stride: float, span) -> WindowedHistograms:
    """Histogram a timestamped discrete stream over sliding windows.

    Windows start at span[0] and advance by `stride` while they still fit
    entirely inside the span; a sample belongs to the window when its
    timestamp lies in [start, start + window).
    """
    times = np.asarray(times, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.int64)
    if times.shape != codes.shape:
        raise ParameterError("times and codes must have equal length")
    if codes.size and (codes.min() < 0 or codes.max() >= n_bins):
        raise ParameterError(f"codes must lie in [0, {n_bins})")
    t0, t1 = float(span[0]), float(span[1])
    if window > t1 - t0 + 1e-9:
        raise ParameterError(f"window {window} s does not fit in span [{t0}, {t1}]")
    if stride <= 0:
        raise ParameterError("stride must be positive")
    m = window_count(t1 - t0, window, stride)
    starts = t0 + stride * np.arange(m)

    order = np.argsort(times, kind="stable")
    times = times[order]
    codes = codes[order]
    onehot = np.zeros((len(times) + 1, n_bins), dtype=np.int64)
    if len(times):
        onehot[np.arange(len(times)) + 1, codes] = 1
    cum = np.cumsum(onehot, axis=0)
    lo = np.searchsorted(times, starts, side="left")
    hi = np.searchsorted(times, starts + window, side="left")
    counts_per_bin = cum[hi] - cum[lo]
    totals = counts_per_bin.sum(axis=1)
    bins = np.full((m, n_bins), 1.0 / n_bins)
    nonzero = totals > 0
    bins[nonzero] = counts_per_bin[nonzero] / totals[nonzero, None]
    return WindowedHistograms(centers=starts + window / 2, bins=bins, counts=totals)


@dataclass
class WindowFeatures:
    """Fused per-window feature matrix with named channel blocks."""

    centers: np.ndarray  # (m,)
    matrix: np.ndarray  # (m, D)
    channels: tuple
    blocks: dict  # channel -> slice of matrix columns
    uniform_filled: np.ndarray  # (m,) True where any channel was empty-filled


def fuse(eye=None, ego=None, visual=None, t_centers=None, stride: float = 1.0) -> np.ndarray:
    """Concatenate one window's channel histograms in fixed order.

    `t_centers`, when given, holds the per-channel window centers (in the
    same order as the provided channels) and must agree within stride / 2.
    """
    provided = [(name, np.asarray(block, dtype=np.float64)) for name, block in
                zip(CHANNEL_ORDER, (eye, ego, visual)) if block is not None]
    if not provided:
        raise ParameterError("at least one channel block is required")
    for name, block in provided:
        if block.shape != (CHANNEL_BINS[name],):
            raise ParameterError(
                f"{name} block must have {CHANNEL_BINS[name]} bins, got shape {block.shape}"
            )
    if t_centers is not None:
        tc = np.asarray(t_centers, dtype=np.float64)
        if tc.max() - tc.min() > stride / 2:
            raise AlignmentError(
                f"channel window centers {tc.tolist()} differ by more than stride/2"
            )
    return np.concatenate([block for _, block in provided])


def fuse_streams(streams: dict, stride: float) -> WindowFeatures:
    """Fuse per-channel WindowedHistograms into one feature matrix.

    All channels must cover the same windows: equal counts and centers that
    agree within stride / 2.
    """
    channels = normalize_channels(streams.keys())
    ref = streams[channels[0]]
    m = len(ref.centers)
    for c in channels[1:]:
        s = streams[c]
        if len(s.centers) != m:
            raise AlignmentError(
                f"channel {c} has {len(s.centers)} windows, {channels[0]} has {m}"
            )
        if m and np.max(np.abs(s.centers - ref.centers)) > stride / 2:
            raise AlignmentError(f"channel {c} window centers misaligned with {channels[0]}")
    blocks = {}
    start = 0
    parts = []
    filled = np.zeros(m, dtype=bool)
    for c in channels:
        s = streams[c]
        width = s.bins.shape[1]
        if width != CHANNEL_BINS[c]:
            raise ParameterError(f"channel {c} has {width} bins, expected {CHANNEL_BINS[c]}")
        blocks[c] = slice(start, start + width)
        parts.append(s.bins)
        filled |= s.counts == 0
        start += width
    matrix = np.hstack(parts) if parts else np.zeros((m, 0))
    return WindowFeatures(
        centers=ref.centers.copy(),
        matrix=matrix,
        channels=channels,
        blocks=blocks,
        uniform_filled=filled,
    )


@dataclass
class LabeledWindows:
    """Fused window features with activity labels and provenance."""

    matrix: np.ndarray  # (m, D)
    labels: list  # of ActivityLabel
    centers: np.ndarray  # (m,)
    subjects: list  # of str, per row
    sessions: list  # of int, per row
    channels: tuple
    n_dropped: int = 0


def label_windows(
    features: WindowFeatures,
    labels: LabelTrack,
    class_mode: int,
    window_seconds: float,
    subject_id: str = "",
    session_index: int = 0,
) -> LabeledWindows:
    """Attach the majority-duration label to each window.

    Windows without any label coverage are dropped; in 5-class mode windows
    whose majority label is Void are dropped as well.
    """
    if class_mode not in (5, 6):
        raise ParameterError(f"class_mode must be 5 or 6, got {class_mode}")
    keep_rows = []
    keep_labels = []
    dropped = 0
    half = window_seconds / 2
    for i, tc in enumerate(features.centers):
        lab = labels.majority_label(tc - half, tc + half)
        if lab is None or (class_mode == 5 and lab is ActivityLabel.VOID):
            dropped += 1
            continue
        keep_rows.append(i)
        keep_labels.append(lab)
    idx = np.array(keep_rows, dtype=int)
    return LabeledWindows(
        matrix=features.matrix[idx] if len(idx) else np.zeros((0, features.matrix.shape[1])),
        labels=keep_labels,
        centers=features.centers[idx] if len(idx) else np.zeros(0),
        subjects=[subject_id] * len(idx),
        sessions=[session_index] * len(idx),
        channels=features.channels,
        n_dropped=dropped,
    )


def concat_labeled(parts) -> LabeledWindows:
    parts = [p for p in parts if len(p.labels)]
    if not parts:
        raise ParameterError("no labeled windows to concatenate")
    channels = parts[0].channels
    for p in parts:
        if p.channels != channels:
            raise ParameterError("cannot concatenate windows with different channel sets")
    return LabeledWindows(
        matrix=np.vstack([p.matrix for p in parts]),
        labels=[lab for p in parts for lab in p.labels],
        centers=np.concatenate([p.centers for p in parts]),
        subjects=[s for p in parts for s in p.subjects],
        sessions=[s for p in parts for s in p.sessions],
        channels=channels,
        n_dropped=sum(p.n_dropped for p in parts),
    )


# --- feature matrix CSV -------------------------------------------------------


def write_feature_csv(windows: LabeledWindows, path) -> None:
    dim = windows.matrix.shape[1]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_center", "subject", "session", "label"] + [f"f{i}" for i in range(dim)])
        for i in range(len(windows.labels)):
            w.writerow(
                [repr(float(windows.centers[i])), windows.subjects[i], windows.sessions[i], windows.labels[i].value]
                + [repr(float(v)) for v in windows.matrix[i]]
            )


def read_feature_csv(path) -> LabeledWindows:
    path = Path(path)
    by_name = {lab.value: lab for lab in ActivityLabel}
    centers, subjects, sessions, labels, rows = [], [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["t_center", "subject", "session", "label"]:
            raise ParseError("expected header t_center,subject,session,label,f0..", path=path, line=1)
        dim = len(header) - 4
        if dim < 1 or header[4:] != [f"f{i}" for i in range(dim)]:
            raise ParseError("feature columns must be f0..fN", path=path, line=1)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4 + dim:
                raise ParseError(f"expected {4 + dim} fields, got {len(row)}", path=path, line=line_no)
            try:
                centers.append(float(row[0]))
                sessions.append(int(row[2]))
                rows.append([float(v) for v in row[4:]])
            except ValueError:
                raise ParseError("bad numeric field", path=path, line=line_no) from None
            subjects.append(row[1])
            if row[3] not in by_name:
                raise ParseError(f"unknown label {row[3]!r}", path=path, line=line_no)
            labels.append(by_name[row[3]])
    if not rows:
        raise ParseError("feature file has a header but no rows", path=path)
    dims_to_channels = {65: ("eye", "ego", "visual"), 50: ("eye", "ego"), 25: ("eye",), 15: ("visual",)}
    channels = dims_to_channels.get(dim, ())
    return LabeledWindows(
        matrix=np.array(rows, dtype=np.float64),
        labels=labels,
        centers=np.array(centers),
        subjects=subjects,
        sessions=sessions,
        channels=channels,
    )
