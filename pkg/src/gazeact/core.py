"""Domain types, configuration and ingestion of on-disk session data.

All signal timestamps are seconds. Pixel coordinates follow image convention
(x right, y down, origin at the top-left corner).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np


class GazeActError(Exception):
    """Base class for errors raised by this package."""


class ParseError(GazeActError):
    """Malformed on-disk input. Carries the offending path and line."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" [{loc}]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class EmptyInputError(ParseError):
    """A file parsed fine but contained no usable rows."""


class ParameterError(GazeActError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientDataError(GazeActError):
    """Not enough samples to perform the requested operation."""


class NoFlowError(GazeActError):
    """No surviving tracked points for a frame pair."""


class AlignmentError(GazeActError):
    """Per-channel window streams do not share a common time base."""


class ProtocolError(GazeActError):
    """The session set cannot support the requested evaluation protocol."""


class ActivityLabel(Enum):
    READ = "read"
    WATCH_VIDEO = "watch_video"
    WRITE = "write"
    COPY_TEXT = "copy_text"
    BROWSE = "browse"
    VOID = "void"


#: Canonical class orderings for the two classification modes.
CLASSES_5 = (
    ActivityLabel.READ,
    ActivityLabel.WATCH_VIDEO,
    ActivityLabel.WRITE,
    ActivityLabel.COPY_TEXT,
    ActivityLabel.BROWSE,
)
CLASSES_6 = CLASSES_5 + (ActivityLabel.VOID,)


def classes_for_mode(class_mode: int):
    if class_mode == 5:
        return CLASSES_5
    if class_mode == 6:
        return CLASSES_6
    raise ParameterError(f"class_mode must be 5 or 6, got {class_mode}")


@dataclass
class GazeSample:
    """One gaze measurement: time (s), position (px), tracker-validity flag."""

    t: float
    x: float
    y: float
    valid: bool = True


@dataclass
class LabelTrack:
    """Non-overlapping, time-sorted activity segments."""

    segments: list  # of (t_start, t_end, ActivityLabel)

    def violations(self):
        out = []
        for i, (t0, t1, lab) in enumerate(self.segments):
            if not t0 < t1:
                out.append(f"label segment {i} ({lab.value}) has t_start >= t_end ({t0} >= {t1})")
        for i in range(len(self.segments) - 1):
            a, b = self.segments[i], self.segments[i + 1]
            if b[0] < a[0]:
                out.append(f"label segments {i} and {i + 1} are out of order")
            elif b[0] < a[1]:
                out.append(
                    f"label segments {i} ({a[2].value} [{a[0]}, {a[1]})) and "
                    f"{i + 1} ({b[2].value} [{b[0]}, {b[1]})) overlap"
                )
        return out

    def span(self):
        if not self.segments:
            return (0.0, 0.0)
        return (self.segments[0][0], max(s[1] for s in self.segments))

    def majority_label(self, t0: float, t1: float):
        """Label covering the longest part of [t0, t1), or None if uncovered.

        Duration ties go to the segment that appears earlier in the window.
        """
        best = None
        best_dur = 0.0
        for s0, s1, lab in self.segments:
            overlap = min(t1, s1) - max(t0, s0)
            if overlap > best_dur:
                best_dur = overlap
                best = lab
        return best


@dataclass
class PipelineConfig:
    """Tunable knobs for the full pipeline. Defaults follow the documented
    design decisions; thresholds left as None are estimated from training
    data (50th / 90th percentile of absolute coefficient values)."""

    tau_small: float | None = None
    tau_large: float | None = None
    wavelet_scale: int = 10
    window_seconds: float = 25.0
    stride_seconds: float = 1.0
    k_visual_words: int = 15
    patch_size: int = 200
    median_filter_width: int = 5
    n_trees: int = 200
    max_corners: int = 200
    fb_threshold: float = 1.0
    rng_seed: int = 0
    class_mode: int = 5
    sample_rate: float = 30.0
    motion_use_wavelet: bool = True
    lk_window: int = 15
    lk_levels: int = 3
    lk_max_iter: int = 10
    lk_epsilon: float = 0.03
    corner_quality: float = 0.01
    corner_min_distance: float = 8.0
    mtry: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None

    def validate(self):
        if (self.tau_small is None) != (self.tau_large is None):
            raise ParameterError("tau_small and tau_large must be set together")
        if self.tau_small is not None and not (0 < self.tau_small < self.tau_large):
            raise ParameterError(
                f"thresholds must satisfy 0 < tau_small < tau_large, "
                f"got ({self.tau_small}, {self.tau_large})"
            )
        if not (self.window_seconds > self.stride_seconds > 0):
            raise ParameterError("need window_seconds > stride_seconds > 0")
        if self.wavelet_scale < 2 or self.wavelet_scale % 2 != 0:
            raise ParameterError(f"wavelet_scale must be even and >= 2, got {self.wavelet_scale}")
        if self.median_filter_width % 2 != 1:
            raise ParameterError(f"median_filter_width must be odd, got {self.median_filter_width}")
        if self.class_mode not in (5, 6):
            raise ParameterError(f"class_mode must be 5 or 6, got {self.class_mode}")
        if self.k_visual_words < 1:
            raise ParameterError("k_visual_words must be >= 1")
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")
        if self.rng_seed < 0:
            raise ParameterError("rng_seed must be non-negative")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs).validate()


def load_config(path) -> PipelineConfig:
    """Read a PipelineConfig from a JSON file. Unknown keys are rejected."""
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", path=path, line=e.lineno) from e
    if not isinstance(data, dict):
        raise ParseError("config root must be a JSON object", path=path)
    return PipelineConfig.from_dict(data)


@dataclass
class SessionRecord:
    """One recorded session of one subject.

    Exactly one of `frames` (image paths, temporal order) or `flows`
    (precomputed per-frame-pair flow, columns dx, dy, n_points) is needed
    for the ego-motion channel; `embeddings` holds one 4096-d vector per
    frame when the visual channel is in use.
    """

    subject_id: str
    session_index: int
    gaze: list  # of GazeSample
    labels: LabelTrack
    sample_rate: float
    frames: list | None = None  # of Path
    flows: np.ndarray | None = None  # (n_pairs, 3): dx, dy, n_points
    embeddings: np.ndarray | None = None  # (n_frames, 4096) float32

    @property
    def n_frames(self) -> int | None:
        if self.frames is not None:
            return len(self.frames)
        if self.flows is not None:
            return len(self.flows) + 1
        if self.embeddings is not None:
            return len(self.embeddings)
        return None

    @property
    def key(self):
        return (self.subject_id, self.session_index)


# --- gaze log ingestion ---------------------------------------------------

#: Maximum tracker-loss gap (s) bridged by linear interpolation; longer
#: gaps hold the last valid position and stay flagged invalid.
MAX_INTERP_GAP = 0.200


def _parse_float(text, what, path, line_no):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"bad {what} value {text!r}", path=path, line=line_no) from None


def parse_gaze_log(path, sample_rate: float | None = None) -> list:
    """Parse a gaze CSV (header ``t,x,y,valid``) into GazeSamples.

    Rows are sorted by time (a warning is emitted if the file was out of
    order), duplicate timestamps are rejected, and tracker-loss samples are
    linearly interpolated across gaps up to MAX_INTERP_GAP.
    """
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError("gaze log is empty", path=path) from None
        if [h.strip().lower() for h in header] != ["t", "x", "y", "valid"]:
            raise ParseError(f"expected header t,x,y,valid, got {','.join(header)}", path=path, line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=line_no)
            t = _parse_float(row[0], "t", path, line_no)
            x = _parse_float(row[1], "x", path, line_no)
            y = _parse_float(row[2], "y", path, line_no)
            v = row[3].strip()
            if v not in ("0", "1"):
                raise ParseError(f"bad valid flag {row[3]!r} (want 0 or 1)", path=path, line=line_no)
            rows.append(GazeSample(t, x, y, v == "1"))
    if not rows:
        raise EmptyInputError("gaze log has a header but no rows", path=path)

    times = np.array([s.t for s in rows])
    if np.any(np.diff(times) < 0):
        warnings.warn(f"{path}: gaze rows out of time order, sorting")
        order = np.argsort(times, kind="stable")
        rows = [rows[i] for i in order]

    deduped = []
    dropped = 0
    for s in rows:
        if deduped and s.t == deduped[-1].t:
            dropped += 1
            continue
        deduped.append(s)
    if dropped:
        warnings.warn(f"{path}: rejected {dropped} duplicate-timestamp row(s)")
    samples = _fill_invalid(deduped)

    if sample_rate is not None and len(samples) > 2:
        dt = np.median(np.diff([s.t for s in samples]))
        if dt > 0 and abs(1.0 / dt - sample_rate) > 0.2 * sample_rate:
            warnings.warn(
                f"{path}: median sample rate {1.0 / dt:.1f} Hz differs from "
                f"declared {sample_rate:.1f} Hz"
            )
    return samples


def _fill_invalid(samples: list) -> list:
    """Repair tracker-loss runs: interpolate short gaps, hold through long ones."""
    n = len(samples)
    valid_idx = [i for i, s in enumerate(samples) if s.valid]
    if not valid_idx or len(valid_idx) == n:
        return samples
    out = list(samples)
    i = 0
    while i < n:
        if out[i].valid:
            i += 1
            continue
        j = i
        while j < n and not out[j].valid:
            j += 1
        prev = i - 1 if i > 0 and out[i - 1].valid else None
        nxt = j if j < n else None
        if prev is not None and nxt is not None:
            gap = out[nxt].t - out[prev].t
            if gap <= MAX_INTERP_GAP + 1e-12:
                p, q = out[prev], out[nxt]
                for k in range(i, j):
                    w = (out[k].t - p.t) / gap
                    out[k] = GazeSample(out[k].t, p.x + w * (q.x - p.x), p.y + w * (q.y - p.y), True)
            else:
                p = out[prev]
                for k in range(i, j):
                    out[k] = GazeSample(out[k].t, p.x, p.y, False)
        elif prev is not None:
            p = out[prev]
            for k in range(i, j):
                out[k] = GazeSample(out[k].t, p.x, p.y, False)
        elif nxt is not None:
            q = out[nxt]
            for k in range(i, j):
                out[k] = GazeSample(out[k].t, q.x, q.y, False)
        i = j
    return out


def write_gaze_csv(samples, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "valid"])
        for s in samples:
            w.writerow([repr(s.t), repr(s.x), repr(s.y), int(s.valid)])


def gaze_arrays(samples):
    """Split a GazeSample sequence into (t, x, y, valid) numpy arrays."""
    t = np.array([s.t for s in samples], dtype=np.float64)
    x = np.array([s.x for s in samples], dtype=np.float64)
    y = np.array([s.y for s in samples], dtype=np.float64)
    v = np.array([s.valid for s in samples], dtype=bool)
    return t, x, y, v


def resample_gaze(samples, target_rate: float) -> list:
    """Resample gaze to a uniform grid at target_rate via linear interpolation.

    The grid starts at the first sample time and runs to the last; both
    endpoints are preserved. A resampled point is valid only if both
    bracketing input samples are valid.
    """
    if target_rate <= 0:
        raise ParameterError(f"target_rate must be positive, got {target_rate}")
    if len(samples) < 2:
        raise InsufficientDataError(f"resampling needs >= 2 samples, got {len(samples)}")
    t, x, y, v = gaze_arrays(samples)
    if np.any(np.diff(t) <= 0):
        raise ParameterError("samples must be strictly increasing in t")
    n_out = int(math.floor((t[-1] - t[0]) * target_rate + 1e-9)) + 1
    tq = t[0] + np.arange(n_out) / target_rate
    xq = np.interp(tq, t, x)
    yq = np.interp(tq, t, y)
    right = np.searchsorted(t, tq, side="left")
    right = np.clip(right, 0, len(t) - 1)
    left = np.clip(right - 1, 0, len(t) - 1)
    exact = t[right] == tq
    vq = np.where(exact, v[right], v[left] & v[right])
    return [GazeSample(float(a), float(b), float(c), bool(d)) for a, b, c, d in zip(tq, xq, yq, vq)]


# --- label ingestion ------------------------------------------------------

_LABEL_BY_NAME = {lab.value: lab for lab in ActivityLabel}


def parse_label_csv(path) -> LabelTrack:
    """Parse an activity label CSV (header ``t_start,t_end,label``)."""
    path = Path(path)
    segments = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError("label file is empty", path=path) from None
        if [h.strip().lower() for h in header] != ["t_start", "t_end", "label"]:
            raise ParseError(
                f"expected header t_start,t_end,label, got {','.join(header)}", path=path, line=1
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=line_no)
            t0 = _parse_float(row[0], "t_start", path, line_no)
            t1 = _parse_float(row[1], "t_end", path, line_no)
            name = row[2].strip().lower()
            if name not in _LABEL_BY_NAME:
                raise ParseError(
                    f"unknown label {row[2]!r} (want one of {', '.join(_LABEL_BY_NAME)})",
                    path=path,
                    line=line_no,
                )
            if not t0 < t1:
                raise ParseError(f"t_start must be < t_end, got {t0} >= {t1}", path=path, line=line_no)
            segments.append((t0, t1, _LABEL_BY_NAME[name]))
    if not segments:
        raise EmptyInputError("label file has a header but no rows", path=path)
    segments.sort(key=lambda s: s[0])
    return LabelTrack(segments)


def write_label_csv(track: LabelTrack, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_start", "t_end", "label"])
        for t0, t1, lab in track.segments:
            w.writerow([repr(t0), repr(t1), lab.value])


# --- session validation and dataset layout --------------------------------

#: Slack (s) allowed between per-channel spans before flagging a coverage gap.
COVERAGE_TOLERANCE = 1.0


def validate_session(session: SessionRecord) -> list:
    """Report-only consistency check; an empty list means the session is usable."""
    v = []
    if not session.gaze:
        v.append("session has no gaze samples")
    else:
        t = np.array([s.t for s in session.gaze])
        if np.any(np.diff(t) <= 0):
            v.append("gaze timestamps are not strictly increasing")
        bad = [s for s in session.gaze if s.valid and (not np.isfinite(s.x) or not np.isfinite(s.y) or s.x < 0 or s.y < 0)]
        if bad:
            v.append(f"{len(bad)} valid gaze sample(s) with negative or non-finite position")
        if t[-1] - t[0] <= 0:
            v.append("gaze duration is not positive")
    v.extend(session.labels.violations())

    if session.frames is not None:
        n_frames = len(session.frames)
    elif session.flows is not None:
        n_frames = len(session.flows) + 1
    else:
        n_frames = session.n_frames
    if session.embeddings is not None and (session.frames is not None or session.flows is not None):
        if len(session.embeddings) != n_frames:
            v.append(
                f"embedding count {len(session.embeddings)} != frame count {n_frames}"
            )
    if session.gaze and n_frames is not None and session.sample_rate > 0:
        t = [s.t for s in session.gaze]
        gaze_span = (t[0], t[-1])
        frame_span = (0.0, (n_frames - 1) / session.sample_rate)
        if (
            abs(gaze_span[0] - frame_span[0]) > COVERAGE_TOLERANCE
            or abs(gaze_span[1] - frame_span[1]) > COVERAGE_TOLERANCE
        ):
            v.append(
                f"gaze span [{gaze_span[0]:.2f}, {gaze_span[1]:.2f}] and frame span "
                f"[{frame_span[0]:.2f}, {frame_span[1]:.2f}] differ by more than "
                f"{COVERAGE_TOLERANCE} s"
            )
    if session.gaze and session.labels.segments:
        t = [s.t for s in session.gaze]
        l0, l1 = session.labels.span()
        if l0 > t[-1] or l1 < t[0]:
            v.append("label track does not overlap the gaze span")
    if session.embeddings is not None and session.embeddings.shape[1] != 4096:
        v.append(f"embeddings have dimension {session.embeddings.shape[1]}, expected 4096")
    return v


def discover_sessions(root) -> list:
    """Scan ``<root>/<subject>/<session>/`` and return (subject, session) keys."""
    root = Path(root)
    if not root.is_dir():
        raise ProtocolError(f"dataset root {root} is not a directory")
    keys = []
    for subj_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for sess_dir in sorted(p for p in subj_dir.iterdir() if p.is_dir()):
            try:
                idx = int(sess_dir.name)
            except ValueError:
                continue
            if (sess_dir / "gaze.csv").exists():
                keys.append((subj_dir.name, idx))
    return keys


def load_session(root, subject: str, session_index: int, config: PipelineConfig) -> SessionRecord:
    """Load one ``<root>/<subject>/<session>/`` directory into a SessionRecord."""
    from . import io as gio  # local import to avoid a cycle at module load
    from .tracking import list_frame_files, parse_flow_csv

    sess_dir = Path(root) / subject / str(session_index)
    gaze_path = sess_dir / "gaze.csv"
    label_path = sess_dir / "labels.csv"
    if not gaze_path.exists():
        raise ProtocolError(f"missing gaze.csv for subject {subject} session {session_index}")
    if not label_path.exists():
        raise ProtocolError(f"missing labels.csv for subject {subject} session {session_index}")
    gaze = parse_gaze_log(gaze_path, sample_rate=config.sample_rate)
    labels = parse_label_csv(label_path)

    frames = None
    frames_dir = sess_dir / "frames"
    if frames_dir.is_dir():
        frames = list_frame_files(frames_dir)
    flows = None
    flow_path = sess_dir / "flows.csv"
    if flow_path.exists():
        flows = parse_flow_csv(flow_path)
    embeddings = None
    emb_path = sess_dir / "embeddings.bin"
    if emb_path.exists():
        embeddings, _ = gio.read_embeddings(emb_path)
    return SessionRecord(
        subject_id=subject,
        session_index=session_index,
        gaze=gaze,
        labels=labels,
        sample_rate=config.sample_rate,
        frames=frames,
        flows=flows,
        embeddings=embeddings,
    )


def write_session_dir(session: SessionRecord, root) -> Path:
    """Write a SessionRecord into the on-disk dataset layout (inverse of
    load_session); frames are not copied, only gaze/labels/flows/embeddings."""
    from . import io as gio
    from .tracking import write_flow_csv

    sess_dir = Path(root) / session.subject_id / str(session.session_index)
    sess_dir.mkdir(parents=True, exist_ok=True)
    write_gaze_csv(session.gaze, sess_dir / "gaze.csv")
    write_label_csv(session.labels, sess_dir / "labels.csv")
    if session.flows is not None:
        write_flow_csv(session.flows, sess_dir / "flows.csv")
    if session.embeddings is not None:
        gio.write_embeddings(session.embeddings, sess_dir / "embeddings.bin", comment="synthetic")
    return sess_dir
