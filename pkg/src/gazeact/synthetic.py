"""Synthetic sessions with controllable activity regimes.

Three desk-scale "activities" are generated with distinct saccade amplitude
distributions, camera pan patterns, and visual word priors, so the full
pipeline can be exercised and evaluated without recorded data. Also provides
textured test frames with exact integer translations for tracker checks.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import ActivityLabel, GazeSample, LabelTrack, SessionRecord
from .io import EMBED_DIM

FRAME_W, FRAME_H = 640, 480

#: Per-regime generator knobs: saccade amplitude (px), mean fixation length
#: (s), pan pattern id, and visual word prior (over the prototype bank).
_REGIMES = (
    dict(amplitude=8.0, fixation=0.4, pan="still", word_probs=(0.70, 0.20, 0.06, 0.04)),
    dict(amplitude=70.0, fixation=1.0, pan="sweep_x", word_probs=(0.04, 0.70, 0.20, 0.06)),
    dict(amplitude=200.0, fixation=2.2, pan="bounce_y", word_probs=(0.06, 0.04, 0.70, 0.20)),
)

_DEFAULT_ACTIVITIES = (ActivityLabel.READ, ActivityLabel.WATCH_VIDEO, ActivityLabel.WRITE)


def make_textured_frame(shape=(FRAME_H, FRAME_W), seed: int = 0, smoothing: float = 2.0) -> np.ndarray:
    """Band-limited random texture in [0, 1], good corner coverage everywhere."""
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random(shape), sigma=smoothing)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def translate_frame(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Exact integer translation with wraparound (content moves by (dx, dy))."""
    return np.roll(np.roll(img, dy, axis=0), dx, axis=1)


def _reflect(v: float, hi: float) -> float:
    if v < 0:
        v = -v
    if v > hi:
        v = 2 * hi - v
    return min(max(v, 0.0), hi)


def _gaze_trace(rng, duration, rate, regime):
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    x = np.empty(n)
    y = np.empty(n)
    cx, cy = FRAME_W / 2, FRAME_H / 2
    next_saccade = rng.exponential(regime["fixation"])
    for i, ti in enumerate(t):
        if ti >= next_saccade:
            angle = rng.uniform(0, 2 * np.pi)
            amp = abs(rng.normal(regime["amplitude"], regime["amplitude"] / 5))
            cx = _reflect(cx + amp * np.cos(angle), FRAME_W)
            cy = _reflect(cy + amp * np.sin(angle), FRAME_H)
            next_saccade = ti + rng.exponential(regime["fixation"])
        x[i] = cx + rng.normal(0, 0.7)
        y[i] = cy + rng.normal(0, 0.7)
    x = np.clip(x, 0, FRAME_W)
    y = np.clip(y, 0, FRAME_H)
    return t, x, y


def _flow_trace(rng, n, rate, regime):
    t = np.arange(n) / rate
    dx = rng.normal(0, 0.05, n)
    dy = rng.normal(0, 0.05, n)
    if regime["pan"] == "sweep_x":
        dx = dx + 3.0 * np.sin(2 * np.pi * t / 4.0)
    elif regime["pan"] == "bounce_y":
        dy = dy + 4.0 * np.sign(np.sin(2 * np.pi * t / 6.0))
    flows = np.column_stack([dx, dy, np.full(n, 50.0)])
    return flows


def _embeddings(rng, n, regime, prototypes):
    word_ids = rng.choice(len(regime["word_probs"]), size=n, p=regime["word_probs"])
    base = prototypes[word_ids]
    noisy = base + rng.normal(0, 0.08, base.shape)
    return np.clip(noisy, 0, None).astype(np.float32)


def make_synthetic_sessions(
    seed: int = 0,
    n_subjects: int = 3,
    rate: float = 6.0,
    segment_seconds: float = 50.0,
    activities=_DEFAULT_ACTIVITIES,
    void_seconds: float = 0.0,
    embed_dim: int = EMBED_DIM,
) -> list:
    """Two sessions per subject, one labeled segment per activity regime.

    With void_seconds > 0, a Void gap separates consecutive activities
    (useful for exercising 6-class mode).
    """
    if len(activities) > len(_REGIMES):
        raise ValueError(f"at most {len(_REGIMES)} distinct regimes are available")
    proto_rng = np.random.default_rng(np.random.SeedSequence([seed, 977]))
    prototypes = proto_rng.random((max(len(r["word_probs"]) for r in _REGIMES), embed_dim)).astype(np.float32)

    sessions = []
    for subj in range(n_subjects):
        for sess in (1, 2):
            rng = np.random.default_rng(np.random.SeedSequence([seed, subj, sess]))
            segments = []
            gaze_parts = []
            flow_parts = []
            embed_parts = []
            t_cursor = 0.0
            for a, activity in enumerate(activities):
                regime = _REGIMES[a]
                if void_seconds > 0 and a > 0:
                    segments.append((t_cursor, t_cursor + void_seconds, ActivityLabel.VOID))
                    n_void = int(round(void_seconds * rate))
                    vt, vx, vy = _gaze_trace(rng, void_seconds, rate, _REGIMES[(a + 1) % len(_REGIMES)])
                    gaze_parts.append((vt + t_cursor, vx, vy))
                    flow_parts.append(_flow_trace(rng, n_void, rate, _REGIMES[(a + 1) % len(_REGIMES)]))
                    embed_parts.append(_embeddings(rng, n_void, regime, prototypes))
                    t_cursor += void_seconds
                segments.append((t_cursor, t_cursor + segment_seconds, activity))
                n_seg = int(round(segment_seconds * rate))
                gt, gx, gy = _gaze_trace(rng, segment_seconds, rate, regime)
                gaze_parts.append((gt + t_cursor, gx, gy))
                flow_parts.append(_flow_trace(rng, n_seg, rate, regime))
                embed_parts.append(_embeddings(rng, n_seg, regime, prototypes))
                t_cursor += segment_seconds

            t = np.concatenate([p[0] for p in gaze_parts])
            x = np.concatenate([p[1] for p in gaze_parts])
            y = np.concatenate([p[2] for p in gaze_parts])
            gaze = [GazeSample(float(a_), float(b_), float(c_)) for a_, b_, c_ in zip(t, x, y)]
            flows = np.vstack(flow_parts)[:-1]  # n_frames - 1 pairs
            embeddings = np.vstack(embed_parts)
            sessions.append(
                SessionRecord(
                    subject_id=f"s{subj + 1:02d}",
                    session_index=sess,
                    gaze=gaze,
                    labels=LabelTrack(segments),
                    sample_rate=rate,
                    flows=flows,
                    embeddings=embeddings,
                )
            )
    return sessions
