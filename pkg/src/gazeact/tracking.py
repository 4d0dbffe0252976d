"""Global ego-motion from sparse point tracking between consecutive frames.

Candidate corners are tracked with a pyramidal Lucas-Kanade solver, validated
by tracking them backward again, and reduced to a single per-frame-pair
(dx, dy) by taking the component-wise median of the surviving flows. The
resulting 2-D signal is encoded with the same chain as the gaze channel.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import NoFlowError, ParameterError, ParseError, PipelineConfig
from .encoding import (
    SymbolSequence,
    encode_joint,
    encode_signal,
    estimate_thresholds,
    median_filter,
    quantize,
    signal_coefficients,
)

#: Rec. 601 luma weights for RGB -> grayscale conversion.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

#: Patches whose normalized structure tensor has a smaller minimum eigenvalue
#: are considered untrackable (flat or single-edge texture).
MIN_EIG_THRESHOLD = 1e-6


@dataclass
class TrackedPoint:
    origin: tuple
    destination: tuple
    fb_error: float = float("nan")
    status: str = "ok"  # ok | lost | rejected

    @property
    def flow(self):
        return (self.destination[0] - self.origin[0], self.destination[1] - self.origin[1])


@dataclass
class FlowEstimate:
    """Median flow between two frames over n_points surviving tracks."""

    dx: float
    dy: float
    n_points: int


def to_grayscale(img) -> np.ndarray:
    """Float grayscale in [0, 1]; RGB input is reduced with Rec. 601 luma."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ LUMA_WEIGHTS
    if img.size and img.max() > 1.0:
        img = img / 255.0
    return img


def load_frame(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return to_grayscale(np.asarray(im))


_FRAME_INDEX_RE = re.compile(r"(\d+)")


def list_frame_files(directory) -> list:
    """Image files in a directory, ordered by the number in their name."""
    directory = Path(directory)
    paths = [p for p in directory.iterdir() if p.suffix.lower() in (".png", ".pgm", ".jpg", ".jpeg", ".bmp")]

    def index_of(p):
        m = _FRAME_INDEX_RE.findall(p.stem)
        return (int(m[-1]) if m else 0, p.name)

    return sorted(paths, key=index_of)


# --- corner detection -------------------------------------------------------


def detect_corners(frame, max_corners: int = 200, quality: float = 0.01, min_distance: float = 8.0):
    """Shi-Tomasi corners: minimum eigenvalue of the 3x3-windowed structure
    tensor, thresholded at quality * max score, greedily spaced at least
    min_distance apart, strongest first. Returns an (n, 2) array of (x, y)."""
    img = to_grayscale(frame)
    if img.size == 0:
        raise ParameterError("frame is empty")
    h, w = img.shape
    gy, gx = np.gradient(img)
    sxx = ndimage.uniform_filter(gx * gx, size=3, mode="constant")
    syy = ndimage.uniform_filter(gy * gy, size=3, mode="constant")
    sxy = ndimage.uniform_filter(gx * gy, size=3, mode="constant")
    trace = sxx + syy
    disc = np.sqrt((sxx - syy) ** 2 + 4 * sxy**2)
    score = (trace - disc) / 2
    # gradients and windows are unreliable in a 2 px border
    score[:2, :] = 0
    score[-2:, :] = 0
    score[:, :2] = 0
    score[:, -2:] = 0
    max_score = score.max()
    if max_score <= 0:
        return np.empty((0, 2))
    mask = score >= quality * max_score
    if min_distance >= 1.5:
        # 3x3 non-max suppression never changes the greedy outcome when the
        # spacing radius exceeds one pixel; it just shrinks the candidate set
        local_max = score == ndimage.maximum_filter(score, size=3, mode="constant")
        mask &= local_max
    ys, xs = np.nonzero(mask)
    scores = score[ys, xs]
    order = np.lexsort((ys * w + xs, -scores))
    ys, xs = ys[order], xs[order]

    cell = max(min_distance, 1.0)
    occupied = {}
    picked = []
    min_d2 = min_distance * min_distance
    for x, y in zip(xs, ys):
        cx, cy = int(x // cell), int(y // cell)
        ok = True
        for ny in (cy - 1, cy, cy + 1):
            for nx in (cx - 1, cx, cx + 1):
                for px, py in occupied.get((nx, ny), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < min_d2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            picked.append((float(x), float(y)))
            occupied.setdefault((cx, cy), []).append((x, y))
            if len(picked) >= max_corners:
                break
    return np.array(picked, dtype=np.float64).reshape(-1, 2)


# --- pyramidal Lucas-Kanade --------------------------------------------------


def _downsample(img):
    return ndimage.gaussian_filter(img, sigma=1.0, mode="nearest")[::2, ::2]


def _pyramid(img, levels: int):
    pyr = [img]
    for _ in range(levels - 1):
        if min(pyr[-1].shape) < 8:
            break
        pyr.append(_downsample(pyr[-1]))
    return pyr


def _bilinear(img, ys, xs):
    h, w = img.shape
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 2)
    fx = xs - x0
    fy = ys - y0
    v00 = img[y0, x0]
    v01 = img[y0, x0 + 1]
    v10 = img[y0 + 1, x0]
    v11 = img[y0 + 1, x0 + 1]
    return (
        v00 * (1 - fy) * (1 - fx)
        + v01 * (1 - fy) * fx
        + v10 * fy * (1 - fx)
        + v11 * fy * fx
    )


def _window_inside(cx, cy, half, shape):
    h, w = shape
    return (cx - half >= 0) and (cx + half <= w - 1) and (cy - half >= 0) and (cy + half <= h - 1)


def track_lk(
    frame_a,
    frame_b,
    points,
    window: int = 15,
    levels: int = 3,
    max_iter: int = 10,
    eps: float = 0.03,
):
    """Track points from frame_a to frame_b, coarse to fine.

    Each point gets status "ok" with a sub-pixel destination, or "lost" when
    its window leaves the frame or its structure tensor is degenerate at the
    finest level.
    """
    a = to_grayscale(frame_a)
    b = to_grayscale(frame_b)
    if a.shape != b.shape:
        raise ParameterError(f"frame dimensions differ: {a.shape} vs {b.shape}")
    if levels < 1:
        raise ParameterError("levels must be >= 1")
    if window % 2 != 1 or window < 3:
        raise ParameterError("window must be odd and >= 3")

    pyr_a = _pyramid(a, levels)
    pyr_b = _pyramid(b, levels)
    grads = []
    for img in pyr_a:
        gy, gx = np.gradient(img)
        grads.append((gx, gy))

    half = window // 2
    offs = np.arange(window) - half
    oy = offs[:, None]
    ox = offs[None, :]
    area = window * window

    results = []
    for px, py in np.asarray(points, dtype=np.float64).reshape(-1, 2):
        flow = np.zeros(2)
        fine_valid = False
        for level in range(len(pyr_a) - 1, -1, -1):
            img_a = pyr_a[level]
            img_b = pyr_b[level]
            gx, gy = grads[level]
            scale = 2.0**level
            cx, cy = px / scale, py / scale
            flow = flow * 2 if level < len(pyr_a) - 1 else flow

            if not _window_inside(cx, cy, half, img_a.shape):
                continue
            ys = cy + oy
            xs = cx + ox
            patch_a = _bilinear(img_a, ys, xs)
            patch_gx = _bilinear(gx, ys, xs)
            patch_gy = _bilinear(gy, ys, xs)
            gxx = float(np.sum(patch_gx * patch_gx))
            gyy = float(np.sum(patch_gy * patch_gy))
            gxy = float(np.sum(patch_gx * patch_gy))
            trace = gxx + gyy
            min_eig = (trace - np.sqrt((gxx - gyy) ** 2 + 4 * gxy**2)) / 2
            if min_eig / area < MIN_EIG_THRESHOLD:
                continue
            det = gxx * gyy - gxy * gxy
            if det <= 0:
                continue

            for _ in range(max_iter):
                bx, by = cx + flow[0], cy + flow[1]
                if not _window_inside(bx, by, half, img_b.shape):
                    break
                patch_b = _bilinear(img_b, by + oy, bx + ox)
                diff = patch_a - patch_b
                b1 = float(np.sum(diff * patch_gx))
                b2 = float(np.sum(diff * patch_gy))
                nu_x = (gyy * b1 - gxy * b2) / det
                nu_y = (gxx * b2 - gxy * b1) / det
                flow[0] += nu_x
                flow[1] += nu_y
                if nu_x * nu_x + nu_y * nu_y < eps * eps:
                    break
            if level == 0:
                fine_valid = _window_inside(cx + flow[0], cy + flow[1], half, img_b.shape)

        dest = (px + flow[0], py + flow[1])
        status = "ok" if fine_valid else "lost"
        results.append(TrackedPoint(origin=(float(px), float(py)), destination=(float(dest[0]), float(dest[1])), status=status))
    return results


def fb_filter(forward, frame_a, frame_b, threshold: float, **lk_kwargs):
    """Validate forward tracks by re-tracking each destination backward.

    The forward-backward error is the distance between the original point and
    the backward-tracked destination; tracks above `threshold` are marked
    rejected. Flow values of surviving points are untouched; order preserved.
    """
    ok_idx = [i for i, p in enumerate(forward) if p.status == "ok"]
    out = [TrackedPoint(p.origin, p.destination, p.fb_error, p.status) for p in forward]
    if not ok_idx:
        return out
    back = track_lk(frame_b, frame_a, [forward[i].destination for i in ok_idx], **lk_kwargs)
    for i, bp in zip(ok_idx, back):
        p = out[i]
        if bp.status != "ok":
            p.fb_error = float("inf")
        else:
            p.fb_error = float(np.hypot(bp.destination[0] - p.origin[0], bp.destination[1] - p.origin[1]))
        if p.fb_error > threshold:
            p.status = "rejected"
    return out


def median_flow(points) -> FlowEstimate:
    """Component-wise median of the flows of the surviving tracked points."""
    ok = [p for p in points if p.status == "ok"]
    if not ok:
        raise NoFlowError("no surviving tracked points in this frame pair")
    dx = np.array([p.flow[0] for p in ok])
    dy = np.array([p.flow[1] for p in ok])
    return FlowEstimate(float(np.median(dx)), float(np.median(dy)), len(ok))


# --- per-session flow sequence and encoding ----------------------------------


def _as_image(frame):
    return load_frame(frame) if isinstance(frame, (str, Path)) else to_grayscale(frame)


def estimate_flow_sequence(frames, config: PipelineConfig) -> np.ndarray:
    """Median flow for every consecutive frame pair.

    Returns an (n_frames - 1, 3) array with columns dx, dy, n_points. Pairs
    where no track survives contribute (0, 0) with n_points = 0.
    """
    if len(frames) < 2:
        raise ParameterError(f"need at least 2 frames, got {len(frames)}")
    rows = np.zeros((len(frames) - 1, 3))
    prev = _as_image(frames[0])
    for i in range(1, len(frames)):
        cur = _as_image(frames[i])
        corners = detect_corners(
            prev,
            max_corners=config.max_corners,
            quality=config.corner_quality,
            min_distance=config.corner_min_distance,
        )
        if len(corners):
            tracked = track_lk(
                prev,
                cur,
                corners,
                window=config.lk_window,
                levels=config.lk_levels,
                max_iter=config.lk_max_iter,
                eps=config.lk_epsilon,
            )
            tracked = fb_filter(
                tracked,
                prev,
                cur,
                config.fb_threshold,
                window=config.lk_window,
                levels=config.lk_levels,
                max_iter=config.lk_max_iter,
                eps=config.lk_epsilon,
            )
            try:
                est = median_flow(tracked)
                rows[i - 1] = (est.dx, est.dy, est.n_points)
            except NoFlowError:
                rows[i - 1] = (0.0, 0.0, 0)
        prev = cur
    return rows


def encode_motion_channel(frames_or_flows, config: PipelineConfig, taus=None) -> SymbolSequence:
    """Encode per-frame-pair global flow into motion symbols.

    Accepts either a frame sequence (paths or arrays) or a precomputed flow
    array with dx, dy in the first two columns. Flow sample i carries the
    timestamp of frame i on the frame clock.
    """
    if isinstance(frames_or_flows, np.ndarray) and frames_or_flows.ndim == 2:
        flows = frames_or_flows
    else:
        flows = estimate_flow_sequence(frames_or_flows, config)
    dx = flows[:, 0].astype(np.float64)
    dy = flows[:, 1].astype(np.float64)
    t = np.arange(len(dx)) / config.sample_rate
    if config.motion_use_wavelet:
        return encode_signal(t, dx, dy, config, taus=taus)
    fx = median_filter(dx, config.median_filter_width)
    fy = median_filter(dy, config.median_filter_width)
    if taus is None:
        if config.tau_small is not None:
            taus = (config.tau_small, config.tau_large)
        else:
            taus = estimate_thresholds([fx, fy])
    return SymbolSequence(t, encode_joint(quantize(fx, *taus), quantize(fy, *taus)))


def motion_coefficients(flows: np.ndarray, config: PipelineConfig):
    """Wavelet coefficients of a flow sequence, for threshold estimation."""
    cx, cy = (
        np.asarray(flows[:, 0], dtype=np.float64),
        np.asarray(flows[:, 1], dtype=np.float64),
    )
    wx, wy = signal_coefficients(cx, cy, config)
    return wx.values, wy.values


# --- flow CSV (precomputed-flow interchange) ---------------------------------


def write_flow_csv(flows: np.ndarray, path):
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "dx", "dy", "n_points"])
        for i, row in enumerate(flows):
            w.writerow([i, repr(float(row[0])), repr(float(row[1])), int(row[2])])


def parse_flow_csv(path) -> np.ndarray:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["frame_index", "dx", "dy", "n_points"]:
            raise ParseError("expected header frame_index,dx,dy,n_points", path=path, line=1)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=line_no)
            try:
                idx = int(row[0])
                rows.append((idx, float(row[1]), float(row[2]), int(row[3])))
            except ValueError:
                raise ParseError(f"bad numeric field in {row!r}", path=path, line=line_no) from None
    if not rows:
        raise ParseError("flow file has a header but no rows", path=path)
    rows.sort(key=lambda r: r[0])
    expect = list(range(rows[0][0], rows[0][0] + len(rows)))
    if [r[0] for r in rows] != expect:
        raise ParseError("frame_index values must be consecutive", path=path)
    return np.array([(r[1], r[2], r[3]) for r in rows], dtype=np.float64)
