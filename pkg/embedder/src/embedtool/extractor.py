"""Patch extraction and the fc7 feature network."""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision.models import alexnet

from .gaemio import EMBED_DIM, write_embeddings

PATCH_SIZE = 200
INPUT_SIZE = 227  # AlexNet's canonical input resolution

# standard ImageNet channel statistics
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def extract_patch(frame: np.ndarray, gaze, size: int = PATCH_SIZE) -> np.ndarray:
    """Crop a size x size patch centered at the gaze point.

    Regions outside the frame are filled by edge replication; a missing or
    non-finite gaze falls back to the frame center. Output is always exactly
    size x size (x channels).
    """
    frame = np.asarray(frame)
    h, w = frame.shape[:2]
    if gaze is None or not all(math.isfinite(c) for c in gaze):
        gaze = (w / 2.0, h / 2.0)
    cx = int(round(gaze[0]))
    cy = int(round(gaze[1]))
    half = size // 2
    x0, x1 = cx - half, cx - half + size
    y0, y1 = cy - half, cy - half + size
    core = frame[max(y0, 0) : max(min(y1, h), 0), max(x0, 0) : max(min(x1, w), 0)]
    if core.size == 0:  # gaze entirely off-frame: clamp to the nearest edge pixel
        core = frame[min(max(cy, 0), h - 1) : min(max(cy, 0), h - 1) + 1,
                     min(max(cx, 0), w - 1) : min(max(cx, 0), w - 1) + 1]
        y0, y1 = 0, 1
        x0, x1 = 0, 1
        pad_top, pad_bottom = half, size - half - 1
        pad_left, pad_right = half, size - half - 1
    else:
        pad_top = max(0, -y0)
        pad_bottom = max(0, y1 - h)
        pad_left = max(0, -x0)
        pad_right = max(0, x1 - w)
    pads = [(pad_top, pad_bottom), (pad_left, pad_right)]
    if frame.ndim == 3:
        pads.append((0, 0))
    patch = np.pad(core, pads, mode="edge")
    return patch[:size, :size]


class Fc7Extractor:
    """AlexNet feature extractor returning post-ReLU fc7 activations.

    Loads ImageNet-pretrained weights when a local state-dict path is given
    (or the torchvision download cache already holds them); otherwise falls
    back to a fixed-seed random initialization so runs stay deterministic.
    The provenance string says which one happened and is recorded in the
    output file header.
    """

    def __init__(self, weights: str | None = None, seed: int = 0):
        if weights is not None:
            model = alexnet(weights=None)
            state = torch.load(weights, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
            self.provenance = f"alexnet fc7+relu, weights from {Path(weights).name}"
        else:
            try:
                from torchvision.models import AlexNet_Weights

                model = alexnet(weights=AlexNet_Weights.IMAGENET1K_V1)
                self.provenance = "alexnet fc7+relu, torchvision IMAGENET1K_V1"
            except Exception:
                # offline and no cached checkpoint: stay deterministic anyway
                torch.manual_seed(seed)
                model = alexnet(weights=None)
                self.provenance = f"alexnet fc7+relu, random init seed={seed} (no pretrained weights available)"
        # keep everything up to and including the second ReLU of the classifier
        self.features = model.features
        self.avgpool = model.avgpool
        self.head = model.classifier[:6]
        for module in (self.features, self.avgpool, self.head):
            module.eval()
            for p in module.parameters():
                p.requires_grad_(False)

    def preprocess(self, patch: np.ndarray) -> torch.Tensor:
        img = Image.fromarray(_to_uint8(patch))
        if img.mode != "RGB":
            img = img.convert("RGB")
        img = img.resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
        arr = (arr - _MEAN) / _STD
        return torch.from_numpy(arr.transpose(2, 0, 1))

    @torch.no_grad()
    def __call__(self, patches) -> np.ndarray:
        batch = torch.stack([self.preprocess(p) for p in patches])
        x = self.features(batch)
        x = self.avgpool(x)
        x = torch.flatten(x, 1)
        x = self.head(x)
        out = x.numpy().astype(np.float32)
        assert out.shape[1] == EMBED_DIM
        return out


def _to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    img = np.asarray(img, dtype=np.float64)
    if img.size and img.max() <= 1.0:
        img = img * 255.0
    return np.clip(img, 0, 255).astype(np.uint8)


_INDEX_RE = re.compile(r"(\d+)")


def list_frame_files(directory) -> list:
    directory = Path(directory)
    paths = [
        p
        for p in directory.iterdir()
        if p.suffix.lower() in (".png", ".pgm", ".jpg", ".jpeg", ".bmp")
    ]

    def index_of(p):
        m = _INDEX_RE.findall(p.stem)
        return (int(m[-1]) if m else 0, p.name)

    return sorted(paths, key=index_of)


def load_gaze_csv(path):
    """Read the pipeline's gaze CSV (header t,x,y,valid) into plain arrays."""
    ts, xs, ys, valid = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["t", "x", "y", "valid"]:
            raise ValueError(f"{path}: expected header t,x,y,valid")
        for row in reader:
            if not row:
                continue
            ts.append(float(row[0]))
            xs.append(float(row[1]))
            ys.append(float(row[2]))
            valid.append(row[3].strip() == "1")
    order = np.argsort(np.asarray(ts), kind="stable")
    return (
        np.asarray(ts)[order],
        np.asarray(xs)[order],
        np.asarray(ys)[order],
        np.asarray(valid, dtype=bool)[order],
    )


def gaze_for_frames(n_frames: int, rate: float, gaze) -> list:
    """Nearest-in-time valid gaze point per frame; None when none is usable."""
    ts, xs, ys, valid = gaze
    if not valid.any():
        return [None] * n_frames
    vts, vxs, vys = ts[valid], xs[valid], ys[valid]
    out = []
    for i in range(n_frames):
        t = i / rate
        j = int(np.searchsorted(vts, t))
        cands = [k for k in (j - 1, j) if 0 <= k < len(vts)]
        k = min(cands, key=lambda k: abs(vts[k] - t))
        out.append((float(vxs[k]), float(vys[k])))
    return out


def embed_frames(
    frames_dir,
    gaze_csv,
    out_path,
    weights: str | None = None,
    batch: int = 16,
    rate: float = 30.0,
    seed: int = 0,
) -> int:
    """Produce one fc7 descriptor per frame and write the embeddings file.

    Returns the number of frames embedded.
    """
    frames = list_frame_files(frames_dir)
    if not frames:
        raise FileNotFoundError(f"no frame images found in {frames_dir}")
    gaze = load_gaze_csv(gaze_csv)
    centers = gaze_for_frames(len(frames), rate, gaze)
    extractor = Fc7Extractor(weights=weights, seed=seed)

    chunks = []
    for start in range(0, len(frames), batch):
        patches = []
        for path, center in zip(frames[start : start + batch], centers[start : start + batch]):
            with Image.open(path) as im:
                frame = np.asarray(im)
            patches.append(extract_patch(frame, center))
        chunks.append(extractor(patches))
    embeddings = np.vstack(chunks)
    write_embeddings(embeddings, out_path, comment=extractor.provenance)
    return len(frames)
