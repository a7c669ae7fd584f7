"""Training-batch assembly: random co-located crops and jitter augmentation.

A batch holds images as float32 in [0, 1], shape (n, crop, crop, 3), and
labels as uint8 phase codes, shape (n, crop, crop).  All randomness comes
from the caller's seeded generator, with a fixed draw order (pair index,
x offset, y offset per crop; flip-h, flip-v, quarter turns, scale per
jitter item), so identical seeds give byte-identical batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch.nn import functional as F

from ..errors import InputError
from ..raster import PhaseLabel, PhaseMask, Scan


@dataclass
class Batch:
    images: np.ndarray  # (n, H, W, 3) float32 in [0, 1]
    labels: np.ndarray  # (n, H, W) uint8

    def __len__(self) -> int:
        return self.images.shape[0]


def check_pairs(pairs: list[tuple[Scan, PhaseMask]]) -> None:
    if not pairs:
        raise InputError("no training pairs")
    for scan, mask in pairs:
        if (scan.height, scan.width) != (mask.height, mask.width):
            raise InputError(
                f"pair {scan.id!r}: scan {scan.width}x{scan.height} vs mask {mask.width}x{mask.height}"
            )


def sample_crops(pairs: list[tuple[Scan, PhaseMask]], n: int, crop: int, rng: np.random.Generator) -> Batch:
    """Draw n co-located (image, label) crops uniformly over pairs and offsets."""
    check_pairs(pairs)
    smallest = min(min(s.width, s.height) for s, _ in pairs)
    if crop > smallest:
        raise InputError(f"crop {crop} larger than smallest training image ({smallest} px)")
    images = np.empty((n, crop, crop, 3), dtype=np.float32)
    labels = np.empty((n, crop, crop), dtype=np.uint8)
    for k in range(n):
        scan, mask = pairs[int(rng.integers(0, len(pairs)))]
        x = int(rng.integers(0, scan.width - crop + 1))
        y = int(rng.integers(0, scan.height - crop + 1))
        images[k] = scan.pixels[y : y + crop, x : x + crop].astype(np.float32) / 255.0
        labels[k] = mask.labels[y : y + crop, x : x + crop]
    return Batch(images=images, labels=labels)


@dataclass(frozen=True)
class JitterParams:
    flip_h: bool
    flip_v: bool
    quarter_turns: int  # multiples of 90 degrees, 0..3
    scale: float


IDENTITY_JITTER = JitterParams(flip_h=False, flip_v=False, quarter_turns=0, scale=1.0)

SCALE_RANGE = (0.75, 1.25)


def draw_jitter(rng: np.random.Generator) -> JitterParams:
    return JitterParams(
        flip_h=bool(rng.random() < 0.5),
        flip_v=bool(rng.random() < 0.5),
        quarter_turns=int(rng.integers(0, 4)),
        scale=float(rng.uniform(*SCALE_RANGE)),
    )


def _resize(image: np.ndarray, label: np.ndarray, new: int) -> tuple[np.ndarray, np.ndarray]:
    img = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).unsqueeze(0)
    img = F.interpolate(img, size=(new, new), mode="bilinear", align_corners=False)
    lab = torch.from_numpy(np.ascontiguousarray(label)).float().unsqueeze(0).unsqueeze(0)
    lab = F.interpolate(lab, size=(new, new), mode="nearest")
    return (
        img.squeeze(0).permute(1, 2, 0).numpy(),
        lab.squeeze(0).squeeze(0).numpy().astype(np.uint8),
    )


def apply_jitter(image: np.ndarray, label: np.ndarray, params: JitterParams) -> tuple[np.ndarray, np.ndarray]:
    """Flip, rotate by quarter turns, then rescale with center crop/pad.

    Images are resampled bilinearly, labels nearest-neighbor; padding after
    a shrink is black in the image and unlabeled in the labels.
    """
    size = image.shape[0]
    if params.flip_h:
        image, label = image[:, ::-1], label[:, ::-1]
    if params.flip_v:
        image, label = image[::-1, :], label[::-1, :]
    k = params.quarter_turns % 4
    if k:
        image, label = np.rot90(image, k), np.rot90(label, k)
    new = int(round(size * params.scale))
    if new != size:
        image, label = _resize(image, label, new)
        if new > size:
            off = (new - size) // 2
            image = image[off : off + size, off : off + size]
            label = label[off : off + size, off : off + size]
        else:
            before = (size - new) // 2
            after = size - new - before
            image = np.pad(image, ((before, after), (before, after), (0, 0)))
            label = np.pad(label, ((before, after), (before, after)), constant_values=int(PhaseLabel.UNLABELED))
    return np.ascontiguousarray(image), np.ascontiguousarray(label)


def jitter(batch: Batch, rng: np.random.Generator) -> Batch:
    """Independently jitter every crop in the batch."""
    images = np.empty_like(batch.images)
    labels = np.empty_like(batch.labels)
    for k in range(len(batch)):
        images[k], labels[k] = apply_jitter(batch.images[k], batch.labels[k], draw_jitter(rng))
    return Batch(images=images, labels=labels)


def to_tensors(batch: Batch) -> tuple[torch.Tensor, torch.Tensor]:
    """(n, 3, H, W) float32 image tensor and (n, H, W) int64 label tensor."""
    images = torch.from_numpy(batch.images).permute(0, 3, 1, 2).contiguous()
    labels = torch.from_numpy(batch.labels.astype(np.int64))
    return images, labels
