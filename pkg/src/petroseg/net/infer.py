"""Tiled inference over arbitrarily large scans.

The scan is covered with fixed-size tiles whose class probabilities are
summed in overlap regions (every pixel gets the same number of tile
contributions per class, so the argmax of the sum equals the argmax of
the mean).  Ties break toward the lowest class code.  A scan smaller than
the tile is handled as a single edge-padded tile; the returned mask
always covers exactly the scan.
"""

from __future__ import annotations

import numpy as np
import torch

from ..raster import PhaseMask, Scan
from .model import SIZE_MULTIPLE, SegNet, forward

DEFAULT_TILE = 256
DEFAULT_OVERLAP = 32


def tile_origins(extent: int, tile: int, overlap: int) -> list[int]:
    """Tile start offsets covering [0, extent) with at least ``overlap`` overlap."""
    if extent <= tile:
        return [0]
    step = tile - overlap
    origins = list(range(0, extent - tile + 1, step))
    if origins[-1] != extent - tile:
        origins.append(extent - tile)
    return origins


def predict_tiled(
    net: SegNet,
    scan: Scan,
    tile: int = DEFAULT_TILE,
    overlap: int = DEFAULT_OVERLAP,
    threads: int = 1,
) -> PhaseMask:
    if overlap < 0:
        raise ValueError("overlap must be >= 0")
    if tile <= 2 * overlap:
        raise ValueError(f"tile ({tile}) must exceed twice the overlap ({overlap})")
    if tile % SIZE_MULTIPLE:
        raise ValueError(f"tile must be a multiple of {SIZE_MULTIPLE}")
    torch.set_num_threads(threads)
    height, width = scan.height, scan.width
    scores = np.zeros((net.classes, height, width), dtype=np.float32)
    net.eval()
    with torch.no_grad():
        for y0 in tile_origins(height, tile, overlap):
            for x0 in tile_origins(width, tile, overlap):
                h = min(tile, height - y0)
                w = min(tile, width - x0)
                patch = scan.pixels[y0 : y0 + h, x0 : x0 + w].astype(np.float32) / 255.0
                if h < tile or w < tile:
                    patch = np.pad(patch, ((0, tile - h), (0, tile - w), (0, 0)), mode="edge")
                images = torch.from_numpy(patch).permute(2, 0, 1).unsqueeze(0)
                probs = forward(net, images).squeeze(0).numpy()
                scores[:, y0 : y0 + h, x0 : x0 + w] += probs[:, :h, :w]
    labels = scores.argmax(axis=0).astype(np.uint8)  # first max wins: lowest code
    return PhaseMask(pitch_um=scan.pitch_um, labels=labels)
