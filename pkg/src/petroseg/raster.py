"""Raster types and IO for concrete scans and phase masks.

A scan is an 8-bit RGB raster with an isotropic physical pixel pitch in
micrometres per pixel (image files carry no trusted physical metadata, so
the pitch is always supplied by the caller).  A phase mask assigns each
pixel one of three concrete phases, or marks it unlabeled:

    0 = aggregate, 1 = paste, 2 = void, 255 = unlabeled

Masks are stored on disk as single-channel 8-bit PNGs holding the codes
verbatim; a palette rendering is available for visual inspection only.
All types are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError


class PhaseLabel(IntEnum):
    AGGREGATE = 0
    PASTE = 1
    VOID = 2
    UNLABELED = 255


#: Phases that may appear in ground truth (unlabeled is for masks only).
PHASES = (PhaseLabel.AGGREGATE, PhaseLabel.PASTE, PhaseLabel.VOID)

VALID_CODES = frozenset(int(p) for p in PhaseLabel)

#: Short names used in annotation files and reports.
LABEL_NAMES = {
    PhaseLabel.AGGREGATE: "AGG",
    PhaseLabel.PASTE: "PASTE",
    PhaseLabel.VOID: "VOID",
    PhaseLabel.UNLABELED: "UNLABELED",
}
NAME_TO_LABEL = {name: label for label, name in LABEL_NAMES.items()}

#: Fixed rendering palette for phase masks (RGB).
PALETTE = {
    PhaseLabel.AGGREGATE: (128, 0, 128),
    PhaseLabel.PASTE: (0, 170, 0),
    PhaseLabel.VOID: (255, 255, 0),
    PhaseLabel.UNLABELED: (0, 0, 0),
}

DEFAULT_PITCH_UM = 5.3


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scan:
    """An RGB scan raster with physical pixel pitch.

    ``pixels`` is a read-only (height, width, 3) uint8 array in row-major
    order.
    """

    id: str
    pitch_um: float
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.pitch_um <= 0:
            raise ValueError(f"pitch must be positive, got {self.pitch_um}")
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"scan pixels must be (H, W, 3) uint8, got {px.shape} {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("scan must be at least 1x1")
        _freeze(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def extent_mm(self) -> tuple[float, float]:
        """Physical (width, height) in millimetres."""
        return (self.width * self.pitch_um / 1000.0, self.height * self.pitch_um / 1000.0)


@dataclass(frozen=True, eq=False)
class PhaseMask:
    """A per-pixel phase label raster.

    ``labels`` is a read-only (height, width) uint8 array whose values are
    all valid phase codes.
    """

    pitch_um: float
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.pitch_um <= 0:
            raise ValueError(f"pitch must be positive, got {self.pitch_um}")
        lab = self.labels
        if lab.ndim != 2 or lab.dtype != np.uint8:
            raise ValueError(f"mask labels must be (H, W) uint8, got {lab.shape} {lab.dtype}")
        if lab.shape[0] < 1 or lab.shape[1] < 1:
            raise ValueError("mask must be at least 1x1")
        bad = ~np.isin(lab, (0, 1, 2, 255))
        if bad.any():
            ys, xs = np.nonzero(bad)
            raise InputError(
                f"invalid phase code {int(lab[ys[0], xs[0]])} at (x={int(xs[0])}, y={int(ys[0])})"
            )
        _freeze(lab)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class Rect:
    """An axis-aligned pixel rectangle, x/y at the top-left corner."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"rect must have positive size, got {self.w}x{self.h}")

    def fits_in(self, width: int, height: int) -> bool:
        return 0 <= self.x and 0 <= self.y and self.x + self.w <= width and self.y + self.h <= height

    def translated(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)


def load_scan(path, pitch_um: float = DEFAULT_PITCH_UM) -> Scan:
    """Load an 8-bit RGB (or RGBA, alpha dropped) PNG/TIFF scan.

    The scan id is the file stem.  Any other color model is rejected:
    predictability over permissiveness.
    """
    if pitch_um <= 0:
        raise ValueError(f"pitch must be positive, got {pitch_um}")
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise InputError(f"scan file not found: {path}")
    except Exception as exc:
        raise InputError(f"cannot decode scan {path}: {exc}")
    if img.mode == "RGBA":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise InputError(f"unsupported color model {img.mode!r} in {path}: need 8-bit RGB or RGBA")
    pixels = np.asarray(img, dtype=np.uint8)
    return Scan(id=path.stem, pitch_um=pitch_um, pixels=pixels)


def load_mask(path, pitch_um: float = DEFAULT_PITCH_UM) -> PhaseMask:
    """Load a phase mask from a single-channel indexed/grayscale PNG.

    Every pixel must be one of the codes {0, 1, 2, 255}; the first
    offending value is reported with its location.
    """
    if pitch_um <= 0:
        raise ValueError(f"pitch must be positive, got {pitch_um}")
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise InputError(f"mask file not found: {path}")
    except Exception as exc:
        raise InputError(f"cannot decode mask {path}: {exc}")
    if img.mode not in ("L", "P"):
        raise InputError(f"unsupported mask color model {img.mode!r} in {path}: need 8-bit single channel")
    labels = np.asarray(img, dtype=np.uint8)
    try:
        return PhaseMask(pitch_um=pitch_um, labels=labels)
    except InputError as exc:
        raise InputError(f"{path}: {exc}")


def save_mask(mask: PhaseMask, path, mode: str = "indexed") -> None:
    """Write a mask as PNG, either raw codes or the fixed palette render.

    ``indexed`` writes the label codes verbatim into a grayscale PNG and
    round-trips bit-exactly through :func:`load_mask`.  ``palette`` writes
    a paletted PNG (aggregate purple, paste green, void yellow, unlabeled
    black); pixel values are still the codes, so the render stays
    invertible.
    """
    path = Path(path)
    if mode == "indexed":
        img = Image.fromarray(np.asarray(mask.labels), mode="L")
    elif mode == "palette":
        img = Image.fromarray(np.asarray(mask.labels), mode="P")
        table = [0] * 768
        for label, (r, g, b) in PALETTE.items():
            table[3 * int(label) : 3 * int(label) + 3] = [r, g, b]
        img.putpalette(table)
    else:
        raise ValueError(f"unknown save mode {mode!r}")
    try:
        img.save(path, format="PNG")
    except OSError as exc:
        raise InputError(f"cannot write mask {path}: {exc}")


def labels_from_palette_rgb(rgb: np.ndarray) -> np.ndarray:
    """Invert the fixed palette: (H, W, 3) RGB render back to label codes."""
    out = np.full(rgb.shape[:2], -1, dtype=np.int16)
    for label, color in PALETTE.items():
        out[np.all(rgb == np.array(color, dtype=np.uint8), axis=-1)] = int(label)
    if (out < 0).any():
        ys, xs = np.nonzero(out < 0)
        raise InputError(f"pixel (x={int(xs[0])}, y={int(ys[0])}) is not a palette color")
    return out.astype(np.uint8)


def phase_fractions(mask: PhaseMask) -> dict[PhaseLabel, float]:
    """Per-phase fraction of labeled (non-unlabeled) pixels.

    Fractions sum to 1 within 1e-12.  Raises if every pixel is unlabeled.
    """
    counts = np.bincount(mask.labels.ravel(), minlength=256)
    labeled = int(counts[0] + counts[1] + counts[2])
    if labeled == 0:
        raise InputError("mask has no labeled pixels")
    return {phase: counts[int(phase)] / labeled for phase in PHASES}


def crop(raster, r: Rect):
    """Cut an exact sub-raster, preserving kind and pitch."""
    if not r.fits_in(raster.width, raster.height):
        raise InputError(
            f"rect {r} out of bounds for {raster.width}x{raster.height} raster"
        )
    if isinstance(raster, Scan):
        sub = raster.pixels[r.y : r.y + r.h, r.x : r.x + r.w].copy()
        return Scan(id=raster.id, pitch_um=raster.pitch_um, pixels=sub)
    if isinstance(raster, PhaseMask):
        sub = raster.labels[r.y : r.y + r.h, r.x : r.x + r.w].copy()
        return PhaseMask(pitch_um=raster.pitch_um, labels=sub)
    raise TypeError(f"cannot crop {type(raster).__name__}")
