"""Synthetic concrete-scan phantoms with exactly known phase geometry.

A phantom is built by painting random disks onto an all-paste canvas:
aggregate disks first, then void disks, each painted only over remaining
paste so painted pixel counts are exact.  Painting stops once the phase
hits its pixel target, which pins the phase fractions to the requested
values within one smallest-disk area (about 1e-4 of a 2000 px square
raster).

The phantom is rendered as a color-treated scan: pink paste, orange
powder-filled voids, gray aggregate, each with smooth texture plus pixel
noise but kept safely inside the default color-rule windows.  Optionally
two noise probes are planted for exercising the component area filter: a
3-pixel void (84.27 um^2 at 5.3 um pitch, below the 100 um^2 threshold)
and a 356-pixel aggregate speck (10000.04 um^2, just above the
10000 um^2 threshold).  Probes are kept clear of the random disks so they
stay isolated components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import DEFAULT_PITCH_UM, PhaseLabel, PhaseMask, Rect, Scan

VOID_PROBE_PX = 3
SPECK_PROBE_PX = 356


@dataclass(frozen=True)
class PhantomProbes:
    """Planted area-filter probes: pixel coordinates of each feature."""

    void_px: tuple[tuple[int, int], ...]  # (x, y) pixels of the 3-px void
    speck_rect: Rect  # bounding box of the 356-px aggregate speck
    speck_px_count: int


@dataclass(frozen=True)
class Phantom:
    scan: Scan
    mask: PhaseMask
    probes: PhantomProbes | None


def _paint_disks(labels, phase, target_px, rng, r_min, r_max, exclusions, max_tries=400_000):
    """Paint random disks of ``phase`` over paste until ``target_px`` painted.

    Returns the exact painted count (overshoot bounded by one r_min disk).
    """
    h, w = labels.shape
    painted = 0
    tries = 0
    paste = int(PhaseLabel.PASTE)
    while painted < target_px:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"phantom painting stalled at {painted}/{target_px} px")
        deficit = target_px - painted
        if deficit >= np.pi * r_max * r_max:
            r = int(rng.integers(r_min, r_max + 1))
        else:
            r = min(r_max, max(r_min, int(np.ceil(np.sqrt(deficit / np.pi)))))
        if 2 * r + 1 >= min(h, w):
            r = (min(h, w) - 2) // 2
        cx = int(rng.integers(r, w - r))
        cy = int(rng.integers(r, h - r))
        if any(
            cx + r >= ex.x and cx - r < ex.x + ex.w and cy + r >= ex.y and cy - r < ex.y + ex.h
            for ex in exclusions
        ):
            continue
        yy, xx = np.ogrid[-r : r + 1, -r : r + 1]
        disk = yy * yy + xx * xx <= r * r
        patch = labels[cy - r : cy + r + 1, cx - r : cx + r + 1]
        paintable = disk & (patch == paste)
        count = int(paintable.sum())
        if count == 0:
            continue
        patch[paintable] = int(phase)
        painted += count
    return painted


def _plant_probes(labels, width, height):
    """Plant the 3-px void and the 356-px aggregate speck; return probes and
    their exclusion rects (3-px margin keeps random disks from touching)."""
    vx, vy = width // 8, height // 4
    void_px = ((vx, vy), (vx + 1, vy), (vx, vy + 1))
    for x, y in void_px:
        labels[y, x] = int(PhaseLabel.VOID)

    # 356 px = 18 full rows of 19 plus one row of 14, left-aligned (connected).
    sx, sy = (5 * width) // 8, (3 * height) // 4
    for row in range(18):
        labels[sy + row, sx : sx + 19] = int(PhaseLabel.AGGREGATE)
    labels[sy + 18, sx : sx + 14] = int(PhaseLabel.AGGREGATE)
    speck_rect = Rect(sx, sy, 19, 19)

    probes = PhantomProbes(void_px=void_px, speck_rect=speck_rect, speck_px_count=SPECK_PROBE_PX)
    margin = 3
    exclusions = [
        Rect(vx - margin, vy - margin, 2 + 2 * margin, 2 + 2 * margin),
        Rect(sx - margin, sy - margin, 19 + 2 * margin, 19 + 2 * margin),
    ]
    return probes, exclusions


def _smooth_field(shape, rng, sigma):
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="reflect")
    return field / max(field.std(), 1e-9)


def hsv_to_rgb(h_deg: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized hexcone HSV (degrees, [0,1], [0,1]) to uint8 RGB."""
    h = (h_deg % 360.0) / 60.0
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def _render(labels: np.ndarray, rng) -> np.ndarray:
    """Render a colored-scan appearance for the phase map."""
    shape = labels.shape
    t1 = _smooth_field(shape, rng, sigma=6.0)
    t2 = _smooth_field(shape, rng, sigma=3.0)
    t3 = _smooth_field(shape, rng, sigma=12.0)
    noise = rng.standard_normal(shape)

    hue = np.empty(shape)
    sat = np.empty(shape)
    val = np.empty(shape)

    agg = labels == int(PhaseLabel.AGGREGATE)
    paste = labels == int(PhaseLabel.PASTE)
    void = labels == int(PhaseLabel.VOID)

    # Paste: phenolphthalein pink, hue kept inside the 300-350 rule window.
    hue[paste] = np.clip(327.0 + 8.0 * t1[paste], 309.0, 344.0)
    sat[paste] = np.clip(0.32 + 0.08 * t2[paste] + 0.02 * noise[paste], 0.20, 0.55)
    val[paste] = np.clip(0.82 + 0.06 * t3[paste] + 0.02 * noise[paste], 0.60, 0.95)
    # Voids: orange chalk powder, hue inside the 20-45 window.
    hue[void] = np.clip(32.0 + 5.0 * t1[void], 24.0, 41.0)
    sat[void] = np.clip(0.55 + 0.10 * t2[void] + 0.03 * noise[void], 0.38, 0.80)
    val[void] = np.clip(0.78 + 0.08 * t3[void] + 0.03 * noise[void], 0.50, 0.95)
    # Aggregate: near-achromatic gray with strong value texture; saturation
    # stays under 0.15 even after 8-bit quantization so no chromatic rule fires.
    hue[agg] = (t1[agg] * 90.0) % 360.0
    sat[agg] = np.clip(0.04 + 0.025 * t2[agg] + 0.015 * noise[agg], 0.0, 0.11)
    val[agg] = np.clip(0.50 + 0.18 * t3[agg] + 0.06 * t2[agg] + 0.05 * noise[agg], 0.18, 0.92)

    return hsv_to_rgb(hue, sat, val)


def generate_phantom(
    width: int = 2000,
    height: int = 2000,
    pitch_um: float = DEFAULT_PITCH_UM,
    void_fraction: float = 0.10,
    paste_fraction: float = 0.30,
    seed: int = 0,
    plant_probes: bool = True,
    void_radius: tuple[int, int] = (4, 32),
    aggregate_radius: tuple[int, int] = (12, 90),
    scan_id: str | None = None,
) -> Phantom:
    """Generate a phantom scan with known phase fractions.

    ``void_fraction`` and ``paste_fraction`` are areal targets (aggregate
    takes the remainder); the painted mask matches them to within one
    smallest-disk area.
    """
    if not 0 < void_fraction < 1 or not 0 < paste_fraction < 1 or void_fraction + paste_fraction >= 1:
        raise ValueError("phase fractions must be in (0, 1) and sum below 1")
    if width < 64 or height < 64:
        raise ValueError("phantom must be at least 64x64")
    rng = np.random.default_rng(seed)
    labels = np.full((height, width), int(PhaseLabel.PASTE), dtype=np.uint8)

    probes = None
    exclusions: list[Rect] = []
    agg_planted = void_planted = 0
    if plant_probes:
        probes, exclusions = _plant_probes(labels, width, height)
        agg_planted = SPECK_PROBE_PX
        void_planted = VOID_PROBE_PX

    total = width * height
    agg_target = round(total * (1.0 - void_fraction - paste_fraction)) - agg_planted
    void_target = round(total * void_fraction) - void_planted
    _paint_disks(labels, PhaseLabel.AGGREGATE, agg_target, rng, *aggregate_radius, exclusions)
    _paint_disks(labels, PhaseLabel.VOID, void_target, rng, *void_radius, exclusions)

    pixels = _render(labels, rng)
    sid = scan_id if scan_id is not None else f"phantom_{seed}"
    return Phantom(
        scan=Scan(id=sid, pitch_um=pitch_um, pixels=pixels),
        mask=PhaseMask(pitch_um=pitch_um, labels=labels),
        probes=probes,
    )
