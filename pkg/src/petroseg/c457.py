"""Stereological air-void analysis on a phase mask.

Two classic estimators run on the same mask: a regular point-count grid
tallies phase hits to estimate volume fractions, and horizontal linear
traverses collect void intercept chords.  Together they yield the
hardened-concrete air-void parameters:

    A      air content            = S_void / S_total            [%]
    P      paste content          = S_paste / S_total           [%]
    n      void frequency         = chords per traverse mm      [1/mm]
    alpha  specific surface       = 4 n / A                     [1/mm]
    lbar   mean chord length      = A / n                       [mm]
    Lbar   Powers spacing factor                                [mm]

with A, P as fractions inside the formulas.  The spacing factor uses the
two-branch Powers model, switching on the paste-air ratio:

    P/A <= 4.342:  Lbar = P / (4 n)
    P/A >  4.342:  Lbar = (3 / alpha) * (1.4 * (1 + P/A)^(1/3) - 1)

The branches coincide at the threshold by construction of the model.
When A or n is zero the derived quantities are reported as undefined
(None), never fabricated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .raster import PhaseLabel, PhaseMask

#: Paste-air ratio where the Powers spacing-factor model switches branch.
PASTE_AIR_BRANCH_RATIO = 4.342

DEFAULT_GRID_ROWS = 100
DEFAULT_GRID_COLS = 100
DEFAULT_TRAVERSE_SPACING_UM = 6000.0


@dataclass(frozen=True)
class GridSpec:
    """A rows x cols point grid placed at raster cell centers.

    Point (i, j) sits in the pixel containing the continuous cell center
    ((j + 0.5) * width / cols, (i + 0.5) * height / rows), so every point
    lies strictly inside the raster with half-spacing margins.  Points are
    ordered row-major.
    """

    rows: int
    cols: int
    xs: np.ndarray = field(repr=False)  # len cols, pixel x per grid column
    ys: np.ndarray = field(repr=False)  # len rows, pixel y per grid row

    @property
    def total(self) -> int:
        return self.rows * self.cols

    def points(self):
        """Yield (row, col, x, y) in row-major order."""
        for i in range(self.rows):
            y = int(self.ys[i])
            for j in range(self.cols):
                yield i, j, int(self.xs[j]), y


def make_grid(width: int, height: int, rows: int = DEFAULT_GRID_ROWS, cols: int = DEFAULT_GRID_COLS) -> GridSpec:
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and column")
    if width < cols or height < rows:
        raise InputError(
            f"raster {width}x{height} too small for a {rows}x{cols} grid"
        )
    xs = ((np.arange(cols) + 0.5) * width / cols).astype(np.int64)
    ys = ((np.arange(rows) + 0.5) * height / rows).astype(np.int64)
    xs.setflags(write=False)
    ys.setflags(write=False)
    return GridSpec(rows=rows, cols=cols, xs=xs, ys=ys)


@dataclass(frozen=True)
class PointCountResult:
    s_agg: int
    s_paste: int
    s_void: int

    @property
    def s_total(self) -> int:
        return self.s_agg + self.s_paste + self.s_void

    def fraction(self, phase: PhaseLabel) -> float:
        count = {PhaseLabel.AGGREGATE: self.s_agg, PhaseLabel.PASTE: self.s_paste, PhaseLabel.VOID: self.s_void}[phase]
        return count / self.s_total


def point_count(mask: PhaseMask, grid: GridSpec) -> PointCountResult:
    """Tally phase labels under the grid points.

    A grid point on an unlabeled pixel is an error, not a skip: silently
    skipping would corrupt the total.
    """
    sampled = mask.labels[np.ix_(grid.ys, grid.xs)]
    if (sampled == int(PhaseLabel.UNLABELED)).any():
        bad = np.argwhere(sampled == int(PhaseLabel.UNLABELED))
        where = ", ".join(f"(row={i}, col={j})" for i, j in bad[:10])
        more = "" if len(bad) <= 10 else f" and {len(bad) - 10} more"
        raise InputError(f"grid points on unlabeled pixels: {where}{more}")
    counts = np.bincount(sampled.ravel(), minlength=3)
    return PointCountResult(s_agg=int(counts[0]), s_paste=int(counts[1]), s_void=int(counts[2]))


@dataclass(frozen=True)
class TraverseSpec:
    """Horizontal traverse lines across the full raster width.

    ``spacing_um`` is the actual line pitch after fitting an integral
    number of lines into the raster height; lines are centered in equal
    bands, mirroring the grid placement.
    """

    spacing_um: float
    ys: tuple[int, ...]
    width_mm: float

    @property
    def n_lines(self) -> int:
        return len(self.ys)

    @property
    def total_length_mm(self) -> float:
        return self.n_lines * self.width_mm


def make_traverse(
    width: int, height: int, pitch_um: float, spacing_um: float = DEFAULT_TRAVERSE_SPACING_UM
) -> TraverseSpec:
    if spacing_um <= 0:
        raise ValueError("traverse spacing must be positive")
    height_um = height * pitch_um
    n_lines = max(1, int(height_um // spacing_um))
    ys = tuple(int((k + 0.5) * height / n_lines) for k in range(n_lines))
    return TraverseSpec(spacing_um=height_um / n_lines, ys=ys, width_mm=width * pitch_um / 1000.0)


@dataclass(frozen=True)
class ChordSet:
    """Void intercept chords collected along traverse lines."""

    chords_um_per_line: tuple[tuple[float, ...], ...]

    @property
    def n_chords(self) -> int:
        return sum(len(line) for line in self.chords_um_per_line)

    @property
    def air_traverse_mm(self) -> float:
        return sum(sum(line) for line in self.chords_um_per_line) / 1000.0

    def all_chords_um(self) -> list[float]:
        return [c for line in self.chords_um_per_line for c in line]


def extract_chords(mask: PhaseMask, traverse: TraverseSpec, include_border: bool = True) -> ChordSet:
    """Maximal horizontal runs of void pixels along each traverse line.

    Chord length is run length times pitch.  Chords touching the raster
    border are counted by default; excluding them biases the void
    frequency low on small rasters.
    """
    per_line = []
    width = mask.width
    for y in traverse.ys:
        if not 0 <= y < mask.height:
            raise InputError(f"traverse line y={y} outside raster height {mask.height}")
        row = mask.labels[y] == int(PhaseLabel.VOID)
        padded = np.concatenate(([False], row, [False]))
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        starts, stops = edges[::2], edges[1::2]
        chords = []
        for a, b in zip(starts, stops):
            if not include_border and (a == 0 or b == width):
                continue
            chords.append(float(b - a) * mask.pitch_um)
        per_line.append(tuple(chords))
    return ChordSet(chords_um_per_line=tuple(per_line))


@dataclass(frozen=True)
class AirVoidReport:
    """Air-void parameter set; derived fields are None when undefined."""

    a_pct: float
    p_pct: float
    agg_pct: float
    n_per_mm: float | None
    alpha_per_mm: float | None
    chord_mm: float | None
    lbar_mm: float | None
    point_counts: PointCountResult | None = None
    n_chords: int | None = None
    air_traverse_mm: float | None = None
    traverse_mm: float | None = None


def spacing_factor_mm(p_frac: float, a_frac: float, n_per_mm: float) -> float:
    """Powers spacing factor from paste/air fractions and void frequency."""
    if a_frac <= 0 or n_per_mm <= 0:
        raise ValueError("spacing factor needs positive air content and void frequency")
    ratio = p_frac / a_frac
    if ratio <= PASTE_AIR_BRANCH_RATIO:
        return p_frac / (4.0 * n_per_mm)
    alpha = 4.0 * n_per_mm / a_frac
    return (3.0 / alpha) * (1.4 * (1.0 + ratio) ** (1.0 / 3.0) - 1.0)


def air_void_parameters(pc: PointCountResult, chords: ChordSet, traverse_length_mm: float) -> AirVoidReport:
    """Assemble the full parameter report from point count and chords."""
    if pc.s_total <= 0:
        raise InputError("point count is empty")
    if traverse_length_mm <= 0:
        raise ValueError("total traverse length must be positive")
    a = pc.fraction(PhaseLabel.VOID)
    p = pc.fraction(PhaseLabel.PASTE)
    agg = pc.fraction(PhaseLabel.AGGREGATE)
    n = chords.n_chords / traverse_length_mm
    alpha = chord = lbar = None
    if a > 0 and n > 0:
        alpha = 4.0 * n / a
        chord = a / n
        lbar = spacing_factor_mm(p, a, n)
    return AirVoidReport(
        a_pct=100.0 * a,
        p_pct=100.0 * p,
        agg_pct=100.0 * agg,
        n_per_mm=n,
        alpha_per_mm=alpha,
        chord_mm=chord,
        lbar_mm=lbar,
        point_counts=pc,
        n_chords=chords.n_chords,
        air_traverse_mm=chords.air_traverse_mm,
        traverse_mm=traverse_length_mm,
    )


REPORT_CSV_HEADER = "label,A_pct,P_pct,agg_pct,n_per_mm,alpha_per_mm,chord_mm,Lbar_mm"


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def report_table_csv(rows: list[tuple[str, AirVoidReport]]) -> str:
    """Machine-readable export; undefined fields are emitted empty.

    Values are written with full float precision so the export re-parses
    to identical numbers.
    """
    if not rows:
        raise ValueError("no reports to export")
    lines = [REPORT_CSV_HEADER]
    for label, r in rows:
        if "," in label or "\n" in label:
            raise ValueError(f"report label {label!r} may not contain commas or newlines")
        lines.append(
            ",".join(
                [label]
                + [_fmt(v) for v in (r.a_pct, r.p_pct, r.agg_pct, r.n_per_mm, r.alpha_per_mm, r.chord_mm, r.lbar_mm)]
            )
        )
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[tuple[str, AirVoidReport]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != REPORT_CSV_HEADER:
        raise InputError(f"report export must start with header {REPORT_CSV_HEADER!r}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 8:
            raise InputError(f"malformed report row: {ln!r}")
        vals = [None if p == "" else float(p) for p in parts[1:]]
        rows.append(
            (
                parts[0],
                AirVoidReport(
                    a_pct=vals[0], p_pct=vals[1], agg_pct=vals[2], n_per_mm=vals[3],
                    alpha_per_mm=vals[4], chord_mm=vals[5], lbar_mm=vals[6],
                ),
            )
        )
    return rows


def render_report_table(rows: list[tuple[str, AirVoidReport]]) -> str:
    """Aligned text comparison table: one row per labeled report."""
    if not rows:
        raise ValueError("no reports to render")
    header = ("sample", "A [%]", "P [%]", "Agg [%]", "n [1/mm]", "alpha [1/mm]", "chord [mm]", "L [mm]")

    def cell(value: float | None, spec: str) -> str:
        return "-" if value is None else format(value, spec)

    body = [
        (
            label,
            cell(r.a_pct, ".1f"),
            cell(r.p_pct, ".1f"),
            cell(r.agg_pct, ".1f"),
            cell(r.n_per_mm, ".3f"),
            cell(r.alpha_per_mm, ".2f"),
            cell(r.chord_mm, ".4f"),
            cell(r.lbar_mm, ".3f"),
        )
        for label, r in rows
    ]
    widths = [max(len(header[k]), *(len(row[k]) for row in body)) for k in range(len(header))]
    lines = [
        "  ".join(h.ljust(widths[k]) if k == 0 else h.rjust(widths[k]) for k, h in enumerate(header))
    ]
    for row in body:
        lines.append("  ".join(c.ljust(widths[k]) if k == 0 else c.rjust(widths[k]) for k, c in enumerate(row)))
    return "\n".join(lines) + "\n"
