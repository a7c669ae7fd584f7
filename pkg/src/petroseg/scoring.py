"""Accuracy assessment of a segmentation against human grid annotations.

Ground truth is a point-count style annotation: a human labels the phase
under every node of a regular grid.  Replicating the same grid on a
segmentation mask and tallying (truth, prediction) pairs yields a 3x3
confusion matrix, from which per-class intersection-over-union and their
unweighted mean (mIoU) are computed.

A class absent from both truth and prediction has an undefined IoU; that
state is explicit (None), never silently 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .c457 import GridSpec
from .errors import InputError
from .raster import LABEL_NAMES, NAME_TO_LABEL, PHASES, PhaseLabel, PhaseMask

ANNOTATION_HEADER = "row\tcol\tx_px\ty_px\tlabel"


@dataclass(frozen=True, eq=False)
class GridAnnotation:
    """Ordered point labels at the nodes of a grid, one file per scan id."""

    scan_id: str
    grid: GridSpec
    labels: np.ndarray = field(repr=False)  # (rows*cols,) uint8, row-major

    def __post_init__(self):
        if self.labels.shape != (self.grid.total,) or self.labels.dtype != np.uint8:
            raise ValueError("annotation labels must be one uint8 per grid point")
        bad = ~np.isin(self.labels, (0, 1, 2, 255))
        if bad.any():
            raise InputError(f"invalid label code {int(self.labels[np.argmax(bad)])} in annotation")

    @property
    def total(self) -> int:
        return self.grid.total

    @property
    def labeled_count(self) -> int:
        return int((self.labels != int(PhaseLabel.UNLABELED)).sum())

    @property
    def completeness(self) -> float:
        return self.labeled_count / self.total

    @property
    def complete(self) -> bool:
        return self.labeled_count == self.total

    def missing_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == int(PhaseLabel.UNLABELED))

    def with_label(self, index: int, label: PhaseLabel) -> "GridAnnotation":
        if not 0 <= index < self.total:
            raise InputError(f"annotation index {index} out of range 0..{self.total - 1}")
        labels = self.labels.copy()
        labels[index] = int(label)
        return GridAnnotation(scan_id=self.scan_id, grid=self.grid, labels=labels)


def new_annotation(scan_id: str, grid: GridSpec) -> GridAnnotation:
    labels = np.full(grid.total, int(PhaseLabel.UNLABELED), dtype=np.uint8)
    return GridAnnotation(scan_id=scan_id, grid=grid, labels=labels)


def annotation_to_text(ann: GridAnnotation) -> str:
    lines = [ANNOTATION_HEADER]
    for k, (i, j, x, y) in enumerate(ann.grid.points()):
        lines.append(f"{i}\t{j}\t{x}\t{y}\t{LABEL_NAMES[PhaseLabel(ann.labels[k])]}")
    return "\n".join(lines) + "\n"


def save_annotation(ann: GridAnnotation, path) -> None:
    Path(path).write_text(annotation_to_text(ann), encoding="utf-8")


def load_annotation(path) -> GridAnnotation:
    """Read a tab-separated annotation file; scan id is the file stem.

    The grid geometry is rebuilt from the per-entry coordinates, which
    must be consistent (one x per column, one y per row, row-major order).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"annotation file not found: {path}")
    lines = text.splitlines()
    if not lines or lines[0] != ANNOTATION_HEADER:
        raise InputError(f"{path}: first line must be {ANNOTATION_HEADER!r}")
    entries = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != 5:
            raise InputError(f"{path}:{lineno}: expected 5 tab-separated fields")
        try:
            i, j, x, y = (int(p) for p in parts[:4])
            label = NAME_TO_LABEL[parts[4]]
        except (ValueError, KeyError):
            raise InputError(f"{path}:{lineno}: malformed entry {ln!r}")
        entries.append((i, j, x, y, label))
    if not entries:
        raise InputError(f"{path}: no grid entries")
    rows = max(e[0] for e in entries) + 1
    cols = max(e[1] for e in entries) + 1
    if len(entries) != rows * cols:
        raise InputError(f"{path}: {len(entries)} entries do not fill a {rows}x{cols} grid")
    xs = np.full(cols, -1, dtype=np.int64)
    ys = np.full(rows, -1, dtype=np.int64)
    labels = np.full(rows * cols, int(PhaseLabel.UNLABELED), dtype=np.uint8)
    seen = np.zeros(rows * cols, dtype=bool)
    for k, (i, j, x, y, label) in enumerate(entries):
        if k != i * cols + j:
            raise InputError(f"{path}: entries must be in row-major order (saw (row={i}, col={j}) at position {k})")
        if seen[k]:
            raise InputError(f"{path}: duplicate entry for (row={i}, col={j})")
        seen[k] = True
        for coord, store, idx in ((x, xs, j), (y, ys, i)):
            if store[idx] == -1:
                store[idx] = coord
            elif store[idx] != coord:
                raise InputError(f"{path}: inconsistent grid coordinates at (row={i}, col={j})")
        labels[k] = int(label)
    xs.setflags(write=False)
    ys.setflags(write=False)
    grid = GridSpec(rows=rows, cols=cols, xs=xs, ys=ys)
    return GridAnnotation(scan_id=path.stem, grid=grid, labels=labels)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix3:
    """3x3 counts, ground-truth row by predicted column, order (agg, paste, void)."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (3, 3) or not np.issubdtype(c.dtype, np.integer):
            raise ValueError("confusion matrix must be 3x3 integer counts")
        if (c < 0).any():
            raise ValueError("confusion matrix counts must be >= 0")
        c.setflags(write=False)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def transposed(self) -> "ConfusionMatrix3":
        return ConfusionMatrix3(self.counts.T.copy())


def confusion(truth: GridAnnotation, predicted) -> ConfusionMatrix3:
    """Tally (truth, prediction) pairs over the grid points.

    Truth must be complete, and neither side may contain unlabeled
    entries.
    """
    t = np.asarray(truth.labels)
    p = np.asarray(predicted, dtype=np.int64)
    if p.shape != t.shape:
        raise InputError(f"prediction length {p.shape} does not match {t.shape} grid points")
    if not truth.complete:
        missing = truth.missing_indices()
        raise InputError(f"annotation incomplete: {truth.labeled_count}/{truth.total} labeled, first missing index {int(missing[0])}")
    if (p == int(PhaseLabel.UNLABELED)).any():
        raise InputError("prediction contains unlabeled points")
    if not np.isin(p, (0, 1, 2)).all():
        raise InputError("prediction contains invalid label codes")
    counts = np.bincount(t.astype(np.int64) * 3 + p, minlength=9)[:9].reshape(3, 3)
    return ConfusionMatrix3(counts)


def pixel_confusion(truth_labels: np.ndarray, predicted_labels: np.ndarray) -> ConfusionMatrix3:
    """Dense confusion over all labeled pixels (unlabeled truth excluded)."""
    t = np.asarray(truth_labels).ravel()
    p = np.asarray(predicted_labels).ravel()
    if t.shape != p.shape:
        raise InputError("shape mismatch between truth and prediction")
    valid = t != int(PhaseLabel.UNLABELED)
    t = t[valid].astype(np.int64)
    p = p[valid].astype(np.int64)
    if (p == int(PhaseLabel.UNLABELED)).any():
        raise InputError("prediction contains unlabeled pixels at labeled truth positions")
    counts = np.bincount(t * 3 + p, minlength=9)[:9].reshape(3, 3)
    return ConfusionMatrix3(counts)


def iou(m: ConfusionMatrix3, phase: PhaseLabel) -> float | None:
    """Per-class intersection over union: TP / (TP + FP + FN).

    Returns None when the class appears in neither truth nor prediction.
    """
    c = int(phase)
    if c not in (0, 1, 2):
        raise ValueError(f"IoU is defined for the three phases, not {phase}")
    tp = int(m.counts[c, c])
    union = int(m.counts[c, :].sum() + m.counts[:, c].sum()) - tp
    if union == 0:
        return None
    return tp / union


def miou(m: ConfusionMatrix3) -> float:
    """Unweighted mean of the three class IoUs; errors if any is undefined."""
    values = []
    for phase in PHASES:
        v = iou(m, phase)
        if v is None:
            raise InputError(f"IoU undefined for {phase.name.lower()}: class absent from truth and prediction")
        values.append(v)
    return sum(values) / 3.0


def sample_mask_at_grid(mask: PhaseMask, grid: GridSpec) -> np.ndarray:
    """Mask labels at the grid points, row-major order."""
    if grid.cols > mask.width or grid.rows > mask.height:
        raise InputError("grid does not fit mask")
    if int(grid.xs.max()) >= mask.width or int(grid.ys.max()) >= mask.height:
        raise InputError("grid points outside mask")
    return mask.labels[np.ix_(grid.ys, grid.xs)].ravel()


@dataclass(frozen=True)
class AccuracyReport:
    iou_agg: float | None
    iou_paste: float | None
    iou_void: float | None
    miou: float
    matrix: ConfusionMatrix3


def accuracy_report(truth: GridAnnotation, mask: PhaseMask) -> AccuracyReport:
    """Score a mask against a complete grid annotation."""
    predicted = sample_mask_at_grid(mask, truth.grid)
    m = confusion(truth, predicted)
    return AccuracyReport(
        iou_agg=iou(m, PhaseLabel.AGGREGATE),
        iou_paste=iou(m, PhaseLabel.PASTE),
        iou_void=iou(m, PhaseLabel.VOID),
        miou=miou(m),
        matrix=m,
    )


def render_accuracy_report(report: AccuracyReport) -> str:
    """Human-readable matrix plus IoU lines."""
    m = report.matrix.counts
    names = ["agg", "paste", "void"]
    lines = ["confusion matrix (rows = ground truth, cols = prediction):"]
    lines.append("         " + "".join(f"{n:>8}" for n in names))
    for r, name in enumerate(names):
        lines.append(f"  {name:>6} " + "".join(f"{int(m[r, c]):>8}" for c in range(3)))
    for phase, value in ((PhaseLabel.AGGREGATE, report.iou_agg), (PhaseLabel.PASTE, report.iou_paste), (PhaseLabel.VOID, report.iou_void)):
        shown = "undefined" if value is None else f"{value:.4f}"
        lines.append(f"IoU({phase.name.lower()}) = {shown}")
    lines.append(f"mIoU = {report.miou:.4f}")
    return "\n".join(lines) + "\n"
