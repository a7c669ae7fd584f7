"""Training loop: SGD with momentum over the combined loss, with loss
tracing and periodic training-mIoU snapshots.

Each iteration samples a fresh jittered crop batch, runs forward +
backward, and applies the momentum update

    v <- momentum * v - lr * grad;   theta <- theta + v

Training is single-threaded by default and bit-reproducible given
(seed, config, dataset); an opt-in thread count may speed up the tensor
math at the cost of cross-run bit-identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import InputError, InternalError
from ..raster import PHASES, PhaseMask, Scan
from ..scoring import iou, pixel_confusion
from .data import Batch, check_pairs, jitter, sample_crops, to_tensors
from .infer import predict_tiled
from .losses import combined_loss
from .model import SIZE_MULTIPLE, SegNet, build_net, forward

MIN_CROP = 16


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch: int = 4
    crop: int = 128
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_ce: float = 0.5
    weight_lovasz: float = 0.5
    seed: int = 0
    snapshot_period: int = 100
    threads: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.crop < MIN_CROP or self.crop % SIZE_MULTIPLE:
            raise ValueError(f"crop must be >= {MIN_CROP} and a multiple of {SIZE_MULTIPLE}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_ce < 0 or self.weight_lovasz < 0 or (self.weight_ce == 0 and self.weight_lovasz == 0):
            raise ValueError("loss weights must be non-negative and not both zero")
        if self.snapshot_period < 1:
            raise ValueError("snapshot period must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class TrainTrace:
    """Per-iteration losses plus periodic training-mIoU snapshots."""

    iterations: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    ce: list[float] = field(default_factory=list)
    lovasz: list[float] = field(default_factory=list)
    snapshots: list[tuple[int, float]] = field(default_factory=list)

    def record(self, iteration: int, loss: float, ce: float, lovasz: float) -> None:
        self.iterations.append(iteration)
        self.loss.append(loss)
        self.ce.append(ce)
        self.lovasz.append(lovasz)

    @property
    def final_miou(self) -> float:
        if not self.snapshots:
            raise InternalError("no mIoU snapshots recorded")
        return self.snapshots[-1][1]

    def loss_csv(self) -> str:
        lines = ["iter,loss,ce,lovasz"]
        for i, l, c, v in zip(self.iterations, self.loss, self.ce, self.lovasz):
            lines.append(f"{i},{l!r},{c!r},{v!r}")
        return "\n".join(lines) + "\n"

    def miou_csv(self) -> str:
        lines = ["iter,miou"]
        for i, m in self.snapshots:
            lines.append(f"{i},{m!r}")
        return "\n".join(lines) + "\n"


def sgd_step(net: SegNet, velocities: dict[str, torch.Tensor], learning_rate: float, momentum: float) -> None:
    """Momentum update from the gradients currently stored on the net."""
    with torch.no_grad():
        for name, p in net.named_parameters():
            g = p.grad
            if g is None:
                continue
            if not torch.isfinite(g).all():
                raise InternalError(f"non-finite gradient in layer {name}")
            v = velocities.get(name)
            if v is None:
                v = torch.zeros_like(p)
                velocities[name] = v
            v.mul_(momentum).add_(g, alpha=-learning_rate)
            p.add_(v)


def backward_and_step(
    net: SegNet, batch: Batch, config: TrainConfig, velocities: dict[str, torch.Tensor]
) -> tuple[float, float, float]:
    """One optimization step; returns (total, ce, lovasz) loss values."""
    images, labels = to_tensors(batch)
    net.zero_grad(set_to_none=True)
    probs = forward(net, images)
    total, ce, ls = combined_loss(probs, labels, config.weight_ce, config.weight_lovasz)
    total.backward()
    sgd_step(net, velocities, config.learning_rate, config.momentum)
    return total.item(), ce.item(), ls.item()


def training_miou(net: SegNet, eval_batch: Batch) -> float:
    """Pixel mIoU of argmax predictions on a fixed crop set.

    Averages over the classes present (a class absent from both truth and
    prediction is skipped rather than scored).
    """
    images, _ = to_tensors(eval_batch)
    net.eval()
    with torch.no_grad():
        predicted = forward(net, images).argmax(dim=1).numpy().astype(np.uint8)
    net.train()
    matrix = pixel_confusion(eval_batch.labels, predicted)
    values = [v for v in (iou(matrix, phase) for phase in PHASES) if v is not None]
    if not values:
        raise InputError("evaluation crops contain no labeled pixels")
    return float(sum(values) / len(values))


EVAL_CROPS = 8


def train(pairs: list[tuple[Scan, PhaseMask]], config: TrainConfig) -> tuple[SegNet, TrainTrace]:
    """Train a fresh network; returns it with the loss/mIoU trace.

    The mIoU snapshots use a fixed held-in crop set drawn once (from a
    generator independent of the training stream) and are taken every
    ``snapshot_period`` iterations and at the final iteration.
    """
    check_pairs(pairs)
    torch.set_num_threads(config.threads)
    net = build_net(config.seed)
    rng = np.random.default_rng(config.seed)
    eval_rng = np.random.default_rng([config.seed, 0xE7A1])
    eval_batch = sample_crops(pairs, EVAL_CROPS, config.crop, eval_rng)
    velocities: dict[str, torch.Tensor] = {}
    trace = TrainTrace()
    for iteration in range(1, config.iterations + 1):
        batch = jitter(sample_crops(pairs, config.batch, config.crop, rng), rng)
        total, ce, ls = backward_and_step(net, batch, config, velocities)
        trace.record(iteration, total, ce, ls)
        if iteration % config.snapshot_period == 0 or iteration == config.iterations:
            trace.snapshots.append((iteration, training_miou(net, eval_batch)))
    return net, trace


def retrain_with_predictions(
    pairs: list[tuple[Scan, PhaseMask]],
    replace_ids,
    net: SegNet,
    config: TrainConfig,
    tile: int = 256,
    overlap: int = 32,
) -> tuple[SegNet, TrainTrace]:
    """Swap selected labels for the net's own tiled predictions, then train fresh."""
    check_pairs(pairs)
    known = {scan.id for scan, _ in pairs}
    replace = set(replace_ids)
    unknown = replace - known
    if unknown:
        raise InputError(f"unknown pair ids: {sorted(unknown)}")
    edited = [
        (scan, predict_tiled(net, scan, tile=tile, overlap=overlap, threads=config.threads) if scan.id in replace else mask)
        for scan, mask in pairs
    ]
    return train(edited, config)
