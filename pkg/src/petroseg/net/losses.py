"""Training losses: per-pixel cross-entropy and the Lovasz-Softmax
surrogate for the Jaccard (IoU) loss.

Both losses take per-pixel class probabilities of shape (batch, 3, H, W)
and integer labels of shape (batch, H, W); pixels labeled 255 are
excluded from the loss and from gradient flow.  Reductions accumulate in
double precision.

The Lovasz-Softmax loss for one class c sorts the per-pixel errors
m_i = |1{y_i = c} - p_i(c)| in descending order and weights them with the
discrete gradient of the Jaccard loss along that order; the total is the
mean over the classes present in the labels.  The weighted sum is
evaluated in its summation-by-parts form

    sum_i jaccard_i * (m_i - m_{i+1})        (m after the last index is 0)

which is algebraically identical to the usual dot product against the
Jaccard-gradient increments but collapses to a single product when the
errors are 0/1.  At probability vertices the loss therefore equals
1 - IoU per class exactly, not merely to rounding.
"""

from __future__ import annotations

import torch

from ..errors import InputError
from ..raster import PhaseLabel

#: Probabilities are clamped here before the log in cross-entropy.
PROBABILITY_FLOOR = 1e-12

_UNLABELED = int(PhaseLabel.UNLABELED)


def flatten_labeled(probs: torch.Tensor, labels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Select the labeled pixels: probabilities (N, C) and labels (N,)."""
    if probs.dim() != 4 or labels.dim() != 3 or probs.shape[0] != labels.shape[0] or probs.shape[2:] != labels.shape[1:]:
        raise ValueError(f"shape mismatch: probs {tuple(probs.shape)} vs labels {tuple(labels.shape)}")
    valid = labels != _UNLABELED
    if not bool(valid.any()):
        raise InputError("no labeled pixels in batch")
    p = probs.permute(0, 2, 3, 1)[valid]
    y = labels[valid].long()
    return p, y


def cross_entropy(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log-probability of the true class over labeled pixels."""
    p, y = flatten_labeled(probs, labels)
    p_true = p.gather(1, y.unsqueeze(1)).squeeze(1).double()
    return -p_true.clamp_min(PROBABILITY_FLOOR).log().mean()


def lovasz_softmax_per_class(probs: torch.Tensor, labels: torch.Tensor) -> dict[int, torch.Tensor]:
    """Lovasz-Softmax loss for every class present in the labels."""
    p, y = flatten_labeled(probs, labels)
    p = p.double()
    losses: dict[int, torch.Tensor] = {}
    for c in sorted(torch.unique(y).tolist()):
        fg = (y == c).double()
        errors = (fg - p[:, c]).abs()
        m_sorted, perm = torch.sort(errors, dim=0, descending=True, stable=True)
        with torch.no_grad():
            fg_sorted = fg[perm]
            gts = fg_sorted.sum()
            intersection = gts - fg_sorted.cumsum(0)
            union = gts + (1.0 - fg_sorted).cumsum(0)
            jaccard = 1.0 - intersection / union
        m_next = torch.cat([m_sorted[1:], m_sorted.new_zeros(1)])
        losses[c] = (jaccard * (m_sorted - m_next)).sum()
    return losses


def lovasz_softmax(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean Lovasz-Softmax loss over the classes present in the labels."""
    per_class = lovasz_softmax_per_class(probs, labels)
    return torch.stack(list(per_class.values())).mean()


def combined_loss(
    probs: torch.Tensor,
    labels: torch.Tensor,
    weight_ce: float = 0.5,
    weight_lovasz: float = 0.5,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Weighted sum of the two losses; returns (total, ce, lovasz)."""
    if weight_ce < 0 or weight_lovasz < 0 or (weight_ce == 0 and weight_lovasz == 0):
        raise ValueError("loss weights must be non-negative and not both zero")
    ce = cross_entropy(probs, labels)
    ls = lovasz_softmax(probs, labels)
    return weight_ce * ce + weight_lovasz * ls, ce, ls
