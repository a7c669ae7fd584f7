"""Small residual encoder-decoder for 3-phase segmentation.

The network is deliberately desk-scale: 3x3 convolutions, two 2x
downsampling stages, residual blocks at every resolution, nearest-neighbor
upsampling with additive skip connections back to the encoder, and a
1x1 per-pixel 3-class head.  Output spatial size equals input spatial
size, which therefore must be divisible by 4.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

DEFAULT_CHANNELS = (16, 32, 64)
NUM_CLASSES = 3
#: Output size equals input size only when the input is a multiple of this.
SIZE_MULTIPLE = 4


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        y = F.relu(self.conv1(x))
        y = self.conv2(y)
        return F.relu(x + y)


class SegNet(nn.Module):
    def __init__(self, channels: tuple[int, int, int] = DEFAULT_CHANNELS, classes: int = NUM_CLASSES):
        super().__init__()
        c0, c1, c2 = channels
        self.channels = tuple(channels)
        self.classes = classes
        self.stem = nn.Conv2d(3, c0, 3, padding=1)
        self.enc0 = ResidualBlock(c0)
        self.down1 = nn.Conv2d(c0, c1, 3, stride=2, padding=1)
        self.enc1 = ResidualBlock(c1)
        self.down2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.enc2 = ResidualBlock(c2)
        self.up1 = nn.Conv2d(c2, c1, 3, padding=1)
        self.dec1 = ResidualBlock(c1)
        self.up0 = nn.Conv2d(c1, c0, 3, padding=1)
        self.head = nn.Conv2d(c0, classes, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Class score map (logits), same spatial size as the input."""
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (batch, 3, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] % SIZE_MULTIPLE or x.shape[3] % SIZE_MULTIPLE:
            raise ValueError(f"input spatial size must be a multiple of {SIZE_MULTIPLE}, got {tuple(x.shape[2:])}")
        x = x - 0.5  # center [0, 1] inputs for better conditioning
        s0 = self.enc0(F.relu(self.stem(x)))
        s1 = self.enc1(F.relu(self.down1(s0)))
        s2 = self.enc2(F.relu(self.down2(s1)))
        u1 = self.dec1(F.relu(self.up1(F.interpolate(s2, scale_factor=2, mode="nearest"))) + s1)
        u0 = F.relu(self.up0(F.interpolate(u1, scale_factor=2, mode="nearest"))) + s0
        return self.head(u0)


def build_net(seed: int, channels: tuple[int, int, int] = DEFAULT_CHANNELS) -> SegNet:
    """Deterministically initialized network for a given seed."""
    torch.manual_seed(seed)
    return SegNet(channels=channels)


def forward(net: SegNet, images: torch.Tensor) -> torch.Tensor:
    """Per-pixel class probabilities (softmax over the score map)."""
    return torch.softmax(net(images), dim=1)
