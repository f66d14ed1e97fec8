"""Networks: the dilated fully convolutional generator that splits an image
into transmission and reflection layers, and the conditional patch
discriminator that scores candidate transmissions.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .perception import HYPERCOLUMN_CHANNELS

DILATIONS = (1, 2, 4, 8, 16, 32, 64, 128)
HIDDEN_CHANNELS = 64
LEAK = 0.2
# 1x1 entry + eight dilated 3x3 convs + final 3x3: 1 + 2*sum(dilations) + 2
RECEPTIVE_FIELD = 1 + 2 * sum(DILATIONS) + 2


class Generator(nn.Module):
    """Context-aggregation generator: 1x1 entry conv, eight 3x3 convs with
    exponentially increasing dilation, and a linear 3x3 output conv producing
    6 channels (transmission RGB + reflection RGB).
    """

    def __init__(self, in_channels: int = HYPERCOLUMN_CHANNELS):
        super().__init__()
        self.entry = nn.Conv2d(in_channels, HIDDEN_CHANNELS, kernel_size=1)
        self.body = nn.ModuleList(
            nn.Conv2d(HIDDEN_CHANNELS, HIDDEN_CHANNELS, kernel_size=3, padding=d, dilation=d)
            for d in DILATIONS
        )
        self.head = nn.Conv2d(HIDDEN_CHANNELS, 6, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = F.leaky_relu(self.entry(x), LEAK)
        for conv in self.body:
            out = F.leaky_relu(conv(out), LEAK)
        out = self.head(out)  # linear output, raw values during training
        return out[:, :3], out[:, 3:]


class Discriminator(nn.Module):
    """Conditional patch discriminator on concat(I, candidate): four 4x4
    stride-2 convs, 64 channels wide, sigmoid patch-probability head.
    """

    def __init__(self):
        super().__init__()
        channels = [6, 64, 64, 64, 64]
        self.body = nn.ModuleList(
            nn.Conv2d(channels[i], channels[i + 1], kernel_size=4, stride=2, padding=1)
            for i in range(4)
        )
        self.head = nn.Conv2d(64, 1, kernel_size=1)

    def forward(self, image: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if image.shape != candidate.shape:
            raise ValueError(f"shape mismatch: {tuple(image.shape)} vs {tuple(candidate.shape)}")
        out = torch.cat([image, candidate], dim=1)
        for conv in self.body:
            out = F.leaky_relu(conv(out), LEAK)
        return torch.sigmoid(self.head(out))


def _init_conv(conv: nn.Conv2d, gen: torch.Generator, gain: float) -> None:
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    std = gain / np.sqrt(fan_in)
    with torch.no_grad():
        conv.weight.normal_(0.0, std, generator=gen)
        conv.bias.zero_()


def _leaky_gain() -> float:
    return float(np.sqrt(2.0 / (1.0 + LEAK ** 2)))


def init_generator(seed: int, in_channels: int = HYPERCOLUMN_CHANNELS) -> Generator:
    """Fan-in-scaled normal init, zero biases, deterministic under `seed`."""
    gen = torch.Generator().manual_seed(seed)
    model = Generator(in_channels)
    _init_conv(model.entry, gen, _leaky_gain())
    for conv in model.body:
        _init_conv(conv, gen, _leaky_gain())
    _init_conv(model.head, gen, 1.0)
    return model


def init_discriminator(seed: int) -> Discriminator:
    gen = torch.Generator().manual_seed(seed)
    model = Discriminator()
    for conv in model.body:
        _init_conv(conv, gen, _leaky_gain())
    _init_conv(model.head, gen, 1.0)
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
