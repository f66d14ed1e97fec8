"""Frozen VGG-19 feature extraction for hypercolumn input augmentation and the
feature loss.

Taps are the post-ReLU activations of conv1_2, conv2_2, conv3_2, conv4_2 and
conv5_2 (64 + 128 + 256 + 512 + 512 = 1472 channels). Weights come from an
`.npz` file pinned by SHA-256; the loader never falls back to random
initialization on its own.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

GAMMA = 2.2
TAP_LAYERS = ("conv1_2", "conv2_2", "conv3_2", "conv4_2", "conv5_2")
TAP_CHANNELS = (64, 128, 256, 512, 512)
HYPERCOLUMN_CHANNELS = 3 + sum(TAP_CHANNELS)  # 1475

# conv layers up to conv5_2, grouped by block
_CONV_PLAN = (
    ("conv1_1", 3, 64), ("conv1_2", 64, 64),
    ("pool",), ("conv2_1", 64, 128), ("conv2_2", 128, 128),
    ("pool",), ("conv3_1", 128, 256), ("conv3_2", 256, 256),
    ("conv3_3", 256, 256), ("conv3_4", 256, 256),
    ("pool",), ("conv4_1", 256, 512), ("conv4_2", 512, 512),
    ("conv4_3", 512, 512), ("conv4_4", 512, 512),
    ("pool",), ("conv5_1", 512, 512), ("conv5_2", 512, 512),
)

IMAGENET_MEAN = (123.68, 116.779, 103.939)

DOWNLOAD_HINT = (
    "Run `layersep vgg-weights --out <path>` on a machine with internet access "
    "to convert the torchvision ImageNet-pretrained VGG-19 checkpoint, then "
    "point the `vgg_weights` config key at the file and pin its SHA-256."
)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class FeatureExtractor(nn.Module):
    """Frozen VGG-19 prefix exposing the five tap activations.

    Input is a 1x3xHxW linear-space tensor in [0,1]; preprocessing re-applies
    gamma encoding (continuous, unquantized), scales to [0,255] and subtracts
    the per-channel ImageNet means.
    """

    def __init__(self, weights: dict[str, np.ndarray], sha256: str = ""):
        super().__init__()
        self.sha256 = sha256
        layers = []
        for item in _CONV_PLAN:
            if item[0] == "pool":
                layers.append(("pool", None))
                continue
            name, c_in, c_out = item
            conv = nn.Conv2d(c_in, c_out, kernel_size=3, padding=1)
            w = torch.from_numpy(np.asarray(weights[f"{name}.weight"], dtype=np.float32))
            b = torch.from_numpy(np.asarray(weights[f"{name}.bias"], dtype=np.float32))
            if tuple(w.shape) != (c_out, c_in, 3, 3):
                raise ValueError(f"{name}: weight shape {tuple(w.shape)} != {(c_out, c_in, 3, 3)}")
            with torch.no_grad():
                conv.weight.copy_(w)
                conv.bias.copy_(b)
            layers.append((name, conv))
        self._plan = [name for name, _ in layers]
        self.convs = nn.ModuleDict({name: mod for name, mod in layers if mod is not None})
        self.register_buffer(
            "mean", torch.tensor(IMAGENET_MEAN, dtype=torch.float32).view(1, 3, 1, 1)
        )
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)

    def preprocess(self, x: torch.Tensor) -> torch.Tensor:
        # no upper clamp: raw training outputs may exceed 1 and must keep gradient
        x = x.clamp(min=1e-8) ** (1.0 / GAMMA) * 255.0
        return x - self.mean.to(x.dtype)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected Nx3xHxW input, got {tuple(x.shape)}")
        if min(x.shape[2], x.shape[3]) < 16:
            raise ValueError("input smaller than 16 px per side")
        out = self.preprocess(x)
        taps = []
        for name in self._plan:
            if name == "pool":
                # ceil mode keeps every level's size at ceil(half)
                out = F.max_pool2d(out, kernel_size=2, stride=2, ceil_mode=True)
            else:
                out = F.relu(self.convs[name](out))
                if name in TAP_LAYERS:
                    taps.append(out)
        return taps


def load_vgg(weights_path, expected_sha256: str | None = None) -> FeatureExtractor:
    """Load the frozen perception network from an `.npz` weights file.

    Raises with download instructions if the file is missing, and on checksum
    mismatch when `expected_sha256` is given.
    """
    weights_path = Path(weights_path)
    if not weights_path.is_file():
        raise FileNotFoundError(f"VGG weights file not found: {weights_path}. {DOWNLOAD_HINT}")
    digest = sha256_file(weights_path)
    if expected_sha256 is not None and digest != expected_sha256:
        raise ValueError(
            f"VGG weights checksum mismatch: expected {expected_sha256}, got {digest}. "
            + DOWNLOAD_HINT
        )
    with np.load(weights_path) as data:
        weights = {k: data[k] for k in data.files}
    return FeatureExtractor(weights, sha256=digest)


def extract_features(net: FeatureExtractor, img) -> list[torch.Tensor]:
    """Tap activations for one linear image (H x W x 3 array or 1x3xHxW tensor)."""
    return net(to_tensor(img))


def hypercolumn(net: FeatureExtractor, img) -> torch.Tensor:
    """Input image concatenated with its upsampled tap activations (1475 ch).

    The first 3 channels are the image itself; feature channels are bilinearly
    upsampled to input resolution and scaled by 1/255 to keep magnitudes
    comparable with the image channels.
    """
    x = to_tensor(img)
    h, w = x.shape[2], x.shape[3]
    taps = net(x)
    upsampled = [
        F.interpolate(t, size=(h, w), mode="bilinear", align_corners=False) / 255.0
        for t in taps
    ]
    return torch.cat([x] + upsampled, dim=1)


def to_tensor(img) -> torch.Tensor:
    """H x W x 3 array -> 1x3xHxW float tensor (passes tensors through)."""
    if isinstance(img, torch.Tensor):
        return img
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def to_image(x: torch.Tensor) -> np.ndarray:
    """1x3xHxW tensor -> H x W x 3 float64 array."""
    return x.detach()[0].permute(1, 2, 0).cpu().numpy().astype(np.float64)


def save_random_weights(path, seed: int = 0) -> str:
    """Write a deterministic, He-scaled random weights file and return its SHA-256.

    This is a stand-in for offline testing only; it is NOT the ImageNet
    checkpoint and must be requested explicitly.
    """
    rng = np.random.default_rng(seed)
    arrays = {}
    for item in _CONV_PLAN:
        if item[0] == "pool":
            continue
        name, c_in, c_out = item
        fan_in = c_in * 9
        std = np.sqrt(2.0 / fan_in)
        arrays[f"{name}.weight"] = rng.normal(0.0, std, size=(c_out, c_in, 3, 3)).astype(np.float32)
        arrays[f"{name}.bias"] = np.zeros(c_out, dtype=np.float32)
    np.savez(path, **arrays)
    return sha256_file(path)


def export_torchvision_weights(path) -> str:
    """Convert torchvision's ImageNet-pretrained VGG-19 to the `.npz` format.

    Needs internet access (or a populated torch hub cache). Returns the SHA-256
    of the written file.
    """
    from torchvision.models import VGG19_Weights, vgg19

    model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
    convs = [m for m in model.features if isinstance(m, nn.Conv2d)]
    names = [item[0] for item in _CONV_PLAN if item[0] != "pool"]
    arrays = {}
    for name, conv in zip(names, convs):
        arrays[f"{name}.weight"] = conv.weight.detach().numpy()
        arrays[f"{name}.bias"] = conv.bias.detach().numpy()
    np.savez(path, **arrays)
    return sha256_file(path)
