"""Linear-space image handling: gamma conversion, finite-difference gradients,
and the PSNR/SSIM metrics used across the project.

Images are H x W x 3 float arrays in [0, 1], linear radiometric space, so the
additive layer model holds. 8-bit files on disk are assumed gamma-encoded
unless stated otherwise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.ndimage import correlate1d

log = logging.getLogger(__name__)

GAMMA = 2.2
MIN_SIDE = 16  # smallest size the downsampling chain supports
PSNR_CAP_DB = 99.0


def validate_linear_image(img: np.ndarray) -> np.ndarray:
    """Check the linear-image contract: H x W x 3, finite, in [0,1], >= 16 px."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got shape {img.shape}")
    if img.shape[0] < MIN_SIDE or img.shape[1] < MIN_SIDE:
        raise ValueError(f"image sides must be >= {MIN_SIDE}, got {img.shape[:2]}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("linear image values must lie in [0, 1]")
    return img


def srgb_to_linear(img8: np.ndarray) -> np.ndarray:
    """Decode an 8-bit gamma-encoded RGB image to linear space via (v/255)^2.2."""
    img8 = np.asarray(img8)
    if img8.ndim != 3 or img8.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got shape {img8.shape}")
    return (img8.astype(np.float64) / 255.0) ** GAMMA


def linear_to_srgb(img: np.ndarray) -> np.ndarray:
    """Encode a linear image to 8-bit gamma space.

    Out-of-range values are clipped first; the clip count is logged as a
    warning rather than raised.
    """
    img = np.asarray(img, dtype=np.float64)
    n_clipped = int(np.count_nonzero((img < 0.0) | (img > 1.0)))
    if n_clipped:
        log.warning("linear_to_srgb clipped %d out-of-range values", n_clipped)
    clipped = np.clip(img, 0.0, 1.0)
    return np.round(255.0 * clipped ** (1.0 / GAMMA)).astype(np.uint8)


def gradient(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences (gx, gy), zero in the last column / row respectively."""
    img = np.asarray(img, dtype=np.float64)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return gx, gy


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB with peak 1.0, capped at 99 dB for near-identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def _windowed_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    out = correlate1d(img, window, axis=0, mode="reflect")
    return correlate1d(out, window, axis=1, mode="reflect")


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), data range 1.0.

    Computed per channel and averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    win_size = 11
    if min(a.shape[0], a.shape[1]) < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} SSIM window")
    window = _gaussian_window(win_size, 1.5)
    c1 = k1 ** 2
    c2 = k2 ** 2
    values = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x = _windowed_mean(x, window)
        mu_y = _windowed_mean(y, window)
        var_x = _windowed_mean(x * x, window) - mu_x * mu_x
        var_y = _windowed_mean(y * y, window) - mu_y * mu_y
        cov = _windowed_mean(x * y, window) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


@dataclass
class MetricReport:
    """Per-image and aggregate PSNR/SSIM records."""

    per_image: list[tuple[str, float, float]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, sample_id: str, psnr_db: float, ssim_val: float) -> None:
        self.per_image.append((sample_id, float(psnr_db), float(ssim_val)))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r[1] for r in self.per_image]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r[2] for r in self.per_image]))


def load_image(path, linear: bool = False) -> np.ndarray:
    """Read an RGB PNG/JPEG. Files are treated as gamma-encoded unless `linear`."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    if linear:
        return arr.astype(np.float64) / 255.0
    return srgb_to_linear(arr)


def save_image(path, img: np.ndarray, linear: bool = False) -> None:
    """Write a linear image as 8-bit RGB, gamma-encoding unless `linear`."""
    if linear:
        data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    else:
        data = linear_to_srgb(img)
    Image.fromarray(data, mode="RGB").save(path)
