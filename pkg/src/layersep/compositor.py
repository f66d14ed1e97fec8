"""Synthetic forward model: blend a transmission image with a blurred,
attenuated, vignetted reflection layer in linear space.

Each sample's randomness is derived from (seed, sample index), so generation
is reproducible and order-independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import correlate1d

from .imagecore import validate_linear_image


@dataclass
class SynthConfig:
    kernel_sizes: tuple[int, ...] = (3, 5, 7, 9, 11, 13, 15, 17)
    decay_range: tuple[float, float] = (0.6, 1.0)
    vignette_strength_range: tuple[float, float] = (0.0, 0.3)
    seed: int = 0

    def __post_init__(self):
        for k in self.kernel_sizes:
            if k < 3 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and >= 3, got {k}")
        lo, hi = self.decay_range
        if not (0.0 < lo <= hi <= 1.2):
            raise ValueError(f"decay range must lie in (0, 1.2], got {self.decay_range}")
        lo, hi = self.vignette_strength_range
        if not (0.0 <= lo <= hi < 1.0):
            raise ValueError(
                f"vignette strength must lie in [0, 1), got {self.vignette_strength_range}"
            )


@dataclass
class SampleDraws:
    """Per-sample compositing parameters, recorded in the dataset manifest."""

    kernel_size: int
    decay: float
    vignette_center: tuple[float, float]
    vignette_strength: float


@dataclass
class LayerTriple:
    """One training sample: input I, transmission T, optional reflection R.

    For synthetic samples `reflection` is the processed layer actually added
    (post blur/decay/vignette) and input == clip(T + R). Real samples carry no
    reflection ground truth.
    """

    input: np.ndarray
    transmission: np.ndarray
    reflection: Optional[np.ndarray] = None
    is_real: bool = False
    sample_id: str = ""
    draws: Optional[SampleDraws] = None

    def validate(self, atol: float = 1e-6) -> "LayerTriple":
        validate_linear_image(self.input)
        validate_linear_image(self.transmission)
        if self.input.shape != self.transmission.shape:
            raise ValueError("input and transmission shapes differ")
        if self.is_real:
            if self.reflection is not None:
                raise ValueError("real samples must not carry a reflection layer")
        else:
            if self.reflection is None:
                raise ValueError("synthetic samples require a reflection layer")
            if self.reflection.shape != self.input.shape:
                raise ValueError("reflection shape differs from input")
            recon = np.clip(self.transmission + self.reflection, 0.0, 1.0)
            err = float(np.abs(recon - self.input).max())
            if err > atol:
                raise ValueError(f"input != clip(T + R), max abs error {err:.3g}")
        return self


def gaussian_kernel(kernel_size: int) -> np.ndarray:
    """Normalized 1-D Gaussian of the given odd size, sigma = size / 4."""
    if kernel_size % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {kernel_size}")
    sigma = kernel_size / 4.0
    x = np.arange(kernel_size, dtype=np.float64) - kernel_size // 2
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, kernel_size: int) -> np.ndarray:
    """Separable Gaussian blur with reflect padding, sigma = kernel_size / 4."""
    if not (3 <= kernel_size <= 17):
        raise ValueError(f"kernel size must be in [3, 17], got {kernel_size}")
    k = gaussian_kernel(kernel_size)
    img = np.asarray(img, dtype=np.float64)
    out = correlate1d(img, k, axis=0, mode="reflect")
    out = correlate1d(out, k, axis=1, mode="reflect")
    return np.clip(out, 0.0, 1.0)


def apply_vignette(
    img: np.ndarray, center: tuple[float, float], strength: float
) -> np.ndarray:
    """Quadratic radial falloff: pixel * (1 - strength * r^2).

    `center` is (cx, cy) in normalized [0,1]^2 coordinates; r is scaled so the
    farthest image corner sits at r = 1.
    """
    if not (0.0 <= strength < 1.0):
        raise ValueError(f"vignette strength must lie in [0, 1), got {strength}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    cx, cy = center
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    dy2 = (ys - cy)[:, None] ** 2
    dx2 = (xs - cx)[None, :] ** 2
    r2 = dy2 + dx2
    # farthest corner of the unit square from (cx, cy)
    r2_max = max(cx, 1.0 - cx) ** 2 + max(cy, 1.0 - cy) ** 2
    falloff = 1.0 - strength * (r2 / r2_max)
    return img * falloff[:, :, None]


def compose(
    transmission: np.ndarray,
    reflection_raw: np.ndarray,
    draws: SampleDraws,
    sample_id: str = "",
) -> LayerTriple:
    """Blend T with the blurred, attenuated, vignetted reflection layer.

    Stores the processed reflection (the layer actually added), not the raw one.
    """
    transmission = np.asarray(transmission, dtype=np.float64)
    reflection_raw = np.asarray(reflection_raw, dtype=np.float64)
    if transmission.shape != reflection_raw.shape:
        raise ValueError(
            f"shape mismatch: T {transmission.shape} vs R {reflection_raw.shape}"
        )
    r = gaussian_blur(reflection_raw, draws.kernel_size)
    r = apply_vignette(r, draws.vignette_center, draws.vignette_strength)
    r = r * draws.decay
    blended = np.clip(transmission + r, 0.0, 1.0)
    return LayerTriple(
        input=blended,
        transmission=transmission,
        reflection=r,
        is_real=False,
        sample_id=sample_id,
        draws=draws,
    )


def draw_params(cfg: SynthConfig, index: int) -> SampleDraws:
    """Draw one sample's compositing parameters from (cfg.seed, index)."""
    rng = np.random.default_rng([cfg.seed, index, 1])
    return SampleDraws(
        kernel_size=int(rng.choice(cfg.kernel_sizes)),
        decay=float(rng.uniform(*cfg.decay_range)),
        vignette_center=(float(rng.uniform()), float(rng.uniform())),
        vignette_strength=float(rng.uniform(*cfg.vignette_strength_range)),
    )


def synth_dataset(
    transmission_pool: list[np.ndarray],
    reflection_pool: list[np.ndarray],
    n: int,
    cfg: SynthConfig,
) -> list[LayerTriple]:
    """Generate n synthetic triples from independently drawn pool pairs."""
    if n > 0 and (not transmission_pool or not reflection_pool):
        raise ValueError("image pools must be non-empty")
    triples = []
    for i in range(n):
        rng = np.random.default_rng([cfg.seed, i, 0])
        t = transmission_pool[int(rng.integers(len(transmission_pool)))]
        r_raw = reflection_pool[int(rng.integers(len(reflection_pool)))]
        triples.append(compose(t, r_raw, draw_params(cfg, i), sample_id=f"{i:05d}"))
    return triples
