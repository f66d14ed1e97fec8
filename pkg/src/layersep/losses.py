"""Training objectives: feature loss on perception-network activations,
adversarial losses for the conditional patch discriminator, the multi-scale
gradient-exclusion loss with magnitude normalization, the reflection L1 term,
and the weighted total.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    w_feat: float = 0.1
    w_adv: float = 0.01
    w_excl: float = 1.0
    exclusion_scales: int = 3
    # per-tap feature weights; None means 1 / element count per layer
    feature_layer_weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.exclusion_scales < 1:
            raise ValueError("exclusion_scales must be >= 1")


@dataclass
class LossBreakdown:
    l_feat: Optional[float] = None
    l_adv: Optional[float] = None
    l_excl: Optional[float] = None
    l_refl: Optional[float] = None
    l_pix: Optional[float] = None  # image-space L1 substitute in the no-feat ablation
    total: float = 0.0

    def as_dict(self) -> dict:
        return {
            "L_feat": self.l_feat,
            "L_adv": self.l_adv,
            "L_excl": self.l_excl,
            "L_R": self.l_refl,
            "L_pix": self.l_pix,
            "total": self.total,
        }


def feature_loss(
    taps_pred: list[torch.Tensor],
    taps_gt: list[torch.Tensor],
    layer_weights: Optional[tuple[float, ...]] = None,
) -> torch.Tensor:
    """Weighted L1 distance between tap activations of prediction and target.

    Default layer weights normalize each tap by its element count.
    """
    if len(taps_pred) != len(taps_gt):
        raise ValueError("tap lists differ in length")
    total = None
    for i, (p, g) in enumerate(zip(taps_pred, taps_gt)):
        if p.shape != g.shape:
            raise ValueError(f"tap {i} shape mismatch: {tuple(p.shape)} vs {tuple(g.shape)}")
        w = layer_weights[i] if layer_weights is not None else 1.0 / g.numel()
        term = w * (p - g).abs().sum()
        total = term if total is None else total + term
    return total


def _clamped_log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(p.clamp(PROB_EPS, 1.0 - PROB_EPS))


def discriminator_loss(disc, image, fake, real) -> torch.Tensor:
    """Patch-mean of log D(I, fake) - log D(I, real); the discriminator
    minimizes this."""
    return _clamped_log(disc(image, fake)).mean() - _clamped_log(disc(image, real)).mean()


def adversarial_loss(disc, image, fake) -> torch.Tensor:
    """Generator objective: patch-mean of -log D(I, fake)."""
    return -_clamped_log(disc(image, fake)).mean()


def _forward_diffs(img: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    gx = img[..., :, 1:] - img[..., :, :-1]
    gy = img[..., 1:, :] - img[..., :-1, :]
    return gx, gy


def _frobenius(x: torch.Tensor) -> float:
    # double precision so normalizer identities hold to ~1e-15
    return float(torch.linalg.vector_norm(x.detach().double()))


def exclusion_loss(
    f_t: torch.Tensor,
    f_r: torch.Tensor,
    scales: int = 3,
    normalize: bool = True,
    frozen_normalizers: Optional[list[tuple[float, float]]] = None,
    record: Optional[list[tuple[float, float]]] = None,
) -> torch.Tensor:
    """Multi-scale gradient-domain exclusion term.

    Per scale (bilinear half-resolution pyramid) and per gradient direction,
    the two layers' forward-difference magnitudes are tanh-squashed after
    rescaling by sqrt-ratio normalizers and multiplied; the Frobenius norms of
    the products are summed over directions and scales and divided by the
    number of scales.

    The normalizers are treated as constants for gradient propagation. A
    direction whose gradient field vanishes in either layer contributes zero.
    `frozen_normalizers` replays previously computed factors (consumed
    scale-major, x before y), which keeps finite-difference probes consistent
    with the stop-gradient objective; `record` collects the factors used.
    """
    if f_t.shape != f_r.shape:
        raise ValueError(f"shape mismatch: {tuple(f_t.shape)} vs {tuple(f_r.shape)}")
    if scales < 1:
        raise ValueError("scales must be >= 1")
    frozen = list(frozen_normalizers) if frozen_normalizers is not None else None
    total = f_t.sum() * 0.0  # keeps dtype/graph even if every term vanishes
    t, r = f_t, f_r
    for n in range(scales):
        if n > 0:
            h = max(1, (t.shape[-2] + 1) // 2)
            w = max(1, (t.shape[-1] + 1) // 2)
            t = F.interpolate(t, size=(h, w), mode="bilinear", align_corners=False)
            r = F.interpolate(r, size=(h, w), mode="bilinear", align_corners=False)
        for gt, gr in zip(_forward_diffs(t), _forward_diffs(r)):
            if frozen is not None:
                lam_t, lam_r = frozen.pop(0)
            elif normalize:
                norm_t = _frobenius(gt)
                norm_r = _frobenius(gr)
                if norm_t == 0.0 or norm_r == 0.0:
                    if record is not None:
                        record.append((float("nan"), float("nan")))
                    continue
                lam_t = math.sqrt(norm_r / norm_t)
                lam_r = math.sqrt(norm_t / norm_r)
            else:
                lam_t, lam_r = 1.0, 1.0
            if record is not None:
                record.append((lam_t, lam_r))
            psi = torch.tanh(lam_t * gt.abs()) * torch.tanh(lam_r * gr.abs())
            total = total + torch.linalg.vector_norm(psi)
    return total / scales


def reflection_loss(f_r: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between predicted and ground-truth reflection."""
    if f_r.shape != r.shape:
        raise ValueError(f"shape mismatch: {tuple(f_r.shape)} vs {tuple(r.shape)}")
    return (f_r - r).abs().mean()


def total_loss(
    weights: LossWeights,
    l_feat=None,
    l_adv=None,
    l_excl=None,
    l_refl=None,
    l_pix=None,
    is_real: bool = False,
):
    """Weighted combination of the component losses.

    The reflection term enters unweighted and only for synthetic samples.
    Absent components (ablations) contribute nothing and stay unset in the
    breakdown. Returns (total tensor/scalar, LossBreakdown).
    """

    def val(x):
        return float(x.detach()) if isinstance(x, torch.Tensor) else (None if x is None else float(x))

    total = 0.0
    if l_feat is not None:
        total = total + weights.w_feat * l_feat
    if l_pix is not None:
        total = total + weights.w_feat * l_pix
    if l_adv is not None:
        total = total + weights.w_adv * l_adv
    if l_excl is not None:
        total = total + weights.w_excl * l_excl
    if l_refl is not None and not is_real:
        total = total + l_refl
    breakdown = LossBreakdown(
        l_feat=val(l_feat),
        l_adv=val(l_adv),
        l_excl=val(l_excl),
        l_refl=None if is_real else val(l_refl),
        l_pix=val(l_pix),
        total=val(total) if isinstance(total, torch.Tensor) else float(total),
    )
    return total, breakdown
