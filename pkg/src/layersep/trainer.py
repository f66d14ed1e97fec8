"""Optimization loop: alternating discriminator/generator Adam updates with
a fixed learning rate, per-step loss logging, exact-resume checkpoints, and
the ablation toggles.
"""
from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import losses
from .compositor import LayerTriple
from .datapipe import mixed_stream
from .losses import LossBreakdown, LossWeights
from .model import Discriminator, Generator, init_discriminator, init_generator
from .perception import FeatureExtractor, hypercolumn, to_image, to_tensor

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOG_COLUMNS = ["step", "epoch", "sample_id", "is_real", "L_feat", "L_adv", "L_excl", "L_R", "L_pix", "total"]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4  # fixed, no schedule
    epochs: int = 250
    batch_size: int = 1
    seed: int = 0
    use_feat: bool = True
    use_adv: bool = True
    use_excl: bool = True
    use_refl: bool = True
    use_grad_norm: bool = True
    checkpoint_every: int = 50
    deterministic: bool = False
    max_steps: Optional[int] = None  # optional desk-scale cap on total updates
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size != 1:
            raise ValueError("batch size is fixed at 1")


@dataclass
class TrainState:
    generator: Generator
    discriminator: Discriminator
    g_opt: torch.optim.Adam
    d_opt: torch.optim.Adam
    config: TrainConfig
    vgg_sha256: str
    epoch: int = 0
    global_step: int = 0


def init_state(config: TrainConfig, vgg_sha256: str) -> TrainState:
    if config.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    generator = init_generator(config.seed)
    discriminator = init_discriminator(config.seed + 1)
    adam = lambda params: torch.optim.Adam(
        params, lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    return TrainState(
        generator=generator,
        discriminator=discriminator,
        g_opt=adam(generator.parameters()),
        d_opt=adam(discriminator.parameters()),
        config=config,
        vgg_sha256=vgg_sha256,
    )


def _check_finite(total, breakdown: LossBreakdown, sample_id: str) -> None:
    bad = not np.isfinite(breakdown.total)
    if bad:
        raise RuntimeError(
            f"non-finite loss on sample {sample_id!r}: {breakdown.as_dict()}"
        )


def train_step(state: TrainState, sample: LayerTriple, vgg: FeatureExtractor) -> LossBreakdown:
    """One discriminator update (real/fake pairs conditioned on the input)
    followed by one generator update on the full objective."""
    cfg = state.config
    image = to_tensor(sample.input.astype(np.float32))
    target = to_tensor(sample.transmission.astype(np.float32))
    with torch.no_grad():
        hc = hypercolumn(vgg, image)

    f_t, f_r = state.generator(hc)

    if cfg.use_adv:
        d_loss = losses.discriminator_loss(
            state.discriminator, image, f_t.detach(), target
        )
        state.d_opt.zero_grad()
        d_loss.backward()
        state.d_opt.step()

    l_feat = l_pix = l_adv = l_excl = l_refl = None
    if cfg.use_feat:
        with torch.no_grad():
            taps_gt = vgg(target)
        taps_pred = vgg(f_t)
        l_feat = losses.feature_loss(taps_pred, taps_gt, cfg.weights.feature_layer_weights)
    else:
        # the no-feature ablation swaps in a plain image-space L1 term
        l_pix = (f_t - target).abs().mean()
    if cfg.use_adv:
        l_adv = losses.adversarial_loss(state.discriminator, image, f_t)
    if cfg.use_excl:
        record: list[tuple[float, float]] = []
        l_excl = losses.exclusion_loss(
            f_t, f_r, scales=cfg.weights.exclusion_scales,
            normalize=cfg.use_grad_norm, record=record,
        )
        for lam_t, lam_r in record:
            if cfg.use_grad_norm and np.isfinite(lam_t):
                assert abs(lam_t * lam_r - 1.0) < 1e-9
    if cfg.use_refl and not sample.is_real:
        refl = to_tensor(sample.reflection.astype(np.float32))
        l_refl = losses.reflection_loss(f_r, refl)

    total, breakdown = losses.total_loss(
        cfg.weights, l_feat=l_feat, l_adv=l_adv, l_excl=l_excl,
        l_refl=l_refl, l_pix=l_pix, is_real=sample.is_real,
    )
    _check_finite(total, breakdown, sample.sample_id)
    if isinstance(total, torch.Tensor):
        state.g_opt.zero_grad()
        total.backward()
        state.g_opt.step()
    state.global_step += 1
    return breakdown


class LossLog:
    """Append-only per-step CSV of loss components."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(LOG_COLUMNS)

    def append(self, step: int, epoch: int, sample: LayerTriple, breakdown: LossBreakdown):
        d = breakdown.as_dict()
        row = [step, epoch, sample.sample_id, int(sample.is_real)]
        row += ["" if d[k] is None else f"{d[k]:.8g}" for k in ("L_feat", "L_adv", "L_excl", "L_R", "L_pix")]
        row.append(f"{d['total']:.8g}")
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow(row)


def train(
    config: TrainConfig,
    synth: list[LayerTriple],
    real: list[LayerTriple],
    vgg: FeatureExtractor,
    out_dir,
    resume: Optional[str] = None,
) -> TrainState:
    """Run the full loop over the mixed synthetic/real stream.

    Checkpoints land in `out_dir` every `checkpoint_every` epochs and at the
    end; the loss log is `out_dir/loss_log.csv`.
    """
    if not synth and not real:
        raise ValueError("both datasets are empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if resume is not None:
        state = load_checkpoint(resume, vgg_sha256=vgg.sha256)
        state.config = config  # caller controls the remaining schedule
    else:
        state = init_state(config, vgg.sha256)
    log_file = LossLog(out_dir / "loss_log.csv")

    for epoch in range(state.epoch, config.epochs):
        if config.max_steps is not None and state.global_step >= config.max_steps:
            break
        order = mixed_stream(synth, real, config.seed, epoch)
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        for sample in order:
            if config.max_steps is not None and state.global_step >= config.max_steps:
                break
            breakdown = train_step(state, sample, vgg)
            log_file.append(state.global_step, epoch, sample, breakdown)
            for key, value in breakdown.as_dict().items():
                if value is not None:
                    sums[key] = sums.get(key, 0.0) + value
                    counts[key] = counts.get(key, 0) + 1
        state.epoch = epoch + 1
        means = {k: sums[k] / counts[k] for k in sums}
        log.info("epoch %d mean losses: %s", epoch, means)
        if config.checkpoint_every and state.epoch % config.checkpoint_every == 0:
            save_checkpoint(state, out_dir / f"checkpoint_{state.epoch:04d}.pt")
    save_checkpoint(state, out_dir / "checkpoint_final.pt")
    return state


def save_checkpoint(state: TrainState, path) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "generator": state.generator.state_dict(),
            "discriminator": state.discriminator.state_dict(),
            "g_opt": state.g_opt.state_dict(),
            "d_opt": state.d_opt.state_dict(),
            "epoch": state.epoch,
            "global_step": state.global_step,
            "config": asdict(state.config),
            "vgg_sha256": state.vgg_sha256,
            "torch_rng": torch.get_rng_state(),
        },
        path,
    )


def load_checkpoint(path, vgg_sha256: Optional[str] = None) -> TrainState:
    """Restore a TrainState; refuses to pair with a different VGG weight set."""
    data = torch.load(path, map_location="cpu", weights_only=False)
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    if vgg_sha256 is not None and data["vgg_sha256"] != vgg_sha256:
        raise ValueError(
            f"checkpoint was trained against VGG weights {data['vgg_sha256'][:12]}..., "
            f"but the loaded extractor is {vgg_sha256[:12]}..."
        )
    cfg_dict = dict(data["config"])
    cfg_dict["weights"] = LossWeights(**cfg_dict["weights"])
    config = TrainConfig(**cfg_dict)
    state = init_state(config, data["vgg_sha256"])
    state.generator.load_state_dict(data["generator"])
    state.discriminator.load_state_dict(data["discriminator"])
    state.g_opt.load_state_dict(data["g_opt"])
    state.d_opt.load_state_dict(data["d_opt"])
    state.epoch = data["epoch"]
    state.global_step = data["global_step"]
    torch.set_rng_state(data["torch_rng"])
    return state


def infer(state: TrainState, img: np.ndarray, vgg: FeatureExtractor) -> tuple[np.ndarray, np.ndarray]:
    """Decompose one linear image into clipped transmission/reflection layers."""
    if state.vgg_sha256 != vgg.sha256:
        raise ValueError("VGG weights checksum differs from the one trained against")
    with torch.no_grad():
        hc = hypercolumn(vgg, to_tensor(np.asarray(img, dtype=np.float32)))
        f_t, f_r = state.generator(hc)
    return (
        np.clip(to_image(f_t), 0.0, 1.0),
        np.clip(to_image(f_r), 0.0, 1.0),
    )


def parameter_checksum(state: TrainState) -> str:
    """SHA-256 over all generator + discriminator parameter bytes."""
    h = hashlib.sha256()
    for model in (state.generator, state.discriminator):
        for name, p in sorted(model.state_dict().items()):
            h.update(name.encode())
            h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
