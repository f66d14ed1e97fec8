"""Dataset ingestion and the mixed training stream.

Directory layout: `root/blended/*.png`, `root/transmission/*.png`, optional
`root/reflection/*.png`, matched by filename stem. A split file
(`train.txt` / `test.txt`) at the root lists ids per split; without one, every
sample belongs to the requested split.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .compositor import LayerTriple
from .imagecore import load_image

log = logging.getLogger(__name__)

MIN_SHORT_SIDE = 64


@dataclass
class IndexEntry:
    sample_id: str
    input_path: Path
    transmission_path: Path
    reflection_path: Optional[Path]
    is_real: bool


@dataclass
class DatasetIndex:
    entries: list[IndexEntry]
    split: str
    root: Path

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PatchSpec:
    short_side_range: tuple[int, int] = (256, 480)
    patches_per_image: int = 1

    def __post_init__(self):
        lo, hi = self.short_side_range
        if not (64 <= lo <= hi <= 1024):
            raise ValueError(f"short side bounds must lie in [64, 1024], got {self.short_side_range}")


def index_dataset(root, kind: str, split: str = "train") -> DatasetIndex:
    """Index samples under `root`. `kind` is 'synthetic' or 'real'.

    Synthetic entries must have a reflection layer on disk; real entries must
    not. Entries are ordered by sample id.
    """
    if kind not in ("synthetic", "real"):
        raise ValueError(f"kind must be 'synthetic' or 'real', got {kind!r}")
    root = Path(root)
    blended_dir = root / "blended"
    if not blended_dir.is_dir():
        raise FileNotFoundError(f"missing {blended_dir}")

    split_file = root / f"{split}.txt"
    if split_file.is_file():
        ids = sorted(line.strip() for line in split_file.read_text().splitlines() if line.strip())
    else:
        ids = sorted(p.stem for p in blended_dir.glob("*.png"))

    entries = []
    for sample_id in ids:
        input_path = blended_dir / f"{sample_id}.png"
        trans_path = root / "transmission" / f"{sample_id}.png"
        refl_path = root / "reflection" / f"{sample_id}.png"
        if not input_path.is_file():
            raise FileNotFoundError(f"sample {sample_id!r}: missing blended image {input_path}")
        if not trans_path.is_file():
            raise FileNotFoundError(f"sample {sample_id!r}: missing transmission image {trans_path}")
        if kind == "synthetic":
            if not refl_path.is_file():
                raise FileNotFoundError(f"sample {sample_id!r}: missing reflection image {refl_path}")
            entries.append(IndexEntry(sample_id, input_path, trans_path, refl_path, is_real=False))
        else:
            entries.append(IndexEntry(sample_id, input_path, trans_path, None, is_real=True))
    return DatasetIndex(entries=entries, split=split, root=root)


def load_triple(entry: IndexEntry) -> LayerTriple:
    """Load one sample from disk.

    Synthetic inputs are recomposed as clip(T + R) so the additive invariant
    holds exactly despite 8-bit quantization of the stored layers.
    """
    transmission = load_image(entry.transmission_path)
    if entry.is_real:
        blended = load_image(entry.input_path)
        if blended.shape != transmission.shape:
            raise ValueError(f"sample {entry.sample_id!r}: layer dimensions differ")
        return LayerTriple(
            input=blended, transmission=transmission, is_real=True, sample_id=entry.sample_id
        )
    reflection = load_image(entry.reflection_path)
    if reflection.shape != transmission.shape:
        raise ValueError(f"sample {entry.sample_id!r}: layer dimensions differ")
    blended = np.clip(transmission + reflection, 0.0, 1.0)
    return LayerTriple(
        input=blended,
        transmission=transmission,
        reflection=reflection,
        is_real=False,
        sample_id=entry.sample_id,
    )


def _resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    out = cv2.resize(img.astype(np.float32), (width, height), interpolation=cv2.INTER_AREA)
    return np.clip(out.astype(np.float64), 0.0, 1.0)


def _entry_rng(seed: int, sample_id: str, patch: int) -> np.random.Generator:
    # keyed by sample id, not arrival order, so worker count cannot change draws
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode()), patch])


def extract_patches(index: DatasetIndex, spec: PatchSpec, seed: int) -> list[LayerTriple]:
    """Random-resolution square patches, pixel-aligned across I/T/R.

    Per patch: draw a target short side s in the requested range, resize the whole
    sample so its short side is s (aspect preserved, never upsampled), then
    crop a random square of side s. Deterministic under `seed`.
    """
    if index.split != "train":
        raise ValueError("patch extraction is defined for the train split")
    patches = []
    for entry in index.entries:
        triple = load_triple(entry)
        h, w = triple.input.shape[:2]
        short = min(h, w)
        if short < MIN_SHORT_SIDE:
            log.warning("sample %s short side %d < %d px, skipped", entry.sample_id, short, MIN_SHORT_SIDE)
            continue
        for p in range(spec.patches_per_image):
            rng = _entry_rng(seed, entry.sample_id, p)
            lo, hi = spec.short_side_range
            s = int(rng.integers(lo, hi + 1))
            s = min(s, short)  # never upsample
            if h <= w:
                nh, nw = s, max(s, round(w * s / h))
            else:
                nh, nw = max(s, round(h * s / w)), s
            side = min(nh, nw)
            y0 = int(rng.integers(0, nh - side + 1))
            x0 = int(rng.integers(0, nw - side + 1))

            def crop(img):
                return _resize(img, nh, nw)[y0 : y0 + side, x0 : x0 + side]

            transmission = crop(triple.transmission)
            if triple.is_real:
                patches.append(
                    LayerTriple(
                        input=crop(triple.input),
                        transmission=transmission,
                        is_real=True,
                        sample_id=f"{entry.sample_id}#{p}",
                    )
                )
            else:
                reflection = crop(triple.reflection)
                patches.append(
                    LayerTriple(
                        input=np.clip(transmission + reflection, 0.0, 1.0),
                        transmission=transmission,
                        reflection=reflection,
                        is_real=False,
                        sample_id=f"{entry.sample_id}#{p}",
                    )
                )
    return patches


def mixed_stream(
    synth: list[LayerTriple], real: list[LayerTriple], seed: int, epoch: int
) -> list[LayerTriple]:
    """One epoch of training samples: a uniform shuffle of both pools.

    The order is a function of (seed, epoch) only.
    """
    pool = list(synth) + list(real)
    if not pool:
        raise ValueError("both sample pools are empty")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(pool))
    return [pool[i] for i in order]
