"""Synthetic patch generation.

Two mask families with deliberately different morphology:

* ``coarse``: 1 to 3 large blobs (radius 18 to 45), one compact structure
  dominating the patch, like a tumor core on an MRI slice.
* ``fine``: 25 to 60 small blobs (radius 2 to 5) scattered over the patch,
  like fragmented regions in a stained tissue section.

Images are flat two-level rasters (background 40, foreground 200) with
optional additive noise.  Generation is a pure function of (seed, family,
patch index): patch i never changes when the requested count changes, and
the two families draw from unrelated streams.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
from PIL import Image

from .masks import BinaryMask
from .rng import SeededRng, derive_state

FAMILIES = ("coarse", "fine")
BG_INTENSITY = 40
FG_INTENSITY = 200

# Blob count and radius bounds per family (inclusive).
_FAMILY_PARAMS = {
    "coarse": (1, 3, 18, 45),
    "fine": (25, 60, 2, 5),
}


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    family: str
    count: int
    seed: int
    width: int = 256
    height: int = 256
    patches_per_patient: int = 5
    noise: int = 0
    min_foreground: int = 150

    def __post_init__(self):
        if self.family not in _FAMILY_PARAMS:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.patches_per_patient < 1:
            raise ValueError("patches_per_patient must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def _draw_blobs(family: str, width: int, height: int, rng: SeededRng) -> np.ndarray:
    lo_n, hi_n, lo_r, hi_r = _FAMILY_PARAMS[family]
    n = lo_n + rng.randbelow(hi_n - lo_n + 1)
    fg = np.zeros((height, width), dtype=bool)
    ys = np.arange(height).reshape(-1, 1)
    xs = np.arange(width).reshape(1, -1)
    for _ in range(n):
        cx = rng.randbelow(width)
        cy = rng.randbelow(height)
        r = lo_r + rng.randbelow(hi_r - lo_r + 1)
        fg |= (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    return fg


def synth_mask(family: str, width: int, height: int, rng: SeededRng,
               min_foreground: int = 150) -> BinaryMask:
    """One random mask of the given family with at least min_foreground
    foreground pixels (and at least one background pixel).

    Draws repeat on the same stream until the floor is met, so the result
    is still a pure function of the stream state.
    """
    for _ in range(100):
        fg = _draw_blobs(family, width, height, rng)
        count = int(np.count_nonzero(fg))
        if count >= min_foreground and count < width * height:
            return BinaryMask(fg)
    raise RuntimeError(
        f"family {family!r} failed to reach {min_foreground} foreground pixels "
        f"on a {width}x{height} grid after 100 attempts"
    )


def synth_patch(cfg: SynthConfig, index: int) -> tuple[np.ndarray, BinaryMask]:
    """(image, ground truth) for patch `index` of the configured family."""
    rng = SeededRng(cfg.seed, "synth", cfg.family, str(index))
    gt = synth_mask(cfg.family, cfg.width, cfg.height, rng, cfg.min_foreground)
    image = np.where(gt.pixels, FG_INTENSITY, BG_INTENSITY).astype(np.int16)
    if cfg.noise:
        gen = np.random.Generator(np.random.PCG64(derive_state(cfg.seed, "noise", cfg.family, str(index))))
        image = image + gen.integers(-cfg.noise, cfg.noise + 1, size=image.shape, dtype=np.int16)
    return np.clip(image, 0, 255).astype(np.uint8), gt


def patch_id(cfg: SynthConfig, index: int) -> str:
    return f"{cfg.family[0]}{index:03d}"


def patient_id(cfg: SynthConfig, index: int) -> str:
    """Patients own consecutive blocks of patches_per_patient patches."""
    return f"P{index // cfg.patches_per_patient:03d}"


def generate_dataset(cfg: SynthConfig, out_dir: Path) -> Path:
    """Materialize images/, masks/ and a manifest under out_dir.

    Label masks store 0 for background and 1 for foreground; the manifest
    maps foreground as the target label.  Returns the manifest path.
    """
    from .dataset import write_manifest_file

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(cfg.count):
        image, gt = synth_patch(cfg, i)
        pid = patch_id(cfg, i)
        image_rel = f"images/{pid}.png"
        mask_rel = f"masks/{pid}.png"
        Image.fromarray(image, mode="L").save(out_dir / image_rel)
        Image.fromarray(gt.pixels.astype(np.uint8), mode="L").save(out_dir / mask_rel)
        rows.append((pid, image_rel, mask_rel, patient_id(cfg, i)))
    manifest_path = out_dir / "manifest.csv"
    write_manifest_file(
        manifest_path,
        rows,
        label_set={"background": 0, "foreground": 1},
        target_labels=("foreground",),
    )
    return manifest_path
