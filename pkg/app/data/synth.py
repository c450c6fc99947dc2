import logging

import numpy as np
import pandas as pd

from pathlib import Path
from dataclasses import dataclass

from app.core.rng import Rng
from app.data.bags import Bag, Patch
from app.data.manifest import DatasetLayout, ManifestEntry, write_manifest
from app.data.patches import reassemble
from app.data.slides import save_png
from app.errors import ConfigurationError


logger = logging.getLogger(__name__)

GRID = 8
TISSUE_RGB = (200.0, 120.0, 160.0)
NOISE_STD = 20.0
WITNESS_LEVEL = 245.0


@dataclass(frozen=True)
class SynthConfig:
    """
    Parameters of the synthetic witness task.

    Attributes:
        num_bags (int): Bags to generate, half of them positive.
        k_min (int): Smallest bag size, >= 1.
        k_max (int): Largest bag size, <= 64 (one 8 x 8 mosaic per bag).
        witness_rate (float): Per-instance witness probability inside positive bags.
        patch_size (int): Patch side in pixels.
        seed (int): Run seed.
        single_witness (bool): Positive bags carry exactly one witness.
    """

    num_bags: int = 400
    k_min: int = 5
    k_max: int = 15
    witness_rate: float = 0.2
    patch_size: int = 24
    seed: int = 0
    single_witness: bool = False

    def __post_init__(self):
        if self.num_bags < 2:
            raise ConfigurationError(f"num_bags must be >= 2, got {self.num_bags}")
        if not 1 <= self.k_min <= self.k_max <= GRID * GRID:
            raise ConfigurationError(f"Need 1 <= k_min <= k_max <= {GRID * GRID}, got {self.k_min}..{self.k_max}")
        if not 0.0 < self.witness_rate < 1.0:
            raise ConfigurationError(f"witness_rate must lie in (0, 1), got {self.witness_rate}")
        if self.patch_size < 3:
            raise ConfigurationError(f"patch_size must be >= 3, got {self.patch_size}")

    @property
    def layout(self) -> DatasetLayout:
        return DatasetLayout(patch_size=self.patch_size, subimage_size=GRID * self.patch_size, train_subimages=1)


def make_instance(generator: np.random.Generator, size: int, witness: bool) -> np.ndarray:
    """
    Clipped Gaussian noise around a tissue colour; witnesses add a bright centred square.
    """
    pixels = np.array(TISSUE_RGB) + generator.normal(0.0, NOISE_STD, size=(size, size, 3))
    if witness:
        side = size // 3
        start = (size - side) // 2
        square = WITNESS_LEVEL + generator.normal(0.0, NOISE_STD / 4, size=(side, side, 3))
        pixels[start:start + side, start:start + side] = square
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def synth_bags(config: SynthConfig) -> tuple[list[Bag], dict[str, tuple[bool, ...]]]:
    """
    Generate a balanced synthetic MIL dataset.

    Each bag draws K uniformly from k_min..k_max and places its patches in K
    distinct cells of an 8 x 8 grid. A bag is positive iff it holds at least
    one witness. Witness flags are returned separately and are meant for
    diagnostics only.

    Returns:
        tuple: (bags in id order, bag id -> witness flag per patch).
    """
    rng = Rng(config.seed).derive("synth")
    positives = config.num_bags // 2
    labels = rng.derive("labels").generator().permutation(
        np.array([1] * positives + [0] * (config.num_bags - positives))
    )

    bags, witnesses = [], {}
    for index, label in enumerate(labels):
        generator = rng.derive("bag", index).generator()
        k = int(generator.integers(config.k_min, config.k_max + 1))
        cells = np.sort(generator.choice(GRID * GRID, size=k, replace=False))

        flags = np.zeros(k, dtype=bool)
        if label:
            if not config.single_witness:
                flags = generator.random(k) < config.witness_rate
            if not flags.any():
                flags[int(generator.integers(k))] = True

        bag_id = f"bag_{index:05d}"
        patches = tuple(
            Patch(make_instance(generator, config.patch_size, bool(flag)), int(cell) // GRID, int(cell) % GRID)
            for cell, flag in zip(cells, flags)
        )
        bags.append(Bag(bag_id, int(label), patches, source=f"images/{bag_id}.png"))
        witnesses[bag_id] = tuple(bool(f) for f in flags)

    logger.info(f"Synthesized {len(bags)} bag(s): {positives} positive, {len(bags) - positives} negative")
    return bags, witnesses


def write_synthetic_dataset(out_dir: str | Path, config: SynthConfig) -> Path:
    """
    Write mosaics, manifest.csv, dataset.yaml and witness.csv for a synthetic dataset.

    Returns:
        Path: The manifest path.
    """
    out_dir = Path(out_dir)
    bags, witnesses = synth_bags(config)
    size = GRID * config.patch_size

    entries, rows = [], []
    for bag in bags:
        save_png(out_dir / bag.source, reassemble(list(bag.patches), size))
        entries.append(ManifestEntry(path=bag.source, label=bag.label, patient_id=bag.bag_id))
        for patch, flag in zip(bag.patches, witnesses[bag.bag_id]):
            rows.append((bag.source, patch.row, patch.col, int(flag)))

    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, entries, config.layout)
    pd.DataFrame(rows, columns=["path", "row", "col", "witness"]).to_csv(
        out_dir / "witness.csv", index=False, lineterminator="\n"
    )
    return manifest_path
