import numpy as np

from dataclasses import dataclass, replace

from app.core.rng import Rng
from app.data.bags import Bag
from app.errors import ConfigurationError
from app.filters.blur import gaussian_blur
from app.filters.dihedral import random_dihedral
from app.filters.stain import EOSIN_RGB, HEMATOXYLIN_RGB, StainMatrix, sample_stain_factors, stain_jitter


@dataclass(frozen=True)
class AugmentConfig:
    """
    Per-epoch stochastic augmentation settings.

    Attributes:
        enabled (bool): Master switch; off makes the pipeline the identity.
        stain (bool): H&E stain jitter.
        dihedral (bool): Random rotation by multiples of 90 degrees and mirroring.
        blur (bool): Gaussian blur with a random radius.
        stain_sigma (float): Std-dev of the Normal(1, sigma^2) stain factors.
        blur_radius_max (float): Blur radius is drawn uniformly from [0, blur_radius_max].
        hematoxylin (tuple): Hematoxylin OD vector.
        eosin (tuple): Eosin OD vector.
    """

    enabled: bool = True
    stain: bool = True
    dihedral: bool = True
    blur: bool = True
    stain_sigma: float = 0.1
    blur_radius_max: float = 2.0
    hematoxylin: tuple[float, float, float] = HEMATOXYLIN_RGB
    eosin: tuple[float, float, float] = EOSIN_RGB

    def __post_init__(self):
        object.__setattr__(self, "hematoxylin", tuple(float(v) for v in self.hematoxylin))
        object.__setattr__(self, "eosin", tuple(float(v) for v in self.eosin))
        if self.stain_sigma < 0:
            raise ConfigurationError(f"stain_sigma must be >= 0, got {self.stain_sigma}")
        if self.blur_radius_max < 0:
            raise ConfigurationError(f"blur_radius_max must be >= 0, got {self.blur_radius_max}")
        if len(self.hematoxylin) != 3 or len(self.eosin) != 3:
            raise ConfigurationError("Stain vectors need three components")

    def stain_matrix(self) -> StainMatrix:
        try:
            return StainMatrix.from_vectors(self.hematoxylin, self.eosin)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

    def to_dict(self) -> dict:
        return {
            "enabled": self.enabled, "stain": self.stain, "dihedral": self.dihedral, "blur": self.blur,
            "stain_sigma": self.stain_sigma, "blur_radius_max": self.blur_radius_max,
            "hematoxylin": list(self.hematoxylin), "eosin": list(self.eosin),
        }


def augment_pipeline(pixels: np.ndarray, config: AugmentConfig, rng: Rng, matrix: StainMatrix | None = None) -> np.ndarray:
    """
    Stain jitter, then a random dihedral transform, then Gaussian blur.

    Args:
        pixels (np.ndarray): uint8 RGB patch.
        config (AugmentConfig): Which transforms run and their parameters.
        rng (Rng): Stream keyed by (epoch, bag id, patch index).
        matrix (StainMatrix): Pre-built stain basis; built from config if omitted.

    Returns:
        np.ndarray: Augmented patch with unchanged shape and dtype.
    """
    if not config.enabled:
        return pixels
    out = pixels
    if config.stain:
        factors = sample_stain_factors(rng.derive("stain").generator(), config.stain_sigma)
        out = stain_jitter(out, factors, matrix or config.stain_matrix())
    if config.dihedral:
        out = random_dihedral(out, rng.derive("dihedral").generator())
    if config.blur:
        radius = float(rng.derive("blur").generator().uniform(0.0, config.blur_radius_max))
        out = gaussian_blur(out, radius)
    return out


def augment_bag(bag: Bag, config: AugmentConfig, rng: Rng, epoch: int) -> Bag:
    """
    Augmented copy of a bag; patch k uses the stream (epoch, bag id, k).
    """
    if not config.enabled:
        return bag
    matrix = config.stain_matrix()
    patches = tuple(
        replace(patch, pixels=augment_pipeline(patch.pixels, config, rng.derive("augment", epoch, bag.bag_id, k), matrix))
        for k, patch in enumerate(bag.patches)
    )
    return replace(bag, patches=patches)
