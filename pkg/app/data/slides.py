import logging

import numpy as np

from pathlib import Path
from dataclasses import dataclass
from PIL import Image, UnidentifiedImageError

from app.errors import IngestionError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlideImage:
    """
    A labelled RGB image excerpt.

    Attributes:
        pixels (np.ndarray): uint8 array shaped (height, width, 3).
        path (str): Source file.
        patient_id (str): Patient the image belongs to.
        label (int): Image label y in {0, 1}.
    """

    pixels: np.ndarray
    path: str = ""
    patient_id: str = ""
    label: int = 0

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


def read_rgb(path: str | Path) -> np.ndarray:
    """
    Read a PNG or binary PPM (P6) file as 8-bit RGB; alpha is dropped.

    Raises:
        IngestionError: If the file is missing or not a readable image.
    """
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, UnidentifiedImageError) as e:
        raise IngestionError(f"Cannot read image '{path}': {e}") from e


def load_slide(path: str | Path, patient_id: str = "", label: int = 0) -> SlideImage:
    pixels = read_rgb(path)
    logger.debug(f"Loaded {path} ({pixels.shape[1]}x{pixels.shape[0]})")
    return SlideImage(pixels=pixels, path=str(path), patient_id=patient_id, label=label)


def save_png(path: str | Path, pixels: np.ndarray):
    """
    Write an RGB (H, W, 3) or grayscale (H, W) uint8 array as PNG.
    """
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(path, format="PNG")
