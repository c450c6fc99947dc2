import math

import numpy as np

from enum import Enum
from dataclasses import dataclass

from app.data.bags import Patch
from app.data.slides import SlideImage
from app.filters.threshold import WhiteThresholdFilter
from app.errors import IngestionError, InternalError


class ExtractMode(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class Subimage:
    """
    A square crop of a slide image.

    Attributes:
        pixels (np.ndarray): uint8 array shaped (size, size, 3).
        x (int): Horizontal offset in the source image.
        y (int): Vertical offset in the source image.
        index (int): Position in the extraction order.
    """

    pixels: np.ndarray
    x: int
    y: int
    index: int = 0


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def subimage_offsets(width: int, height: int, size: int, mode: ExtractMode, count: int = 8) -> list[tuple[int, int]]:
    """
    (x, y) offsets of the subimages cut from a width x height image.

    Test mode (or count == 1) yields the centred crop. Train mode slides
    `count` crops along the longer axis at offsets round(i * slack / (count - 1))
    and centres the other axis.
    """
    slack_x, slack_y = width - size, height - size
    centre = (slack_x // 2, slack_y // 2)
    if mode == ExtractMode.TEST or count == 1:
        return [centre]
    if slack_x >= slack_y:
        return [(_round_half_up(i * slack_x / (count - 1)), centre[1]) for i in range(count)]
    return [(centre[0], _round_half_up(i * slack_y / (count - 1))) for i in range(count)]


def extract_subimages(image: SlideImage, mode: ExtractMode, size: int = 768, count: int = 8) -> list[Subimage]:
    """
    Cut the protocol subimages out of a slide image.

    Args:
        image (SlideImage): Source image, at least size x size.
        mode (ExtractMode): TRAIN for `count` overlapping crops, TEST for the centred crop.
        size (int): Subimage side in pixels.
        count (int): Number of training crops.

    Returns:
        list[Subimage]: Crops in offset order.

    Raises:
        IngestionError: If the image is smaller than size in either dimension.
    """
    mode = ExtractMode(mode)
    if image.width < size or image.height < size:
        raise IngestionError(
            f"Image '{image.path}' is {image.width}x{image.height}, smaller than the {size}x{size} subimage"
        )
    return [
        Subimage(pixels=image.pixels[y:y + size, x:x + size], x=x, y=y, index=index)
        for index, (x, y) in enumerate(subimage_offsets(image.width, image.height, size, mode, count))
    ]


def tile_patches(pixels: np.ndarray, patch_size: int = 96) -> list[Patch]:
    """
    Split a square subimage into non-overlapping patches in row-major grid order.

    Raises:
        InternalError: If the subimage is not square or not a multiple of patch_size.
    """
    height, width = pixels.shape[:2]
    if height != width or height % patch_size:
        raise InternalError(f"Cannot tile a {width}x{height} subimage into {patch_size}px patches")
    grid = height // patch_size
    return [
        Patch(
            pixels=np.ascontiguousarray(pixels[r * patch_size:(r + 1) * patch_size, c * patch_size:(c + 1) * patch_size]),
            row=r,
            col=c,
        )
        for r in range(grid)
        for c in range(grid)
    ]


def reassemble(patches: list[Patch], size: int) -> np.ndarray:
    """
    Paste patches back at their grid positions on a white canvas.
    """
    canvas = np.full((size, size, 3), 255, dtype=np.uint8)
    for patch in patches:
        p = patch.pixels.shape[0]
        canvas[patch.row * p:(patch.row + 1) * p, patch.col * p:(patch.col + 1) * p] = patch.pixels
    return canvas


def white_filter(patch: Patch, detector: WhiteThresholdFilter | None = None) -> bool:
    """
    True to keep the patch, False to discard it as background.
    """
    return (detector or WhiteThresholdFilter()).keep(patch.pixels)
