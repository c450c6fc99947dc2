import numpy as np


class WhiteThresholdFilter:
    """
    A simple threshold-based background detector for RGB patches.

    A pixel counts as white when every channel reaches `white_level`; a patch
    is discarded when the white fraction is strictly above `max_white_fraction`.
    The decision depends only on pixel values, never on the patch position.

    Attributes:
        white_level (int): Per-channel 8-bit level at or above which a pixel is white.
        max_white_fraction (float): Largest tolerated fraction of white pixels.
    """

    def __init__(self, white_level=240, max_white_fraction=0.75):
        """
        Initialize the white filter.

        Args:
            white_level (int): Channel threshold in [0, 255].
            max_white_fraction (float): Discard threshold in [0, 1].
        """
        if not 0 <= white_level <= 255:
            raise ValueError(f"white_level must lie in [0, 255], got {white_level}")
        if not 0.0 <= max_white_fraction <= 1.0:
            raise ValueError(f"max_white_fraction must lie in [0, 1], got {max_white_fraction}")
        self.white_level = white_level
        self.max_white_fraction = max_white_fraction

    def white_fraction(self, pixels: np.ndarray) -> float:
        """
        Fraction of pixels whose three channels are all >= white_level.

        Args:
            pixels (np.ndarray): uint8 array shaped (H, W, 3).

        Returns:
            float: White fraction in [0, 1].
        """
        white = np.all(pixels >= self.white_level, axis=-1)
        return float(white.mean())

    def keep(self, pixels: np.ndarray) -> bool:
        """
        Decide whether a patch carries enough tissue to be kept.

        Args:
            pixels (np.ndarray): uint8 array shaped (H, W, 3).

        Returns:
            bool: False iff more than max_white_fraction of the pixels are white.
        """
        # Integer comparison so exactly 75.0% white is kept.
        white = int(np.count_nonzero(np.all(pixels >= self.white_level, axis=-1)))
        total = pixels.shape[0] * pixels.shape[1]
        return white <= self.max_white_fraction * total
