import numpy as np

from dataclasses import dataclass


def to_tensor(pixels: np.ndarray) -> np.ndarray:
    """
    Convert 8-bit HWC pixels (or a stack of them) to float64 CHW scaled to [0, 1].

    No mean subtraction: the network sees the same colour convention as the
    stain augmentation.
    """
    pixels = np.asarray(pixels)
    return np.moveaxis(pixels, -1, -3).astype(np.float64) / 255.0


@dataclass(frozen=True)
class Patch:
    """
    One instance: an 8-bit RGB block and its position in the subimage grid.

    Attributes:
        pixels (np.ndarray): uint8 array shaped (size, size, 3).
        row (int): Grid row within the subimage.
        col (int): Grid column within the subimage.
    """

    pixels: np.ndarray
    row: int
    col: int


@dataclass(frozen=True)
class Bag:
    """
    A bag of patches sharing one binary label.

    Attributes:
        bag_id (str): Unique, stable identifier (also keys augmentation streams).
        label (int): Bag label y in {0, 1}.
        patches (tuple[Patch]): Patches in row-major grid order.
        source (str): Image the bag was cut from.
        offset (tuple[int, int]): (x, y) pixel offset of the subimage in the source.
    """

    bag_id: str
    label: int
    patches: tuple[Patch, ...]
    source: str = ""
    offset: tuple[int, int] = (0, 0)

    def __len__(self) -> int:
        return len(self.patches)

    def to_tensor(self) -> np.ndarray:
        """
        Stack the patches into a network input shaped (K, C, H, W).
        """
        return to_tensor(np.stack([p.pixels for p in self.patches]))
