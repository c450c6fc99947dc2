import numpy as np

from app.errors import DomainError


DIHEDRAL_ORDER = 8


def apply_dihedral(pixels: np.ndarray, element: int) -> np.ndarray:
    """
    Apply one of the 8 symmetries of the square to an (H, W, ...) patch.

    Elements 0-3 rotate clockwise by 0/90/180/270 degrees; elements 4-7 apply
    the same rotation followed by a horizontal mirror.
    """
    if pixels.shape[0] != pixels.shape[1]:
        raise DomainError(f"Dihedral transforms need a square patch, got {pixels.shape[:2]}")
    if not 0 <= element < DIHEDRAL_ORDER:
        raise DomainError(f"Dihedral element must lie in 0..7, got {element}")
    out = np.rot90(pixels, k=-(element % 4), axes=(0, 1))
    if element >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def inverse_element(element: int) -> int:
    # Mirrored elements are reflections, hence involutions.
    return element if element >= 4 else (4 - element) % 4


def random_dihedral(pixels: np.ndarray, generator: np.random.Generator) -> np.ndarray:
    return apply_dihedral(pixels, int(generator.integers(DIHEDRAL_ORDER)))
