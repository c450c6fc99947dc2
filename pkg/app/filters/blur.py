import math

import numpy as np
import scipy.ndimage


MIN_RADIUS = 0.05


def gaussian_kernel(radius: float) -> np.ndarray:
    """
    Normalised 1-D Gaussian with sigma = radius and half-width ceil(3 * sigma).
    """
    if radius < 0:
        raise ValueError(f"Blur radius must be non-negative, got {radius}")
    if radius < MIN_RADIUS:
        return np.ones(1)
    half = int(math.ceil(3.0 * radius))
    x = np.arange(-half, half + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / radius) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(pixels: np.ndarray, radius: float) -> np.ndarray:
    """
    Separable Gaussian blur with clamp-to-edge borders.

    Args:
        pixels (np.ndarray): uint8 patch shaped (H, W, 3).
        radius (float): Gaussian sigma in pixels; below 0.05 the patch is returned unchanged.

    Returns:
        np.ndarray: Blurred uint8 patch.
    """
    if radius < MIN_RADIUS:
        if radius < 0:
            raise ValueError(f"Blur radius must be non-negative, got {radius}")
        return pixels.copy()
    kernel = gaussian_kernel(radius)
    out = pixels.astype(np.float64)
    for axis in (0, 1):
        out = scipy.ndimage.correlate1d(out, kernel, axis=axis, mode="nearest")
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
