import numpy as np

from dataclasses import dataclass


# Ruifrok & Johnston H&E optical-density vectors.
HEMATOXYLIN_RGB = (0.65, 0.70, 0.29)
EOSIN_RGB = (0.07, 0.99, 0.11)

FACTOR_MIN = 0.2
FACTOR_MAX = 1.8


@dataclass(frozen=True)
class StainMatrix:
    """
    Stain basis in optical-density RGB space.

    Rows are unit vectors for hematoxylin, eosin and the residual (their
    normalised cross product). OD = C @ rows and C = OD @ inverse.

    Attributes:
        rows (np.ndarray): 3 x 3 matrix, one stain per row.
        inverse (np.ndarray): Inverse of `rows`.
    """

    rows: np.ndarray
    inverse: np.ndarray

    @classmethod
    def from_vectors(cls, hematoxylin=HEMATOXYLIN_RGB, eosin=EOSIN_RGB) -> "StainMatrix":
        h = np.asarray(hematoxylin, dtype=np.float64)
        e = np.asarray(eosin, dtype=np.float64)
        h = h / np.linalg.norm(h)
        e = e / np.linalg.norm(e)
        residual = np.cross(h, e)
        norm = np.linalg.norm(residual)
        if norm == 0:
            raise ValueError("Hematoxylin and eosin vectors must not be parallel")
        rows = np.vstack([h, e, residual / norm])
        if np.linalg.cond(rows) >= 1e4:
            raise ValueError("Stain matrix is ill-conditioned")
        return cls(rows=rows, inverse=np.linalg.inv(rows))

    def project(self, od: np.ndarray) -> np.ndarray:
        """
        Stain concentrations (..., 3) of optical densities (..., 3).
        """
        return od @ self.inverse

    def unproject(self, concentrations: np.ndarray) -> np.ndarray:
        return concentrations @ self.rows


def rgb_to_od(pixels: np.ndarray) -> np.ndarray:
    """
    Beer-Lambert optical density, OD = -log10((I + 1) / 256) per channel.
    """
    return -np.log10((np.asarray(pixels, dtype=np.float64) + 1.0) / 256.0)


def od_to_rgb(od: np.ndarray) -> np.ndarray:
    """
    Inverse of rgb_to_od, rounded to nearest and clamped to [0, 255].
    """
    intensity = 256.0 * np.power(10.0, -np.asarray(od, dtype=np.float64)) - 1.0
    return np.clip(np.rint(intensity), 0, 255).astype(np.uint8)


def stain_jitter(pixels: np.ndarray, factors: tuple[float, float], matrix: StainMatrix | None = None) -> np.ndarray:
    """
    Scale the hematoxylin and eosin planes of a patch, keeping the residual plane.

    Args:
        pixels (np.ndarray): uint8 RGB patch.
        factors (tuple): (g_H, g_E) multipliers, clamped to [0.2, 1.8].
        matrix (StainMatrix): Stain basis; the standard H&E basis by default.

    Returns:
        np.ndarray: Jittered uint8 RGB patch of the same shape.
    """
    matrix = matrix or StainMatrix.from_vectors()
    gain = np.array([*np.clip(factors, FACTOR_MIN, FACTOR_MAX), 1.0])
    concentrations = matrix.project(rgb_to_od(pixels)) * gain
    return od_to_rgb(matrix.unproject(concentrations))


def sample_stain_factors(generator: np.random.Generator, sigma: float) -> tuple[float, float]:
    """
    Two i.i.d. Normal(1, sigma^2) factors, one per stain, drawn once per patch.
    """
    g_h, g_e = generator.normal(1.0, sigma, size=2) if sigma > 0 else (1.0, 1.0)
    return float(g_h), float(g_e)
