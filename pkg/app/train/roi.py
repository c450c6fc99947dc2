import logging

import numpy as np
import pandas as pd

from pathlib import Path
from dataclasses import dataclass

from app.core.layers import Mode
from app.core.model import forward
from app.data.bags import to_tensor
from app.data.patches import ExtractMode, extract_subimages, tile_patches
from app.data.slides import SlideImage, save_png
from app.filters.threshold import WhiteThresholdFilter
from app.train.checkpoint import Checkpoint


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoiResult:
    """
    Per-patch scores of one image and the heatmap rendered from them.

    Attributes:
        heatmap (np.ndarray): uint8 grayscale image, subimage-sized; 0 is black, 255 white.
        table (pd.DataFrame): One row per patch with columns row, col, score, discarded.
    """

    heatmap: np.ndarray
    table: pd.DataFrame

    def peak(self) -> tuple[int, int]:
        """
        (row, col) of the highest-scoring patch; ties go to the first in grid order.
        """
        best = self.table.loc[self.table["score"].idxmax()]
        return int(best["row"]), int(best["col"])

    def save(self, heatmap_path: str | Path, table_path: str | Path | None = None):
        save_png(heatmap_path, self.heatmap)
        if table_path is not None:
            Path(table_path).parent.mkdir(parents=True, exist_ok=True)
            self.table.to_csv(table_path, index=False)


def score_roi(checkpoint: Checkpoint, image: SlideImage) -> RoiResult:
    """
    Score every patch of the centred subimage and paint the score grid.

    White-discarded patches are not scored; they render as 0 and are
    flagged in the table.

    Args:
        checkpoint (Checkpoint): Trained model plus the patch protocol it was trained on.
        image (SlideImage): Image to inspect.

    Returns:
        RoiResult: Heatmap and score table.

    Raises:
        IngestionError: If the image is smaller than the subimage.
    """
    patch_size = checkpoint.model.input_shape[1]
    size = int(checkpoint.layout.get("subimage_size", patch_size * 8))
    detector = WhiteThresholdFilter(
        checkpoint.layout.get("white_level", 240),
        checkpoint.layout.get("max_white_fraction", 0.75),
    )

    (subimage,) = extract_subimages(image, ExtractMode.TEST, size)
    patches = tile_patches(subimage.pixels, patch_size)
    kept = [p for p in patches if detector.keep(p.pixels)]

    scores = {}
    if kept:
        x = np.stack([to_tensor(p.pixels) for p in kept])
        values, _ = forward(checkpoint.params, checkpoint.model, x, Mode.EVAL)
        scores = {(p.row, p.col): float(v) for p, v in zip(kept, values)}

    grid = size // patch_size
    score_grid = np.zeros((grid, grid))
    rows = []
    for patch in patches:
        key = (patch.row, patch.col)
        discarded = key not in scores
        score = 0.0 if discarded else scores[key]
        score_grid[key] = score
        rows.append({"row": patch.row, "col": patch.col, "score": score, "discarded": discarded})

    gray = np.rint(np.clip(score_grid, 0.0, 1.0) * 255).astype(np.uint8)
    heatmap = np.kron(gray, np.ones((patch_size, patch_size), dtype=np.uint8))
    logger.info(f"Scored {len(kept)} of {len(patches)} patch(es) of '{image.path}'")
    return RoiResult(heatmap, pd.DataFrame(rows, columns=["row", "col", "score", "discarded"]))
