import numpy as np
import pandas as pd
import pytest

from PIL import Image

from app.core.model import InstanceClassifierConfig, ModelParams, instance_score
from app.core.pooling import PoolingConfig
from app.core.rng import Rng
from app.data.bags import to_tensor
from app.data.slides import SlideImage, load_slide
from app.errors import IngestionError
from app.train.checkpoint import Checkpoint
from app.train.roi import score_roi


@pytest.fixture
def model():
    return InstanceClassifierConfig.default((3, 16, 16), conv_channels=(2,), conv_kernels=(3,), hidden_units=4)


@pytest.fixture
def mosaic(synthetic_manifest):
    return load_slide(synthetic_manifest.parent / "images" / "bag_00000.png")


@pytest.fixture
def occupied(synthetic_manifest):
    witness = pd.read_csv(synthetic_manifest.parent / "witness.csv")
    cells = witness[witness["path"] == "images/bag_00000.png"]
    return set(zip(cells["row"], cells["col"]))


def checkpoint(model, params):
    return Checkpoint(model, PoolingConfig(), params, layout={"patch_size": 16, "subimage_size": 128})


class TestScoreRoi:

    def test_zero_model_paints_kept_patches_mid_gray(self, model, mosaic, occupied):
        result = score_roi(checkpoint(model, ModelParams.zeros(model)), mosaic)
        assert result.heatmap.shape == (128, 128) and result.heatmap.dtype == np.uint8
        assert len(result.table) == 64
        for row in result.table.itertuples():
            cell = result.heatmap[row.row * 16:(row.row + 1) * 16, row.col * 16:(row.col + 1) * 16]
            expected = 128 if (row.row, row.col) in occupied else 0
            assert row.discarded == ((row.row, row.col) not in occupied)
            np.testing.assert_array_equal(cell, expected)

    def test_peak_matches_heatmap(self, model, mosaic):
        params = ModelParams.initialize(model, Rng(5))
        result = score_roi(checkpoint(model, params), mosaic)
        row, col = result.peak()
        assert result.table["score"].max() == pytest.approx(result.table.loc[row * 8 + col, "score"])
        assert result.heatmap[row * 16, col * 16] == result.heatmap.max()

    def test_scores_match_instance_classifier(self, model, mosaic):
        params = ModelParams.initialize(model, Rng(2))
        result = score_roi(checkpoint(model, params), mosaic)
        kept = result.table[~result.table["discarded"]].iloc[0]
        r, c = int(kept["row"]), int(kept["col"])
        patch = mosaic.pixels[r * 16:(r + 1) * 16, c * 16:(c + 1) * 16]
        assert kept["score"] == pytest.approx(instance_score(params, model, to_tensor(patch)), abs=1e-12)

    def test_all_white_image(self, model):
        image = SlideImage(np.full((128, 160, 3), 255, dtype=np.uint8), "white.png")
        result = score_roi(checkpoint(model, ModelParams.zeros(model)), image)
        assert result.table["discarded"].all()
        assert not result.heatmap.any()

    def test_save(self, model, mosaic, tmp_path):
        result = score_roi(checkpoint(model, ModelParams.zeros(model)), mosaic)
        result.save(tmp_path / "roi.png", tmp_path / "roi.csv")
        np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "roi.png")), result.heatmap)
        table = pd.read_csv(tmp_path / "roi.csv")
        assert list(table.columns) == ["row", "col", "score", "discarded"]
        assert len(table) == 64

    def test_small_image(self, model):
        image = SlideImage(np.zeros((100, 100, 3), dtype=np.uint8), "small.png")
        with pytest.raises(IngestionError):
            score_roi(checkpoint(model, ModelParams.zeros(model)), image)
