import logging

import yaml
import pandas as pd

from pathlib import Path
from dataclasses import dataclass, fields

from app.errors import ConfigurationError, IngestionError


logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["path", "label", "patient_id"]
LAYOUT_FILE = "dataset.yaml"


@dataclass(frozen=True)
class DatasetLayout:
    """
    Geometry of the patch protocol.

    Attributes:
        patch_size (int): Side of a square patch in pixels.
        subimage_size (int): Side of a square subimage; a multiple of patch_size.
        train_subimages (int): Overlapping subimages cut per training image.
    """

    patch_size: int = 96
    subimage_size: int = 768
    train_subimages: int = 8

    def __post_init__(self):
        if self.patch_size < 1 or self.subimage_size < self.patch_size:
            raise ConfigurationError(f"Invalid layout: patch {self.patch_size}, subimage {self.subimage_size}")
        if self.subimage_size % self.patch_size:
            raise ConfigurationError(
                f"subimage_size {self.subimage_size} is not a multiple of patch_size {self.patch_size}"
            )
        if self.train_subimages < 1:
            raise ConfigurationError(f"train_subimages must be >= 1, got {self.train_subimages}")

    @property
    def grid(self) -> int:
        return self.subimage_size // self.patch_size

    def to_dict(self) -> dict:
        return {"patch_size": self.patch_size, "subimage_size": self.subimage_size,
                "train_subimages": self.train_subimages}


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    patient_id: str


@dataclass(frozen=True)
class Manifest:
    """
    Parsed manifest: one entry per image, paths resolved against the manifest directory.

    Attributes:
        entries (tuple[ManifestEntry]): Images in file order.
        layout (DatasetLayout | None): Layout declared by a dataset.yaml next to the manifest.
    """

    entries: tuple[ManifestEntry, ...]
    layout: DatasetLayout | None = None

    def __len__(self) -> int:
        return len(self.entries)


def read_manifest(path: str | Path) -> Manifest:
    """
    Load a `path,label,patient_id` CSV manifest.

    Raises:
        IngestionError: If the file is missing, malformed or has labels outside {0, 1}.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"path": str, "patient_id": str}, encoding="utf-8")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestionError(f"Cannot read manifest '{path}': {e}") from e

    if list(frame.columns) != MANIFEST_COLUMNS:
        raise IngestionError(f"Manifest '{path}' must have header {','.join(MANIFEST_COLUMNS)}")
    if frame.isna().any().any():
        raise IngestionError(f"Manifest '{path}' has empty cells")
    if not frame["label"].isin([0, 1]).all():
        raise IngestionError(f"Manifest '{path}' has labels outside {{0, 1}}")

    entries = tuple(
        ManifestEntry(path=str((path.parent / row.path).resolve()), label=int(row.label), patient_id=str(row.patient_id))
        for row in frame.itertuples(index=False)
    )
    logger.info(f"Manifest {path}: {len(entries)} image(s), {frame['patient_id'].nunique()} patient(s)")
    return Manifest(entries=entries, layout=read_layout(path.parent / LAYOUT_FILE))


def read_layout(path: Path) -> DatasetLayout | None:
    if not path.exists():
        return None
    with open(path, "r") as f:
        raw = yaml.safe_load(f) or {}
    unknown = set(raw) - {f.name for f in fields(DatasetLayout)}
    if unknown:
        raise ConfigurationError(f"Unknown key(s) in {path}: {', '.join(sorted(unknown))}")
    return DatasetLayout(**raw)


def write_manifest(path: str | Path, entries: list[ManifestEntry], layout: DatasetLayout | None = None):
    """
    Write a manifest CSV (paths relative to its directory) and, optionally, its dataset.yaml.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(e.path, e.label, e.patient_id) for e in entries],
        columns=MANIFEST_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    if layout is not None:
        with open(path.parent / LAYOUT_FILE, "w") as f:
            yaml.safe_dump(layout.to_dict(), f, sort_keys=True)
