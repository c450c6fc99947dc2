import logging

from pathlib import Path
from concurrent.futures import ThreadPoolExecutor

from app.data.bags import Bag
from app.data.folds import FoldPlan, Role
from app.data.manifest import DatasetLayout, Manifest, ManifestEntry
from app.data.patches import ExtractMode, extract_subimages, tile_patches
from app.data.slides import load_slide
from app.filters.threshold import WhiteThresholdFilter


logger = logging.getLogger(__name__)


class BagBuilder:
    """
    Turns manifest images into white-filtered bags following the patch protocol.

    Training and validation images yield one bag per overlapping subimage,
    test images one bag from the centred subimage. A subimage whose every
    patch is background is dropped with a warning.

    Attributes:
        layout (DatasetLayout): Patch and subimage geometry.
        detector (WhiteThresholdFilter): Background filter.
        jobs (int): Worker threads for per-image ingestion.
    """

    def __init__(self, layout: DatasetLayout, detector: WhiteThresholdFilter | None = None, jobs: int = 1):
        self.layout = layout
        self.detector = detector or WhiteThresholdFilter()
        self.jobs = max(1, jobs)

    def image_bags(self, entry: ManifestEntry, role: Role) -> list[Bag]:
        """
        Bags cut from one manifest image.
        """
        image = load_slide(entry.path, entry.patient_id, entry.label)
        mode = ExtractMode.TEST if Role(role) == Role.TEST else ExtractMode.TRAIN
        subimages = extract_subimages(image, mode, self.layout.subimage_size, self.layout.train_subimages)
        stem = Path(entry.path).stem

        bags = []
        for subimage in subimages:
            bag_id = f"{entry.patient_id}/{stem}/s{subimage.index}"
            patches = [p for p in tile_patches(subimage.pixels, self.layout.patch_size) if self.detector.keep(p.pixels)]
            if not patches:
                logger.warning(f"Dropping bag {bag_id}: every patch is background")
                continue
            bags.append(Bag(bag_id, entry.label, tuple(patches), entry.path, (subimage.x, subimage.y)))
        return bags

    def build(self, manifest: Manifest, plan: FoldPlan, fold: int, role: Role) -> list[Bag]:
        """
        All bags of the patients playing `role` in `fold`, in manifest order.
        """
        patients = plan.patients(fold, role)
        entries = [e for e in manifest.entries if e.patient_id in patients]
        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                per_image = list(pool.map(lambda e: self.image_bags(e, role), entries))
        else:
            per_image = [self.image_bags(e, role) for e in entries]
        bags = [bag for group in per_image for bag in group]
        logger.info(f"Fold {fold} {Role(role).value}: {len(bags)} bag(s) from {len(entries)} image(s)")
        return bags


def build_bags(
    manifest: Manifest,
    plan: FoldPlan,
    fold: int,
    role: Role,
    layout: DatasetLayout | None = None,
    detector: WhiteThresholdFilter | None = None,
    jobs: int = 1,
) -> list[Bag]:
    """
    Build the bags of one fold and role; the manifest's own layout wins over `layout`.
    """
    layout = manifest.layout or layout or DatasetLayout()
    return BagBuilder(layout, detector, jobs).build(manifest, plan, fold, role)
