import logging

from dataclasses import dataclass, replace
from concurrent.futures import ProcessPoolExecutor

from app.core.rng import Rng
from app.data.bags import Bag
from app.data.builder import build_bags
from app.data.folds import FoldPlan, Role, make_folds
from app.data.manifest import Manifest
from app.errors import FoldError
from app.metrics import MetricsReport, mean_report
from app.settings import Settings
from app.train.checkpoint import Checkpoint
from app.train.trainer import TrainHistory, evaluate, train_fold


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    report: MetricsReport
    history: TrainHistory


@dataclass(frozen=True)
class CrossValidationResult:
    """
    Per-fold test metrics, in fold order, plus the plan they came from.
    """

    plan: FoldPlan
    folds: tuple[FoldResult, ...]

    @property
    def reports(self) -> list[MetricsReport]:
        return [f.report for f in self.folds]

    @property
    def mean(self) -> dict[str, float | None]:
        return mean_report(self.reports)


def fold_plan(manifest: Manifest, settings: Settings) -> FoldPlan:
    return make_folds(
        list(manifest.entries), settings.data.folds, settings.data.validation_fraction,
        Rng(settings.train.seed),
    )


def fold_bags(manifest: Manifest, plan: FoldPlan, fold: int, settings: Settings, roles=tuple(Role)) -> dict[Role, list[Bag]]:
    data = settings.data.with_layout(manifest.layout)
    detector = data.detector()
    return {role: build_bags(manifest, plan, fold, role, data.layout, detector, data.jobs) for role in roles}


def train_on_fold(
    manifest: Manifest,
    plan: FoldPlan,
    fold: int,
    settings: Settings,
    bags: dict[Role, list[Bag]] | None = None,
) -> tuple[Checkpoint, TrainHistory]:
    """
    Train a fresh model on the training patients of one fold.

    The fold's run seed is the configured seed XOR the fold index. The
    checkpoint records the patch protocol, white filter included.
    """
    data = settings.data.with_layout(manifest.layout)
    if bags is None:
        bags = fold_bags(manifest, plan, fold, settings, (Role.TRAIN, Role.VAL))
    config = replace(settings.train, seed=settings.train.seed ^ fold)
    model = settings.model.classifier(data.patch_size)
    layout = {**data.layout.to_dict(), "white_level": data.white_level, "max_white_fraction": data.max_white_fraction}
    return train_fold(bags[Role.TRAIN], bags[Role.VAL], config, model, layout)


def run_fold(manifest: Manifest, plan: FoldPlan, fold: int, settings: Settings) -> FoldResult:
    """
    Train on one fold and score the model on the fold's test patients.
    """
    bags = fold_bags(manifest, plan, fold, settings)
    checkpoint, history = train_on_fold(manifest, plan, fold, settings, bags)
    _, report = evaluate(checkpoint, bags[Role.TEST])
    logger.info(
        f"Fold {fold}: accuracy {report.accuracy:.3f}, precision {report.precision:.3f}, "
        f"recall {report.recall:.3f}, F-score {report.f_score:.3f}, AUC {report.auc}"
    )
    return FoldResult(fold, report, history)


def _run_fold_job(args) -> FoldResult:
    try:
        return run_fold(*args)
    except Exception as e:
        raise FoldError(args[2], e) from e


def cross_validate(manifest: Manifest, settings: Settings, k: int | None = None, jobs: int = 1) -> CrossValidationResult:
    """
    k-fold cross-validation: one freshly initialized model per fold.

    Args:
        manifest (Manifest): Dataset.
        settings (Settings): Run configuration.
        k (int): Fold count; settings.data.folds when None.
        jobs (int): Folds trained in parallel worker processes; results keep fold order.

    Returns:
        CrossValidationResult: Per-fold reports and their mean.
    """
    if k is not None:
        settings = replace(settings, data=replace(settings.data, folds=k))
    plan = fold_plan(manifest, settings)
    jobs_args = [(manifest, plan, fold, settings) for fold in range(plan.k)]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold_job, jobs_args))
    else:
        results = [_run_fold_job(args) for args in jobs_args]

    return CrossValidationResult(plan, tuple(results))
