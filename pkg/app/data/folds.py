import math
import logging

import numpy as np

from enum import Enum
from dataclasses import dataclass
from sklearn.model_selection import StratifiedKFold

from app.core.rng import Rng
from app.data.manifest import ManifestEntry
from app.errors import ConfigurationError


logger = logging.getLogger(__name__)


class Role(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class FoldPlan:
    """
    Patient-level, label-stratified cross-validation plan.

    Attributes:
        k (int): Number of folds.
        assignment (dict[str, int]): Patient id -> test fold index.
        validation (dict[int, tuple[str]]): Fold index -> validation patient ids, drawn
            from that fold's training patients.
    """

    k: int
    assignment: dict[str, int]
    validation: dict[int, tuple[str, ...]]

    def patients(self, fold: int, role: Role) -> set[str]:
        """
        Patient ids playing `role` when `fold` is the test fold.
        """
        if not 0 <= fold < self.k:
            raise ConfigurationError(f"Fold index {fold} out of range for k={self.k}")
        role = Role(role)
        if role == Role.TEST:
            return {p for p, f in self.assignment.items() if f == fold}
        validation = set(self.validation[fold])
        if role == Role.VAL:
            return validation
        return {p for p, f in self.assignment.items() if f != fold and p not in validation}

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "assignment": dict(sorted(self.assignment.items())),
            "validation": {str(f): list(ids) for f, ids in sorted(self.validation.items())},
        }


def patient_labels(entries: list[ManifestEntry]) -> dict[str, int]:
    """
    One label per patient; a patient with any positive image is positive.
    """
    labels: dict[str, int] = {}
    for entry in entries:
        labels[entry.patient_id] = max(labels.get(entry.patient_id, 0), entry.label)
    return labels


def _validation_ids(patients: list[str], labels: dict[str, int], fraction: float, generator: np.random.Generator) -> tuple[str, ...]:
    chosen = []
    by_class = {c: sorted(p for p in patients if labels[p] == c) for c in (0, 1)}
    for c, members in by_class.items():
        # Rounded up, but never the last training patient of a class.
        n = min(math.ceil(fraction * len(members)), len(members) - 1)
        if n > 0:
            chosen += list(generator.choice(members, size=n, replace=False))
    if not chosen and fraction > 0 and len(patients) > 1:
        largest = max(by_class.values(), key=len)
        chosen.append(largest[int(generator.integers(len(largest)))])
    return tuple(sorted(str(p) for p in chosen))


def make_folds(entries: list[ManifestEntry], k: int = 4, validation_fraction: float = 0.1, rng: Rng | None = None) -> FoldPlan:
    """
    Assign patients to k label-stratified folds and pick validation patients per fold.

    Args:
        entries (list[ManifestEntry]): Manifest rows.
        k (int): Fold count, >= 2.
        validation_fraction (float): Share of each fold's training patients held out
            for validation (per class, rounded up).
        rng (Rng): Source of the shuffles.

    Returns:
        FoldPlan: Deterministic given rng.

    Raises:
        ConfigurationError: If k < 2 or a class has fewer than k patients.
    """
    rng = rng or Rng(0)
    if k < 2:
        raise ConfigurationError(f"Cross-validation needs k >= 2, got {k}")
    if not 0.0 <= validation_fraction < 1.0:
        raise ConfigurationError(f"validation_fraction must lie in [0, 1), got {validation_fraction}")

    labels = patient_labels(entries)
    patients = sorted(labels)
    y = np.array([labels[p] for p in patients])
    for c in (0, 1):
        if np.count_nonzero(y == c) < k:
            raise ConfigurationError(f"Class {c} has {np.count_nonzero(y == c)} patient(s), fewer than k={k}")

    seed = int(rng.derive("folds").generator().integers(2**31 - 1))
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    assignment = {}
    for fold, (_, test_index) in enumerate(splitter.split(np.zeros(len(patients)), y)):
        for i in test_index:
            assignment[patients[i]] = fold

    validation = {}
    for fold in range(k):
        training = [p for p in patients if assignment[p] != fold]
        generator = rng.derive("validation", fold).generator()
        validation[fold] = _validation_ids(training, labels, validation_fraction, generator)
        logger.debug(f"Fold {fold}: {len(patients) - len(training)} test, {len(validation[fold])} validation patient(s)")

    return FoldPlan(k=k, assignment=assignment, validation=validation)
