"""Cross-validated attack study: fit on k-1 folds, evaluate on the held-out fold."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, FoldSplit, kfold_split
from .explain import PfiResult, compute_pfi
from .metrics import AttackReport, FidelityReport, attack_report, fidelity_report
from .learner import Predictor
from .pipeline import FittedAttack, StudyConfig, derive_seed, fit_attack, fit_extrapolation, fit_original


@dataclass
class FoldResult:
    fold: int
    fitted: FittedAttack = field(repr=False)
    report: AttackReport
    fidelity: FidelityReport
    pfi_before: PfiResult | None = None
    pfi_after: PfiResult | None = None


@dataclass
class StudyResult:
    config: StudyConfig
    folds: list[FoldResult]

    @property
    def mean_tpr(self) -> float:
        return float(np.mean([r.report.tpr for r in self.folds]))

    def mean_accuracy(self, feature: str) -> float:
        return float(np.mean([r.report.accuracy_of_attack[feature] for r in self.folds]))


def run_fold(
    dataset: Dataset,
    split: FoldSplit,
    fold: int,
    config: StudyConfig,
    f: Predictor | None = None,
    norm: str = "l2",
) -> FoldResult:
    """Fit on every fold but ``fold`` and evaluate on ``fold``.

    ``f`` replaces the fitted original model when given (an externally
    trained predictor is then shared by all folds).
    """
    train = dataset.subset(split.train_indices(fold))
    test = dataset.subset(split.test_indices(fold))
    if f is None:
        f = fit_original(train, config, fold)
    c = fit_extrapolation(train, config, fold)
    fitted = fit_attack(train, f, c, config, fold)
    report = attack_report(fitted, test, fold, norm)
    fid = fidelity_report(fitted.model, f, test.rows)
    before = after = None
    if config.pfi_repeats:
        seed = derive_seed(config.seed, "pfi", fold)
        before = compute_pfi(f, test, config.pfi_loss, config.pfi_repeats, seed)
        after = compute_pfi(fitted.model, test, config.pfi_loss, config.pfi_repeats, seed)
    return FoldResult(fold, fitted, report, fid, before, after)


def run_study(
    dataset: Dataset,
    config: StudyConfig,
    split: FoldSplit | None = None,
    fold_indices: Sequence[int] | None = None,
) -> StudyResult:
    config.check_schema(dataset)
    if split is None:
        split = kfold_split(dataset, config.folds, config.seed)
    folds = fold_indices if fold_indices is not None else range(split.k)
    return StudyResult(config, [run_fold(dataset, split, k, config) for k in folds])
