"""Attack-quality metrics, fidelity reporting and threshold sweeps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import AdversarialModel, lambda_rho_from_arrays, solve_gamma
from .data import Dataset, FoldSplit
from .errors import DataError, DegenerateTargetError, UnreachableTargetError
from .explain import (
    PdCurve,
    build_permuted_pd_data,
    compute_pd,
    permuted_predictions,
    row_order_mean,
)
from .learner import Predictor
from .pipeline import (
    FittedAttack,
    StudyConfig,
    fit_extrapolation,
    fit_original,
    heldout_permutations,
    resolve_targets,
)

DEFAULT_THRESHOLDS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


def true_positive_rate(a: AdversarialModel, test_rows) -> float:
    """Share of rows whose prediction passes through to the original model.

    A row passes when c does not flag it or, with an allocator, when the
    allocator sends it to G_no.
    """
    X = np.asarray(test_rows, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise DataError("true_positive_rate needs a non-empty test set")
    return float(np.mean(a.route(X) < 0))


def _norm(v: np.ndarray, norm: str) -> float:
    if norm == "l2":
        return float(np.sqrt(np.sum(v * v)))
    if norm == "l1":
        return float(np.sum(np.abs(v)))
    if norm == "linf":
        return float(np.max(np.abs(v)))
    raise ValueError(f"unknown norm {norm!r}")


def accuracy_of_attack(original: PdCurve, adversarial: PdCurve, target: PdCurve, norm: str = "l2") -> float:
    """1 - |adversarial - target| / |original - target| over the grid."""
    g = original.grid.values
    if not (np.array_equal(g, adversarial.grid.values) and np.array_equal(g, target.grid.values)):
        raise DataError("accuracy_of_attack needs three curves on the same grid")
    num = _norm(adversarial.values - target.values, norm)
    den = _norm(original.values - target.values, norm)
    if den == 0.0:
        if num == 0.0:
            return 1.0
        raise DegenerateTargetError(
            f"original PD of {original.feature!r} already equals the target; accuracy undefined"
        )
    return 1.0 - num / den


@dataclass(frozen=True)
class FidelityReport:
    n_rows: int
    fraction_exact: float
    tpr: float


def fidelity_report(a: AdversarialModel, f: Predictor, test_rows) -> FidelityReport:
    """Share of rows where a(x) == f(x) bit-exactly, next to the TPR it must equal."""
    X = np.asarray(test_rows, dtype=np.float64)
    same = a.predict(X) == f.predict(X)
    return FidelityReport(len(X), float(np.mean(same)) if len(X) else 1.0, true_positive_rate(a, X) if len(X) else 1.0)


@dataclass
class AttackReport:
    tpr: float
    accuracy_of_attack: dict[str, float]
    threshold: float
    fold: int
    curves: dict[str, tuple[PdCurve, PdCurve, PdCurve]] = field(default_factory=dict, repr=False)
    status: str = "ok"

    def all_curves(self) -> list[PdCurve]:
        return [c for triple in self.curves.values() for c in triple]


def attack_report(
    fitted: FittedAttack, test: Dataset, fold: int = 0, norm: str = "l2"
) -> AttackReport:
    """Held-out evaluation: TPR on the test rows, PD curves on test rows permuted over the training grids."""
    a = fitted.model
    tpr = true_positive_rate(a, test.rows)
    acc, curves = {}, {}
    for feat, perm in heldout_permutations(fitted, test).items():
        orig = compute_pd(a.original, perm, "original")
        adv = compute_pd(a, perm, "adversarial")
        target = fitted.targets[feat].as_curve()
        curves[feat] = (orig, adv, target)
        acc[feat] = accuracy_of_attack(orig, adv, target, norm)
    return AttackReport(tpr, acc, a.threshold, fold, curves)


def in_sample_adversarial_pd(fitted: FittedAttack) -> dict[str, PdCurve]:
    """Adversarial PD recomputed on the rows the compensation was fitted on."""
    return {feat: compute_pd(fitted.model, perm, "adversarial") for feat, perm in fitted.permuted.items()}


# ------------------------------------------------------------------------ sweep


@dataclass
class SweepResult:
    thresholds: tuple[float, ...]
    reports: list[AttackReport]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("sweep thresholds must be strictly increasing")

    def rows(self) -> list[tuple[float, int, str, float, float, str]]:
        out = []
        for r in self.reports:
            for feat in r.curves or r.accuracy_of_attack:
                acc = r.accuracy_of_attack.get(feat, float("nan"))
                out.append((r.threshold, r.fold, feat, r.tpr, acc, r.status))
        return out

    def series(self, feature: str, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(tpr, accuracy) across thresholds for one feature and fold; failed points are NaN."""
        pts = [(t, tpr, acc) for t, f, feat, tpr, acc, _ in self.rows() if feat == feature and f == fold]
        pts.sort()
        return np.array([p[1] for p in pts]), np.array([p[2] for p in pts])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fold", "feature", "tpr", "accuracy", "status"])
            for t, fold, feat, tpr, acc, status in self.rows():
                w.writerow([repr(float(t)), fold, feat, repr(float(tpr)), repr(float(acc)), status])


def threshold_sweep(
    dataset: Dataset,
    config: StudyConfig,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    folds: FoldSplit | None = None,
    fold_indices: Sequence[int] | None = None,
    norm: str = "l2",
) -> SweepResult:
    """TPR and accuracy of attack per (threshold, fold, targeted feature).

    Each targeted feature is attacked on its own (no allocator). f and c are
    trained once per fold; c's probabilities are cached and re-thresholded,
    and the compensation is re-solved at every threshold. A threshold at which
    some grid value has no flagged rows is recorded with status
    ``unreachable`` and the sweep continues.
    """
    from .data import kfold_split

    thresholds = tuple(float(t) for t in thresholds)
    if any(not 0.0 < t < 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in (0, 1)")
    config.check_schema(dataset)
    if folds is None:
        folds = kfold_split(dataset, config.folds, config.seed)
    reports: list[AttackReport] = []
    results: dict[tuple[float, int, str], AttackReport] = {}
    for fold in fold_indices if fold_indices is not None else range(folds.k):
        train = dataset.subset(folds.train_indices(fold))
        test = dataset.subset(folds.test_indices(fold))
        f = fit_original(train, config, fold)
        c = fit_extrapolation(train, config, fold)
        targets, _ = resolve_targets(train, f, config)
        row_probs = c.probability(test.rows)
        for feat, target in targets.items():
            tr_perm = build_permuted_pd_data(train, target.grid)
            te_perm = build_permuted_pd_data(test, target.grid)
            p_tr = permuted_predictions(c.model, tr_perm)
            f_tr = permuted_predictions(f, tr_perm)
            p_te = permuted_predictions(c.model, te_perm)
            f_te = permuted_predictions(f, te_perm)
            orig = PdCurve(feat, target.grid, row_order_mean(f_te, axis=1), "original")
            tcurve = target.as_curve()
            for t in thresholds:
                tpr = float(np.mean(row_probs < t))
                lr = lambda_rho_from_arrays(feat, tr_perm.column, target.grid, p_tr >= t, f_tr)
                try:
                    comp = solve_gamma(target, lr)
                except UnreachableTargetError:
                    results[(t, fold, feat)] = AttackReport(
                        tpr, {feat: float("nan")}, t, fold, {}, status="unreachable"
                    )
                    continue
                adv_vals = np.where(p_te >= t, comp.gamma[:, None], f_te)
                adv = PdCurve(feat, target.grid, row_order_mean(adv_vals, axis=1), "adversarial")
                acc = accuracy_of_attack(orig, adv, tcurve, norm)
                results[(t, fold, feat)] = AttackReport(tpr, {feat: acc}, t, fold, {feat: (orig, adv, tcurve)})
    order = {feat: i for i, feat in enumerate(config.targeted_features)}
    for key in sorted(results, key=lambda k: (k[0], k[1], order[k[2]])):
        reports.append(results[key])
    return SweepResult(thresholds, reports)
