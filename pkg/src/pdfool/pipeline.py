"""Fitting the pieces of an attack on one training fold."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .attack import (
    AdversarialModel,
    AllocatorClassifier,
    CompensationTable,
    ExtrapolationClassifier,
    LambdaRho,
    TargetPd,
    build_adversarial_multi,
    build_adversarial_single,
    default_multiplier,
    estimate_lambda_rho,
    generate_augmenting_sample,
    solve_gamma,
    train_allocator,
    train_extrapolation_classifier,
)
from .data import Dataset
from .errors import ConfigError
from .explain import GridSpec, PermutedPdData, build_permuted_pd_data, row_order_mean, select_grid
from .learner import MlpConfig, Predictor, fit_linear, train_mlp


def derive_seed(root: int, *keys) -> int:
    """Independent per-stage seed from one root seed and a tuple of stage keys."""
    spawn = tuple(zlib.crc32(str(k).encode()) for k in keys)
    return int(np.random.SeedSequence(int(root), spawn_key=spawn).generate_state(1)[0])


@dataclass(frozen=True)
class TargetSpec:
    """How to build one feature's grid and target PD curve.

    ``kind`` is ``flat`` (at ``level``, default the mean prediction of f on
    the training rows), ``linear`` (``slope`` and ``intercept``; the default
    intercept puts the line through the feature mean at the mean prediction)
    or ``explicit`` (``values``, one per grid point).
    ``grid_policy`` ``auto`` uses quantiles for continuous features and all
    observed values otherwise.
    """

    feature: str
    kind: str = "flat"
    level: float | None = None
    slope: float = 0.0
    intercept: float | None = None
    values: tuple[float, ...] | None = None
    grid_policy: str = "auto"
    n_quantiles: int = 20
    grid_values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("flat", "linear", "explicit"):
            raise ConfigError(f"unknown target kind {self.kind!r} for {self.feature!r}")
        if self.kind == "explicit" and self.values is None:
            raise ConfigError(f"explicit target for {self.feature!r} needs values")

    def grid(self, train: Dataset) -> GridSpec:
        policy = self.grid_policy
        if policy == "auto":
            policy = "quantile" if train.feature(self.feature).kind == "continuous" else "all_unique"
        return select_grid(train, self.feature, policy, self.n_quantiles, self.grid_values)

    def resolve(self, train: Dataset, grid: GridSpec, mean_prediction: float) -> TargetPd:
        if self.kind == "flat":
            level = mean_prediction if self.level is None else self.level
            return TargetPd.flat_at(grid, level)
        if self.kind == "linear":
            intercept = self.intercept
            if intercept is None:
                col = train.rows[:, train.index(self.feature)]
                intercept = mean_prediction - self.slope * float(np.mean(col))
            return TargetPd.linear(grid, self.slope, intercept)
        self.check_explicit(grid)
        return TargetPd(self.feature, grid, np.asarray(self.values, dtype=np.float64))

    def check_explicit(self, grid: GridSpec) -> None:
        if self.kind == "explicit" and len(self.values) != len(grid):
            raise ConfigError(
                f"explicit target for {self.feature!r} has {len(self.values)} values "
                f"but its grid has {len(grid)}"
            )


SIM_F = MlpConfig((20, 10, 1), "regression", learn_rate=0.01, batch_size=128, max_epochs=60)
SIM_C = MlpConfig(
    (20, 10, 1), "binary", learn_rate=0.01, batch_size=1024,
    max_epochs=40, class_weights=(10.0, 1.0),
)
SIM_ALLOCATOR = MlpConfig(
    (20, 10, 3), "multiclass", learn_rate=0.03, batch_size=512, max_epochs=60
)


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to fit and evaluate an attack on one fold.

    ``f_config=None`` fits an ordinary-least-squares f instead of an MLP.
    The allocator's output width is forced to ``len(targets) + 1``.
    """

    targets: tuple[TargetSpec, ...]
    f_config: MlpConfig | None = SIM_F
    classifier: MlpConfig = SIM_C
    allocator: MlpConfig = SIM_ALLOCATOR
    threshold: float = 0.955
    multiplier: int | None = None
    seed: int = 0
    folds: int = 5
    pfi_repeats: int = 0
    pfi_loss: str = "mse"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ConfigError("at least one targeted feature is required")
        names = [t.feature for t in self.targets]
        if len(set(names)) != len(names):
            raise ConfigError("targeted features must be distinct")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")

    @property
    def targeted_features(self) -> list[str]:
        return [t.feature for t in self.targets]

    def allocator_config(self) -> MlpConfig:
        widths = self.allocator.layer_widths[:-1] + (len(self.targets) + 1,)
        return replace(self.allocator, layer_widths=widths, task="multiclass")

    def check_schema(self, dataset: Dataset) -> None:
        for t in self.targets:
            if t.feature not in dataset.feature_names:
                raise ConfigError(f"targeted feature {t.feature!r} not in schema {dataset.feature_names}")


def fit_original(train: Dataset, config: StudyConfig, fold: int = 0) -> Predictor:
    if config.f_config is None:
        return fit_linear(train)
    cfg = replace(config.f_config, seed=derive_seed(config.seed, "f", fold))
    return train_mlp(train, cfg)


def fit_extrapolation(train: Dataset, config: StudyConfig, fold: int = 0) -> ExtrapolationClassifier:
    mult = config.multiplier or default_multiplier(train.n)
    aug = generate_augmenting_sample(train, mult, derive_seed(config.seed, "augment", fold))
    cfg = replace(config.classifier, seed=derive_seed(config.seed, "c", fold))
    return train_extrapolation_classifier(train, aug, cfg, config.threshold)


@dataclass
class FittedAttack:
    model: AdversarialModel
    targets: dict[str, TargetPd]
    permuted: dict[str, PermutedPdData]
    lambda_rho: dict[str, LambdaRho]
    mean_prediction: float
    train: Dataset = field(repr=False)

    @property
    def compensation(self) -> CompensationTable:
        return self.model.compensation


def resolve_targets(train: Dataset, f: Predictor, config: StudyConfig) -> tuple[dict[str, TargetPd], float]:
    config.check_schema(train)
    mean_pred = float(row_order_mean(f.predict(train.rows)))
    targets = {}
    for spec in config.targets:
        targets[spec.feature] = spec.resolve(train, spec.grid(train), mean_pred)
    return targets, mean_pred


def fit_attack(
    train: Dataset,
    f: Predictor,
    c: ExtrapolationClassifier,
    config: StudyConfig,
    fold: int = 0,
    allocator: AllocatorClassifier | None = None,
) -> FittedAttack:
    """Per-feature compensation for every target, plus the allocator when two or more are targeted."""
    targets, mean_pred = resolve_targets(train, f, config)
    comp = CompensationTable()
    permuted, lr = {}, {}
    for feat, target in targets.items():
        perm = build_permuted_pd_data(train, target.grid)
        permuted[feat] = perm
        lr[feat] = estimate_lambda_rho(perm, c, f)
        comp.add(solve_gamma(target, lr[feat]))
    feats = config.targeted_features
    if len(feats) == 1:
        model = build_adversarial_single(f, c, comp, feats[0])
    else:
        if allocator is None:
            cfg = replace(config.allocator_config(), seed=derive_seed(config.seed, "allocator", fold))
            allocator = train_allocator(train, [permuted[f_] for f_ in feats], c, cfg)
        model = build_adversarial_multi(f, c, allocator, comp, feats)
    return FittedAttack(model, targets, permuted, lr, mean_pred, train)


def heldout_permutations(fitted: FittedAttack, test: Dataset) -> dict[str, PermutedPdData]:
    """Held-out rows permuted over the grids fitted on the training fold."""
    return {feat: build_permuted_pd_data(test, t.grid) for feat, t in fitted.targets.items()}

