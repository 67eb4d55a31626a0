"""Adversarial manipulation of PD plots.

The composite model ``a(x)`` passes rows that look real to the original
predictor ``f`` and answers rows that an extrapolation classifier ``c`` flags
with compensating outputs chosen so the averaged PD curve of a targeted
feature lands on an attacker-chosen target. With several targeted features an
allocator ``c1`` decides which feature's compensating outputs a flagged row
gets, or sends it back to ``f``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, SchemaError, UnreachableTargetError
from .explain import (
    GridSpec,
    PdCurve,
    PermutedPdData,
    permuted_predictions,
    row_order_sum,
)
from .learner import MlpConfig, Predictor, load_predictor, save_predictor, train_mlp

G_NO = 0


def default_multiplier(n: int) -> int:
    return 30 if n >= 50_000 else 100


# ------------------------------------------------------------ augmenting sample


@dataclass(frozen=True)
class AugmentingSample:
    rows: np.ndarray
    multiplier: int
    seed: int


def generate_augmenting_sample(dataset: Dataset, multiplier: int, seed: int) -> AugmentingSample:
    """Draw ``multiplier * n`` rows, every cell independent.

    Categorical cells are uniform over the schema's categories; numeric cells
    are uniform over the feature's observed unique values, so no unobserved
    value inside the training range can appear.
    """
    if multiplier < 1:
        raise ConfigError("multiplier must be >= 1")
    if dataset.n < 1:
        raise DataError("cannot augment an empty dataset")
    rng = np.random.default_rng(seed)
    size = multiplier * dataset.n
    cols = []
    for j, feat in enumerate(dataset.schema):
        if feat.is_categorical:
            cols.append(rng.integers(0, len(feat.categories), size).astype(np.float64))
        else:
            observed = np.unique(dataset.rows[:, j])
            cols.append(observed[rng.integers(0, len(observed), size)])
    rows = np.column_stack(cols)
    rows.setflags(write=False)
    return AugmentingSample(rows, multiplier, seed)


# ------------------------------------------------------- extrapolation classifier


@dataclass(frozen=True)
class ExtrapolationClassifier:
    """Binary model (1 = extrapolation) plus a decision threshold; ties flag."""

    model: Predictor
    threshold: float

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")

    @property
    def n_features(self) -> int:
        return self.model.n_features

    def probability(self, X) -> np.ndarray:
        return np.asarray(self.model.predict(X), dtype=np.float64)

    def classify(self, X) -> np.ndarray:
        return self.probability(X) >= self.threshold

    def with_threshold(self, threshold: float) -> "ExtrapolationClassifier":
        return replace(self, threshold=threshold)


def train_extrapolation_classifier(
    dataset: Dataset,
    augmenting: AugmentingSample,
    learner_config: MlpConfig,
    threshold: float,
) -> ExtrapolationClassifier:
    if learner_config.task != "binary":
        raise ConfigError("the extrapolation classifier must use the binary task")
    rows = np.vstack([dataset.rows, augmenting.rows])
    labels = np.concatenate([np.zeros(dataset.n), np.ones(len(augmenting.rows))])
    model = train_mlp(Dataset(dataset.schema, rows, labels, target_name="extrapolated"), learner_config)
    return ExtrapolationClassifier(model, threshold)


# --------------------------------------------------------- lambda / rho / gamma


@dataclass(frozen=True)
class LambdaRho:
    """Per grid value: share of permuted rows flagged, and mean f over the rest.

    Where every row is flagged, rho is 0.0; it is multiplied by a zero weight
    wherever it is used.
    """

    feature: str
    column: int
    grid: GridSpec
    lam: np.ndarray
    rho: np.ndarray


def lambda_rho_from_arrays(
    feature: str, column: int, grid: GridSpec, flags: np.ndarray, f_values: np.ndarray
) -> LambdaRho:
    flags = np.asarray(flags, dtype=np.float64)
    n = flags.shape[1]
    lam = row_order_sum(flags, axis=1) / n
    kept = row_order_sum(f_values * (1.0 - flags), axis=1)
    denom = n - n * lam
    rho = np.zeros_like(lam)
    ok = lam < 1.0
    rho[ok] = kept[ok] / denom[ok]
    return LambdaRho(feature, column, grid, lam, rho)


def estimate_lambda_rho(permuted: PermutedPdData, c: ExtrapolationClassifier, f: Predictor) -> LambdaRho:
    probs = permuted_predictions(c.model, permuted)
    f_values = permuted_predictions(f, permuted)
    return lambda_rho_from_arrays(
        permuted.feature, permuted.column, permuted.grid, probs >= c.threshold, f_values
    )


@dataclass(frozen=True)
class TargetPd:
    feature: str
    grid: GridSpec
    desired: np.ndarray

    def __post_init__(self):
        d = np.array(self.desired, dtype=np.float64).reshape(-1)
        if len(d) != len(self.grid):
            raise ConfigError(
                f"target for {self.feature!r} has {len(d)} values, grid has {len(self.grid)}"
            )
        if not np.all(np.isfinite(d)):
            raise ConfigError(f"target for {self.feature!r} has non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "desired", d)

    @classmethod
    def flat_at(cls, grid: GridSpec, level: float) -> "TargetPd":
        return cls(grid.feature, grid, np.full(len(grid), float(level)))

    @classmethod
    def linear(cls, grid: GridSpec, slope: float, intercept: float) -> "TargetPd":
        return cls(grid.feature, grid, intercept + slope * grid.values)

    def as_curve(self) -> PdCurve:
        return PdCurve(self.feature, self.grid, self.desired, "target")


@dataclass(frozen=True)
class FeatureCompensation:
    """Compensating outputs for one targeted feature, keyed by grid value."""

    feature: str
    column: int
    grid: GridSpec
    lam: np.ndarray
    rho: np.ndarray
    gamma: np.ndarray
    target: np.ndarray

    @property
    def categorical(self) -> bool:
        return self.grid.categorical

    def lookup(self, x) -> np.ndarray:
        """gamma at feature values ``x``.

        Numeric values off the grid are interpolated linearly between the
        neighbouring grid values and clamped to the end values outside the
        grid range. Categorical values must be grid members.
        """
        x = np.asarray(x, dtype=np.float64)
        g = self.grid.values
        if self.categorical:
            order = np.argsort(g)
            pos = np.searchsorted(g[order], x)
            pos = np.clip(pos, 0, len(g) - 1)
            hit = g[order][pos] == x
            if not hit.all():
                bad = x[~hit][0]
                raise SchemaError(f"category index {bad!r} of {self.feature!r} has no compensating output")
            return self.gamma[order][pos]
        return np.interp(x, g, self.gamma)

    def identity_residual(self) -> np.ndarray:
        """(1 - lambda) * rho + lambda * gamma - target at every grid value."""
        return (1.0 - self.lam) * self.rho + self.lam * self.gamma - self.target

    def out_of_range(self, low: float, high: float) -> np.ndarray:
        return self.grid.values[(self.gamma < low) | (self.gamma > high)]


def solve_gamma(target: TargetPd, lambda_rho: LambdaRho) -> FeatureCompensation:
    if target.feature != lambda_rho.feature or not np.array_equal(
        target.grid.values, lambda_rho.grid.values
    ):
        raise ConfigError(f"target and permutation grid for {target.feature!r} differ")
    lam, rho = lambda_rho.lam, lambda_rho.rho
    zero = lam <= 0.0
    if zero.any():
        raise UnreachableTargetError(target.feature, [float(v) for v in target.grid.values[zero]])
    gamma = (target.desired - (1.0 - lam) * rho) / lam
    return FeatureCompensation(
        target.feature, lambda_rho.column, target.grid, lam.copy(), rho.copy(), gamma, target.desired.copy()
    )


@dataclass
class CompensationTable:
    entries: dict[str, FeatureCompensation] = field(default_factory=dict)

    def add(self, entry: FeatureCompensation) -> None:
        self.entries[entry.feature] = entry

    def __getitem__(self, feature: str) -> FeatureCompensation:
        try:
            return self.entries[feature]
        except KeyError:
            raise ConfigError(f"no compensation stored for {feature!r}") from None

    def __contains__(self, feature: str) -> bool:
        return feature in self.entries

    @property
    def features(self) -> list[str]:
        return list(self.entries)


# ------------------------------------------------------------------- allocator


@dataclass(frozen=True)
class AllocatorClassifier:
    """(q+1)-class model: class 0 is G_no, class k is the k-th targeted feature."""

    model: Predictor

    @property
    def n_classes(self) -> int:
        return self.model.n_classes

    @property
    def n_features(self) -> int:
        return self.model.n_features

    def allocate(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.empty(0, dtype=np.int64)
        return np.argmax(self.model.predict_proba(X), axis=1)


def flagged_rows(permuted: PermutedPdData, c: ExtrapolationClassifier) -> np.ndarray:
    parts = []
    for _, X in permuted.blocks():
        parts.append(X[c.classify(X)])
    return np.vstack(parts) if parts else np.empty((0, permuted.dataset.p))


def train_allocator(
    dataset: Dataset,
    permuted_sets: Sequence[PermutedPdData],
    c: ExtrapolationClassifier,
    learner_config: MlpConfig,
) -> AllocatorClassifier:
    """Fit c1 on real rows (label 0) and each targeted feature's flagged permuted rows (label k)."""
    q = len(permuted_sets)
    if q < 2:
        raise ConfigError("the allocator needs at least two targeted features")
    if learner_config.task != "multiclass" or learner_config.layer_widths[-1] != q + 1:
        raise ConfigError(f"allocator config must be multiclass with {q + 1} outputs")
    rows = [dataset.rows]
    labels = [np.zeros(dataset.n)]
    for k, perm in enumerate(permuted_sets, start=1):
        flagged = flagged_rows(perm, c)
        if len(flagged) == 0:
            raise UnreachableTargetError(perm.feature, [float(v) for v in perm.grid.values])
        rows.append(flagged)
        labels.append(np.full(len(flagged), float(k)))
    data = Dataset(dataset.schema, np.vstack(rows), np.concatenate(labels), target_name="allocation")
    return AllocatorClassifier(train_mlp(data, learner_config))


# ------------------------------------------------------------- composite model


@dataclass(frozen=True)
class AdversarialModel:
    original: Predictor
    extrapolation: ExtrapolationClassifier
    compensation: CompensationTable
    targeted_features: tuple[str, ...]
    allocator: AllocatorClassifier | None = None

    def __post_init__(self):
        object.__setattr__(self, "targeted_features", tuple(self.targeted_features))
        for feat in self.targeted_features:
            self.compensation[feat]
        if self.allocator is None and len(self.targeted_features) != 1:
            raise ConfigError("single-feature mode needs exactly one targeted feature")
        if self.allocator is not None and self.allocator.n_classes != len(self.targeted_features) + 1:
            raise ConfigError(
                f"allocator has {self.allocator.n_classes} classes, expected "
                f"{len(self.targeted_features) + 1}"
            )

    @property
    def n_features(self) -> int:
        return self.original.n_features

    @property
    def threshold(self) -> float:
        return self.extrapolation.threshold

    def route(self, X) -> np.ndarray:
        """-1 where the row passes through to ``f``, else the targeted-feature index."""
        X = np.asarray(X, dtype=np.float64)
        flags = self.extrapolation.classify(X)
        route = np.full(len(X), -1, dtype=np.int64)
        if self.allocator is None:
            route[flags] = 0
        else:
            route[flags] = self.allocator.allocate(X[flags]) - 1
        return route

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.array(self.original.predict(X), dtype=np.float64)
        route = self.route(X)
        for k, feat in enumerate(self.targeted_features):
            sel = route == k
            if sel.any():
                entry = self.compensation[feat]
                out[sel] = entry.lookup(X[sel, entry.column])
        return out

    def with_threshold(self, threshold: float) -> "AdversarialModel":
        return replace(self, extrapolation=self.extrapolation.with_threshold(threshold))


def build_adversarial_single(
    f: Predictor, c: ExtrapolationClassifier, comp: CompensationTable, feature: str
) -> AdversarialModel:
    return AdversarialModel(f, c, comp, (feature,))


def build_adversarial_multi(
    f: Predictor,
    c: ExtrapolationClassifier,
    allocator: AllocatorClassifier,
    comp: CompensationTable,
    targeted_features: Sequence[str],
) -> AdversarialModel:
    return AdversarialModel(f, c, comp, tuple(targeted_features), allocator)


def adversarial_predict_batch(a: AdversarialModel, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    if X.size == 0:
        return np.empty(0)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != a.n_features:
        raise SchemaError(f"model expects {a.n_features} features, got shape {X.shape}")
    return a.predict(X)


# --------------------------------------------------------------- serialization

MANIFEST_HEADER = "pdfool-attack v1"


def save_attack(a: AdversarialModel, directory, prefix: str = "") -> Path:
    """Write model files and a plain-text manifest; return the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"original": f"{prefix}f.model", "extrapolation": f"{prefix}c.model"}
    save_predictor(a.original, d / files["original"])
    save_predictor(a.extrapolation.model, d / files["extrapolation"])
    if a.allocator is not None:
        files["allocator"] = f"{prefix}c1.model"
        save_predictor(a.allocator.model, d / files["allocator"])
    lines = [
        MANIFEST_HEADER,
        f"threshold = {a.threshold!r}",
        f"original = {files['original']}",
        f"extrapolation = {files['extrapolation']}",
        f"allocator = {files.get('allocator', 'none')}",
        f"targeted = {','.join(a.targeted_features)}",
    ]
    for feat in a.targeted_features:
        e = a.compensation[feat]
        lines += [
            "",
            f"[feature {feat}]",
            f"column = {e.column}",
            f"categorical = {str(e.categorical).lower()}",
            f"grid_source = {e.grid.source}",
            "# grid_value lambda rho gamma target",
        ]
        for row in zip(e.grid.values, e.lam, e.rho, e.gamma, e.target):
            lines.append("entry = " + " ".join(repr(float(v)) for v in row))
    path = d / f"{prefix}attack_manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def load_attack(path) -> AdversarialModel:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise DataError(f"{path}: not an attack manifest")
    top: dict[str, str] = {}
    sections: dict[str, dict] = {}
    current = None
    for lineno, raw in enumerate(lines[1:], 2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[feature ") and line.endswith("]"):
            current = sections.setdefault(line[9:-1], {"entries": []})
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if current is None:
            top[key] = value
        elif key == "entry":
            current["entries"].append([float(t) for t in value.split()])
        else:
            current[key] = value
    d = path.parent
    f = load_predictor(d / top["original"])
    c = ExtrapolationClassifier(load_predictor(d / top["extrapolation"]), float(top["threshold"]))
    allocator = None
    if top.get("allocator", "none") != "none":
        allocator = AllocatorClassifier(load_predictor(d / top["allocator"]))
    comp = CompensationTable()
    targeted = [t for t in top["targeted"].split(",") if t]
    for feat in targeted:
        s = sections[feat]
        arr = np.array(s["entries"])
        grid = GridSpec(feat, arr[:, 0], s.get("grid_source", "explicit"), s["categorical"] == "true")
        comp.add(FeatureCompensation(feat, int(s["column"]), grid, arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]))
    return AdversarialModel(f, c, comp, tuple(targeted), allocator)
