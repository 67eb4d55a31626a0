"""Grid selection, permuted PD data, and the PD / ICE / PFI explanation primitives."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, NonFinitePredictionError, SchemaError
from .learner import Predictor

GRID_SOURCES = ("all_unique", "quantile", "explicit")
CURVE_KINDS = ("original", "adversarial", "target", "conditional_rho")


def row_order_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Left-to-right sum along ``axis`` (cumsum is strictly sequential)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[axis] == 0:
        return np.zeros(np.delete(values.shape, axis))
    return np.take(np.cumsum(values, axis=axis), -1, axis=axis)


def row_order_mean(values: np.ndarray, axis: int = -1) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return row_order_sum(values, axis) / values.shape[axis]


@dataclass(frozen=True)
class GridSpec:
    feature: str
    values: np.ndarray
    source: str = "explicit"
    categorical: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size == 0:
            raise ConfigError(f"grid for {self.feature!r} is empty")
        if not np.all(np.isfinite(v)):
            raise ConfigError(f"grid for {self.feature!r} has non-finite values")
        if self.categorical:
            if len(np.unique(v)) != len(v):
                raise ConfigError(f"categorical grid for {self.feature!r} has duplicates")
        elif np.any(np.diff(v) <= 0):
            raise ConfigError(f"grid for {self.feature!r} must be strictly increasing")
        if self.source not in GRID_SOURCES:
            raise ConfigError(f"unknown grid source {self.source!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


def select_grid(
    dataset: Dataset,
    feature: str,
    policy: str = "all_unique",
    n_quantiles: int = 20,
    values: Sequence[float] | None = None,
) -> GridSpec:
    """Choose the grid a PD curve is evaluated on.

    ``all_unique`` uses every observed value, ``quantile`` takes
    ``n_quantiles`` type-7 quantiles at probabilities (k + 0.5)/q and snaps each
    to the nearest observed value (ties to the lower one), ``explicit`` checks
    the given ``values`` against the schema.
    """
    j = dataset.index(feature)
    feat = dataset.schema[j]
    col = dataset.rows[:, j]
    observed = np.unique(col)
    if policy == "all_unique":
        return GridSpec(feature, observed, "all_unique", feat.is_categorical)
    if policy == "quantile":
        if not feat.is_numeric or feat.kind != "continuous":
            raise ConfigError(f"quantile grid needs a continuous feature; {feature!r} is {feat.kind}")
        if n_quantiles < 1:
            raise ConfigError("n_quantiles must be >= 1")
        probs = (np.arange(n_quantiles) + 0.5) / n_quantiles
        q = np.quantile(col, probs, method="linear")
        pos = np.clip(np.searchsorted(observed, q), 1, len(observed) - 1) if len(observed) > 1 else np.zeros(len(q), int)
        if len(observed) > 1:
            lo, hi = observed[pos - 1], observed[pos]
            snapped = np.where(q - lo <= hi - q, lo, hi)
        else:
            snapped = observed[pos]
        return GridSpec(feature, np.unique(snapped), "quantile", False)
    if policy == "explicit":
        if values is None:
            raise ConfigError("explicit grid needs values")
        v = np.asarray(values, dtype=np.float64)
        if feat.is_categorical:
            if not np.all((v == np.round(v)) & (v >= 0) & (v < len(feat.categories))):
                raise SchemaError(f"explicit grid for {feature!r} has invalid category indices")
        return GridSpec(feature, v, "explicit", feat.is_categorical)
    raise ConfigError(f"unknown grid policy {policy!r}")


@dataclass(frozen=True)
class PermutedPdData:
    """The n * m rows used for one feature's PD curve, materialised one grid block at a time.

    Iteration order is grid-major, row-minor.
    """

    dataset: Dataset
    grid: GridSpec

    @property
    def feature(self) -> str:
        return self.grid.feature

    @property
    def column(self) -> int:
        return self.dataset.index(self.grid.feature)

    @property
    def n(self) -> int:
        return self.dataset.n

    def __len__(self) -> int:
        return self.dataset.n * len(self.grid)

    def block(self, p: int) -> np.ndarray:
        X = np.array(self.dataset.rows)
        X[:, self.column] = self.grid.values[p]
        return X

    def blocks(self) -> Iterator[tuple[float, np.ndarray]]:
        for p, v in enumerate(self.grid.values):
            yield float(v), self.block(p)

    def materialize(self) -> np.ndarray:
        return np.vstack([X for _, X in self.blocks()])


def build_permuted_pd_data(dataset: Dataset, grid: GridSpec) -> PermutedPdData:
    dataset.index(grid.feature)
    return PermutedPdData(dataset, grid)


def permuted_predictions(model: Predictor, permuted: PermutedPdData) -> np.ndarray:
    """Model outputs on every permuted row as an (m, n) matrix."""
    out = np.empty((len(permuted.grid), permuted.n))
    for p, (v, X) in enumerate(permuted.blocks()):
        pred = np.asarray(model.predict(X), dtype=np.float64)
        bad = ~np.isfinite(pred)
        if bad.any():
            raise NonFinitePredictionError(v, int(np.argmax(bad)))
        out[p] = pred
    return out


@dataclass(frozen=True)
class PdCurve:
    feature: str
    grid: GridSpec
    values: np.ndarray
    kind: str = "original"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if len(v) != len(self.grid):
            raise DataError(f"curve length {len(v)} does not match grid length {len(self.grid)}")
        if not np.all(np.isfinite(v)):
            raise DataError(f"{self.kind} curve for {self.feature!r} has non-finite values")
        if self.kind not in CURVE_KINDS:
            raise DataError(f"unknown curve kind {self.kind!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def slope(self) -> float:
        """Least-squares slope of the curve against its grid values."""
        x = self.grid.values
        if len(x) < 2:
            return 0.0
        xc = x - x.mean()
        return float(xc @ (self.values - self.values.mean()) / (xc @ xc))


def compute_pd(model: Predictor, permuted: PermutedPdData, kind: str = "original") -> PdCurve:
    preds = permuted_predictions(model, permuted)
    return PdCurve(permuted.feature, permuted.grid, row_order_mean(preds, axis=1), kind)


@dataclass(frozen=True)
class IceBundle:
    feature: str
    grid: GridSpec
    curves: np.ndarray  # (n, m): row i is observation i's curve

    def pd(self, kind: str = "original") -> PdCurve:
        return PdCurve(self.feature, self.grid, row_order_mean(self.curves, axis=0), kind)

    def percentile(self, q: float) -> np.ndarray:
        return np.percentile(self.curves, q, axis=0)


def compute_ice(model: Predictor, permuted: PermutedPdData) -> IceBundle:
    preds = permuted_predictions(model, permuted)
    return IceBundle(permuted.feature, permuted.grid, preds.T.copy())


# --------------------------------------------------------------------------- PFI


def _loss(kind: str, y: np.ndarray, pred: np.ndarray) -> float:
    if kind == "mse":
        r = pred - y
        return float(np.mean(r * r))
    if kind == "cross_entropy":
        p = np.clip(pred, 1e-12, 1 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))
    raise ConfigError(f"unknown loss {kind!r}")


@dataclass(frozen=True)
class PfiResult:
    features: list[str]
    importances: np.ndarray = field(repr=False)  # (n_features, repeats)
    baseline_loss: float = 0.0

    @property
    def repeats(self) -> int:
        return self.importances.shape[1]

    def median(self) -> np.ndarray:
        return np.median(self.importances, axis=1)

    def percentiles(self, lo: float = 10, hi: float = 90) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.percentile(self.importances, lo, axis=1),
            np.percentile(self.importances, hi, axis=1),
        )

    def spread(self) -> np.ndarray:
        """Width of the 10th-90th percentile band per feature."""
        p10, p90 = self.percentiles()
        return p90 - p10

    def summary(self) -> dict[str, tuple[float, float, float]]:
        med = self.median()
        p10, p90 = self.percentiles()
        return {f: (float(a), float(b), float(c)) for f, a, b, c in zip(self.features, p10, med, p90)}

    def ranks(self) -> dict[str, int]:
        """1 = largest median importance."""
        order = np.argsort(-self.median(), kind="stable")
        return {self.features[j]: r + 1 for r, j in enumerate(order)}

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "repeat", "importance"])
            for f, row in zip(self.features, self.importances):
                for r, v in enumerate(row):
                    w.writerow([f, r, repr(float(v))])


def compute_pfi(
    model: Predictor,
    dataset: Dataset,
    loss: str = "mse",
    repeats: int = 10,
    seed: int = 0,
) -> PfiResult:
    """Loss increase when each column is shuffled.

    Repeat ``r`` draws a single row permutation from ``(seed, r)`` and applies
    it to whichever column is being scored, so a feature's importance does not
    depend on the order or names of the other features.
    """
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    X, y = dataset.rows, dataset.target
    base = _loss(loss, y, model.predict(X))
    imp = np.empty((dataset.p, repeats))
    for r in range(repeats):
        perm = np.random.default_rng([seed, r]).permutation(dataset.n)
        for j in range(dataset.p):
            Xp = np.array(X)
            Xp[:, j] = X[perm, j]
            imp[j, r] = _loss(loss, y, model.predict(Xp)) - base
    return PfiResult(dataset.feature_names, imp, base)


# --------------------------------------------------------------------------- CSV


def write_curves_csv(curves: Sequence[PdCurve], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "grid_value", "kind", "value"])
        for c in curves:
            for g, v in zip(c.grid.values, c.values):
                w.writerow([c.feature, repr(float(g)), c.kind, repr(float(v))])


def write_ice_csv(bundle: IceBundle, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "grid_value", "row_id", "value"])
        for i, curve in enumerate(bundle.curves):
            for g, v in zip(bundle.grid.values, curve):
                w.writerow([bundle.feature, repr(float(g)), i, repr(float(v))])


def _read_rows(path, header: list[str], third=str):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise DataError(f"{path}: line 1: expected header {header}, got {first}")
        for lineno, rec in enumerate(reader, 2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                yield rec[0], float(rec[1]), third(rec[2]), float(rec[3])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: unparseable number") from None


def read_curves_csv(path) -> list[PdCurve]:
    """Inverse of ``write_curves_csv``; curves keep first-appearance order."""
    acc: dict[tuple[str, str], tuple[list, list]] = {}
    for feat, g, kind, v in _read_rows(path, ["feature", "grid_value", "kind", "value"]):
        gs, vs = acc.setdefault((feat, kind), ([], []))
        gs.append(g)
        vs.append(v)
    out = []
    for (feat, kind), (gs, vs) in acc.items():
        try:
            out.append(PdCurve(feat, GridSpec(feat, gs), vs, kind))
        except (ConfigError, DataError) as e:
            raise DataError(f"{path}: {e}") from None
    return out


def read_ice_csv(path) -> list[IceBundle]:
    acc: dict[str, dict[int, list]] = {}
    grids: dict[str, list] = {}
    for feat, g, row_id, v in _read_rows(path, ["feature", "grid_value", "row_id", "value"], int):
        rows = acc.setdefault(feat, {})
        rows.setdefault(row_id, []).append(v)
        if row_id == min(rows):
            grids.setdefault(feat, []).append(g)
    out = []
    for feat, rows in acc.items():
        curves = np.array([rows[i] for i in sorted(rows)])
        out.append(IceBundle(feat, GridSpec(feat, grids[feat]), curves))
    return out
