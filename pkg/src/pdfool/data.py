"""Tabular data model, CSV ingestion, fold splitting and the correlated-Gaussian simulator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DataError, RowError, SchemaError

KINDS = ("continuous", "discrete", "categorical")


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    kind: str = "continuous"
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.is_categorical:
            if not self.categories:
                raise SchemaError(f"categorical feature {self.name!r} needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"feature {self.name!r}: duplicate category names")
        elif self.categories:
            raise SchemaError(f"non-categorical feature {self.name!r} cannot list categories")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    @property
    def is_numeric(self) -> bool:
        return not self.is_categorical


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus target; categorical cells hold category indices."""

    schema: tuple[FeatureSchema, ...]
    rows: np.ndarray
    target: np.ndarray
    weights: np.ndarray | None = None
    target_name: str = "y"

    def __post_init__(self):
        schema = tuple(self.schema)
        object.__setattr__(self, "schema", schema)
        rows = _frozen(self.rows)
        target = _frozen(self.target)
        if rows.ndim != 2:
            raise DataError("rows must be a 2-D matrix")
        n, p = rows.shape
        if n < 1 or p < 1:
            raise DataError(f"dataset needs n >= 1 and p >= 1, got n={n}, p={p}")
        if p != len(schema):
            raise SchemaError(f"rows have {p} columns but schema lists {len(schema)} features")
        names = [f.name for f in schema]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if target.shape != (n,):
            raise DataError(f"target length {target.shape} does not match n={n}")
        if not np.all(np.isfinite(rows)):
            bad = np.argwhere(~np.isfinite(rows))[0]
            raise RowError(int(bad[0]), names[bad[1]], "missing or non-finite value")
        for j, feat in enumerate(schema):
            if feat.is_categorical:
                col = rows[:, j]
                ok = (col == np.round(col)) & (col >= 0) & (col < len(feat.categories))
                if not ok.all():
                    i = int(np.argmin(ok))
                    raise RowError(i, feat.name, f"category index {col[i]!r} out of range")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "target", target)
        if self.weights is not None:
            w = _frozen(self.weights)
            if w.shape != (n,):
                raise DataError("weights must have length n")
            object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    def index(self, name: str) -> int:
        for j, f in enumerate(self.schema):
            if f.name == name:
                return j
        raise SchemaError(f"feature {name!r} not in schema {self.feature_names}")

    def feature(self, name: str) -> FeatureSchema:
        return self.schema[self.index(name)]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            self.schema,
            self.rows[idx],
            self.target[idx],
            None if self.weights is None else self.weights[idx],
            self.target_name,
        )

    def with_target(self, target) -> "Dataset":
        return Dataset(self.schema, self.rows, target, self.weights, self.target_name)


# --------------------------------------------------------------------------- CSV


def _format_number(x: float) -> str:
    return repr(float(x))


def load_csv(path, schema: Sequence[FeatureSchema], target_column: str) -> Dataset:
    """Read a comma-delimited file with a header row.

    Rows keep file order. Categorical cells are mapped to their index in the
    schema's category list. Missing cells are rejected rather than imputed.
    """
    path = Path(path)
    schema = tuple(schema)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in [f.name for f in schema] + [target_column] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        cols = [header.index(f.name) for f in schema]
        tcol = header.index(target_column)
        lookups = [
            {c: k for k, c in enumerate(f.categories)} if f.is_categorical else None
            for f in schema
        ]
        rows: list[list[float]] = []
        target: list[float] = []
        for r, record in enumerate(reader):
            if not record:
                continue
            if len(record) < len(header):
                raise RowError(r, header[len(record)], "row is too short")
            vals = []
            for feat, c, lut in zip(schema, cols, lookups):
                cell = record[c].strip()
                if lut is not None:
                    if cell not in lut:
                        raise RowError(r, feat.name, f"unknown category {cell!r}")
                    vals.append(float(lut[cell]))
                else:
                    vals.append(_parse_float(cell, r, feat.name))
            rows.append(vals)
            target.append(_parse_float(record[tcol].strip(), r, target_column))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(schema, np.array(rows), np.array(target), target_name=target_column)


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise RowError(row, column, f"cannot parse {cell!r} as a number") from None
    if not math.isfinite(v):
        raise RowError(row, column, f"missing or non-finite value {cell!r}")
    return v


def write_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the format ``load_csv`` reads back bit-exactly."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.feature_names + [dataset.target_name])
        for row, y in zip(dataset.rows, dataset.target):
            cells = [
                f.categories[int(v)] if f.is_categorical else _format_number(v)
                for f, v in zip(dataset.schema, row)
            ]
            w.writerow(cells + [_format_number(y)])


def load_schema(path) -> list[FeatureSchema]:
    """Schema file: one feature per line, ``name,kind[,cat1|cat2|...]``; ``#`` comments."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [s.strip() for s in line.split(",")]
        if len(parts) < 2:
            raise SchemaError(f"{path}:{lineno}: expected 'name,kind[,categories]'")
        cats = tuple(parts[2].split("|")) if len(parts) > 2 and parts[2] else ()
        out.append(FeatureSchema(parts[0], parts[1], cats))
    if not out:
        raise SchemaError(f"{path}: no features")
    return out


def write_schema(schema: Iterable[FeatureSchema], path) -> None:
    lines = []
    for f in schema:
        lines.append(f"{f.name},{f.kind}" + (f",{'|'.join(f.categories)}" if f.categories else ""))
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------------------- folds


@dataclass(frozen=True)
class FoldSplit:
    fold_assignments: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.fold_assignments, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "fold_assignments", a)
        counts = np.bincount(a, minlength=self.k)
        if a.min() < 0 or a.max() >= self.k or (counts == 0).any():
            raise DataError("every fold must be non-empty and indices must lie in [0, k)")

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignments != fold)


def kfold_split(dataset: Dataset, k: int, seed: int) -> FoldSplit:
    """Shuffle rows with ``seed`` and deal them round-robin into ``k`` folds."""
    if not 2 <= k <= dataset.n:
        raise ConfigError(f"k must lie in [2, n={dataset.n}], got {k}")
    order = np.random.default_rng(seed).permutation(dataset.n)
    assign = np.empty(dataset.n, dtype=np.int64)
    assign[order] = np.arange(dataset.n) % k
    return FoldSplit(assign, k)


# --------------------------------------------------------------------- simulator


@dataclass(frozen=True)
class SimulationConfig:
    n_rows: int = 100_000
    n_features: int = 6
    pairwise_correlation: float = 0.3
    noise_sd: float = 0.5
    coefficient_vector: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1:
            raise ConfigError(f"n_rows must be positive, got {self.n_rows}")
        if self.n_features < 1:
            raise ConfigError("n_features must be positive")
        if self.noise_sd <= 0:
            raise ConfigError("noise_sd must be > 0")
        coef = self.coefficient_vector
        if coef is None:
            coef = (1.0,) * (self.n_features - 1) + (0.0,) if self.n_features > 1 else (1.0,)
        coef = tuple(float(c) for c in coef)
        if len(coef) != self.n_features:
            raise ConfigError(
                f"coefficient_vector has {len(coef)} entries, expected {self.n_features}"
            )
        object.__setattr__(self, "coefficient_vector", coef)
        r, p = self.pairwise_correlation, self.n_features
        lower = -1.0 / (p - 1) if p > 1 else -1.0
        if not (lower < r < 1.0):
            raise ConfigError(
                f"pairwise_correlation {r} gives a non-positive-definite covariance "
                f"(need {lower:.6g} < rho < 1)"
            )

    def covariance(self) -> np.ndarray:
        p = self.n_features
        cov = np.full((p, p), self.pairwise_correlation)
        np.fill_diagonal(cov, 1.0)
        return cov

    def metadata(self) -> dict[str, str]:
        return {
            "seed": str(self.seed),
            "n": str(self.n_rows),
            "n_features": str(self.n_features),
            "correlation": repr(self.pairwise_correlation),
            "noise_sd": repr(self.noise_sd),
            "coefficients": ",".join(repr(c) for c in self.coefficient_vector),
        }


def simulate_correlated_gaussian(config: SimulationConfig) -> Dataset:
    """Equicorrelated standard normal features with a linear-plus-noise target."""
    cov = config.covariance()
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ConfigError("implied covariance is not positive definite") from None
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((config.n_rows, config.n_features))
    x = z @ chol.T
    noise = rng.normal(0.0, config.noise_sd, size=config.n_rows)
    y = x @ np.asarray(config.coefficient_vector) + noise
    schema = tuple(FeatureSchema(f"X{j + 1}") for j in range(config.n_features))
    return Dataset(schema, x, y, target_name="y")


def write_metadata(meta: Mapping[str, str], path) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in meta.items()))


def read_metadata(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# ------------------------------------------------------------------ correlation


@dataclass(frozen=True)
class CorrelationMatrix:
    names: list[str]
    values: np.ndarray = field(repr=False)

    def __getitem__(self, pair: tuple[str, str]) -> float:
        a, b = pair
        return float(self.values[self.names.index(a), self.names.index(b)])


def spearman_correlation_matrix(
    dataset: Dataset,
    ordinal_maps: Mapping[str, Sequence[str]] | None = None,
    exclude: Iterable[str] = (),
) -> CorrelationMatrix:
    """Rank correlation between all retained features, ties given average ranks.

    Nominal features enter only through an explicit ordering of their
    categories (``ordinal_maps[name]`` lists category names low to high), or
    must be listed in ``exclude``.
    """
    ordinal_maps = dict(ordinal_maps or {})
    exclude = set(exclude)
    names, cols = [], []
    for j, feat in enumerate(dataset.schema):
        if feat.name in exclude:
            continue
        col = dataset.rows[:, j]
        if feat.is_categorical:
            if feat.name not in ordinal_maps:
                raise SchemaError(
                    f"categorical feature {feat.name!r} needs an ordinal map or must be excluded"
                )
            order = list(ordinal_maps[feat.name])
            if sorted(order) != sorted(feat.categories):
                raise SchemaError(f"ordinal map for {feat.name!r} must permute its categories")
            position = np.array([order.index(c) for c in feat.categories], dtype=float)
            col = position[col.astype(int)]
        names.append(feat.name)
        cols.append(rankdata(col))
    ranks = np.column_stack(cols)
    centred = ranks - ranks.mean(axis=0)
    norms = np.sqrt((centred**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        mat = (centred.T @ centred) / np.outer(norms, norms)
    # constant columns have no defined correlation; report 0 off-diagonal
    mat = np.where(np.isfinite(mat), mat, 0.0)
    mat = np.clip((mat + mat.T) / 2, -1.0, 1.0)
    np.fill_diagonal(mat, 1.0)
    return CorrelationMatrix(names, mat)


def rank_correlation(a, b) -> float:
    """Spearman correlation of two vectors."""
    ra, rb = rankdata(a), rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    return float((ra @ rb) / math.sqrt((ra @ ra) * (rb @ rb)))
