"""Command-line entry point: simulate, attack, evaluate, sweep, plot, rerun.

Runs are driven by a flat ``key = value`` config whose keys carry a section
prefix (``data.source``, ``classifier.widths``, ``target.X1 = flat`` ...).
Every command writes ``run_manifest.json`` next to its outputs with the
resolved config, the package version and SHA-256 hashes of inputs and
outputs; ``pdfool rerun`` replays a manifest and checks the hashes.

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure
(including a rerun whose outputs differ from the manifest).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .attack import load_attack
from .data import (
    Dataset,
    SimulationConfig,
    kfold_split,
    load_csv,
    load_schema,
    rank_correlation,
    simulate_correlated_gaussian,
    write_csv,
    write_metadata,
    write_schema,
)
from .errors import ConfigError, DataError, PdFoolError
from .explain import (
    PdCurve,
    build_permuted_pd_data,
    compute_ice,
    compute_pd,
    read_curves_csv,
    read_ice_csv,
    write_curves_csv,
    write_ice_csv,
)
from .learner import MlpConfig, Predictor, load_predictor
from .metrics import DEFAULT_THRESHOLDS, accuracy_of_attack, fidelity_report, threshold_sweep, true_positive_rate
from .pipeline import SIM_ALLOCATOR, SIM_C, SIM_F, StudyConfig, TargetSpec
from .study import run_fold
from .svg import render_svg

MANIFEST_NAME = "run_manifest.json"
MANIFEST_FORMAT = "pdfool-run v1"


def _mlp_defaults(prefix: str, cfg: MlpConfig) -> dict[str, str]:
    return {
        f"{prefix}.widths": ",".join(str(w) for w in cfg.layer_widths),
        f"{prefix}.dropout": repr(cfg.dropout_rate),
        f"{prefix}.learn_rate": repr(cfg.learn_rate),
        f"{prefix}.max_epochs": str(cfg.max_epochs),
        f"{prefix}.patience": str(cfg.early_stop_patience),
        f"{prefix}.batch_size": str(cfg.batch_size),
        f"{prefix}.class_weights": ",".join(repr(w) for w in cfg.class_weights) if cfg.class_weights else "",
        f"{prefix}.validation_fraction": repr(cfg.validation_fraction),
        f"{prefix}.momentum": repr(cfg.momentum),
    }


DEFAULTS: dict[str, str] = {
    "data.source": "simulate",
    "data.csv": "",
    "data.schema": "",
    "data.target": "y",
    "simulate.n": "100000",
    "simulate.features": "6",
    "simulate.correlation": "0.3",
    "simulate.noise_sd": "0.5",
    "simulate.coefficients": "",
    "simulate.seed": "0",
    "model.kind": "mlp",
    "model.path": "",
    "model.task": "regression",
    **_mlp_defaults("model", SIM_F),
    **_mlp_defaults("classifier", SIM_C),
    **_mlp_defaults("allocator", SIM_ALLOCATOR),
    "attack.threshold": "0.955",
    "attack.multiplier": "",
    "attack.norm": "l2",
    "study.folds": "5",
    "study.seed": "0",
    "study.fold_indices": "",
    "study.pfi_repeats": "0",
    "study.pfi_loss": "mse",
    "sweep.thresholds": ",".join(repr(t) for t in DEFAULT_THRESHOLDS),
    "evaluate.attack": "",
    "evaluate.data": "",
    "evaluate.schema": "",
    "evaluate.target": "y",
    "plot.curves": "",
    "plot.ice": "",
    "output.dir": "out",
    "output.ice": "false",
}

TARGET_OPTIONS = ("level", "slope", "intercept", "values", "values_file", "grid", "quantiles", "grid_values")


# ------------------------------------------------------------------- config


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}: line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}: line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _check_key(key: str) -> None:
    if key in DEFAULTS:
        return
    parts = key.split(".")
    if parts[0] == "target" and (len(parts) == 2 or (len(parts) == 3 and parts[2] in TARGET_OPTIONS)):
        return
    raise ConfigError(f"unknown config key {key!r}")


class RunConfig:
    """Resolved configuration: defaults overlaid with user keys, in a stable order."""

    def __init__(self, user: dict[str, str]):
        for key in user:
            _check_key(key)
        self.values = dict(DEFAULTS)
        self.values.update(user)
        # target keys keep the user's order, which fixes the targeted-feature order
        self.target_order = [k.split(".")[1] for k in user if k.startswith("target.") and k.count(".") == 1]

    def resolved(self) -> dict[str, str]:
        head = {k: self.values[k] for k in DEFAULTS}
        tail = {k: v for k, v in self.values.items() if k not in DEFAULTS}
        return {**head, **tail}

    def str(self, key: str) -> str:
        return self.values[key]

    def int(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self.values[key]!r}") from None

    def float(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self.values[key]!r}") from None

    def floats(self, key: str) -> tuple[float, ...]:
        raw = self.values.get(key, "")
        try:
            return tuple(float(t) for t in raw.split(",") if t.strip())
        except ValueError:
            raise ConfigError(f"{key} must be a comma-separated list of numbers, got {raw!r}") from None

    def ints(self, key: str) -> tuple[int, ...]:
        vals = self.floats(key)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{key} must list integers")
        return tuple(int(v) for v in vals)

    def bool(self, key: str) -> bool:
        v = self.values[key].lower()
        if v not in ("true", "false"):
            raise ConfigError(f"{key} must be true or false")
        return v == "true"

    def path(self, key: str, required: bool = True) -> Path | None:
        v = self.values.get(key, "")
        if not v:
            if required:
                raise ConfigError(f"{key} is required")
            return None
        return Path(v)

    def mlp(self, prefix: str, task: str) -> MlpConfig:
        weights = self.floats(f"{prefix}.class_weights")
        return MlpConfig(
            self.ints(f"{prefix}.widths"),
            task,
            dropout_rate=self.float(f"{prefix}.dropout"),
            learn_rate=self.float(f"{prefix}.learn_rate"),
            max_epochs=self.int(f"{prefix}.max_epochs"),
            early_stop_patience=self.int(f"{prefix}.patience"),
            class_weights=weights or None,
            validation_fraction=self.float(f"{prefix}.validation_fraction"),
            batch_size=self.int(f"{prefix}.batch_size"),
            momentum=self.float(f"{prefix}.momentum"),
        )


# ------------------------------------------------------------------ helpers


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects inputs and outputs of one command for its manifest."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.str("output.dir"))
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []
        self.warnings: list[str] = []

    def input(self, path: Path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise DataError(f"input file not found: {path}")
        self.inputs[str(path.resolve())] = sha256_file(path)
        return path

    def output(self, rel: str) -> Path:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(path)
        return path

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        print(f"warning: {message}", file=sys.stderr)

    def manifest(self) -> dict:
        outputs = {}
        for p in sorted(set(self.outputs)):
            if p.is_file():
                outputs[p.relative_to(self.out).as_posix()] = sha256_file(p)
        return {
            "format": MANIFEST_FORMAT,
            "command": self.command,
            "version": __version__,
            "config": self.cfg.resolved(),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": outputs,
        }

    def write_manifest(self) -> Path:
        path = self.out / MANIFEST_NAME
        self.out.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.manifest(), indent=2) + "\n")
        return path


def _simulation_config(cfg: RunConfig) -> SimulationConfig:
    coef = cfg.floats("simulate.coefficients") or None
    return SimulationConfig(
        n_rows=cfg.int("simulate.n"),
        n_features=cfg.int("simulate.features"),
        pairwise_correlation=cfg.float("simulate.correlation"),
        noise_sd=cfg.float("simulate.noise_sd"),
        coefficient_vector=coef,
        seed=cfg.int("simulate.seed"),
    )


def _load_dataset(run: Run) -> Dataset:
    cfg = run.cfg
    source = cfg.str("data.source")
    if source == "simulate":
        return simulate_correlated_gaussian(_simulation_config(cfg))
    if source == "csv":
        schema = load_schema(run.input(cfg.path("data.schema")))
        return load_csv(run.input(cfg.path("data.csv")), schema, cfg.str("data.target"))
    raise ConfigError(f"data.source must be 'simulate' or 'csv', got {source!r}")


def _read_values_file(path: Path) -> tuple[float, ...]:
    text = path.read_text().replace(",", "\n")
    try:
        return tuple(float(t) for t in text.split())
    except ValueError:
        raise DataError(f"{path}: values file must hold numbers") from None


def _target_specs(run: Run) -> tuple[TargetSpec, ...]:
    cfg = run.cfg
    specs = []
    for feat in cfg.target_order:
        kind = cfg.str(f"target.{feat}")
        opt = {o: cfg.values.get(f"target.{feat}.{o}", "") for o in TARGET_OPTIONS}
        values = None
        if opt["values"]:
            values = cfg.floats(f"target.{feat}.values")
        elif opt["values_file"]:
            values = _read_values_file(run.input(Path(opt["values_file"])))
        specs.append(
            TargetSpec(
                feat,
                kind,
                level=float(opt["level"]) if opt["level"] else None,
                slope=float(opt["slope"]) if opt["slope"] else 0.0,
                intercept=float(opt["intercept"]) if opt["intercept"] else None,
                values=values,
                grid_policy=opt["grid"] or "auto",
                n_quantiles=int(opt["quantiles"]) if opt["quantiles"] else 20,
                grid_values=cfg.floats(f"target.{feat}.grid_values") or None,
            )
        )
    if not specs:
        raise ConfigError("no targeted features: add lines like 'target.X1 = flat'")
    return tuple(specs)


def _study_config(run: Run) -> StudyConfig:
    cfg = run.cfg
    kind = cfg.str("model.kind")
    if kind not in ("mlp", "linear", "file"):
        raise ConfigError(f"model.kind must be mlp, linear or file, got {kind!r}")
    task = cfg.str("model.task")
    f_config = cfg.mlp("model", task) if kind == "mlp" else None
    mult = cfg.str("attack.multiplier")
    pfi_loss = cfg.str("study.pfi_loss")
    if pfi_loss not in ("mse", "cross_entropy"):
        raise ConfigError("study.pfi_loss must be mse or cross_entropy")
    if cfg.str("attack.norm") not in ("l2", "l1", "linf"):
        raise ConfigError("attack.norm must be l2, l1 or linf")
    return StudyConfig(
        targets=_target_specs(run),
        f_config=f_config,
        classifier=cfg.mlp("classifier", "binary"),
        allocator=cfg.mlp("allocator", "multiclass") if len(cfg.target_order) > 1 else SIM_ALLOCATOR,
        threshold=cfg.float("attack.threshold"),
        multiplier=int(mult) if mult else None,
        seed=cfg.int("study.seed"),
        folds=cfg.int("study.folds"),
        pfi_repeats=cfg.int("study.pfi_repeats"),
        pfi_loss=pfi_loss,
    )


def _prevalidate(dataset: Dataset, study: StudyConfig) -> None:
    """Catch schema and grid problems before any output is written."""
    study.check_schema(dataset)
    for spec in study.targets:
        spec.check_explicit(spec.grid(dataset))


def _external_model(run: Run, dataset: Dataset) -> Predictor | None:
    if run.cfg.str("model.kind") != "file":
        return None
    f = load_predictor(run.input(run.cfg.path("model.path")))
    if f.n_features != dataset.p:
        raise ConfigError(f"model at {run.cfg.str('model.path')} expects {f.n_features} features, data has {dataset.p}")
    return f


def _fold_indices(cfg: RunConfig, k: int) -> list[int]:
    idx = list(cfg.ints("study.fold_indices")) or list(range(k))
    if any(not 0 <= i < k for i in idx):
        raise ConfigError(f"study.fold_indices must lie in [0, {k})")
    return idx


def _write_rows(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v: float) -> str:
    return repr(float(v))


# ----------------------------------------------------------------- commands


def cmd_simulate(run: Run) -> int:
    sim = _simulation_config(run.cfg)
    data = simulate_correlated_gaussian(sim)
    write_csv(data, run.output("data.csv"))
    write_schema(data.schema, run.output("schema.txt"))
    write_metadata(sim.metadata(), run.output("data.meta.txt"))
    print(f"wrote {data.n} rows x {data.p} features to {run.out / 'data.csv'}")
    return 0


def cmd_attack(run: Run) -> int:
    cfg = run.cfg
    dataset = _load_dataset(run)
    study = _study_config(run)
    _prevalidate(dataset, study)
    f_ext = _external_model(run, dataset)
    split = kfold_split(dataset, study.folds, study.seed)
    folds = _fold_indices(cfg, split.k)
    norm = cfg.str("attack.norm")
    write_ice = cfg.bool("output.ice")
    from .attack import save_attack

    write_schema(dataset.schema, run.output("schema.txt"))
    report_rows = []
    for k in folds:
        res = run_fold(dataset, split, k, study, f=f_ext, norm=norm)
        fitted, rep = res.fitted, res.report
        a = fitted.model
        d = f"fold{k}/"
        manifest = save_attack(a, run.out / f"fold{k}")
        for name in ("f.model", "c.model", "c1.model", manifest.name):
            if (run.out / d / name).exists():
                run.outputs.append(run.out / d / name)
        test = dataset.subset(split.test_indices(k))
        write_csv(fitted.train, run.output(d + "train.csv"))
        write_csv(test, run.output(d + "test.csv"))
        write_curves_csv(rep.all_curves(), run.output(d + "pd_heldout.csv"))
        insample = []
        for feat, perm in fitted.permuted.items():
            insample.append(compute_pd(a.original, perm, "original"))
            insample.append(compute_pd(a, perm, "adversarial"))
            insample.append(fitted.targets[feat].as_curve())
        write_curves_csv(insample, run.output(d + "pd_insample.csv"))
        if write_ice:
            from .pipeline import heldout_permutations

            for feat, perm in heldout_permutations(fitted, test).items():
                write_ice_csv(compute_ice(a, perm), run.output(d + f"ice_heldout_{feat}.csv"))
        if res.pfi_before is not None:
            res.pfi_before.to_csv(run.output(d + "pfi_before.csv"))
            res.pfi_after.to_csv(run.output(d + "pfi_after.csv"))
        if cfg.str("model.task") == "binary":
            low, high = 0.0, 1.0
        else:
            low, high = float(np.min(fitted.train.target)), float(np.max(fitted.train.target))
        for feat in a.targeted_features:
            bad = a.compensation[feat].out_of_range(low, high)
            if len(bad):
                run.warn(
                    f"fold {k}: compensating outputs for {feat!r} fall outside [{low:.6g}, {high:.6g}] "
                    f"at grid values {[float(v) for v in bad]}"
                )
            orig, adv, target = rep.curves[feat]
            report_rows.append(
                [k, feat, _num(a.threshold), _num(rep.tpr), _num(res.fidelity.fraction_exact),
                 _num(rep.accuracy_of_attack[feat]), _num(orig.slope()), _num(adv.slope()), _num(target.slope())]
            )
        print(f"fold {k}: tpr={rep.tpr:.4f} " + " ".join(f"acc[{f}]={v:.4f}" for f, v in rep.accuracy_of_attack.items()))
    _write_rows(
        run.output("report.csv"),
        ["fold", "feature", "threshold", "tpr", "fraction_exact", "accuracy", "slope_original",
         "slope_adversarial", "slope_target"],
        report_rows,
    )
    run.output("warnings.txt").write_text("".join(w + "\n" for w in run.warnings))
    tprs = [float(r[3]) for r in report_rows[:: len(study.targets)]]
    print(f"mean tpr over {len(tprs)} fold(s): {np.mean(tprs):.4f}")
    return 0


def cmd_evaluate(run: Run) -> int:
    cfg = run.cfg
    manifest = run.input(cfg.path("evaluate.attack"))
    a = load_attack(manifest)
    for name in ("f.model", "c.model", "c1.model"):
        if (manifest.parent / name).exists():
            run.input(manifest.parent / name)
    schema = load_schema(run.input(cfg.path("evaluate.schema")))
    data = load_csv(run.input(cfg.path("evaluate.data")), schema, cfg.str("evaluate.target"))
    if data.p != a.n_features:
        raise DataError(f"attack expects {a.n_features} features, data has {data.p}")
    norm = cfg.str("attack.norm")
    tpr = true_positive_rate(a, data.rows)
    fid = fidelity_report(a, a.original, data.rows)
    rows, curves = [], []
    for feat in a.targeted_features:
        entry = a.compensation[feat]
        perm = build_permuted_pd_data(data, entry.grid)
        orig = compute_pd(a.original, perm, "original")
        adv = compute_pd(a, perm, "adversarial")
        target = PdCurve(feat, entry.grid, entry.target, "target")
        curves += [orig, adv, target]
        acc = accuracy_of_attack(orig, adv, target, norm)
        rows.append([feat, data.n, _num(tpr), _num(fid.fraction_exact), _num(acc)])
        print(f"{feat}: tpr={tpr:.4f} accuracy={acc:.4f}")
    _write_rows(run.output("report.csv"), ["feature", "n_rows", "tpr", "fraction_exact", "accuracy"], rows)
    write_curves_csv(curves, run.output("pd_curves.csv"))
    return 0


def cmd_sweep(run: Run) -> int:
    cfg = run.cfg
    dataset = _load_dataset(run)
    study = _study_config(run)
    _prevalidate(dataset, study)
    split = kfold_split(dataset, study.folds, study.seed)
    folds = _fold_indices(cfg, split.k)
    result = threshold_sweep(dataset, study, cfg.floats("sweep.thresholds"), split, folds, cfg.str("attack.norm"))
    result.to_csv(run.output("sweep.csv"))
    ok = [(tpr, acc) for _, _, _, tpr, acc, status in result.rows() if status == "ok"]
    if len(ok) >= 2:
        rho = rank_correlation([t for t, _ in ok], [a for _, a in ok])
        print(f"{len(result.reports)} sweep points, spearman(tpr, accuracy) = {rho:.3f}")
    return 0


def cmd_plot(run: Run) -> int:
    cfg = run.cfg
    curves = read_curves_csv(run.input(cfg.path("plot.curves")))
    ice = []
    for p in (t.strip() for t in cfg.str("plot.ice").split(",")):
        if p:
            ice += read_ice_csv(run.input(Path(p)))
    run.output("plot.svg").write_text(render_svg(curves, ice))
    print(f"wrote {run.out / 'plot.svg'}")
    return 0


COMMANDS: dict[str, Callable[[Run], int]] = {
    "simulate": cmd_simulate,
    "attack": cmd_attack,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def execute(command: str, user: dict[str, str]) -> tuple[int, Run]:
    """Run ``command`` with user config keys and write its manifest."""
    cfg = RunConfig(user)
    if command == "simulate":
        _simulation_config(cfg)  # validate before touching the output directory
    run = Run(command, cfg)
    code = COMMANDS[command](run)
    run.write_manifest()
    return code, run


def rerun(manifest_path: Path, out: Path | None) -> int:
    try:
        m = json.loads(Path(manifest_path).read_text())
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read run manifest {manifest_path}: {e}") from None
    if m.get("format") != MANIFEST_FORMAT or m.get("command") not in COMMANDS:
        raise DataError(f"{manifest_path} is not a run manifest")
    for path, digest in m["inputs"].items():
        if not Path(path).is_file() or sha256_file(Path(path)) != digest:
            raise DataError(f"input {path} is missing or changed since the recorded run")
    config = dict(m["config"])
    if out is not None:
        config["output.dir"] = str(out)
    user = {k: v for k, v in config.items() if k not in DEFAULTS or DEFAULTS[k] != v}
    # keep every target key, in order, so the targeted-feature order survives
    user.update({k: v for k, v in config.items() if k.startswith("target.")})
    code, run = execute(m["command"], user)
    fresh = run.manifest()["outputs"]
    if fresh != m["outputs"]:
        changed = sorted(set(fresh) ^ set(m["outputs"]) | {k for k in fresh if m["outputs"].get(k) != fresh[k]})
        print(f"rerun outputs differ from the manifest: {changed}", file=sys.stderr)
        return 3
    print(f"rerun reproduced {len(fresh)} output file(s) byte-identically")
    return code


# --------------------------------------------------------------------- main


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdfool", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"pdfool {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--out", help="output directory (output.dir)")

    sp = sub.add_parser("simulate", help="write a simulated correlated-Gaussian dataset")
    common(sp)
    sp.add_argument("--n", help="number of rows (simulate.n)")
    sp.add_argument("--seed", help="simulation seed (simulate.seed)")
    for name, text in (("attack", "fit and evaluate the attack per fold"), ("sweep", "threshold sweep")):
        common(sub.add_parser(name, help=text))
    sp = sub.add_parser("evaluate", help="evaluate a saved attack on a data file")
    common(sp)
    sp.add_argument("--attack", help="attack manifest (evaluate.attack)")
    sp.add_argument("--data", help="CSV data (evaluate.data)")
    sp.add_argument("--schema", help="schema file (evaluate.schema)")
    sp.add_argument("--target", help="target column (evaluate.target)")
    sp = sub.add_parser("plot", help="render PD (and ICE) CSVs to SVG")
    common(sp)
    sp.add_argument("--curves", help="PD curves CSV (plot.curves)")
    sp.add_argument("--ice", help="comma-separated ICE CSVs (plot.ice)")
    sp = sub.add_parser("rerun", help="replay a run manifest and verify its outputs")
    sp.add_argument("manifest", type=Path)
    sp.add_argument("--out", type=Path, help="write the replay here instead of the original directory")
    return p


FLAG_KEYS = {
    "out": "output.dir",
    "n": "simulate.n",
    "seed": "simulate.seed",
    "attack": "evaluate.attack",
    "data": "evaluate.data",
    "schema": "evaluate.schema",
    "target": "evaluate.target",
    "curves": "plot.curves",
    "ice": "plot.ice",
}


def _user_config(args) -> dict[str, str]:
    user: dict[str, str] = {}
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        user.update(parse_config_text(text, str(args.config)))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        user[key] = value
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            user[key] = str(value)
    return user


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "rerun":
            return rerun(args.manifest, args.out)
        code, _ = execute(args.command, _user_config(args))
        return code
    except PdFoolError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
