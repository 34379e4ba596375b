"""Command-line interface.

Every option can also be given through an environment variable named
``FAIRTREE_`` plus the option name in upper case with dashes replaced by
underscores (``--time-limit`` -> ``FAIRTREE_TIME_LIMIT``). Command-line
flags take precedence over the environment.

Exit codes: 0 success, 2 invalid input, 3 stopped at the time limit with a
feasible tree, 4 infeasible model.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import (CLASSIFICATION, REGRESSION, DataError, Dataset, dataset_from_rows,
                   load_csv, load_schema, make_folds, normalize, read_csv_rows)
from .fairness import DIDI, DTDI, FairnessError, audit, knn_weights
from .milp.build import TREE_CLASSES, BuildConfig, BuildError, ExtractionError, build
from .solver.bnb import STATUS_OPTIMAL, STATUS_TIME_LIMIT, SolverOptions
from .solver.mps import export_mps
from .training import FitError, FitReport, cross_validate, fit, lambda_sweep
from .tree import DecisionTree, TreeError, TreeShape

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_TIME_LIMIT = 3
EXIT_INFEASIBLE = 4

ENV_PREFIX = "FAIRTREE_"
TASKS = {"clf": CLASSIFICATION, "reg": REGRESSION}
TRADEOFF_COLUMNS = ["fold", "lambda", "train_loss", "test_loss", "train_index", "test_index",
                    "status", "gap", "seconds"]


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors are reported as JSON with the validation exit code."""

    def error(self, message):
        _error("validation", UsageError(message))
        self.exit(EXIT_INVALID)


@dataclass
class RunConfig:
    command: str
    data: str | None = None
    schema: str | None = None
    depth: int = 2
    tree_class: str = "classical"
    task: str | None = None
    index: str = DIDI
    knn: int | None = None
    on_zero: str = "error"
    lam: float = 0.0
    sweep_step: float = 0.1
    sweep_threshold: float = 1e-4
    lambda_max: float = 10.0
    folds: int = 5
    time_limit: float = 60.0
    seed: int = 0
    out: str = "out"
    test_data: str | None = None
    model: str | None = None
    bins: int = 21
    wall_times: bool = False
    extra: dict = field(default_factory=dict)

    def check(self) -> None:
        for name in ("data", "schema", "test_data", "model"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise UsageError(f"--{name.replace('_', '-')}: no such file {path!r}")
        if self.depth < 1 or self.depth > 6:
            raise UsageError("--depth must be between 1 and 6")
        if self.tree_class not in TREE_CLASSES:
            raise UsageError(f"--class must be one of {', '.join(TREE_CLASSES)}")
        if self.task is not None and self.task not in TASKS:
            raise UsageError("--task must be clf or reg")
        if self.index not in (DIDI, DTDI):
            raise UsageError("--index must be didi or dtdi")
        if self.knn is not None and self.knn < 1:
            raise UsageError("--knn must be a positive integer")
        if self.lam < 0 or self.lambda_max < 0:
            raise UsageError("lambda values must be nonnegative")
        if not self.sweep_step > 0:
            raise UsageError("--sweep-step must be positive")
        if not 0 < self.sweep_threshold < 1:
            raise UsageError("--sweep-threshold must be a fraction in (0, 1)")
        if self.folds < 2:
            raise UsageError("--folds must be at least 2")
        if not self.time_limit > 0:
            raise UsageError("--time-limit must be positive")
        if self.bins < 1:
            raise UsageError("--bins must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


# ---------------------------------------------------------------------------
# argument parsing


def _env(name: str, default):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=_env("out", "out"), help="output directory")
    common.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    common.add_argument("--wall-times", action="store_true",
                        default=_env("wall-times", "0") not in ("0", "", "false"),
                        help="write wall-clock times into CSV outputs (not reproducible)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default=_env("data", None), help="CSV file with a header row")
    data.add_argument("--schema", default=_env("schema", None), help="schema file")
    data.add_argument("--task", choices=sorted(TASKS), default=_env("task", None),
                      help="expected task; must agree with the schema label")
    data.add_argument("--index", choices=[DIDI, DTDI], default=_env("index", DIDI))
    data.add_argument("--knn", type=int, default=_int_or_none(_env("knn", None)),
                      help="kNN kernel size for the treatment index (default: unit weights)")
    data.add_argument("--on-zero", choices=["error", "unit", "skip"],
                      default=_env("on-zero", "error"),
                      help="handling of zero kernel denominators")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--depth", type=int, default=int(_env("depth", 2)))
    model.add_argument("--class", dest="tree_class", choices=list(TREE_CLASSES),
                       default=_env("class", "classical"))
    model.add_argument("--lambda", dest="lam", type=float, default=float(_env("lambda", 0.0)))
    model.add_argument("--time-limit", type=float, default=float(_env("time-limit", 60.0)))
    model.add_argument("--test-data", default=_env("test-data", None),
                       help="held-out CSV for reporting")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--sweep-step", type=float, default=float(_env("sweep-step", 0.1)))
    sweep.add_argument("--sweep-threshold", type=float,
                       default=float(_env("sweep-threshold", 1e-4)),
                       help="stop when the discrimination level drops below this fraction")
    sweep.add_argument("--lambda-max", type=float, default=float(_env("lambda-max", 10.0)))

    p = _Parser(prog="fairtree", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fairtree {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    a = sub.add_parser("audit", parents=[common, data], help="discrimination indices of labels")
    a.add_argument("--bins", type=int, default=int(_env("bins", 21)))
    sub.add_parser("train", parents=[common, data, model], help="fit one tree")
    sub.add_parser("sweep", parents=[common, data, model, sweep], help="lambda sweep")
    cv = sub.add_parser("cv", parents=[common, data, model, sweep], help="cross-validation")
    cv.add_argument("--folds", type=int, default=int(_env("folds", 5)))
    cv.add_argument("--fixed-lambda", action="store_true",
                    help="fit at --lambda on every fold instead of sweeping")
    pr = sub.add_parser("predict", parents=[common], help="apply a saved model")
    pr.add_argument("--model", default=_env("model", None), required=_env("model", None) is None)
    pr.add_argument("--data", default=_env("data", None))
    sub.add_parser("export-mps", parents=[common, data, model], help="write the model as MPS")
    return p


def _int_or_none(v):
    return None if v in (None, "") else int(v)


def parse_args(argv=None) -> RunConfig:
    ns = _parser().parse_args(argv)
    d = vars(ns)
    cfg = RunConfig(command=d.pop("command"))
    for k, v in d.items():
        if hasattr(cfg, k):
            setattr(cfg, k, v)
        else:
            cfg.extra[k] = v
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


class Outputs:
    """Collects artifacts and writes them with a manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.timings: dict = {}
        self.started = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.files.append(path)
        return path

    def add(self, path: Path) -> None:
        self.files.append(path)

    def manifest(self, exit_code: int) -> Path:
        arts = []
        for p in self.files:
            data = p.read_bytes()
            arts.append({"path": p.name, "bytes": len(data),
                         "sha256": hashlib.sha256(data).hexdigest()})
        doc = {
            "tool": "fairtree",
            "version": __version__,
            "command": self.cfg.command,
            "config": self.cfg.to_dict(),
            "exit_code": exit_code,
            "artifacts": arts,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "timings": {**self.timings, "total_seconds": time.perf_counter() - self.started},
        }
        path = self.dir / "manifest.json"
        path.write_text(_json_text(doc), encoding="utf-8")
        return path


def _trade_rows(rows: list[dict], wall: bool) -> list[dict]:
    if wall:
        return rows
    return [{**r, "seconds": None} for r in rows]


def _trace_csv(report: FitReport, wall: bool) -> str:
    rows = [{"time_s": t if wall else None, "lower": lo, "upper": up}
            for t, lo, up in report.trace]
    return _csv_text(["time_s", "lower", "upper"], rows)


def _report_doc(rep: FitReport) -> dict:
    return {
        "lambda": rep.lam,
        "index": rep.index,
        "train": rep.train.to_dict(),
        "test": rep.test.to_dict() if rep.test else None,
        "objective": rep.objective,
        "solver_objective": rep.solver_objective,
        "status": rep.status,
        "gap": rep.gap,
        "nodes": rep.nodes,
        "model": rep.build_report,
    }


# ---------------------------------------------------------------------------
# commands


def _load(cfg: RunConfig, path: str | None = None) -> Dataset:
    if cfg.schema is None or (path or cfg.data) is None:
        raise UsageError("--data and --schema are required")
    schema = load_schema(cfg.schema)
    if cfg.task is not None and TASKS[cfg.task] != schema.task:
        raise UsageError(f"--task {cfg.task} does not match the schema's {schema.task} label")
    return load_csv(path or cfg.data, schema)


def _build_config(cfg: RunConfig, ds: Dataset, lam: float | None = None) -> BuildConfig:
    weights = None
    if cfg.index == DTDI and cfg.knn is not None:
        weights = knn_weights(ds, cfg.knn)
    return BuildConfig(tree_class=cfg.tree_class, index=cfg.index,
                       lam=cfg.lam if lam is None else lam, weights=weights,
                       on_zero=cfg.on_zero)


def _solver(cfg: RunConfig) -> SolverOptions:
    return SolverOptions(time_limit=cfg.time_limit, seed=cfg.seed)


def _status_exit(statuses) -> int:
    return EXIT_TIME_LIMIT if any(s == STATUS_TIME_LIMIT for s in statuses) else EXIT_OK


def cmd_audit(cfg: RunConfig, out: Outputs) -> int:
    ds = _load(cfg)
    weights = knn_weights(ds, cfg.knn) if cfg.knn is not None else None
    doc = audit(ds, None, weights, cfg.on_zero, cfg.bins)
    doc["schema_fingerprint"] = ds.schema.fingerprint()
    out.write("audit.json", _json_text(doc))
    if "gamma" in doc:
        g = doc["gamma"]
        rows = [{"bin": k, "lo": g["edges"][k], "hi": g["edges"][k + 1], "count": c,
                 "zero_bin": int(k == g["zero_bin"])} for k, c in enumerate(g["counts"])]
        out.write("gamma_histogram.csv", _csv_text(["bin", "lo", "hi", "count", "zero_bin"], rows))
    return EXIT_OK


def _fit_parts(cfg: RunConfig):
    raw = _load(cfg)
    ds, norm = normalize(raw)
    test = norm.apply(_load(cfg, cfg.test_data)) if cfg.test_data else None
    return ds, norm, test


def _save_tree(out: Outputs, rep: FitReport, norm, name: str = "model.json") -> None:
    tree = DecisionTree(rep.tree.shape, rep.tree.branches, rep.tree.leaves, rep.tree.schema,
                        norm, rep.tree.schema_fingerprint)
    out.write(name, tree.to_json())


def cmd_train(cfg: RunConfig, out: Outputs) -> int:
    ds, norm, test = _fit_parts(cfg)
    rep = fit(ds, TreeShape(cfg.depth), _build_config(cfg, ds), _solver(cfg), test=test)
    _save_tree(out, rep, norm)
    out.write("fit_report.json", _json_text(_report_doc(rep)))
    out.write("tradeoff.csv", _csv_text(TRADEOFF_COLUMNS, _trade_rows([rep.row()], cfg.wall_times)))
    out.write("bound_trace.csv", _trace_csv(rep, cfg.wall_times))
    out.timings["solve_seconds"] = rep.seconds
    return _status_exit([rep.status])


def cmd_sweep(cfg: RunConfig, out: Outputs) -> int:
    ds, norm, test = _fit_parts(cfg)
    res = lambda_sweep(ds, test, TreeShape(cfg.depth), _build_config(cfg, ds), _solver(cfg),
                       cfg.sweep_step, cfg.sweep_threshold, cfg.lambda_max)
    rows = [rep.row() for _, rep in res.points]
    out.write("tradeoff.csv", _csv_text(TRADEOFF_COLUMNS, _trade_rows(rows, cfg.wall_times)))
    sel = res.selected
    _save_tree(out, sel, norm)
    out.write("sweep.json", _json_text({
        "selected_lambda": res.selected_lambda, "reason": res.reason,
        "selected": _report_doc(sel),
        "levels": [{"lambda": lam, "train_level": rep.train.level} for lam, rep in res.points],
    }))
    out.write("bound_trace.csv", _trace_csv(sel, cfg.wall_times))
    out.timings["solve_seconds"] = [rep.seconds for _, rep in res.points]
    return _status_exit(rep.status for _, rep in res.points)


def cmd_cv(cfg: RunConfig, out: Outputs) -> int:
    raw = _load(cfg)
    plan = make_folds(raw, cfg.folds, cfg.seed)
    base = BuildConfig(tree_class=cfg.tree_class, index=cfg.index, lam=cfg.lam,
                       on_zero=cfg.on_zero)
    knn = cfg.knn if cfg.index == DTDI else None
    fixed = cfg.lam if cfg.extra.get("fixed_lambda") else None
    res = cross_validate(raw, plan, TreeShape(cfg.depth), base, _solver(cfg), cfg.sweep_step,
                         cfg.sweep_threshold, cfg.lambda_max, knn=knn, fixed_lambda=fixed)
    out.write("tradeoff.csv", _csv_text(TRADEOFF_COLUMNS, _trade_rows(res.rows(), cfg.wall_times)))
    pts = []
    for f, s in enumerate(res.folds):
        rep = s.selected
        pts.append({"fold": f, "lambda": s.selected_lambda, "reason": s.reason,
                    "test_loss": rep.test.loss, "test_index": rep.test.index,
                    "test_level": rep.test.level})
    out.write("cv_points.csv", _csv_text(
        ["fold", "lambda", "reason", "test_loss", "test_index", "test_level"], pts))
    out.write("folds.json", _json_text({"k": plan.k, "seed": plan.seed,
                                        "test_folds": [f.tolist() for f in plan.test_folds]}))
    statuses = [rep.status for s in res.folds for _, rep in s.points]
    out.timings["solve_seconds"] = [[rep.seconds for _, rep in s.points] for s in res.folds]
    return _status_exit(statuses)


def cmd_predict(cfg: RunConfig, out: Outputs) -> int:
    if cfg.data is None:
        raise UsageError("--data is required")
    tree = DecisionTree.from_json(Path(cfg.model).read_text())
    header, rows = read_csv_rows(cfg.data)
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    try:
        ds = dataset_from_rows(tree.schema, header, rows, require_label=False)
        values, errors = _predict(tree, ds), [None] * len(rows)
    except DataError:
        values, errors = [], []
        for r in rows:
            try:
                one = dataset_from_rows(tree.schema, header, [r], require_label=False)
                values.append(_predict(tree, one)[0])
                errors.append(None)
            except DataError as exc:
                values.append(None)
                errors.append(str(exc).replace(", row 1", ""))
    recs = [{"row": k + 1, "prediction": v, "error": e}
            for k, (v, e) in enumerate(zip(values, errors))]
    out.write("predictions.csv", _csv_text(["row", "prediction", "error"], recs))
    return EXIT_INVALID if any(e is not None for e in errors) else EXIT_OK


def _predict(tree: DecisionTree, ds: Dataset) -> list:
    if tree.normalization is not None:
        ds = tree.normalization.apply(ds)
    pred = tree.predict_many(ds)
    if tree.task == CLASSIFICATION:
        return ds.labels_as_strings(pred)
    if tree.normalization is not None:
        pred = tree.normalization.denormalize_labels(pred)
    return [float(v) for v in pred]


def cmd_export_mps(cfg: RunConfig, out: Outputs) -> int:
    ds, _, _ = _fit_parts(cfg)
    tm = build(ds, TreeShape(cfg.depth), _build_config(cfg, ds))
    path = export_mps(tm.model, out.dir / "model.mps")
    out.add(path)
    out.write("build_report.json", _json_text(tm.report))
    return EXIT_OK


COMMANDS = {"audit": cmd_audit, "train": cmd_train, "sweep": cmd_sweep, "cv": cmd_cv,
            "predict": cmd_predict, "export-mps": cmd_export_mps}


def run(cfg: RunConfig) -> int:
    """Execute a parsed configuration and return the exit code."""
    try:
        cfg.check()
        out = Outputs(cfg)
        code = COMMANDS[cfg.command](cfg, out)
    except (UsageError, DataError, FairnessError, BuildError, TreeError) as exc:
        _error("validation", exc)
        return EXIT_INVALID
    except (FitError, ExtractionError) as exc:
        _error("infeasible", exc)
        return EXIT_INFEASIBLE
    out.manifest(code)
    return code


def _error(kind: str, exc: Exception) -> None:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__,
                                 "message": str(exc)}) + "\n")


def main(argv=None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
