"""Command-line front end: fit, path, study, and eval verbs.

All verbs read a single JSON config file (see README for the schema).
Exit codes: 0 success, 2 usage or config error, 3 runtime failure.
Environment overrides: ``SPARSECP_SEED`` (sampling seed) and
``SPARSECP_OUT`` (output directory); command-line flags win over both.
Every floating-point value is written with 17 significant digits.
"""

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .bases import TensorBasis, basis_from_descriptor, design_matrix, eval_matrix
from .bench import (
    VALIDATION_SEED_OFFSET,
    benchmark,
    evaluated_samples,
    read_sample_csv,
    relative_error,
    repetition_study,
    sample_rule,
)
from .errors import SparsecpError
from .greedy import AlsConfig, GreedyConfig, cv_rank_errors, greedy_fit, pick_rank
from .solvers import lars_lasso_path, loo_select
from .tensor import CanonicalModel, deserialize, evaluate_batch, serialize, sparsity_ratios


class ConfigError(Exception):
    """Invalid or incomplete run configuration."""


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p) as handle:
            cfg = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _resolve_seed(cfg: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SPARSECP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SPARSECP_SEED must be an integer, got {env!r}") from exc
    return int(cfg.get("samples", {}).get("seed", cfg.get("seed", 0)))


def _resolve_outdir(cfg: dict, args) -> Path:
    if args.out is not None:
        out = args.out
    else:
        out = os.environ.get("SPARSECP_OUT") or cfg.get("output", {}).get("dir", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_bases(cfg: dict, dimension: int, domain=None) -> TensorBasis:
    spec = cfg.get("bases")
    if spec is None:
        raise ConfigError("config needs a 'bases' entry")
    if isinstance(spec, dict):
        spec = [dict(spec) for _ in range(dimension)]
    if len(spec) != dimension:
        raise ConfigError(f"{len(spec)} basis specs for {dimension} dimensions")
    factors = []
    for k, one in enumerate(spec):
        one = dict(one)
        if "interval" not in one:
            if domain is None:
                raise ConfigError(f"basis {k + 1}: interval required for table input")
            one["interval"] = [domain[k].lower, domain[k].upper]
        one.setdefault("kind", "legendre")
        try:
            factors.append(basis_from_descriptor(one))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"basis {k + 1}: {exc}") from exc
    return TensorBasis(factors)


def _resolve_function_and_samples(cfg: dict, seed: int):
    """Returns (function-or-None, SampleSet with evaluations, basis)."""
    fn_spec = cfg.get("function")
    if fn_spec is None:
        raise ConfigError("config needs a 'function' entry")
    if isinstance(fn_spec, str):
        try:
            f = benchmark(fn_spec)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        basis = _resolve_bases(cfg, f.dimension, f.domain)
        q = _resolve_sample_count(cfg, f.dimension, basis)
        sample = evaluated_samples(f, q, seed)
        return f, sample, basis
    if isinstance(fn_spec, dict) and "csv" in fn_spec:
        path = fn_spec["csv"]
        if not Path(path).is_file():
            raise ConfigError(f"sample table not found: {path}")
        try:
            sample = read_sample_csv(path)
        except SparsecpError as exc:
            raise ConfigError(str(exc)) from exc
        basis = _resolve_bases(cfg, sample.points.shape[1])
        return None, sample, basis
    raise ConfigError("'function' must be a benchmark name or {\"csv\": path}")


def _resolve_sample_count(cfg: dict, dimension: int, basis: TensorBasis) -> int:
    samples = cfg.get("samples", {})
    if "q" in samples:
        q = int(samples["q"])
        if q < 2:
            raise ConfigError("samples.q must be >= 2")
        return q
    rule = samples.get("rule")
    if rule is None:
        raise ConfigError("config needs samples.q or samples.rule")
    degree = max(b.degree for b in basis.factors)
    try:
        return sample_rule(
            float(rule.get("c", 1.0)),
            dimension,
            int(rule.get("m", 1)),
            degree,
            int(rule.get("alpha", 2)),
        )
    except ValueError as exc:
        raise ConfigError(f"samples.rule: {exc}") from exc


def _greedy_config(cfg: dict, seed: int) -> GreedyConfig:
    fit = cfg.get("fit", {})
    try:
        als = AlsConfig(
            regularization=fit.get("regularization", "l1"),
            max_sweeps=int(fit.get("max_sweeps", 50)),
            stagnation_tol=float(fit.get("stagnation_tol", 1e-12)),
            seed=seed,
        )
        return GreedyConfig(
            max_rank=int(fit.get("max_rank", 5)),
            als=als,
            update=fit.get("update", "l1"),
            cv_folds=int(fit.get("cv_folds", 3)),
        )
    except ValueError as exc:
        raise ConfigError(f"fit: {exc}") from exc


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _table_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            value = row[col]
            cells.append(str(value) if isinstance(value, (int, str)) else _fmt(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _table_json(rows, columns) -> str:
    doc = [{col: row[col] for col in columns} for row in rows]
    return json.dumps(doc, indent=1) + "\n"


def _write_table(outdir: Path, stem: str, rows, columns, fmt: str) -> Path:
    if fmt == "json":
        path = outdir / f"{stem}.json"
        _atomic_write(path, _table_json(rows, columns))
    else:
        path = outdir / f"{stem}.csv"
        _atomic_write(path, _table_csv(rows, columns))
    return path


def _report_rows(models, report, cv_errors, function, q_prime, val_seed):
    rows = []
    ndim = models[0].basis.ndim if models else 0
    for i, model in enumerate(models):
        total, per_dim = sparsity_ratios(model)
        row = {
            "m": i + 1,
            "empirical_error": report.per_rank_empirical_error[i],
            "cv_error": cv_errors[i] if i < len(cv_errors) else math.nan,
            "validation_error": (
                relative_error(model, function, q_prime, val_seed)
                if function is not None
                else math.nan
            ),
            "rho_total": total,
        }
        for k in range(ndim):
            row[f"rho_{k + 1}"] = per_dim[k]
        rows.append(row)
    columns = ["m", "empirical_error", "cv_error", "validation_error", "rho_total"]
    columns += [f"rho_{k + 1}" for k in range(ndim)]
    return rows, columns


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    seed = _resolve_seed(cfg, args)
    outdir = _resolve_outdir(cfg, args)
    function, sample, basis = _resolve_function_and_samples(cfg, seed)
    greedy_cfg = _greedy_config(cfg, seed)
    validation = cfg.get("validation", {})
    q_prime = int(validation.get("q_prime", 1000))
    val_seed = int(validation.get("seed", seed + VALIDATION_SEED_OFFSET))

    started = time.perf_counter()
    failure = None
    models, cv_errors = [], []
    report = None
    try:
        cv_errors = list(cv_rank_errors(sample.points, sample.evaluations, basis, greedy_cfg))
        models, report = greedy_fit(sample.points, sample.evaluations, basis, greedy_cfg)
    except SparsecpError as exc:
        failure = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - started

    if models and cv_errors:
        m_op = pick_rank(cv_errors)
        selected = models[min(m_op, len(models)) - 1]
    else:
        m_op, selected = 0, None
    rows, columns = _report_rows(models, report, cv_errors, function, q_prime, val_seed) \
        if report else ([], ["m"])
    table_path = _write_table(outdir, "report_table", rows, columns, args.format)
    metadata = {
        "config": _echo_config(cfg, seed, greedy_cfg, sample, outdir, args.format),
        "versions": {"sparsecp": __version__, "numpy": np.__version__},
        "selected_rank": m_op,
        "effective_rank": selected.effective_rank if selected else 0,
        "cv_errors": [float(e) for e in cv_errors],
        "table_file": table_path.name,
        "timing_seconds": elapsed,
        "status": "error" if failure else "ok",
    }
    if failure:
        metadata["error"] = failure
    _atomic_write(outdir / "report.json", json.dumps(metadata, indent=1, sort_keys=True) + "\n")
    if selected is not None:
        _atomic_write(outdir / "model.json", serialize(selected) + "\n")
    if failure:
        print(f"fit failed: {failure}", file=sys.stderr)
        return 3
    print(f"selected rank {m_op}; wrote {table_path.name}, report.json, model.json in {outdir}")
    return 0


def _echo_config(cfg, seed, greedy_cfg, sample, outdir, fmt) -> dict:
    echo = json.loads(json.dumps(cfg))  # deep copy of the raw config
    echo.setdefault("samples", {})
    echo["samples"]["seed"] = seed
    echo["samples"]["q"] = int(sample.q)
    echo["fit"] = {
        "max_rank": greedy_cfg.max_rank,
        "regularization": greedy_cfg.als.regularization,
        "update": greedy_cfg.update,
        "cv_folds": greedy_cfg.cv_folds,
        "max_sweeps": greedy_cfg.als.max_sweeps,
        "stagnation_tol": greedy_cfg.als.stagnation_tol,
    }
    echo.setdefault("output", {})["dir"] = str(outdir)
    echo["output"]["format"] = fmt
    return echo


def cmd_path(args) -> int:
    cfg = _load_config(args.config)
    seed = _resolve_seed(cfg, args)
    outdir = _resolve_outdir(cfg, args)
    _, sample, basis = _resolve_function_and_samples(cfg, seed)
    path_cfg = cfg.get("path", {})
    dim = int(path_cfg.get("dim", 1))
    if not 1 <= dim <= basis.ndim:
        raise ConfigError(f"path.dim must be in 1..{basis.ndim}")
    factor_values = None
    factors = path_cfg.get("factors")
    if factors is not None:
        if len(factors) != basis.ndim:
            raise ConfigError("path.factors needs one coefficient list per dimension")
        factor_values = []
        for k, coeffs in enumerate(factors):
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape[0] != basis.factors[k].dim:
                raise ConfigError(
                    f"path.factors[{k}] has {coeffs.shape[0]} entries, "
                    f"basis dimension is {basis.factors[k].dim}"
                )
            factor_values.append(eval_matrix(basis.factors[k], sample.points[:, k]) @ coeffs)
    phi = design_matrix(basis, sample.points, dim - 1, factor_values)
    try:
        path = lars_lasso_path(phi, sample.evaluations)
        loo_select(path, phi, sample.evaluations)
    except SparsecpError as exc:
        print(f"path failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    rows = []
    for j, step in enumerate(path.steps):
        rows.append({
            "step": j,
            "lambda": step.lam,
            "l1_norm": float(np.sum(np.abs(step.coefficients))),
            "active_count": len(step.active_set),
            "loo_error": step.loo_error if step.loo_error is not None else math.nan,
        })
    out = _write_table(outdir, "path", rows,
                       ["step", "lambda", "l1_norm", "active_count", "loo_error"],
                       args.format)
    print(f"wrote {out}")
    return 0


# set of study grid keys and how they act on a cell config
_GRID_KEYS = ("degree", "pieces", "levels", "q", "c", "alpha", "rank",
              "max_rank", "regularization", "update")


def _study_cells(cfg: dict, seed: int) -> list:
    study = cfg.get("study")
    if not isinstance(study, dict) or not isinstance(study.get("grid"), dict):
        raise ConfigError("study config needs a 'study.grid' object")
    grid = study["grid"]
    for key in grid:
        if key not in _GRID_KEYS:
            raise ConfigError(f"study.grid key {key!r} not in {_GRID_KEYS}")
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError(f"study.grid.{key} must be a nonempty list")
    fn_spec = cfg.get("function")
    if not isinstance(fn_spec, str):
        raise ConfigError("study runs need a named benchmark function")
    try:
        f = benchmark(fn_spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    reps = int(study.get("repetitions", 11))
    if reps < 1:
        raise ConfigError("study.repetitions must be >= 1")
    keys = sorted(grid)
    cells = []
    for combo in product(*(grid[k] for k in keys)):
        swept = dict(zip(keys, combo))
        cells.append(_one_cell(cfg, f, swept, study, seed, reps))
    return cells


def _one_cell(cfg, f, swept, study, seed, reps) -> dict:
    base_fit = dict(cfg.get("fit", {}))
    for key in ("regularization", "update", "max_rank"):
        if key in swept:
            base_fit[key] = swept[key]
    rank = swept.get("rank", study.get("rank"))
    if rank is not None and "max_rank" not in swept and "max_rank" not in base_fit:
        base_fit["max_rank"] = int(rank)
    cell_cfg = dict(cfg)
    cell_cfg["fit"] = base_fit
    bases = cfg.get("bases")
    if isinstance(bases, dict):
        bases = [dict(bases) for _ in range(f.dimension)]
    elif bases is None:
        bases = [{"kind": "legendre"} for _ in range(f.dimension)]
    else:
        bases = [dict(b) for b in bases]
    for b in bases:
        for key in ("degree", "pieces", "levels"):
            if key in swept:
                b[key] = int(swept[key])
    cell_cfg["bases"] = bases
    samples = dict(cfg.get("samples", {}))
    if "q" in swept:
        samples = {"q": int(swept["q"])}
    elif "c" in swept or "alpha" in swept:
        rule = dict(samples.get("rule", {}))
        if "c" in swept:
            rule["c"] = float(swept["c"])
        if "alpha" in swept:
            rule["alpha"] = int(swept["alpha"])
        rule.setdefault("m", int(rank) if rank is not None else 1)
        samples = {"rule": rule}
    cell_cfg["samples"] = samples
    return {
        "config": cell_cfg,
        "swept": swept,
        "benchmark": f.name,
        "rank": int(rank) if rank is not None else None,
        "seeds": [seed + r for r in range(reps)],
        "q_prime": int(cfg.get("validation", {}).get("q_prime", 1000)),
    }


def _run_study_cell(cell: dict) -> dict:
    """Worker for one study cell; must stay importable for process pools."""
    swept = cell["swept"]
    row = {"status": "failed", "repetitions": len(cell["seeds"]), "failures": 0,
           "q": 0, "mean_error": math.nan, "min_error": math.nan,
           "max_error": math.nan, "mean_rank": math.nan}
    row.update({k: swept[k] for k in swept})
    try:
        f = benchmark(cell["benchmark"])
        basis = _resolve_bases(cell["config"], f.dimension, f.domain)
        q = _resolve_sample_count(cell["config"], f.dimension, basis)
        greedy_cfg = _greedy_config(cell["config"], cell["seeds"][0])
        summary = repetition_study(
            f, basis, q, greedy_cfg, cell["seeds"],
            rank=cell["rank"], q_prime=cell["q_prime"],
        )
    except (SparsecpError, ConfigError, ValueError) as exc:
        row["note"] = f"{type(exc).__name__}: {exc}"
        return row
    row["q"] = q
    row["failures"] = len(summary.failures)
    if summary.errors:
        row["status"] = "ok" if not summary.failures else "partial"
        row["mean_error"] = summary.mean_error
        row["min_error"] = summary.min_error
        row["max_error"] = summary.max_error
        row["mean_rank"] = float(np.mean(summary.selected_ranks))
    return row


def cmd_study(args) -> int:
    cfg = _load_config(args.config)
    seed = _resolve_seed(cfg, args)
    outdir = _resolve_outdir(cfg, args)
    cells = _study_cells(cfg, seed)
    jobs = args.jobs or os.cpu_count() or 1
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_study_cell, cells))
    else:
        rows = [_run_study_cell(cell) for cell in cells]
    swept_keys = sorted({k for cell in cells for k in cell["swept"]})
    columns = ["cell"] + swept_keys + ["q", "status", "repetitions", "failures",
                                       "mean_error", "min_error", "max_error", "mean_rank"]
    for i, row in enumerate(rows):
        row["cell"] = i
        for key in swept_keys:
            row.setdefault(key, "")
        row.pop("note", None)
    out = _write_table(outdir, "study", rows, columns, args.format)
    n_ok = sum(1 for row in rows if row["status"] in ("ok", "partial"))
    print(f"wrote {out} ({n_ok}/{len(rows)} cells succeeded)")
    return 0 if n_ok else 3


def _parse_point(text: str) -> list:
    try:
        return [float(part) for part in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --point {text!r}: {exc}") from exc


def _read_points_csv(path: str, ndim: int) -> list:
    """Point rows from a CSV with header x1..xd (a trailing y is ignored)."""
    import csv as _csv

    if not Path(path).is_file():
        raise ConfigError(f"points file not found: {path}")
    with open(path, newline="") as handle:
        reader = _csv.reader(handle)
        header = [h.strip() for h in next(reader, [])]
        coords = [f"x{i + 1}" for i in range(ndim)]
        if header not in (coords, coords + ["y"]):
            raise ConfigError(f"{path}: header must be {','.join(coords)}[,y]")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(cell) for cell in row[:ndim]])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return rows


def cmd_eval(args) -> int:
    model_path = Path(args.model)
    if not model_path.is_file():
        raise ConfigError(f"model file not found: {args.model}")
    try:
        model = deserialize(model_path.read_text())
    except SparsecpError as exc:
        print(f"eval failed: {exc}", file=sys.stderr)
        return 3
    points = [_parse_point(p) for p in args.point or []]
    if args.points:
        points.extend(_read_points_csv(args.points, model.basis.ndim))
    if not points:
        raise ConfigError("eval needs --point or --points")
    coords = np.array(points, dtype=float)
    try:
        values = evaluate_batch(model, coords)
    except SparsecpError as exc:
        print(f"eval failed: {exc}", file=sys.stderr)
        return 3
    if args.format == "json":
        print(json.dumps([float(v) for v in values]))
    else:
        for v in values:
            print(_fmt(v))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsecp",
        description="Fit sparse low-rank canonical models from sampled functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides config and SPARSECP_OUT)")
        p.add_argument("--seed", type=int, help="sampling seed (overrides config and SPARSECP_SEED)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="table output format")

    p_fit = sub.add_parser("fit", help="fit a model and write report + model files")
    common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_path = sub.add_parser("path", help="dump the lasso regularization path")
    common(p_path)
    p_path.set_defaults(func=cmd_path)

    p_study = sub.add_parser(
        "study",
        help="run a configuration grid with repetitions",
        description=(
            "Aggregated table columns: cell, the swept grid keys "
            f"({', '.join(_GRID_KEYS)}), q, status (ok/partial/failed), "
            "repetitions, failures, mean_error, min_error, max_error, mean_rank."
        ),
    )
    common(p_study)
    p_study.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    p_study.set_defaults(func=cmd_study)

    p_eval = sub.add_parser("eval", help="evaluate a saved model at points")
    p_eval.add_argument("--model", required=True, help="model.json produced by fit")
    p_eval.add_argument("--point", action="append", help="comma-separated coordinates")
    p_eval.add_argument("--points", help="CSV of points (header x1,...,xd,y; y ignored)")
    p_eval.add_argument("--format", choices=("csv", "json"), default="csv")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SparsecpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
