"""Command-line entry point.

Exit codes: 0 success, 1 some cells failed, 2 bad configuration,
3 a single run stopped at the round limit before every agent submitted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import experiments as ex
from .analysis import comm_matrix, matrix_csv
from .core import RunLog, canonical_json
from .taskgen import GenSpec, InfeasibleParameters, generate

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_ROUND_LIMIT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in _csv_list(text)]


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _merge(args: argparse.Namespace, names: Sequence[str], defaults: dict) -> dict:
    """flags > config file > defaults."""
    merged = dict(defaults)
    merged.update({k: v for k, v in _load_config(getattr(args, "config", None)).items()})
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return merged


def _cell_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with settings; flags override it")
    p.add_argument("--r-max", dest="r_max", type=int)
    p.add_argument("--budget", dest="action_budget", type=int)
    p.add_argument("--scaffold", type=_csv_list, help="comma separated scaffold names")
    p.add_argument("--pcs-tolerance", dest="pcs_tolerance", type=float)
    p.add_argument("--shard-size", dest="shard_size", type=int)
    p.add_argument("--out", dest="out_dir")


CELL_DEFAULTS = {"r_max": 100, "action_budget": 8, "scaffold": [], "pcs_tolerance": 0.01, "shard_size": None}
CELL_FLAGS = ("task_id", "n_agents", "protocol", "model", "master_seed", *CELL_DEFAULTS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="silosim", description="Distributed-information multi-agent benchmark harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit a task instance as JSON")
    p.add_argument("--task", dest="task_id", required=True)
    p.add_argument("--agents", dest="n_agents", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shard-size", dest="shard_size", type=int)
    p.add_argument("--params", type=json.loads, default={}, help="JSON object of generator parameters")
    p.add_argument("--blind", action="store_true", help="omit the ground truth")
    p.add_argument("--out", help="file to write instead of stdout")

    p = sub.add_parser("run", help="run one cell and store its artifacts")
    p.add_argument("--task", dest="task_id")
    p.add_argument("--agents", dest="n_agents", type=int)
    p.add_argument("--protocol")
    p.add_argument("--model", help="scripted:<policy> or llm:<model>")
    p.add_argument("--seed", dest="master_seed", type=int)
    _cell_options(p)

    p = sub.add_parser("matrix", help="run the full factorial design")
    p.add_argument("--tasks")
    p.add_argument("--scales", type=_int_list)
    p.add_argument("--protocols", type=_csv_list)
    p.add_argument("--models", type=_csv_list)
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--no-baseline", dest="baseline", action="store_const", const=False)
    _cell_options(p)

    p = sub.add_parser("baseline", help="single-agent runs with the whole input")
    p.add_argument("--tasks")
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--model", default=ex.BASELINE_MODEL)
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--out", dest="out_dir", default="results")

    p = sub.add_parser("aggregate", help="build summary tables from a result directory")
    p.add_argument("results")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")

    p = sub.add_parser("heatmap", help="communication matrix of a run as CSV")
    p.add_argument("runlog", help="runlog.jsonl or a cell directory")
    p.add_argument("--rounds", type=_int_list, help="restrict to these rounds")
    p.add_argument("--out")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args: argparse.Namespace) -> int:
    instance = generate(GenSpec(args.task_id, args.n_agents, seed=args.seed, shard_size=args.shard_size, params=args.params))
    _emit(canonical_json(instance.to_dict(include_truth=not args.blind)) + "\n", args.out)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    settings = _merge(args, CELL_FLAGS + ("out_dir",),
                      {**CELL_DEFAULTS, "protocol": "P2P", "model": "scripted:optimal", "master_seed": 0,
                       "out_dir": "results"})
    out_dir = settings.pop("out_dir")
    endpoint = settings.pop("endpoint", None)
    missing = [k for k in ("task_id", "n_agents") if settings.get(k) is None]
    if missing:
        raise ConfigError(f"missing settings: {missing}")
    try:
        cell = ex.Cell.from_dict(settings)
        cell.run_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    result = ex.run_cell(cell, out_dir, endpoint)
    if result.status == "failed":
        print(f"cell failed: {result.error}", file=sys.stderr)
        return EXIT_PARTIAL
    metrics = json.loads((result.path / "metrics.json").read_text())
    failure = json.loads((result.path / "failure.json").read_text())
    print(json.dumps({"cell": cell.key, "path": str(result.path), "status": result.status,
                      "metrics": {k: metrics[k] for k in ("S", "P", "C", "D", "success")},
                      "labels": failure["labels"]}, indent=2))
    terminated = RunLog.read(result.path / "runlog.jsonl").terminated_by
    return EXIT_ROUND_LIMIT if terminated == "round_limit" else EXIT_OK


MATRIX_FLAGS = ("tasks", "scales", "protocols", "models", "seeds", "parallelism", "baseline", "out_dir", *CELL_DEFAULTS)


def cmd_matrix(args: argparse.Namespace) -> int:
    settings = _merge(args, MATRIX_FLAGS, {})
    try:
        matrix = ex.ExperimentMatrix.from_dict(settings)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    results = ex.run_matrix(matrix)
    counts = {s: sum(1 for r in results if r.status == s) for s in ("executed", "skipped", "failed")}
    print(json.dumps({"out_dir": matrix.out_dir, **counts}))
    return EXIT_PARTIAL if counts["failed"] else EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    table = ex.run_baseline(args.tasks, args.seeds, args.out_dir, args.model, args.parallelism)
    rows = [{"task": t, "SR(N=1)": 100 * sr} for t, sr in table.items()]
    sys.stdout.write(ex.to_markdown(rows))
    expected = len(ex.parse_tasks(args.tasks))
    return EXIT_OK if len(table) == expected else EXIT_PARTIAL


def cmd_aggregate(args: argparse.Namespace) -> int:
    tables = ex.aggregate(args.results)
    render = ex.to_markdown if args.format == "markdown" else ex.to_csv
    for name, table in tables.items():
        sys.stdout.write(f"## {name}\n\n{render(table)}\n")
    return EXIT_OK


def cmd_heatmap(args: argparse.Namespace) -> int:
    path = Path(args.runlog)
    if path.is_dir():
        path = path / "runlog.jsonl"
    mat = comm_matrix(RunLog.read(path), args.rounds)
    _emit(matrix_csv(mat), args.out)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "matrix": cmd_matrix,
    "baseline": cmd_baseline,
    "aggregate": cmd_aggregate,
    "heatmap": cmd_heatmap,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InfeasibleParameters, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
