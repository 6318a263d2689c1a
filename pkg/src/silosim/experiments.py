"""Experiment matrices, the single-agent baseline, on-disk results and aggregate tables."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable

from .analysis import classify
from .core import Protocol, RunConfig, RunLog, TaskInstance, as_task_id, canonical_json
from .metrics import compute_metrics, rcc
from .policies import scripted_factory
from .runtime import PolicyFactory, run_episode
from .taskgen import GenSpec, all_task_ids, derive_seed, generate

log = logging.getLogger(__name__)

DEFAULT_SCALES = (2, 5, 10, 20, 50, 100)
DEFAULT_PROTOCOLS = ("P2P", "BP", "SFS")
BASELINE_MODEL = "scripted:oracle"
CELL_FILES = ("cell.json", "instance.json", "runlog.jsonl", "metrics.json", "failure.json")


def parse_tasks(spec: str | Iterable[str] | None) -> list[str]:
    """``all``, a level (``I``/``II``/``III``) or explicit ids, comma separated."""
    if spec is None:
        return [str(t) for t in all_task_ids()]
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    out: list[str] = []
    for raw in (i.strip() for i in items):
        if not raw:
            continue
        if raw.lower() == "all":
            out.extend(str(t) for t in all_task_ids())
        elif raw in ("I", "II", "III"):
            out.extend(str(t) for t in all_task_ids() if t.level.value == raw)
        else:
            out.append(str(as_task_id(raw)))
    return list(dict.fromkeys(out))


@dataclass(frozen=True)
class Cell:
    task_id: str
    n_agents: int
    protocol: str
    model: str
    master_seed: int = 0
    r_max: int = 100
    action_budget: int = 8
    scaffold: tuple[str, ...] = ()
    pcs_tolerance: float = 0.01
    shard_size: int | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scaffold"] = sorted(self.scaffold)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Cell":
        data = {k: v for k, v in data.items() if k in {f.name for f in fields(cls)}}
        data["scaffold"] = tuple(data.get("scaffold", ()))
        return cls(**data)

    @property
    def key(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()[:20]

    @property
    def seed(self) -> int:
        return derive_seed(self.master_seed, self.task_id, self.n_agents, self.protocol, self.model)

    def run_config(self) -> RunConfig:
        return RunConfig(
            n_agents=self.n_agents,
            protocol=Protocol(self.protocol),
            model=self.model,
            r_max=self.r_max,
            action_budget=self.action_budget,
            master_seed=self.master_seed,
            scaffold=frozenset(self.scaffold),
            pcs_tolerance=self.pcs_tolerance,
        )


@dataclass(frozen=True)
class ExperimentMatrix:
    tasks: tuple[str, ...] = ()
    scales: tuple[int, ...] = DEFAULT_SCALES
    protocols: tuple[str, ...] = DEFAULT_PROTOCOLS
    models: tuple[str, ...] = ("scripted:optimal",)
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "results"
    r_max: int = 100
    action_budget: int = 8
    scaffold: tuple[str, ...] = ()
    pcs_tolerance: float = 0.01
    shard_size: int | None = None
    parallelism: int = 4
    baseline: bool = True
    endpoint: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(parse_tasks(self.tasks or None)))
        for p in self.protocols:
            Protocol(p)
        if any(n < 1 for n in self.scales):
            raise ValueError("scales must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentMatrix":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown matrix settings: {sorted(unknown)}")
        data = dict(data)
        for key in ("tasks", "scales", "protocols", "models", "seeds", "scaffold"):
            if key in data and data[key] is not None:
                value = data[key]
                data[key] = tuple(value.split(",")) if isinstance(value, str) else tuple(value)
        if "scales" in data:
            data["scales"] = tuple(int(n) for n in data["scales"])
        if "seeds" in data:
            data["seeds"] = tuple(int(s) for s in data["seeds"])
        return cls(**data)

    def _cell(self, task: str, n: int, protocol: str, model: str, seed: int) -> Cell:
        return Cell(task, n, protocol, model, seed, self.r_max, self.action_budget, tuple(sorted(self.scaffold)),
                    self.pcs_tolerance, self.shard_size)

    def cells(self) -> list[Cell]:
        return [
            self._cell(t, n, p, m, s)
            for t, n, p, m, s in itertools.product(self.tasks, self.scales, self.protocols, self.models, self.seeds)
        ]

    def baseline_cells(self) -> list[Cell]:
        return [self._cell(t, 1, "P2P", BASELINE_MODEL, s) for t, s in itertools.product(self.tasks, self.seeds)]

    @property
    def size(self) -> int:
        return len(self.tasks) * len(self.scales) * len(self.protocols) * len(self.models) * len(self.seeds)


# --------------------------------------------------------------------------- #
# Running cells
# --------------------------------------------------------------------------- #


def make_factory(model: str, instance: TaskInstance, config: RunConfig, endpoint: dict | None = None):
    """Returns (policy factory, cleanup callable, worker count)."""
    kind, _, name = model.partition(":")
    if kind == "scripted":
        return scripted_factory(name, instance), (lambda: None), 1
    if kind == "llm":
        from .llm import ChatClient, ChatEndpointConfig, chat_factory

        opts = dict(endpoint or {})
        cap = opts.pop("context_cap", None)
        client = ChatClient(ChatEndpointConfig.from_env(name, **opts))
        try:
            client.probe()
        except Exception:
            client.close()
            raise
        factory: PolicyFactory = chat_factory(client, instance, config, **({"context_cap": cap} if cap else {}))
        return factory, client.close, client.config.max_in_flight
    raise ValueError(f"unknown model {model!r}; use scripted:<policy> or llm:<model>")


@dataclass(frozen=True)
class CellResult:
    cell: Cell
    status: str  # executed, skipped or failed
    path: Path
    error: str | None = None


def _write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def _pretty(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def run_cell(cell: Cell, out_dir: str | Path, endpoint: dict | None = None) -> CellResult:
    path = Path(out_dir) / "cells" / cell.key
    if (path / "metrics.json").exists():
        return CellResult(cell, "skipped", path)
    path.mkdir(parents=True, exist_ok=True)
    try:
        instance = generate(GenSpec(cell.task_id, cell.n_agents, seed=cell.seed, shard_size=cell.shard_size))
        config = cell.run_config()
        factory, cleanup, workers = make_factory(cell.model, instance, config, endpoint)
        try:
            runlog = run_episode(instance, config, factory, max_workers=workers)
        finally:
            cleanup()
        metrics = compute_metrics(runlog, instance)
        failure = classify(runlog, instance, metrics)
    except Exception as exc:  # one broken cell must not stop the matrix
        log.error("cell %s failed: %s", cell.key, exc)
        _write(path / "error.json", _pretty({"cell": cell.to_dict(), "error": f"{type(exc).__name__}: {exc}"}))
        return CellResult(cell, "failed", path, str(exc))
    (path / "error.json").unlink(missing_ok=True)
    _write(path / "cell.json", _pretty({**cell.to_dict(), "seed": cell.seed, "key": cell.key}))
    _write(path / "instance.json", canonical_json(instance.to_dict()) + "\n")
    _write(path / "runlog.jsonl", runlog.to_jsonl())
    _write(path / "failure.json", _pretty(failure.to_dict()))
    _write(path / "metrics.json", _pretty({**metrics.to_dict(), "pcs_tolerance": cell.pcs_tolerance}))  # last: its presence marks the cell done
    return CellResult(cell, "executed", path)


def run_cells(cells: list[Cell], out_dir: str | Path, parallelism: int = 4, endpoint: dict | None = None) -> list[CellResult]:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    if parallelism <= 1:
        return [run_cell(c, out_dir, endpoint) for c in cells]
    with ThreadPoolExecutor(parallelism) as pool:
        return list(pool.map(lambda c: run_cell(c, out_dir, endpoint), cells))


def run_matrix(matrix: ExperimentMatrix) -> list[CellResult]:
    cells = matrix.cells() + (matrix.baseline_cells() if matrix.baseline else [])
    out = Path(matrix.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "matrix.json", _pretty({k: v for k, v in asdict(matrix).items() if k != "endpoint"}))
    return run_cells(cells, out, matrix.parallelism, matrix.endpoint)


def run_baseline(tasks: Iterable[str] | str | None, seeds: Iterable[int], out_dir: str | Path,
                 model: str = BASELINE_MODEL, parallelism: int = 4) -> dict[str, float]:
    """Single-agent runs holding the whole input; returns mean S per task."""
    task_ids = parse_tasks(tasks)
    cells = [Cell(t, 1, "P2P", model, s) for t, s in itertools.product(task_ids, seeds)]
    results = run_cells(cells, out_dir, parallelism)
    by_task: dict[str, list[float]] = {}
    for res in results:
        if res.status == "failed":
            continue
        metrics = json.loads((res.path / "metrics.json").read_text())
        by_task.setdefault(res.cell.task_id, []).append(metrics["S"])
    return {t: sum(v) / len(v) for t, v in by_task.items()}


# --------------------------------------------------------------------------- #
# Aggregation
# --------------------------------------------------------------------------- #

LABELS = ("PrematureSubmission", "ConsensusFailure", "ComputationError")


def load_results(out_dir: str | Path) -> list[dict]:
    rows = []
    for cell_dir in sorted((Path(out_dir) / "cells").glob("*")):
        metrics_path = cell_dir / "metrics.json"
        if not metrics_path.exists():
            continue
        cell = json.loads((cell_dir / "cell.json").read_text())
        metrics = json.loads(metrics_path.read_text())
        failure = json.loads((cell_dir / "failure.json").read_text())
        tid = as_task_id(cell["task_id"])
        rows.append({
            "key": cell["key"],
            "task_id": str(tid),
            "level": tid.level.value,
            "n_agents": cell["n_agents"],
            "protocol": cell["protocol"],
            "model": cell["model"],
            "S": metrics["S"],
            "P": metrics["P"],
            "C": metrics["C"],
            "D": metrics["D"],
            "success": metrics["success"],
            "labels": failure["labels"],
        })
    return rows


def _mean(values: list[float]) -> float | None:
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def _group(rows: list[dict], key: str, order: list) -> list[dict]:
    out = []
    for value in order:
        group = [r for r in rows if r[key] == value]
        if not group:
            continue
        out.append({
            key: value,
            "runs": len(group),
            "SR": 100 * _mean([r["S"] for r in group]),
            "PCS": 100 * _mean([r["P"] for r in group]),
            "Token": _mean([r["C"] for r in group]),
            "Density": _mean([r["D"] for r in group]),
        })
    return out


def rcc_table(rows: list[dict]) -> list[dict]:
    baseline = [r for r in rows if r["n_agents"] == 1]
    multi = [r for r in rows if r["n_agents"] > 1]
    out = []
    for k in sorted({r["n_agents"] for r in multi}):
        for level in ("I", "II", "III"):
            single = _mean([r["S"] for r in baseline if r["level"] == level])
            at_k = _mean([r["S"] for r in multi if r["level"] == level and r["n_agents"] == k])
            if single is None or at_k is None:
                continue
            value = rcc(at_k, single)
            out.append({
                "k": k,
                "level": level,
                "SR(N=1)": 100 * single,
                "SR(N=k)": 100 * at_k,
                "RCC": None if value is None else 100 * value,
            })
    return out


def failure_table(rows: list[dict]) -> tuple[list[dict], list[dict]]:
    multi = [r for r in rows if r["n_agents"] > 1]
    total = len(multi)
    dist = []
    for label in LABELS:
        count = sum(1 for r in multi if label in r["labels"])
        dist.append({"mode": label, "count": count, "percent": 100 * count / total if total else 0.0})
    co = []
    for a in LABELS:
        row: dict[str, Any] = {"mode": a}
        for b in LABELS:
            row[b] = sum(1 for r in multi if a in r["labels"] and b in r["labels"])
        co.append(row)
    return dist, co


def _fmt(value: Any, column: str = "") -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.3f}" if column == "Density" else f"{value:.1f}"
    return str(value)


def to_csv(table: list[dict]) -> str:
    if not table:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(table[0]), lineterminator="\n")
    writer.writeheader()
    for row in table:
        writer.writerow({k: _fmt(v, k) for k, v in row.items()})
    return buf.getvalue()


def to_markdown(table: list[dict]) -> str:
    if not table:
        return ""
    cols = list(table[0])
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    lines += ["| " + " | ".join(_fmt(row[c], c) for c in cols) + " |" for row in table]
    return "\n".join(lines) + "\n"


def aggregate(out_dir: str | Path, write: bool = True) -> dict[str, list[dict]]:
    rows = load_results(out_dir)
    if not rows:
        raise ValueError(f"no completed results under {out_dir}")
    multi = [r for r in rows if r["n_agents"] > 1]
    dist, co = failure_table(rows)
    tables = {
        "by_protocol": _group(multi, "protocol", list(DEFAULT_PROTOCOLS)),
        "by_level": _group(multi, "level", ["I", "II", "III"]),
        "by_scale": _group(multi, "n_agents", sorted({r["n_agents"] for r in multi})),
        "rcc": rcc_table(rows),
        "failure_modes": dist,
        "failure_cooccurrence": co,
    }
    if write:
        target = Path(out_dir) / "tables"
        target.mkdir(parents=True, exist_ok=True)
        for name, table in tables.items():
            _write(target / f"{name}.csv", to_csv(table))
            _write(target / f"{name}.md", to_markdown(table))
    return tables


def load_run(cell_dir: str | Path) -> tuple[RunLog, TaskInstance]:
    cell_dir = Path(cell_dir)
    instance = TaskInstance.from_dict(json.loads((cell_dir / "instance.json").read_text()))
    return RunLog.read(cell_dir / "runlog.jsonl"), instance
