"""Scenario sweeps, solver comparison reports and complexity counters."""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .channel import generate_channel
from .config import ConfigError, NetworkConfig
from .dataset import sample_seed
from .dqn import DqnHyper, SlicingEnv, greedy_rollout, train_dqn
from .esa import DEFAULT_BUDGET, PowerGrid, nominal_cost, solve_esa, structural_count
from .nn import file_digest
from .ssvae import SsvaeModel, predict_allocation, project_feasible
from .system import check_feasible, objective

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SWEEP_VARIABLES = ("num_ues", "p_ru_max", "p_slice_max", "n_labeled")
SOLVERS = ("esa", "dqn", "ssvae")
REPORT_COLUMNS = ("solver", "variable", "value", "seed", "config_sha256", "status", "objective", "feasible",
                  "violations", "evaluated", "pruned", "env_steps", "checkpoint", "error")
SUMMARY_COLUMNS = ("solver", "variable", "value", "n_ok", "n_failed", "objective_mean",
                   "objective_std", "feasible_fraction", "violations_mean")


def config_for(base: NetworkConfig, variable: str, value) -> NetworkConfig:
    """Scenario at one sweep point. UE counts split as ceil/floor between eMBB and URLLC."""
    if variable == "num_ues":
        v = int(value)
        if v < 2:
            raise ConfigError("num_ues sweep values must be >= 2")
        return base.replace(num_ues_embb=v - v // 2, num_ues_urllc=v // 2)
    if variable == "p_ru_max":
        return base.replace(p_ru_max=float(value))
    if variable == "p_slice_max":
        return base.replace(p_slice_max=float(value))
    if variable == "n_labeled":
        return base
    raise ConfigError(f"unknown sweep variable {variable!r}")


@dataclass
class ScenarioSweep:
    base: NetworkConfig
    variable: str
    values: tuple
    seeds: tuple = (0, 1, 2, 3, 4)
    solvers: tuple = ("esa", "dqn", "ssvae")
    grid_levels: tuple | None = None
    n_levels: int = 3
    budget: int | None = DEFAULT_BUDGET
    checkpoints: dict = field(default_factory=dict)
    dqn: dict = field(default_factory=dict)
    channel_seed: int = 1000

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"variable must be one of {', '.join(SWEEP_VARIABLES)}")
        self.values = tuple(self.values)
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if isinstance(self.seeds, int):
            self.seeds = tuple(range(self.seeds))
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("need at least one seed per point")
        self.solvers = tuple(self.solvers)
        bad = sorted(set(self.solvers) - set(SOLVERS))
        if bad:
            raise ConfigError(f"unknown solver(s): {', '.join(bad)}")
        DqnHyper.from_overrides(self.dqn)

    def grid(self) -> PowerGrid:
        """One absolute grid for every sweep point, so raising a cap only adds levels."""
        if self.grid_levels is not None:
            return PowerGrid(tuple(self.grid_levels))
        return PowerGrid.for_config(self.base, self.n_levels)

    def checkpoint_for(self, value):
        ck = self.checkpoints
        if isinstance(ck, (str, Path)):
            return Path(ck)
        for key in (value, str(value), "default"):
            if key in ck:
                return Path(ck[key])
        return None

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ScenarioSweep":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported sweep schema_version {version}")
        known = {"base", "variable", "values", "seeds", "solvers", "grid_levels", "n_levels",
                 "budget", "checkpoints", "dqn", "channel_seed"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown sweep keys: {', '.join(unknown)}")
        base = d.pop("base", {})
        if isinstance(base, str):
            from .config import load_config
            path = Path(base) if base_dir is None or Path(base).is_absolute() else Path(base_dir) / base
            base = load_config(path)
        else:
            base = NetworkConfig.from_dict(base or {})
        ck = d.get("checkpoints") or {}
        if base_dir is not None:
            rel = lambda p: str(p if Path(p).is_absolute() else Path(base_dir) / p)
            ck = rel(ck) if isinstance(ck, str) else {k: rel(v) for k, v in ck.items()}
        d["checkpoints"] = ck
        for key in ("values", "seeds", "solvers", "grid_levels"):
            if isinstance(d.get(key), list):
                d[key] = tuple(d[key])
        return cls(base=base, **d)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "base": self.base.to_dict(),
                "variable": self.variable, "values": list(self.values),
                "seeds": list(self.seeds), "solvers": list(self.solvers),
                "grid_levels": list(self.grid().levels), "budget": self.budget,
                "checkpoints": ({str(k): str(v) for k, v in self.checkpoints.items()}
                                if isinstance(self.checkpoints, dict) else str(self.checkpoints)),
                "dqn": dict(self.dqn), "channel_seed": self.channel_seed}


def load_sweep(path) -> ScenarioSweep:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key/value document")
    return ScenarioSweep.from_dict(data, base_dir=path.parent)


@dataclass
class Cell:
    solver: str
    variable: str
    value: object
    seed: int
    config_sha256: str = ""
    status: str = "ok"
    objective: float = math.nan
    feasible: bool = False
    violations: int = 0
    evaluated: int = 0
    pruned: int = 0
    env_steps: int = 0
    checkpoint: str = ""
    error: str = ""
    wall_time: float = 0.0
    alloc: object = None


@dataclass
class ComparisonReport:
    sweep: ScenarioSweep
    cells: list[Cell] = field(default_factory=list)

    def ordered(self) -> list[Cell]:
        rank = {s: i for i, s in enumerate(SOLVERS)}
        vals = {v: i for i, v in enumerate(self.sweep.values)}
        return sorted(self.cells, key=lambda c: (rank[c.solver], vals[c.value], c.seed))

    def values(self, solver: str, value=None, seed=None) -> list[float]:
        return [c.objective for c in self.ordered()
                if c.solver == solver and c.status == "ok"
                and (value is None or c.value == value) and (seed is None or c.seed == seed)]

    def mean(self, solver: str, value) -> float:
        v = self.values(solver, value)
        return float(np.mean(v)) if v else math.nan

    def summary(self) -> list[dict]:
        rows = []
        for solver in [s for s in SOLVERS if s in self.sweep.solvers]:
            for value in self.sweep.values:
                cells = [c for c in self.cells if c.solver == solver and c.value == value]
                ok = [c for c in cells if c.status == "ok"]
                obj = np.array([c.objective for c in ok])
                with np.errstate(invalid="ignore"):  # -inf cells give a nan spread
                    std = float(obj.std()) if len(ok) else math.nan
                rows.append({
                    "solver": solver, "variable": self.sweep.variable, "value": value,
                    "n_ok": len(ok), "n_failed": len(cells) - len(ok),
                    "objective_mean": float(obj.mean()) if len(ok) else math.nan,
                    "objective_std": std,
                    "feasible_fraction": float(np.mean([c.feasible for c in ok])) if ok else math.nan,
                    "violations_mean": float(np.mean([c.violations for c in ok])) if ok else math.nan,
                })
        return rows

    @property
    def n_failed(self) -> int:
        return sum(c.status != "ok" for c in self.cells)


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _csv_text(header_comment: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {header_comment} columns={','.join(columns)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_num(row[c]) for c in columns])
    return buf.getvalue()


def write_report(report: ComparisonReport, path) -> dict:
    """Write the cell CSV, a summary CSV, a timing CSV and the provenance sidecar.

    Wall-clock times live only in the timing file, so the cell and summary
    files are byte-identical across reruns with identical inputs.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cells = report.ordered()
    rows = [{c: getattr(cell, c) for c in REPORT_COLUMNS} for cell in cells]
    text = _csv_text(f"oranslice-report schema_version={SCHEMA_VERSION}", REPORT_COLUMNS, rows)
    path.write_text(text)
    summary_path = path.with_name(path.stem + ".summary.csv")
    summary_path.write_text(_csv_text(f"oranslice-summary schema_version={SCHEMA_VERSION}",
                                      SUMMARY_COLUMNS, report.summary()))
    timing_path = path.with_name(path.stem + ".timing.csv")
    timing_rows = [{"solver": c.solver, "value": c.value, "seed": c.seed, "wall_time": c.wall_time}
                   for c in cells]
    timing_path.write_text(_csv_text(f"oranslice-timing schema_version={SCHEMA_VERSION}",
                                     ("solver", "value", "seed", "wall_time"), timing_rows))
    checkpoints = sorted({c.checkpoint for c in cells if c.checkpoint})
    provenance = {
        "schema_version": SCHEMA_VERSION,
        "sweep": report.sweep.to_dict(),
        "configs": {str(v): config_for(report.sweep.base, report.sweep.variable, v).digest()
                    for v in report.sweep.values},
        "channel_seeds": {str(s): sample_seed(report.sweep.channel_seed, s)
                          for s in report.sweep.seeds},
        "checkpoint_sha256": {p: file_digest(p) for p in checkpoints if Path(p).exists()},
        "report_sha256": hashlib.sha256(text.encode()).hexdigest(),
    }
    prov_path = path.with_name(path.name + ".provenance.yaml")
    prov_path.write_text(yaml.safe_dump(provenance, sort_keys=False))
    return {"report": path, "summary": summary_path, "timing": timing_path,
            "provenance": prov_path}


def _run_cell(sweep: ScenarioSweep, solver: str, value, seed: int, cache: dict) -> Cell:
    cfg = config_for(sweep.base, sweep.variable, value)
    cell = Cell(solver, sweep.variable, value, seed, cfg.digest())
    grid = sweep.grid()
    ch = generate_channel(cfg, sample_seed(sweep.channel_seed, seed))
    h = ch.gains
    t0 = time.perf_counter()
    if solver == "esa":
        res = solve_esa(h, cfg, grid, budget=sweep.budget)
        cell.evaluated, cell.pruned = res.evaluated_count, res.pruned_count
        alloc = res.best_alloc
        if alloc is None:
            cell.objective, cell.feasible = -math.inf, False
    elif solver == "dqn":
        hp = DqnHyper.from_overrides({**sweep.dqn, "seed": seed})
        res = train_dqn(cfg, h, hp, grid)
        alloc = greedy_rollout(res.qnet, SlicingEnv(cfg, h, grid, hp.steps, hp.weights)).alloc
        cell.env_steps = res.env_steps
    else:
        path = sweep.checkpoint_for(value)
        if path is None:
            raise FileNotFoundError(f"no SS-VAE checkpoint for value {value!r}")
        key = str(path)
        if key not in cache:
            cache[key] = SsvaeModel.load(path)
        model = cache[key]
        alloc, _ = project_feasible(predict_allocation(model, h, cfg), cfg, h)
        cell.checkpoint = key
    cell.wall_time = time.perf_counter() - t0
    if alloc is not None:
        violations = check_feasible(h, alloc, cfg)
        cell.objective = objective(h, alloc, cfg)
        cell.violations = len(violations)
        cell.feasible = not violations
        cell.alloc = alloc
    return cell


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("ORANSLICE_THREADS", "1")))
    except ValueError:
        raise ConfigError("ORANSLICE_THREADS must be an integer") from None


def _safe_cell(sweep, solver, value, seed, cache) -> Cell:
    try:
        return _run_cell(sweep, solver, value, seed, cache)
    except Exception as exc:      # noqa: BLE001 - per-cell failures are data
        log.warning("cell %s/%s/%s failed: %s", solver, value, seed, exc)
        log.debug("%s", traceback.format_exc())
        try:
            digest = config_for(sweep.base, sweep.variable, value).digest()
        except ConfigError:
            digest = ""
        return Cell(solver, sweep.variable, value, seed, digest, status="failed",
                    error=f"{type(exc).__name__}: {exc}".replace("\n", " "))


def run_sweep(sweep: ScenarioSweep, workers: int | None = None) -> ComparisonReport:
    """Every (solver, value, seed) cell; a failing cell is recorded and the run continues.

    Cells are independent and seeded on their own, so running them on a
    thread pool changes neither the results nor the report order.
    """
    report = ComparisonReport(sweep)
    cache: dict = {}
    if "ssvae" in sweep.solvers:
        for value in sweep.values:
            path = sweep.checkpoint_for(value)
            if path is not None and str(path) not in cache and Path(path).exists():
                try:
                    cache[str(path)] = SsvaeModel.load(path)
                except Exception as exc:      # noqa: BLE001 - reported again by the cell
                    log.warning("cannot load %s: %s", path, exc)
    jobs = [(solver, value, seed) for solver in SOLVERS if solver in sweep.solvers
            for value in sweep.values for seed in sweep.seeds]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        report.cells = [_safe_cell(sweep, *job, cache) for job in jobs]
    else:
        with ThreadPoolExecutor(workers) as pool:
            report.cells = list(pool.map(lambda job: _safe_cell(sweep, *job, cache), jobs))
    return report


def complexity_counters(cfg: NetworkConfig, grid: PowerGrid, *, esa_result=None,
                        dqn: tuple[DqnHyper, int] | None = None,
                        ssvae: tuple[int, int, int, int] | None = None) -> list[dict]:
    """Measured work next to the formula predictions.

    ``dqn`` is (hyper, measured env steps); ``ssvae`` is (epochs, samples,
    batch size, measured optimizer steps).
    """
    rows = []
    if esa_result is not None:
        sc = structural_count(cfg, grid)
        rows.append({"solver": "esa", "quantity": "evaluated_allocations",
                     "measured": esa_result.evaluated_count, "predicted": sc["exact"],
                     "nominal_formula": nominal_cost(cfg, grid),
                     "wall_time": esa_result.wall_time})
    if dqn is not None:
        hp, steps = dqn
        env = SlicingEnv(cfg, np.ones(cfg.shape), grid, hp.steps)
        hidden = list(hp.hidden)
        dims = [env.state_dim, *hidden, env.n_actions]
        f = sum(a * b for a, b in zip(dims[:-1], dims[1:]))
        rows.append({"solver": "dqn", "quantity": "env_steps", "measured": steps,
                     "predicted": hp.episodes * hp.steps,
                     "nominal_formula": hp.episodes * hp.steps * (env.state_dim * env.n_actions + f),
                     "wall_time": math.nan})
    if ssvae is not None:
        epochs, n, batch, steps = ssvae
        rows.append({"solver": "ssvae", "quantity": "optimizer_steps", "measured": steps,
                     "predicted": epochs * math.ceil(n / batch), "nominal_formula": math.nan,
                     "wall_time": math.nan})
    return rows
