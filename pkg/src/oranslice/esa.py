"""Exhaustive search over (alpha, beta, p) with quantised power levels.

The lattice factorises by slice: association and PRB-exclusivity constraints
never couple two slices, so the full set of structurally valid allocations is
the Cartesian product of per-slice configurations. Enumeration order is slice 0
outermost; within a slice, the association vector is lexicographic (lower UE
index varies slowest), then the PRB slots (b-major, then m) each take "empty"
first, then member UEs in index order, each at increasing power level.
"""
from __future__ import annotations

import functools
import itertools
import math
import time
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .config import NetworkConfig
from .system import RTOL, Allocation, objective

DEFAULT_BUDGET = 10 ** 8


class BudgetExceeded(RuntimeError):
    def __init__(self, count: int, budget: int):
        super().__init__(f"lattice has {count} allocations, budget is {budget}")
        self.count = count
        self.budget = budget

    def __reduce__(self):
        return type(self), (self.count, self.budget)


@dataclass(frozen=True)
class PowerGrid:
    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", lv)
        if len(lv) < 1 or lv[0] != 0.0:
            raise ValueError("power grid must start at 0")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("power grid must be strictly increasing")

    @classmethod
    def uniform(cls, p_max: float, n_levels: int = 4) -> "PowerGrid":
        if n_levels < 2:
            raise ValueError("need at least two levels")
        return cls(tuple(p_max * i / (n_levels - 1) for i in range(n_levels)))

    @classmethod
    def for_config(cls, cfg: NetworkConfig, n_levels: int = 4) -> "PowerGrid":
        return cls.uniform(max(cfg.p_slice_max), n_levels)

    def __len__(self):
        return len(self.levels)

    def active_levels(self, p_max: float) -> np.ndarray:
        """Nonzero levels usable under a per-slice cap."""
        lv = np.asarray(self.levels[1:])
        return lv[lv <= p_max * (1 + RTOL)]

    def to_dict(self) -> dict:
        return {"levels": list(self.levels)}


@dataclass
class SolveResult:
    best_alloc: Allocation | None
    best_value: float
    feasible_count: int
    evaluated_count: int
    pruned_count: int = 0
    wall_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.feasible_count > 0


def lattice_count(members: Sequence[int], num_rus: int, num_prbs: int,
                  levels: Sequence[int]) -> int:
    """Exact number of structurally valid allocations.

    ``members[s]`` UEs in slice ``s`` each pick one RU; every PRB slot (b, m, s)
    is left empty or given to one associated member at one of ``levels[s]``
    nonzero levels.
    """
    total = 1
    for k, n_lv in zip(members, levels):
        per_slice = 0
        for assoc in itertools.product(range(num_rus), repeat=k):
            counts = np.bincount(np.asarray(assoc, dtype=int), minlength=num_rus)
            prod = 1
            for n in counts:
                prod *= (1 + int(n) * n_lv) ** num_prbs
            per_slice += prod
        total *= per_slice
    return total


def nominal_cost(cfg: NetworkConfig, grid: PowerGrid) -> int:
    """(|U| x |B|) x (M + 1)! x P_levels."""
    return cfg.num_ues * cfg.num_rus * math.factorial(cfg.num_prbs + 1) * len(grid)


def structural_count(cfg: NetworkConfig, grid: PowerGrid) -> dict:
    levels = [len(grid.active_levels(pm)) for pm in cfg.p_slice_max]
    members = [len(m) for m in cfg.slice_members]
    return {"nominal_formula": nominal_cost(cfg, grid),
            "exact": lattice_count(members, cfg.num_rus, cfg.num_prbs, levels)}


@dataclass
class _SliceTable:
    """All configurations of one slice as dense arrays."""

    members: np.ndarray          # (K,) global UE indices
    assoc: np.ndarray            # (N, K) RU per member
    power: np.ndarray            # (N, K, B, M) watts

    def __len__(self):
        return len(self.assoc)


def _slice_configs(members, n_rus: int, n_prbs: int, levels: np.ndarray):
    """Yield (assoc, power[K, B, M]) for one slice in canonical order."""
    k = len(members)
    slots = [(b, m) for b in range(n_rus) for m in range(n_prbs)]
    for assoc in itertools.product(range(n_rus), repeat=k):
        options = []
        for b, m in slots:
            opts = [None]
            opts.extend((j, lv) for j in range(k) if assoc[j] == b for lv in levels)
            options.append(opts)
        for choice in itertools.product(*options):
            p = np.zeros((k, n_rus, n_prbs))
            for (b, m), c in zip(slots, choice):
                if c is not None:
                    p[c[0], b, m] = c[1]
            yield assoc, p


def _slice_table(cfg: NetworkConfig, grid: PowerGrid, s: int) -> _SliceTable:
    members = cfg.slice_members[s]
    levels = grid.active_levels(cfg.p_slice_max[s])
    return _cached_table(tuple(int(u) for u in members), cfg.num_rus, cfg.num_prbs,
                         tuple(float(v) for v in levels))


@functools.lru_cache(maxsize=64)
def _cached_table(members: tuple, n_rus: int, n_prbs: int, levels: tuple) -> _SliceTable:
    assoc, power = [], []
    for a, p in _slice_configs(members, n_rus, n_prbs, np.asarray(levels)):
        assoc.append(a)
        power.append(p)
    k = len(members)
    tab = _SliceTable(
        np.asarray(members, dtype=int),
        np.asarray(assoc, dtype=int).reshape(-1, k),
        np.asarray(power).reshape(-1, k, n_rus, n_prbs),
    )
    for arr in (tab.members, tab.assoc, tab.power):
        arr.flags.writeable = False
    return tab


def _to_allocation(cfg: NetworkConfig, tables, picks) -> Allocation:
    a = Allocation.empty(cfg)
    for s, (tab, c) in enumerate(zip(tables, picks)):
        for j, u in enumerate(tab.members):
            a.alpha[u, tab.assoc[c, j], s] = 1.0
            a.power[u, :, :, s] = tab.power[c, j]
        a.beta[:, :, :, s] = (a.power[:, :, :, s] > 0).astype(float)
    return a


def check_budget(cfg, grid, budget) -> int:
    """Exact lattice size; raises BudgetExceeded above ``budget``."""
    count = structural_count(cfg, grid)["exact"]
    if budget is not None and count > budget:
        raise BudgetExceeded(count, budget)
    return count


def enumerate_allocations(cfg: NetworkConfig, grid: PowerGrid,
                          budget: int | None = DEFAULT_BUDGET) -> Iterator[Allocation]:
    """Every structurally valid allocation, in canonical order."""
    check_budget(cfg, grid, budget)
    tables = [_slice_table(cfg, grid, s) for s in range(cfg.num_slices)]
    for picks in itertools.product(*(range(len(t)) for t in tables)):
        yield _to_allocation(cfg, tables, picks)


def _le(value, bound):
    return value <= bound + RTOL * np.abs(bound) + 1e-12


class _Evaluator:
    """Vectorised objective and feasibility over products of slice configurations."""

    def __init__(self, h: np.ndarray, cfg: NetworkConfig, tables):
        self.cfg = cfg
        self.tables = tables
        self.sig, self.x, self.own = [], [], []
        for s, tab in enumerate(tables):
            hs = h[tab.members][:, :, :, s]                  # (K, B, M)
            sig = tab.power * hs[None]                       # (N, K, B, M)
            t = sig.sum(axis=1)                              # (N, B, M)
            self.sig.append(sig)
            # interference this slice leaves on a victim at (b, m) of another slice
            self.x.append(t.sum(axis=1, keepdims=True) - t)
            self.own.append(t.sum(axis=2))                   # (N, B)
        self.weights = np.asarray(cfg.slice_weights)
        self.rmin = np.asarray(cfg.r_min)
        self.dmax = np.asarray(cfg.d_max)
        self.prop = cfg.link_length / cfg.prop_speed

    def slice_ok(self, s: int) -> np.ndarray:
        """Configurations that can be feasible whatever the other slices do."""
        cfg = self.cfg
        p_b = self.own[s] + cfg.quant_noise
        ok = _le(p_b, cfg.p_ru_max) & _le(np.log2(p_b / cfg.quant_noise), cfg.c_fh_max)
        ok = ok.all(axis=1)
        rates = np.log2(1.0 + self.sig[s] / cfg.noise_power).sum(axis=(2, 3))   # (N, K)
        ok &= self._rate_ok(rates, s).all(axis=1)
        return ok

    def _rate_ok(self, rates, s):
        ok = _le(self.rmin[s], rates)
        with np.errstate(divide="ignore"):
            tx = np.where(rates > 0, self.cfg.mean_packet
                          / (self.cfg.prb_bandwidth * np.where(rates > 0, rates, 1.0)), np.inf)
        return ok & _le(self.prop + tx, self.dmax[s])

    def evaluate(self, picks: list[np.ndarray]):
        """Feasible rows of aligned index arrays (one per slice) and their objective.

        Rows are filtered stage by stage (RU power, then each slice's rates) so
        later stages only touch survivors; row order is preserved.
        """
        cfg = self.cfg
        n_slices = len(self.tables)
        p_b = cfg.quant_noise + sum(self.own[l][picks[l]] for l in range(n_slices))
        ok = (_le(p_b, cfg.p_ru_max)
              & _le(np.log2(p_b / cfg.quant_noise), cfg.c_fh_max)).all(axis=1)
        rows = np.flatnonzero(ok)
        picks = [p[rows] for p in picks]
        x = [self.x[l][picks[l]] for l in range(n_slices)]
        xsum = sum(x)
        value = np.zeros(len(rows))
        for s in range(n_slices):
            interf = (xsum - x[s])[:, None]                  # (C, 1, B, M)
            sig = self.sig[s][picks[s]]                     # (C, K, B, M)
            rates = np.log2(1.0 + sig / (interf + cfg.noise_power)).sum(axis=(2, 3))
            keep = np.flatnonzero(self._rate_ok(rates, s).all(axis=1))
            rows, value = rows[keep], value[keep] + self.weights[s] * rates[keep].sum(axis=1)
            if s + 1 < n_slices:
                picks = [p[keep] for p in picks]
                x = [v[keep] for v in x]
                xsum = xsum[keep]
        return rows, value


def solve_esa(h, cfg: NetworkConfig, grid: PowerGrid | None = None,
              budget: int | None = DEFAULT_BUDGET, chunk: int = 1 << 18) -> SolveResult:
    """Global optimum of the weighted sum rate over the quantised lattice.

    Ties keep the first maximiser in canonical order. Slice configurations that
    are infeasible on their own (RU power, fronthaul, or a member's
    interference-free rate/delay) are skipped; they cannot appear in any
    feasible product, so the result is the same as scanning everything.
    """
    start = time.perf_counter()
    grid = grid or PowerGrid.for_config(cfg)
    h = np.asarray(h, dtype=float)
    if h.shape != cfg.shape:
        raise ValueError(f"channel shape {h.shape} != {cfg.shape}")
    total = check_budget(cfg, grid, budget)
    tables = [_slice_table(cfg, grid, s) for s in range(cfg.num_slices)]
    ev = _Evaluator(h, cfg, tables)
    alive = [np.flatnonzero(ev.slice_ok(s)) for s in range(cfg.num_slices)]
    n_alive = math.prod(len(a) for a in alive)

    best_value, best_picks, feasible_count = -math.inf, None, 0
    if n_alive:
        inner = alive[-1]
        outer = list(itertools.product(*alive[:-1])) if len(alive) > 1 else [()]
        step = max(1, chunk // len(inner))
        for lo in range(0, len(outer), step):
            block = np.zeros((len(outer[lo:lo + step]), len(alive) - 1), dtype=int)
            if block.size:
                block[:] = outer[lo:lo + step]
            picks = [np.repeat(block[:, j], len(inner)) for j in range(block.shape[1])]
            picks.append(np.tile(inner, len(block)))
            rows, value = ev.evaluate(picks)
            feasible_count += len(rows)
            if len(rows):
                i = int(np.argmax(value))
                if value[i] > best_value:
                    best_value = float(value[i])
                    best_picks = [int(p[rows[i]]) for p in picks]

    best_alloc = None
    if best_picks is not None:
        best_alloc = _to_allocation(cfg, tables, best_picks)
        best_value = objective(h, best_alloc, cfg)
    return SolveResult(best_alloc, best_value, feasible_count, total,
                       total - n_alive, time.perf_counter() - start)
