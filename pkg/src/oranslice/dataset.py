"""Oracle-labelled datasets and their line-oriented file format."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .channel import generate_channel
from .config import NetworkConfig
from .esa import DEFAULT_BUDGET, PowerGrid, solve_esa
from .system import label_length

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HEADER = "# oranslice-dataset schema_version=1 columns=id,seed,h,gamma,objective"
MAX_ATTEMPTS = 1000
_UNLABELED_OFFSET = 1 << 48


def sample_seed(seed: int, index: int, attempt: int = 0) -> int:
    """Seed of sample ``index``: seed XOR index, shifted by 2**32 per regeneration."""
    return (int(seed) ^ int(index)) + (int(attempt) << 32)


@dataclass
class Dataset:
    """Labelled (channel, target) pairs plus optional unlabelled channels.

    ``labels[i]`` is the oracle optimum flattened as power / P_s^max, alpha,
    beta; ``gains`` keeps the (U, B, M, S) tensor per sample.
    """

    cfg: NetworkConfig
    grid: PowerGrid
    gains: np.ndarray
    large_scale: np.ndarray
    labels: np.ndarray
    objective: np.ndarray
    seeds: np.ndarray
    unlabeled_gains: np.ndarray = None
    unlabeled_large_scale: np.ndarray = None
    unlabeled_seeds: np.ndarray = None
    regenerated: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        u, b, m, s = self.cfg.shape
        if self.unlabeled_gains is None:
            self.unlabeled_gains = np.zeros((0, u, b, m, s))
            self.unlabeled_large_scale = np.zeros((0, u, b))
            self.unlabeled_seeds = np.zeros(0, dtype=np.int64)

    @property
    def n_labeled(self) -> int:
        return len(self.labels)

    @property
    def n_unlabeled(self) -> int:
        return len(self.unlabeled_gains)

    def __len__(self):
        return self.n_labeled + self.n_unlabeled

    @property
    def X(self) -> np.ndarray:
        return self.gains.reshape(self.n_labeled, -1)

    @property
    def X_unlabeled(self) -> np.ndarray:
        return self.unlabeled_gains.reshape(self.n_unlabeled, -1)

    def subset(self, idx, keep_unlabeled: bool = True) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        unl = {} if keep_unlabeled else dict(
            unlabeled_gains=None, unlabeled_large_scale=None, unlabeled_seeds=None)
        return replace(self, gains=self.gains[idx], large_scale=self.large_scale[idx],
                       labels=self.labels[idx], objective=self.objective[idx],
                       seeds=self.seeds[idx], meta=dict(self.meta), **unl)

    def split(self, val_fraction: float = 0.2, seed: int = 0):
        """Shuffled (train, validation) split of the labelled part; unlabelled rows stay in train."""
        order = np.random.default_rng(seed).permutation(self.n_labeled)
        n_val = int(round(val_fraction * self.n_labeled))
        return (self.subset(np.sort(order[n_val:])),
                self.subset(np.sort(order[:n_val]), keep_unlabeled=False))


def _label_one(args):
    cfg, grid, seed, index, budget = args
    for attempt in range(MAX_ATTEMPTS):
        sd = sample_seed(seed, index, attempt)
        ch = generate_channel(cfg, sd)
        res = solve_esa(ch.gains, cfg, grid, budget=budget)
        if res.feasible:
            return sd, ch, res.best_alloc.to_labels(cfg), res.best_value, attempt
    raise RuntimeError(f"sample {index}: no feasible instance in {MAX_ATTEMPTS} draws")


def build_labeled_dataset(cfg: NetworkConfig, grid: PowerGrid, n_samples: int, seed: int = 0,
                          *, n_unlabeled: int = 0, budget: int | None = DEFAULT_BUDGET,
                          n_jobs: int = 1) -> Dataset:
    """Label ``n_samples`` fresh channels with the exhaustive-search optimum.

    Channels without any feasible allocation are dropped and redrawn; the
    number of redraws is kept in ``regenerated``. Results are merged in sample
    order, so ``n_jobs`` does not change the output.
    """
    u, b, m, s = cfg.shape
    tasks = [(cfg, grid, seed, i, budget) for i in range(n_samples)]
    if n_jobs > 1 and n_samples > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_label_one, tasks, chunksize=8))
    else:
        results = [_label_one(t) for t in tasks]

    gains = np.zeros((n_samples, u, b, m, s))
    large = np.zeros((n_samples, u, b))
    labels = np.zeros((n_samples, label_length(cfg)))
    obj = np.zeros(n_samples)
    seeds = np.zeros(n_samples, dtype=np.int64)
    regenerated = 0
    for i, (sd, ch, lab, val, attempts) in enumerate(results):
        gains[i], large[i], labels[i], obj[i], seeds[i] = ch.gains, ch.large_scale, lab, val, sd
        regenerated += attempts
    if regenerated:
        log.info("regenerated %d infeasible channels", regenerated)

    ds = Dataset(cfg, grid, gains, large, labels, obj, seeds, regenerated=regenerated)
    if n_unlabeled:
        useeds = np.array([sample_seed(seed, i) + _UNLABELED_OFFSET for i in range(n_unlabeled)],
                          dtype=np.int64)
        chans = [generate_channel(cfg, int(sd)) for sd in useeds]
        ds.unlabeled_gains = np.stack([c.gains for c in chans])
        ds.unlabeled_large_scale = np.stack([c.large_scale for c in chans])
        ds.unlabeled_seeds = useeds
    return ds


def _fmt(values) -> str:
    return " ".join(f"{v:.9g}" for v in np.ravel(values))


def save_dataset(ds: Dataset, path) -> tuple[Path, Path]:
    """Write ``path`` (one sample per line) and ``path.meta.yaml`` (config, grid, counts)."""
    path = Path(path)
    lines = [HEADER]
    for i in range(ds.n_labeled):
        lines.append("\t".join([str(i), str(int(ds.seeds[i])), _fmt(ds.gains[i]),
                                _fmt(ds.labels[i]), f"{ds.objective[i]:.9g}"]))
    for j in range(ds.n_unlabeled):
        lines.append("\t".join([str(ds.n_labeled + j), str(int(ds.unlabeled_seeds[j])),
                                _fmt(ds.unlabeled_gains[j]), "-", "nan"]))
    path.write_text("\n".join(lines) + "\n")
    meta_path = path.with_name(path.name + ".meta.yaml")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": ds.cfg.to_dict(),
        "grid": ds.grid.to_dict(),
        "n_labeled": ds.n_labeled,
        "n_unlabeled": ds.n_unlabeled,
        "regenerated": int(ds.regenerated),
        "h_order": "u, b, m, s (C order)",
        "gamma_order": "power / p_slice_max, alpha[u,b,s], beta[u,b,m,s]",
    }
    meta.update(ds.meta)
    meta_path.write_text(yaml.safe_dump(meta, sort_keys=False))
    return path, meta_path


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = yaml.safe_load(path.with_name(path.name + ".meta.yaml").read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema {meta.get('schema_version')}")
    cfg = NetworkConfig.from_dict(meta["config"])
    grid = PowerGrid(tuple(meta["grid"]["levels"]))
    shape = cfg.shape
    lab, unl = [], []
    with path.open() as fh:
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            _id, sd, h, gamma, val = line.rstrip("\n").split("\t")
            h = np.array(h.split(), dtype=float).reshape(shape)
            if gamma == "-":
                unl.append((int(sd), h))
            else:
                lab.append((int(sd), h, np.array(gamma.split(), dtype=float), float(val)))
    extra = {k: v for k, v in meta.items()
             if k not in ("schema_version", "config", "grid", "n_labeled", "n_unlabeled",
                          "regenerated", "h_order", "gamma_order")}
    u, b = cfg.num_ues, cfg.num_rus
    ds = Dataset(
        cfg, grid,
        np.array([r[1] for r in lab]).reshape(-1, *shape),
        np.array([generate_channel(cfg, r[0]).large_scale for r in lab]).reshape(-1, u, b),
        np.array([r[2] for r in lab]).reshape(-1, label_length(cfg)),
        np.array([r[3] for r in lab]),
        np.array([r[0] for r in lab], dtype=np.int64),
        regenerated=int(meta.get("regenerated", 0)),
        meta=extra,
    )
    if unl:
        ds.unlabeled_gains = np.array([r[1] for r in unl])
        ds.unlabeled_large_scale = np.array([generate_channel(cfg, r[0]).large_scale for r in unl])
        ds.unlabeled_seeds = np.array([r[0] for r in unl], dtype=np.int64)
    return ds


def cached_dataset(cfg: NetworkConfig, grid: PowerGrid, n_samples: int, seed: int = 0, *,
                   n_unlabeled: int = 0, cache_dir=None, budget: int | None = DEFAULT_BUDGET
                   ) -> Dataset:
    """Build once, then reload from ``cache_dir``; the key covers every input."""
    if cache_dir is None:
        ds = build_labeled_dataset(cfg, grid, n_samples, seed, n_unlabeled=n_unlabeled,
                                   budget=budget)
        return ds
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = f"{cfg.digest()[:16]}-g{len(grid)}-{grid.levels[-1]:.6g}-n{n_samples}-u{n_unlabeled}-s{seed}"
    path = cache_dir / f"corpus-{key}.tsv"
    if not (path.exists() and path.with_name(path.name + ".meta.yaml").exists()):
        ds = build_labeled_dataset(cfg, grid, n_samples, seed, n_unlabeled=n_unlabeled,
                                   budget=budget)
        tmp = path.with_name(path.name + ".tmp")
        save_dataset(ds, tmp)
        tmp.with_name(tmp.name + ".meta.yaml").replace(path.with_name(path.name + ".meta.yaml"))
        tmp.replace(path)
    return load_dataset(path)
