"""Command-line entry point: ``oranslice {channel,gen,solve,train,eval}``.

Exit codes: 0 success, 1 failure (every eval cell failed, numerical error),
2 bad arguments or config, 3 ESA budget exceeded, 4 I/O error,
5 missing checkpoint, 6 empty labelled set.

Relative ``--out`` paths resolve under ``$ORANSLICE_OUTPUT_ROOT`` when it is
set; ``$ORANSLICE_THREADS`` sets the worker count for labelling and sweeps.
stdout carries only ``key=value`` progress lines; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import shutil
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .channel import generate_channel, load_channel, save_channel
from .config import ConfigError, load_config
from .dataset import build_labeled_dataset, load_dataset, save_dataset
from .dqn import DqnHyper, SlicingEnv, greedy_rollout, load_qnet, save_qnet, train_dqn
from .dqn import write_history_csv as write_dqn_history
from .esa import DEFAULT_BUDGET, BudgetExceeded, PowerGrid, check_budget, solve_esa
from .harness import default_workers, load_sweep, run_sweep, write_report
from .nn import CheckpointError, NumericalError, file_digest
from .ssvae import SsvaeHyper, SsvaeModel, predict_allocation, project_feasible, train_ssvae
from .ssvae import write_history_csv as write_ssvae_history
from .system import check_feasible, rate_report, save_allocation

log = logging.getLogger("oranslice")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_BUDGET, EXIT_IO, EXIT_CHECKPOINT, EXIT_NO_LABELS = range(7)
MANIFEST_SCHEMA = 1


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def out_path(p) -> Path:
    p = Path(p)
    root = os.environ.get("ORANSLICE_OUTPUT_ROOT")
    return Path(root) / p if root and not p.is_absolute() else p


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


class Manifest:
    """Run record written before the work starts and finalised afterwards."""

    def __init__(self, path: Path, command: str, argv: list[str], config_path, seed=None,
                 extra: dict | None = None):
        self.path = path
        self.data = {
            "schema_version": MANIFEST_SCHEMA,
            "command": command,
            "argv": list(argv),
            "config_path": str(Path(config_path).resolve()) if config_path else None,
            "config_sha256": _sha256(config_path) if config_path else None,
            "seed": seed,
            "tool_version": __version__,
            "started_at": _now(),
            "finished_at": None,
            "status": "running",
            "exit_code": None,
            "outputs": {},
        }
        self.data.update(extra or {})
        self.write()

    def write(self) -> None:
        _write_atomic(self.path, yaml.safe_dump(self.data, sort_keys=False))

    def finish(self, outputs, code: int = EXIT_OK, **extra) -> None:
        self.data["outputs"] = {str(p): _sha256(p) for p in outputs if Path(p).exists()}
        self.data.update(extra)
        self.data.update(finished_at=_now(), exit_code=code,
                         status="ok" if code == EXIT_OK else "failed")
        self.write()


def _load_cfg(path):
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_USAGE, f"config file not found: {p}")
    try:
        return load_config(p)
    except (ConfigError, TypeError, ValueError) as exc:
        raise CliError(EXIT_USAGE, f"{p}: {exc}") from exc


def _overrides(pairs, hyper_file) -> dict:
    out = {}
    if hyper_file:
        try:
            data = yaml.safe_load(Path(hyper_file).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise CliError(EXIT_USAGE, f"{hyper_file}: {exc}") from exc
        if not isinstance(data, dict):
            raise CliError(EXIT_USAGE, f"{hyper_file}: expected a key/value document")
        out.update(data)
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise CliError(EXIT_USAGE, f"--set expects key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    return {k: tuple(v) if isinstance(v, list) else v for k, v in out.items()}


def _progress(**kv) -> None:
    print(" ".join(f"{k}={v}" for k, v in kv.items()), flush=True)


def _channel(args, cfg):
    if getattr(args, "channel", None):
        try:
            ch = load_channel(args.channel)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read channel {args.channel}: {exc}") from exc
        except ValueError as exc:
            raise CliError(EXIT_USAGE, str(exc)) from exc
    else:
        seed = cfg.seed if args.channel_seed is None else args.channel_seed
        ch = generate_channel(cfg, seed)
    if ch.gains.shape != cfg.shape:
        raise CliError(EXIT_USAGE, f"channel shape {ch.gains.shape} != config shape {cfg.shape}")
    return ch


def _copy_config(src, dst: Path) -> Path:
    shutil.copyfile(src, dst)
    return dst


# -- subcommands --------------------------------------------------------------

def cmd_channel(args) -> int:
    cfg = _load_cfg(args.config)
    out = out_path(args.out)
    man = args.manifest = Manifest(out.with_name(out.name + ".manifest.yaml"), "channel",
                                   args.argv, args.config, args.seed)
    save_channel(generate_channel(cfg, args.seed), out)
    man.finish([out])
    _progress(command="channel", out=out)
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = _load_cfg(args.config)
    if args.samples < 0 or args.unlabeled < 0:
        raise CliError(EXIT_USAGE, "--samples and --unlabeled must be >= 0")
    out = out_path(args.out)
    grid = PowerGrid.for_config(cfg, args.levels)
    check_budget(cfg, grid, args.budget)
    man = args.manifest = Manifest(
        out.with_name(out.name + ".manifest.yaml"), "gen", args.argv, args.config, args.seed,
        {"samples": args.samples, "unlabeled": args.unlabeled, "grid_levels": list(grid.levels)})
    cfg_copy = _copy_config(args.config, out.with_name(out.name + ".config.yaml"))
    ds = build_labeled_dataset(cfg, grid, args.samples, args.seed, n_unlabeled=args.unlabeled,
                               budget=args.budget, n_jobs=default_workers())
    data_path, meta_path = save_dataset(ds, out)
    man.finish([data_path, meta_path, cfg_copy], regenerated=int(ds.regenerated))
    _progress(command="gen", samples=ds.n_labeled, unlabeled=ds.n_unlabeled,
              regenerated=ds.regenerated, out=data_path)
    return EXIT_OK


def _require_checkpoint(args) -> Path:
    if not args.checkpoint:
        raise CliError(EXIT_CHECKPOINT, f"--checkpoint is required for solver {args.solver}")
    path = Path(args.checkpoint)
    if not path.is_file():
        raise CliError(EXIT_CHECKPOINT, f"checkpoint not found: {path}")
    return path


def _write_rates(rep, path: Path) -> None:
    lines = ["# oranslice-rates schema_version=1", "quantity\tindex\tvalue"]
    for (u, s), v in np.ndenumerate(rep.rate_ue):
        lines.append(f"rate_ue\t{u},{s}\t{v:.17g}")
    for (u, s), v in np.ndenumerate(rep.delay):
        lines.append(f"delay\t{u},{s}\t{v:.17g}")
    for b, v in enumerate(rep.ru_power):
        lines.append(f"ru_power\t{b}\t{v:.17g}")
    for b, v in enumerate(rep.fronthaul_rate):
        lines.append(f"fronthaul_rate\t{b}\t{v:.17g}")
    lines.append(f"objective\t-\t{rep.objective:.17g}")
    path.write_text("\n".join(lines) + "\n")


def _write_violations(violations, path: Path) -> None:
    lines = ["# oranslice-violations schema_version=1", "constraint\tindex\tvalue\tbound"]
    for v in violations:
        lines.append(f"{v.constraint}\t{','.join(map(str, v.index))}\t{v.value:.17g}\t{v.bound:.17g}")
    path.write_text("\n".join(lines) + "\n")


def cmd_solve(args) -> int:
    cfg = _load_cfg(args.config)
    ckpt = _require_checkpoint(args) if args.solver in ("dqn", "ssvae") else None
    ch = _channel(args, cfg)
    out = out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = args.manifest = Manifest(out / "manifest.yaml", "solve", args.argv, args.config, args.channel_seed,
                   {"solver": args.solver,
                    "checkpoint": str(ckpt) if ckpt else None,
                    "checkpoint_sha256": file_digest(ckpt) if ckpt else None})
    files = [_copy_config(args.config, out / "config.yaml"), out / "channel.txt"]
    save_channel(ch, files[1])
    info = {"solver": args.solver}
    if args.solver == "esa":
        grid = PowerGrid.for_config(cfg, args.levels)
        res = solve_esa(ch.gains, cfg, grid, budget=args.budget)
        if res.best_alloc is None:
            raise CliError(EXIT_FAILED, "no feasible allocation exists for this channel")
        alloc = res.best_alloc
        info.update(evaluated=res.evaluated_count, pruned=res.pruned_count,
                    feasible_count=res.feasible_count)
    elif args.solver == "dqn":
        qnet, _, hp, grid = load_qnet(ckpt)
        env = SlicingEnv(cfg, ch.gains, grid, hp.steps, hp.weights)
        roll = greedy_rollout(qnet, env)
        alloc = roll.alloc
        info.update(rollout_step=roll.step)
    else:
        model = SsvaeModel.load(ckpt)
        alloc, _ = project_feasible(predict_allocation(model, ch.gains, cfg), cfg, ch.gains)
    violations = check_feasible(ch.gains, alloc, cfg)
    rep = rate_report(ch.gains, alloc, cfg)
    save_allocation(alloc, out / "allocation.txt")
    _write_rates(rep, out / "rates.tsv")
    _write_violations(violations, out / "violations.tsv")
    info.update(objective=float(rep.objective), violations=len(violations),
                feasible=not violations)
    (out / "result.yaml").write_text(yaml.safe_dump(info, sort_keys=False))
    files += [out / n for n in ("allocation.txt", "rates.tsv", "violations.tsv", "result.yaml")]
    man.finish(files)
    _progress(command="solve", solver=args.solver, objective=f"{rep.objective:.9g}",
              violations=len(violations), out=out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    out = out_path(args.out)
    overrides = _overrides(args.set, args.hyper)
    try:
        hp = (DqnHyper if args.model == "dqn" else SsvaeHyper).from_overrides(overrides)
    except (ConfigError, TypeError) as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc
    if args.model == "ssvae":
        if not args.dataset:
            raise CliError(EXIT_USAGE, "--dataset is required for --model ssvae")
        try:
            ds = load_dataset(args.dataset)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read dataset {args.dataset}: {exc}") from exc
        except ValueError as exc:
            raise CliError(EXIT_USAGE, f"{args.dataset}: {exc}") from exc
        if ds.cfg.shape != cfg.shape:
            raise CliError(EXIT_USAGE, f"dataset shape {ds.cfg.shape} != config shape {cfg.shape}")
        if args.n_labeled is not None:
            if args.n_labeled < 0:
                raise CliError(EXIT_USAGE, "--n-labeled must be >= 0")
            ds = ds.subset(np.arange(min(args.n_labeled, ds.n_labeled)))
        if ds.n_labeled == 0:
            raise CliError(EXIT_NO_LABELS, f"{args.dataset}: no labelled samples")
    out.mkdir(parents=True, exist_ok=True)
    extra = {"model": args.model, "hyper": hp.to_dict()}
    if args.model == "ssvae":
        extra.update(dataset=str(args.dataset), dataset_sha256=_sha256(args.dataset),
                     n_labeled=int(ds.n_labeled), n_unlabeled=int(ds.n_unlabeled))
    man = args.manifest = Manifest(out / "manifest.yaml", "train", args.argv, args.config, hp.seed, extra)
    files = [_copy_config(args.config, out / "config.yaml")]
    ckpt, hist = out / "checkpoint.ckpt", out / "history.csv"
    if args.model == "dqn":
        ch = _channel(args, cfg)
        save_channel(ch, out / "channel.txt")
        files.append(out / "channel.txt")
        grid = PowerGrid.for_config(cfg, hp.n_levels)
        res = train_dqn(cfg, ch.gains, hp, grid)
        save_qnet(ckpt, res.qnet, cfg, hp, grid, step=res.env_steps)
        write_dqn_history(res.history, hist)
        counters = {"env_steps": res.env_steps, "optimizer_steps": res.optimizer_steps}
    else:
        res = train_ssvae(ds, hp)
        res.model.save(ckpt, {"step": res.optimizer_steps})
        write_ssvae_history(res.history, hist)
        counters = {"optimizer_steps": res.optimizer_steps}
    files += [ckpt, hist]
    man.finish(files, checkpoint_sha256=file_digest(ckpt), **counters)
    _progress(command="train", model=args.model, checkpoint=ckpt, sha256=file_digest(ckpt))
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = Path(args.sweep)
    if not spec.is_file():
        raise CliError(EXIT_USAGE, f"sweep file not found: {spec}")
    try:
        sweep = load_sweep(spec)
    except (ConfigError, TypeError, ValueError) as exc:
        raise CliError(EXIT_USAGE, f"{spec}: {exc}") from exc
    out = out_path(args.out)
    man = args.manifest = Manifest(out.with_name(out.name + ".manifest.yaml"), "eval", args.argv, spec,
                   list(sweep.seeds), {"variable": sweep.variable, "values": list(sweep.values)})
    report = run_sweep(sweep, args.workers)
    paths = write_report(report, out)
    cfg_copy = out.with_name(out.name + ".sweep.yaml")
    cfg_copy.write_text(yaml.safe_dump(sweep.to_dict(), sort_keys=False))
    n, failed = len(report.cells), report.n_failed
    code = EXIT_FAILED if n and failed == n else EXIT_OK
    man.finish([*paths.values(), cfg_copy], code, cells=n, failed_cells=failed)
    _progress(command="eval", cells=n, failed=failed, out=out)
    return code


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oranslice", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def channel_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--channel", help="channel file written by 'oranslice channel'")
        g.add_argument("--channel-seed", type=int, help="draw the channel from this seed "
                       "(default: the config seed)")

    sp = sub.add_parser("channel", help="draw one channel realisation")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_channel)

    sp = sub.add_parser("gen", help="build an ESA-labelled dataset")
    sp.add_argument("config")
    sp.add_argument("--samples", type=int, required=True)
    sp.add_argument("--unlabeled", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--levels", type=int, default=3, help="power grid size including 0")
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("solve", help="allocate resources on one channel")
    sp.add_argument("config")
    sp.add_argument("--solver", choices=("esa", "dqn", "ssvae"), required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    sp.add_argument("--out", required=True)
    channel_args(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("train", help="train a DQN or SS-VAE allocator")
    sp.add_argument("config")
    sp.add_argument("--model", choices=("dqn", "ssvae"), required=True)
    sp.add_argument("--dataset")
    sp.add_argument("--n-labeled", type=int)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="hyperparameter override, repeatable")
    sp.add_argument("--hyper", help="key/value file of hyperparameter overrides")
    sp.add_argument("--out", required=True)
    channel_args(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="run a scenario sweep and write the comparison report")
    sp.add_argument("sweep")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        msg, code = str(exc), exc.code
    except ConfigError as exc:
        msg, code = str(exc), EXIT_USAGE
    except BudgetExceeded as exc:
        msg, code = str(exc), EXIT_BUDGET
    except CheckpointError as exc:
        msg, code = f"bad checkpoint: {exc}", EXIT_CHECKPOINT
    except NumericalError as exc:
        msg, code = f"numerical error: {exc}", EXIT_FAILED
    except OSError as exc:
        msg, code = f"I/O error: {exc}", EXIT_IO
    print(f"oranslice: {msg}", file=sys.stderr)
    man = getattr(args, "manifest", None)
    if man is not None and man.data["status"] == "running":
        try:
            man.finish([], code, error=msg)
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
