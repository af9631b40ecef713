import math

import numpy as np
import pytest
import yaml

from oranslice.config import ConfigError, NetworkConfig, save_config
from oranslice.dataset import build_labeled_dataset
from oranslice.dqn import DqnHyper, train_dqn
from oranslice.esa import PowerGrid, nominal_cost, solve_esa, structural_count
from oranslice.harness import (REPORT_COLUMNS, Cell, ComparisonReport, ScenarioSweep,
                               complexity_counters, config_for, load_sweep, run_sweep,
                               write_report)
from oranslice.ssvae import SsvaeHyper, train_ssvae

from oracles import random_instance

TINY = NetworkConfig(num_rus=1, num_ues_embb=1, num_ues_urllc=1, num_prbs=2)


@pytest.fixture(scope="module")
def tiny_ckpt(tmp_path_factory):
    grid = PowerGrid.for_config(TINY, 3)
    ds = build_labeled_dataset(TINY, grid, 40, seed=2)
    res = train_ssvae(ds, SsvaeHyper(epochs=3, stage_a_epochs=2, batch_size=16,
                                     encoder_hidden=(8,), decoder_hidden=(8,), head_hidden=(8,),
                                     latent_dim=4))
    path = tmp_path_factory.mktemp("ck") / "tiny.ckpt"
    res.model.save(path)
    return path


def test_config_for_sweep_variables():
    base = NetworkConfig()
    assert config_for(base, "num_ues", 5).shape[0] == 5
    assert (config_for(base, "num_ues", 5).num_ues_embb, config_for(base, "num_ues", 5).num_ues_urllc) == (3, 2)
    assert config_for(base, "p_ru_max", 2.5).p_ru_max == 2.5
    assert config_for(base, "p_slice_max", 0.7).p_slice_max == (0.7, 0.7)
    assert config_for(base, "n_labeled", 500) is base
    with pytest.raises(ConfigError):
        config_for(base, "num_ues", 1)
    with pytest.raises(ConfigError):
        config_for(base, "bandwidth", 1)


@pytest.mark.parametrize("kwargs", [
    dict(values=()), dict(values=(1.0, 1.0)), dict(values=(2.0, 1.0)), dict(seeds=()),
    dict(solvers=("esa", "milp")), dict(variable="noise_power"), dict(dqn={"epochz": 1}),
])
def test_sweep_validation(kwargs):
    args = dict(base=TINY, variable="p_ru_max", values=(0.5, 1.0))
    args.update(kwargs)
    with pytest.raises(ConfigError):
        ScenarioSweep(**args)


def test_sweep_file_parsing(tmp_path):
    save_config(TINY, tmp_path / "base.yaml")
    (tmp_path / "s.yaml").write_text(yaml.safe_dump({
        "base": "base.yaml", "variable": "p_ru_max", "values": [0.5, 1.0], "seeds": 2,
        "solvers": ["esa"], "checkpoints": {"default": "m.ckpt"}}))
    sweep = load_sweep(tmp_path / "s.yaml")
    assert sweep.base == TINY and sweep.seeds == (0, 1) and sweep.values == (0.5, 1.0)
    assert sweep.checkpoint_for(0.5) == tmp_path / "m.ckpt"
    again = ScenarioSweep.from_dict(sweep.to_dict())
    assert again.to_dict() == sweep.to_dict()
    (tmp_path / "bad.yaml").write_text("base: base.yaml\nvariable: p_ru_max\nvalues: [1]\ncolour: 3\n")
    with pytest.raises(ConfigError, match="colour"):
        load_sweep(tmp_path / "bad.yaml")
    (tmp_path / "v2.yaml").write_text("schema_version: 2\nvariable: p_ru_max\nvalues: [1]\n")
    with pytest.raises(ConfigError):
        load_sweep(tmp_path / "v2.yaml")


def test_empty_solver_set_gives_empty_report(tmp_path):
    rep = run_sweep(ScenarioSweep(TINY, "p_ru_max", (1.0,), solvers=()))
    assert rep.cells == [] and rep.summary() == []
    paths = write_report(rep, tmp_path / "r.csv")
    lines = paths["report"].read_text().splitlines()
    assert lines[0].startswith("# oranslice-report schema_version=1") and len(lines) == 2


def test_esa_objective_non_decreasing_in_ru_cap():
    sweep = ScenarioSweep(NetworkConfig(), "p_ru_max", (0.5, 0.75, 1.0, 1.5), seeds=(0, 1, 2),
                          solvers=("esa",))
    rep = run_sweep(sweep)
    for seed in sweep.seeds:
        v = rep.values("esa", seed=seed)
        assert len(v) == 4 and all(b >= a for a, b in zip(v, v[1:])), v


def test_esa_objective_non_decreasing_in_slice_cap():
    sweep = ScenarioSweep(NetworkConfig(p_ru_max=2.0), "p_slice_max", (0.5, 1.0),
                          seeds=(0, 1), solvers=("esa",), grid_levels=(0.0, 0.5, 1.0))
    rep = run_sweep(sweep)
    for seed in sweep.seeds:
        v = rep.values("esa", seed=seed)
        assert all(b >= a for a, b in zip(v, v[1:])), v


def test_esa_mean_grows_with_ue_count():
    sweep = ScenarioSweep(NetworkConfig(), "num_ues", (2, 3, 4), seeds=tuple(range(4)),
                          solvers=("esa",))
    rep = run_sweep(sweep)
    means = [rep.mean("esa", v) for v in sweep.values]
    assert all(b >= a for a, b in zip(means, means[1:])), means


def test_partial_failure_is_recorded(tmp_path):
    sweep = ScenarioSweep(TINY, "p_ru_max", (0.5, 1.0), seeds=(0,), solvers=("esa", "ssvae"),
                          checkpoints={1.0: str(tmp_path / "nope.ckpt")})
    rep = run_sweep(sweep)
    assert rep.n_failed == 2
    failed = [c for c in rep.cells if c.status == "failed"]
    assert {c.solver for c in failed} == {"ssvae"}
    assert all(c.error for c in failed)
    assert all(np.isfinite(c.objective) for c in rep.cells if c.solver == "esa")
    text = write_report(rep, tmp_path / "r.csv")["report"].read_text()
    assert text.count(",failed,") == 2


def mixed_sweep(ckpt):
    return ScenarioSweep(TINY, "p_ru_max", (0.5, 1.0), seeds=(0, 1),
                         checkpoints={"default": str(ckpt)}, dqn={"episodes": 4, "steps": 20})


def test_report_is_byte_identical_across_reruns_and_thread_counts(tiny_ckpt, tmp_path):
    a = write_report(run_sweep(mixed_sweep(tiny_ckpt)), tmp_path / "a" / "r.csv")
    b = write_report(run_sweep(mixed_sweep(tiny_ckpt), workers=3), tmp_path / "b" / "r.csv")
    for key in ("report", "summary", "provenance"):
        assert a[key].read_bytes() == b[key].read_bytes(), key
    head = a["report"].read_text().splitlines()
    assert head[1] == ",".join(REPORT_COLUMNS)
    assert [ln.split(",")[0] for ln in head[2:]] == ["esa"] * 4 + ["dqn"] * 4 + ["ssvae"] * 4
    prov = yaml.safe_load(a["provenance"].read_text())
    assert set(prov["checkpoint_sha256"]) == {str(tiny_ckpt)}
    assert prov["configs"]["1.0"] == TINY.digest()


def test_summary_matches_cells(tiny_ckpt):
    rep = run_sweep(mixed_sweep(tiny_ckpt))
    for row in rep.summary():
        obj = [c.objective for c in rep.cells if c.solver == row["solver"] and c.value == row["value"]]
        assert row["n_ok"] == 2 and row["n_failed"] == 0
        assert row["objective_mean"] == pytest.approx(np.mean(obj), rel=1e-12)
        assert row["objective_std"] == pytest.approx(np.std(obj), rel=1e-12, abs=1e-15)


def test_esa_dominates_feasible_learned_cells(tiny_ckpt):
    rep = run_sweep(mixed_sweep(tiny_ckpt))
    for c in rep.cells:
        if c.solver != "esa" and c.feasible:
            assert c.objective <= rep.values("esa", c.value, c.seed)[0] + 1e-9


def test_esa_counter_matches_structural_count():
    for seed in range(10):
        cfg, grid, h = random_instance(seed, max_lattice=5000)
        res = solve_esa(h, cfg, grid)
        row, = complexity_counters(cfg, grid, esa_result=res)
        assert row["measured"] == row["predicted"] == structural_count(cfg, grid)["exact"]
        assert row["nominal_formula"] == nominal_cost(cfg, grid)


def test_dqn_and_ssvae_counters(tiny_ckpt):
    grid = PowerGrid.for_config(TINY, 3)
    hp = DqnHyper(episodes=3, steps=11)
    res = train_dqn(TINY, np.ones(TINY.shape), hp, grid)
    ds = build_labeled_dataset(TINY, grid, 30, seed=4, n_unlabeled=7)
    sres = train_ssvae(ds, SsvaeHyper(epochs=3, stage_a_epochs=2, batch_size=8, val_fraction=0.0,
                                      encoder_hidden=(8,), head_hidden=(8,), decoder_hidden=(8,)))
    rows = complexity_counters(TINY, grid, dqn=(hp, res.env_steps),
                               ssvae=(3, len(ds), 8, sres.optimizer_steps))
    dqn_row, ss_row = rows
    assert dqn_row["measured"] == dqn_row["predicted"] == 33
    assert ss_row["measured"] == ss_row["predicted"] == 3 * math.ceil(37 / 8)
    assert DqnHyper().episodes * DqnHyper().steps == 12_500


def test_ordering_is_solver_value_seed():
    sweep = ScenarioSweep(TINY, "p_ru_max", (0.5, 1.0), seeds=(1, 0), solvers=("esa",))
    rep = ComparisonReport(sweep)
    rep.cells = [Cell("esa", "p_ru_max", v, s) for s in (1, 0) for v in (1.0, 0.5)]
    assert [(c.value, c.seed) for c in rep.ordered()] == [(0.5, 0), (0.5, 1), (1.0, 0), (1.0, 1)]
