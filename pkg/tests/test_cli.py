import hashlib
import subprocess
import sys

import pytest
import yaml

from oranslice.cli import (EXIT_BUDGET, EXIT_CHECKPOINT, EXIT_FAILED, EXIT_IO, EXIT_NO_LABELS,
                           EXIT_OK, EXIT_USAGE, main)
from oranslice.config import NetworkConfig, save_config
from oranslice.dataset import load_dataset
from oranslice.system import load_allocation

TINY = NetworkConfig(num_rus=1, num_ues_embb=1, num_ues_urllc=1, num_prbs=2)
FAST_SSVAE = ["--set", "epochs=3", "--set", "stage_a_epochs=2", "--set", "batch_size=16"]


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ORANSLICE_OUTPUT_ROOT", raising=False)
    save_config(TINY, tmp_path / "tiny.yaml")
    save_config(NetworkConfig(), tmp_path / "desk.yaml")
    return tmp_path


@pytest.fixture
def dataset(work):
    assert main(["gen", "tiny.yaml", "--samples", "30", "--unlabeled", "5", "--seed", "1",
                 "--out", "ds.tsv"]) == EXIT_OK
    return work / "ds.tsv"


def progress_lines(out):
    lines = out.strip().splitlines()
    assert lines and all("=" in tok for ln in lines for tok in ln.split())
    return lines


# -- gen ----------------------------------------------------------------------------

@pytest.mark.parametrize("cmd", [["gen", "missing.yaml", "--samples", "1", "--out", "x"],
                                 ["solve", "missing.yaml", "--solver", "esa", "--out", "x"],
                                 ["train", "missing.yaml", "--model", "dqn", "--out", "x"],
                                 ["channel", "missing.yaml", "--out", "x"]])
def test_missing_config_exits_2_naming_path(work, capsys, cmd):
    assert main(cmd) == EXIT_USAGE
    assert "missing.yaml" in capsys.readouterr().err


def test_malformed_config_exits_2(work, capsys):
    (work / "bad.yaml").write_text("num_rus: many\n")
    assert main(["gen", "bad.yaml", "--samples", "1", "--out", "x"]) == EXIT_USAGE
    assert "bad.yaml" in capsys.readouterr().err


def test_gen_writes_dataset_and_manifest(work, capsys):
    assert main(["gen", "tiny.yaml", "--samples", "4", "--unlabeled", "2", "--out", "d/ds.tsv"]) == 0
    lines = progress_lines(capsys.readouterr().out)
    assert lines[-1].startswith("command=gen samples=4 unlabeled=2")
    ds = load_dataset(work / "d" / "ds.tsv")
    assert (ds.n_labeled, ds.n_unlabeled) == (4, 2)
    man = yaml.safe_load((work / "d" / "ds.tsv.manifest.yaml").read_text())
    assert man["status"] == "ok" and man["exit_code"] == 0 and man["schema_version"] == 1
    assert man["config_sha256"] == sha(work / "tiny.yaml")
    for path, digest in man["outputs"].items():
        assert sha(work / path) == digest


def test_gen_zero_samples_gives_valid_empty_dataset(work):
    assert main(["gen", "tiny.yaml", "--samples", "0", "--out", "empty.tsv"]) == EXIT_OK
    ds = load_dataset(work / "empty.tsv")
    assert len(ds) == 0 and ds.cfg == TINY


def test_gen_is_byte_identical_on_rerun(work):
    for out in ("a.tsv", "b.tsv"):
        assert main(["gen", "tiny.yaml", "--samples", "6", "--unlabeled", "3", "--seed", "4",
                     "--out", out]) == EXIT_OK
    assert sha(work / "a.tsv") == sha(work / "b.tsv")
    assert sha(work / "a.tsv.meta.yaml") == sha(work / "b.tsv.meta.yaml")


def test_gen_budget_exceeded_exits_3(work, capsys):
    assert main(["gen", "desk.yaml", "--samples", "1", "--budget", "100", "--out", "x.tsv"]) == EXIT_BUDGET
    assert "budget" in capsys.readouterr().err
    assert not (work / "x.tsv").exists()


def test_unwritable_output_exits_4(work):
    (work / "blocker").write_text("")
    assert main(["gen", "tiny.yaml", "--samples", "1", "--out", "blocker/ds.tsv"]) == EXIT_IO


def test_output_root_env(work, monkeypatch):
    monkeypatch.setenv("ORANSLICE_OUTPUT_ROOT", str(work / "root"))
    assert main(["channel", "tiny.yaml", "--seed", "2", "--out", "ch.txt"]) == EXIT_OK
    assert (work / "root" / "ch.txt").is_file()


# -- solve ---------------------------------------------------------------------------

def test_solve_esa_writes_reports_with_no_violations(work):
    assert main(["solve", "tiny.yaml", "--solver", "esa", "--channel-seed", "8", "--out", "s"]) == 0
    out = work / "s"
    for name in ("allocation.txt", "rates.tsv", "violations.tsv", "result.yaml", "manifest.yaml",
                 "config.yaml", "channel.txt"):
        assert (out / name).is_file(), name
    assert (out / "violations.tsv").read_text().splitlines()[2:] == []
    result = yaml.safe_load((out / "result.yaml").read_text())
    assert result["feasible"] and result["violations"] == 0
    alloc = load_allocation(out / "allocation.txt")
    assert alloc.alpha.sum() == 2
    rates = (out / "rates.tsv").read_text().splitlines()
    assert rates[0] == "# oranslice-rates schema_version=1"
    assert float(rates[-1].split("\t")[2]) == pytest.approx(result["objective"], rel=1e-15)


@pytest.mark.parametrize("solver", ["ssvae", "dqn"])
def test_solve_without_checkpoint_exits_5(work, solver):
    assert main(["solve", "tiny.yaml", "--solver", solver, "--out", "s"]) == EXIT_CHECKPOINT
    assert main(["solve", "tiny.yaml", "--solver", solver, "--checkpoint", "none.ckpt",
                 "--out", "s"]) == EXIT_CHECKPOINT


def test_solve_corrupt_checkpoint_exits_5(work):
    (work / "junk.ckpt").write_bytes(b"not a checkpoint")
    assert main(["solve", "tiny.yaml", "--solver", "ssvae", "--checkpoint", "junk.ckpt",
                 "--out", "s"]) == EXIT_CHECKPOINT


def test_esa_dominates_dqn_on_same_channel(work):
    assert main(["channel", "tiny.yaml", "--seed", "8", "--out", "ch.txt"]) == 0
    assert main(["train", "tiny.yaml", "--model", "dqn", "--channel", "ch.txt",
                 "--set", "episodes=30", "--out", "t"]) == 0
    assert main(["solve", "tiny.yaml", "--solver", "dqn", "--checkpoint", "t/checkpoint.ckpt",
                 "--channel", "ch.txt", "--out", "sd"]) == 0
    assert main(["solve", "tiny.yaml", "--solver", "esa", "--channel", "ch.txt", "--out", "se"]) == 0
    esa = yaml.safe_load((work / "se" / "result.yaml").read_text())
    dqn = yaml.safe_load((work / "sd" / "result.yaml").read_text())
    assert esa["objective"] >= dqn["objective"]


def test_solve_rejects_channel_of_wrong_shape(work):
    assert main(["channel", "desk.yaml", "--out", "big.txt"]) == 0
    assert main(["solve", "tiny.yaml", "--solver", "esa", "--channel", "big.txt",
                 "--out", "s"]) == EXIT_USAGE


# -- train ---------------------------------------------------------------------------

def test_train_echoes_default_hyper(work, dataset):
    assert main(["train", "tiny.yaml", "--model", "ssvae", "--dataset", "ds.tsv", "--out", "t"]) == 0
    man = yaml.safe_load((work / "t" / "manifest.yaml").read_text())
    hp = man["hyper"]
    assert (hp["lr"], hp["epochs"], hp["batch_size"], hp["dropout"], hp["latent_dim"],
            hp["temperature"]) == (0.001, 40, 128, 0.3, 20, 0.25)
    assert man["n_labeled"] == 30 and man["checkpoint_sha256"] == sha(work / "t" / "checkpoint.ckpt")
    hist = (work / "t" / "history.csv").read_text().splitlines()
    assert hist[0].startswith("epoch,stage,loss_total") and len(hist) == 41


def test_train_unknown_hyper_key_exits_2(work, dataset, capsys):
    assert main(["train", "tiny.yaml", "--model", "ssvae", "--dataset", "ds.tsv",
                 "--set", "warp=9", "--out", "t"]) == EXIT_USAGE
    assert "warp" in capsys.readouterr().err
    (work / "h.yaml").write_text("gamma: 0.5\nturbo: 1\n")
    assert main(["train", "tiny.yaml", "--model", "dqn", "--hyper", "h.yaml", "--out", "t"]) == EXIT_USAGE
    assert "turbo" in capsys.readouterr().err


def test_train_ssvae_needs_labels_and_dataset(work, dataset):
    assert main(["train", "tiny.yaml", "--model", "ssvae", "--out", "t"]) == EXIT_USAGE
    assert main(["train", "tiny.yaml", "--model", "ssvae", "--dataset", "ds.tsv",
                 "--n-labeled", "0", "--out", "t"]) == EXIT_NO_LABELS
    assert main(["gen", "tiny.yaml", "--samples", "0", "--unlabeled", "4", "--out", "u.tsv"]) == 0
    assert main(["train", "tiny.yaml", "--model", "ssvae", "--dataset", "u.tsv",
                 "--out", "t"]) == EXIT_NO_LABELS


@pytest.mark.parametrize("model", ["ssvae", "dqn"])
def test_train_checkpoint_hash_is_reproducible(work, dataset, model):
    extra = (["--dataset", "ds.tsv", *FAST_SSVAE] if model == "ssvae"
             else ["--set", "episodes=3", "--channel-seed", "5"])
    for out in ("a", "b"):
        assert main(["train", "tiny.yaml", "--model", model, *extra, "--out", out]) == 0
    assert sha(work / "a" / "checkpoint.ckpt") == sha(work / "b" / "checkpoint.ckpt")
    assert sha(work / "a" / "history.csv") == sha(work / "b" / "history.csv")


def test_trained_ssvae_solves(work, dataset):
    assert main(["train", "tiny.yaml", "--model", "ssvae", "--dataset", "ds.tsv", *FAST_SSVAE,
                 "--out", "t"]) == 0
    assert main(["solve", "tiny.yaml", "--solver", "ssvae", "--checkpoint", "t/checkpoint.ckpt",
                 "--out", "s"]) == 0
    assert yaml.safe_load((work / "s" / "manifest.yaml").read_text())["checkpoint_sha256"] == \
        sha(work / "t" / "checkpoint.ckpt")


# -- eval -----------------------------------------------------------------------------

def write_sweep(work, name, **over):
    spec = {"base": "tiny.yaml", "variable": "p_ru_max", "values": [0.25, 0.5, 0.75, 1.0, 1.5],
            "seeds": [0, 1], "solvers": ["esa"]}
    spec.update(over)
    (work / name).write_text(yaml.safe_dump(spec))
    return name


def test_eval_one_failing_cell_of_ten(work, dataset):
    assert main(["train", "tiny.yaml", "--model", "ssvae", "--dataset", "ds.tsv", *FAST_SSVAE,
                 "--out", "t"]) == 0
    values = [0.25, 0.5, 0.75, 1.0, 1.5]
    ckpts = {v: "t/checkpoint.ckpt" for v in values[:-1]}
    spec = write_sweep(work, "s.yaml", seeds=[0], solvers=["esa", "ssvae"], checkpoints=ckpts)
    assert main(["eval", spec, "--out", "r/report.csv"]) == EXIT_OK
    text = (work / "r" / "report.csv").read_text()
    assert text.count(",failed,") == 1 and text.count(",ok,") == 9
    man = yaml.safe_load((work / "r" / "report.csv.manifest.yaml").read_text())
    assert man["failed_cells"] == 1 and man["status"] == "ok"


def test_eval_exit_1_only_when_every_cell_fails(work):
    spec = write_sweep(work, "s.yaml", solvers=["ssvae"], checkpoints={"default": "gone.ckpt"})
    assert main(["eval", spec, "--out", "r.csv"]) == EXIT_FAILED


def test_eval_empty_values_exits_2(work):
    assert main(["eval", write_sweep(work, "s.yaml", values=[]), "--out", "r.csv"]) == EXIT_USAGE
    assert main(["eval", "nope.yaml", "--out", "r.csv"]) == EXIT_USAGE


def test_eval_rerun_is_byte_identical(work):
    spec = write_sweep(work, "s.yaml", solvers=["esa", "dqn"], values=[0.5, 1.0],
                       dqn={"episodes": 3, "steps": 10})
    assert main(["eval", spec, "--out", "a/report.csv"]) == 0
    assert main(["eval", spec, "--out", "b/report.csv", "--workers", "2"]) == 0
    for name in ("report.csv", "report.summary.csv", "report.csv.provenance.yaml"):
        assert sha(work / "a" / name) == sha(work / "b" / name), name


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "oranslice.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("oranslice ")
    proc = subprocess.run([sys.executable, "-m", "oranslice.cli", "bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
