import functools
import json
import math
import subprocess
import sys

import pytest

from bfdarcy import cli
from bfdarcy.cli import EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, RunManifest, main
from bfdarcy.io import HISTORY_COLUMNS, read_history
from bfdarcy.nlsolve import NewtonConfig


def test_rejects_zero_levels(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--problem", "example1", "--levels", "0"])
    assert info.value.code == EXIT_USAGE
    assert "positive integer" in capsys.readouterr().err


def test_rejects_unknown_problem(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--problem", "example9"])
    assert info.value.code == EXIT_USAGE


@pytest.mark.parametrize("bad", [["--c-adt", "1.5"], ["--rho", "2.5"], ["--newton-tol", "0"]])
def test_rejects_bad_numbers(bad):
    with pytest.raises(SystemExit) as info:
        main(["run", "--problem", "example1"] + bad)
    assert info.value.code == EXIT_USAGE


def test_uniform_history(tmp_path, capsys):
    out = tmp_path / "ex1"
    code = main(["run", "--problem", "example1", "--mode", "uniform", "--levels", "4", "--out", str(out)])
    assert code == EXIT_OK
    rows = read_history(out / "history.csv")
    assert len(rows) == 4
    assert list(rows[0]) == HISTORY_COLUMNS
    assert rows[0]["r_uB"] == "nan"
    for row in rows[1:]:
        assert 0.8 < float(row["r_uB"]) < 1.2
        assert int(row["newton_iters"]) > 0
    assert math.isfinite(float(rows[-1]["eff"]))
    assert (out / "level_3" / "mesh.vtk").exists()
    assert "level 3: DoF" in capsys.readouterr().out


def test_history_is_deterministic(tmp_path):
    texts = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["run", "--problem", "example2", "--mode", "adaptive", "--levels", "2",
                     "--no-snapshots", "--out", str(out)]) == EXIT_OK
        texts.append((out / "history.csv").read_bytes())
    assert texts[0] == texts[1]


def test_manifest_roundtrip(tmp_path):
    m = RunManifest("example3", "adaptive", 3, 5000, 0.7, 1e-8, 4.0, str(tmp_path), 2, 7)
    assert RunManifest.from_json(m.to_json()) == m
    assert main(["run", "--problem", "example1", "--levels", "1", "--out", str(tmp_path)]) == EXIT_OK
    saved = json.loads((tmp_path / "manifest.json").read_text())
    assert saved["problem"] == "example1" and saved["levels"] == 1


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BFD_OUT", str(tmp_path / "env"))
    assert main(["run", "--problem", "example1", "--levels", "1", "--no-snapshots"]) == EXIT_OK
    assert (tmp_path / "env" / "history.csv").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--problem", "example1", "--levels", "1", "--out", str(blocker / "sub")]) == EXIT_USAGE


def test_divergence_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(cli, "NewtonConfig", functools.partial(NewtonConfig, max_iter=1))
    code = main(["run", "--problem", "example3", "--levels", "2", "--out", str(tmp_path)])
    assert code == EXIT_DIVERGED
    assert "did not converge" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bfdarcy.cli", "run", "--problem", "example1", "--levels", "1",
                        "--no-snapshots", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == EXIT_OK, r.stderr
    assert "level 0" in r.stdout
