import json
import time
from pathlib import Path

import numpy as np
import pytest

from physevo import cli, harness
from physevo.algorithms import OptimizerConfig

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
[run]
problem = "sphere"
seed = 3
repetitions = 3

[problem]
dim = 3

[optimizer]
max_evaluations = 300
"""


def test_minimal_config_expands_to_defaults():
    spec = harness.parse_config('[run]\nproblem = "sphere"\n')
    assert spec.optimizer == OptimizerConfig(max_evaluations=spec.optimizer.max_evaluations)
    assert spec.run.fidelity_schedule == [[0, spec.optimizer.max_evaluations]]
    assert spec.constraints.mode == "feasibility"
    assert spec.problem == harness.SphereConfig()


@pytest.mark.parametrize("text,exc,needle", [
    ('[run]\nproblem = "sphere"\n[optimizer]\npopulaton_size = 5\n', harness.UnknownKey, "populaton_size"),
    ('[run]\nproblem = "sphere"\n[extras]\n', harness.UnknownKey, "extras"),
    ('[run]\nseed = 1\n', harness.MissingRequired, "run.problem"),
    ('[run]\nproblem = "teapot"\n', harness.ConfigError, "teapot"),
])
def test_bad_configs(text, exc, needle):
    with pytest.raises(exc, match=needle):
        harness.parse_config(text)


def test_parse_error_location():
    with pytest.raises(harness.ParseError) as info:
        harness.parse_config('[run]\nproblem = "sphere\n')
    assert info.value.line == 2 and info.value.column is not None


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_roundtrip(path):
    spec = harness.load_config(path)
    assert harness.parse_config(spec.to_toml()) == spec


def test_run_writes_one_archive_per_repetition(tmp_path):
    spec = harness.parse_config(MINIMAL)
    out = harness.execute_run(spec, tmp_path / "r")
    assert sorted(p.name for p in out.glob("archive_*.jsonl")) == [f"archive_00{i}.jsonl" for i in range(3)]
    summary = json.loads((out / "summary.json").read_text())
    assert [r["seed"] for r in summary["repetitions"]] == [3, 4, 5]
    assert not (out / harness.MARKER).exists()
    echoed = harness.load_config(out / "config.toml")
    assert echoed.optimizer == spec.optimizer.resolved(3)


def test_existing_or_interrupted_run_needs_force(tmp_path):
    spec = harness.parse_config(MINIMAL)
    out = tmp_path / "r"
    out.mkdir()
    (out / harness.MARKER).write_text("")
    with pytest.raises(harness.IncompleteRun, match="interrupted"):
        harness.execute_run(spec, out)
    with pytest.raises(harness.IncompleteRun):
        harness.load_run(out)
    harness.execute_run(spec, out, force=True)
    with pytest.raises(harness.IncompleteRun, match="already"):
        harness.execute_run(spec, out)


def test_fidelity_schedule_continues_indices(tmp_path):
    text = MINIMAL.replace("repetitions = 3", "repetitions = 1\nfidelity_schedule = [[0, 100], [0, 120]]")
    spec = harness.parse_config(text)
    assert spec.optimizer.max_evaluations == 220
    out = harness.execute_run(spec, tmp_path / "r")
    _, (arch,), _ = harness.load_run(out)
    idx = [r.eval_index for r in arch]
    assert idx == list(range(len(idx))) and len(idx) <= 220
    its = [r.iteration for r in arch]
    assert its == sorted(its)


def test_unknown_fidelity_rejected(tmp_path):
    spec = harness.parse_config(MINIMAL.replace("repetitions = 3", "fidelity_schedule = [[2, 100]]"))
    with pytest.raises(harness.ConfigError, match="fidelity 2"):
        harness.execute_run(spec, tmp_path / "r")


@pytest.fixture(scope="module")
def sphere_run(tmp_path_factory):
    spec = harness.load_config(CONFIGS / "sphere.toml")
    return harness.execute_run(spec, tmp_path_factory.mktemp("runs") / "sphere")


def test_reports_for_sphere_run(sphere_run):
    t0 = time.perf_counter()
    paths = harness.export_reports(sphere_run)
    assert time.perf_counter() - t0 < 10.0
    names = {p.name for p in paths}
    assert {"stn.dot", "stn.json", "contribution.csv", "robustness.csv", "stats.json",
            "convergence.svg", "coverage_000.csv"} <= names
    svg = (sphere_run / "reports" / "convergence.svg").read_text()
    assert svg.count('<polyline class="run"') == 3


def test_best_so_far_is_monotone(sphere_run):
    spec, archives, _ = harness.load_run(sphere_run)
    curve = harness.best_so_far(archives[0], harness.ConstraintSet())
    assert np.all(np.diff(curve) <= 0)


def test_compare_needs_paired_runs(sphere_run, tmp_path):
    paired = MINIMAL.replace("dim = 3", "dim = 10").replace("seed = 3", "seed = 7")
    other = harness.execute_run(harness.parse_config(paired), tmp_path / "b")
    st = harness.compare_runs(sphere_run, other, 200)
    assert st.wins + st.ties + st.losses == 3
    single = harness.execute_run(harness.parse_config(MINIMAL.replace("repetitions = 3", "repetitions = 1")),
                                 tmp_path / "c")
    assert cli.main(["compare", str(sphere_run), str(single)]) == cli.EXIT_RUNTIME


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(MINIMAL)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "r")]) == cli.EXIT_OK
    assert "feasible=True" in capsys.readouterr().out
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "r")]) == cli.EXIT_RUNTIME
    assert cli.main(["report", str(tmp_path / "r"), "--kinds", "stn,stats"]) == cli.EXIT_OK
    bad = tmp_path / "bad.toml"
    bad.write_text('[run]\nproblem = "sphere"\n[optimizer]\nvariant = "SA"\n')
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    bad.write_text("[run\n")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert "line 1" in capsys.readouterr().err
    assert cli.main(["report", str(tmp_path / "missing")]) == cli.EXIT_RUNTIME
    assert cli.main(["list-problems"]) == cli.EXIT_OK
    listed = capsys.readouterr().out.split()
    assert set(harness.PROBLEMS) <= set(listed)


def test_console_script_installed():
    import shutil
    import subprocess
    exe = shutil.which("physevo")
    assert exe is not None
    out = subprocess.run([exe, "list-problems"], capture_output=True, text=True, check=True)
    assert "shape" in out.stdout
