import json

import numpy as np
import pytest

from maarp.cli import EXIT_CONFIG, EXIT_OK, EXIT_ORACLE, execute, main, oracle_command
from maarp.config import ConfigError, ExperimentConfig, parse_config, parse_config_text, preset_names
from maarp.oracle import VneSolution


def test_minimal_config_fills_defaults():
    cfg = parse_config_text("[game]\nN = 4\nD = 3\n")
    ref = ExperimentConfig()
    assert (cfg.game.N, cfg.game.D) == (4, 3)
    assert cfg.R == 3
    assert cfg.schedule == ref.schedule and cfg.noise == ref.noise and cfg.run == ref.run
    assert cfg.record_every == 10


def test_misspelled_key_is_named_with_line():
    with pytest.raises(ConfigError, match=r"3:.*game\.Dd"):
        parse_config_text("[game]\nN = 4\nDd = 3\n")


@pytest.mark.parametrize("text, fragment", [
    ("[gmae]\n", "unknown section"),
    ("N = 3\n", "outside"),
    ("[game]\nN 3\n", "key = value"),
    ("[game]\nN = three\n", "bad value"),
    ("[game]\nN = 3\nN = 4\n", "duplicate"),
    ("[run]\nalgorithms = maarp, bogus\n", "unknown algorithm"),
    ("[constraints]\nR = 3\n", "must equal"),
    ("[output]\nemit = distance\n", "oracle"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(text)


def test_comments_and_scientific_integers():
    cfg = parse_config_text("# c\n[run]\n; other\niters = 1e5  # trailing\nalgorithms = maarp\n")
    assert cfg.run.iters == 100_000 and cfg.run.algorithms == ["maarp"]


def test_fig1_preset():
    cfg = parse_config("fig1")
    assert (cfg.game.N, cfg.game.D, cfg.R, cfg.constraints.d) == (50, 20, 20, 10.5)
    assert cfg.noise.sigma == 0.0
    assert (cfg.schedule.gamma0, cfg.schedule.p, cfg.schedule.alpha) == (0.5, 0.5, 5.0)
    assert cfg.run.iters == 100_000


def test_all_presets_parse():
    names = preset_names()
    assert {"fig1", "fig2", "fig3", "fig5", "fig7", "small"} <= set(names)
    for n in names:
        parse_config(n)
    assert parse_config("fig5").run.samples == 500 and parse_config("fig5").noise.sigma == 5.0
    assert parse_config("fig3").constraints.d == 8.0
    assert set(parse_config("fig7").run.algorithms) == {"maarp", "primal_dual", "asymmetric_projection"}


def quick(name, **run):
    cfg = parse_config(name)
    for k, v in run.items():
        setattr(cfg.run, k, v)
    return cfg.validate()


def test_fig1_inventory(tmp_path):
    cfg = quick("fig1", iters=200)
    assert execute(cfg, tmp_path, log=lambda *_: None) == EXIT_OK
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["manifest.json", "rnccv_ergodic__anarchy__entropy.csv", "rnccv_ergodic__maarp__entropy.csv",
                     "rnccv_state__anarchy__entropy.csv", "rnccv_state__maarp__entropy.csv"]
    lines = (tmp_path / "rnccv_state__maarp__entropy.csv").read_text().splitlines()
    assert lines[0] == "iter,value" and len(lines) == 201
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert len(man["config_sha256"]) == 64 and man["master_seed"] == 0 and "numpy" in man["versions"]


def test_fig5_bands(tmp_path):
    cfg = quick("fig5", iters=50, samples=4, mirror_map=["entropy"])
    assert execute(cfg, tmp_path, log=lambda *_: None) == EXIT_OK
    head = (tmp_path / "rnccv_ergodic__maarp__entropy__bands.csv").read_text().splitlines()[0]
    assert head == "iter,mean,p25,p50,p75,p90"
    long = (tmp_path / "rnccv_ergodic__maarp__entropy.csv").read_text().splitlines()
    assert long[0] == "sample,iter,value" and len(long) == 1 + 4 * 50
    assert [int(r.split(",")[0]) for r in long[1:]] == sorted(int(r.split(",")[0]) for r in long[1:])


def test_repeat_and_parallel_runs_are_byte_identical(tmp_path):
    outs = []
    for k, workers in enumerate((1, 1, 3)):
        cfg = quick("fig5", iters=60, samples=3, workers=workers)
        d = tmp_path / str(k)
        execute(cfg, d, log=lambda *_: None)
        outs.append({p.name: p.read_bytes() for p in d.iterdir()})
    assert outs[0] == outs[1] == outs[2]


def test_failed_sample_gives_nonzero_exit(tmp_path, monkeypatch):
    import maarp.cli as cli
    from maarp.dynamics import NumericalFailure

    real = cli.run

    def flaky(*a, **kw):
        if kw["rng"].stream_id == 1:
            raise NumericalFailure(3, "forced")
        return real(*a, **kw)

    monkeypatch.setattr(cli, "run", flaky)
    cfg = quick("small", iters=30, samples=3)
    assert execute(cfg, tmp_path, log=lambda *_: None) == 2
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert [f["sample"] for f in man["failures"]] == [1]
    rows = (tmp_path / "rnccv_state__maarp__entropy.csv").read_text().splitlines()[1:]
    assert {r.split(",")[0] for r in rows} == {"0", "2"}


def test_oracle_command_small_preset(tmp_path):
    cfg = parse_config("small")
    logs = []
    assert oracle_command(cfg, tmp_path, log=logs.append) == EXIT_OK
    sol = VneSolution.load(tmp_path / "vne.json")
    assert sol.residual <= 1e-8
    first = (tmp_path / "vne.json").read_bytes()
    oracle_command(cfg, tmp_path, log=logs.append)
    assert (tmp_path / "vne.json").read_bytes() == first
    assert any("complementarity" in s for s in logs)


def test_oracle_command_refuses_non_monotone(tmp_path, monkeypatch):
    import maarp.cli as cli
    from maarp.game import QuadraticGameSpec, uniform_constraints

    bad = QuadraticGameSpec(2, 2, -np.eye(2), np.zeros((2, 2)))
    monkeypatch.setattr(cli, "build_problem", lambda cfg: (bad, uniform_constraints(2, 5.0)))
    logs = []
    assert oracle_command(parse_config("small"), tmp_path, log=logs.append) == EXIT_ORACLE
    assert "eigenvalue -1" in logs[0]


def test_distance_metric_uses_oracle(tmp_path):
    cfg = parse_config("small")
    oracle_command(cfg, tmp_path, log=lambda *_: None)
    cfg.output.oracle = str(tmp_path / "vne.json")
    cfg.output.emit = ["distance"]
    cfg.run.iters = 2000
    execute(cfg.validate(), tmp_path / "run", log=lambda *_: None)
    vals = np.loadtxt(tmp_path / "run" / "distance__maarp__entropy.csv", delimiter=",", skiprows=1)[:, 1]
    assert vals[-1] < vals[0]


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[game]\nNN = 2\n")
    assert main(["--config", str(bad)]) == EXIT_CONFIG
    assert "NN" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["--config", "small", "--validate"]) == EXIT_OK
    assert "trackable_from" in capsys.readouterr().out
    out = tmp_path / "o"
    assert main(["--config", "small", "--out", str(out), "--iters", "40", "--algorithm", "maarp",
                 "--algorithm", "anarchy", "--mirror", "euclidean", "--seed", "9", "--record-every", "5"]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["master_seed"] == 9 and man["config"]["run"]["mirror_map"] == ["euclidean"]
    assert (out / "rnccv_state__anarchy__euclidean.csv").read_text().count("\n") == 1 + 8
