import json
import os

import numpy as np
import pytest

from netrack.cli import main
from netrack.config import ConfigError, config_hash, load_config, parse_config
from netrack.experiment import (ExperimentError, oracle_check, run_experiment, sweep,
                                validate_experiment)

MINIMAL = """
seed: 7
n: 2
d: 1
T: 100
replicas: 10
topology: {kind: ring}
trajectory: {kind: static, theta: 1.0}
alpha: static
"""

EXAMPLE = os.path.join(os.path.dirname(__file__), "..", "configs", "example.yaml")


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert (cfg.n, cfg.d, cfg.T, cfg.replicas, cfg.seed) == (2, 1, 100, 10, 7)
    assert cfg.topology.kind == "ring" and cfg.alpha == "static"
    assert cfg.sensing.kind == "identity" and cfg.init == {"kind": "zero"}


def test_negative_horizon_named():
    with pytest.raises(ConfigError, match=r"config\.T"):
        parse_config(MINIMAL.replace("T: 100", "T: -5"))


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="alhpa"):
        parse_config(MINIMAL + "alhpa: 0.1\n")
    with pytest.raises(ConfigError, match=r"config\.topology\.wieghts"):
        parse_config(MINIMAL.replace("{kind: ring}", "{kind: ring, wieghts: metropolis}"))


def test_missing_seed():
    with pytest.raises(ConfigError, match="seed"):
        parse_config(MINIMAL.replace("seed: 7", ""))


def test_bad_nested_values():
    with pytest.raises(ConfigError, match="trajectory.velocity"):
        parse_config(MINIMAL.replace("{kind: static, theta: 1.0}", "{kind: linear_drift}"))
    with pytest.raises(ConfigError, match="config.alpha"):
        parse_config(MINIMAL.replace("alpha: static", "alpha: fast"))
    with pytest.raises(ConfigError, match="sigma"):
        parse_config(MINIMAL + "sensing: {noise: {sigma: [1, 2, 3]}}\n")


def test_hash_ignores_key_order():
    a = parse_config(MINIMAL)
    reordered = "\n".join(reversed([ln for ln in MINIMAL.strip().splitlines()]))
    b = parse_config(reordered)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(parse_config(MINIMAL.replace("seed: 7", "seed: 8")))
    c = parse_config(json.dumps({"seed": 7, "n": 2, "d": 1, "T": 100, "replicas": 10,
                                 "topology": {"kind": "ring"},
                                 "trajectory": {"theta": 1.0, "kind": "static"},
                                 "alpha": "static"}))
    assert config_hash(a) == config_hash(c)


def test_example_config_loads():
    cfg = load_config(EXAMPLE)
    assert cfg.sensing.kind == "anchored"


NOISELESS_EXACT = MINIMAL.replace("alpha: static", "alpha: 0.2") + """
sensing: {noise: {sigma: 0.0}}
init: {kind: exact}
"""


def test_noiseless_exact_run(tmp_path):
    m = run_experiment(parse_config(NOISELESS_EXACT), out=str(tmp_path / "run"))
    assert m["aggregate"]["reg_T_mean"] == 0.0
    assert m["bounds"]["theorem1"]["total"] == 0.0
    assert m["checks"]["dominance"]["pass"] and not m["bound_violation"]
    files = set(os.listdir(tmp_path / "run"))
    assert {"manifest.json", "aggregate.csv", "trajectory.csv", "traces"} <= files
    assert len(os.listdir(tmp_path / "run" / "traces")) == 10
    # no staging leftovers
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".partial-")]


def test_csv_format(tmp_path):
    cfg = parse_config(MINIMAL.replace("T: 100", "T: 20"))
    run_experiment(cfg, out=str(tmp_path))
    raw = (tmp_path / "traces" / "replica_00000.csv").read_bytes()
    lines = raw.decode().split("\n")
    assert b"\r" not in raw and lines[-1] == ""
    assert lines[0] == "t,r_t,msd_t,err_norm_0,err_norm_1"
    fields = lines[2].split(",")
    assert len(fields) == 5 and float(fields[1]) >= 0
    # 17 significant digits round-trip exactly
    assert float(fields[1]) == float(f"{float(fields[1]):.17g}")
    agg = np.loadtxt(tmp_path / "aggregate.csv", delimiter=",", skiprows=1)
    assert agg.shape == (20, 7)


def test_reproducible_except_timestamp(tmp_path):
    cfg = parse_config(MINIMAL.replace("T: 100", "T: 30"))
    a = run_experiment(cfg, out=str(tmp_path / "a"))
    b = run_experiment(cfg, out=str(tmp_path / "b"), threads=3)
    a.pop("timestamp"), b.pop("timestamp")
    assert a == b
    for name in ("aggregate.csv", "replicas.csv", "traces/replica_00007.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unstable_alpha_flagged(tmp_path):
    text = MINIMAL.replace("alpha: static", "alpha: 3.0") + "flags: {allow_unstable: true}\n"
    m = run_experiment(parse_config(text), out=str(tmp_path / "u"))
    assert m["q_norm"] >= 1 and not m["stable"]
    assert m["bounds"]["theorem1"] is None and "1" in m["bounds"]["inapplicable"]
    assert m["aggregate"]["unstable"]
    with pytest.raises(ExperimentError):
        run_experiment(parse_config(MINIMAL.replace("alpha: static", "alpha: 3.0")))


def test_failure_leaves_no_partial_output(tmp_path, monkeypatch):
    import netrack.experiment as ex

    def boom(*a, **k):
        raise RuntimeError("disk full")
    monkeypatch.setattr(ex, "_write_outputs", boom)
    with pytest.raises(RuntimeError):
        run_experiment(parse_config(MINIMAL), out=str(tmp_path / "out"))
    assert os.listdir(tmp_path) == []


def test_sweep_single_value_matches_run(tmp_path):
    cfg = parse_config(MINIMAL.replace("T: 100", "T: 40"))
    rep = sweep(cfg, "T", [40], out=str(tmp_path / "s"), timestamp="x")
    m = run_experiment(cfg, timestamp="x")
    assert rep["points"][0]["reg_T_mean"] == m["aggregate"]["reg_T_mean"]
    assert (tmp_path / "s" / "sweep.csv").read_text().startswith("axis,value,")


def test_sweep_records_failures_and_fits_slope(tmp_path):
    cfg = parse_config(MINIMAL.replace("alpha: static", "alpha: 0.1"))
    rep = sweep(cfg, "alpha", [0.05, 0.1, 5.0])
    assert [p["status"] for p in rep["points"]][:2] == ["ok", "ok"]
    assert rep["points"][2]["status"].startswith("error")
    with pytest.raises(ValueError):
        sweep(cfg, "alpha", [0.2, 0.1])


def test_sweep_noise_and_path_scale():
    base = MINIMAL.replace("alpha: static", "alpha: 0.2").replace(
        "{kind: static, theta: 1.0}", "{kind: random_walk, step_std: 0.1}")
    cfg = parse_config(base + "init: {kind: exact}\n")
    rep = sweep(cfg, "path_scale", [1.0, 4.0])
    c = [p["C_T"] for p in rep["points"]]
    assert c[1] == pytest.approx(4 * c[0])
    rep = sweep(cfg, "noise_scale", [0.5, 1.0, 2.0])
    regs = [p["reg_T_mean"] for p in rep["points"]]
    assert regs[0] < regs[1] < regs[2]


def test_oracle_and_validate():
    cfg = parse_config(MINIMAL + "init: {kind: gaussian, std: 2.0}\n")
    rep = oracle_check(cfg)
    assert rep["pass"] and rep["max_relative_deviation"] <= 1e-9
    v = validate_experiment(cfg)
    assert v["valid"] and v["alpha_max"] == pytest.approx(0.5)


def test_validate_reports_bad_matrix():
    text = MINIMAL.replace("{kind: ring}", "{kind: matrix, matrix: [[0, 1], [1, 0]]}")
    v = validate_experiment(parse_config(text))
    assert not v["valid"]
    assert not v["mixing"]["checks"]["positive_diagonal"]["pass"]


def test_cli_subcommands(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(MINIMAL + "init: {kind: exact}\n")
    out = tmp_path / "o"
    assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads((out / "validation.json").read_text())["valid"]
    assert main(["run", "--config", str(cfg), "--out", str(out / "run"), "--replicas", "3",
                 "--seed", "99"]) == 0
    man = json.loads((out / "run" / "manifest.json").read_text())
    assert man["config"]["seed"] == 99 and man["aggregate"]["R"] == 3
    assert main(["sweep", "--config", str(cfg), "--out", str(out / "sw"), "--axis", "T",
                 "--values", "20,40"]) == 0
    assert main(["oracle", "--config", str(cfg)]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL + "alhpa: 1\n")
    assert main(["run", "--config", str(bad)]) == 1
    assert "alhpa" in capsys.readouterr().err


def test_cli_signals_bound_violation(tmp_path):
    # zero initialization far from the target breaks the e_0 = 0 premise
    text = (MINIMAL.replace("theta: 1.0", "theta: 50.0").replace("alpha: static", "alpha: 0.01")
            + "sensing: {noise: {sigma: 0.0}}\n")
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
