import json
import math

import pytest

from polaronlab import cli, config


def test_parse_number_forms():
    assert config.parse_number("1/256") == 1 / 256
    assert config.parse_number(" 1e-3 ") == 1e-3
    assert math.isinf(config.parse_number("inf"))
    for bad in ("abc", "1/0", ""):
        with pytest.raises(config.ConfigError):
            config.parse_number(bad)


def test_parse_grid_forms():
    assert config.parse_grid("1, 2,3") == [1.0, 2.0, 3.0]
    assert config.parse_grid("") == []
    g = config.parse_grid("log:10:1e6:6")
    assert len(g) == 6 and g[0] == pytest.approx(10) and g[-1] == pytest.approx(1e6)
    assert g[2] / g[1] == pytest.approx(10.0)
    for bad in ("log:1:2", "log:0:10:3", "log:1:10:0"):
        with pytest.raises(config.ConfigError):
            config.parse_grid(bad)


def test_parse_bool():
    assert config.parse_bool("Yes") and not config.parse_bool("off")
    with pytest.raises(config.ConfigError):
        config.parse_bool("maybe")


def test_defaults_resolve_for_every_subcommand():
    for name in config.SCHEMA:
        cfg = config.load(name)
        assert set(cfg) == set(config.SCHEMA[name]) | {"_raw"}


def test_overrides_and_sections():
    cfg = config.load("mcmc", overrides=["T=2", "mcmc.A=10", "spectral.eta=1/8"])
    assert cfg["T"] == 2 and cfg["A"] == 10.0
    with pytest.raises(config.ConfigError, match="key=value"):
        config.load("mcmc", overrides=["T"])
    with pytest.raises(config.ConfigError, match="unknown keys"):
        config.load("mcmc", overrides=["temperature=3"])
    with pytest.raises(config.ConfigError, match="violates"):
        config.load("mcmc", overrides=["steps=10"])
    with pytest.raises(config.ConfigError, match="integer"):
        config.load("mcmc", overrides=["T=2.5"])
    with pytest.raises(config.ConfigError):
        config.load("nonsense")


def test_ini_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[spectral]\nbetas = 1,2\n[gci]\ncases = 3\n")
    assert config.load("spectral", str(p))["betas"] == [1.0, 2.0]
    assert config.load("gci", str(p))["cases"] == 3
    assert config.load("decompose", str(p))["dim"] == 2
    p.write_text("not an ini file")
    with pytest.raises(config.ConfigError):
        config.load("spectral", str(p))


def test_manifest_for_other_subcommand(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"subcommand": "gci", "config": {}}))
    with pytest.raises(config.ConfigError, match="manifest"):
        config.load("spectral", str(p))


def test_config_hash_is_order_free():
    assert config.config_hash({"a": "1", "b": "2"}) == config.config_hash({"b": "2", "a": "1"})


def test_format_value():
    import numpy as np
    assert cli.format_value(0.1) == "1.0000000000000001e-01"
    assert float(cli.format_value(np.float64(1 / 3))) == 1 / 3
    assert cli.format_value(True) == "1" and cli.format_value(np.int64(7)) == "7"
    assert cli.format_value("x") == "x"


def test_usage_errors(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert cli.run(["recursion", "--out", out, "--override", "alphas="]) == cli.EXIT_USAGE
    assert cli.run(["spectral", "--out", out, "--override", "eta=0.3"]) == cli.EXIT_USAGE
    assert cli.run(["spectral", "--out", out, "--seed", "-1"]) == cli.EXIT_USAGE
    assert cli.run(["spectral", "--out", out, "--config", str(tmp_path / "missing.ini")]) == cli.EXIT_USAGE
    assert cli.run(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.run(["spectral", "--help"]) == cli.EXIT_OK
    assert "config error" in capsys.readouterr().err


def test_spectral_run_and_manifest(tmp_path):
    out = tmp_path / "a"
    assert cli.run(["spectral", "--out", str(out), "--seed", "9"]) == cli.EXIT_OK
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 9 and m["ok"] and m["subcommand"] == "spectral"
    assert m["config_hash"] == config.config_hash(m["config"])
    assert all((out / name).exists() for name in m["files"])


def test_assertion_exit_code(tmp_path):
    # an impossible tolerance must surface as an assertion failure
    out = str(tmp_path / "a")
    assert cli.run(["spectral", "--out", out, "--override", "tol=1e-12"]) == cli.EXIT_ASSERT


def test_oracle_check_passes(tmp_path):
    assert cli.run(["oracle-check", "--out", str(tmp_path / "o")]) == cli.EXIT_OK


def test_negative_control_only_warns(tmp_path, capsys):
    code = cli.run(["decompose", "--out", str(tmp_path / "d"), "--override", "C1=0.01"])
    assert code == cli.EXIT_OK
    assert "negative control" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["spectral"],
    ["gci", "--override", "cases=4", "--override", "independent_cases=2", "--override", "points=4096"],
    ["recursion", "--override", "alphas=log:10:1e4:7"],
])
def test_manifest_replay_is_bitwise(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.run(argv + ["--out", str(a), "--seed", "314"])
    cli.run([argv[0], "--config", str(a / "manifest.json"), "--out", str(b)])
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert mb["seed"] == 314 and ma["config"] == mb["config"]
    assert ma["files"] and ma["files"] == mb["files"]
    for name in ma["files"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
