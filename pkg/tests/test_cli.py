import csv
import json

import pytest

from anisomhd.cli import KEYS, ConfigError, RunConfig, main, parse_config, read_config_text, run
from anisomhd.propagator import CATALOG


def test_empty_input_gives_defaults():
    cfg = parse_config()
    assert cfg == RunConfig()
    assert (cfg.mu, cfg.eta, cfg.grid, cfg.seed) == (1.0, 1.0, 32, 42)
    assert cfg.catalog == tuple(CATALOG)


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("physics.mu = 2\n")
    assert parse_config(path).mu == 2.0
    assert parse_config(path, {"mu": 3}).mu == 3.0
    # None means "flag not given"
    assert parse_config(path, {"mu": None}).mu == 2.0


def test_sections_comments_and_aliases():
    text = "# comment\n[physics]\nmu = 0.5  # trailing\neta=2\n[solver]\ngrid = 16\nrun.seed = 7\n"
    cfg = parse_config(text=text)
    assert (cfg.mu, cfg.eta, cfg.grid, cfg.seed) == (0.5, 2.0, 16, 7)
    assert parse_config(overrides={"fit_t_min": 20}).fit_t_min == 20.0
    assert parse_config(overrides={"t_min": 20}).fit_t_min == 20.0


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"mu": -1}, "physics.mu"),
        ({"eta": 0}, "physics.eta"),
        ({"grid": 33}, "solver.grid"),
        ({"grid": "abc"}, "solver.grid"),
        ({"grid": 16.5}, "solver.grid"),
        ({"dt": "nan"}, "solver.dt"),
        ({"catalog": "l2_total,bogus"}, "decay.catalog"),
        ({"quadrature": "nope"}, "quadrature.preset"),
        ({"nonsense": 1}, "nonsense"),
        ({"seed": -3}, "run.seed"),
        ({"fit_t_min": 5000}, "fit.t_min"),
    ],
)
def test_errors_name_the_key(overrides, key):
    with pytest.raises(ConfigError) as err:
        parse_config(overrides=overrides)
    assert err.value.key == key
    assert key in str(err.value)


def test_mu_error_mentions_mu():
    with pytest.raises(ConfigError, match="mu"):
        parse_config(text="mu = -1")


def test_malformed_line():
    with pytest.raises(ConfigError, match="line 2"):
        read_config_text("mu = 1\njunk\n")


def test_canonical_round_trip():
    cfg = parse_config(overrides={"mu": 0.3, "catalog": "u1_l2,l2_total", "out": "x/y", "seed": 2**63})
    text = cfg.canonical()
    again = parse_config(text=text)
    assert again == cfg and again.canonical() == text
    assert sorted(line.split(" = ")[0] for line in text.splitlines()) == sorted(KEYS)


def test_main_config_error_exit_code(capsys):
    assert main(["kernel-audit", "--mu", "-1"]) == 2
    assert "physics.mu" in capsys.readouterr().err


def test_main_missing_config_file(tmp_path, capsys):
    assert main(["kernel-audit", "--config", str(tmp_path / "absent.txt")]) == 2


def _write_cfg(tmp_path, text):
    p = tmp_path / "cfg.txt"
    p.write_text(text)
    return str(p)


def test_kernel_audit_small(tmp_path):
    out = tmp_path / "ka"
    cfg = _write_cfg(tmp_path, "audit.samples_per_tag = 2000\n")
    assert main(["kernel-audit", "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["hard_failures"] == []
    assert {"config", "results", "wall_seconds", "versions"} <= set(manifest)
    assert all(set(r) == {"name", "status", "metric", "threshold"} for r in manifest["results"])
    rows = list(csv.DictReader(open(out / "kernel_audit.csv")))
    assert rows and all(int(r["violations"]) == 0 for r in rows if r["hard"] == "true")
    assert (out / "config.txt").read_text() == parse_config(
        cfg, {"subcommand": "kernel_audit", "out": str(out)}
    ).canonical()


def test_linear_decay_two_entries(tmp_path):
    out = tmp_path / "ld"
    cfg = _write_cfg(tmp_path, "quadrature.preset = coarse\n")
    assert main(["linear-decay", "--config", cfg, "--catalog", "l2_total,u1_l2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "decay_summary.csv")))
    assert [r["label"] for r in rows] == ["l2_total", "u1_l2"]
    assert [float(r["target"]) for r in rows] == [-0.5, -0.75]


def test_nonlinear_run_small(tmp_path):
    out = tmp_path / "nl"
    assert main(["nonlinear-run", "--grid", "16", "--t-final", "0.02", "--dt", "0.001", "--out", str(out)]) == 0
    assert (out / "final.chk").stat().st_size > 0
    lines = (out / "energy_ledger.csv").read_text().splitlines()
    assert lines[0].startswith("t,l2_sq") and len(lines) == 22
    manifest = json.loads((out / "manifest.json").read_text())
    bal = next(r for r in manifest["results"] if r["name"] == "l2_balance_residual")
    assert bal["status"] == "pass"


def test_nonlinear_run_rejects_misaligned_t_final(tmp_path):
    cfg = parse_config(overrides={"subcommand": "nonlinear_run", "grid": 8, "t_final": 0.0105, "dt": 0.001,
                                  "out": str(tmp_path / "bad")})
    with pytest.raises(ValueError, match="multiple of dt"):
        run(cfg)


def _csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".chk")}


@pytest.mark.parametrize(
    "argv, cfg_text",
    [
        (["kernel-audit"], "audit.samples_per_tag = 2000\n"),
        (["nonlinear-run", "--grid", "16", "--t-final", "0.01"], ""),
        (["inequality-suite"], "suite.agmon_samples = 50\n"),
    ],
)
def test_byte_identical_across_runs_and_threads(tmp_path, monkeypatch, argv, cfg_text):
    cfg = _write_cfg(tmp_path, cfg_text)
    outputs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("ANISOMHD_THREADS", threads)
        out = tmp_path / f"run{threads}"
        assert main(argv + ["--config", cfg, "--out", str(out)]) == 0
        outputs.append(_csv_bytes(out))
    assert outputs[0] and outputs[0] == outputs[1]
