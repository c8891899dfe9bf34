import json
import math
import subprocess
import sys

import pytest
import yaml

from magtransmon.cli import PLOT_FILES, main
from magtransmon.config import (ConfigError, config_from_dict, load_config, scenario_from_dict,
                                scenario_to_dict)
from magtransmon.synth import NoiseConfig, three_junction_scenario


def test_scenario_roundtrip_through_yaml():
    cfg = three_junction_scenario(seed=5, noise=NoiseConfig(freq_jitter=1e-3), misalignment=math.radians(-0.5))
    text = yaml.safe_dump(scenario_to_dict(cfg))
    assert scenario_from_dict(yaml.safe_load(text)) == cfg


def test_unknown_keys_are_reported_with_path():
    with pytest.raises(ConfigError, match=r"scenario\.noise: unknown key\(s\) freq_jiter"):
        config_from_dict({"scenario": {"noise": {"freq_jiter": 1e-3}}})
    with pytest.raises(ConfigError, match="tolerance_profile"):
        config_from_dict({"tolerance_profile": "sloppy"})


def test_load_config_and_profiles(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scenario:\n  seed: 3\n  b_par_grid_t: {start_t: 0.0, stop_t: 0.6, num: 4}\n"
                 "tolerance_profile: robust\nfit:\n  b_crit_shared_t: 1.03\n")
    cfg = load_config(p)
    assert cfg.scenario.seed == 3
    assert cfg.scenario.b_par_grid == pytest.approx((0.0, 0.2, 0.4, 0.6))
    assert cfg.fit.b_crit_shared == 1.03
    assert cfg.tolerances.arch_clip_sigma == 4.0
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out-dir", str(out), "--seed", "2"]) == 0
    return out


def test_simulate_writes_datasets_and_manifest(simulated):
    for name in ("spectroscopy.tsv", "coherence.tsv", "alignment.tsv", "truth.json", "run_manifest.json"):
        assert (simulated / name).exists()
    man = json.loads((simulated / "run_manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 2 and man["status"] == "ok"
    assert set(man["outputs"]) >= {"spectroscopy.tsv"}


def test_report_recovers_truth(simulated, tmp_path):
    assert main(["report", "--dataset", str(simulated), "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    truth = json.loads((simulated / "truth.json").read_text())
    assert set(rep["plot_data"]) == set(PLOT_FILES)
    assert all((tmp_path / name).exists() for name in PLOT_FILES)
    assert rep["relation"]["slope"] == pytest.approx(truth["relation"]["slope"], rel=1e-9)
    field = json.loads((tmp_path / "field_fit.json").read_text())
    for name, jj in truth["junctions"].items():
        got = field["junctions"][name]
        assert got["ej0_ghz"] == pytest.approx(jj["ej0_ghz"], rel=1e-6)
        assert got["b_phi0_t"] == pytest.approx(jj["b_phi0_t"], rel=1e-6)
    man = json.loads((tmp_path / "run_manifest.json").read_text())
    assert all(len(h) == 64 for h in man["inputs"].values())


def test_budget_command(tmp_path):
    assert main(["budget", "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "budget.tsv").read_text().splitlines()
    header = [l for l in lines if not l.startswith("#")][0].split("\t")
    assert "t1_us" in header and "sweetspot" in header


def test_input_errors_exit_2(tmp_path):
    assert main(["fit-spectrum", "--dataset", str(tmp_path / "missing"), "--out-dir", str(tmp_path)]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["fit-spectrum", "--dataset", str(empty), "--out-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: {nonsense: 1}\n")
    assert main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "magtransmon.cli", "align", "--dataset",
                        str(tmp_path / "none"), "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 2


def test_simulate_then_fit_field_matches_truth(simulated, tmp_path):
    assert main(["fit-field", "--dataset", str(simulated), "--out-dir", str(tmp_path)]) == 0
    field = json.loads((tmp_path / "field_fit.json").read_text())
    truth = json.loads((simulated / "truth.json").read_text())
    for name, jj in truth["junctions"].items():
        assert field["junctions"][name]["ej0_ghz"] == pytest.approx(jj["ej0_ghz"], rel=1e-4)
        assert field["junctions"][name]["b_phi0_t"] == pytest.approx(jj["b_phi0_t"], rel=1e-4)


def test_budget_purcell_ordering_at_reference_field(tmp_path):
    assert main(["budget", "--out-dir", str(tmp_path)]) == 0
    lines = [l.split("\t") for l in (tmp_path / "budget.tsv").read_text().splitlines() if not l.startswith("#")]
    rows = [dict(zip(lines[0], l)) for l in lines[1:]]
    at = {r["sweetspot"]: float(r["gamma_purcell_per_us"]) for r in rows
          if r["device"] == "squid" and math.isclose(float(r["b_par_t"]), 0.17)}
    assert at["top"] > at["bottom"]


def test_report_on_empty_dataset_fails_cleanly(tmp_path):
    from magtransmon.dataset import empty, write
    d = tmp_path / "data"
    d.mkdir()
    write(empty("spectroscopy"), d / "spectroscopy.tsv")
    assert main(["report", "--dataset", str(d), "--out-dir", str(tmp_path / "out")]) != 0
