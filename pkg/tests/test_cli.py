import csv
import json
import time

import numpy as np
import pytest
import yaml

from qmemhom.cli import default_config_path, main
from qmemhom.config import SCENARIOS, load_config, parse_config
from qmemhom.errors import ConfigError
from qmemhom.eventsim import SourceConfig, simulate_sources
from qmemhom.tagio import write_tags


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def default(scenario):
    return yaml.safe_load(default_config_path(scenario).read_text())


@pytest.mark.parametrize("scenario", [s for s in SCENARIOS])
def test_default_configs_validate(scenario, capsys):
    assert main(["validate", str(default_config_path(scenario))]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_missing_memory_section_is_named(tmp_path, capsys):
    data = default("sync-rates")
    del data["memory"]
    rc = main(["validate", str(write_yaml(tmp_path / "c.yaml", data))])
    assert rc != 0
    assert "memory" in capsys.readouterr().err


def test_lossy_beamsplitter_is_named(tmp_path, capsys):
    data = default("hom-dip")
    data["beamsplitter"] = {"transmission": 0.5, "reflection": 0.51}
    rc = main(["validate", str(write_yaml(tmp_path / "c.yaml", data))])
    assert rc != 0
    assert "beamsplitter" in capsys.readouterr().err


def test_unknown_key_is_named():
    data = default("hom-dip")
    data["source"]["brightnes"] = 3
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert "source.brightnes" in str(exc.value)
    assert exc.value.section == "source"


def test_scenario_and_seed_overrides(tmp_path):
    cfg = load_config(default_config_path("step-phase"), scenario="hom-dip", seed=99)
    assert cfg.scenario == "hom-dip"
    assert cfg.seeds.base == 99
    with pytest.raises(ConfigError, match="phase"):
        load_config(default_config_path("hom-dip"), scenario="step-phase")
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "hom-dip", "--seed", "-1"])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_hom_dip_run(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--scenario", "hom-dip", "--out", str(out), "--quiet"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["visibility_conventional"] - 0.82) < 0.02
    assert abs(summary["visibility_synchronized"] - 0.76) < 0.03
    rows = read_csv(out / "hom_dip_conventional.csv")
    assert rows[0] == ["delay_ns", "fourfold_rate"]
    assert float(rows[1][0]) == -1500.0
    assert not list(out.glob(".*tmp"))


def small_config(tmp_path, scenario):
    data = default(scenario)
    if scenario == "sync-rates":
        data["simulation"].update(n_windows=20_000, g2_windows=10_000)
    if scenario == "linear-phase":
        data["phase"]["simulated_trials"] = 20_000
    return write_yaml(tmp_path / f"{scenario}.yaml", data)


@pytest.mark.parametrize("scenario", ["hom-dip", "step-phase", "linear-phase", "sync-rates"])
def test_runs_are_byte_reproducible(tmp_path, scenario):
    cfg = small_config(tmp_path, scenario)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "5", "--quiet"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert "summary.json" in outs[0]


def test_linear_phase_summary(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(small_config(tmp_path, "linear-phase")), "--out", str(out), "--quiet"]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert abs(s["beat_period_ns"] - 270) <= 18
    assert abs(s["frequency_offset_mhz"] - 3.7) < 0.1
    assert read_csv(out / "beat_counts.csv")[0] == ["delay_ns", "counts", "error"]


def test_analyze_empty_tag_file(tmp_path):
    tags = tmp_path / "empty.qtt"
    tags.write_bytes(b"")
    data = default("analyze-tags")
    data["input"]["tag_file"] = str(tags)
    out = tmp_path / "o"
    assert main(["run", "--config", str(write_yaml(tmp_path / "a.yaml", data)), "--out", str(out), "--quiet"]) == 0
    rows = read_csv(out / "coincidences.csv")
    assert rows[0] == ["delay_ns", "counts"]
    assert all(int(r[1]) == 0 for r in rows[1:])
    s = json.loads((out / "summary.json").read_text())
    assert s["fourfold_count"] == 0 and s["records"] == 0


def test_analyze_simulated_file(tmp_path):
    src = SourceConfig(two_pair_ratio=0.2)
    stream = simulate_sources(src, src, seed=1, n_windows=5_000, hbt=True)
    tags = tmp_path / "t.qtt"
    write_tags(stream, tags)
    data = default("analyze-tags")
    data["input"]["tag_file"] = str(tags)
    out = tmp_path / "o"
    assert main(["run", "--config", str(write_yaml(tmp_path / "a.yaml", data)), "--out", str(out), "--quiet"]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["records"] == len(stream)
    assert s["counts_by_channel"] == stream.counts_by_channel()
    assert 0 < s["g2_as1"] < 1


def test_module_error_gives_nonzero_exit(tmp_path, capsys):
    tags = tmp_path / "bad.qtt"
    tags.write_bytes(b"channel,timestamp_ns\n0,3\n")
    data = default("analyze-tags")
    data["input"]["tag_file"] = str(tags)
    rc = main(["run", "--config", str(write_yaml(tmp_path / "a.yaml", data)), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "line 2" in capsys.readouterr().err


@pytest.mark.slow
@pytest.mark.parametrize("scenario", ["hom-dip", "step-phase", "linear-phase", "sync-rates"])
def test_default_configs_finish_within_a_minute(tmp_path, scenario):
    t0 = time.perf_counter()
    assert main(["run", "--scenario", scenario, "--out", str(tmp_path), "--quiet"]) == 0
    assert time.perf_counter() - t0 < 60
