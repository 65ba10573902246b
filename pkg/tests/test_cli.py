import csv
import filecmp
import json
from dataclasses import replace

import pytest

from spinpad.arraymodel import CalibrationTable, MemoryTechnology, metrics_at_capacity
from spinpad.cli import _parse_float_list, main
from spinpad.errors import ConfigError
from spinpad.errortrain import TinyNetSpec, make_moons_dataset, train_reference


def run_cli(*argv):
    return main(list(argv))


def read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        assert first == "# manifest: manifest.json\n"
        return list(csv.DictReader(fh))


def read_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    assert doc["manifest"] == "manifest.json"
    return doc


def read_manifest(out_dir):
    with open(out_dir / "manifest.json") as fh:
        return json.load(fh)


def assert_rerun_identical(out_dir, tmp_path):
    replay = tmp_path / "replay"
    assert run_cli("rerun", str(out_dir / "manifest.json"), "--out", str(replay)) == 0
    manifest = read_manifest(out_dir)
    for name in manifest["outputs"]:
        assert filecmp.cmp(out_dir / name, replay / name, shallow=False), name
    again = read_manifest(replay)
    again.pop("created")
    original = dict(manifest)
    original.pop("created")
    assert again == original


# ----------------------------------------------------------- grid parsing


def test_parse_comma_list():
    assert _parse_float_list("1,2.5,3", "--x") == [1.0, 2.5, 3.0]


def test_parse_colon_range_excludes_stop():
    assert _parse_float_list("50:80:6", "--x") == [50.0, 56.0, 62.0, 68.0, 74.0]


@pytest.mark.parametrize("text", ["", "a,b", "1:2", "5:1:1", "1:9:0", "1:9:-1"])
def test_parse_rejects_malformed(text):
    with pytest.raises(ConfigError):
        _parse_float_list(text, "--x")


# ------------------------------------------------------------ exit codes


def test_version_exits_zero(capsys):
    assert run_cli("--version") == 0
    assert "spinpad" in capsys.readouterr().out


def test_usage_error_exits_one():
    assert run_cli("no-such-command") == 1


def test_missing_config_file_exits_one(tmp_path):
    assert run_cli("array-sweep", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "o")) == 1


def test_malformed_config_json_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli("array-sweep", "--config", str(bad),
                   "--out", str(tmp_path / "o")) == 1


def test_unknown_config_key_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"capacitees_kb": [32.0]}))
    assert run_cli("array-sweep", "--config", str(bad),
                   "--out", str(tmp_path / "o")) == 1


def test_out_of_range_capacity_exits_one(tmp_path):
    assert run_cli("array-sweep", "--capacities", "1.0",
                   "--out", str(tmp_path / "o")) == 1


# ------------------------------------------------------------- wer-sweep


@pytest.fixture(scope="module")
def wer_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("wer")
    assert run_cli("wer-sweep", "--trials", "60", "--out", str(out)) == 0
    return out


def test_wer_sweep_csv_structure(wer_run):
    rows = read_csv(wer_run / "sweep.csv")
    assert len(rows) == 5
    assert list(rows[0]) == ["amplitude_uA", "duration_ns", "trials",
                             "p_switch", "ln_wer"]
    assert all(r["trials"] == "60" for r in rows)


def test_wer_sweep_ladder_increases_and_has_baseline(wer_run):
    doc = read_json(wer_run / "ladder.json")
    (fit,) = doc["durations"]
    assert fit["r_squared"] > 0.8
    targets = [e["target_wer"] for e in fit["ladder"]]
    amps = [e["amplitude_ua"] for e in fit["ladder"]]
    assert targets == sorted(targets, reverse=True)
    assert 8.62e-10 in targets
    assert amps == sorted(amps)  # rarer errors need more current


def test_wer_sweep_manifest_records_seed(wer_run):
    manifest = read_manifest(wer_run)
    assert manifest["command"] == "wer-sweep"
    assert manifest["seed"] == manifest["config"]["simulation"]["seed"] == 20240817
    assert manifest["outputs"] == ["sweep.csv", "ladder.json"]


def test_wer_sweep_rerun_byte_identical(wer_run, tmp_path):
    assert_rerun_identical(wer_run, tmp_path)


def test_wer_sweep_precedence_flag_beats_file_beats_default(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "simulation": {"trials": 50, "seed": 99},
        "durations_ns": [15.0],
    }))
    out = tmp_path / "o"
    assert run_cli("wer-sweep", "--config", str(cfg), "--trials", "60",
                   "--out", str(out)) == 0
    resolved = read_manifest(out)["config"]
    assert resolved["simulation"]["trials"] == 60  # flag wins
    assert resolved["simulation"]["seed"] == 99  # file beats default
    assert resolved["durations_ns"] == [15.0]
    assert resolved["amplitudes_ua"] == [50.0, 56.0, 62.0, 68.0, 74.0]
    assert resolved["simulation"]["time_step_ps"] == 1.0  # untouched default


def test_wer_sweep_zero_amplitude_never_switches(tmp_path):
    out = tmp_path / "o"
    assert run_cli("wer-sweep", "--amplitudes", "0.0,55.0,58.0,61.0,64.0",
                   "--trials", "60", "--out", str(out)) == 0
    rows = read_csv(out / "sweep.csv")
    assert rows[0]["amplitude_uA"] == "0.0"
    assert float(rows[0]["p_switch"]) == 0.0
    assert float(rows[0]["ln_wer"]) == 0.0


def test_wer_sweep_without_onset_exits_one(tmp_path):
    assert run_cli("wer-sweep", "--amplitudes", "1.0,2.0,3.0",
                   "--trials", "20", "--out", str(tmp_path / "o")) == 1


# ----------------------------------------------------------- array-sweep


def test_array_sweep_matches_library(tmp_path):
    out = tmp_path / "o"
    assert run_cli("array-sweep", "--technologies", "sram,mram_base",
                   "--capacities", "32.0,183.0", "--out", str(out)) == 0
    rows = read_csv(out / "metrics.csv")
    assert len(rows) == 4
    table = CalibrationTable.default()
    for row in rows:
        tech = MemoryTechnology.from_name(row["technology"])
        m = metrics_at_capacity(table, tech, float(row["capacity_kb"]))
        assert float(row["write_energy_pj"]) == m.write_energy_pj
        assert float(row["area_mm2"]) == m.area_mm2
        assert float(row["wer"]) == m.wer


def test_array_sweep_rerun_byte_identical(tmp_path):
    out = tmp_path / "o"
    assert run_cli("array-sweep", "--out", str(out)) == 0
    assert_rerun_identical(out, tmp_path)


def test_array_sweep_unknown_technology_exits_one(tmp_path):
    assert run_cli("array-sweep", "--technologies", "dram",
                   "--out", str(tmp_path / "o")) == 1


# -------------------------------------------------------- system-compare


def test_system_compare_identity_pair_improvement_one(tmp_path):
    out = tmp_path / "o"
    assert run_cli("system-compare", "--tech-b", "sram",
                   "--sweep", "32.0,512.0", "--out", str(out)) == 0
    rows = read_csv(out / "compare.csv")
    assert [r["status"] for r in rows] == ["ok", "ok"]
    assert all(float(r["improvement"]) == 1.0 for r in rows)
    assert all(r["capacity_a_kb"] == r["capacity_b_kb"] for r in rows)


def test_system_compare_partial_failure_keeps_error_row(tmp_path):
    out = tmp_path / "o"
    assert run_cli("system-compare", "--sweep", "1.0,32.0",
                   "--out", str(out)) == 0
    rows = read_csv(out / "compare.csv")
    assert [r["status"] for r in rows] == ["error", "ok"]
    assert "outside calibrated range" in rows[0]["detail"]
    assert rows[0]["improvement"] == ""
    doc = read_json(out / "breakdown.json")
    assert [p["status"] for p in doc["points"]] == ["error", "ok"]


def test_system_compare_all_points_failing_exits_two(tmp_path):
    out = tmp_path / "o"
    assert run_cli("system-compare", "--sweep", "1.0,2.0",
                   "--out", str(out)) == 2
    rows = read_csv(out / "compare.csv")  # partial results still on disk
    assert [r["status"] for r in rows] == ["error", "error"]


def test_system_compare_iso_area_resolves_capacities(tmp_path):
    out = tmp_path / "o"
    assert run_cli("system-compare", "--mode", "iso-area", "--sweep", "0.5",
                   "--out", str(out)) == 0
    (row,) = read_csv(out / "compare.csv")
    assert float(row["capacity_b_kb"]) > float(row["capacity_a_kb"])
    doc = read_json(out / "breakdown.json")
    assert doc["mode"] == "iso-area"
    assert doc["points"][0]["tech_b"]["total_nj"] > 0


def test_system_compare_breakdown_matches_csv(tmp_path):
    out = tmp_path / "o"
    assert run_cli("system-compare", "--sweep", "32.0", "--out", str(out)) == 0
    (row,) = read_csv(out / "compare.csv")
    (point,) = read_json(out / "breakdown.json")["points"]
    assert float(row["improvement"]) == point["improvement"]
    assert float(row["total_a_nj"]) == point["tech_a"]["total_nj"]
    assert float(row["total_b_nj"]) == point["tech_b"]["total_nj"]


def test_system_compare_workload_file_embedded_in_manifest(tmp_path):
    wl = tmp_path / "net.txt"
    wl.write_text("conv b=8 i=3 m=8 n=8 o=4 k=3 stride=1 pad=1\n"
                  "fc b=8 in=256 out=10\n")
    out = tmp_path / "o"
    assert run_cli("system-compare", "--workload", str(wl),
                   "--sweep", "32.0", "--out", str(out)) == 0
    layers = read_manifest(out)["config"]["workload"]
    assert [l["kind"] for l in layers] == ["conv", "fc"]
    assert layers[0]["out_channels"] == 4
    wl.unlink()  # manifest is self-contained: replay needs no source file
    assert_rerun_identical(out, tmp_path)


def test_system_compare_rerun_byte_identical(tmp_path):
    out = tmp_path / "o"
    assert run_cli("system-compare", "--sweep", "32.0,183.0",
                   "--out", str(out)) == 0
    assert_rerun_identical(out, tmp_path)


# ---------------------------------------------------------- hetero-write


def test_hetero_write_sweeps_all_mantissa_splits(tmp_path):
    out = tmp_path / "o"
    assert run_cli("hetero-write", "--out", str(out)) == 0
    rows = read_csv(out / "hetero.csv")
    assert [int(r["mantissa_bits"]) for r in rows] == list(range(24))
    factors = [float(r["word_energy_factor"]) for r in rows]
    assert factors[0] == 1.0  # no bits remapped, all base mode
    assert factors == sorted(factors, reverse=True)
    assert abs(factors[23] - 0.56875) < 1e-12


def test_hetero_write_json_reports_system_improvement(tmp_path):
    out = tmp_path / "o"
    assert run_cli("hetero-write", "--out", str(out)) == 0
    doc = read_json(out / "hetero.json")
    assert doc["mantissa_bits"] == 23
    assert doc["improvement"] == pytest.approx(1.0 / 0.56875)
    # uniform remapping of every scratchpad scales write energy by the factor
    assert doc["system_write_improvement"] == pytest.approx(1.0 / 0.56875)
    assert doc["system_write_improvement"] >= 1.7


def test_hetero_write_flag_overrides_bits(tmp_path):
    out = tmp_path / "o"
    assert run_cli("hetero-write", "--mantissa-bits", "16", "--out", str(out)) == 0
    doc = read_json(out / "hetero.json")
    assert doc["mantissa_bits"] == 16
    expected = (1.0 + 15.0 * 1.0 + 16.0 * 0.40) / 32.0
    assert doc["word_energy_factor"] == pytest.approx(expected)


def test_hetero_write_rerun_byte_identical(tmp_path):
    out = tmp_path / "o"
    assert run_cli("hetero-write", "--out", str(out)) == 0
    assert_rerun_identical(out, tmp_path)


# ----------------------------------------------------------- error-train


def _experiment(**overrides):
    base = {
        "layer_sizes": [2, 16, 2],
        "epochs": 4,
        "seeds": [1],
        "n_train": 120,
        "n_test": 60,
        "binding": {},
    }
    base.update(overrides)
    return base


def test_error_train_zero_binding_matches_reference(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(_experiment()))
    out = tmp_path / "o"
    assert run_cli("error-train", "--config", str(cfg), "--out", str(out)) == 0
    rows = read_csv(out / "curves.csv")
    spec = TinyNetSpec(layer_sizes=(2, 16, 2), epochs=4, seed=1)
    ds = make_moons_dataset(120, 60, noise=0.3, seed=7)
    ref = train_reference(spec, ds)
    assert [float(r["train_loss"]) for r in rows] == ref.train_loss
    assert [float(r["test_accuracy"]) for r in rows] == ref.test_accuracy
    assert all(r["nan_sanitized_count"] == "0" for r in rows)


def test_error_train_seed_flag_restricts_seeds(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(_experiment(seeds=[1, 2, 3])))
    out = tmp_path / "o"
    assert run_cli("error-train", "--config", str(cfg), "--seed", "2",
                   "--out", str(out)) == 0
    manifest = read_manifest(out)
    assert manifest["config"]["experiment"]["seeds"] == [2]
    assert manifest["seed"] == [2]
    doc = read_json(out / "summary.json")
    assert list(doc["seeds"]) == ["2"]


def test_error_train_divergence_still_exits_zero(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(_experiment(
        binding={"weights": {"exponent_wer": 0.01}})))
    out = tmp_path / "o"
    assert run_cli("error-train", "--config", str(cfg), "--out", str(out)) == 0
    doc = read_json(out / "summary.json")
    (entry,) = doc["seeds"].values()
    assert entry["diverged"] is True
    assert entry["epochs_completed"] < 4


def test_error_train_invalid_binding_exits_one(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(_experiment(
        binding={"weights": {"mantissa_wer": 2.0}})))
    assert run_cli("error-train", "--config", str(cfg),
                   "--out", str(tmp_path / "o")) == 1


def test_error_train_rerun_byte_identical(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(_experiment(
        binding={"activations": {"mantissa_wer": 1e-3}})))
    out = tmp_path / "o"
    assert run_cli("error-train", "--config", str(cfg), "--out", str(out)) == 0
    assert_rerun_identical(out, tmp_path)


def test_error_train_default_config_is_bundled_experiment(tmp_path):
    out = tmp_path / "o"
    assert run_cli("error-train", "--seed", "1", "--out", str(out)) == 0
    exp = read_manifest(out)["config"]["experiment"]
    assert exp["layer_sizes"] == [2, 32, 32, 2]
    assert exp["noise"] == 0.3
    assert exp["binding"]["weights"]["mantissa_wer"] == 1e-3


# ----------------------------------------------------------------- rerun


def test_rerun_missing_manifest_exits_one(tmp_path):
    assert run_cli("rerun", str(tmp_path / "nope.json")) == 1


def test_rerun_rejects_manifest_without_command(tmp_path):
    bad = tmp_path / "manifest.json"
    bad.write_text(json.dumps({"config": {}, "outputs": []}))
    assert run_cli("rerun", str(bad)) == 1


def test_rerun_rejects_unknown_command(tmp_path):
    bad = tmp_path / "manifest.json"
    bad.write_text(json.dumps({"command": "frobnicate", "config": {},
                               "outputs": []}))
    assert run_cli("rerun", str(bad)) == 1


def test_rerun_defaults_to_manifest_directory(tmp_path):
    out = tmp_path / "o"
    assert run_cli("array-sweep", "--out", str(out)) == 0
    before = (out / "metrics.csv").read_bytes()
    assert run_cli("rerun", str(out / "manifest.json")) == 0
    assert (out / "metrics.csv").read_bytes() == before


def test_repeated_runs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("array-sweep", "--out", str(out)) == 0
    assert filecmp.cmp(a / "metrics.csv", b / "metrics.csv", shallow=False)
