import csv
import json
import statistics

import pytest

from mcosim.cli import CBR_COLUMNS, PRR_COLUMNS, main, mean_ci, parse_params, parse_seeds, run_preset
from mcosim.config import ConfigError, emit_config, parse_config, scenario_to_dict
from mcosim.presets import PRESETS, preset
from mcosim.scenario import Scenario


def test_empty_object_is_default():
    assert parse_config("{}") == Scenario()


def test_bad_density_rejected():
    with pytest.raises(ConfigError, match="density"):
        parse_config({"road": {"density_veh_per_km": -1}})


def test_unknown_key_and_channel_named():
    with pytest.raises(ConfigError, match="roads"):
        parse_config({"roads": {}})
    with pytest.raises(ConfigError, match=r"templates\[0\]\.apps\[0\]\.preferred"):
        parse_config({"templates": [{"apps": [{"app_id": "A", "msg_type": "CAM", "preferred": "SCH9"}]}]})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_round_trip(name):
    sc = preset(name, 3)
    assert parse_config(emit_config(sc)) == sc
    assert parse_config(scenario_to_dict(sc)) == sc


def test_seed_and_param_parsing():
    assert parse_seeds("1-3,7") == (1, 2, 3, 7)
    with pytest.raises(ValueError):
        parse_seeds("3-1")
    assert parse_params(["density=40", "aggressor=\"SCH1\""]) == {"density": 40, "aggressor": "SCH1"}


def test_mean_ci():
    assert mean_ci([1.0])["ci95"] is None
    r = mean_ci([1.0, 2.0, 3.0])
    assert r["mean"] == 2.0 and r["ci95"][0] < 2.0 < r["ci95"][1]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_emit_artifacts(tmp_path):
    summary = run_preset("single-transceiver-cas", [1, 2], out=tmp_path, density=20, duration_s=0.5)
    cbr = _rows(tmp_path / "cbr_seed1.csv")
    assert tuple(cbr[0]) == CBR_COLUMNS and len(cbr) - 1 == 5
    prr = _rows(tmp_path / "prr_seed2.csv")
    assert tuple(prr[0]) == PRR_COLUMNS and len(prr) > 1
    assert (tmp_path / "trace_seed1.jsonl").read_text().count("\n") > 0
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["schema_version"] == 1
    vals = [summary["per_seed"][s]["mean_cbr_SCH0"] for s in ("1", "2")]
    assert summary["stats"]["mean_cbr_SCH0"]["mean"] == pytest.approx(statistics.fmean(vals))


def test_zero_duration_headers_only(tmp_path):
    run_preset("single-transceiver-cas", [1], out=tmp_path, emit=("metrics_csv",), duration_s=0.0)
    assert _rows(tmp_path / "cbr_seed1.csv") == [list(CBR_COLUMNS)]
    assert _rows(tmp_path / "prr_seed1.csv") == [list(PRR_COLUMNS)]


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"road": {"density_veh_per_km": "x"}}')
    assert main(["validate", str(bad)]) == 2
    good = tmp_path / "ok.json"
    good.write_text(emit_config(preset("single-transceiver-cas", 1, density=10, duration_s=0.2)))
    assert main(["validate", "--quiet", str(good)]) == 0
    assert main(["run", "--scenario", str(good), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "summary.json").exists()
    assert main(["run", "--scenario", str(tmp_path / "missing.json")]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--scenario", str(good), "--param", "density=5"])
    with pytest.raises(SystemExit) as e:
        main(["run", "--preset", "nope"])
    assert e.value.code == 2
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in PRESETS)
