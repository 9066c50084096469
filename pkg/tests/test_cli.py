import json
from pathlib import Path

import pytest

from main import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, EXIT_RUN, main, resolve_out_dir, with_seed

PRESETS = Path(__file__).parent.parent / "presets"


def _config_with(tmp_path, name, **sections):
    raw = json.loads((PRESETS / f"{name}.json").read_text())
    for key, value in sections.items():
        raw.setdefault(key, {}).update(value)
    path = tmp_path / f"{name}-edited.json"
    path.write_text(json.dumps(raw, indent=2))
    return path


def test_synthesize_then_image(bus, tmp_path):
    config = str(PRESETS / "case3.json")
    out = str(tmp_path / "run")
    assert main(["synthesize", "--config", config, "--out", out]) == EXIT_OK
    assert main(["image", "--config", config, "--out", out]) == EXIT_OK
    assert (tmp_path / "run" / "metrics.txt").exists()


def test_verify_exit_codes(bus, tmp_path):
    good = str(PRESETS / "case1.json")
    assert main(["verify", "--config", good, "--out", str(tmp_path / "ok")]) == EXIT_OK
    bad = _config_with(tmp_path, "case1", verify={"mismatch_theta": True})
    assert main(["verify", "--config", str(bad), "--out", str(tmp_path / "bad")]) == EXIT_CHECK_FAILED


def test_config_error_exit_code(bus, tmp_path, capsys):
    path = _config_with(tmp_path, "case1", grid={"k_plus": 13.0})
    assert main(["verify", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "Config error" in capsys.readouterr().out
    assert main(["psf", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_missing_data_is_a_run_error(bus, tmp_path):
    config = str(PRESETS / "case1.json")
    missing = str(tmp_path / "nowhere.csv")
    assert main(["image", "--config", config, "--out", str(tmp_path), "--data", missing]) == EXIT_RUN


def test_command_is_required():
    with pytest.raises(SystemExit):
        main([])


def test_out_dir_resolution_and_seed(preset, tmp_path):
    cfg = preset("case1")
    assert resolve_out_dir(cfg, str(tmp_path)) == tmp_path
    assert resolve_out_dir(cfg, None).name == "case1"
    assert with_seed(cfg, None) is cfg
    assert with_seed(cfg, 3).noise.seed == 3
    assert cfg.noise.seed == 7
