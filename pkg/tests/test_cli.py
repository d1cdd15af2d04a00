import json

import numpy as np
import pytest

from uwcolor.chart import _chart_to_jsonable
from uwcolor.cli import main
from uwcolor.imgio import read_pfm, write_pfm
from uwcolor.simulate import demo_chart, emit_six_chart_fixture


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("clifix")
    emit_six_chart_fixture(root, chart_px=60)
    return root


def test_simulate_subcommand(tmp_path, capsys):
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps({"kind": "six_chart", "charts": 3,
                                 "depths": [0.5, 1, 2], "chart_px": 60}))
    code = main(["simulate", "--scene", str(scene), "--out", str(tmp_path / "fix")])
    assert code == 0
    manifest = json.loads(capsys.readouterr().out)
    assert "scene.pfm" in manifest["files"]


def test_simulate_rejects_zero_charts(tmp_path, capsys):
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps({"kind": "six_chart", "charts": 0}))
    code = main(["simulate", "--scene", str(scene), "--out", str(tmp_path / "fix")])
    assert code == 2


def test_ingest_subcommand(tmp_path, capsys):
    src = tmp_path / "x.ppm"
    with open(src, "wb") as f:
        f.write(b"P6\n2 2\n65535\n" + b"\x40\x00" * 12)
    out = tmp_path / "x.pfm"
    code = main(["ingest", str(src), "--out", str(out)])
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert record["format"] == "ppm16"
    assert read_pfm(out).shape == (2, 2, 3)


def test_ingest_eight_bit_exits_2(tmp_path, capsys):
    src = tmp_path / "x.ppm"
    src.write_bytes(b"P6\n1 1\n255\n\x80\x80\x80")
    assert main(["ingest", str(src), "--out", str(tmp_path / "o.pfm")]) == 2


def test_ingest_missing_file_exits_5(tmp_path):
    assert main(["ingest", str(tmp_path / "none.pfm"),
                 "--out", str(tmp_path / "o.pfm")]) == 5


def test_chart_put_get_list(tmp_path, capsys):
    doc = _chart_to_jsonable(demo_chart("cli-chart"))
    chart_json = tmp_path / "chart.json"
    chart_json.write_text(json.dumps(doc))
    registry = tmp_path / "reg"
    assert main(["chart", "put", str(chart_json), "--registry", str(registry)]) == 0
    # duplicate put without overwrite fails validation
    assert main(["chart", "put", str(chart_json), "--registry", str(registry)]) == 2
    assert main(["chart", "put", str(chart_json), "--registry", str(registry),
                 "--overwrite"]) == 0
    capsys.readouterr()
    assert main(["chart", "list", "--registry", str(registry)]) == 0
    assert "cli-chart" in capsys.readouterr().out
    assert main(["chart", "get", "cli-chart", "--registry", str(registry)]) == 0
    out = capsys.readouterr()
    assert "24 patches" in out.out
    assert main(["chart", "get", "ghost", "--registry", str(registry)]) == 2


def test_chart_get_age_warning(tmp_path, capsys):
    doc = _chart_to_jsonable(demo_chart("old_chart"))
    chart_json = tmp_path / "chart.json"
    chart_json.write_text(json.dumps(doc))
    registry = tmp_path / "reg"
    main(["chart", "put", str(chart_json), "--registry", str(registry)])
    capsys.readouterr()
    assert main(["chart", "get", "old_chart", "--registry", str(registry),
                 "--age-warn-days", "1"]) == 0
    assert "re-measure" in capsys.readouterr().err


def test_check_linearity_pass_and_svg(fixture_dir, tmp_path, capsys):
    svg = tmp_path / "plot.svg"
    code = main([
        "check-linearity", str(fixture_dir / "reference.pfm"),
        "--layout", str(fixture_dir / "reference_layout.json"),
        "--registry", str(fixture_dir / "registry"),
        "--chart-id", "uw-24-001",
        "--illuminant", str(fixture_dir / "illuminant.csv"),
        "--camera", str(fixture_dir / "camera.json"),
        "--json-out", str(tmp_path / "rep.json"),
        "--svg-out", str(svg),
    ])
    assert code == 0
    assert "PASS" in capsys.readouterr().out
    assert svg.read_text().startswith("<svg")
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["verdict"] == "pass"


def test_check_linearity_fail_exits_3(fixture_dir, tmp_path, capsys):
    from uwcolor.image import LinearImage
    from uwcolor.isp import apply_profile, builtin_profile

    ref = read_pfm(fixture_dir / "reference.pfm")
    cooked = apply_profile(builtin_profile("vivid"), LinearImage(data=ref))
    bad = tmp_path / "cooked.pfm"
    write_pfm(bad, cooked.data)
    code = main([
        "check-linearity", str(bad),
        "--layout", str(fixture_dir / "reference_layout.json"),
        "--registry", str(fixture_dir / "registry"),
        "--chart-id", "uw-24-001",
        "--illuminant", str(fixture_dir / "illuminant.csv"),
    ])
    assert code == 3


def test_estimate_and_remove_water(fixture_dir, tmp_path, capsys):
    water_out = tmp_path / "water.json"
    code = main(["estimate-water", str(fixture_dir / "scene.pfm"),
                 "--depth", str(fixture_dir / "depth.pfm"),
                 "--out", str(water_out)])
    assert code == 0
    est = json.loads(water_out.read_text())
    truth = json.loads((fixture_dir / "water_true.json").read_text())
    assert np.allclose(est["B_inf"], truth["B_inf"], rtol=0.05)

    corrected = tmp_path / "corrected.pfm"
    code = main(["remove-water", str(fixture_dir / "scene.pfm"),
                 "--depth", str(fixture_dir / "depth.pfm"),
                 "--water", str(fixture_dir / "water_true.json"),
                 "--out", str(corrected),
                 "--diagnostics-out", str(tmp_path / "diag.json")])
    assert code == 0
    assert corrected.exists()
    diag = json.loads((tmp_path / "diag.json").read_text())
    assert 0 < diag["fraction_recoverable"] < 1


def test_estimate_water_constant_depth_exits_4(fixture_dir, tmp_path):
    z = np.full((60, 60), 2.0)
    depth = tmp_path / "flat.pfm"
    write_pfm(depth, z)
    img = tmp_path / "img.pfm"
    write_pfm(img, np.random.default_rng(0).uniform(0, 1, (60, 60, 3)))
    code = main(["estimate-water", str(img), "--depth", str(depth)])
    assert code == 4


def test_calibrate_subcommand(fixture_dir, tmp_path, capsys):
    # water-corrected scene, then fit the matrix over the closest chart
    corrected = tmp_path / "corrected.pfm"
    main(["remove-water", str(fixture_dir / "scene.pfm"),
          "--depth", str(fixture_dir / "depth.pfm"),
          "--water", str(fixture_dir / "water_true.json"),
          "--out", str(corrected)])
    capsys.readouterr()
    cal_out = tmp_path / "cal.json"
    code = main(["calibrate", str(corrected),
                 "--layout", str(fixture_dir / "layout.json"),
                 "--registry", str(fixture_dir / "registry"),
                 "--chart-id", "uw-24-001",
                 "--illuminant", str(fixture_dir / "illuminant.csv"),
                 "--prefix", "c0:",
                 "--out", str(cal_out)])
    assert code == 0
    assert "dE76" in capsys.readouterr().out
    cal = json.loads(cal_out.read_text())
    assert np.array(cal["matrix"]).shape == (3, 3)
    assert cal["residual"] < 2.0


def test_run_and_report(fixture_dir, tmp_path, capsys):
    code = main(["run", str(fixture_dir / "config.json"),
                 "--output-dir", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "provenance" in out
    log = tmp_path / "out" / "scene_provenance.json"
    assert log.exists()
    assert main(["report", str(log)]) == 0
    assert "scene.pfm" in capsys.readouterr().out


def test_run_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"images": []}))
    assert main(["run", str(cfg)]) == 2


def test_run_set_overrides_nested_keys(fixture_dir, tmp_path, capsys):
    out = tmp_path / "setout"
    code = main(["run", str(fixture_dir / "config.json"),
                 "--output-dir", str(out),
                 "--set", "thresholds.t_min=0.03",
                 "--set", "camera_firmware=fw-1.2.3"])
    assert code == 0
    log = json.loads((out / "scene_provenance.json").read_text())
    assert log["config_effective"]["thresholds"]["t_min"] == 0.03
    assert log["camera_firmware"] == "fw-1.2.3"


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "uwcolor" in capsys.readouterr().out
