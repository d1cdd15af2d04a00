import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from uwcolor.errors import FileFormatError, LinearityFailure, ValidationError
from uwcolor.image import LinearImage
from uwcolor.imgio import read_pfm, write_pfm
from uwcolor.isp import apply_profile, builtin_profile
from uwcolor.pipeline import (
    EXIT_ESTIMATION,
    EXIT_IO,
    EXIT_LINEARITY,
    EXIT_OK,
    EXIT_VALIDATION,
    batch_exit_code,
    cmd_ingest,
    cmd_report,
    cmd_run,
    exit_code_for,
    load_config,
    validate_provenance,
)
from uwcolor.simulate import emit_six_chart_fixture, emit_two_camera_fixture


@pytest.fixture(scope="module")
def six_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("sixfix")
    emit_six_chart_fixture(root, chart_px=60)
    return root


@pytest.fixture(scope="module")
def two_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("twofix")
    emit_two_camera_fixture(root)
    return root


class TestIngest:
    def test_ppm_value_scaling(self, tmp_path):
        path = tmp_path / "x.ppm"
        with open(path, "wb") as f:
            f.write(b"P6\n1 1\n65535\n" + (32768).to_bytes(2, "big") * 3)
        img, record = cmd_ingest(path)
        assert img.data[0, 0, 0] == pytest.approx(0.50000763, abs=5e-9)
        assert img.state == "linear" and img.space == "camera"
        assert len(record["sha256"]) == 64

    def test_eight_bit_rejected(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P6\n1 1\n255\n\x80\x80\x80")
        with pytest.raises(ValidationError, match="not linearly related"):
            cmd_ingest(path)

    def test_pfm_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.uniform(0, 1, (4, 5, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "x.pfm"
        write_pfm(path, data)
        img, _ = cmd_ingest(path)
        assert np.array_equal(img.data, data)

    def test_unknown_extension(self, tmp_path):
        path = tmp_path / "x.jpg"
        path.write_bytes(b"\xff\xd8nope")
        with pytest.raises(FileFormatError):
            cmd_ingest(path)


class TestExitCodes:
    def test_mapping(self):
        assert exit_code_for(ValidationError("x")) == EXIT_VALIDATION
        assert exit_code_for(LinearityFailure("x")) == EXIT_LINEARITY
        from uwcolor.errors import EstimationError

        assert exit_code_for(EstimationError("x")) == EXIT_ESTIMATION
        assert exit_code_for(FileFormatError("x")) == EXIT_IO
        assert exit_code_for(OSError("x")) == EXIT_IO

    def test_codes_are_distinct(self):
        codes = {EXIT_OK, EXIT_VALIDATION, EXIT_LINEARITY, EXIT_ESTIMATION, EXIT_IO}
        assert codes == {0, 2, 3, 4, 5}


class TestConfig:
    def test_missing_referenced_path_is_validation_error(self, six_fixture, tmp_path):
        doc = json.loads((six_fixture / "config.json").read_text())
        doc["images"] = ["missing.pfm"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="does not exist"):
            load_config(bad)

    def test_unknown_key_rejected(self, six_fixture, tmp_path):
        doc = json.loads((six_fixture / "config.json").read_text())
        doc["mystery_knob"] = 1
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="mystery_knob"):
            load_config(bad)

    def test_defaults_are_expanded(self, six_fixture):
        cfg = load_config(six_fixture / "config.json")
        assert cfg.doc["thresholds"]["t_min"] == 0.02
        assert cfg.doc["thresholds"]["linearity"]["min_r_squared"] == 0.995
        assert cfg.doc["display_png"] is False

    def test_toml_config(self, six_fixture):
        toml_path = six_fixture / "config.toml"
        toml_path.write_text(
            'images = ["scene.pfm"]\n'
            'depths = ["depth.pfm"]\n'
            'output_dir = "out_toml"\n'
            'registry = "registry"\n'
            'chart_id = "uw-24-001"\n'
            'layout = "layout.json"\n'
            'chart_prefix = "c0:"\n'
            'camera = "camera.json"\n'
            'illuminant = "illuminant.csv"\n'
            'correction = "water_removal"\n'
            '[water]\n'
            'mode = "given"\n'
            'properties = "water_true.json"\n'
            '[linearity]\n'
            'image = "reference.pfm"\n'
            'layout = "reference_layout.json"\n'
            'chart_prefix = ""\n'
        )
        cfg = load_config(toml_path)
        results = cmd_run(cfg)
        assert results[0].exit_code == EXIT_OK

    def test_overrides(self, six_fixture):
        cfg = load_config(six_fixture / "config.json",
                          overrides={"output_dir": "elsewhere", "seed": 42})
        assert cfg.doc["output_dir"] == "elsewhere"
        assert cfg.doc["seed"] == 42


class TestRun:
    def test_six_chart_run_succeeds(self, six_fixture):
        cfg = load_config(six_fixture / "config.json")
        results = cmd_run(cfg)
        assert [r.exit_code for r in results] == [EXIT_OK]
        out = six_fixture / "out"
        assert (out / "scene_xyz.pfm").exists()
        assert (out / "scene_srgb_linear.pfm").exists()
        assert (out / "scene_provenance.json").exists()
        assert (out / "scene_diagnostics.json").exists()

    def test_end_to_end_color_accuracy_vs_truth(self, six_fixture):
        from uwcolor.colorimetry import default_d65, delta_e76, white_point, xyz_to_lab

        cmd_run(load_config(six_fixture / "config.json"))
        diag = json.loads((six_fixture / "out/scene_diagnostics.json").read_text())
        truth = json.loads((six_fixture / "truth.json").read_text())
        wp = white_point(default_d65())
        des = [
            float(delta_e76(
                xyz_to_lab(np.array(rec), wp),
                xyz_to_lab(np.array(truth["patches"][name]["xyz"]), wp),
            ))
            for name, rec in diag["patch_xyz_recovered"].items()
        ]
        assert len(des) == 24
        assert np.mean(des) <= 2.0

    def test_estimated_water_is_accurate(self, six_fixture):
        cmd_run(load_config(six_fixture / "config.json"))
        diag = json.loads((six_fixture / "out/scene_diagnostics.json").read_text())
        truth = json.loads((six_fixture / "water_true.json").read_text())
        est = diag["water_estimate"]
        for key in ("beta_D", "beta_B", "B_inf"):
            rel = np.abs(np.array(est[key]) / np.array(truth[key]) - 1)
            assert np.all(rel < 0.05), key

    def test_provenance_is_schema_valid_and_complete(self, six_fixture):
        cmd_run(load_config(six_fixture / "config.json"))
        doc = json.loads((six_fixture / "out/scene_provenance.json").read_text())
        assert validate_provenance(doc) == []
        assert doc["status"] == "ok"
        assert doc["tool"] == "uwcolor"
        # full effective config with defaults expanded
        assert doc["config_effective"]["thresholds"]["t_min"] == 0.02
        # input digests recorded
        assert set(doc["input_digests"]) >= {"image", "depth"}
        assert doc["chart_calibration_date"] == "2026-01-15"
        stage_names = [s["stage"] for s in doc["stages"]]
        assert stage_names == [
            "ingest", "patch_extraction", "linearity_check",
            "estimate_backscatter", "estimate_attenuation", "remove_water",
            "calibrate", "camera_to_xyz", "xyz_to_standard_rgb",
        ]

    def test_deterministic_outputs_and_logs(self, six_fixture):
        cfg = load_config(six_fixture / "config.json", overrides={"output_dir": "det1"})
        cmd_run(cfg)
        first = {
            name: (six_fixture / "det1" / name).read_bytes()
            for name in ("scene_xyz.pfm", "scene_srgb_linear.pfm",
                         "scene_diagnostics.json", "scene_provenance.json")
        }
        cmd_run(load_config(six_fixture / "config.json", overrides={"output_dir": "det1"}))
        for name in ("scene_xyz.pfm", "scene_srgb_linear.pfm", "scene_diagnostics.json"):
            assert (six_fixture / "det1" / name).read_bytes() == first[name], name
        p1 = json.loads(first["scene_provenance.json"])
        p2 = json.loads((six_fixture / "det1/scene_provenance.json").read_text())
        p1.pop("created_utc"), p2.pop("created_utc")
        assert p1 == p2

    def test_vivid_processed_input_aborts_with_linearity_code(self, six_fixture, tmp_path):
        # photofinish the clean reference capture and gate on it
        ref = read_pfm(six_fixture / "reference.pfm")
        cooked = apply_profile(builtin_profile("vivid"), LinearImage(data=ref))
        work = tmp_path / "cooked"
        shutil.copytree(six_fixture, work, ignore=shutil.ignore_patterns("out*", "det*"))
        write_pfm(work / "reference.pfm", cooked.data)
        cfg = load_config(work / "config.json")
        results = cmd_run(cfg)
        assert results[0].exit_code == EXIT_LINEARITY
        assert results[0].status == "aborted"
        log = json.loads(Path(results[0].provenance_path).read_text())
        assert log["status"] == "aborted"
        assert log["error"]["type"] == "LinearityFailure"
        assert batch_exit_code(results) == EXIT_LINEARITY

    def test_linearity_abort_can_be_overridden(self, six_fixture, tmp_path):
        ref = read_pfm(six_fixture / "reference.pfm")
        cooked = apply_profile(builtin_profile("vivid"), LinearImage(data=ref))
        work = tmp_path / "cooked2"
        shutil.copytree(six_fixture, work, ignore=shutil.ignore_patterns("out*", "det*"))
        write_pfm(work / "reference.pfm", cooked.data)
        cfg = load_config(work / "config.json",
                          overrides={"skip_linearity_abort": True})
        results = cmd_run(cfg)
        assert results[0].exit_code == EXIT_OK
        log = json.loads(Path(results[0].provenance_path).read_text())
        assert any("overridden" in w for w in log["warnings"])

    def test_chart_age_warning_recorded(self, six_fixture, tmp_path):
        work = tmp_path / "aged"
        shutil.copytree(six_fixture, work, ignore=shutil.ignore_patterns("out*", "det*"))
        doc = json.loads((work / "config.json").read_text())
        doc["thresholds"] = {"chart_age_warn_days": 1}
        (work / "config.json").write_text(json.dumps(doc))
        results = cmd_run(load_config(work / "config.json"))
        assert results[0].exit_code == EXIT_OK
        log = json.loads(Path(results[0].provenance_path).read_text())
        assert any("re-measure" in w for w in log["warnings"])

    def test_each_output_referenced_by_exactly_one_log(self, two_fixture, tmp_path):
        # run both cameras as one batch
        doc = {
            "images": ["capture_alpha.pfm", "capture_beta.pfm"],
            "output_dir": "out_batch",
            "registry": "registry",
            "chart_id": "uw-24-001",
            "layout": "layout.json",
            "camera": "camera_alpha.json",
            "illuminant": "illuminant.csv",
            "correction": "closeup_wb",
            "linearity": {"chart_prefix": ""},
        }
        (two_fixture / "config_batch.json").write_text(json.dumps(doc))
        results = cmd_run(load_config(two_fixture / "config_batch.json"), jobs=2)
        assert [r.exit_code for r in results] == [EXIT_OK, EXIT_OK]
        seen = {}
        for r in results:
            log = json.loads(Path(r.provenance_path).read_text())
            for kind, path in log["outputs"].items():
                assert path not in seen, "output referenced twice"
                seen[path] = r.provenance_path
                assert Path(path).exists()
        assert len(seen) == 6  # xyz, srgb, diagnostics per image

    def test_display_png_is_opt_in(self, two_fixture):
        cfg = load_config(two_fixture / "config_alpha.json",
                          overrides={"display_png": True, "output_dir": "out_png"})
        results = cmd_run(cfg)
        png = Path(results[0].outputs["display_png"])
        assert png.exists()
        from uwcolor.imgio import DISPLAY_NOTE

        assert DISPLAY_NOTE.encode() in png.read_bytes()


class TestReport:
    def test_single_log_table(self, six_fixture):
        cmd_run(load_config(six_fixture / "config.json"))
        table = cmd_report([six_fixture / "out/scene_provenance.json"])
        assert "scene.pfm" in table and "ok" in table and "pass" in table

    def test_mixed_logs_flagged(self, six_fixture, tmp_path):
        cmd_run(load_config(six_fixture / "config.json"))
        ok_log = json.loads((six_fixture / "out/scene_provenance.json").read_text())
        aborted = dict(ok_log)
        aborted["status"] = "aborted"
        aborted["error"] = {"type": "LinearityFailure", "message": "gate failed"}
        (tmp_path / "aborted.json").write_text(json.dumps(aborted))
        table = cmd_report([six_fixture / "out/scene_provenance.json",
                            tmp_path / "aborted.json"])
        assert "aborted" in table

    def test_newer_version_gets_warning_flag(self, six_fixture, tmp_path):
        cmd_run(load_config(six_fixture / "config.json"))
        log = json.loads((six_fixture / "out/scene_provenance.json").read_text())
        log["tool_version"] = "99.0.0"
        (tmp_path / "future.json").write_text(json.dumps(log))
        table = cmd_report([tmp_path / "future.json"])
        assert "99.0.0" in table and "best effort" in table

    def test_unreadable_log(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(FileFormatError):
            cmd_report([bad])
