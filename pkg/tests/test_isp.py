import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwcolor.errors import ProcessedInputError, ValidationError
from uwcolor.image import LinearImage
from uwcolor.isp import (
    GammaEncode,
    IspProfile,
    LinearCompressQuantize,
    Quantize,
    SaturationBoost,
    ToneCurve,
    WhiteBalance,
    apply_profile,
    apply_stage,
    builtin_profile,
    load_profile,
    save_profile,
)


def img(values):
    return LinearImage(data=np.asarray(values, float).reshape(1, -1, 3))


GRAY_RAMP = img([[v, v, v] for v in np.linspace(0.0, 1.0, 32)])


class TestStages:
    def test_gamma_fixes_endpoints(self):
        out = GammaEncode(2.2).apply_to(np.array([0.0, 1.0]))
        assert np.array_equal(out, [0.0, 1.0])

    def test_quantize_rounds_half_up(self):
        assert Quantize(8).apply_to(np.array([0.5]))[0] == 128 / 255

    def test_order_sensitivity_of_wb_and_gamma(self):
        gray = np.full((1, 1, 3), 0.25)
        wb, gamma = WhiteBalance((2, 1, 1)), GammaEncode(2.2)
        wb_then_gamma = gamma.apply_to(wb.apply_to(gray))
        gamma_then_wb = wb.apply_to(gamma.apply_to(gray))
        # direct evaluation of both orders
        assert wb_then_gamma[0, 0, 0] == pytest.approx(0.5 ** (1 / 2.2), rel=1e-12)
        assert gamma_then_wb[0, 0, 0] == 1.0  # 2 * 0.25**(1/2.2) clips
        assert not np.allclose(wb_then_gamma, gamma_then_wb)

    def test_stage_outputs_stay_in_unit_cube(self):
        rng = np.random.default_rng(2)
        data = rng.uniform(0, 1, (6, 7, 3))
        stages = [WhiteBalance((1.9, 1.0, 1.6)), ToneCurve(3.0, 0.3),
                  GammaEncode(0.45), SaturationBoost(2.5), Quantize(3),
                  LinearCompressQuantize(10)]
        for stage in stages:
            out = stage.apply_to(data)
            assert out.min() >= 0.0 and out.max() <= 1.0, stage

    def test_identity_parameters(self):
        rng = np.random.default_rng(7)
        data = rng.uniform(0, 1, (4, 5, 3))
        assert np.allclose(ToneCurve(contrast=0.0).apply_to(data), data, atol=0)
        assert np.allclose(SaturationBoost(factor=1.0).apply_to(data), data, atol=1e-15)
        assert np.allclose(GammaEncode(gamma=1.0).apply_to(data), data, atol=1e-15)

    def test_tone_curve_continuity_toward_identity(self):
        v = np.linspace(0, 1, 101)
        near = ToneCurve(contrast=1e-7).apply_to(v)
        assert np.max(np.abs(near - v)) < 1e-6

    @given(alpha=st.floats(0.01, 1.0), v=st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_linear_quantize_commutes_with_scaling(self, alpha, v):
        bits = 12
        q = LinearCompressQuantize(bits)
        lhs = q.apply_to(np.array([alpha * v]))[0]
        rhs = alpha * q.apply_to(np.array([v]))[0]
        assert abs(lhs - rhs) <= 1.0 / (2 ** bits - 1) + 1e-12

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            WhiteBalance((0.0, 1.0, 1.0))
        with pytest.raises(ValidationError):
            ToneCurve(contrast=-1)
        with pytest.raises(ValidationError):
            ToneCurve(pivot=1.0)
        with pytest.raises(ValidationError):
            GammaEncode(gamma=0)
        with pytest.raises(ValidationError):
            Quantize(bits=0)
        with pytest.raises(ValidationError):
            Quantize(bits=17)


class TestProfiles:
    def test_empty_profile_is_identity_but_tags_processed(self):
        out = apply_profile(IspProfile(name="empty"), GRAY_RAMP)
        assert np.array_equal(out.data, GRAY_RAMP.data)
        assert out.state == "processed"
        with pytest.raises(ProcessedInputError):
            out.require_linear("test")

    def test_stage_output_tagged_processed(self):
        out = apply_stage(GammaEncode(2.2), GRAY_RAMP)
        assert out.state == "processed"

    def test_gamma_profile_breaks_linearity(self):
        from uwcolor.linearity import linearity_from_exposure_series

        out = apply_profile(IspProfile(name="g", stages=(GammaEncode(2.2),)), GRAY_RAMP)
        ramp = GRAY_RAMP.data[0, :, 0]
        series = [(float(k), float(v)) for k, v in zip(ramp[1:-1], out.data[0, 1:-1, 0])]
        report = linearity_from_exposure_series(series)
        assert not report.verdict
        # strictly concave on the interior
        diffs = np.diff(out.data[0, :, 0])
        assert np.all(np.diff(diffs) < 0)

    def test_linear_compression_preserves_linearity(self):
        from uwcolor.linearity import linearity_from_exposure_series

        out = apply_profile(
            IspProfile(name="lq", stages=(LinearCompressQuantize(12),)), GRAY_RAMP
        )
        ramp = GRAY_RAMP.data[0, :, 0]
        series = [(float(k), float(v)) for k, v in zip(ramp[1:-1], out.data[0, 1:-1, 0])]
        assert linearity_from_exposure_series(series).verdict

    def test_builtin_profiles(self):
        neutral = builtin_profile("neutral")
        assert neutral.stages == ()
        vivid = builtin_profile("vivid")
        assert [type(s).__name__ for s in vivid.stages] == [
            "WhiteBalance", "ToneCurve", "SaturationBoost", "GammaEncode", "Quantize",
        ]
        with pytest.raises(ValidationError):
            builtin_profile("mystery")

    def test_profile_json_roundtrip(self, tmp_path):
        vivid = builtin_profile("vivid")
        save_profile(tmp_path / "vivid.json", vivid)
        assert load_profile(tmp_path / "vivid.json") == vivid

    def test_vivid_has_no_global_linear_inverse(self, chart, camera_alpha, d65):
        """The consumer look cannot be undone by any single 3x3 matrix."""
        from uwcolor.simulate import exposure_for
        from uwcolor.spectra import SceneSample, simulate_raw_rgb

        k = exposure_for(camera_alpha, d65)
        rgbs = np.array([
            simulate_raw_rgb(SceneSample(p.reflectance, d65, k), camera_alpha).rgb
            for p in chart.patches
        ])
        vivid = builtin_profile("vivid")
        cooked = apply_profile(vivid, LinearImage(data=rgbs.reshape(1, -1, 3))).data[0]
        # numeric oracle: the least-squares optimal linear inverse
        inv, *_ = np.linalg.lstsq(cooked, rgbs, rcond=None)
        residual = np.abs(cooked @ inv - rgbs)
        assert residual.max() > 0.05
