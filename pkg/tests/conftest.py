import pytest

from uwcolor.chart import extract_patch_stats
from uwcolor.colorimetry import default_d65
from uwcolor.simulate import (
    demo_camera,
    demo_chart,
    exposure_for,
    grid_layout,
    render_chart_image,
    six_chart_scene,
)

#: one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def chart():
    return demo_chart()


@pytest.fixture(scope="session")
def camera_alpha():
    return demo_camera("alpha")


@pytest.fixture(scope="session")
def camera_beta():
    return demo_camera("beta")


@pytest.fixture(scope="session")
def d65():
    return default_d65()


@pytest.fixture(scope="session")
def chart_layout(chart):
    return grid_layout([p.name for p in chart.patches], width=240, height=240,
                       cols=4, gap=3, margin_frac=0.15)


@pytest.fixture(scope="session")
def raw_chart_image(chart, chart_layout, camera_alpha, d65):
    """Noise-free simulated RAW capture of the demo chart (camera alpha)."""
    k = exposure_for(camera_alpha, d65)
    return render_chart_image(chart, chart_layout, d65, camera_alpha, k)


@pytest.fixture(scope="session")
def raw_chart_stats(raw_chart_image, chart_layout):
    return extract_patch_stats(raw_chart_image, chart_layout)


@pytest.fixture(scope="session")
def estimation_scene():
    """The multi-distance scene used by the estimation and convergence tests."""
    return six_chart_scene()
