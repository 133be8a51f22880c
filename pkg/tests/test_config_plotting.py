import math
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, strategies as st

from nsp_free import config
from nsp_free.plotting import Figure

SVG = "{http://www.w3.org/2000/svg}"


def test_scalar_types():
    cfg = config.loads("""
        # a comment
        model.n = 3
        model.gamma = 4/3          # trailing comment
        model.eps = 1e-2
        output.formats = ndjson, csv
        initial.preset = "gaussian"
        initial.name = 'a, b'
        diagnostics.slices = true
        sweep.eps_ladder = 0.1, 0.05, 1/40
    """)
    assert cfg["model.n"] == 3 and isinstance(cfg["model.n"], int)
    assert cfg["model.gamma"] == 4 / 3
    assert cfg["model.eps"] == 0.01
    assert cfg["output.formats"] == ["ndjson", "csv"]
    assert cfg["initial.preset"] == "gaussian" and cfg["initial.name"] == "a, b"
    assert cfg["diagnostics.slices"] is True
    assert cfg["sweep.eps_ladder"] == [0.1, 0.05, 0.025]


@pytest.mark.parametrize("text", ["just words", "= 3", "a..b = 1", "x = 1\nx = 2"])
def test_malformed_lines(text):
    with pytest.raises(config.ConfigError):
        config.loads(text)


def test_missing_file(tmp_path):
    with pytest.raises(config.ConfigError, match="not found"):
        config.load(tmp_path / "nope.cfg")


def test_section_and_file_round_trip(tmp_path):
    cfg = {"model.n": 4, "model.eps": 0.125, "sweep.eps_ladder": [0.1, 0.05], "output.svg": False,
           "initial.preset": "uniform_ball"}
    path = tmp_path / "run.cfg"
    path.write_text(config.dumps(cfg))
    assert config.load(path) == cfg
    assert config.section(cfg, "model") == {"n": 4, "eps": 0.125}


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=2, max_size=6))
def test_float_lists_round_trip(values):
    back = config.loads(config.dumps({"a.b": values}))["a.b"]
    assert back == values


def test_figure_is_valid_svg(tmp_path):
    fig = Figure("trend", "eps", "d1", logx=True, logy=True)
    fig.add([0.1, 0.05, 0.025], [1e-2, 6e-3, 3e-3], "rho").add([0.1, 0.05], [2e-2, 1e-2], "m", dashed=True)
    path = fig.save(tmp_path / "f.svg")
    root = ET.parse(path).getroot()
    assert root.tag == SVG + "svg"
    paths = root.findall(f".//{SVG}path")
    assert len(paths) >= 2
    assert any("stroke-dasharray" in p.attrib for p in paths)
    text = "".join(t.text or "" for t in root.iter(SVG + "text"))
    assert "trend" in text and "rho" in text


def test_figure_skips_non_finite_points():
    fig = Figure("t", "x", "y", logy=True)
    fig.add([0, 1, 2, 3], [1.0, math.nan, 0.0, 2.0])
    ET.fromstring(fig.to_svg())
