from __future__ import annotations

import numpy as np
import pytest

from homog2d.repositories.corrector_cache import read_field_block
from homog2d.repositories.reports import ReportRepository, format_value, render_svg
from homog2d.services.mesh import DomainMesh, Field


@pytest.mark.parametrize(
    "value, text",
    [(0.1, "0.10000000000000001"), (True, "true"), (None, ""), (3, "3"), ("L2", "L2")],
)
def test_format_value(value, text):
    assert format_value(value) == text


def test_csv_and_json(tmp_path):
    repo = ReportRepository.create(tmp_path / "out")
    path = repo.write_csv("rates.csv", ("norm_id", "error"), [("L2", 0.5), ("H1", 1e-3)])
    assert path.read_text().splitlines() == ["norm_id,error", "L2,0.5", "H1,0.001"]
    repo.write_json("config.json", {"b": 1, "a": [1, 2]})
    assert (tmp_path / "out" / "config.json").read_text().startswith('{\n  "a"')
    assert repo.written == [path, tmp_path / "out" / "config.json"]


def test_svg_skips_non_positive_points_on_log_axes():
    svg = render_svg(
        "rates", {"L2": [(0.25, 0.1), (0.125, 0.05)], "zero": [(0.25, 0.0)]}, x_label="eps", y_label="error"
    )
    assert svg.startswith("<svg")
    assert svg.rstrip().endswith("</svg>")
    assert svg.count("<circle") == 2
    assert "zero" in svg


def test_svg_escapes_labels():
    svg = render_svg("a < b", {}, x_label="x & y", y_label="z")
    assert "a &lt; b" in svg and "x &amp; y" in svg


def test_field_exports(tmp_path):
    repo = ReportRepository.create(tmp_path)
    mesh = DomainMesh(M=3)
    u = Field.from_function(mesh, lambda x1, x2: x1 + x2)
    lines = repo.write_field_csv("fields/u.csv", u).read_text().splitlines()
    assert lines[0] == "x,y,component,value"
    assert len(lines) == 1 + mesh.n**2
    restored = read_field_block(repo.write_field_block("fields/u.homf", u))
    np.testing.assert_array_equal(restored.full(), u.full())
