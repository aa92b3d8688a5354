from __future__ import annotations

import math

import numpy as np
import pytest

from homog2d.core.errors import RateError
from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.uniformity import (
    UniformityReport,
    UniformityRow,
    caccioppoli_ratio,
    energy_ratio,
    manufactured_study,
    uniformity_at,
    uniformity_suite,
)


def test_caccioppoli_ball_must_fit():
    mesh = DomainMesh(M=31)
    u = Field.from_function(mesh, lambda x1, x2: x1)
    with pytest.raises(RateError):
        caccioppoli_ratio(u, (0.1, 0.5), 0.125)


def test_energy_ratio_of_zero_solution():
    mesh = DomainMesh(M=15)
    u = Field.zeros(mesh)
    assert energy_ratio(u, np.ones((1, 15, 15)), np.zeros((1, mesh.num_boundary))) == 0.0
    assert energy_ratio(u, np.zeros((1, 15, 15)), np.zeros((1, mesh.num_boundary))) == 0.0


def test_manufactured_study_needs_three_levels():
    with pytest.raises(RateError):
        manufactured_study((16, 32))


def test_uniformity_at_identity(identity):
    rows = {row.metric: row.value for row in uniformity_at(identity, 0.25, 8)}
    assert {"grad_L2", "grad_L4", "holder_0.5", "max_principle", "energy"} <= rows.keys()
    assert "caccioppoli_r=0.125" in rows
    assert rows["max_principle"] <= 1.0 + 1e-8
    assert all(math.isfinite(value) and value >= 0 for value in rows.values())


@pytest.mark.parametrize(
    "values, spread, verdict",
    [
        ((1.0, 1.5), 1.5, "PASS"),
        ((1.0, 3.0), 3.0, "FLAG"),
        ((0.0, 0.0), 1.0, "PASS"),
        ((0.0, 2.0), math.inf, "FLAG"),
    ],
)
def test_spread_verdicts(values, spread, verdict):
    report = UniformityReport(
        label="demo", rows=[UniformityRow("grad_L2", eps, v) for eps, v in zip((0.25, 0.125), values)]
    )
    assert report.verdicts()["grad_L2"] == (pytest.approx(spread), verdict)


def test_uniformity_suite_orders_eps(identity):
    report = uniformity_suite(identity, [0.125, 0.25], 8)
    assert [row.eps for row in report.rows if row.metric == "energy"] == [0.25, 0.125]
    spread, _ = report.verdicts()["max_principle"]
    assert spread >= 1.0
