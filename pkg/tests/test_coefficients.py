from __future__ import annotations

import numpy as np
import pytest

from homog2d.core.errors import AliasingError, CoefficientError, EllipticityError
from homog2d.models.coefficients import CoefficientSet, FourierEntry, parse_key
from homog2d.services.coefficients import PRESET_NAMES, preset, sample_grid, verify_boundedness, verify_ellipticity


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_are_elliptic_and_bounded(name):
    coefficients = preset(name)
    assert coefficients.name == name
    assert verify_ellipticity(coefficients) >= coefficients.mu
    assert verify_boundedness(coefficients) <= coefficients.kappa + 1e-12


def test_unknown_preset():
    with pytest.raises(CoefficientError):
        preset("marble")


def test_keys_are_one_based():
    assert parse_key("A", "1.2.1.1") == (0, 1, 0, 0)
    with pytest.raises(ValueError):
        parse_key("V", "1.1")


def test_out_of_range_key_rejected():
    with pytest.raises(ValueError):
        CoefficientSet(m=1, A={"1.1.2.1": FourierEntry(constant=1.0)}, mu=1.0)


def test_fourier_entry_evaluates_modes():
    entry = FourierEntry(constant=2.0, modes=[(1, 0, 0.0, 1.0)])
    assert entry.evaluate(0.25, 0.0) == pytest.approx(3.0)
    assert entry.derivative(0, 0.0, 0.3) == pytest.approx(2 * np.pi)
    assert entry.derivative(1, 0.0, 0.3) == pytest.approx(0.0)


def test_non_elliptic_set_rejected():
    bad = CoefficientSet(
        m=1, A={"1.1.1.1": FourierEntry(constant=-1.0), "2.2.1.1": FourierEntry(constant=1.0)}, mu=0.5
    )
    with pytest.raises(EllipticityError):
        verify_ellipticity(bad)


def test_declared_kappa_enforced():
    loose = CoefficientSet(
        m=1,
        A={"1.1.1.1": FourierEntry(constant=1.0), "2.2.1.1": FourierEntry(constant=1.0)},
        c={"1.1": FourierEntry(constant=2.0)},
        mu=1.0,
        kappa=1.0,
    )
    with pytest.raises(CoefficientError):
        verify_boundedness(loose)


def test_adjoint_swaps_drifts(full_lower_order):
    adjoint = full_lower_order.adjoint()
    # B_2^{21} becomes V*_2^{12}
    assert adjoint.V["2.1.2"] == full_lower_order.B["2.2.1"]
    assert adjoint.B["1.1.1"] == full_lower_order.V["1.1.1"]
    assert adjoint.c["2.1"] == full_lower_order.c["1.2"]
    assert adjoint.adjoint().digest() == full_lower_order.digest()


def test_leading_order_drops_lower_terms(full_lower_order):
    leading = full_lower_order.leading_order()
    assert not leading.V and not leading.B and not leading.c
    assert leading.lam == 0.0
    assert leading.A == full_lower_order.A


def test_digest_ignores_name(laminate):
    renamed = laminate.model_copy(update={"name": "stripes"})
    assert renamed.digest() == laminate.digest()
    assert laminate.with_lambda(1.0).digest() != laminate.digest()


def test_sample_grid_requires_power_of_two(laminate):
    with pytest.raises(AliasingError):
        sample_grid(laminate, 48)
    grid = sample_grid(laminate, 16)
    assert grid.N == 16 and grid.m == 1
    assert grid.digest == laminate.digest()


def test_laminate_ellipticity_bounds(laminate):
    assert verify_ellipticity(laminate) == pytest.approx(1.0, abs=1e-12)
    y = np.arange(64) / 64
    y1, y2 = np.meshgrid(y, y, indexing="ij")
    tensor = laminate.tensor_A(y1, y2)
    assert tensor.max() == pytest.approx(3.0, abs=1e-12)
    assert tensor[0, 0].min() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("density", [0, 8, 15])
def test_ellipticity_check_needs_dense_lattice(laminate, density):
    with pytest.raises(CoefficientError):
        verify_ellipticity(laminate, density=density)


def test_identity_samples_are_identity(identity):
    samples = sample_grid(identity, 8).samples
    assert np.array_equal(samples.a11, np.ones((1, 1, 8, 8)))
    assert np.array_equal(samples.a22, np.ones((1, 1, 8, 8)))
    assert not np.any(samples.a12) and not np.any(samples.a21)


def test_laminate_edge_sample_at_quarter_period(laminate):
    grid = sample_grid(laminate, 64)
    # x-face index 15 sits at y1 = 16/64 = 1/4, where a = 2 + sin(π/2)
    assert grid.samples.a11[0, 0, 15] == pytest.approx(np.full(64, 3.0), abs=1e-14)


def test_sample_grid_is_idempotent(full_lower_order):
    first = sample_grid(full_lower_order, 16).samples
    second = sample_grid(full_lower_order, 16).samples
    for name in ("a11", "a22", "a12", "a21", "v1", "v2", "b1", "b2", "c"):
        assert np.array_equal(getattr(first, name), getattr(second, name))


def test_samples_are_bit_periodic(full_lower_order):
    y = np.arange(32) / 32
    y1, y2 = np.meshgrid(y, y, indexing="ij")
    shifted = full_lower_order.tensor_A(y1 + 1.0, y2)
    assert np.array_equal(shifted, full_lower_order.tensor_A(y1, y2))
    assert np.array_equal(full_lower_order.c_values(y1, y2 + 1.0), full_lower_order.c_values(y1, y2))
