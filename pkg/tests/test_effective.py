from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pytest

from homog2d.cli.config_file import dump_effective_toml, validate_config
from homog2d.core.errors import EllipticityError
from homog2d.models.effective import EffectiveTensors
from homog2d.services.effective import assemble_L0, check_effective_ellipticity, effective_from_bundle
from homog2d.services.mesh import DomainMesh


def test_laminate_harmonic_and_arithmetic_means(laminate_correctors):
    _, effective = laminate_correctors
    assert effective.A_hat[0, 0, 0, 0] == pytest.approx(np.sqrt(3.0), abs=5e-3)
    assert effective.A_hat[1, 1, 0, 0] == pytest.approx(2.0, abs=5e-3)
    assert abs(effective.A_hat[0, 1, 0, 0]) < 1e-8
    assert np.abs(effective.V_hat).max() == 0.0
    assert check_effective_ellipticity(effective) == pytest.approx(np.sqrt(3.0), abs=5e-3)


def test_laminate_mean_is_spectrally_accurate(laminate_correctors):
    _, effective = laminate_correctors
    assert effective.A_hat[0, 0, 0, 0] == pytest.approx(np.sqrt(3.0), abs=1e-6)


def test_identity_is_its_own_homogenization(identity_correctors):
    bundle, effective = identity_correctors
    assert np.abs(bundle.chi).max() == 0.0
    assert np.array_equal(effective.legendre_matrix(), np.eye(2))
    assert effective.lam == 1.0


def test_effective_from_cached_bundle_matches(laminate_grid, laminate_correctors):
    bundle, effective = laminate_correctors
    again = effective_from_bundle(laminate_grid, bundle)
    assert np.array_equal(again.A_hat, effective.A_hat)
    assert np.array_equal(again.c_hat, effective.c_hat)


def test_full_lower_order_tensors(full_correctors):
    _, _, effective = full_correctors
    lowest, norm = effective.ellipticity()
    assert 0.0 < lowest <= norm
    assert effective.V_hat.shape == (2, 2, 2)
    assert effective.B_hat.shape == (2, 2, 2)
    assert np.isfinite(effective.c_hat).all()


def test_non_elliptic_tensor_rejected():
    broken = EffectiveTensors(
        A_hat=-np.eye(2).reshape(2, 2, 1, 1),
        V_hat=np.zeros((2, 1, 1)),
        B_hat=np.zeros((2, 1, 1)),
        c_hat=np.zeros((1, 1)),
        lam=0.0,
        quadrature_N=16,
    )
    with pytest.raises(EllipticityError):
        check_effective_ellipticity(broken)


def test_effective_toml_round_trips(laminate_correctors):
    _, effective = laminate_correctors
    config = validate_config(tomllib.loads(dump_effective_toml(effective)))
    assert config.command == "solve"
    coefficients = config.coefficients
    assert coefficients.A["1.1.1.1"].constant == effective.A_hat[0, 0, 0, 0]
    assert coefficients.A["2.2.1.1"].constant == effective.A_hat[1, 1, 0, 0]
    assert coefficients.lam == effective.lam


def test_L0_is_constant_coefficient(laminate_correctors):
    _, effective = laminate_correctors
    op = assemble_L0(effective, DomainMesh(M=15))
    assert op.eps is None
    assert op.symmetric
