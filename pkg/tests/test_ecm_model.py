import numpy as np
import pytest
from scipy import integrate

from ecm_evidence.dataset import log_grid, standardize
from ecm_evidence.ecm_model import impedance, impedance_direct, log_omega_tau, sech, to_physical
from ecm_evidence.errors import DegenerateParams
from ecm_evidence.models import EcmParams


@pytest.fixture
def grid():
    return standardize(log_grid(60))


@pytest.fixture
def params():
    return EcmParams.from_ratios(0.3, np.array([0.3, 0.5]), np.array([-0.5, 0.6]))


def test_canonical_form_matches_circuit_impedance(params, grid):
    phys = to_physical(params, grid)
    re, im = impedance(params, grid)
    z = impedance_direct(phys.R_0, phys.R_i, phys.C_i, np.exp(grid.log_omega))
    assert re == pytest.approx(z.real, rel=1e-10)
    assert im == pytest.approx(-z.imag, rel=1e-10)


def test_physical_parameters(params, grid):
    phys = to_physical(params, grid)
    assert phys.R_total == pytest.approx(np.exp(0.3))
    assert phys.R_0 == pytest.approx(0.2 * phys.R_total)
    assert phys.R_i == pytest.approx([0.3 * phys.R_total, 0.5 * phys.R_total])
    assert np.sum(phys.lambda_i) == pytest.approx(1.0)
    assert phys.R_im == pytest.approx(0.5 * np.pi * np.sum(phys.R_i))
    assert phys.C_i * phys.R_i == pytest.approx(phys.tau_i)


def test_resistance_ratios_summing_to_one_are_degenerate(grid):
    params = EcmParams.from_ratios(0.0, np.array([0.6, 0.5]), np.array([0.0, 0.0]))
    with pytest.raises(DegenerateParams):
        to_physical(params, grid)


def test_frequency_limits(params, grid):
    phys = to_physical(params, grid)
    re, im = impedance(params, grid, log_omega=np.array([-200.0, 200.0]))
    assert re[0] == pytest.approx(phys.R_total)
    assert re[1] == pytest.approx(phys.R_0)
    assert im == pytest.approx([0.0, 0.0], abs=1e-30)


def test_imaginary_area_is_half_pi_times_polarisation_resistance(params, grid):
    log_omega = np.linspace(-80.0, 80.0, 40001)
    _, im = impedance(params, grid, log_omega=log_omega)
    area = integrate.trapezoid(im, log_omega)
    assert area == pytest.approx(0.5 * np.pi * np.sum(to_physical(params, grid).R_i), rel=1e-6)


def test_log_omega_tau_on_grid_and_off_grid_agree(params, grid):
    assert log_omega_tau(params, grid) == pytest.approx(log_omega_tau(params, grid, grid.log_omega))


def test_sech_is_stable_for_large_arguments():
    values = sech(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(values))
    assert values[1] == 1.0
    assert values[0] == values[2] == 0.0


def test_direct_impedance_rejects_non_positive_elements():
    with pytest.raises(ValueError):
        impedance_direct(0.0, np.array([1.0]), np.array([1.0]), np.array([1.0]))


def test_underflowed_resistance_ratio_is_a_valid_circuit(grid):
    params = EcmParams(r_total=0.0, r_prime=np.array([7.0]), tau_std=np.array([0.0]))
    phys = to_physical(params, grid)
    assert phys.r_i == pytest.approx([0.0])
    assert phys.lambda_i == pytest.approx([0.0])
    re, im = impedance(params, grid)
    assert re == pytest.approx(np.ones(grid.omega_std.size))
    assert im == pytest.approx(np.zeros(grid.omega_std.size))
