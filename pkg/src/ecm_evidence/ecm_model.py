"""Canonical RC-pair impedance model in the non-dimensional parameterization.

Re[Z] is the tanh form and Im[Z] the mixture of hyperbolic secant densities in
ln(omega * tau_i). Im[Z] is stored as the positive semicircle magnitude (-Im in the
Nyquist convention). Frequencies are handled as ln(omega) throughout.
"""

from __future__ import annotations

import numpy as np

from .constants import SUM_R_TOLERANCE
from .errors import DegenerateParams
from .models import EcmParams, FrequencyStandardization, PhysicalParams


def sech(x: np.ndarray) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=float))
    e = np.exp(-ax)
    return 2.0 * e / (1.0 + e * e)


def to_physical(p: EcmParams, std: FrequencyStandardization) -> PhysicalParams:
    r_i = p.r
    r_sum = float(np.sum(r_i))
    if r_sum >= 1.0 - SUM_R_TOLERANCE:
        raise DegenerateParams(f"sum of resistance ratios {r_sum:.6g} leaves no series resistance")
    R_total = float(np.exp(p.r_total))
    R_i = r_i * R_total
    log_tau = -std.sigma_omega * p.tau_std - std.mu_omega
    tau_i = np.exp(log_tau)
    R_sum = float(np.sum(R_i))
    # ratios may underflow to exactly zero; such a pair carries no resistance
    with np.errstate(divide="ignore"):
        C_i = tau_i / R_i
    lambda_i = R_i / R_sum if R_sum > 0 else np.zeros_like(R_i)
    return PhysicalParams(
        R_total=R_total,
        R_0=(1.0 - r_sum) * R_total,
        R_i=R_i,
        tau_i=tau_i,
        C_i=C_i,
        lambda_i=lambda_i,
        R_re=R_total,
        R_im=0.5 * np.pi * R_sum,
        r_0=1.0 - r_sum,
        r_i=r_i,
    )


def log_omega_tau(
    p: EcmParams,
    std: FrequencyStandardization,
    log_omega: np.ndarray | None = None,
) -> np.ndarray:
    """ln(omega * tau_i) as an (m, N) matrix."""
    if log_omega is None:
        return std.sigma_omega * (std.omega_std[:, None] - p.tau_std[None, :])
    log_omega = np.asarray(log_omega, dtype=float)
    return log_omega[:, None] - std.sigma_omega * p.tau_std[None, :] - std.mu_omega


def impedance(
    p: EcmParams,
    std: FrequencyStandardization,
    log_omega: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Real part and positive imaginary magnitude at every grid frequency.

    ``log_omega`` evaluates off-grid while keeping the grid's standardization.
    """
    phys = to_physical(p, std)
    if log_omega is None and std.omega_std.size == 0:
        raise ValueError("frequency grid is empty")
    x = log_omega_tau(p, std, log_omega)
    re = phys.R_re * (phys.r_0 + np.sum(0.5 * phys.r_i[None, :] * (1.0 - np.tanh(x)), axis=1))
    im = phys.R_im * np.sum(phys.lambda_i[None, :] / np.pi * sech(x), axis=1)
    return re, im


def impedance_direct(
    R_0: float,
    R_i: np.ndarray,
    C_i: np.ndarray,
    omega: np.ndarray,
) -> np.ndarray:
    """Complex impedance R_0 + sum R_i / (1 + j omega C_i R_i)."""
    R_i = np.atleast_1d(np.asarray(R_i, dtype=float))
    C_i = np.atleast_1d(np.asarray(C_i, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if R_0 <= 0 or np.any(R_i <= 0) or np.any(C_i <= 0):
        raise ValueError("resistances and capacitances must be positive")
    if R_i.shape != C_i.shape:
        raise ValueError("R_i and C_i must have the same length")
    if np.any(omega <= 0):
        raise ValueError("angular frequencies must be positive")
    z = np.full(omega.shape, complex(R_0))
    for R, C in zip(R_i, C_i):
        z = z + R / (1.0 + 1j * omega * C * R)
    return z
