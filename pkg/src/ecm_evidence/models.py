"""Dataclasses for circuit parameters, datasets and priors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import NonPsdCovariance


@dataclass(frozen=True)
class EcmParams:
    """Unconstrained standardized circuit parameters."""

    r_total: float
    r_prime: np.ndarray
    tau_std: np.ndarray

    def __post_init__(self) -> None:
        r_prime = np.atleast_1d(np.asarray(self.r_prime, dtype=float))
        tau_std = np.atleast_1d(np.asarray(self.tau_std, dtype=float))
        if r_prime.shape != tau_std.shape or r_prime.ndim != 1 or r_prime.size < 1:
            raise ValueError("r_prime and tau_std must be 1-d vectors of equal length >= 1")
        if not (np.isfinite(self.r_total) and np.all(np.isfinite(r_prime)) and np.all(np.isfinite(tau_std))):
            raise ValueError("circuit parameters must be finite")
        object.__setattr__(self, "r_total", float(self.r_total))
        object.__setattr__(self, "r_prime", r_prime)
        object.__setattr__(self, "tau_std", tau_std)

    @property
    def n_pairs(self) -> int:
        return int(self.r_prime.size)

    @property
    def r(self) -> np.ndarray:
        return np.exp(-np.exp(self.r_prime))

    @classmethod
    def from_ratios(cls, r_total: float, r: np.ndarray, tau_std: np.ndarray) -> EcmParams:
        r = np.asarray(r, dtype=float)
        return cls(r_total=r_total, r_prime=np.log(-np.log(r)), tau_std=tau_std)


@dataclass(frozen=True)
class PhysicalParams:
    R_total: float
    R_0: float
    R_i: np.ndarray
    tau_i: np.ndarray
    C_i: np.ndarray
    lambda_i: np.ndarray
    R_re: float
    R_im: float
    r_0: float
    r_i: np.ndarray


@dataclass(frozen=True)
class FrequencyStandardization:
    mu_omega: float
    sigma_omega: float
    omega_std: np.ndarray

    @property
    def log_omega(self) -> np.ndarray:
        return self.mu_omega + self.sigma_omega * self.omega_std

    @property
    def bounds(self) -> tuple[float, float]:
        log_omega = self.log_omega
        return float(log_omega.min()), float(log_omega.max())


@dataclass(frozen=True)
class NoiseSpec:
    log_sigma2: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.log_sigma2):
            raise ValueError("log_sigma2 must be finite")

    @property
    def sigma2(self) -> float:
        return float(np.exp(self.log_sigma2))


@dataclass
class DatasetMeta:
    true_model: int | None = None
    theta: list[float] | None = None
    log_sigma2: float | None = None
    seed: int | None = None
    m: int | None = None
    preset: str | None = None


@dataclass
class Dataset:
    freqs_hz: np.ndarray
    y_obs_re: np.ndarray
    y_obs_im: np.ndarray
    std: FrequencyStandardization
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    @property
    def m(self) -> int:
        return int(self.freqs_hz.size)

    @property
    def is_synthetic(self) -> bool:
        return self.meta.theta is not None and self.meta.true_model is not None


@dataclass(frozen=True)
class Theta:
    """Full inference vector: circuit parameters plus log noise variance."""

    ecm: EcmParams
    log_sigma2: float

    @property
    def dim(self) -> int:
        return 2 + 2 * self.ecm.n_pairs

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            ([self.ecm.r_total], self.ecm.r_prime, self.ecm.tau_std, [self.log_sigma2])
        )

    @classmethod
    def from_vector(cls, vector: np.ndarray, n_pairs: int) -> Theta:
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (2 + 2 * n_pairs,):
            raise ValueError(f"expected vector of length {2 + 2 * n_pairs}, got {vector.shape}")
        ecm = EcmParams(
            r_total=vector[0],
            r_prime=vector[1 : 1 + n_pairs],
            tau_std=vector[1 + n_pairs : 1 + 2 * n_pairs],
        )
        return cls(ecm=ecm, log_sigma2=float(vector[-1]))


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise NonPsdCovariance(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise NonPsdCovariance("prior covariance is not symmetric")
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise NonPsdCovariance("prior covariance is not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    @property
    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))
