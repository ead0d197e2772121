"""Simulators for discrete-time stochastic volatility models.

Two model classes are supported, both with ``X_t = sigma_t * Z_t`` and
standard Gaussian ``Z``:

* ``garch``: sigma^2_t = a0 + sum_i a_i X^2_{t-i} + sum_j b_j sigma^2_{t-j}
  (sigma is predictable with respect to the filtration of Z);
* ``log_ar1``: log sigma^2 is a Gaussian AR(1) independent of Z.

Each seed yields two independent substreams, one for the volatility
innovations and one for Z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.stats import multivariate_normal, norm

__all__ = [
    "ModelSpec",
    "SimOutput",
    "LogSquare",
    "garch",
    "log_ar1",
    "simulate",
    "log_square",
    "true_logvar_density_log_ar1",
    "stationary_logvar_moments",
]

X_TINY = 1e-154
DEFAULT_BURN_IN = 1000


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    garch_alpha: tuple = ()
    garch_beta: tuple = ()
    ar1_mean: float = 0.0
    ar1_coeff: float = 0.0
    ar1_innov_sd: float = 1.0
    seed: int = 0
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        object.__setattr__(self, "garch_alpha", tuple(float(a) for a in self.garch_alpha))
        object.__setattr__(self, "garch_beta", tuple(float(b) for b in self.garch_beta))
        self.validate()

    def validate(self) -> None:
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.variant == "garch":
            if len(self.garch_alpha) < 1:
                raise ValueError("garch needs at least alpha_0")
            if self.garch_alpha[0] <= 0:
                raise ValueError("garch alpha_0 must be positive")
            if any(a < 0 for a in self.garch_alpha) or any(b < 0 for b in self.garch_beta):
                raise ValueError("garch coefficients must be non-negative")
            persistence = sum(self.garch_alpha[1:]) + sum(self.garch_beta)
            if persistence >= 1.0:
                raise ValueError(
                    f"garch persistence sum(alpha_1..p) + sum(beta) = {persistence:g} must be < 1"
                )
        elif self.variant == "log_ar1":
            if not abs(self.ar1_coeff) < 1.0:
                raise ValueError("log_ar1 needs |ar1_coeff| < 1")
            if not self.ar1_innov_sd > 0:
                raise ValueError("log_ar1 needs ar1_innov_sd > 0")
        else:
            raise ValueError(f"unknown model variant {self.variant!r}")

    @property
    def persistence(self) -> float:
        return sum(self.garch_alpha[1:]) + sum(self.garch_beta)

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(**{**self.__dict__, "seed": int(seed)})


def garch(alpha, beta, seed: int = 0, burn_in: int = DEFAULT_BURN_IN) -> ModelSpec:
    return ModelSpec("garch", garch_alpha=tuple(alpha), garch_beta=tuple(beta),
                     seed=seed, burn_in=burn_in)


def log_ar1(mean: float, coeff: float, innov_sd: float, seed: int = 0,
            burn_in: int = 0) -> ModelSpec:
    return ModelSpec("log_ar1", ar1_mean=mean, ar1_coeff=coeff, ar1_innov_sd=innov_sd,
                     seed=seed, burn_in=burn_in)


@dataclass(frozen=True)
class SimOutput:
    x: np.ndarray = field(repr=False)
    sigma_sq: np.ndarray = field(repr=False)
    n: int

    @property
    def z(self) -> np.ndarray:
        return self.x / np.sqrt(self.sigma_sq)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    vol, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(vol), np.random.default_rng(noise)


def _simulate_garch(spec: ModelSpec, n: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a0 = spec.garch_alpha[0]
    arch = np.asarray(spec.garch_alpha[1:])
    gar = np.asarray(spec.garch_beta)
    p, q = arch.size, gar.size
    lag = max(p, q, 1)
    total = n + spec.burn_in
    start_var = a0 / (1.0 - spec.persistence)
    s2 = np.empty(total + lag)
    x2 = np.empty(total + lag)
    s2[:lag] = start_var
    x2[:lag] = start_var
    for t in range(lag, total + lag):
        v = a0
        for i in range(p):
            v += arch[i] * x2[t - 1 - i]
        for j in range(q):
            v += gar[j] * s2[t - 1 - j]
        s2[t] = v
        x2[t] = v * z[t - lag] ** 2
    sigma_sq = s2[lag + spec.burn_in:]
    x = np.sqrt(sigma_sq) * z[spec.burn_in:]
    return x, sigma_sq


def _simulate_log_ar1(spec: ModelSpec, n: int, eps: np.ndarray) -> np.ndarray:
    a, tau, mu = spec.ar1_coeff, spec.ar1_innov_sd, spec.ar1_mean
    total = eps.size
    dev = np.empty(total)
    # eps[0] draws the stationary start N(0, tau^2 / (1 - a^2))
    dev0 = eps[0] * tau / np.sqrt(1.0 - a * a)
    dev[0] = dev0
    if total > 1:
        dev[1:], _ = lfilter([1.0], [1.0, -a], tau * eps[1:], zi=[a * dev0])
    return np.exp(mu + dev[spec.burn_in:spec.burn_in + n])


def simulate(spec: ModelSpec, n: int) -> SimOutput:
    """Simulate ``n`` observations (after ``spec.burn_in`` discarded steps)."""
    spec.validate()
    if n < 1:
        raise ValueError("n must be at least 1")
    vol_rng, noise_rng = _streams(spec.seed)
    total = n + spec.burn_in
    z = noise_rng.standard_normal(total)
    if spec.variant == "garch":
        x, sigma_sq = _simulate_garch(spec, n, z)
    else:
        eps = vol_rng.standard_normal(total)
        sigma_sq = _simulate_log_ar1(spec, n, eps)
        x = np.sqrt(sigma_sq) * z[spec.burn_in:]
    return SimOutput(x=x, sigma_sq=sigma_sq, n=n)


@dataclass(frozen=True)
class LogSquare:
    values: np.ndarray
    dropped: int


def log_square(x) -> LogSquare:
    """``log(x**2)`` elementwise, dropping entries with ``|x| < 1e-154``."""
    x = np.asarray(x, dtype=float)
    keep = np.abs(x) >= X_TINY
    return LogSquare(values=np.log(x[keep] ** 2), dropped=int(x.size - keep.sum()))


def stationary_logvar_moments(spec: ModelSpec) -> tuple[float, float]:
    """Mean and standard deviation of stationary log sigma^2 for the log_ar1 model."""
    if spec.variant != "log_ar1":
        raise ValueError("stationary law is only available in closed form for log_ar1")
    a, tau = spec.ar1_coeff, spec.ar1_innov_sd
    return spec.ar1_mean, tau / np.sqrt(1.0 - a * a)


def true_logvar_density_log_ar1(spec: ModelSpec, p: int, xs):
    """Stationary density of ``(log s2_t, ..., log s2_{t-p+1})`` for p in {1, 2}.

    ``xs`` has trailing dimension ``p`` (or is a scalar/1-d array for p = 1).
    """
    mu, sd = stationary_logvar_moments(spec)
    xs = np.asarray(xs, dtype=float)
    if p == 1:
        out = norm.pdf(xs, loc=mu, scale=sd)
        return float(out) if np.ndim(out) == 0 else out
    if p == 2:
        if xs.shape[-1] != 2:
            raise ValueError("p = 2 needs points with two coordinates")
        a = spec.ar1_coeff
        cov = sd * sd * np.array([[1.0, a], [a, 1.0]])
        out = multivariate_normal(mean=[mu, mu], cov=cov).pdf(xs)
        return float(out) if np.ndim(out) == 0 else out
    raise ValueError("p must be 1 or 2")
