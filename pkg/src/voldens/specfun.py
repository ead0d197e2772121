"""Complex log-gamma and the characteristic function of log(Z^2).

For standard Gaussian Z the variable log(Z^2) has density

    k(x) = exp(x/2 - exp(x)/2) / sqrt(2*pi)

and characteristic function

    phi_k(t) = pi**-0.5 * 2**(i t) * Gamma(1/2 + i t).

Complex scalars are plain Python ``complex`` / numpy ``complex128`` values.
Every function here accepts scalars or arrays and is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhiKAsymptotics",
    "log_gamma_complex",
    "noise_density",
    "log_phi_k",
    "phi_k",
    "phi_k_modulus_exact",
    "phi_k_asymptotic",
    "fit_asymptotic_constant",
]

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG2 = np.log(2.0)

# B_2k / (2k (2k-1)) for k = 1..10
_STIRLING_COEFFS = np.array([
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 12.0,
    1.0 / 42.0 / 30.0,
    -1.0 / 30.0 / 56.0,
    5.0 / 66.0 / 90.0,
    -691.0 / 2730.0 / 132.0,
    7.0 / 6.0 / 182.0,
    -3617.0 / 510.0 / 240.0,
    43867.0 / 798.0 / 306.0,
    -174611.0 / 330.0 / 380.0,
])

# recurrence shift target; with |z| >= 15 the truncated series is below 1e-17
_SHIFT_TO = 15.0


def _stirling(z):
    w = 1.0 / z
    w2 = w * w
    series = np.zeros_like(z)
    for c in _STIRLING_COEFFS[::-1]:
        series = series * w2 + c
    return (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series * w


def log_gamma_complex(z):
    """Principal branch of log Gamma(z) for Re(z) > 0.

    Uses the Stirling series after shifting ``z`` upward with the recurrence
    Gamma(z) = Gamma(z + m) / (z (z+1) ... (z+m-1)).

    Parameters
    ----------
    z : complex or array_like of complex
        Arguments with strictly positive real part.

    Returns
    -------
    complex or ndarray
        ``L`` such that ``exp(L) == Gamma(z)``.

    Raises
    ------
    ValueError
        If any argument has ``Re(z) <= 0`` or is not finite.
    """
    z_arr = np.asarray(z, dtype=np.complex128)
    if not np.all(np.isfinite(z_arr)):
        raise ValueError("log_gamma_complex: non-finite argument")
    if np.any(z_arr.real <= 0.0):
        raise ValueError("log_gamma_complex: requires Re(z) > 0")

    zz = np.atleast_1d(z_arr).copy()
    correction = np.zeros_like(zz)
    shift = np.where(np.abs(zz) < _SHIFT_TO, np.ceil(_SHIFT_TO - zz.real), 0.0)
    shift = np.maximum(shift, 0.0).astype(int)
    for m in range(int(shift.max(initial=0))):
        active = shift > m
        # sum of principal logs stays on the analytic branch since Re(z + m) > 0
        correction[active] += np.log(zz[active])
        zz[active] += 1.0
    out = _stirling(zz) - correction
    if np.ndim(z_arr) == 0:
        return complex(out[0])
    return out.reshape(z_arr.shape)


def noise_density(x):
    """Density of log(Z^2) for standard Gaussian Z."""
    x = np.asarray(x, dtype=float)
    # exp(x) overflows for x > 709, where the density is exactly 0 in doubles anyway
    with np.errstate(over="ignore"):
        return np.exp(0.5 * x - 0.5 * np.exp(x) - _HALF_LOG_2PI)


def log_phi_k(t):
    """Complex logarithm of phi_k(t), continuous in t.

    Working in log space lets callers form 1/phi_k(t) without overflow.
    """
    t = np.asarray(t, dtype=float)
    lg = log_gamma_complex(0.5 + 1j * t)
    out = lg + 1j * t * _LOG2 - 0.5 * np.log(np.pi)
    return complex(out) if np.ndim(out) == 0 else out


def phi_k(t):
    """Characteristic function of log(Z^2), ``pi**-0.5 * 2**(it) * Gamma(1/2 + it)``."""
    out = np.exp(log_phi_k(t))
    return complex(out) if np.ndim(out) == 0 else out


def phi_k_modulus_exact(t):
    """Closed form ``cosh(pi t)**-0.5`` arranged so large ``|t|`` does not overflow."""
    a = np.abs(np.asarray(t, dtype=float))
    out = np.sqrt(2.0) * np.exp(-0.5 * np.pi * a) / np.sqrt(1.0 + np.exp(-2.0 * np.pi * a))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PhiKAsymptotics:
    """Large-|t| description of phi_k: leading modulus, phase and O(1/|t|) scale."""

    modulus_leading: float
    phase: float
    relative_error_bound: float


# Fitted once by fit_asymptotic_constant over t in [5, 100]; see tests.
ASYMPTOTIC_CONSTANT = 0.1


def phi_k_asymptotic(t: float, constant: float = ASYMPTOTIC_CONSTANT) -> PhiKAsymptotics:
    """Leading-order modulus and phase of phi_k(t) for ``|t| >= 1``.

    modulus ~ sqrt(2) exp(-pi |t| / 2), phase ~ t log sqrt(1 + 4 t^2) - t,
    each with a relative error of order ``constant / |t|``.
    """
    t = float(t)
    if not np.isfinite(t) or abs(t) < 1.0:
        raise ValueError("phi_k_asymptotic: requires |t| >= 1")
    modulus = np.sqrt(2.0) * np.exp(-0.5 * np.pi * abs(t))
    phase = t * 0.5 * np.log1p(4.0 * t * t) - t
    return PhiKAsymptotics(float(modulus), float(phase), constant / abs(t))


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def fit_asymptotic_constant(ts=None) -> dict:
    """Empirical O(1/|t|) constants of the large-|t| expansion of phi_k.

    For each ``t`` the deviations ``|t| * |ratio - 1|`` (modulus) and
    ``|t| * |phase error|`` (phase, wrapped to (-pi, pi]) are computed from the
    exact phi_k; the fitted constant is their maximum.
    """
    if ts is None:
        ts = np.geomspace(5.0, 100.0, 40)
    ts = np.asarray(ts, dtype=float)
    lp = log_phi_k(ts)
    modulus_ratio = np.exp(lp.real + 0.5 * np.pi * np.abs(ts)) / np.sqrt(2.0)
    phase_lead = np.array([phi_k_asymptotic(t).phase for t in ts])
    phase_err = _wrap(lp.imag - phase_lead)
    c_mod = np.abs(ts) * np.abs(modulus_ratio - 1.0)
    c_phase = np.abs(ts) * np.abs(phase_err)
    return {
        "t": ts,
        "modulus_ratio": modulus_ratio,
        "phase_error": phase_err,
        "C_modulus": float(c_mod.max()),
        "C_phase": float(c_phase.max()),
        "C": float(max(c_mod.max(), c_phase.max())),
    }
