"""Deconvolution kernels with compactly supported Fourier transform.

A kernel here is a real symmetric ``w`` with unit integral whose Fourier
transform ``phi_w`` vanishes outside [-1, 1] and behaves like ``A t**alpha``
at the edge of its support (``phi_w(1 - t) ~ A t**alpha`` as ``t -> 0``).
Only the Wand kernel, ``phi_w(t) = (1 - t**2)**3``, is shipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "KernelSpec",
    "ConditionWReport",
    "wand_kernel",
    "check_condition_w",
    "product_kernel_eval",
    "inverse_fourier",
]

INV_2PI = 1.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a deconvolution kernel.

    Attributes
    ----------
    name : str
    alpha, bigA : float
        Edge behaviour ``phi_w(1 - t) = bigA * t**alpha + o(t**alpha)``.
    eval_w : callable
        Vectorized kernel ``w(x)``.
    eval_phi_w : callable
        Vectorized Fourier transform, identically zero for ``|t| > 1``.
    tail_constant : float or None
        ``C`` with ``|w(x)| <= C / x**4`` for ``|x| >= 10`` when known; used to
        size quadrature truncation.
    """

    name: str
    alpha: float
    bigA: float
    eval_w: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    eval_phi_w: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    tail_constant: float | None = None


# ---------------------------------------------------------------------------
# Wand kernel

_WAND_SWITCH = 1.0
_WAND_TAYLOR_TERMS = 14


def _wand_taylor_coeffs(n_terms: int) -> np.ndarray:
    # w(x) = (1/pi) int_0^1 (1-t^2)^3 cos(tx) dt, expanded in x^2
    coeffs = []
    for k in range(n_terms):
        j = 2 * k
        moment = 1.0 / (j + 1) - 3.0 / (j + 3) + 3.0 / (j + 5) - 1.0 / (j + 7)
        coeffs.append((-1) ** k * moment / factorial(j) / np.pi)
    return np.array(coeffs)


_WAND_TAYLOR = _wand_taylor_coeffs(_WAND_TAYLOR_TERMS)


def _wand_w(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax < _WAND_SWITCH
    if np.any(small):
        x2 = ax[small] ** 2
        out[small] = np.polynomial.polynomial.polyval(x2, _WAND_TAYLOR)
    big = ~small
    if np.any(big):
        xb = ax[big]
        out[big] = (48.0 * xb * (xb * xb - 15.0) * np.cos(xb)
                    - 144.0 * (2.0 * xb * xb - 5.0) * np.sin(xb)) / (np.pi * xb ** 7)
    return out if out.ndim else float(out)


def _wand_phi(t):
    t = np.asarray(t, dtype=float)
    out = np.where(np.abs(t) <= 1.0, (1.0 - t * t) ** 3, 0.0)
    return out if out.ndim else float(out)


def wand_kernel() -> KernelSpec:
    """Kernel with ``phi_w(t) = (1 - t^2)^3`` on [-1, 1]; alpha = 3, A = 8.

    In closed form ``w(x) = [48x(x^2-15)cos x - 144(2x^2-5)sin x] / (pi x^7)``;
    a Taylor series replaces it for ``|x| < 1`` where it is 0/0.
    """
    return KernelSpec(
        name="wand",
        alpha=3.0,
        bigA=8.0,
        eval_w=_wand_w,
        eval_phi_w=_wand_phi,
        tail_constant=27.0,
    )


def inverse_fourier(phi: Callable, x, nodes: int = 64) -> np.ndarray:
    """``(1/2pi) int_{-1}^{1} phi(t) exp(-itx) dt`` by Gauss-Legendre, for real even phi."""
    t, wts = leggauss(nodes)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = phi(t) * wts
    return INV_2PI * np.cos(np.outer(x, t)) @ vals


def product_kernel_eval(k: KernelSpec, xs, p: int) -> float:
    """Product kernel ``prod_j w(xs[j])`` in dimension ``p``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.shape[0] != p:
        raise ValueError(f"product_kernel_eval: expected {p} coordinates, got shape {xs.shape}")
    return float(np.prod(k.eval_w(xs)))


# ---------------------------------------------------------------------------
# Condition W

@dataclass
class ConditionWReport:
    integral_abs_w: float
    integral_w: float
    second_moment: float
    sup_w_bound_ok: bool
    lipschitz_bound_ok: bool
    boundary_fit_alpha: float
    boundary_fit_A: float
    phi_w_at_zero: float = float("nan")
    truncation: float = float("nan")
    items: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.items.values())

    @property
    def failures(self) -> list[str]:
        return [name for name, ok in self.items.items() if not ok]


def _panel_nodes(edges: np.ndarray, order: int = 16):
    t, wts = leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) / 2 + half * t
    weights = half * wts
    return nodes.ravel(), weights.ravel()


def _truncation(k: KernelSpec, tol: float, default: float = 1e4) -> float:
    if k.tail_constant is None:
        return default
    # two-sided tail of int |w| is 2C/(3T^3)
    return max(default, (2.0 * k.tail_constant / (3.0 * tol)) ** (1.0 / 3.0))


def _fit_boundary(k: KernelSpec, t_lo: float = 1e-3, t_hi: float = 1e-1, n: int = 25):
    t = np.geomspace(t_lo, t_hi, n)
    y = k.eval_phi_w(1.0 - t)
    if np.any(y <= 0):
        return float("nan"), float("nan")
    design = np.column_stack([np.ones_like(t), np.log(t), t, t * t])
    coef, *_ = np.linalg.lstsq(design, np.log(y), rcond=None)
    return float(coef[1]), float(np.exp(coef[0]))


def check_condition_w(k: KernelSpec, quad_tolerance: float = 1e-8) -> ConditionWReport:
    """Numerically verify the six kernel conditions; violations are reported, not raised.

    Items 1-4 use Gauss-Legendre panels on [-T, T] with T sized from the
    kernel's tail bound. Items 5-6 are read off samples of ``phi_w``.
    """
    if quad_tolerance <= 0:
        raise ValueError("quad_tolerance must be positive")
    T = _truncation(k, quad_tolerance)
    edges = np.concatenate([
        np.arange(0.0, 50.0, 0.25),
        np.arange(50.0, T, np.pi / 2),
        [T],
    ])
    x, wts = _panel_nodes(edges)
    w_pos = k.eval_w(x)
    w_neg = k.eval_w(-x)
    integral_w = float(wts @ (w_pos + w_neg))
    integral_abs_w = float(wts @ (np.abs(w_pos) + np.abs(w_neg)))
    second_moment = float(wts @ (x * x * (w_pos + w_neg)))

    dense = np.linspace(-60.0, 60.0, 240_001)
    wd = k.eval_w(dense)
    sup_ok = bool(np.max(np.abs(wd)) <= INV_2PI + 1e-12)
    slopes = np.abs(np.diff(wd)) / np.diff(dense)
    lip_ok = bool(np.max(slopes) <= INV_2PI + 1e-9)

    tail = k.eval_w(np.linspace(T / 2, T, 1001))
    decay_ok = bool(np.max(np.abs(tail)) <= quad_tolerance)

    probe = np.linspace(-1.0, 1.0, 2001)
    even_ok = bool(np.allclose(k.eval_phi_w(probe), k.eval_phi_w(-probe), rtol=0, atol=1e-14)
                   and np.array_equal(wd, k.eval_w(-dense)))
    outside = np.concatenate([np.linspace(1.0 + 1e-12, 5.0, 500), -np.linspace(1.0 + 1e-12, 5.0, 500)])
    support_ok = bool(np.all(k.eval_phi_w(outside) == 0.0))

    phi0 = float(k.eval_phi_w(0.0))
    alpha_fit, A_fit = _fit_boundary(k)
    boundary_ok = bool(np.isfinite(alpha_fit) and alpha_fit > 0
                       and abs(alpha_fit - k.alpha) <= 0.05 * k.alpha
                       and abs(A_fit - k.bigA) <= 0.05 * abs(k.bigA))

    items = {
        "symmetric": even_ok,
        "integrable": bool(np.isfinite(integral_abs_w)),
        "unit_integral": abs(integral_w - 1.0) <= 1e-6 and abs(phi0 - 1.0) <= 1e-6,
        "finite_second_moment": bool(np.isfinite(second_moment)),
        "vanishes_at_infinity": decay_ok,
        "compact_fourier_support": support_ok,
        "boundary_behaviour": boundary_ok,
        "sup_bound": sup_ok,
        "lipschitz_bound": lip_ok,
    }
    return ConditionWReport(
        integral_abs_w=integral_abs_w,
        integral_w=integral_w,
        second_moment=second_moment,
        sup_w_bound_ok=sup_ok,
        lipschitz_bound_ok=lip_ok,
        boundary_fit_alpha=alpha_fit,
        boundary_fit_A=A_fit,
        phi_w_at_zero=phi0,
        truncation=T,
        items=items,
    )
