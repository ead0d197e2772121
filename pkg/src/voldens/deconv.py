"""Fourier deconvolution kernel density estimation of log-volatility.

The deconvolving kernel

    v_h(x) = (1/2pi) int_{-1}^{1} phi_w(s) / phi_k(s/h) exp(-isx) ds

is tabulated once per bandwidth on a uniform grid and then reused for every
observation, so evaluating the estimator

    f_nh(x) = 1/((n-p+1) h^p) sum_j prod_m v_h((x_m - log X^2_{j-m}) / h)

costs table lookups only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import gamma, log
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.signal import czt

from .kernels import INV_2PI, KernelSpec
from .specfun import log_phi_k

__all__ = [
    "H_FLOOR",
    "H_MAX",
    "BandwidthError",
    "VhTable",
    "EstimateGrid",
    "L2Norm",
    "no_noise",
    "build_vh_table",
    "TableCache",
    "vh_eval",
    "vh_direct",
    "vh_multivariate_direct",
    "estimate_univariate",
    "estimate_multivariate",
    "estimate_from_vectors",
    "lagged_vectors",
    "ordinary_kde",
    "default_bandwidth",
    "parseval_l2_norm",
    "l2_norm_vh",
    "transform_scale",
    "clip_negatives",
]

H_FLOOR = 0.05
H_MAX = 2.0
TABLE_DELTA = 0.01
MAX_QUAD_NODES = 2 ** 16

NoiseCF = Callable[[np.ndarray], np.ndarray]


class BandwidthError(ValueError):
    pass


def no_noise(t):
    """Characteristic function of a point mass at 0 (deconvolving by nothing)."""
    return np.ones_like(np.asarray(t, dtype=float), dtype=complex)


def _check_h(h: float) -> float:
    h = float(h)
    if not (H_FLOOR <= h <= H_MAX):
        raise BandwidthError(f"bandwidth h={h:g} outside [{H_FLOOR}, {H_MAX}]")
    return h


def _inverse_noise(s_over_h: np.ndarray, noise_cf: NoiseCF | None) -> np.ndarray:
    if noise_cf is None:
        return np.exp(-log_phi_k(s_over_h))
    return 1.0 / np.asarray(noise_cf(s_over_h), dtype=complex)


def _integrand(k: KernelSpec, h: float, s: np.ndarray, noise_cf: NoiseCF | None) -> np.ndarray:
    return k.eval_phi_w(s) * _inverse_noise(s / h, noise_cf)


# ---------------------------------------------------------------------------
# v_h tables

@dataclass(frozen=True)
class VhTable:
    """Tabulated v_h on a uniform grid.

    ``max_imag_residual`` is the largest imaginary part discarded from the
    quadrature; ``max_asymmetry`` is ``max |v(x) - v(-x)| / max |v|`` when the
    grid is symmetric (nan otherwise). v_h is not even in general.
    """

    h: float
    grid_x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    quad_nodes: int
    max_imag_residual: float
    max_asymmetry: float
    kernel: KernelSpec = field(repr=False)
    noise_cf: NoiseCF | None = field(default=None, repr=False)

    @property
    def delta(self) -> float:
        return float(self.grid_x[1] - self.grid_x[0])

    @property
    def x_min(self) -> float:
        return float(self.grid_x[0])

    @property
    def x_max(self) -> float:
        return float(self.grid_x[-1])

    def covers(self, lo: float, hi: float) -> bool:
        return self.x_min <= lo and hi <= self.x_max


def _trapezoid_transform(k, h, x0, delta, n_grid, n_panels, noise_cf):
    """(1/2pi) sum_k c_k g(s_k) exp(-i s_k x_j) for uniform s_k on [-1, 1] and x_j = x0 + j delta."""
    ds = 2.0 / n_panels
    s = -1.0 + ds * np.arange(n_panels + 1)
    weights = np.full(n_panels + 1, ds)
    weights[[0, -1]] *= 0.5
    a = weights * _integrand(k, h, s, noise_cf)
    # sum_k a_k exp(-i k ds x0) exp(-i k ds delta j), then the s=-1 offset
    raw = czt(a, m=n_grid, w=np.exp(-1j * ds * delta), a=np.exp(1j * ds * x0))
    x = x0 + delta * np.arange(n_grid)
    return INV_2PI * raw * np.exp(1j * x)


def build_vh_table(
    k: KernelSpec,
    h: float,
    x_min: float,
    x_max: float,
    n_grid: int,
    quad_nodes: int = 512,
    *,
    noise_cf: NoiseCF | None = None,
    rtol: float = 1e-8,
    max_nodes: int = MAX_QUAD_NODES,
) -> VhTable:
    """Tabulate v_h on ``n_grid`` uniform points of ``[x_min, x_max]``.

    The s-integral uses the composite trapezoid rule; the number of panels
    starts at ``quad_nodes`` and doubles until two successive tables agree to
    ``rtol`` relative to their maximum (at most ``max_nodes`` panels).

    Parameters
    ----------
    noise_cf : callable, optional
        Replaces phi_k. Passing :func:`no_noise` turns v_h into w.
    """
    h = _check_h(h)
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    if quad_nodes < 512:
        raise ValueError("quad_nodes must be at least 512")
    if not x_max > x_min:
        raise ValueError("x_max must exceed x_min")
    delta = (x_max - x_min) / (n_grid - 1)

    nodes = int(quad_nodes)
    current = _trapezoid_transform(k, h, x_min, delta, n_grid, nodes, noise_cf)
    while nodes < max_nodes:
        finer = _trapezoid_transform(k, h, x_min, delta, n_grid, 2 * nodes, noise_cf)
        nodes *= 2
        scale = np.max(np.abs(finer.real))
        converged = np.max(np.abs(finer - current)) <= rtol * scale
        current = finer
        if converged:
            break

    values = current.real.copy()
    vmax = float(np.max(np.abs(values)))
    imag = float(np.max(np.abs(current.imag)))
    grid_x = x_min + delta * np.arange(n_grid)
    if np.isclose(x_min, -x_max, rtol=0, atol=1e-12 * max(1.0, abs(x_max))):
        asym = float(np.max(np.abs(values - values[::-1])) / vmax)
    else:
        asym = float("nan")
    values.setflags(write=False)
    grid_x.setflags(write=False)
    return VhTable(
        h=h,
        grid_x=grid_x,
        values=values,
        quad_nodes=nodes,
        max_imag_residual=imag,
        max_asymmetry=asym,
        kernel=k,
        noise_cf=noise_cf,
    )


def _table_for_range(k, h, lo, hi, noise_cf, delta=TABLE_DELTA) -> VhTable:
    lo = np.floor(lo / delta) * delta - delta
    hi = np.ceil(hi / delta) * delta + delta
    n_grid = int(round((hi - lo) / delta)) + 1
    return build_vh_table(k, h, lo, hi, n_grid, noise_cf=noise_cf)


class TableCache:
    """Reuses v_h tables across calls, widening a table when a request falls outside it."""

    def __init__(self, k: KernelSpec, noise_cf: NoiseCF | None = None, margin: float = 0.25):
        self.kernel = k
        self.noise_cf = noise_cf
        self.margin = margin
        self._tables: dict[float, VhTable] = {}

    def get(self, h: float, lo: float, hi: float) -> VhTable:
        table = self._tables.get(h)
        if table is not None and table.covers(lo, hi):
            return table
        if table is not None:
            lo, hi = min(lo, table.x_min), max(hi, table.x_max)
        pad = self.margin * (hi - lo)
        table = _table_for_range(self.kernel, h, lo - pad, hi + pad, self.noise_cf)
        self._tables[h] = table
        return table

    def for_estimate(self, h: float, axes, data) -> VhTable:
        """Table covering ``(axis - data) / h`` for every axis."""
        data = np.asarray(data, dtype=float)
        lo = min((np.min(ax) - np.max(data)) / h for ax in axes)
        hi = max((np.max(ax) - np.min(data)) / h for ax in axes)
        return self.get(h, lo, hi)


def vh_eval(table: VhTable, x):
    """Linear interpolation of the table; raises ``ValueError`` outside its range."""
    x = np.asarray(x, dtype=float)
    if x.size and (np.min(x) < table.x_min or np.max(x) > table.x_max):
        raise ValueError(
            f"vh_eval: argument outside table range [{table.x_min:g}, {table.x_max:g}]"
        )
    out = np.interp(x, table.grid_x, table.values)
    return float(out) if out.ndim == 0 else out


def vh_direct(k: KernelSpec, h: float, x, noise_cf: NoiseCF | None = None,
              epsrel: float = 1e-11) -> np.ndarray:
    """v_h by adaptive quadrature, point by point. Slow; used as an oracle."""
    scale = float(np.max(np.abs(_integrand(k, h, np.linspace(-1.0, 1.0, 2001), noise_cf))))
    out = []
    for xi in np.atleast_1d(np.asarray(x, dtype=float)):
        def re(s):
            return (_integrand(k, h, np.array([s]), noise_cf)[0] * np.exp(-1j * s * xi)).real
        val, _ = integrate.quad(re, -1.0, 1.0, epsabs=epsrel * scale, epsrel=epsrel, limit=500)
        out.append(INV_2PI * val)
    return np.array(out)


def vh_multivariate_direct(k: KernelSpec, h: float, points, quad_nodes: int = 256,
                           noise_cf: NoiseCF | None = None) -> np.ndarray:
    """Multivariate v_h from the p-dimensional Fourier integral, without factorizing.

    A tensor trapezoid rule on [-1, 1]^p is applied to
    ``prod_m phi_w(s_m) / prod_m phi_k(s_m / h) * exp(-i s.x)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p = points.shape[1]
    ds = 2.0 / quad_nodes
    s = -1.0 + ds * np.arange(quad_nodes + 1)
    wts = np.full(s.size, ds)
    wts[[0, -1]] *= 0.5
    mesh = np.meshgrid(*([s] * p), indexing="ij")
    wmesh = np.prod(np.meshgrid(*([wts] * p), indexing="ij"), axis=0)
    num = np.prod([k.eval_phi_w(m) for m in mesh], axis=0)
    den = np.prod([np.asarray(noise_cf(m / h)) if noise_cf else np.exp(log_phi_k(m / h))
                   for m in mesh], axis=0)
    g = wmesh * num / den
    out = []
    for x in points:
        phase = sum(m * xm for m, xm in zip(mesh, x))
        out.append((g * np.exp(-1j * phase)).sum().real)
    return np.array(out) * INV_2PI ** p


# ---------------------------------------------------------------------------
# estimators

@dataclass(frozen=True)
class EstimateGrid:
    """Estimated density on a tensor grid. Values may be negative."""

    p: int
    axes: tuple
    values: np.ndarray = field(repr=False)
    h: float
    n: int
    scale: str = "log_sigma_sq"

    def mass(self) -> float:
        """Trapezoid integral of the values over the grid."""
        out = self.values
        for ax in reversed(self.axes):
            out = integrate.trapezoid(out, ax, axis=-1)
        return float(out)


def lagged_vectors(data, p: int) -> np.ndarray:
    """Rows ``(d_j, d_{j-1}, ..., d_{j-p+1})`` for ``j = p-1, ..., n-1``."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 1:
        raise ValueError("data must be one-dimensional")
    if p < 1:
        raise ValueError("p must be at least 1")
    if data.size < p:
        raise ValueError(f"need at least p={p} observations, got {data.size}")
    m = data.size - p + 1
    return np.column_stack([data[p - 1 - lag: p - 1 - lag + m] for lag in range(p)])


def _axis_matrix(table: VhTable, axis: np.ndarray, coords: np.ndarray, h: float) -> np.ndarray:
    return vh_eval(table, (axis[:, None] - coords[None, :]) / h)


def _axis_matrix_direct(k, h, axis, coords, nodes, noise_cf) -> np.ndarray:
    # v_h((x - d)/h) = (1/2pi) sum_s c_s g(s) e^{-isx/h} e^{isd/h}: one complex matrix product
    ds = 2.0 / nodes
    s = -1.0 + ds * np.arange(nodes + 1)
    weights = np.full(nodes + 1, ds)
    weights[[0, -1]] *= 0.5
    g = weights * _integrand(k, h, s, noise_cf)
    left = np.exp(-1j * np.outer(axis / h, s)) * g
    right = np.exp(1j * np.outer(s, coords / h))
    return INV_2PI * (left @ right).real


def _combine(mats: list[np.ndarray]) -> np.ndarray:
    if len(mats) == 1:
        return mats[0].sum(axis=1)
    if len(mats) == 2:
        return mats[0] @ mats[1].T
    letters = "abcdefgh"[: len(mats)]
    spec = ",".join(f"{c}z" for c in letters) + "->" + letters
    return np.einsum(spec, *mats, optimize=True)


def _needed_range(axes, vectors, h):
    lo = min((np.min(ax) - np.max(vectors[:, m])) / h for m, ax in enumerate(axes))
    hi = max((np.max(ax) - np.min(vectors[:, m])) / h for m, ax in enumerate(axes))
    return lo, hi


def estimate_from_vectors(
    vectors,
    k: KernelSpec,
    h: float,
    axes: Sequence,
    *,
    table: VhTable | None = None,
    noise_cf: NoiseCF | None = None,
    chunk: int = 4096,
    method: str = "table",
) -> EstimateGrid:
    """Product-kernel deconvolution estimate from explicit p-vectors (rows).

    ``method="table"`` interpolates a v_h table linearly (fast; relative
    error around 1e-5). ``method="direct"`` evaluates the trapezoid sum at
    every ``(x - d)/h`` exactly, using the node count the table converged
    to. It costs O(grid * nodes * n) per axis and is meant for checks.
    """
    if method not in ("table", "direct"):
        raise ValueError(f"unknown method {method!r}")
    h = _check_h(h)
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    m_rows, p = vectors.shape
    if m_rows == 0:
        raise ValueError("no observations")
    axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
    if len(axes) != p:
        raise ValueError(f"expected {p} axes, got {len(axes)}")
    lo, hi = _needed_range(axes, vectors, h)
    if table is None:
        table = _table_for_range(k, h, lo, hi, noise_cf)
    elif table.h != h:
        raise BandwidthError(f"table built for h={table.h:g}, estimate asks h={h:g}")
    elif not table.covers(lo, hi):
        raise ValueError(
            f"table range [{table.x_min:g}, {table.x_max:g}] does not cover [{lo:g}, {hi:g}]"
        )

    total = np.zeros(tuple(ax.size for ax in axes))
    for start in range(0, m_rows, chunk):
        block = vectors[start:start + chunk]
        if method == "table":
            mats = [_axis_matrix(table, ax, block[:, m], h) for m, ax in enumerate(axes)]
        else:
            mats = [_axis_matrix_direct(k, h, ax, block[:, m], table.quad_nodes, table.noise_cf)
                    for m, ax in enumerate(axes)]
        total += _combine(mats)
    values = total / (m_rows * h ** p)
    return EstimateGrid(p=p, axes=axes, values=values, h=h, n=m_rows + p - 1)


def estimate_univariate(data_logx2, k: KernelSpec, h: float, grid, *,
                        table: VhTable | None = None,
                        noise_cf: NoiseCF | None = None,
                        method: str = "table") -> EstimateGrid:
    """Deconvolution estimate of the density of log sigma^2 from log X^2 data."""
    data = np.asarray(data_logx2, dtype=float)
    if data.size == 0:
        raise ValueError("empty data")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    return estimate_from_vectors(data[:, None], k, h, (grid,), table=table, noise_cf=noise_cf,
                                 method=method)


def estimate_multivariate(data_logx2, p: int, k: KernelSpec, h: float, axes: Sequence, *,
                          table: VhTable | None = None,
                          noise_cf: NoiseCF | None = None,
                          method: str = "table") -> EstimateGrid:
    """Density estimate of ``(log s2_j, ..., log s2_{j-p+1})`` with a product kernel."""
    if p not in (1, 2, 3):
        raise ValueError("p must be 1, 2 or 3")
    vectors = lagged_vectors(data_logx2, p)
    return estimate_from_vectors(vectors, k, h, axes, table=table, noise_cf=noise_cf,
                                 method=method)


def ordinary_kde(points, k: KernelSpec, h: float, axes: Sequence) -> EstimateGrid:
    """Ordinary product-kernel estimator with kernel w; points has one row per observation."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 1 and len(axes) == 1 and points.shape[1] != 1:
        points = points.T
    m_rows, p = points.shape
    axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
    mats = [k.eval_w((ax[:, None] - points[None, :, m]) / h) for m, ax in enumerate(axes)]
    values = _combine(mats) / (m_rows * h ** p)
    return EstimateGrid(p=p, axes=axes, values=values, h=h, n=m_rows + p - 1)


def default_bandwidth(n: int) -> float:
    """``max(pi / log n, H_FLOOR)``."""
    if n < 2:
        raise ValueError("default_bandwidth needs n >= 2")
    return float(max(np.pi / log(n), H_FLOOR))


# ---------------------------------------------------------------------------
# L2 norm of v_h

@dataclass(frozen=True)
class L2Norm:
    """||v_h||_2 two ways plus the small-h leading term.

    ``predicted`` is sqrt((1/2pi) e^{pi/h} h^{1+2a} pi^{-1-2a} A^2 Gamma(2a+1));
    ``predicted_doubled`` carries an extra factor 2 under the root.
    """

    h: float
    parseval: float
    direct: float
    predicted: float
    predicted_doubled: float

    @property
    def ratio(self) -> float:
        return self.parseval / self.predicted

    @property
    def ratio_doubled(self) -> float:
        return self.parseval / self.predicted_doubled


def parseval_l2_norm(k: KernelSpec, h: float, noise_cf: NoiseCF | None = None) -> float:
    """``((1/2pi) int_{-1}^{1} |phi_w(s) / phi_k(s/h)|^2 ds) ** 0.5``."""
    h = _check_h(h)

    def sq(s):
        return float(np.abs(_integrand(k, h, np.array([s]), noise_cf)[0]) ** 2)

    # |phi_k| is even, so the integrand is even in s
    val, _ = integrate.quad(sq, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=500)
    return float(np.sqrt(2.0 * val * INV_2PI))


def l2_leading_term(k: KernelSpec, h: float, factor: float = 1.0) -> float:
    a = k.alpha
    lead = (np.exp(np.pi / h) * h ** (1 + 2 * a) * np.pi ** (-1 - 2 * a)
            * k.bigA ** 2 * gamma(2 * a + 1))
    return float(np.sqrt(factor * INV_2PI * lead))


def l2_norm_vh(table: VhTable) -> L2Norm:
    """L2 norm of the tabulated v_h by Parseval and by a Riemann sum of the table."""
    direct = float(np.sqrt(np.sum(table.values ** 2) * table.delta))
    return L2Norm(
        h=table.h,
        parseval=parseval_l2_norm(table.kernel, table.h, table.noise_cf),
        direct=direct,
        predicted=l2_leading_term(table.kernel, table.h),
        predicted_doubled=l2_leading_term(table.kernel, table.h, factor=2.0),
    )


# ---------------------------------------------------------------------------
# post-processing

def transform_scale(est: EstimateGrid, target: str) -> EstimateGrid:
    """Change variables from log sigma^2 to sigma^2 or sigma (p = 1 only)."""
    if est.p != 1:
        raise ValueError("scale transforms are only defined for p = 1")
    if est.scale != "log_sigma_sq":
        raise ValueError(f"expected a log_sigma_sq estimate, got {est.scale}")
    x = est.axes[0]
    if target == "log_sigma_sq":
        return est
    if target == "sigma_sq":
        y = np.exp(x)
        vals = est.values / y
        return replace(est, axes=(y,), values=vals, scale="sigma_sq")
    if target == "sigma":
        s = np.exp(0.5 * x)
        vals = 2.0 * est.values / s
        return replace(est, axes=(s,), values=vals, scale="sigma")
    raise ValueError(f"unknown scale {target!r}")


def clip_negatives(est: EstimateGrid) -> EstimateGrid:
    """Set negative values to zero and rescale to unit grid mass."""
    clipped = replace(est, values=np.clip(est.values, 0.0, None))
    new_mass = clipped.mass()
    if new_mass <= 0:
        return clipped
    return replace(clipped, values=clipped.values / new_mass)
