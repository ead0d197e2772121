"""Monte Carlo experiments and self-tests for the volatility density estimator.

Replications are independent work units keyed by ``base_seed + r``; results
are reduced in replication order so reports are reproducible bit for bit
(apart from wall-clock columns).
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy import integrate

from . import deconv
from .config import ExperimentConfig
from .deconv import TableCache, estimate_from_vectors, lagged_vectors, ordinary_kde, vh_eval
from .kernels import KernelSpec, wand_kernel
from .models import (
    ModelSpec,
    log_square,
    simulate,
    stationary_logvar_moments,
    true_logvar_density_log_ar1,
)
from .specfun import noise_density

__all__ = [
    "MISE_COLUMNS",
    "ExperimentResult",
    "run_mise_experiment",
    "expected_estimate",
    "run_bias_check",
    "run_conditional_expectation_check",
    "run_condexp_scaling",
    "run_lemma_selftests",
    "write_summary",
]

log = logging.getLogger(__name__)

MISE_COLUMNS = ("n", "replication", "h", "mise", "bias_sq", "variance", "runtime_ms")
TRUE_DENSITY_FLOOR = 1e-8
# -E log Z^2 = gamma + log 2
LOG_CHI2_MEAN_SHIFT = float(np.euler_gamma + np.log(2.0))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# MISE

@dataclass
class ExperimentResult:
    """Per-(n, replication) rows plus per-n aggregates.

    In each row ``bias_sq`` is the integrated squared bias of the mean
    estimate for that n, and ``variance`` is the integrated squared deviation
    of this replicate from that mean, so ``mean(mise) == bias_sq + mean(variance)``.
    """

    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def aggregate(self, n: int) -> dict:
        return self.summary[int(n)]


def _grid_axes(cfg: ExperimentConfig) -> tuple:
    return (cfg.axis(),) * cfg.p


def _truth(cfg: ExperimentConfig, axes) -> np.ndarray:
    if cfg.p == 1:
        return true_logvar_density_log_ar1(cfg.model, 1, axes[0])
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return true_logvar_density_log_ar1(cfg.model, 2, mesh)


def _replicate(cfg: ExperimentConfig, kernel: KernelSpec, n: int, rep: int, h: float):
    # the v_h table depends only on this replicate's data, never on which
    # replicates a worker ran before, so results do not depend on scheduling
    started = time.perf_counter()
    spec = cfg.model.with_seed(cfg.base_seed + rep)
    data = log_square(simulate(spec, n).x).values
    axes = _grid_axes(cfg)
    vectors = lagged_vectors(data, cfg.p)
    est = estimate_from_vectors(vectors, kernel, h, axes)
    return est.values, (time.perf_counter() - started) * 1000.0


def _cell_volume(axes) -> float:
    return float(np.prod([ax[1] - ax[0] for ax in axes]))


def run_mise_experiment(cfg: ExperimentConfig, kernel: KernelSpec | None = None,
                        output_path: str | None = None) -> ExperimentResult:
    """Simulate, estimate and score against the true stationary density.

    Rows are appended to ``output_path`` (if any) one n-batch at a time, so an
    interrupted run leaves only complete rows behind.
    """
    if cfg.model.variant != "log_ar1":
        raise ValueError("MISE needs a known true density: use the log_ar1 model")
    kernel = kernel or wand_kernel()
    output_path = output_path or cfg.output_path
    axes = _grid_axes(cfg)
    truth = _truth(cfg, axes)
    mask = truth > TRUE_DENSITY_FLOOR
    cell = _cell_volume(axes)
    result = ExperimentResult()

    fh = writer = None
    if output_path:
        fh = open(output_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MISE_COLUMNS)
        fh.flush()
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for n in cfg.sample_sizes:
            h = cfg.bandwidth_for(n)
            reps = range(cfg.replications)
            if pool is None:
                outs = [_replicate(cfg, kernel, n, r, h) for r in reps]
            else:
                outs = list(pool.map(_replicate, [cfg] * len(reps), [kernel] * len(reps),
                                     [n] * len(reps), reps, [h] * len(reps)))
            estimates = np.stack([o[0] for o in outs])
            mean_est = estimates.mean(axis=0)
            mise = np.array([np.sum(((e - truth) ** 2)[mask]) * cell for e in estimates])
            bias_sq = float(np.sum(((mean_est - truth) ** 2)[mask]) * cell)
            dev = np.array([np.sum(((e - mean_est) ** 2)[mask]) * cell for e in estimates])
            R = cfg.replications
            batch = []
            for r in reps:
                row = {"n": n, "replication": r, "h": h, "mise": float(mise[r]),
                       "bias_sq": bias_sq, "variance": float(dev[r]),
                       "runtime_ms": outs[r][1]}
                batch.append(row)
            result.rows.extend(batch)
            se = float(mise.std(ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
            ivar = float(dev.sum() / (R - 1)) if R > 1 else float("nan")
            ivar_se = float(dev.std(ddof=1) * R / (R - 1) / np.sqrt(R)) if R > 1 else float("nan")
            result.summary[n] = {
                "n": n,
                "h": h,
                "replications": R,
                "mise": float(mise.mean()),
                "mise_se": se,
                "integrated_bias_sq": bias_sq,
                "integrated_variance": ivar,
                "integrated_variance_se": ivar_se,
            }
            if writer is not None:
                for row in batch:
                    writer.writerow([_fmt(row[c]) for c in MISE_COLUMNS])
                fh.flush()
            log.info("n=%d h=%.4f mise=%.5g +- %.2g", n, h, mise.mean(), se)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
        if fh is not None:
            fh.close()
    return result


def write_summary(path, cfg: ExperimentConfig, payload: dict) -> None:
    """Summary file: a timestamp header line, then deterministic JSON with the config text."""
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    body = {"config": cfg.source_text, "results": payload}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# generated {stamp}\n")
        fh.write(json.dumps(body, indent=2, sort_keys=True, default=json_default))
        fh.write("\n")


def json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(type(obj))


# ---------------------------------------------------------------------------
# bias

def _gaussian_derivatives(x, mu, sd):
    z = (np.asarray(x) - mu) / sd
    f = np.exp(-0.5 * z * z) / (sd * np.sqrt(2 * np.pi))
    return f, (z * z - 1.0) * f / sd ** 2


def kernel_second_moment(k: KernelSpec, step: float = 1e-4) -> float:
    """``int u^2 w(u) du = -phi_w''(0)`` by a central difference."""
    return float(-(k.eval_phi_w(step) - 2 * k.eval_phi_w(0.0) + k.eval_phi_w(-step)) / step ** 2)


def expected_estimate(model: ModelSpec, k: KernelSpec, h: float, x, route: str = "kernel"):
    """Exact ``E f_nh(x)`` for the log_ar1 model by quadrature.

    ``route="kernel"`` smooths f with w_h in the Fourier domain;
    ``route="deconvolution"`` forms g = f * k numerically and smooths it with
    the tabulated v_h. The two agree because phi_k cancels.
    """
    mu, sd = stationary_logvar_moments(model)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if route == "kernel":
        out = []
        for xi in xs:
            def integrand(t):
                return k.eval_phi_w(h * t) * np.exp(-0.5 * (sd * t) ** 2) * np.cos(t * (xi - mu))
            val, _ = integrate.quad(integrand, 0.0, 1.0 / h, epsabs=1e-13, epsrel=1e-12, limit=400)
            out.append(val / np.pi)
        return np.array(out)
    if route == "deconvolution":
        du = 0.005
        u = np.arange(mu - 10 * sd - 30.0, mu + 10 * sd + 8.0, du)
        z = np.arange(-30.0, 5.0, du)
        kz = noise_density(z)
        f = np.exp(-0.5 * ((u[:, None] - z[None, :] - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
        g = f @ kz * du
        args = (xs[:, None] - u[None, :]) / h
        table = deconv._table_for_range(k, h, args.min(), args.max(), None)
        return (vh_eval(table, args) @ g) * du / h
    raise ValueError(f"unknown route {route!r}")


def run_bias_check(cfg: ExperimentConfig, h_values=None, kernel: KernelSpec | None = None,
                   points=None) -> dict:
    """Monte Carlo bias of f_nh at the stationary mode and inflection point.

    ``cfg.paths`` independent paths of length ``cfg.path_length`` are simulated
    once and reused for every bandwidth.
    """
    model = cfg.model
    if model.variant != "log_ar1":
        raise ValueError("bias check needs the log_ar1 model")
    kernel = kernel or wand_kernel()
    h_values = tuple(sorted(h_values or cfg.h_values, reverse=True))
    mu, sd = stationary_logvar_moments(model)
    if points is None:
        points = {"mode": mu, "inflection": mu + sd}
    names = list(points)
    x0 = np.array([points[k] for k in names])
    f0, f2 = _gaussian_derivatives(x0, mu, sd)
    m2 = kernel_second_moment(kernel)

    M, n = cfg.paths, cfg.path_length
    data = np.stack([log_square(simulate(model.with_seed(cfg.base_seed + r), n).x).values
                     for r in range(M)])
    cache = TableCache(kernel)
    rows = []
    for h in h_values:
        table = cache.get(h, (x0.min() - data.max()) / h, (x0.max() - data.min()) / h)
        est = np.stack([vh_eval(table, (xi - data) / h).mean(axis=1) / h for xi in x0], axis=1)
        mean = est.mean(axis=0)
        se = est.std(axis=0, ddof=1) / np.sqrt(M)
        exact = expected_estimate(model, kernel, h, x0)
        for i, name in enumerate(names):
            leading = 0.5 * m2 * f2[i]
            bias = mean[i] - f0[i]
            rows.append({
                "h": h, "point": name, "x0": float(x0[i]),
                "estimate_mean": float(mean[i]), "estimate_se": float(se[i]),
                "truth": float(f0[i]), "bias": float(bias),
                "bias_over_h2": float(bias / h ** 2),
                "bias_over_h2_se": float(se[i] / h ** 2),
                "leading_coefficient": float(leading),
                "ratio_to_leading": float(bias / (h ** 2 * leading)) if leading else float("nan"),
                "exact_bias": float(exact[i] - f0[i]),
            })

    def pick(name, h):
        return next(r for r in rows if r["point"] == name and r["h"] == h)

    checks = {}
    if "mode" in points:
        checks["mode_bias_negative"] = all(pick("mode", h)["bias"] < 0 for h in h_values)
        h_ref = min(h_values, key=lambda v: abs(v - 0.3))
        ratio = pick("mode", h_ref)["ratio_to_leading"]
        checks["mode_ratio_in_range"] = 0.5 <= ratio <= 1.5
    if "inflection" in points and "mode" in points:
        infl = [abs(pick("inflection", h)["bias_over_h2"]) for h in h_values]
        mode_lead = abs(pick("mode", h_values[-1])["leading_coefficient"])
        checks["inflection_shrinks"] = infl[-1] < infl[0]
        checks["inflection_small"] = infl[-1] < 0.25 * mode_lead
    return {"rows": rows, "checks": checks, "passed": all(checks.values()),
            "second_moment": m2, "paths": M, "path_length": n}


# ---------------------------------------------------------------------------
# conditional expectation given the volatility path

def _z_paths(seed: int, stream: int, M: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(2, stream))
    return np.random.default_rng(ss).standard_normal((M, n))


def run_conditional_expectation_check(model: ModelSpec, n: int, h: float, M: int, *,
                                      kernel: KernelSpec | None = None, grid=None,
                                      stream: int = 0, chunk: int = 64) -> dict:
    """Average f_nh over M noise paths for one fixed volatility path.

    The average should match the ordinary w-kernel estimator built from the
    (unobservable) log sigma^2 path. Reports the sup-norm deviation and the
    largest pointwise Monte Carlo standard error.
    """
    if model.variant != "log_ar1":
        raise ValueError("the conditional-expectation identity needs sigma independent of Z")
    kernel = kernel or wand_kernel()
    log_s2 = np.log(simulate(model, n).sigma_sq)
    if grid is None:
        mu, sd = stationary_logvar_moments(model)
        grid = np.linspace(mu - 4 * sd, mu + 4 * sd, 121)
    grid = np.asarray(grid, dtype=float)
    target = ordinary_kde(log_s2[:, None], kernel, h, (grid,)).values

    Z = _z_paths(model.seed, stream, M, n)
    data = log_s2[None, :] + np.log(Z * Z)
    table = TableCache(kernel).for_estimate(h, (grid,), data)
    total = np.zeros(grid.size)
    total_sq = np.zeros(grid.size)
    for start in range(0, M, chunk):
        block = data[start:start + chunk]
        vals = vh_eval(table, (grid[None, :, None] - block[:, None, :]) / h).sum(axis=2) / (n * h)
        total += vals.sum(axis=0)
        total_sq += (vals ** 2).sum(axis=0)
    mean = total / M
    var = (total_sq - M * mean ** 2) / (M - 1) if M > 1 else np.full(grid.size, np.nan)
    se = np.sqrt(np.maximum(var, 0.0) / M)
    deviation = float(np.max(np.abs(mean - target)))
    se_max = float(np.max(se)) if M > 1 else float("nan")
    return {
        "M": M, "n": n, "h": h,
        "deviation": deviation,
        "se_max": se_max,
        "deviation_over_se": deviation / se_max if M > 1 else float("nan"),
        "passed": bool(M > 1 and deviation <= 3.0 * se_max),
        "grid": grid, "mean": mean, "target": target, "se": se,
    }


def run_condexp_scaling(model: ModelSpec, n: int, h: float, m_values=(250, 1000, 4000),
                        kernel: KernelSpec | None = None) -> dict:
    """Deviation times sqrt(M) should be roughly constant in M."""
    reports = [run_conditional_expectation_check(model, n, h, M, kernel=kernel, stream=i + 1)
               for i, M in enumerate(m_values)]
    scaled = np.array([r["deviation"] * np.sqrt(r["M"]) for r in reports])
    centre = float(np.exp(np.mean(np.log(scaled))))
    ok = bool(np.all(scaled <= 2 * centre) and np.all(scaled >= centre / 2))
    return {"m_values": list(m_values), "deviations": [r["deviation"] for r in reports],
            "scaled": scaled.tolist(), "centre": centre, "passed": ok, "reports": reports}


# ---------------------------------------------------------------------------
# lemma self-tests

@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def check_phi_k_oracle() -> Check:
    from .specfun import phi_k, phi_k_modulus_exact
    t = np.linspace(-50.0, 50.0, 1001)
    modulus_err = float(np.max(np.abs(np.abs(phi_k(t)) - phi_k_modulus_exact(t))))
    ts = np.linspace(-10.0, 10.0, 21)
    quad_err = 0.0
    for ti in ts:
        re, _ = integrate.quad(noise_density, -40, 10, weight="cos", wvar=ti, limit=400)
        im, _ = integrate.quad(noise_density, -40, 10, weight="sin", wvar=ti, limit=400)
        quad_err = max(quad_err, abs(complex(re, im) - phi_k(ti)))
    return Check("phi_k_oracle", modulus_err <= 1e-10 and quad_err <= 1e-8,
                 {"max_modulus_error": modulus_err, "max_quadrature_error": quad_err})


def check_phi_k_asymptotics() -> Check:
    from .specfun import fit_asymptotic_constant, log_phi_k, phi_k_asymptotic
    ts = np.array([5.0, 10.0, 20.0, 50.0, 100.0])
    lp = log_phi_k(ts)
    ratio = np.exp(lp.real + 0.5 * np.pi * ts) / np.sqrt(2.0)
    phase_err = _wrap(lp.imag - np.array([phi_k_asymptotic(t).phase for t in ts]))
    fit = fit_asymptotic_constant()
    ok = bool(np.all(np.abs(ratio - 1) <= 1 / ts) and np.all(np.abs(phase_err) <= 1 / ts)
              and fit["C"] < 1.0)
    return Check("phi_k_asymptotics", ok, {
        "t": ts.tolist(), "modulus_ratio": ratio.tolist(), "phase_error": phase_err.tolist(),
        "fitted_C": fit["C"], "fitted_C_modulus": fit["C_modulus"],
        "fitted_C_phase": fit["C_phase"],
    })


def check_vh_realness(kernel: KernelSpec) -> Check:
    detail = {}
    ok = True
    for h in (0.2, 0.3, 0.5):
        t = deconv.build_vh_table(kernel, h, -40.0, 40.0, 8001)
        rel = t.max_imag_residual / float(np.max(np.abs(t.values)))
        detail[f"h={h}"] = rel
        ok &= rel <= 1e-9
    return Check("vh_realness", bool(ok), detail)


def check_unit_mass(kernel: KernelSpec, seed: int = 11) -> Check:
    t = deconv.build_vh_table(kernel, 0.3, -40.0, 40.0, 8001)
    table_mass = float(np.sum(t.values) * t.delta)
    spec = ModelSpec("log_ar1", ar1_mean=0.0, ar1_coeff=0.6, ar1_innov_sd=0.8, seed=seed, burn_in=0)
    data = log_square(simulate(spec, 5000).x).values
    h = deconv.default_bandwidth(data.size)
    grid = np.linspace(data.min() - 2.0, data.max() + 8.0, 2001)
    est_mass = deconv.estimate_univariate(data, kernel, h, grid).mass()
    ok = abs(table_mass - 1) <= 0.01 and abs(est_mass - 1) <= 0.05
    return Check("unit_mass", bool(ok), {"table_mass": table_mass, "estimate_mass": est_mass, "h": h})


L2_DECREASING_H = (0.4, 0.3, 0.2, 0.15)
L2_EXTRAPOLATION_H = (0.2, 0.15, 0.1, 0.075, 0.05)


def check_l2_norm(kernel: KernelSpec) -> Check:
    """Parseval/direct agreement, monotone ratio, and the extrapolated leading constant."""
    table = deconv.build_vh_table(kernel, 0.3, -60.0, 60.0, 12001)
    norms = deconv.l2_norm_vh(table)
    agree = abs(norms.direct / norms.parseval - 1.0)
    ratios = [deconv.parseval_l2_norm(kernel, h) / deconv.l2_leading_term(kernel, h)
              for h in L2_DECREASING_H]
    gaps = np.abs(np.array(ratios) - 1.0)
    decreasing = bool(np.all(np.diff(gaps) < 0))
    hs = np.array(L2_EXTRAPOLATION_H)
    sq = np.array([(deconv.parseval_l2_norm(kernel, h) / deconv.l2_leading_term(kernel, h)) ** 2
                   for h in hs])
    limit = float(np.sqrt(np.polyfit(hs, sq, len(hs) - 1)[-1]))
    ok = agree <= 0.01 and decreasing and abs(limit - 1.0) <= 0.005
    return Check("l2_norm", bool(ok), {
        "parseval": norms.parseval, "direct": norms.direct, "relative_gap": agree,
        "h": list(L2_DECREASING_H), "ratio": ratios, "extrapolated_ratio": limit,
    })


def check_no_noise(kernel: KernelSpec, seed: int = 5) -> Check:
    rng = np.random.default_rng(seed)
    data = rng.normal(size=300)
    grid = np.linspace(-4, 4, 161)
    h = 0.4
    est = deconv.estimate_univariate(data, kernel, h, grid, noise_cf=deconv.no_noise,
                                     method="direct")
    ref = ordinary_kde(data[:, None], kernel, h, (grid,))
    err = float(np.max(np.abs(est.values - ref.values)))
    return Check("no_noise_degeneracy", err <= 1e-10, {"max_error": err})


def diagonal_hook_vectors(m: int, seed: int, spread: float = 3.0) -> np.ndarray:
    """Lag-1 pairs whose volatility coordinates coincide and whose noises are independent."""
    rng = np.random.default_rng(seed)
    s = rng.normal(0.0, spread, size=m)
    z = rng.standard_normal((m, 2))
    return s[:, None] + np.log(z * z)


def diagonal_mass_ratio(est, centre: float) -> dict:
    """Mass nearer the diagonal than the anti-diagonal through ``(centre, centre)``, and the rest."""
    x, y = np.meshgrid(*est.axes, indexing="ij")
    cell = _cell_volume(est.axes)
    along = np.abs(x - y)
    across = np.abs(x + y - 2.0 * centre)
    diag = float(est.values[along < across].sum() * cell)
    anti = float(est.values[along > across].sum() * cell)
    return {"diagonal": diag, "anti_diagonal": anti, "ratio": diag / anti if anti > 0 else np.inf}


def check_product_structure(kernel: KernelSpec, seed: int = 3) -> Check:
    h = 0.45
    pts = np.array([[0.0, 0.0], [0.7, -1.3], [2.5, 0.4], [-3.1, 1.9]])
    direct = deconv.vh_multivariate_direct(kernel, h, pts, quad_nodes=256)
    ds = 2.0 / 256
    # same trapezoid nodes in one dimension, evaluated point by point
    s = -1.0 + ds * np.arange(257)
    wts = np.full(s.size, ds)
    wts[[0, -1]] *= 0.5
    g = wts * deconv._integrand(kernel, h, s, None)
    one_d = lambda x: float((g * np.exp(-1j * s * x)).sum().real / (2 * np.pi))
    product = np.array([one_d(a) * one_d(b) for a, b in pts])
    prod_err = float(np.max(np.abs(direct - product)) / np.max(np.abs(product)))

    spec = ModelSpec("log_ar1", ar1_mean=0.0, ar1_coeff=0.6, ar1_innov_sd=0.8, seed=seed, burn_in=0)
    data = log_square(simulate(spec, 400).x).values
    grid = np.linspace(-4, 4, 81)
    uni = deconv.estimate_univariate(data, kernel, 0.5, grid)
    multi = deconv.estimate_multivariate(data, 1, kernel, 0.5, (grid,))
    p1_equal = bool(np.array_equal(uni.values, multi.values))

    vecs = diagonal_hook_vectors(2000, seed)
    centre = float(np.mean(vecs)) + LOG_CHI2_MEAN_SHIFT
    ax = np.linspace(centre - 10.0, centre + 10.0, 101)
    est = estimate_from_vectors(vecs, kernel, h, (ax, ax))
    masses = diagonal_mass_ratio(est, centre)
    ok = prod_err <= 1e-10 and p1_equal and masses["ratio"] >= 3.0
    return Check("product_structure", bool(ok), {
        "product_relative_error": prod_err, "p1_equals_univariate": p1_equal, **masses,
    })


def run_lemma_selftests(kernel: KernelSpec | None = None) -> list[Check]:
    """Asymptotics of phi_k and the L2 norm of v_h."""
    kernel = kernel or wand_kernel()
    return [check_phi_k_asymptotics(), check_l2_norm(kernel)]


def run_full_selftest(kernel: KernelSpec | None = None) -> list[Check]:
    """Everything the ``selftest`` subcommand runs."""
    kernel = kernel or wand_kernel()
    from .kernels import check_condition_w
    cw = check_condition_w(kernel)
    checks = [
        check_phi_k_oracle(),
        *run_lemma_selftests(kernel),
        check_vh_realness(kernel),
        check_unit_mass(kernel),
        check_no_noise(kernel),
        check_product_structure(kernel),
        Check("condition_w", cw.passed, {"failures": cw.failures,
                                         "alpha_fit": cw.boundary_fit_alpha,
                                         "A_fit": cw.boundary_fit_A}),
    ]
    return checks
