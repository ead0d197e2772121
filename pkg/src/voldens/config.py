"""Flat ``key = value`` experiment configuration files.

One assignment per line, ``#`` starts a comment, lists are comma separated::

    kind = mise
    model = log_ar1
    mu = 0
    a = 0.6
    tau = 0.8
    seed = 1
    sample_sizes = 250, 4000
    bandwidth = pi_over_log_n      # or a number
    replications = 100
    grid_min = -5
    grid_max = 5
    grid_count = 201
    p = 1
    output = mise.csv

Recognised keys are listed in ``KEYS``; unknown keys are errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import ModelSpec

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "KEYS"]

KEYS = {
    "kind": "experiment type: mise, bias or condexp",
    "model": "log_ar1 or garch",
    "mu": "log_ar1 stationary mean of log sigma^2",
    "a": "log_ar1 autoregression coefficient",
    "tau": "log_ar1 innovation standard deviation",
    "alpha0": "garch constant",
    "alpha": "garch ARCH coefficients alpha_1..alpha_p",
    "beta": "garch coefficients beta_1..beta_q",
    "burn_in": "discarded initial steps",
    "seed": "base seed; replication r uses seed + r",
    "sample_sizes": "ascending list of n",
    "bandwidth": "pi_over_log_n or a fixed h",
    "replications": "Monte Carlo replications per n",
    "grid_min": "grid lower end (log sigma^2 units)",
    "grid_max": "grid upper end",
    "grid_count": "grid points per axis",
    "p": "dimension (1 or 2)",
    "output": "CSV output path",
    "workers": "parallel worker processes",
    "h_values": "bias: bandwidths to test",
    "paths": "bias/condexp: number of Monte Carlo paths M",
    "path_length": "bias/condexp: length n of each path",
    "m_values": "condexp: list of M for the 1/sqrt(M) scaling study",
    "h": "condexp: bandwidth",
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    sample_sizes: tuple = (500,)
    bandwidth: object = "pi_over_log_n"
    replications: int = 100
    grid: tuple = (-5.0, 5.0, 201)
    p: int = 1
    output_path: str | None = None
    kind: str = "mise"
    workers: int = 1
    h_values: tuple = (0.6, 0.45, 0.3)
    paths: int = 5000
    path_length: int = 500
    m_values: tuple = (250, 1000, 4000)
    h: float = 0.5
    source_text: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("sample_sizes must be non-empty and strictly ascending")
        object.__setattr__(self, "sample_sizes", sizes)
        if self.p not in (1, 2):
            raise ConfigError("p must be 1 or 2")
        lo, hi, count = self.grid
        if not hi > lo or int(count) < 2:
            raise ConfigError("grid needs grid_max > grid_min and grid_count >= 2")
        if self.kind not in ("mise", "bias", "condexp"):
            raise ConfigError(f"unknown kind {self.kind!r}")

    @property
    def base_seed(self) -> int:
        return self.model.seed

    def axis(self) -> np.ndarray:
        lo, hi, count = self.grid
        return np.linspace(float(lo), float(hi), int(count))

    def bandwidth_for(self, n: int) -> float:
        from .deconv import default_bandwidth
        if self.bandwidth == "pi_over_log_n":
            return default_bandwidth(n)
        return float(self.bandwidth)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text; errors carry the offending line number."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        raw[key] = (value, lineno)

    def get(key, conv, default):
        if key not in raw:
            return default
        value, lineno = raw[key]
        try:
            return conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})", lineno) from None

    model_name = get("model", str, "log_ar1").replace("-", "_")
    seed = get("seed", int, 0)
    try:
        if model_name == "log_ar1":
            model = ModelSpec(
                "log_ar1",
                ar1_mean=get("mu", float, 0.0),
                ar1_coeff=get("a", float, 0.6),
                ar1_innov_sd=get("tau", float, 0.8),
                seed=seed,
                burn_in=get("burn_in", int, 0),
            )
        elif model_name == "garch":
            model = ModelSpec(
                "garch",
                garch_alpha=(get("alpha0", float, 0.1),) + get("alpha", _floats, (0.1,)),
                garch_beta=get("beta", _floats, (0.8,)),
                seed=seed,
                burn_in=get("burn_in", int, 1000),
            )
        else:
            raise ValueError(f"unknown model {model_name!r}")
    except ValueError as exc:
        line = raw.get("model", (None, None))[1]
        raise ConfigError(str(exc), line) from None

    bandwidth = get("bandwidth", str, "pi_over_log_n").replace("-", "_")
    if bandwidth not in ("pi_over_log_n", "pi_log_n"):
        bandwidth = get("bandwidth", float, None)
    else:
        bandwidth = "pi_over_log_n"

    try:
        return ExperimentConfig(
            model=model,
            sample_sizes=get("sample_sizes", _ints, (500,)),
            bandwidth=bandwidth,
            replications=get("replications", int, 100),
            grid=(get("grid_min", float, -5.0), get("grid_max", float, 5.0),
                  get("grid_count", int, 201)),
            p=get("p", int, 1),
            output_path=get("output", str, None),
            kind=get("kind", str, "mise"),
            workers=get("workers", int, 1),
            h_values=get("h_values", _floats, (0.6, 0.45, 0.3)),
            paths=get("paths", int, 5000),
            path_length=get("path_length", int, 500),
            m_values=get("m_values", _ints, (250, 1000, 4000)),
            h=get("h", float, 0.5),
            source_text=text,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
