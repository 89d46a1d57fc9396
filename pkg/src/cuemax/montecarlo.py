"""Seeded replicate execution and aggregation.

Replicate i of an experiment with seed s draws all of its randomness from
``derive_stream(s, i)``: a PCG64 generator seeded by
``SeedSequence(entropy=s, spawn_key=(i,))``.  SeedSequence hashes the pair
into the generator state with a fixed, platform-independent mixing function,
so a replicate's draws do not depend on which thread runs it or in what
order.  Per-replicate values are stored by index and summarised in that
order, so summaries are bit-identical for any worker count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import extremes, multiscale
from .field import (
    compute_traces,
    eval_charpoly_field,
    eval_full_field,
    real_field_at,
    traces_from_verblunsky,
    truncation_below,
)
from .sampler import (
    STREAM_LAYOUT_VERSION,
    SeedTag,
    charpoly_log_abs,
    cmv_eigenangles,
    sample_haar_cmv,
    sample_haar_qr,
)

STATISTICS = ("max", "highpoints", "freeenergy", "rigidity", "ks-clt", "covariance", "exceedance", "tailmoment")
METHODS = ("qr", "cmv")
QUANTILE_LEVELS = (5, 25, 50, 75, 95)

# grid factor m / N when the config leaves it unset
_DEFAULT_GRID = {"max": 8, "highpoints": 8, "freeenergy": 32, "rigidity": 8}


class ConfigError(ValueError):
    pass


def derive_stream(seed: int, index: int) -> np.random.Generator:
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    if index < 0:
        raise ValueError("replicate index must be >= 0")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(index,))))


@dataclass(frozen=True)
class ExperimentConfig:
    statistic: str
    n: int
    replicates: int = 1
    seed: int = 0
    grid_factor: int | None = None
    K: int = 8
    epsilon: float = 0.4
    gamma: float = 0.5
    beta_list: tuple = (1.0,)
    delta: float = 0.5
    method: str = "qr"
    scale: int = 4  # fine scale l for the covariance statistic
    lags: tuple = (0.0,)  # angular separations for the covariance statistic
    trace_js: tuple = (1, 2)
    a: float = 0.5  # exponent for the tail moment

    def __post_init__(self):
        object.__setattr__(self, "beta_list", tuple(float(b) for b in self.beta_list))
        object.__setattr__(self, "lags", tuple(float(x) for x in self.lags))
        object.__setattr__(self, "trace_js", tuple(int(j) for j in self.trace_js))

    @property
    def m(self) -> int:
        if self.statistic == "exceedance":
            return self.n
        g = self.grid_factor if self.grid_factor is not None else _DEFAULT_GRID.get(self.statistic, 8)
        return g * self.n

    def validate(self) -> None:
        if self.statistic not in STATISTICS:
            raise ConfigError(f"unknown statistic {self.statistic!r}; choose from {STATISTICS}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.grid_factor is not None and self.grid_factor < 1:
            raise ConfigError("grid_factor must be >= 1")
        st = self.statistic
        if st in ("max", "highpoints", "freeenergy", "rigidity", "ks-clt", "tailmoment") and self.n < 2:
            raise ConfigError(f"{st} needs n >= 2 (it divides by log n)")
        if st == "highpoints" and not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if st == "freeenergy":
            if not self.beta_list or min(self.beta_list) < 0:
                raise ConfigError("beta_list must be non-empty with beta >= 0")
            if self.m < 4 * self.n:
                raise ConfigError("free energy needs a grid of at least 4N points")
        if st == "exceedance":
            if self.K < 3:
                raise ConfigError("exceedance needs K >= 3")
            if self.epsilon <= 0:
                raise ConfigError("epsilon must be > 0")
        if st == "tailmoment":
            if not 0 < self.delta < 1:
                raise ConfigError("delta must lie in (0, 1)")
            if abs(self.a) > 3:
                raise ConfigError("|a| must be <= 3")
        if st == "covariance":
            if self.scale < 1 or math.ceil(math.exp(self.scale)) - 1 > self.n:
                raise ConfigError("covariance scale l needs 1 <= l and ceil(e^l) - 1 <= n")
            if not self.lags:
                raise ConfigError("lags must be non-empty")
            if any(j < 1 for j in self.trace_js):
                raise ConfigError("trace powers must be >= 1")


def quantiles_nearest_rank(values, levels=QUANTILE_LEVELS) -> list[float]:
    """Nearest-rank quantiles: the ceil(p n / 100)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    return [float(v[max(1, math.ceil(p * n / 100.0)) - 1]) for p in levels]


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean: float
    variance: float
    quantiles: list
    stderr: float
    extra: dict = field(default_factory=dict)
    values: np.ndarray | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_values(cls, values, extra: dict | None = None) -> "SummaryStats":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise ValueError("no values to summarise")
        n = v.size
        mean = float(np.mean(v))
        var = float(np.var(v, ddof=1)) if n > 1 else 0.0
        if not var >= 0:  # nan from infinite values
            var = math.nan
        return cls(n, mean, var, quantiles_nearest_rank(v), math.sqrt(var / n) if var == var else math.nan,
                   dict(extra or {}), v)

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "variance": self.variance,
                "quantiles": list(self.quantiles), "stderr": self.stderr, "extra": self.extra}


def merge(a: SummaryStats, b: SummaryStats) -> SummaryStats:
    """Combine two batches: Chan's pairwise update for mean and variance.

    Quantiles are recomputed from the pooled values when both batches carry them.
    """
    n = a.count + b.count
    d = b.mean - a.mean
    mean = a.mean + d * b.count / n
    m2 = a.variance * (a.count - 1) + b.variance * (b.count - 1) + d * d * a.count * b.count / n
    var = m2 / (n - 1) if n > 1 else 0.0
    if a.values is not None and b.values is not None:
        pooled = np.concatenate([a.values, b.values])
        q = quantiles_nearest_rank(pooled)
    else:
        pooled, q = None, []
    return SummaryStats(n, mean, var, q, math.sqrt(var / n), {}, pooled)


def ks_statistic(samples, cdf="normal") -> float:
    """Kolmogorov-Smirnov sup distance to the standard normal, or to a reference sample."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if isinstance(cdf, str):
        if cdf != "normal":
            raise ValueError(f"unknown reference cdf {cdf!r}")
        return float(stats.kstest(x, "norm").statistic)
    ref = np.asarray(cdf, dtype=float)
    if ref.size == 0:
        raise ValueError("empty reference sample")
    return float(stats.ks_2samp(x, ref).statistic)


def log_mean_exp(x) -> float:
    x = np.asarray(x, dtype=float)
    out = float(logsumexp(x) - math.log(x.size))
    if not math.isfinite(out):
        raise FloatingPointError("log-mean-exp is not finite")
    return out


# ---------------------------------------------------------------- replicates

class _Draw:
    """Lazy access to one replicate's random objects, in a fixed draw order."""

    def __init__(self, cfg: ExperimentConfig, index: int):
        self.cfg = cfg
        rng = derive_stream(cfg.seed, index)
        tag = SeedTag(cfg.seed, index, cfg.method)
        # the only random draws of a replicate happen here
        if cfg.method == "qr":
            self.sample = sample_haar_qr(cfg.n, rng, seed_tag=tag)
            self.coeffs = None
        else:
            self.coeffs = sample_haar_cmv(cfg.n, rng, seed_tag=tag)
            self.sample = None

    def angles(self):
        if self.sample is None:
            self.sample = cmv_eigenangles(self.coeffs)
        return self.sample

    def full_field(self, m):
        if self.coeffs is not None:
            return eval_charpoly_field(self.coeffs, m)
        return eval_full_field(self.sample, m, "real")

    def value_at_one(self) -> float:
        if self.coeffs is not None:
            return float(charpoly_log_abs(self.coeffs, 1.0 + 0j))
        return float(real_field_at(self.sample, 0.0)[0])

    def traces(self, j_max):
        if self.coeffs is not None:
            return traces_from_verblunsky(self.coeffs, j_max)
        return compute_traces(self.sample, j_max)


def _rep_max(d: _Draw) -> dict:
    r = extremes.field_max(d.full_field(d.cfg.m))
    return {"max": r.max_value}


def _rep_highpoints(d: _Draw) -> dict:
    r = extremes.high_points(d.full_field(d.cfg.m), d.cfg.gamma)
    ratio = math.log(r.leb) / math.log(d.cfg.n) if r.leb > 0 else -math.inf
    return {"log_leb_ratio": ratio, "leb": r.leb}


def _rep_freeenergy(d: _Draw) -> dict:
    grid = d.full_field(d.cfg.m)
    out = {}
    fs = []
    for b in d.cfg.beta_list:
        r = extremes.free_energy(grid, b)
        out[f"f[{b:g}]"] = r.f
        out[f"top_share[{b:g}]"] = r.top_share
        fs.append(r.f)
    order = np.argsort(d.cfg.beta_list, kind="stable")
    out["convex"] = float(extremes.is_convex(np.array(d.cfg.beta_list)[order], np.array(fs)[order]))
    return out


def _rep_rigidity(d: _Draw) -> dict:
    r = extremes.rigidity(d.angles(), d.cfg.m)
    ln = math.log(d.cfg.n)
    return {"normalized": r.normalized, "count_max_ratio": r.count_max / ln,
            "sup_dev": r.sup_dev, "count_max": r.count_max}


def _rep_ksclt(d: _Draw) -> dict:
    return {"z": d.value_at_one() / math.sqrt(0.5 * math.log(d.cfg.n))}


def _rep_covariance(d: _Draw) -> dict:
    cfg = d.cfg
    lo, hi = multiscale.w_range(cfg.scale)
    jm = max(hi, max(cfg.trace_js), 3)
    tr = d.traces(jm)
    w = multiscale.increment_at(tr, lo, hi, (0.0,) + cfg.lags)
    out = {f"prod[{lag:g}]": float(w[0] * w[i + 1]) for i, lag in enumerate(cfg.lags)}
    for j in cfg.trace_js:
        out[f"abs2_p[{j}]"] = float(abs(tr[j]) ** 2)
    c23 = tr[2] * np.conj(tr[3])
    out["re_p2p3"] = float(c23.real)
    out["im_p2p3"] = float(c23.imag)
    return out


def _rep_exceedance(d: _Draw) -> dict:
    cfg = d.cfg
    dec = multiscale.decompose(d.traces(cfg.n), cfg.K, cfg.n)
    return {"Z": float(multiscale.count_exceedances(dec, cfg.epsilon).z_count)}


def _rep_tailmoment(d: _Draw) -> dict:
    cfg = d.cfg
    J = truncation_below(cfg.n, cfg.delta)
    full = d.value_at_one()
    if J >= 1:
        # truncated field at h = 0: sum_{j <= J} -Re p_j / j
        p = d.traces(J).p
        full -= float(np.sum(-p.real / np.arange(1, J + 1)))
    return {"tail": full}


_REPLICATE: dict[str, tuple[Callable[[_Draw], dict], str]] = {
    "max": (_rep_max, "max"),
    "highpoints": (_rep_highpoints, "log_leb_ratio"),
    "freeenergy": (_rep_freeenergy, None),
    "rigidity": (_rep_rigidity, "normalized"),
    "ks-clt": (_rep_ksclt, "z"),
    "covariance": (_rep_covariance, None),
    "exceedance": (_rep_exceedance, "Z"),
    "tailmoment": (_rep_tailmoment, "tail"),
}


def replicate_values(cfg: ExperimentConfig, index: int) -> dict:
    """All per-replicate quantities of one replicate (pure function of cfg and index)."""
    fn, _ = _REPLICATE[cfg.statistic]
    return fn(_Draw(cfg, index))


def _primary_key(cfg: ExperimentConfig) -> str:
    key = _REPLICATE[cfg.statistic][1]
    if key is not None:
        return key
    if cfg.statistic == "freeenergy":
        return f"f[{cfg.beta_list[0]:g}]"
    return f"prod[{cfg.lags[0]:g}]"


def _statistic_extra(cfg: ExperimentConfig, cols: dict) -> dict:
    extra: dict = {}
    if cfg.statistic == "ks-clt":
        extra["ks"] = ks_statistic(cols["z"])
    elif cfg.statistic == "covariance":
        extra["exact_cov"] = {f"{lag:g}": multiscale.exact_cov_W(cfg.scale, lag) for lag in cfg.lags}
        extra["exact_abs2_p"] = {str(j): float(min(j, cfg.n)) for j in cfg.trace_js}
    elif cfg.statistic == "exceedance":
        z = cols["Z"]
        extra["x"] = multiscale.level(cfg.n, cfg.K, cfg.epsilon)
        extra["p_z_positive"] = float(np.mean(z >= 1))
        extra["pz_ratio"] = float(np.mean(z) ** 2 / np.mean(z * z)) if np.any(z) else None
    elif cfg.statistic == "tailmoment":
        w = 2.0 * cfg.a * cols["tail"]
        extra["log_mean_exp"] = log_mean_exp(w)
        # delta method: se(log mean) = sd(e^w) / (sqrt(R) mean(e^w))
        e = np.exp(w - w.max())
        extra["log_mean_exp_stderr"] = float(np.std(e, ddof=1) / (math.sqrt(len(e)) * np.mean(e))) if len(e) > 1 else 0.0
    elif cfg.statistic == "freeenergy":
        extra["convex_all"] = bool(np.all(cols["convex"] == 1.0))
        extra["top_cell_warnings"] = {f"{b:g}": int(np.sum(cols[f"top_share[{b:g}]"] > 0.5)) for b in cfg.beta_list}
    return extra


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Run cfg.replicates replicates and summarise the statistic's primary value.

    ``extra["columns"]`` carries a summary of every other per-replicate
    quantity; statistic-specific aggregates (KS distance, log-mean-exp, ...)
    sit alongside.
    """
    cfg.validate()
    idx = range(cfg.replicates)
    if workers <= 1:
        rows = [replicate_values(cfg, i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda i: replicate_values(cfg, i), idx))
    cols = {k: np.array([r[k] for r in rows], dtype=float) for k in rows[0]}
    key = _primary_key(cfg)
    extra = {"statistic": cfg.statistic, "primary": key, "n": cfg.n, "m": cfg.m,
             "columns": {k: SummaryStats.from_values(v).to_dict() for k, v in cols.items() if k != key}}
    extra.update(_statistic_extra(cfg, cols))
    return SummaryStats.from_values(cols[key], extra)


def statistic_json(summary: SummaryStats) -> dict:
    """{n, m, replicates, mean, stderr, quantiles} for one statistic."""
    return {"n": summary.extra.get("n"), "m": summary.extra.get("m"), "replicates": summary.count,
            "mean": summary.mean, "stderr": summary.stderr, "quantiles": list(summary.quantiles)}


def envelope(cfg: ExperimentConfig, summary: SummaryStats, wall_time: float) -> dict:
    return {"config": asdict(cfg), "summary": summary.to_dict(),
            "stream_layout_version": STREAM_LAYOUT_VERSION, "wall_time_seconds": wall_time}


def run_with_envelope(cfg: ExperimentConfig, workers: int = 1) -> tuple[SummaryStats, dict]:
    t0 = time.perf_counter()
    s = run_experiment(cfg, workers)
    return s, envelope(cfg, s, time.perf_counter() - t0)


def config_fields() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)
