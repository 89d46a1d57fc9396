"""Bundled verification suites behind ``cuemax verify``.

``identities`` is deterministic and fast.  ``statistical`` runs the Monte
Carlo bands at full size unless ``replicates`` overrides every replicate
count.  ``trend`` tabulates the normalised max over N and the mean
free-energy curve.

A check marked ``known`` is reported but does not affect the suite outcome:
it is a documented inequality that the exact numerics contradict.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import extremes, multiscale
from .field import compute_traces, eval_truncated_direct, eval_truncated_field, fold_coefficients, fourier_coefficients
from .montecarlo import ExperimentConfig, derive_stream, run_experiment
from .sampler import sample_haar_qr
from .toeplitz import (
    SymbolSpec,
    barnes_log_g,
    fh_prediction,
    gaussian_laplace_check,
    selberg_logdet,
    toeplitz_logdet,
)

SUITES = ("identities", "statistical", "trend")


@dataclass
class Check:
    name: str
    ok: bool
    detail: dict = field(default_factory=dict)
    known: bool = False  # documented deviation: reported, not gating

    def line(self) -> str:
        status = "PASS" if self.ok else ("FAIL (known deviation)" if self.known else "FAIL")
        bits = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"{status}  {self.name}" + (f"  [{bits}]" if bits else "")

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def passed(checks) -> bool:
    return all(c.ok or c.known for c in checks)


# ---------------------------------------------------------------- identities

def check_selberg_heine(n_max: int = 256, alphas=(0.25, 0.5, 1.0, 1.5)) -> Check:
    worst = 0.0
    for a in alphas:
        spec = SymbolSpec.pure(a)
        for n in range(1, n_max + 1):
            ld = toeplitz_logdet(spec, n).logdet
            worst = max(worst, abs(ld - selberg_logdet(n, a)) / max(1.0, abs(ld)))
    d2 = math.exp(toeplitz_logdet(SymbolSpec.pure(1.0), 2).logdet)
    d3 = math.exp(toeplitz_logdet(SymbolSpec.pure(1.0), 3).logdet)
    ok = worst < 1e-6 and abs(d2 - 3) < 1e-9 and abs(d3 - 4) < 1e-9
    return Check("selberg-heine", ok, {"worst_rel": worst, "D2": d2, "D3": d3})


def check_keating_snaith(n_max: int = 512) -> Check:
    worst = max(abs(selberg_logdet(n, 1.0) - math.log(n + 1)) for n in range(1, n_max + 1))
    return Check("keating-snaith", worst < 1e-10, {"worst_abs": worst})


def check_gaussian_laplace(n: int = 512, delta: float = 0.5) -> Check:
    b = int(math.floor(n ** (1 - delta)))
    one = SymbolSpec.windows([(1.0, 0.0, 1, b)])
    two = SymbolSpec.windows([(1.0, 0.0, 1, b), (1.0, math.pi, 1, b)])
    g1 = gaussian_laplace_check(one, n, delta)[2]
    g2 = gaussian_laplace_check(two, n, delta)[2]
    return Check("gaussian-laplace", g1 < 0.05 and g2 < 0.05, {"gap_one": g1, "gap_two": g2})


def check_fh_prediction(n: int = 256, alpha: float = 0.5, delta: float = 0.5) -> Check:
    spec = SymbolSpec.uext(n, alpha, delta, alpha=alpha)
    gap = abs(fh_prediction(spec, n, delta) - toeplitz_logdet(spec, n).logdet)
    return Check("fh-prediction", gap < 0.5, {"gap": gap})


def check_covariance_regimes(decay_power: int, C: float = 10.0) -> Check:
    bad = []
    for ell in range(1, 21):
        for t in range(1, 21):
            r = multiscale.w_regime_check(ell, t, C=C, decay_power=decay_power)
            if not r["ok"]:
                bad.append((ell, t))
    name = "covariance-regimes" if decay_power == 2 else f"covariance-regimes-power{decay_power}"
    return Check(name, not bad, {"violations": len(bad), "first": bad[0] if bad else None},
                 known=decay_power == 2)


def check_y_regimes(C: float = 10.0) -> Check:
    bad = 0
    for N in (1024, 4096, 2 ** 20):
        for K in (4, 8):
            for m in range(1, K + 1):
                for t in np.linspace(0.5, 20, 40):
                    r = multiscale.y_regime_check(m, K, N, float(t), C)
                    bad += r is not None and not r["ok"]
    return Check("coarse-covariance-regimes", bad == 0, {"violations": bad})


def check_fft_direct(cases: int = 200, seed: int = 0) -> Check:
    rng = derive_stream(seed, 0)
    worst_direct = worst_fold = 0.0
    for _ in range(cases):
        n, J, m = int(rng.integers(1, 33)), int(rng.integers(1, 513)), int(rng.integers(1, 257))
        part = "real" if rng.random() < 0.5 else "imaginary"
        tr = compute_traces(sample_haar_qr(n, rng), J)
        g = eval_truncated_field(tr, J, m, part)
        worst_direct = max(worst_direct, float(np.max(np.abs(g.values - eval_truncated_direct(tr, J, g.h, part)))))
        c = fourier_coefficients(tr, J)
        naive = np.zeros(m, dtype=complex)
        for j in range(1, J + 1):
            naive[j % m] += c[j - 1]
        worst_fold = max(worst_fold, float(np.max(np.abs(fold_coefficients(c, m) - naive))))
    return Check("fft-vs-direct", worst_direct < 1e-9 and worst_fold < 1e-12,
                 {"worst_direct": worst_direct, "worst_fold": worst_fold})


def check_barnes() -> Check:
    rec = max(abs(barnes_log_g(z) - barnes_log_g(z - 1) - math.lgamma(z)) for z in (5.5, 12.25, 40.0))
    from .toeplitz import _barnes_asymptotic

    down = _barnes_asymptotic(200.0) - sum(math.lgamma(w) for w in range(51, 201))
    asym = abs(_barnes_asymptotic(50.0) - down)
    return Check("barnes-g", rec < 1e-8 and asym < 1e-6 and abs(barnes_log_g(1.0)) < 1e-10,
                 {"recurrence": rec, "asymptotic_vs_recurrence": asym})


def identities(seed: int = 0) -> list[Check]:
    return [check_selberg_heine(), check_keating_snaith(), check_gaussian_laplace(), check_fh_prediction(),
            check_covariance_regimes(2), check_covariance_regimes(1), check_y_regimes(),
            check_fft_direct(seed=seed), check_barnes()]


# ---------------------------------------------------------------- statistical

def _reps(default: int, override: int | None) -> int:
    return default if override is None else override


def statistical(seed: int = 0, workers: int = 1, replicates: int | None = None) -> list[Check]:
    out = []
    js = (1, 2, 32, 64, 128)
    cov = run_experiment(ExperimentConfig(statistic="covariance", n=64, replicates=_reps(10_000, replicates),
                                          seed=seed, method="qr", trace_js=js), workers)
    cols = cov.extra["columns"]
    dev = {j: abs(cols[f"abs2_p[{j}]"]["mean"] - min(j, 64)) / cols[f"abs2_p[{j}]"]["stderr"] for j in js}
    cross = abs(complex(cols["re_p2p3"]["mean"], cols["im_p2p3"]["mean"]))
    cross_se = math.hypot(cols["re_p2p3"]["stderr"], cols["im_p2p3"]["stderr"])
    out.append(Check("trace-covariance", max(dev.values()) < 4 and cross < 4 * cross_se,
                     {"worst_z": max(dev.values()), "cross_over_se": cross / cross_se}))

    mx = run_experiment(ExperimentConfig(statistic="max", n=1024, replicates=_reps(200, replicates),
                                         seed=seed, method="cmv"), workers)
    lo, hi = math.log(1024) - 1.5 * math.log(math.log(1024)), math.log(1024)
    out.append(Check("max-band", lo <= mx.mean <= hi, {"mean": mx.mean, "band": f"[{lo:.3f}, {hi:.3f}]"}))

    hp = run_experiment(ExperimentConfig(statistic="highpoints", n=4096, replicates=_reps(100, replicates),
                                         seed=seed, gamma=0.5, method="cmv"), workers)
    med = hp.quantiles[2]
    out.append(Check("high-points", abs(med + 0.25) <= 0.2, {"median": med}))

    fe = run_experiment(ExperimentConfig(statistic="freeenergy", n=1024, replicates=_reps(100, replicates),
                                         seed=seed, beta_list=(1.0, 0.0, 0.5, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0),
                                         method="cmv"), workers)
    f1, f4 = fe.mean, fe.extra["columns"]["f[4]"]["mean"]
    out.append(Check("freezing", abs(f1 - 1.25) <= 0.35 and abs(f4 - 4) <= 0.6 and fe.extra["convex_all"],
                     {"f1": f1, "f4": f4, "convex_all": fe.extra["convex_all"]}))

    rg = run_experiment(ExperimentConfig(statistic="rigidity", n=1024, replicates=_reps(100, replicates),
                                         seed=seed, method="cmv"), workers)
    cm = rg.extra["columns"]["count_max_ratio"]["mean"]
    out.append(Check("rigidity", 1.2 <= rg.mean <= 2.8 and abs(cm - 1 / math.pi) <= 0.15,
                     {"normalized": rg.mean, "count_max_ratio": cm}))

    ks = run_experiment(ExperimentConfig(statistic="ks-clt", n=1024, replicates=_reps(2000, replicates),
                                         seed=seed, method="cmv"), workers)
    out.append(Check("clt-ks", ks.extra["ks"] < 0.15, {"ks": ks.extra["ks"]}))

    tm = run_experiment(ExperimentConfig(statistic="tailmoment", n=1024, replicates=_reps(2000, replicates),
                                         seed=seed, delta=0.5, a=0.5, method="cmv"), workers)
    target = 0.25 * 0.5 * math.log(1024)
    est = tm.extra["log_mean_exp"]
    out.append(Check("tail-moment", abs(est - target) <= 0.5, {"estimate": est, "target": target}))
    return out


# ---------------------------------------------------------------- trend

def trend(seed: int = 0, workers: int = 1, replicates: int | None = None) -> list[Check]:
    rows = extremes.max_trend([64, 256, 1024, 4096], _reps(100, replicates), seed=seed, workers=workers)
    ok_trend = extremes.trend_non_decreasing(rows)
    ok_cap = all(r["mean"] <= 1.1 for r in rows)
    betas = tuple(np.round(np.arange(0.0, 4.01, 0.5), 2))
    fe = run_experiment(ExperimentConfig(statistic="freeenergy", n=1024, replicates=_reps(50, replicates),
                                         seed=seed, beta_list=betas, method="cmv"), workers)
    curve = [fe.mean if b == betas[0] else fe.extra["columns"][f"f[{b:g}]"]["mean"] for b in betas]
    return [
        Check("max-trend", ok_trend and ok_cap,
              {"means": ", ".join(f"{r['n']}:{r['mean']:.4f}" for r in rows)}),
        Check("freezing-curve", extremes.is_convex(betas, curve) and fe.extra["convex_all"],
              {"f": ", ".join(f"{b:g}:{f:.3f}" for b, f in zip(betas, curve))}),
    ]


def run_suite(name: str, seed: int = 0, workers: int = 1, replicates: int | None = None) -> list[Check]:
    if name == "identities":
        return identities(seed)
    if name == "statistical":
        return statistical(seed, workers, replicates)
    if name == "trend":
        return trend(seed, workers, replicates)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
