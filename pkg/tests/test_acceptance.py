"""Acceptance criteria 1-14, one test each.

Every test records a single "PASS criterion k: ..." or "FAIL criterion k: ..."
line, printed together at the end of the session.  Tolerances are fixed
below and are not tuned to the outcome.  Statistical criteria use one seed,
chosen before any of them was run.
"""

import json
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from cuemax import extremes, multiscale
from cuemax.field import compute_traces, eval_truncated_direct, eval_truncated_field, fold_coefficients, fourier_coefficients
from cuemax.montecarlo import ExperimentConfig, derive_stream, run_experiment
from cuemax.sampler import sample_haar_qr
from cuemax.toeplitz import (
    SymbolSpec,
    fh_prediction,
    gaussian_laplace_check,
    selberg_logdet,
    toeplitz_logdet,
)

SEED = 2026
WORKERS = 1
RERUN_WORKERS = 3

# statistical runs, cached for the reproducibility criterion
_CONFIGS = {
    "c7": ExperimentConfig(statistic="covariance", n=64, replicates=10_000, seed=SEED, method="qr",
                           trace_js=(1, 2, 32, 64, 128)),
    "c8": ExperimentConfig(statistic="max", n=1024, replicates=200, seed=SEED, grid_factor=8, method="cmv"),
    "c9": ExperimentConfig(statistic="highpoints", n=4096, replicates=100, seed=SEED, gamma=0.5, grid_factor=8,
                           method="cmv"),
    "c10": ExperimentConfig(statistic="freeenergy", n=1024, replicates=100, seed=SEED, grid_factor=32,
                            beta_list=(1.0, 4.0, 0.0, 0.5, 1.5, 2.0, 2.5, 3.0, 3.5), method="cmv"),
    "c11": ExperimentConfig(statistic="rigidity", n=1024, replicates=100, seed=SEED, method="cmv"),
    "c12": ExperimentConfig(statistic="ks-clt", n=1024, replicates=2000, seed=SEED, method="cmv"),
    "c13": ExperimentConfig(statistic="tailmoment", n=1024, replicates=2000, seed=SEED, delta=0.5, a=0.5,
                            method="cmv"),
}
TREND_NS = (64, 256, 1024, 4096)
TREND_REPLICATES = 100
_RUNS: dict = {}


def _summary(key, workers=WORKERS):
    if (key, workers) not in _RUNS:
        _RUNS[(key, workers)] = run_experiment(_CONFIGS[key], workers=workers)
    return _RUNS[(key, workers)]


def _trend(workers=WORKERS):
    if ("trend", workers) not in _RUNS:
        _RUNS[("trend", workers)] = extremes.max_trend(TREND_NS, TREND_REPLICATES, seed=SEED, method="cmv",
                                                        workers=workers)
    return _RUNS[("trend", workers)]


def report(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- deterministic

def test_criterion_01_selberg_heine():
    worst = 0.0
    for alpha in (0.25, 0.5, 1.0, 1.5):
        spec = SymbolSpec.pure(alpha)
        for n in range(1, 257):
            ld = toeplitz_logdet(spec, n).logdet
            worst = max(worst, abs(ld - selberg_logdet(n, alpha)) / max(1.0, abs(ld)))
    d2 = math.exp(toeplitz_logdet(SymbolSpec.pure(1.0), 2).logdet)
    d3 = math.exp(toeplitz_logdet(SymbolSpec.pure(1.0), 3).logdet)
    ok = worst < 1e-6 and abs(d2 - 3) < 1e-9 and abs(d3 - 4) < 1e-9
    report(1, ok, f"worst relative gap {worst:.3g} (< 1e-6); D_2 = {d2:.12g}, D_3 = {d3:.12g}")


def test_criterion_02_keating_snaith():
    worst = max(abs(selberg_logdet(n, 1.0) - math.log(n + 1)) for n in range(1, 513))
    report(2, worst < 1e-10, f"max |selberg_logdet(n, 1) - log(n + 1)| over n <= 512 = {worst:.3g} (< 1e-10)")


def test_criterion_03_gaussian_laplace():
    n, delta = 512, 0.5
    b = int(math.floor(n ** (1 - delta)))
    one = SymbolSpec.windows([(1.0, 0.0, 1, b)])
    two = SymbolSpec.windows([(1.0, 0.0, 1, b), (1.0, math.pi, 1, b)])
    g1 = gaussian_laplace_check(one, n, delta)[2]
    g2 = gaussian_laplace_check(two, n, delta)[2]
    report(3, g1 < 0.05 and g2 < 0.05, f"gaps {g1:.3g} (one point), {g2:.3g} (two points), window j <= {b} (< 0.05)")


def test_criterion_04_fisher_hartwig():
    n, alpha, delta = 256, 0.5, 0.5
    spec = SymbolSpec.uext(n, alpha, delta, alpha=alpha)
    pred, exact = fh_prediction(spec, n, delta), toeplitz_logdet(spec, n).logdet
    gap = abs(pred - exact)
    report(4, gap < 0.5, f"prediction {pred:.6f}, exact {exact:.6f}, gap {gap:.4g} (< 0.5)")


def test_criterion_05_covariance_regimes():
    # branching scale t; delta = e^{-t}; C = 10
    bad = []
    for ell in range(1, 21):
        for t in range(1, 21):
            r = multiscale.w_regime_check(ell, t, C=10.0, decay_power=2)
            if not r["ok"]:
                bad.append((ell, t, r["deviation"] / r["bound"]))
    worst = max((x[2] for x in bad), default=0.0)
    detail = (f"{len(bad)} of 400 (l, t) pairs violate the bound; first (l, t) = {bad[0][:2] if bad else None}, "
              f"worst deviation/bound = {worst:.3g}")
    report(5, not bad, detail)


def test_criterion_06_fft_vs_direct():
    rng = derive_stream(SEED, 0)
    worst_direct = worst_fold = 0.0
    for _ in range(300):
        n, J, m = int(rng.integers(1, 33)), int(rng.integers(1, 513)), int(rng.integers(1, 257))
        part = ("real", "imaginary")[int(rng.integers(2))]
        tr = compute_traces(sample_haar_qr(n, rng), J)
        g = eval_truncated_field(tr, J, m, part)
        worst_direct = max(worst_direct, float(np.max(np.abs(g.values - eval_truncated_direct(tr, J, g.h, part)))))
        c = fourier_coefficients(tr, J)
        naive = np.zeros(m, dtype=complex)
        for j in range(1, J + 1):
            naive[j % m] += c[j - 1]
        worst_fold = max(worst_fold, float(np.max(np.abs(fold_coefficients(c, m) - naive))))
    report(6, worst_direct < 1e-9 and worst_fold < 1e-12,
           f"300 cases: FFT vs direct {worst_direct:.3g} (< 1e-9), fold {worst_fold:.3g} (< 1e-12)")


# ---------------------------------------------------------------- statistical

def test_criterion_07_trace_covariance():
    s = _summary("c7")
    cols = s.extra["columns"]
    zs = {}
    for j in (1, 2, 32, 64, 128):
        c = cols[f"abs2_p[{j}]"]
        zs[j] = abs(c["mean"] - min(j, 64)) / c["stderr"]
    cross = abs(complex(cols["re_p2p3"]["mean"], cols["im_p2p3"]["mean"]))
    cross_se = math.hypot(cols["re_p2p3"]["stderr"], cols["im_p2p3"]["stderr"])
    ok = max(zs.values()) < 4 and cross < 4 * cross_se
    detail = ", ".join(f"j={j}: {cols[f'abs2_p[{j}]']['mean']:.3f} ({z:.2f} se)" for j, z in zs.items())
    report(7, ok, f"E|p_j|^2 {detail}; |E p_2 conj p_3| = {cross:.4f} = {cross / cross_se:.2f} se (< 4)")


def test_criterion_08_leading_order_max():
    s = _summary("c8")
    logn = math.log(1024)
    lo, hi = logn - 1.5 * math.log(logn), logn
    rows = _trend()
    trend_ok = extremes.trend_non_decreasing(rows, n_se=2.0)
    ok = lo <= s.mean <= hi and trend_ok
    tr = ", ".join(f"N={r['n']}: {r['mean']:.4f} +- {r['stderr']:.4f}" for r in rows)
    report(8, ok, f"mean max {s.mean:.4f} in [{lo:.2f}, {hi:.2f}]; max/log N trend {tr} "
                  f"({'non-decreasing' if trend_ok else 'decreasing'} within 2 se)")


def test_criterion_09_high_points():
    s = _summary("c9")
    med = s.quantiles[2]
    report(9, abs(med - (-0.25)) <= 0.2, f"median log Leb / log N = {med:.4f} (target -0.25 +- 0.2)")


def test_criterion_10_freezing():
    s = _summary("c10")
    f1 = s.mean
    f4 = s.extra["columns"]["f[4]"]["mean"]
    convex = s.extra["convex_all"]
    ok = abs(f1 - 1.25) <= 0.35 and abs(f4 - 4.0) <= 0.6 and convex
    report(10, ok, f"mean f(1) = {f1:.4f} (1.25 +- 0.35), mean f(4) = {f4:.4f} (4 +- 0.6), "
                   f"per-draw convexity on 9 betas: {convex}")


def test_criterion_11_rigidity():
    s = _summary("c11")
    cm = s.extra["columns"]["count_max_ratio"]["mean"]
    ok = 1.2 <= s.mean <= 2.8 and abs(cm - 1 / math.pi) <= 0.15
    report(11, ok, f"mean N sup|theta_k - 2 pi k/N| / log N = {s.mean:.4f} (in [1.2, 2.8]); "
                   f"mean count max / log N = {cm:.4f} (1/pi +- 0.15)")


def test_criterion_12_clt():
    ks = _summary("c12").extra["ks"]
    report(12, ks < 0.15, f"KS distance to N(0, 1) = {ks:.4f} (< 0.15)")


def test_criterion_13_tail_moment():
    s = _summary("c13")
    est = s.extra["log_mean_exp"]
    target = 0.5 ** 2 * 0.5 * math.log(1024)
    report(13, abs(est - target) <= 0.5, f"log-mean-exp {est:.4f}, a^2 delta log N = {target:.4f} (+- 0.5)")


# ---------------------------------------------------------------- reproducibility

def _fingerprint(summary) -> str:
    return json.dumps(summary.to_dict(), sort_keys=True) + repr(summary.values.tobytes())


def test_criterion_14_reproducibility():
    mismatched = []
    for key in _CONFIGS:
        first = _fingerprint(_summary(key))
        again = _fingerprint(run_experiment(_CONFIGS[key], workers=RERUN_WORKERS))
        if first != again:
            mismatched.append(key)
    if _trend() != _trend(RERUN_WORKERS):
        mismatched.append("trend")
    report(14, not mismatched, f"{len(_CONFIGS) + 1} statistical runs re-run with {RERUN_WORKERS} workers "
                               f"(first run {WORKERS}); bit-identical summaries except: {mismatched or 'none'}")
