"""Multiscale (branching random walk) decomposition of the truncated field.

Fine increments W_l collect the Fourier modes ceil(e^{l-1}) <= j < ceil(e^l);
coarse increments Y_m collect floor(N^{(m-1)/K}) < j <= floor(N^{m/K}), with
Y_1 starting at j = 1 so that the Y ranges partition 1..N.  By the trace
covariance identity E p_j conj(p_k) = min(j, N) [j = k], every increment has
an exact covariance, computed here by finite sums.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .field import TraceVector, eval_folded, fold_coefficients, fourier_coefficients

_DIRECT_MAX = 1 << 17
_EM_START = 64
_EM_TERMS = 8
_BERN = special.bernoulli(2 * _EM_TERMS)


class GridMismatchError(ValueError):
    pass


def w_range(ell: int) -> tuple[int, int]:
    """Inclusive j-range of W_ell: ceil(e^{ell-1}) <= j < ceil(e^ell)."""
    if ell < 1:
        raise ValueError("scale index must be >= 1")
    return math.ceil(math.exp(ell - 1)), math.ceil(math.exp(ell)) - 1


def _floor_pow(n: int, num: int, den: int) -> int:
    """floor(n^(num/den)) exactly, via integer roots."""
    # candidate from floats, corrected with exact integer arithmetic
    r = int(math.floor(n ** (num / den)))
    while (r + 1) ** den <= n ** num:
        r += 1
    while r > 0 and r ** den > n ** num:
        r -= 1
    return r


def y_range(m: int, K: int, N: int) -> tuple[int, int]:
    """Inclusive j-range of Y_m; Y_1 starts at j = 1."""
    if not 1 <= m <= K:
        raise ValueError(f"coarse index must lie in 1..{K}")
    lo = 1 if m == 1 else _floor_pow(N, m - 1, K) + 1
    return lo, _floor_pow(N, m, K)


def half_harmonic(lo: int, hi: int) -> float:
    """(1/2) sum_{j=lo}^{hi} 1/j, the variance of an increment over [lo, hi]."""
    return 0.5 * cos_harmonic(lo, hi, 0.0)


def circle_distance(delta: float) -> float:
    d = math.fmod(abs(delta), 2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def _em_sum(a: int, b: int, delta: float) -> float:
    """Euler-Maclaurin for sum_{j=a}^{b} cos(j delta)/j; needs a >= 64 and delta <= 1."""
    def deriv(x, p):
        # d^p/dx^p of e^{i delta x} / x
        s = 0j
        for r in range(p + 1):
            s += math.comb(p, r) * (1j * delta) ** (p - r) * (-1) ** r * math.factorial(r) / x ** (r + 1)
        return complex(math.cos(delta * x), math.sin(delta * x)) * s

    if delta == 0.0:
        integral = math.log(b / a)
    else:
        integral = special.sici(b * delta)[1] - special.sici(a * delta)[1]
    total = integral + 0.5 * (math.cos(a * delta) / a + math.cos(b * delta) / b)
    for k in range(1, _EM_TERMS + 1):
        coef = _BERN[2 * k] / math.factorial(2 * k)
        total += coef * (deriv(b, 2 * k - 1) - deriv(a, 2 * k - 1)).real
    return total


def _direct_sum(a: int, b: int, delta: float) -> float:
    total = 0.0
    for start in range(a, b + 1, _DIRECT_MAX):
        j = np.arange(start, min(start + _DIRECT_MAX, b + 1), dtype=float)
        total += float(np.sum(np.cos(j * delta) / j)) if delta else float(np.sum(1.0 / j))
    return total


def cos_harmonic(a: int, b: int, delta: float) -> float:
    """sum_{j=a}^{b} cos(j delta)/j for 1 <= a; empty ranges give 0.

    Short ranges (and delta > 1) are summed directly; long ranges with
    small delta use Euler-Maclaurin on the tail starting at j = 64.
    """
    if b < a:
        return 0.0
    if b - a + 1 <= _DIRECT_MAX or delta > 1.0:
        return _direct_sum(a, b, delta)
    a0 = max(a, _EM_START)
    head = _direct_sum(a, a0 - 1, delta) if a0 > a else 0.0
    return head + _em_sum(a0, b, delta)


def exact_cov_W(ell: int, delta: float) -> float:
    """E W_ell(h) W_ell(h') = sum_{j in W-range} cos(j d)/(2j), d the circle distance.

    Exact whenever ceil(e^ell) - 1 <= N.
    """
    lo, hi = w_range(ell)
    return 0.5 * cos_harmonic(lo, hi, circle_distance(delta))


def exact_cov_Y(m: int, K: int, N: int, delta: float) -> float:
    lo, hi = y_range(m, K, N)
    d = circle_distance(delta)
    if d == 0.0:
        return half_harmonic(lo, hi)
    return 0.5 * cos_harmonic(lo, hi, d)


@dataclass(frozen=True)
class ScaleDecomposition:
    n: int
    K: int
    m: int
    W: np.ndarray  # [n_fine, m], row l-1 is W_l
    Y: np.ndarray  # [K, m], row m-1 is Y_m
    sigma2: np.ndarray  # exact Var Y_m
    meta: dict = field(default_factory=dict)

    @property
    def partial_sums(self) -> np.ndarray:
        """X_l = W_1 + ... + W_l, shape [n_fine, m]."""
        return np.cumsum(self.W, axis=0)


@dataclass(frozen=True)
class ExceedanceCount:
    K: int
    epsilon: float
    x: float
    z_count: int
    per_point_pass: np.ndarray  # bool[m]

    @property
    def bitmask(self) -> bytes:
        return np.packbits(self.per_point_pass).tobytes()

    def to_json(self) -> str:
        return json.dumps({"K": self.K, "epsilon": self.epsilon, "x": self.x, "Z": self.z_count})


def _increment(c: np.ndarray, lo: int, hi: int, m: int) -> np.ndarray:
    if hi < lo:
        return np.zeros(m)
    cc = c[:hi].copy()
    cc[:lo - 1] = 0.0
    return eval_folded(fold_coefficients(cc, m), "real")


def fine_scale_count(n: int, delta: float = 0.0) -> int:
    """Number of fine scales: l = 1..floor((1 - delta) log n), at least 1."""
    return max(1, int(math.floor((1.0 - delta) * math.log(n) + 1e-12)))


def decompose(traces: TraceVector, K: int, m: int, delta: float = 0.0) -> ScaleDecomposition:
    if K < 3:
        raise ValueError("need K >= 3 coarse scales (the first and last are dropped)")
    if m < 1:
        raise ValueError("grid size must be >= 1")
    N = traces.n
    if traces.j_max < N:
        raise ValueError(f"need traces up to j = N = {N}, have {traces.j_max}")
    c = fourier_coefficients(traces, N)
    L = fine_scale_count(N, delta)
    w_ranges = [w_range(ell) for ell in range(1, L + 1)]
    y_ranges = [y_range(k, K, N) for k in range(1, K + 1)]
    W = np.stack([_increment(c, lo, hi, m) for lo, hi in w_ranges])
    Y = np.stack([_increment(c, lo, hi, m) for lo, hi in y_ranges])
    sigma2 = np.array([half_harmonic(lo, hi) for lo, hi in y_ranges])
    meta = {"w_ranges": w_ranges, "y_ranges": y_ranges, "delta": delta,
            "w_truncation": w_ranges[-1][1]}
    return ScaleDecomposition(N, K, m, W, Y, sigma2, meta)


def increment_at(traces: TraceVector, lo: int, hi: int, h) -> np.ndarray:
    """sum_{j=lo}^{hi} -Re(e^{-ijh} p_j)/j at arbitrary angles (direct sum)."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    j = np.arange(lo, hi + 1)
    c = -traces.p[lo - 1:hi] / j
    return (c[None, :] * np.exp(-1j * np.outer(h, j))).real.sum(axis=1)


def level(N: int, K: int, epsilon: float) -> float:
    return (1.0 - epsilon / 2.0) * math.log(N) / K


def count_exceedances(dec: ScaleDecomposition, epsilon: float) -> ExceedanceCount:
    """Z = #{h in H_N : Y_m(h) >= x for m = 2..K-1}, x = (1 - eps/2) log N / K."""
    if dec.m != dec.n:
        raise GridMismatchError(f"exceedance count lives on H_N (m = N = {dec.n}), got m = {dec.m}")
    x = level(dec.n, dec.K, epsilon)
    ok = np.all(dec.Y[1:dec.K - 1] >= x, axis=0)
    return ExceedanceCount(dec.K, epsilon, x, int(ok.sum()), ok)


def second_moment_ratio(replicates) -> float:
    """(mean Z)^2 / mean(Z^2), the Paley-Zygmund lower bound for P(Z >= 1)."""
    z = np.array([r.z_count if isinstance(r, ExceedanceCount) else r for r in replicates], dtype=float)
    if len(z) < 2:
        raise ValueError("need at least 2 replicates")
    m2 = np.mean(z * z)
    if m2 == 0.0:
        raise ZeroDivisionError("all Z are zero: second-moment ratio undefined")
    return float(np.mean(z) ** 2 / m2)


def w_regime_check(ell: int, t: float, C: float = 10.0, decay_power: int = 2) -> dict:
    """Check the two covariance regimes of W_ell at distance e^{-t} (branching scale t).

    Before the branching scale (ell <= t): |cov(d) - cov(0)| <= C e^{ell - t}.
    After it (ell > t): |cov(d)| <= C e^{-decay_power (ell - t)}.
    """
    d = math.exp(-t)
    value = exact_cov_W(ell, d)
    if ell <= t:
        dev = abs(value - exact_cov_W(ell, 0.0))
        bound = C * math.exp(ell - t)
        regime = "correlated"
    else:
        dev = abs(value)
        bound = C * math.exp(-decay_power * (ell - t))
        regime = "decorrelated"
    return {"ell": ell, "t": t, "regime": regime, "value": value, "deviation": dev,
            "bound": bound, "ok": dev <= bound}


def y_regime_check(m: int, K: int, N: int, t: float, C: float = 10.0) -> dict | None:
    """Coarse covariance regimes; None when t falls in the transition band."""
    logn = math.log(N)
    d = math.exp(-t)
    rho = exact_cov_Y(m, K, N, d)
    if t <= (m - 1) * logn / K:
        dev, bound, regime = abs(rho), C * N ** (-(m - 1) / K) * math.exp(t), "decorrelated"
    elif t >= m * logn / K:
        s2 = exact_cov_Y(m, K, N, 0.0)
        dev, bound, regime = abs(rho - s2), C * (N ** (m / K) * math.exp(-t)) ** 2, "correlated"
    else:
        return None
    return {"m": m, "t": t, "regime": regime, "value": rho, "deviation": dev,
            "bound": bound, "ok": dev <= bound}


def write_decomposition_csv(dec: ScaleDecomposition, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scale", "range_lo", "range_hi", "sigma2"])
        for ell, (lo, hi) in enumerate(dec.meta["w_ranges"], start=1):
            w.writerow([f"W{ell}", lo, hi, f"{half_harmonic(lo, hi):.17g}"])
        for k, (lo, hi) in enumerate(dec.meta["y_ranges"], start=1):
            w.writerow([f"Y{k}", lo, hi, f"{dec.sigma2[k - 1]:.17g}"])
