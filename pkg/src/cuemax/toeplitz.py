"""Toeplitz determinants of circle symbols f(z) = e^{V(z)} |z - 1|^{2 alpha}.

By Heine's identity the n x n determinant det(f_hat[i - j]) equals
E prod_k f(e^{i theta_k}) over the n x n unitary group, so every
exponential moment of a linear statistic has an exact finite-n value here.

The exponent is stored so that the singular factor is |z - 1|^{2 alpha};
alpha = 1 gives |z - 1|^2 = 2 - z - 1/z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg
from scipy import special

from . import _kernels
from .field import floor_power, truncation_below

# zeta'(-1) = 1/12 - log A, A = Glaisher-Kinkelin constant
_LOG_GLAISHER = math.log(1.28242712910062263687534256886979)
ZETA_PRIME_MINUS_1 = 1.0 / 12.0 - _LOG_GLAISHER
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# B_{2k+2} / (4k(k+1)) for k = 1..4
_BARNES_TAIL = (-1.0 / 240.0, 1.0 / 1008.0, -1.0 / 1440.0, 1.0 / 1056.0)
_BARNES_SWITCH = 20.0


class ConditioningError(ArithmeticError):
    def __init__(self, index: int, msg: str | None = None):
        super().__init__(msg or f"non-positive pivot at index {index}")
        self.index = index


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolSpec:
    """f(z) = exp(v0 + sum_j V_j z^j) |z - 1|^{2 alpha}, j over a finite set of nonzero ints."""

    alpha: float = 0.0
    v_coeffs: Mapping[int, complex] = field(default_factory=dict)
    v0: float = 0.0
    real: bool = True

    def __post_init__(self):
        coeffs = {int(j): complex(v) for j, v in dict(self.v_coeffs).items() if v != 0}
        if 0 in coeffs:
            raise ValueError("put the constant term in v0, not v_coeffs")
        if self.real:
            for j, v in coeffs.items():
                w = coeffs.get(-j, 0.0)
                if abs(w - v.conjugate()) > 1e-12 * max(1.0, abs(v)):
                    raise ValueError(f"real symbol needs V_{{-{j}}} = conj(V_{j})")
        object.__setattr__(self, "v_coeffs", coeffs)

    @property
    def bandwidth(self) -> int:
        return max((abs(j) for j in self.v_coeffs), default=0)

    @classmethod
    def pure(cls, alpha: float) -> "SymbolSpec":
        return cls(alpha=alpha)

    @classmethod
    def uext(cls, n: int, lam: float, delta: float, alpha: float = 0.0, cutoff: int | None = None) -> "SymbolSpec":
        """V_j = lam / |j| for 1 <= |j| <= n0, n0 = floor(n^(1 - delta)) unless given."""
        n0 = floor_power(n, 1.0 - delta) if cutoff is None else cutoff
        coeffs = {}
        for j in range(1, n0 + 1):
            coeffs[j] = lam / j
            coeffs[-j] = lam / j
        return cls(alpha=alpha, v_coeffs=coeffs)

    @classmethod
    def windows(cls, windows, alpha: float = 0.0) -> "SymbolSpec":
        """Sum of windows (xi, h, a, b): V_{+-j} = (xi/2) e^{-+ijh} / j for a <= j <= b.

        Then sum_k V(e^{i theta_k}) = xi sum_{j=a}^{b} Re(e^{-ijh} p_j) / j.
        """
        coeffs: dict[int, complex] = {}
        real = True
        for xi, h, a, b in windows:
            if a < 1 or b < a:
                raise ValueError(f"bad window range [{a}, {b}]")
            real = real and np.isreal(xi)
            for j in range(a, b + 1):
                coeffs[j] = coeffs.get(j, 0.0) + 0.5 * xi * complex(math.cos(j * h), -math.sin(j * h)) / j
                coeffs[-j] = coeffs.get(-j, 0.0) + 0.5 * xi * complex(math.cos(j * h), math.sin(j * h)) / j
        return cls(alpha=alpha, v_coeffs=coeffs, real=bool(real))

    def v_at(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, complex(self.v0))
        for j, v in self.v_coeffs.items():
            out = out + v * np.exp(1j * j * theta)
        return out

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        sing = np.abs(2.0 * np.sin(0.5 * theta)) ** (2.0 * self.alpha)
        val = np.exp(self.v_at(theta)) * sing
        return val.real if self.real else val


@dataclass(frozen=True)
class ToeplitzResult:
    n: int
    logdet: float
    method: str  # exact-LDL | exact-LU | selberg | prediction
    phase: float = 0.0  # arg of the determinant for complex symbols


def _check_alpha(alpha: float) -> None:
    if not alpha > -0.5:
        raise ValueError(f"|z-1|^(2 alpha) is not integrable for alpha = {alpha} <= -1/2")


def _next_pow2(x: int) -> int:
    return 1 << max(0, int(x - 1).bit_length())


def default_q(n: int, spec: SymbolSpec) -> int:
    return _next_pow2(max(4 * (n + spec.bandwidth), 1 << 12))


def fh_coefficients(alpha: float, kmax: int) -> np.ndarray:
    """Fourier coefficients g_0..g_kmax of |z - 1|^{2 alpha} (g_{-k} = g_k).

    g_0 = Gamma(1 + 2a) / Gamma(1 + a)^2 and g_{k+1} = g_k (k - a) / (k + 1 + a).
    """
    _check_alpha(alpha)
    g = np.empty(kmax + 1)
    g[0] = math.exp(math.lgamma(1.0 + 2.0 * alpha) - 2.0 * math.lgamma(1.0 + alpha))
    for k in range(kmax):
        g[k + 1] = g[k] * (k - alpha) / (k + 1.0 + alpha)
    return g


def symbol_fourier(spec: SymbolSpec, b: int, q: int | None = None, method: str = "hybrid") -> np.ndarray:
    """f_hat_k for k = -b..b (index k + b).

    ``method="fft"`` samples f at q half-shifted circle points and takes one
    FFT; the |z-1|^{2 alpha} factor has coefficients decaying like k^{-1-2 alpha},
    so the aliasing error is of order q^{-1-2 alpha}.  ``"hybrid"`` (default)
    takes only e^V by FFT, where aliasing is negligible for band-limited V, and
    convolves with the closed-form coefficients of the singular factor.
    """
    _check_alpha(spec.alpha)
    if q is None:
        q = default_q(b, spec)
    if q & (q - 1) or q < 4 * (b + 1):
        raise ValueError(f"q must be a power of two >= 4(b+1), got {q}")
    if method == "fft":
        theta = 2.0 * math.pi * (np.arange(q) + 0.5) / q
        coef = np.fft.fft(spec(theta)) / q
        ks = np.arange(-b, b + 1)
        # undo the half-cell shift: sample point t carries e^{-ik pi / q}
        out = coef[ks % q] * np.exp(-1j * math.pi * ks / q)
    elif method == "hybrid":
        theta = 2.0 * math.pi * np.arange(q) / q
        ev = np.fft.fft(np.exp(spec.v_at(theta))) / q
        if spec.alpha == 0.0:
            out = ev[np.arange(-b, b + 1) % q]
        else:
            mags = np.abs(ev)
            keep = mags > 1e-18 * mags.max()
            ls = np.arange(q)
            ls[ls > q // 2] -= q
            L = int(np.abs(ls[keep]).max())
            e_l = ev[np.arange(-L, L + 1) % q]
            g = fh_coefficients(spec.alpha, b + L)
            g_full = np.concatenate([g[:0:-1], g])  # indices -(b+L)..b+L
            out = np.convolve(g_full, e_l, mode="valid")
    else:
        raise ValueError(f"unknown method {method!r}")
    if spec.real:
        out = 0.5 * (out + np.conj(out[::-1]))
    return out


def toeplitz_matrix(spec: SymbolSpec, n: int, **kw) -> np.ndarray:
    c = symbol_fourier(spec, n - 1, **kw)
    col = c[n - 1:]
    row = c[n - 1::-1]
    return scipy.linalg.toeplitz(col, row)


def toeplitz_logdet(spec: SymbolSpec, n: int, q: int | None = None, method: str = "hybrid") -> ToeplitzResult:
    """log det (f_hat[i - j])_{0 <= i, j < n}.

    Levinson for real (Hermitian) symbols; dense pivoted LU otherwise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if q is None:
        q = default_q(n, spec)
    c = symbol_fourier(spec, n - 1, q=q, method=method)
    if spec.real:
        col = np.ascontiguousarray(c[n - 1:])
        logdet, bad = _kernels.levinson_logdet(col, n)
        if bad >= 0:
            raise ConditioningError(bad)
        return ToeplitzResult(n, float(logdet), "exact-LDL")
    T = scipy.linalg.toeplitz(c[n - 1:], c[n - 1::-1])
    lu, _piv = scipy.linalg.lu_factor(T)
    d = np.diagonal(lu)
    if np.any(d == 0):
        raise ConditioningError(int(np.argmin(np.abs(d))), "singular Toeplitz matrix")
    sign = np.prod(d / np.abs(d)) * (-1) ** int(np.sum(_piv != np.arange(n)))
    return ToeplitzResult(n, float(np.log(np.abs(d)).sum()), "exact-LU", float(np.angle(sign)))


def selberg_logdet(n: int, alpha: float) -> float:
    """log prod_{k=1}^{n} Gamma(k) Gamma(k + 2a) / Gamma(k + a)^2.

    Each factor is poch(k + a, a) / poch(k, a), which avoids cancelling
    large log-gamma values.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not alpha > -0.5:
        raise ValueError(f"Gamma pole: k + 2 alpha <= 0 at k = 1 for alpha = {alpha}")
    if alpha == 0.0:
        return 0.0
    k = np.arange(1, n + 1, dtype=float)
    return float(np.sum(np.log(special.poch(k + alpha, alpha)) - np.log(special.poch(k, alpha))))


def _barnes_asymptotic(z: float) -> float:
    """log G(1 + z) by its large-z expansion with four Bernoulli corrections."""
    lz = math.log(z)
    s = 0.5 * z * z * lz - 0.75 * z * z + _HALF_LOG_2PI * z - lz / 12.0 + ZETA_PRIME_MINUS_1
    zi2 = 1.0 / (z * z)
    p = zi2
    for c in _BARNES_TAIL:
        s += c * p
        p *= zi2
    return s


def _log_g1p(z: float) -> float:
    """log G(1 + z) for z > -1."""
    if z <= -1.0:
        raise ValueError("log G(1+z) needs z > -1")
    if z >= _BARNES_SWITCH:
        return _barnes_asymptotic(z)
    # G(2 + w) = Gamma(1 + w) G(1 + w): step up to the asymptotic regime
    steps = math.ceil(_BARNES_SWITCH - z)
    w = z + np.arange(1, steps + 1)
    return _barnes_asymptotic(z + steps) - float(np.sum(special.gammaln(w)))


def barnes_log_g(z: float) -> float:
    """log G(1 + z) for z > 0, G the Barnes G-function (G(1) = G(2) = 1)."""
    if not z > 0:
        raise ValueError("barnes_log_g needs z > 0")
    return _log_g1p(float(z))


def selberg_logdet_barnes(n: int, alpha: float) -> float:
    """The same product through Barnes G: large-n closed form."""
    return (_log_g1p(n + 2 * alpha) + _log_g1p(n) - 2 * _log_g1p(n + alpha)
            - _log_g1p(2 * alpha) + 2 * _log_g1p(alpha))


def sigma2_v(spec: SymbolSpec) -> complex | float:
    """sum_{j >= 1} j V_j V_{-j}."""
    s = 0.0
    for j, v in spec.v_coeffs.items():
        if j > 0:
            s = s + j * v * spec.v_coeffs.get(-j, 0.0)
    s = complex(s)
    return s.real if spec.real else s


def wiener_hopf_b(spec: SymbolSpec) -> tuple[complex, complex]:
    """(log b_+(1), log b_-(1)) = (sum_{k >= 1} V_k, sum_{k <= -1} V_k)."""
    plus = sum((v for j, v in spec.v_coeffs.items() if j > 0), 0j)
    minus = sum((v for j, v in spec.v_coeffs.items() if j < 0), 0j)
    return complex(plus), complex(minus)


def _check_support(spec: SymbolSpec, n: int, delta: float | None) -> None:
    if delta is None:
        return
    if not 0.0 < delta < 1.0:
        raise PreconditionError("delta must lie in (0, 1)")
    limit = n ** (1.0 - delta)
    if spec.bandwidth > limit * (1 + 1e-12):
        raise PreconditionError(f"coefficient support {spec.bandwidth} exceeds n^(1-delta) = {limit:.6g}")


def gaussian_laplace_check(spec: SymbolSpec, n: int, delta: float | None = None) -> tuple[float, float, float]:
    """(log D_n(e^V), sigma^2(V), gap) for a smooth real potential with V_0 = 0."""
    if spec.alpha != 0.0:
        raise PreconditionError("Gaussian check needs alpha = 0")
    if not spec.real:
        raise PreconditionError("Gaussian check needs a real-valued potential")
    _check_support(spec, n, delta)
    logdet = toeplitz_logdet(spec, n).logdet
    s2 = sigma2_v(spec)
    return logdet, s2, abs(logdet - s2 - n * spec.v0)


def fh_prediction(spec: SymbolSpec, n: int, delta: float | None = None) -> float:
    """n V_0 + sum k V_k V_{-k} - alpha (log b_+(1) + log b_-(1)) + log D_n(|z-1|^{2 alpha})."""
    _check_alpha(spec.alpha)
    _check_support(spec, n, delta)
    bp, bm = wiener_hopf_b(spec)
    val = n * spec.v0 + sigma2_v(spec) - spec.alpha * (bp + bm) + selberg_logdet(n, spec.alpha)
    return float(np.real(val))


def tail_symbol(n: int, delta: float, a: float) -> SymbolSpec:
    """Symbol whose Toeplitz determinant is E exp(2a sum_{j >= n^(1-delta)} -Re p_j / j).

    2a times the tail sum equals 2a log|P(1)| + 2a sum_{j < n^(1-delta)} Re p_j / j,
    i.e. |z-1|^{2a} times e^V with V_{+-j} = a / j below the cutoff.
    """
    J = truncation_below(n, delta)
    return SymbolSpec.uext(n, a, delta, alpha=a, cutoff=J)


def tail_exp_moment_exact(n: int, delta: float, a: float) -> float:
    """Exact log E exp(2a * tail sum) through Heine; finite only for a > -1/2."""
    return toeplitz_logdet(tail_symbol(n, delta, a), n).logdet


def tail_exp_moment_mc(n: int, delta: float, a: float, replicates: int, *, seed: int = 0,
                       method: str = "cmv", workers: int = 1) -> float:
    """Monte Carlo log-mean-exp of 2a * (full field at 0 - field truncated below n^(1-delta))."""
    if abs(a) > 3:
        raise ValueError("|a| must be <= 3")
    if replicates < 1000:
        raise ValueError("need at least 1000 replicates")
    from .montecarlo import ExperimentConfig, run_experiment

    cfg = ExperimentConfig(statistic="tailmoment", n=n, replicates=replicates, seed=seed,
                           delta=delta, a=a, method=method)
    return run_experiment(cfg, workers=workers).extra["log_mean_exp"]
