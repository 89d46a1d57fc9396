"""Traces of powers and the log-characteristic-polynomial field on circle grids.

Conventions: the grid is ``h_t = 2 pi t / m``; the real field at h is
``sum_k log|1 - e^{i(theta_k - h)}| = sum_j -Re(e^{-ijh} p_j) / j`` and the
imaginary field is ``sum_k Im log(1 - e^{i(theta_k - h)})`` on the principal
branch, whose Fourier series is ``sum_j -Im(e^{-ijh} p_j) / j``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sampler import EigenangleSample, VerblunskyCoeffs

TWO_PI = 2.0 * math.pi
_TWO_PI_LD = np.longdouble("6.283185307179586476925286766559005768")

PARTS = ("real", "imaginary")


@dataclass(frozen=True)
class TraceVector:
    n: int
    j_max: int
    p: np.ndarray  # p[j - 1] = Tr U^j

    def __getitem__(self, j: int) -> complex:
        if not 1 <= j <= self.j_max:
            raise IndexError(j)
        return self.p[j - 1]


@dataclass(frozen=True)
class FieldGrid:
    m: int
    part: str
    truncation: int | None  # None means the full (untruncated) field
    values: np.ndarray
    n_neg_inf: int = 0
    n: int | None = None  # matrix dimension, when known

    @property
    def h(self) -> np.ndarray:
        return grid_points(self.m)


def grid_points(m: int) -> np.ndarray:
    return TWO_PI * np.arange(m) / m


def _check_part(part: str) -> None:
    if part not in PARTS:
        raise ValueError(f"part must be one of {PARTS}, got {part!r}")


def truncation_below(n: int, delta: float) -> int:
    """Largest j with j < n^(1-delta) (exact when n^(1-delta) is an integer)."""
    x = n ** (1.0 - delta)
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return int(r) - 1
    return math.ceil(x) - 1


def floor_power(n: int, e: float) -> int:
    """floor(n^e), robust to float error at exact integer powers."""
    x = n ** e
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return int(r)
    return math.floor(x)


def compute_traces(sample: EigenangleSample, j_max: int) -> TraceVector:
    """p_j = sum_k exp(i j theta_k) for j = 1..j_max.

    Each phase j*theta_k is reduced mod 2 pi in extended precision, so the
    error does not grow with j the way iterated multiplication would.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    theta = sample.angles.astype(np.longdouble)
    p = np.empty(j_max, dtype=np.complex128)
    chunk = max(1, (1 << 21) // max(sample.n, 1))
    for start in range(1, j_max + 1, chunk):
        js = np.arange(start, min(start + chunk, j_max + 1), dtype=np.longdouble)
        ph = np.fmod(np.multiply.outer(js, theta), _TWO_PI_LD).astype(np.float64)
        p[start - 1:start - 1 + len(js)] = np.exp(1j * ph).sum(axis=1)
    return TraceVector(sample.n, j_max, p)


def traces_from_verblunsky(coeffs: VerblunskyCoeffs, j_max: int) -> TraceVector:
    """p_j for j <= j_max from the leading coefficients of Phi_n (Newton's identities).

    log prod_k (1 - lambda_k w) = -sum_j p_j w^j / j, and the left side is the
    log of the reversed characteristic polynomial.  Cost O(n j_max); meant for
    j_max up to a few times n.  The secular coefficients e_j are O(1) in mean
    square, so the recursion loses little: about 1e-9 absolute at j = n = 1024.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    e = _kernels.top_coefficients(coeffs.alpha, j_max)
    L = _kernels.series_log(e, j_max)
    js = np.arange(1, j_max + 1)
    return TraceVector(coeffs.n, j_max, -js * L[1:])


def fourier_coefficients(traces: TraceVector, J: int) -> np.ndarray:
    """c_j = -p_j / j for j = 1..J (index j-1)."""
    if J < 1 or J > traces.j_max:
        raise ValueError(f"truncation J={J} outside 1..{traces.j_max}")
    return -traces.p[:J] / np.arange(1, J + 1)


def fold_coefficients(c: np.ndarray, m: int) -> np.ndarray:
    """Fold c_j (j = 1..J) into bins j mod m; exact on the m-grid."""
    folded = np.zeros(m, dtype=np.complex128)
    js = np.arange(1, len(c) + 1) % m
    np.add.at(folded, js, c)
    return folded


def eval_folded(folded: np.ndarray, part: str) -> np.ndarray:
    _check_part(part)
    s = np.fft.fft(folded)
    return s.real.copy() if part == "real" else s.imag.copy()


def eval_truncated_field(traces: TraceVector, J: int, m: int, part: str = "real") -> FieldGrid:
    _check_part(part)
    if m < 1:
        raise ValueError("grid size must be >= 1")
    c = fourier_coefficients(traces, J)
    return FieldGrid(m, part, J, eval_folded(fold_coefficients(c, m), part), 0, traces.n)


def eval_truncated_direct(traces: TraceVector, J: int, h, part: str = "real") -> np.ndarray:
    """Direct O(J) summation at arbitrary points; the oracle for the FFT path."""
    _check_part(part)
    c = fourier_coefficients(traces, J)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    js = np.arange(1, J + 1, dtype=np.longdouble)
    out = np.empty(h.shape)
    for i, hi in enumerate(h):
        ph = np.fmod(js * np.longdouble(hi), _TWO_PI_LD).astype(np.float64)
        terms = c * np.exp(-1j * ph)
        out[i] = terms.real.sum() if part == "real" else terms.imag.sum()
    return out


def eval_full_field(sample: EigenangleSample, m: int, part: str = "real") -> FieldGrid:
    _check_part(part)
    if m < 1:
        raise ValueError("grid size must be >= 1")
    if part == "real":
        values = _kernels.log_abs_field(sample.angles, m)
    else:
        values = imaginary_field_at(sample, grid_points(m))
    return FieldGrid(m, part, None, values, int(np.isneginf(values).sum()), sample.n)


def eval_charpoly_field(coeffs: VerblunskyCoeffs, m: int) -> FieldGrid:
    """Full real field log|Phi_n(e^{ih_t})| straight from Verblunsky coefficients."""
    values = _kernels.szego_log_abs_circle(coeffs.alpha, m)
    return FieldGrid(m, "real", None, values, int(np.isneginf(values).sum()), coeffs.n)


def real_field_at(sample: EigenangleSample, h) -> np.ndarray:
    h = np.atleast_1d(np.asarray(h, dtype=float))
    with np.errstate(divide="ignore"):
        return np.log(np.abs(2.0 * np.sin(0.5 * np.subtract.outer(sample.angles, h)))).sum(axis=0)


def imaginary_field_at(sample: EigenangleSample, h) -> np.ndarray:
    """sum_k Im log(1 - e^{i(theta_k - h)}) = sum_k (((theta_k - h) mod 2pi) - pi) / 2.

    With h reduced to [0, 2pi), (theta_k - h) mod 2pi = theta_k - h + 2pi [theta_k < h],
    so the sum only needs a sorted count.
    """
    h = np.mod(np.atleast_1d(np.asarray(h, dtype=float)), TWO_PI)
    below = np.searchsorted(sample.angles, h, side="left")
    n = sample.n
    return (sample.angles.sum() - n * h + TWO_PI * below - n * math.pi) / 2.0


def count_in_interval(sample: EigenangleSample, s: float, t: float) -> float:
    """#{theta_k in (s, t)} from imaginary-field differences, for -pi < s < t < pi."""
    if not -math.pi < s < t < math.pi:
        raise ValueError("need -pi < s < t < pi")
    fs, ft = imaginary_field_at(sample, [s, t])
    return sample.n * (t - s) / TWO_PI + (ft - fs) / math.pi


def write_field_csv(grid: FieldGrid, path) -> None:
    h = grid.h
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "h", "value"])
        for t in range(grid.m):
            v = grid.values[t]
            w.writerow([t, f"{h[t]:.17g}", "-inf" if np.isneginf(v) else f"{v:.17g}"])
