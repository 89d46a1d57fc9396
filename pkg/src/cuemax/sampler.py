"""Haar (CUE) spectra by two independent routes.

``sample_haar_qr`` draws a Ginibre matrix, takes its QR factorisation with
the phase correction of Mezzadri, and diagonalises the unitary factor.  This
is the reference sampler.

``sample_haar_cmv`` draws Verblunsky coefficients with the Killip-Nenciu law
for beta = 2; the characteristic polynomial of the associated CMV matrix is
then available through the Szego recursion in O(n) per point, and the
eigenangles through a monotone phase recursion in O(n^2).  It is validated
distributionally against the QR route and exists to reach large n.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels

TWO_PI = 2.0 * math.pi

#: Bumped whenever a sampler changes the number or order of draws it consumes.
STREAM_LAYOUT_VERSION = "cue-stream-v1"


class InvalidDimension(ValueError):
    pass


@dataclass(frozen=True)
class SeedTag:
    seed: Optional[int]
    replicate: Optional[int]
    method: str


@dataclass(frozen=True)
class EigenangleSample:
    n: int
    angles: np.ndarray
    seed_tag: SeedTag = field(default=SeedTag(None, None, "given"), compare=False)

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.shape != (self.n,):
            raise ValueError(f"expected {self.n} angles, got shape {a.shape}")
        object.__setattr__(self, "angles", a)

    @classmethod
    def from_angles(cls, angles, seed_tag: SeedTag | None = None) -> "EigenangleSample":
        a = np.sort(np.mod(np.asarray(angles, dtype=float), TWO_PI))
        # mod can return exactly 2 pi for tiny negative inputs
        a[a >= TWO_PI] = 0.0
        a.sort()
        return cls(len(a), a, seed_tag or SeedTag(None, None, "given"))

    def rotated(self, phi: float) -> "EigenangleSample":
        return EigenangleSample.from_angles(self.angles + phi, self.seed_tag)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.exp(1j * self.angles)


@dataclass(frozen=True)
class VerblunskyCoeffs:
    n: int
    alpha: np.ndarray
    seed_tag: SeedTag = field(default=SeedTag(None, None, "given"), compare=False)

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.complex128)
        if a.shape != (self.n,):
            raise ValueError(f"expected {self.n} coefficients, got shape {a.shape}")
        mod = np.abs(a)
        if np.any(mod[:-1] >= 1.0) or not math.isclose(mod[-1], 1.0, abs_tol=1e-12):
            raise ValueError("need |alpha_k| < 1 for k < n-1 and |alpha_{n-1}| = 1")
        object.__setattr__(self, "alpha", a)


def _check_n(n) -> int:
    if int(n) != n or n < 1:
        raise InvalidDimension(f"matrix dimension must be a positive integer, got {n!r}")
    return int(n)


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed n x n unitary matrix (QR of Ginibre, phase-corrected)."""
    n = _check_n(n)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_haar_qr(n: int, rng: np.random.Generator, *, seed_tag: SeedTag | None = None) -> EigenangleSample:
    u = haar_unitary(n, rng)
    angles = np.angle(np.linalg.eigvals(u))
    return EigenangleSample.from_angles(angles, seed_tag or SeedTag(None, None, "qr"))


def sample_haar_cmv(n: int, rng: np.random.Generator, *, seed_tag: SeedTag | None = None) -> VerblunskyCoeffs:
    """Verblunsky coefficients of a CUE spectral measure.

    |alpha_k|^2 ~ Beta(1, n-k-1) with uniform phase for k < n-1, and
    alpha_{n-1} uniform on the circle.  Draw order: the n-1 beta variates,
    then n phases.
    """
    n = _check_n(n)
    k = np.arange(n - 1)
    r2 = rng.beta(1.0, n - k - 1.0) if n > 1 else np.empty(0)
    phases = rng.uniform(0.0, TWO_PI, n)
    alpha = np.empty(n, dtype=np.complex128)
    alpha[:-1] = np.sqrt(r2) * np.exp(1j * phases[:-1])
    alpha[-1] = np.exp(1j * phases[-1])
    return VerblunskyCoeffs(n, alpha, seed_tag or SeedTag(None, None, "cmv"))


def charpoly_eval(coeffs: VerblunskyCoeffs, z):
    """Phi_n(z) by the Szego recursion; scalar in, scalar out.

    For large n the value can overflow even though the recursion itself is
    renormalised; use :func:`charpoly_log_abs` in that regime.
    """
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    out = np.empty(zs.shape, dtype=np.complex128)
    for i, zi in enumerate(zs):
        phi, _, log_scale = _kernels.szego_eval(coeffs.alpha, zi)
        out[i] = phi * math.exp(log_scale) if log_scale else phi
    return out[0] if np.ndim(z) == 0 else out


def charpoly_log_abs(coeffs: VerblunskyCoeffs, z) -> np.ndarray:
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    out = _kernels.szego_log_abs(coeffs.alpha, zs)
    return out[0] if np.ndim(z) == 0 else out


def cmv_matrix(coeffs: VerblunskyCoeffs) -> np.ndarray:
    """Dense CMV matrix L M; used only to cross-check the fast routines."""
    a = coeffs.alpha
    n = coeffs.n
    rho = np.sqrt(np.maximum(1.0 - np.abs(a) ** 2, 0.0))
    L = np.zeros((n, n), dtype=np.complex128)
    M = np.zeros((n, n), dtype=np.complex128)
    M[0, 0] = 1.0
    for k in range(n):
        target = L if k % 2 == 0 else M
        if k < n - 1:
            target[k:k + 2, k:k + 2] = [[np.conj(a[k]), rho[k]], [rho[k], -a[k]]]
        else:
            target[k, k] = np.conj(a[k])
    return L @ M


def cmv_eigenangles(coeffs: VerblunskyCoeffs, *, tol: float = 1e-14) -> EigenangleSample:
    """Eigenangles of the CMV matrix without forming it."""
    n = coeffs.n
    m = 2 * n + 2
    for _ in range(6):
        roots = _kernels.cmv_roots(coeffs.alpha, m, tol)
        if len(roots) == n:
            tag = coeffs.seed_tag
            return EigenangleSample.from_angles(roots, SeedTag(tag.seed, tag.replicate, "cmv"))
        m *= 4
    raise ArithmeticError(f"phase recursion located {len(roots)} of {n} roots")


def sample_eigenangles(n: int, rng: np.random.Generator, method: str = "qr", *,
                       seed_tag: SeedTag | None = None) -> EigenangleSample:
    if method == "qr":
        return sample_haar_qr(n, rng, seed_tag=seed_tag)
    if method == "cmv":
        return cmv_eigenangles(sample_haar_cmv(n, rng, seed_tag=seed_tag))
    raise ValueError(f"unknown sampling method {method!r}")


def write_angles_csv(sample: EigenangleSample, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "theta"])
        for k, th in enumerate(sample.angles, start=1):
            w.writerow([k, f"{th:.17g}"])


def read_angles_csv(path) -> EigenangleSample:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return EigenangleSample.from_angles([float(r["theta"]) for r in rows])
