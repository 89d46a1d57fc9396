"""Compiled inner loops.

Everything here works on plain numpy arrays so the public modules can keep
their dataclass interfaces.  All kernels are ``nogil`` so replicate-level
threads can overlap.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
_BIG = 1e150
_SMALL = 1e-150


@njit(cache=True, nogil=True)
def szego_eval(alpha, z):
    """Szego recursion for Phi_n(z), Phi_n^*(z) at a single point.

    Returns ``(phi, phistar, log_scale)`` with the true values equal to
    ``phi * exp(log_scale)``.  The pair is rescaled jointly whenever either
    modulus leaves ``[1e-150, 1e150]``.
    """
    phi = 1.0 + 0.0j
    phistar = 1.0 + 0.0j
    log_scale = 0.0
    for k in range(alpha.shape[0]):
        a = alpha[k]
        zphi = z * phi
        phi_new = zphi - a.conjugate() * phistar
        phistar = phistar - a * zphi
        phi = phi_new
        big = max(abs(phi), abs(phistar))
        if big > _BIG or (big < _SMALL and big > 0.0):
            phi /= big
            phistar /= big
            log_scale += math.log(big)
    return phi, phistar, log_scale


@njit(cache=True, nogil=True)
def szego_log_abs(alpha, zs):
    out = np.empty(zs.shape[0])
    for i in range(zs.shape[0]):
        phi, _, log_scale = szego_eval(alpha, zs[i])
        mod = abs(phi)
        if mod == 0.0:
            out[i] = -np.inf
        else:
            out[i] = math.log(mod) + log_scale
    return out


@njit(cache=True, nogil=True)
def szego_log_abs_circle(alpha, m):
    """log|Phi_n(e^{ih_t})| on the grid h_t = 2 pi t / m.

    Steps outer, grid points inner.  |Phi| grows by at most a factor 2 per
    step on the circle, so checking the renormalisation every 16 steps is
    enough to stay far from overflow.
    """
    phi = np.empty(m, dtype=np.complex128)
    ps = np.empty(m, dtype=np.complex128)
    zs = np.empty(m, dtype=np.complex128)
    scale = np.zeros(m)
    for t in range(m):
        h = TWO_PI * t / m
        zs[t] = complex(math.cos(h), math.sin(h))
        phi[t] = 1.0
        ps[t] = 1.0
    n = alpha.shape[0]
    for k in range(n):
        a = alpha[k]
        ac = a.conjugate()
        for t in range(m):
            zp = zs[t] * phi[t]
            p = ps[t]
            phi[t] = zp - ac * p
            ps[t] = p - a * zp
        if (k & 15) == 15 or k == n - 1:
            for t in range(m):
                p = phi[t]
                q = ps[t]
                b = max(p.real * p.real + p.imag * p.imag, q.real * q.real + q.imag * q.imag)
                if b > _BIG * _BIG or (b < _SMALL * _SMALL and b > 0.0):
                    s = math.sqrt(b)
                    phi[t] = p / s
                    ps[t] = q / s
                    scale[t] += math.log(s)
    out = np.empty(m)
    for t in range(m):
        v = abs(phi[t])
        out[t] = -np.inf if v == 0.0 else math.log(v) + scale[t]
    return out


@njit(cache=True, nogil=True)
def prufer_phase(alpha, theta):
    """Lifted phase psi(theta) of B_{n-1}(e^{i theta}) and its derivative.

    B_k = z Phi_k / Phi_k^* obeys B_{k+1} = z (B_k - conj a_k) / (1 - a_k B_k);
    with |a_k| < 1 the argument increment is continuous in theta, so psi is a
    continuous, strictly increasing lift with total winding 2 pi n.
    """
    z = complex(math.cos(theta), math.sin(theta))
    u = z
    psi = theta
    dpsi = 1.0
    for k in range(alpha.shape[0] - 1):
        au = alpha[k] * u
        w = 1.0 - au
        wc = w.conjugate()
        r = 1.0 / (w.real * w.real + w.imag * w.imag)
        q = au * wc * r
        dpsi = 1.0 + dpsi * (1.0 + 2.0 * q.real)
        psi = theta + psi - 2.0 * math.atan2(w.imag, w.real)
        u = z * u * wc * wc * r
        u /= abs(u)
    return psi, dpsi


@njit(cache=True, nogil=True)
def real_charpoly(alpha, theta, c):
    """F = Re(c e^{-in theta/2} Phi_n(e^{i theta})) and dF/dtheta, up to one positive scale.

    With c chosen from Phi_n(0), F is real and equals +-prod_k 2 sin((theta - theta_k)/2).
    """
    n = alpha.shape[0]
    z = complex(math.cos(theta), math.sin(theta))
    phi = 1.0 + 0.0j
    ps = 1.0 + 0.0j
    dphi = 0.0j
    dps = 0.0j
    for k in range(n):
        a = alpha[k]
        ac = a.conjugate()
        zp = z * phi
        dzp = phi + z * dphi
        phi = zp - ac * ps
        ps = ps - a * zp
        dphi = dzp - ac * dps
        dps = dps - a * dzp
        if (k & 15) == 15:
            b = max(abs(phi), abs(ps), abs(dphi), abs(dps))
            if b > _BIG or b < _SMALL:
                phi /= b
                ps /= b
                dphi /= b
                dps /= b
    w = c * complex(math.cos(-0.5 * n * theta), math.sin(-0.5 * n * theta))
    return (w * phi).real, (w * (1j * z * dphi - 0.5j * n * phi)).real


@njit(cache=True, nogil=True)
def _polish_phase(alpha, a, b, lo, hi, tgt, tol):
    x = a + (b - a) * (tgt - lo) / (hi - lo)
    for _ in range(200):
        f, d = prufer_phase(alpha, x)
        f -= tgt
        if f < 0.0:
            a = x
        else:
            b = x
        xn = x - f / d
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        done = abs(xn - x) < tol or b - a < tol
        x = xn
        if done:
            break
    return x


@njit(cache=True, nogil=True)
def _polish_charpoly(alpha, a, b, fa, fb, c, tol):
    x = a + (b - a) * fa / (fa - fb)
    neg_a = fa < 0.0
    for _ in range(200):
        f, d = real_charpoly(alpha, x, c)
        if f == 0.0:
            break
        if (f < 0.0) == neg_a:
            a = x
        else:
            b = x
        xn = x - f / d if d != 0.0 else 0.5 * (a + b)
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        done = abs(xn - x) < tol or b - a < tol
        x = xn
        if done:
            break
    return x


@njit(cache=True, nogil=True)
def cmv_roots(alpha, m, tol):
    """Zeros of the paraorthogonal Phi_n on [0, 2pi), ascending.

    Roots solve psi(theta) = arg(conj a_{n-1}) + 2 pi k with psi monotone, so
    an m-cell grid of psi counts the roots in every cell exactly.  Cells with
    one root are polished by safeguarded Newton on the real-normalised Phi_n
    (smooth on the scale of the root spacing); cells with several roots fall
    back to Newton on psi itself.  Returns fewer than n values only if
    monotonicity failed numerically; the caller checks the count.
    """
    n = alpha.shape[0]
    last = alpha[n - 1]
    target0 = math.atan2(-last.imag, last.real)
    # Phi_n(0) = -conj(a_{n-1}) fixes e^{i sum theta_k}; c undoes that phase
    half = -0.5 * (target0 + (n + 1) * math.pi)
    c = complex(math.cos(half), math.sin(half)) * (1j) ** (-n)
    grid = np.empty(m + 1)
    fgrid = np.empty(m + 1)
    for t in range(m + 1):
        grid[t] = prufer_phase(alpha, TWO_PI * t / m)[0]
        fgrid[t] = real_charpoly(alpha, TWO_PI * t / m, c)[0]
    out = np.empty(n)
    cnt = 0
    for t in range(m):
        lo = grid[t]
        hi = grid[t + 1]
        k = math.ceil((lo - target0) / TWO_PI)
        kend = math.ceil((hi - target0) / TWO_PI)
        a = TWO_PI * t / m
        b = TWO_PI * (t + 1) / m
        if kend - k == 1 and fgrid[t] * fgrid[t + 1] < 0.0 and cnt < n:
            out[cnt] = _polish_charpoly(alpha, a, b, fgrid[t], fgrid[t + 1], c, tol)
            cnt += 1
            continue
        while k < kend and cnt < n:
            out[cnt] = _polish_phase(alpha, a, b, lo, hi, target0 + TWO_PI * k, tol)
            cnt += 1
            k += 1
    return out[:cnt]


@njit(cache=True, nogil=True)
def log_abs_field(angles, m):
    """sum_k log|1 - e^{i(theta_k - h_t)}| on the m-grid, -inf on exact hits."""
    out = np.empty(m)
    for t in range(m):
        h = TWO_PI * t / m
        s = 0.0
        for k in range(angles.shape[0]):
            v = abs(2.0 * math.sin(0.5 * (angles[k] - h)))
            if v == 0.0:
                s = -np.inf
                break
            s += math.log(v)
        out[t] = s
    return out


@njit(cache=True, nogil=True)
def top_coefficients(alpha, J):
    """Top J+1 coefficients of Phi_n, as e_0 = 1, e_1, ..., e_J of prod(1 - lambda w).

    Phi_n(z) = z^n + c_1 z^{n-1} + ...; since Phi_n is monic,
    w^n Phi_n(1/w) = 1 + c_1 w + c_2 w^2 + ...  Only the leading coefficients
    of Phi_k and Phi_k^* enter the recursion for the leading coefficients,
    so the cost is O(nJ).  Entries beyond the degree are zero.
    """
    # top[i] = coefficient of z^{k-i} in Phi_k; stop[i] likewise for Phi_k^*
    top = np.zeros(J + 1, dtype=np.complex128)
    stop = np.zeros(J + 1, dtype=np.complex128)
    top[0] = 1.0
    stop[0] = 1.0
    for k in range(alpha.shape[0]):
        a = alpha[k]
        ac = a.conjugate()
        # descending i so stop[i-1] is still the old value
        for i in range(min(J, k + 1), 0, -1):
            zp = top[i]
            ps = stop[i - 1]
            top[i] = zp - ac * ps
            stop[i] = ps - a * zp
        stop[0] = -a * top[0]
    return top


@njit(cache=True, nogil=True)
def series_log(e, J):
    """L_1..L_J of log(1 + e_1 w + e_2 w^2 + ...), via j L_j = j e_j - sum i L_i e_{j-i}."""
    L = np.zeros(J + 1, dtype=np.complex128)
    for j in range(1, J + 1):
        s = j * e[j]
        for i in range(1, j):
            s -= i * L[i] * e[j - i]
        L[j] = s / j
    return L


@njit(cache=True, nogil=True)
def levinson_logdet(c, n):
    """log det of the Hermitian Toeplitz matrix T[i, j] = c[i - j], c[-k] = conj(c[k]).

    Durbin's recursion; the prediction-error variances E_k are the LDL pivots,
    so log det = sum_k log E_k.  Returns (logdet, k) where k >= 0 flags the
    first non-positive pivot (logdet is then meaningless).
    """
    a = np.zeros(n, dtype=np.complex128)
    tmp = np.zeros(n, dtype=np.complex128)
    e = c[0].real
    if not e > 0.0:
        return 0.0, 0
    logdet = math.log(e)
    for k in range(1, n):
        acc = c[k]
        for i in range(1, k):
            acc += a[i] * c[k - i]
        g = -acc / e
        shrink = 1.0 - (g.real * g.real + g.imag * g.imag)
        if not shrink > 0.0:
            return logdet, k
        for i in range(1, k):
            tmp[i] = a[i] + g * a[k - i].conjugate()
        for i in range(1, k):
            a[i] = tmp[i]
        a[k] = g
        e *= shrink
        logdet += math.log(e)
    return logdet, -1
