"""Bessel J0, J1, J2 and Struve H0, H1 for nonnegative real arguments.

Three regimes:

* ``x <= SERIES_MAX``: ascending power series (all terms small, no
  cancellation problem).
* ``SERIES_MAX < x <= ASYMPTOTIC_MIN``: Miller backward recurrence for
  J_n, normalised with J0 + 2*sum(J_2k) = 1.  The Struve functions come
  from their Neumann expansions in Bessel functions,

      H0 = (4/pi) sum_k J_{2k+1} / (2k+1)
      H1 = (2/pi) (1 - J0) + (4/pi) sum_{k>=1} J_{2k} / (4k^2 - 1),

  which converge once n exceeds x and carry no cancellation.
* ``x > ASYMPTOTIC_MIN``: Hankel expansions for J, Y and the asymptotic
  series of H_n - Y_n, truncated at the smallest term.

All functions accept scalars or arrays and return the same shape.
"""

from __future__ import annotations

import math

import numpy as np

SERIES_MAX = 4.0
ASYMPTOTIC_MIN = 60.0


class DomainError(ValueError):
    pass


def _prepare(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("argument must be finite")
    if np.any(arr < 0):
        raise DomainError("argument must be >= 0")
    return arr


def _finish(out, x):
    if np.ndim(x) == 0:
        return float(out.reshape(()))
    return out


# ---------------------------------------------------------------- series

def _bessel_series(n, x):
    half = x / 2.0
    term = half**n / math.factorial(n)
    total = term.copy()
    h2 = half * half
    for m in range(1, 40):
        term = -term * h2 / (m * (m + n))
        total += term
    return total


def _struve_series(n, x):
    # H_n(x) = sum_m (-1)^m (x/2)^(2m+n+1) / (Gamma(m+3/2) Gamma(m+n+3/2))
    half = x / 2.0
    term = half ** (n + 1) / (math.gamma(1.5) * math.gamma(n + 1.5))
    total = term.copy()
    h2 = half * half
    for m in range(1, 40):
        term = -term * h2 / ((m + 0.5) * (m + n + 0.5))
        total += term
    return total


# ---------------------------------------------------------------- Miller

def _miller(x):
    """Return J0, J1, J2, H0, H1 for a 1-D array of x in the middle range."""
    xmax = float(x.max())
    nstart = int(xmax + 30 + 12 * xmax ** (1 / 3))
    nstart += nstart % 2

    t_next = np.zeros_like(x)           # t_{n+1}
    t_cur = np.full_like(x, 1e-30)      # t_n
    norm = np.zeros_like(x)             # t_0 + 2 sum t_2k
    odd_sum = np.zeros_like(x)          # sum t_{2k+1}/(2k+1)
    even_sum = np.zeros_like(x)         # sum_{k>=1} t_{2k}/(4k^2-1)
    keep = {}

    n = nstart
    while True:
        if n in (0, 1, 2):
            keep[n] = t_cur.copy()
        if n % 2 == 0:
            norm += t_cur if n == 0 else 2.0 * t_cur
            if n > 0:
                k = n // 2
                even_sum += t_cur / (4.0 * k * k - 1.0)
        else:
            odd_sum += t_cur / n
        if n == 0:
            break
        t_prev = (2.0 * n / x) * t_cur - t_next
        t_next, t_cur = t_cur, t_prev
        n -= 1
        big = np.abs(t_cur) > 1e250
        if big.any():
            s = np.where(big, 1e-250, 1.0)
            t_cur *= s
            t_next *= s
            norm *= s
            odd_sum *= s
            even_sum *= s
            for key in keep:
                keep[key] *= s

    j0 = keep[0] / norm
    j1 = keep[1] / norm
    j2 = keep[2] / norm
    h0 = (4.0 / math.pi) * odd_sum / norm
    h1 = (2.0 / math.pi) * (1.0 - j0) + (4.0 / math.pi) * even_sum / norm
    return j0, j1, j2, h0, h1


# ---------------------------------------------------------------- asymptotic

def _hankel(n, x):
    mu = 4.0 * n * n
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, 30):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if k % 2 == 1:
            q += term * (-1) ** ((k - 1) // 2)
        else:
            p += term * (-1) ** (k // 2)
    chi = x - (n / 2.0 + 0.25) * math.pi
    amp = np.sqrt(2.0 / (math.pi * x))
    j = amp * (p * np.cos(chi) - q * np.sin(chi))
    y = amp * (p * np.sin(chi) + q * np.cos(chi))
    return j, y


def _struve_minus_y(n, x):
    # H_n - Y_n ~ (1/pi) sum_k Gamma(k+1/2) / Gamma(n+1/2-k) (x/2)^(n-2k-1)
    total = np.zeros_like(x)
    for k in range(25):
        coeff = math.gamma(k + 0.5) / math.gamma(n + 0.5 - k)
        total += coeff * (x / 2.0) ** (n - 2 * k - 1)
    return total / math.pi


# ---------------------------------------------------------------- dispatch

def _all(x):
    x = _prepare(x)
    flat = x.ravel()
    out = np.zeros((5, flat.size))
    small = flat <= SERIES_MAX
    large = flat > ASYMPTOTIC_MIN
    mid = ~small & ~large
    if small.any():
        xs = flat[small]
        out[0, small] = _bessel_series(0, xs)
        out[1, small] = _bessel_series(1, xs)
        out[2, small] = _bessel_series(2, xs)
        out[3, small] = _struve_series(0, xs)
        out[4, small] = _struve_series(1, xs)
    if mid.any():
        out[:, mid] = np.array(_miller(flat[mid]))
    if large.any():
        xl = flat[large]
        j0, y0 = _hankel(0, xl)
        j1, y1 = _hankel(1, xl)
        j2, _ = _hankel(2, xl)
        out[0, large] = j0
        out[1, large] = j1
        out[2, large] = j2
        out[3, large] = y0 + _struve_minus_y(0, xl)
        out[4, large] = y1 + _struve_minus_y(1, xl)
    return x, out.reshape((5,) + x.shape)


def bessel_j0(x):
    x, out = _all(x)
    return _finish(out[0], x)


def bessel_j1(x):
    x, out = _all(x)
    return _finish(out[1], x)


def bessel_j2(x):
    x, out = _all(x)
    return _finish(out[2], x)


def struve_h0(x):
    x, out = _all(x)
    return _finish(out[3], x)


def struve_h1(x):
    x, out = _all(x)
    return _finish(out[4], x)


def bessel_struve(x):
    """Return ``(J0, J1, J2, H0, H1)`` evaluated together (one pass)."""
    x, out = _all(x)
    return tuple(_finish(out[i], x) for i in range(5))
