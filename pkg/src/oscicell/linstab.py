"""Dispersion functions, growth rates and onset classification.

Everything here works with dimensionless wavenumbers ``kstar = rho*|k|``
and dimensionless parameters; growth rates are reported in units of
``Dx/rho**2``.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .params import DimensionlessParams
from .specfun import DomainError, bessel_struve

log = logging.getLogger(__name__)

PI = math.pi


class OnsetClass(str, enum.Enum):
    UI = "UI"
    AI = "AI"
    UGS = "UGS"
    ULS = "ULS"
    AGS = "AGS"
    ALS = "ALS"


class MarginalCase(ArithmeticError):
    """Parameters sit on a classification boundary (a growth rate ~ 0)."""


class BoundaryRangeError(ValueError):
    pass


class _ContinuumType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Continuum"


Continuum = _ContinuumType()

KSTAR_MAX = 4 * PI
SCAN_STEP = 1e-3
GOLDEN_TOL = 1e-8
LAMBDA_TOL = 1e-10
K_ZERO_TOL = 1e-6


def _check_k(kstar):
    k = np.asarray(kstar, dtype=float)
    if not np.all(np.isfinite(k)) or np.any(k < 0):
        raise DomainError("kstar must be finite and >= 0")
    return k


def _check_dim(dim):
    if dim not in (1, 2):
        raise DomainError(f"dim must be 1 or 2, got {dim!r}")


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


# ---------------------------------------------------------------- closed forms

def F(dim, kstar):
    _check_dim(dim)
    k = _check_k(kstar)
    if dim == 1:
        # 1 - cos k = 2 sin^2(k/2) avoids cancellation near 0
        out = 4 * PI * np.sin(k / 2) ** 2
    else:
        j0, j1, _, h0, h1 = bessel_struve(k)
        out = PI**3 * (np.asarray(j1) * h0 - np.asarray(j0) * h1)
        out = np.where(k == 0, 0.0, out)
    return _out(out, kstar)


def G(dim, kstar):
    _check_dim(dim)
    k = _check_k(kstar)
    if dim == 1:
        out = 2 * PI * np.sinc(k / PI)
    else:
        j1 = np.asarray(bessel_struve(k)[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(k < 1e-8, PI**2 * (1 - k * k / 8), 2 * PI**2 * j1 / np.where(k == 0, 1, k))
    return _out(out, kstar)


def dF(dim, kstar):
    """dF/dk*: 2 pi sin k (1D); 2 pi^2 J1(k) - F2(k)/k (2D)."""
    _check_dim(dim)
    k = _check_k(kstar)
    if dim == 1:
        out = 2 * PI * np.sin(k)
    else:
        j0, j1, _, h0, h1 = (np.asarray(a) for a in bessel_struve(k))
        comb = j1 * h0 - j0 * h1
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(k < 1e-8, 2 * PI**2 * k / 3, 2 * PI**2 * j1 - PI**3 * comb / np.where(k == 0, 1, k))
    return _out(out, kstar)


def dG(dim, kstar):
    """dG/dk*: 2 pi (k cos k - sin k)/k^2 (1D); -2 pi^2 J2(k)/k (2D)."""
    _check_dim(dim)
    k = _check_k(kstar)
    safe = np.where(k == 0, 1.0, k)
    if dim == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(k < 1e-3, 2 * PI * (-k / 3 + k**3 / 30),
                           2 * PI * (k * np.cos(k) - np.sin(k)) / safe**2)
    else:
        j2 = np.asarray(bessel_struve(k)[2])
        out = np.where(k < 1e-8, -PI**2 * k / 4, -2 * PI**2 * j2 / safe)
    return _out(out, kstar)


def F_second_at_zero(dim):
    _check_dim(dim)
    return 2 * PI if dim == 1 else 2 * PI**2 / 3


def G_second_at_zero(dim):
    _check_dim(dim)
    return -2 * PI / 3 if dim == 1 else -(PI**2) / 4


# ---------------------------------------------------------------- quadrature oracles

def _simpson(values, h, axis=-1):
    n = values.shape[axis] - 1
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return h / 3 * np.tensordot(values, w, axes=([axis], [0]))


def _converge(rule, n0, tol=1e-9, nmax=1 << 16):
    n = n0
    prev = rule(n)
    while True:
        n *= 2
        cur = rule(n)
        if abs(cur - prev) < tol or n >= nmax:
            return cur
        prev = cur


def _radial_sin(a):
    # integral_0^1 r sin(a r) dr
    a = np.asarray(a, dtype=float)
    small = np.abs(a) < 0.5
    safe = np.where(small, 1.0, a)
    out = (np.sin(safe) - safe * np.cos(safe)) / safe**2
    ser = np.zeros_like(a)
    term = a.copy()
    a2 = a * a
    for m in range(12):
        ser += term / (2 * m + 3)
        term = -term * a2 / ((2 * m + 2) * (2 * m + 3))
    return np.where(small, ser, out)


def _radial_cos(a):
    # integral_0^1 r cos(a r) dr
    a = np.asarray(a, dtype=float)
    small = np.abs(a) < 0.5
    safe = np.where(small, 1.0, a)
    out = (np.cos(safe) + safe * np.sin(safe) - 1) / safe**2
    ser = np.zeros_like(a)
    term = np.ones_like(a)
    a2 = a * a
    for m in range(12):
        ser += term / (2 * m + 2)
        term = -term * a2 / ((2 * m + 1) * (2 * m + 2))
    return np.where(small, ser, out)


def _quad_scalar(which, dim, k, method):
    if dim == 1:
        if which == "F":
            # pi k * int_{-1}^{1} sign(x) sin(k x) dx = 2 pi k int_0^1 sin(k x) dx
            def rule(n):
                x = np.linspace(0.0, 1.0, n + 1)
                return 2 * PI * k * _simpson(np.sin(k * x), 1.0 / n)
        else:
            def rule(n):
                x = np.linspace(0.0, 1.0, n + 1)
                return 2 * PI * _simpson(np.cos(k * x), 1.0 / n)
        return _converge(rule, max(16, 2 * int(k)))

    if method == "double":
        # literal double integral over the unit disk in polar coordinates
        if which == "F":
            def rule(n):
                r = np.linspace(0.0, 1.0, n + 1)[:, None]
                phi = np.linspace(0.0, 2 * PI, n + 1)[None, :]
                g = np.sin(k * r * np.cos(phi)) * r * np.cos(phi)
                return PI * k * _simpson(_simpson(g, 2 * PI / n), 1.0 / n)
        else:
            def rule(n):
                r = np.linspace(0.0, 1.0, n + 1)[:, None]
                phi = np.linspace(0.0, 2 * PI, n + 1)[None, :]
                g = np.cos(k * r * np.cos(phi)) * r
                return PI * _simpson(_simpson(g, 2 * PI / n), 1.0 / n)
        return _converge(rule, max(16, 4 * int(k)), nmax=1 << 12)

    # radial integral done in elementary closed form, Simpson over phi;
    # the phi integrand is even about 0 and pi, so use [0, pi] twice
    if which == "F":
        def rule(n):
            phi = np.linspace(0.0, PI, n + 1)
            c = np.cos(phi)
            return PI * k * 2 * _simpson(c * _radial_sin(k * c), PI / n)
    else:
        def rule(n):
            phi = np.linspace(0.0, PI, n + 1)
            return PI * 2 * _simpson(_radial_cos(k * np.cos(phi)), PI / n)
    return _converge(rule, max(16, 2 * int(k)))


def _quad(which, dim, kstar, method):
    _check_dim(dim)
    k = _check_k(kstar)
    if method not in ("radial", "double"):
        raise ValueError(f"unknown quadrature method {method!r}")
    if k.ndim == 0:
        return float(_quad_scalar(which, dim, float(k), method))
    out = np.array([_quad_scalar(which, dim, float(v), method) for v in k.ravel()])
    return out.reshape(k.shape)


def F_quad(dim, kstar, method="radial"):
    """Independent quadrature evaluation of F (Simpson, converged to 1e-9)."""
    return _quad("F", dim, kstar, method)


def G_quad(dim, kstar, method="radial"):
    """Independent quadrature evaluation of G (Simpson, converged to 1e-9)."""
    return _quad("G", dim, kstar, method)


# ---------------------------------------------------------------- dispersion

def sigma1(q: DimensionlessParams, kstar):
    k = _check_k(kstar)
    return _out(-(k**2) + 2 * q.J0_star * np.asarray(F(q.dim, k)), kstar)


def sigma3(q: DimensionlessParams, kstar):
    k = _check_k(kstar)
    f = np.asarray(F(q.dim, k))
    g = np.asarray(G(q.dim, k))
    return _out(-(k**2) - q.Dtheta_star + q.J_star * f + q.K_star * g, kstar)


@dataclass(frozen=True)
class DispersionPoint:
    kstar: float
    sigma1: float
    sigma3: float


def dispersion_point(q, kstar) -> DispersionPoint:
    return DispersionPoint(float(kstar), sigma1(q, kstar), sigma3(q, kstar))


@dataclass(frozen=True)
class OnsetReport:
    lambda1: float
    k1: float
    lambda2: float
    k2: float
    onset_class: OnsetClass | None = None
    cutoff_warning: bool = False


def _golden_max(fun, a, b, tol=GOLDEN_TOL):
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = (a + b) / 2
    return x, fun(x)


def _maximize(fun, grid, refine):
    values = np.asarray(fun(grid))
    i = int(np.argmax(values))  # argmax returns the first (smallest k) maximiser
    best_k, best = float(grid[i]), float(values[i])
    if refine and len(grid) > 1:
        lo = float(grid[max(i - 1, 0)])
        hi = float(grid[min(i + 1, len(grid) - 1)])
        k_ref, v_ref = _golden_max(lambda x: float(fun(x)), lo, hi)
        if v_ref > best:
            best_k, best = k_ref, v_ref
    rising = i == len(grid) - 1 and len(grid) > 1 and values[-1] > values[-2]
    return best, best_k, rising


def growth_rates(q: DimensionlessParams, L_over_rho=Continuum, kstar_max=KSTAR_MAX,
                 scan_step=SCAN_STEP) -> OnsetReport:
    """Maximal growth rates of the q=0 and |q|=1 sectors.

    ``L_over_rho`` selects the admissible wavenumbers 2*pi*m/(L/rho); pass
    ``Continuum`` to maximise over all real k* (grid scan plus golden
    section).  The continuum lambda1 scan starts at ``scan_step`` since the
    k*=0 mode is excluded and sigma1 -> 0 as k* -> 0.
    """
    if L_over_rho is Continuum:
        n = int(round(kstar_max / scan_step))
        grid3 = np.linspace(0.0, n * scan_step, n + 1)
        grid1 = grid3[1:]
        refine = True
    else:
        if not (isinstance(L_over_rho, (int, float)) and L_over_rho > 0):
            raise ValueError("L_over_rho must be > 0 or Continuum")
        spacing = 2 * PI / L_over_rho
        m = int(math.floor(kstar_max / spacing + 1e-12))
        grid3 = spacing * np.arange(m + 1)
        grid1 = grid3[1:]
        refine = False
        if grid1.size == 0:
            raise ValueError("no admissible nonzero wavenumber below kstar_max")

    lam1, k1, rise1 = _maximize(lambda k: sigma1(q, k), grid1, refine)
    lam2, k2, rise2 = _maximize(lambda k: sigma3(q, k), grid3, refine)
    if refine and k2 > 0 and sigma3(q, 0.0) >= lam2:
        k2, lam2 = 0.0, float(sigma3(q, 0.0))
    warn = rise1 or rise2
    if warn:
        log.warning("growth still rising at kstar_max=%g; possible scale mismatch", kstar_max)
    return OnsetReport(lambda1=float(lam1), k1=float(k1), lambda2=float(lam2), k2=float(k2),
                       cutoff_warning=bool(warn))


_TABLE = {
    (False, False, False): OnsetClass.UI,
    (False, False, True): OnsetClass.UI,
    (True, False, False): OnsetClass.AI,
    (True, False, True): OnsetClass.AI,
    (False, True, False): OnsetClass.UGS,
    (False, True, True): OnsetClass.ULS,
    (True, True, False): OnsetClass.AGS,
    (True, True, True): OnsetClass.ALS,
}


def classify_report(rep: OnsetReport, lambda_tol=LAMBDA_TOL, k_zero_tol=K_ZERO_TOL) -> OnsetReport:
    if abs(rep.lambda1) < lambda_tol or abs(rep.lambda2) < lambda_tol:
        raise MarginalCase(f"growth rate within {lambda_tol:g} of zero "
                           f"(lambda1={rep.lambda1:.3e}, lambda2={rep.lambda2:.3e})")
    cls = _TABLE[(rep.lambda1 > 0, rep.lambda2 > 0, rep.k2 > k_zero_tol)]
    return OnsetReport(rep.lambda1, rep.k1, rep.lambda2, rep.k2, cls, rep.cutoff_warning)


def classify_onset(q: DimensionlessParams, L_over_rho=Continuum, lambda_tol=LAMBDA_TOL,
                   k_zero_tol=K_ZERO_TOL, kstar_max=KSTAR_MAX) -> OnsetReport:
    return classify_report(growth_rates(q, L_over_rho, kstar_max=kstar_max), lambda_tol, k_zero_tol)


# ---------------------------------------------------------------- thresholds

def j_crit(dim):
    """Critical J0* for spontaneous aggregation, 1/F''(0)."""
    return 1.0 / F_second_at_zero(dim)


def boundary_parametric(dim, kappa):
    """Point (K*, J*) on the K* < 0 boundary where sigma3 touches zero at kappa."""
    kappa = np.asarray(kappa, dtype=float)
    f, g = np.asarray(F(dim, kappa)), np.asarray(G(dim, kappa))
    fp, gp = np.asarray(dF(dim, kappa)), np.asarray(dG(dim, kappa))
    det = g * fp - f * gp
    K = (kappa**2 * fp - 2 * kappa * f) / det
    J = (-(kappa**2) * gp + 2 * kappa * g) / det
    if kappa.ndim == 0:
        return float(K), float(J)
    return K, J


def f_boundary(dim, K_star, kappa_max=KSTAR_MAX, tol=1e-10):
    """J* boundary between the k2 = 0 / lambda2 < 0 region and the k2 > 0 region."""
    _check_dim(dim)
    if not math.isfinite(K_star):
        raise BoundaryRangeError("K_star must be finite")
    if K_star >= 0:
        return (2 - K_star * G_second_at_zero(dim)) / F_second_at_zero(dim)

    # bracketing scan in kappa, then bisection
    kap = np.linspace(1e-3, kappa_max, 4001)
    K, _ = boundary_parametric(dim, kap)
    if K[0] < K_star < 0:
        # closer to 0 than the first scan point (|K| ~ 1e-14): interpolate to the K* = 0 value
        j0 = 2 / F_second_at_zero(dim)
        return j0 + (K_star / K[0]) * (boundary_parametric(dim, kap[0])[1] - j0)
    diff = K - K_star
    ok = np.isfinite(diff)
    idx = np.nonzero(ok[:-1] & ok[1:] & (np.sign(diff[:-1]) != np.sign(diff[1:])))[0]
    if idx.size == 0:
        raise BoundaryRangeError(f"K*={K_star} outside the parametrised branch for dim={dim}")
    a, b = kap[idx[0]], kap[idx[0] + 1]
    fa = boundary_parametric(dim, a)[0] - K_star
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = boundary_parametric(dim, m)[0] - K_star
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return boundary_parametric(dim, 0.5 * (a + b))[1]


# ---------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepRow:
    K_star: float
    J_star: float
    lambda1: float
    lambda2: float
    k2: float
    onset_class: str


def _sweep_point(args):
    dim, J0_star, Dtheta_star, K, Jv, L_over_rho = args
    q = DimensionlessParams(J0_star=J0_star, J_star=Jv, K_star=K, Dtheta_star=Dtheta_star, dim=dim)
    rep = growth_rates(q, L_over_rho)
    try:
        cls = classify_report(rep).onset_class.value
    except MarginalCase:
        cls = "BOUNDARY"
    return SweepRow(K, Jv, rep.lambda1, rep.lambda2, rep.k2, cls)


def sweep_phase_diagram(dim, J0_star, K_values, J_values, Dtheta_star=0.0,
                        L_over_rho=Continuum, threads=1) -> list[SweepRow]:
    """Classify every (K*, J*) grid point; rows ordered by (K index, J index)."""
    tasks = [(dim, J0_star, Dtheta_star, float(K), float(Jv), L_over_rho)
             for K in K_values for Jv in J_values]
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


def fmt17(x):
    return format(float(x), ".17g")


SWEEP_HEADER = ("K_star", "J_star", "lambda1", "lambda2", "k2", "class")


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([fmt17(r.K_star), fmt17(r.J_star), fmt17(r.lambda1),
                    fmt17(r.lambda2), fmt17(r.k2), r.onset_class])
    return buf.getvalue()


def boundary_curves(dim, K_values):
    """Rows (K*, f_boundary, j_crit) for the K* values where f_boundary is defined."""
    rows = []
    for K in K_values:
        try:
            fb = f_boundary(dim, float(K))
        except BoundaryRangeError:
            fb = float("nan")
        rows.append((float(K), fb, j_crit(dim)))
    return rows
