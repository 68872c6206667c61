"""Finite-volume solver for the nonlocal adhesion/clock model on (x, theta).

One space dimension, periodic in x (length L) and theta (2 pi).  Fluxes are
upwinded for advection and central for diffusion, explicit Euler in time,
so mass is conserved to round-off and positivity holds under the step
bound returned by :func:`max_stable_dt`.

The clock frequency ``omega`` is removed by working in the co-rotating
frame; :func:`diagnostics` adds the drift ``omega*t`` back to the
reported mean phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .params import ModelParams, SigmaKind

TWO_PI = 2 * math.pi
NEG_TOL = -1e-12


class GeometryError(ValueError):
    pass


class StepSizeError(ValueError):
    pass


class DegenerateFieldError(ValueError):
    pass


class PositivityFault(ArithmeticError):
    def __init__(self, indices, value):
        super().__init__(f"density {value:.3e} < {NEG_TOL:g} at cell {tuple(indices)}")
        self.indices = tuple(int(i) for i in indices)
        self.value = float(value)


class RunAborted(RuntimeError):
    """Raised by :func:`run`; carries the last good field and the trajectory so far."""

    def __init__(self, cause, last_field, trajectory):
        super().__init__(f"run aborted at t={last_field.time:.6g}: {cause}")
        self.cause = cause
        self.last_field = last_field
        self.trajectory = trajectory


@dataclass
class Field:
    values: np.ndarray
    L: float
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be an Nx x Ntheta array")

    @property
    def Nx(self):
        return self.values.shape[0]

    @property
    def Ntheta(self):
        return self.values.shape[1]

    @property
    def dx(self):
        return self.L / self.Nx

    @property
    def dtheta(self):
        return TWO_PI / self.Ntheta

    @property
    def x(self):
        return (np.arange(self.Nx) + 0.5) * self.dx

    @property
    def theta(self):
        return (np.arange(self.Ntheta) + 0.5) * self.dtheta

    def mass(self):
        return float(self.values.sum() * self.dx * self.dtheta)

    def copy(self):
        return Field(self.values.copy(), self.L, self.time)

    def to_record(self):
        return {"t": self.time, "Nx": self.Nx, "Ntheta": self.Ntheta, "L": self.L,
                "values": self.values.ravel().tolist()}

    @classmethod
    def from_record(cls, rec):
        vals = np.asarray(rec["values"], dtype=float).reshape(rec["Nx"], rec["Ntheta"])
        return cls(vals, rec["L"], rec["t"])

    @classmethod
    def uniform(cls, Nx, Ntheta, L, Rbar=1.0):
        return cls(np.full((Nx, Ntheta), float(Rbar)), L)


def sigma_flux(R, sigma_kind=SigmaKind.LINEAR, Rmax=30.0):
    kind = SigmaKind(sigma_kind)
    R = np.asarray(R, dtype=float)
    if kind is SigmaKind.LINEAR:
        out = R
    else:
        out = Rmax / (Rmax - 1.0) * R * np.maximum(1.0 - R / Rmax, 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- kernels

def _overlap(a, b, lo, hi):
    return np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)


def kernel_weights(Nx, L, rho):
    """Cell weights for the two neighbourhood integrals.

    Returns ``(odd, even)`` arrays of length Nx indexed by periodic offset:
    ``odd[m]`` approximates integral of sign(xt) over cell m within
    (-rho, rho), ``even[m]`` the plain measure of cell m inside [-rho, rho].
    Partial boundary cells get their overlap length, so ``even.sum() == 2*rho``.
    """
    if rho >= L / 2:
        raise GeometryError(f"rho={rho} must be < L/2={L / 2}")
    dx = L / Nx
    M = int(math.ceil(rho / dx + 0.5))
    offs = np.arange(-M, M + 1)
    lo = (offs - 0.5) * dx
    hi = (offs + 0.5) * dx
    pos = _overlap(lo, hi, 0.0, rho)
    neg = _overlap(lo, hi, -rho, 0.0)
    odd = np.zeros(Nx)
    even = np.zeros(Nx)
    np.add.at(odd, offs % Nx, pos - neg)
    np.add.at(even, offs % Nx, pos + neg)
    return odd, even


def _circulant(w):
    # (C @ f)[i] = sum_m w[m] f[i+m]
    n = w.size
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return w[idx]


class _Operators:
    """Precomputed geometry for a given grid/params pair."""

    def __init__(self, Nx, Ntheta, L, rho):
        self.Nx, self.Ntheta, self.L = Nx, Ntheta, L
        self.dx = L / Nx
        self.dtheta = TWO_PI / Ntheta
        odd, even = kernel_weights(Nx, L, rho)
        self.W_odd = _circulant(odd)
        self.W_even = _circulant(even)
        theta = (np.arange(Ntheta) + 0.5) * self.dtheta
        self.cos = np.cos(theta)
        self.sin = np.sin(theta)
        self.trig = np.stack([np.full(Ntheta, 1.0), self.cos, self.sin], axis=1) * self.dtheta


_OPS_CACHE: dict = {}


def _ops(f: Field, p: ModelParams):
    key = (f.Nx, f.Ntheta, float(f.L), float(p.rho))
    ops = _OPS_CACHE.get(key)
    if ops is None:
        if len(_OPS_CACHE) > 16:
            _OPS_CACHE.clear()
        ops = _OPS_CACHE[key] = _Operators(*key)
    return ops


def _velocities(R, p, ops, include_omega):
    m_sig, m_R = _moments(R, p, ops)  # columns (J0 part, cos, sin) and (C, S)
    v = (p.J0 * m_sig[:, 0])[:, None] + p.J * (np.outer(m_sig[:, 1], ops.cos) + np.outer(m_sig[:, 2], ops.sin))
    v2 = p.K * (np.outer(m_R[:, 1], ops.cos) - np.outer(m_R[:, 0], ops.sin))
    if include_omega and p.omega != 0:
        v2 = v2 + p.omega
    return v, v2


def compute_velocities(f: Field, p: ModelParams, include_omega=True):
    """Adhesion velocity v and clock velocity v2 on the cell centres."""
    if p.dim != 1:
        raise GeometryError("the PDE solver is one-dimensional in space")
    return _velocities(f.values, p, _ops(f, p), include_omega)


def _stable_limit(p, dx, dtheta, vmax, v2max):
    rate = 2 * p.Dx / dx**2 + 2 * p.Dtheta / dtheta**2 + 2 * vmax / dx + 2 * v2max / dtheta
    return math.inf if rate == 0 else 1.0 / rate


def _dt_rule(p, dx, dtheta, vmax, v2max, cfl_safety):
    cands = [dx**2 / (2 * p.Dx)]
    if p.Dtheta > 0:
        cands.append(dtheta**2 / (2 * p.Dtheta))
    if vmax > 0:
        cands.append(dx / vmax)
    if v2max > 0:
        cands.append(dtheta / v2max)
    dt = cfl_safety * min(cands)
    return min(dt, 0.95 * _stable_limit(p, dx, dtheta, vmax, v2max))


def max_stable_dt(f: Field, p: ModelParams, v=None, v2=None):
    """Largest dt keeping every cell's update coefficient nonnegative."""
    if v is None:
        v, v2 = compute_velocities(f, p, include_omega=False)
    return _stable_limit(p, f.dx, f.dtheta, float(np.abs(v).max()), float(np.abs(v2).max()))


def adaptive_dt(f: Field, p: ModelParams, v, v2, cfl_safety=0.4):
    """cfl_safety * min(dx^2/2Dx, dtheta^2/2Dtheta, dx/|v|, dtheta/|v2|), capped by the positivity bound."""
    return _dt_rule(p, f.dx, f.dtheta, float(np.abs(v).max()), float(np.abs(v2).max()), cfl_safety)


def _face(v, axis, mode):
    if mode == "mean":
        return 0.5 * (v + np.roll(v, -1, axis=axis))
    if mode == "donor":
        return None
    raise ValueError(f"unknown face velocity mode {mode!r}")


def _upwind_flux(R, v, axis, mode):
    Rn = np.roll(R, -1, axis=axis)
    if mode == "donor":
        return np.maximum(v, 0.0) * R + np.minimum(np.roll(v, -1, axis=axis), 0.0) * Rn
    vf = _face(v, axis, mode)
    return np.maximum(vf, 0.0) * R + np.minimum(vf, 0.0) * Rn


def _advance(R, v, v2, dt, p, dx, dtheta, face_velocity="mean"):
    fx = _upwind_flux(R, v, 0, face_velocity) - p.Dx / dx * (np.roll(R, -1, axis=0) - R)
    ft = _upwind_flux(R, v2, 1, face_velocity)
    if p.Dtheta:
        ft = ft - p.Dtheta / dtheta * (np.roll(R, -1, axis=1) - R)
    div = (fx - np.roll(fx, 1, axis=0)) / dx + (ft - np.roll(ft, 1, axis=1)) / dtheta
    return R - dt * div


@njit(cache=True)
def _velocity_kernel(m_sig, m_R, cos, sin, J0, J, K):
    nx = m_sig.shape[0]
    nt = cos.shape[0]
    v = np.empty((nx, nt))
    v2 = np.empty((nx, nt))
    vmax = 0.0
    v2max = 0.0
    for i in range(nx):
        a0 = J0 * m_sig[i, 0]
        ac = J * m_sig[i, 1]
        as_ = J * m_sig[i, 2]
        bc = K * m_R[i, 1]
        bs = K * m_R[i, 0]
        for j in range(nt):
            a = a0 + (ac * cos[j] + as_ * sin[j])
            b = bc * cos[j] - bs * sin[j]
            v[i, j] = a
            v2[i, j] = b
            vmax = max(vmax, abs(a))
            v2max = max(v2max, abs(b))
    return v, v2, vmax, v2max


@njit(cache=True)
def _advance_kernel(R, v, v2, Dx, Dth, dx, dth, dt, donor):
    # face fluxes are evaluated with identical operands from both sides,
    # so the update telescopes exactly
    nx, nt = R.shape
    out = np.empty((nx, nt))
    cx = Dx / dx
    ct = Dth / dth
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        im = i - 1 if i > 0 else nx - 1
        for j in range(nt):
            jp = j + 1 if j + 1 < nt else 0
            jm = j - 1 if j > 0 else nt - 1
            r = R[i, j]
            if donor:
                fr = max(v[i, j], 0.0) * r + min(v[ip, j], 0.0) * R[ip, j]
                fl = max(v[im, j], 0.0) * R[im, j] + min(v[i, j], 0.0) * r
                gr = max(v2[i, j], 0.0) * r + min(v2[i, jp], 0.0) * R[i, jp]
                gl = max(v2[i, jm], 0.0) * R[i, jm] + min(v2[i, j], 0.0) * r
            else:
                vr = 0.5 * (v[i, j] + v[ip, j])
                vl = 0.5 * (v[im, j] + v[i, j])
                fr = max(vr, 0.0) * r + min(vr, 0.0) * R[ip, j]
                fl = max(vl, 0.0) * R[im, j] + min(vl, 0.0) * r
                wr = 0.5 * (v2[i, j] + v2[i, jp])
                wl = 0.5 * (v2[i, jm] + v2[i, j])
                gr = max(wr, 0.0) * r + min(wr, 0.0) * R[i, jp]
                gl = max(wl, 0.0) * R[i, jm] + min(wl, 0.0) * r
            fr -= cx * (R[ip, j] - r)
            fl -= cx * (r - R[im, j])
            gr -= ct * (R[i, jp] - r)
            gl -= ct * (r - R[i, jm])
            out[i, j] = r - dt * ((fr - fl) / dx + (gr - gl) / dth)
    return out


def _moments(R, p, ops):
    sig = R if p.sigma_kind is SigmaKind.LINEAR else sigma_flux(R, p.sigma_kind, p.Rmax)
    m_sig = ops.W_odd @ (sig @ ops.trig)
    m_R = ops.W_even @ (R @ ops.trig[:, 1:])
    return np.ascontiguousarray(m_sig), np.ascontiguousarray(m_R)


def _fast_velocities(R, p, ops):
    m_sig, m_R = _moments(R, p, ops)
    return _velocity_kernel(m_sig, m_R, ops.cos, ops.sin, float(p.J0), float(p.J), float(p.K))


def _check(R):
    if not np.all(np.isfinite(R)):
        raise FloatingPointError("non-finite density")
    i = int(np.argmin(R))
    if R.flat[i] < NEG_TOL:
        raise PositivityFault(np.unravel_index(i, R.shape), R.flat[i])


def step(f: Field, p: ModelParams, dt, face_velocity="mean") -> Field:
    """One explicit flux-form update in the co-rotating frame."""
    ops = _ops(f, p)
    if p.dim != 1:
        raise GeometryError("the PDE solver is one-dimensional in space")
    v, v2 = _velocities(f.values, p, ops, include_omega=False)
    limit = max_stable_dt(f, p, v, v2)
    if not dt > 0 or dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt} outside (0, {limit:.6g}]")
    R = _advance(f.values, v, v2, dt, p, ops.dx, ops.dtheta, face_velocity)
    _check(R)
    return Field(R, f.L, f.time + dt)


# ---------------------------------------------------------------- diagnostics

@dataclass
class Diagnostics:
    t: float
    r: float
    mass: float
    spatial_density: np.ndarray = field(repr=False)
    mean_phase: np.ndarray = field(repr=False)
    aggregation_index: float = 0.0


def diagnostics(f: Field, omega=0.0) -> Diagnostics:
    R = f.values
    total = R.sum()
    if not total > 0:
        raise DegenerateFieldError("zero total mass")
    phase = np.exp(1j * f.theta)
    col = R @ phase
    r = float(abs(col.sum()) / total)
    dens = R.sum(axis=1) * f.dtheta
    mean_phase = np.mod(np.angle(col) + omega * f.time, TWO_PI)
    mean = dens.mean()
    agg = float((dens.max() - dens.min()) / mean)
    return Diagnostics(t=f.time, r=min(r, 1.0), mass=float(total * f.dx * f.dtheta),
                       spatial_density=dens, mean_phase=mean_phase, aggregation_index=agg)


def phase_winding(mean_phase, tol=1e-9):
    """Signed winding, total variation and monotonicity of a periodic phase profile."""
    mp = np.asarray(mean_phase, dtype=float)
    d = np.angle(np.exp(1j * (np.roll(mp, -1) - mp)))
    signed = float(d.sum())
    variation = float(np.abs(d).sum())
    monotone = bool(np.all(d >= -tol) or np.all(d <= tol))
    return signed, variation, monotone


# ---------------------------------------------------------------- initial conditions

def initial_field(Nx, Ntheta, L, Rbar=1.0, kind="random", eps=0.01, rng=None, **kw):
    """Build an initial Field.

    kinds: ``random`` (Rbar*(1 + eps*U), U iid uniform(-1,1), mean fixed to Rbar),
    ``uniform``, ``mode`` (Rbar*(1 + eps*cos(q theta + 2 pi m x / L)) with
    ``q``/``m`` keywords), ``theta_profile`` (``profile`` callable of theta,
    identical in every x cell).
    """
    f = Field.uniform(Nx, Ntheta, L, Rbar)
    if kind == "uniform":
        return f
    if kind == "random":
        if rng is None:
            rng = np.random.default_rng(0)
        u = rng.uniform(-1.0, 1.0, size=(Nx, Ntheta))
        u -= u.mean()
        f.values = Rbar * (1.0 + eps * u)
        return f
    if kind == "mode":
        q, m = kw.get("q", 1), kw.get("m", 1)
        phase = q * f.theta[None, :] + TWO_PI * m * f.x[:, None] / L
        f.values = Rbar * (1.0 + eps * np.cos(phase))
        return f
    if kind == "theta_profile":
        prof = np.asarray(kw["profile"](f.theta), dtype=float)
        f.values = np.repeat(prof[None, :], Nx, axis=0)
        return f
    raise ValueError(f"unknown initial condition kind {kind!r}")


# ---------------------------------------------------------------- driver

@dataclass
class RunResult:
    trajectory: list
    field: Field
    steps: int
    snapshots: list = field(default_factory=list, repr=False)


def run(p: ModelParams, Nx=200, Ntheta=128, T_final=100.0, ic=None, seed=0, cadence=1.0,
        cfl_safety=0.4, face_velocity="mean", initial=None, callback=None,
        keep_fields=False) -> RunResult:
    """Integrate to ``T_final`` with adaptive dt, sampling diagnostics every ``cadence``.

    ``ic`` is a dict of :func:`initial_field` keywords (default random with
    eps=0.01); ``initial`` overrides it with a ready Field.  The last step
    is shortened to land exactly on each output time.  With ``keep_fields``
    a copy of the Field at every output time lands in ``snapshots``.
    """
    if p.dim != 1:
        raise GeometryError("the PDE solver is one-dimensional in space")
    if initial is not None:
        f = initial.copy()
    else:
        spec = dict(ic or {})
        spec.setdefault("kind", "random")
        rng = np.random.default_rng(seed)
        f = initial_field(Nx, Ntheta, p.L, p.Rbar, rng=rng, **spec)
    ops = _ops(f, p)
    traj = [diagnostics(f, p.omega)]
    snaps = [f.copy()] if keep_fields else []
    next_out = f.time + cadence
    nsteps = 0
    R = f.values
    t = f.time
    if face_velocity not in ("mean", "donor"):
        raise ValueError(f"unknown face velocity mode {face_velocity!r}")
    donor = face_velocity == "donor"
    while t < T_final - 1e-12:
        v, v2, vmax, v2max = _fast_velocities(R, p, ops)
        dt = _dt_rule(p, ops.dx, ops.dtheta, vmax, v2max, cfl_safety)
        target = min(next_out, T_final)
        if t + dt >= target - 1e-12:
            dt = target - t
        try:
            Rn = _advance_kernel(R, v, v2, p.Dx, p.Dtheta, ops.dx, ops.dtheta, dt, donor)
            _check(Rn)
        except (PositivityFault, FloatingPointError) as exc:
            raise RunAborted(exc, Field(R.copy(), f.L, t), traj) from exc
        R = Rn
        t = target if abs(t + dt - target) < 1e-12 else t + dt
        nsteps += 1
        if t >= target - 1e-12:
            d = diagnostics(Field(R, f.L, t), p.omega)
            traj.append(d)
            if keep_fields:
                snaps.append(Field(R.copy(), f.L, t))
            if callback is not None:
                callback(d)
            next_out += cadence
    return RunResult(traj, Field(R, f.L, t), nsteps, snaps)
