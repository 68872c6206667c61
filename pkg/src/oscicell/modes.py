"""Fourier-mode reduction for spatially uniform densities R(t, theta).

With R = sum_j A_j exp(i j theta) and A_{-j} = conj(A_j), the clock
equation becomes

    dA_j/dt = j |D_rho| pi K (A_1 A_{j-1} - conj(A_1) A_{j+1}) - j^2 Dtheta A_j,

truncated at order M with A_{M+1} = 0.  Only j >= 0 is stored, which keeps
conjugate symmetry structurally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class BlowUpError(ArithmeticError):
    def __init__(self, t, last_state):
        super().__init__(f"non-finite mode coefficient at t={t:.6g}")
        self.t = t
        self.last_state = last_state


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class ModeVector:
    A: np.ndarray
    D_rho_measure: float
    K: float
    Dtheta: float = 0.0

    def __post_init__(self):
        A = np.array(self.A, dtype=complex)
        if A.ndim != 1 or A.size < 3:
            raise ValueError("need coefficients A_0..A_M with M >= 2")
        A[0] = A[0].real
        object.__setattr__(self, "A", A)

    @property
    def M(self):
        return self.A.size - 1

    def with_coefficients(self, A):
        return replace(self, A=A)

    def density(self, theta):
        return reconstruct(self.A, theta)


def mode_rhs(m: ModeVector):
    return _rhs(m.A, m.D_rho_measure * math.pi * m.K, m.Dtheta)


def _rhs(A, c, Dtheta):
    j = np.arange(A.size)
    lower = np.empty_like(A)
    lower[1:] = A[:-1]
    lower[0] = np.conj(A[1])
    upper = np.zeros_like(A)
    upper[:-1] = A[1:]
    out = j * c * (A[1] * lower - np.conj(A[1]) * upper) - j * j * Dtheta * A
    out[0] = 0.0
    return out


def lyapunov_u(m) -> float:
    """u = sum_{k>=1} |A_k|^2 / k."""
    A = m.A if isinstance(m, ModeVector) else np.asarray(m)
    k = np.arange(1, A.size)
    return float(np.sum(np.abs(A[1:]) ** 2 / k))


def reconstruct(A, theta):
    A = np.asarray(A, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    j = np.arange(1, A.size)
    return A[0].real + 2 * np.real(np.exp(1j * np.multiply.outer(theta, j)) @ A[1:])


def from_density(R_theta, M):
    """Coefficients A_0..A_M of samples on the cell-centred theta grid."""
    R = np.asarray(R_theta, dtype=float)
    n = R.size
    if M > n // 2:
        raise ValueError("M exceeds the Nyquist limit of the sample grid")
    theta = (np.arange(n) + 0.5) * 2 * math.pi / n
    j = np.arange(M + 1)
    return (np.exp(-1j * np.multiply.outer(j, theta)) @ R) / n


@dataclass
class ModeTrajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    halted: str | None = None

    def density(self, theta):
        return np.array([reconstruct(A, theta) for A in self.states])


def integrate_modes(m0: ModeVector, T, dt, cadence=None, saturation=0.1) -> ModeTrajectory:
    """Classical RK4 with fixed step ``dt``; samples every ``cadence`` (default dt).

    Stops early (``halted='saturation'``) once |A_M|/|A_1| > ``saturation``,
    the sign that the truncation no longer resolves the density.
    """
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    every = 1 if cadence is None else int(round(cadence / dt))
    if every < 1 or abs(every * dt - (cadence or dt)) > 1e-9 * max(1.0, cadence or dt):
        raise ValueError("cadence must be a positive multiple of dt")

    c = m0.D_rho_measure * math.pi * m0.K
    D = m0.Dtheta
    A = m0.A.copy()
    times, states, us = [0.0], [A.copy()], [lyapunov_u(A)]
    halted = None
    for n in range(1, nsteps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = _rhs(A, c, D)
            k2 = _rhs(A + 0.5 * dt * k1, c, D)
            k3 = _rhs(A + 0.5 * dt * k2, c, D)
            k4 = _rhs(A + dt * k3, c, D)
            new = A + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(new)):
            raise BlowUpError(n * dt, m0.with_coefficients(A))
        A = new
        sat = abs(A[1]) > 0 and abs(A[-1]) / abs(A[1]) > saturation
        if n % every == 0 or n == nsteps or sat:
            times.append(n * dt)
            states.append(A.copy())
            us.append(lyapunov_u(A))
        if sat:
            halted = "saturation"
            break
    return ModeTrajectory(np.array(times), np.array(states), np.array(us), halted)


def reconstruct_and_compare(traj: ModeTrajectory, fields, time_tol=1e-9):
    """Max over snapshots and spatial columns of the L2(theta) deviation.

    ``fields`` is a sequence of pde1d Field snapshots taken at the same
    times as the mode trajectory samples.
    """
    fields = list(fields)
    if len(fields) != len(traj.times):
        raise AlignmentError(f"{len(fields)} PDE snapshots vs {len(traj.times)} mode samples")
    worst = 0.0
    for t, A, f in zip(traj.times, traj.states, fields):
        if abs(f.time - t) > time_tol:
            raise AlignmentError(f"snapshot time {f.time} does not match mode time {t}")
        ref = reconstruct(A, f.theta)
        dev = np.sqrt(np.sum((f.values - ref[None, :]) ** 2, axis=1) * f.dtheta)
        worst = max(worst, float(dev.max()))
    return worst


CSV_MODES = 8


def trajectory_rows(traj: ModeTrajectory, nmodes=CSV_MODES):
    """Rows (t, u, |A_0|..|A_nmodes|) for CSV output (missing modes are 0)."""
    rows = []
    for t, A, u in zip(traj.times, traj.states, traj.u):
        mags = np.zeros(nmodes + 1)
        n = min(nmodes + 1, A.size)
        mags[:n] = np.abs(A[:n])
        rows.append([t, u, *mags])
    return rows


def csv_header(nmodes=CSV_MODES):
    return ["t", "u"] + [f"absA{j}" for j in range(nmodes + 1)]


def state_records(traj: ModeTrajectory):
    return [{"t": float(t), "re": A.real.tolist(), "im": A.imag.tolist()}
            for t, A in zip(traj.times, traj.states)]
