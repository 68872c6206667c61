"""Hexagonal lattice-gas cellular automaton with per-particle clocks.

Nodes live on a periodic axial-coordinate torus: ``occ[r, q, c]`` holds the
id of the particle in channel ``c`` of node (q, r), or -1.  Channel ``c``
points along DIRECTIONS[c]; the six directions are 60 degrees apart in
counter-clockwise order, so the dot product of channel ``i`` with the unit
vector towards neighbour ``j`` is cos(60deg * (i - j)).

A step is interaction (energy-biased reshuffle within nodes), propagation
(each particle hops one node along its channel) and clock update (Kuramoto
sub-steps over the node and its six neighbours).
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .params import ParameterError

TWO_PI = 2.0 * math.pi
NCH = 6
DIRECTIONS = np.array([(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)])  # (dq, dr)
DOT = np.cos(np.pi / 3 * (np.arange(NCH)[:, None] - np.arange(NCH)[None, :]))
STEP_ORDER = ("interaction", "propagation", "clock")

# all injective maps of m residents into the 6 channels, row-wise
_ASSIGNMENTS = [np.array(list(itertools.permutations(range(NCH), m)), dtype=np.int64).reshape(-1, m)
                for m in range(1, NCH + 1)]
_ASSIGNMENTS.insert(0, np.zeros((1, 0), dtype=np.int64))


class DegenerateLatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LGCAParams:
    J0: float = 0.0
    J: float = 0.0
    K: float = 0.0
    omega: float = 0.0
    n_substeps: int = 10
    order: tuple = STEP_ORDER

    def __post_init__(self):
        for name in ("J0", "J", "K", "omega"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(name, f"expected a finite real, got {v!r}")
        if isinstance(self.n_substeps, bool) or not isinstance(self.n_substeps, int) or self.n_substeps < 1:
            raise ParameterError("n_substeps", "must be an integer >= 1")
        order = tuple(self.order)
        if sorted(order) != sorted(STEP_ORDER):
            raise ParameterError("order", f"must be a permutation of {STEP_ORDER}")
        object.__setattr__(self, "order", order)


@dataclass
class HexLattice:
    width: int
    height: int
    occ: np.ndarray = field(repr=False)       # (height, width, 6) particle ids, -1 = empty
    theta: np.ndarray = field(repr=False)     # (N,) phases in [0, 2pi)
    seed: int = 0
    step_count: int = 0
    disp: np.ndarray = field(default=None, repr=False)  # (N, 2) unwrapped (dq, dr)

    def __post_init__(self):
        if self.disp is None:
            self.disp = np.zeros((self.theta.size, 2), dtype=np.int64)

    @property
    def N(self):
        return int(self.theta.size)

    def copy(self):
        return HexLattice(self.width, self.height, self.occ.copy(), self.theta.copy(),
                          self.seed, self.step_count, self.disp.copy())

    def occupancy(self):
        return (self.occ >= 0).sum(axis=2)

    def positions(self):
        """Per-particle (q, r, channel), indexed by id."""
        r, q, c = np.nonzero(self.occ >= 0)
        out = np.empty((self.N, 3), dtype=np.int64)
        out[self.occ[r, q, c]] = np.stack([q, r, c], axis=1)
        return out

    def particle_count(self):
        return int((self.occ >= 0).sum())


def empty_lattice(width, height, seed=0):
    return HexLattice(width, height, np.full((height, width, NCH), -1, dtype=np.int64),
                      np.zeros(0), seed)


def place(lat: HexLattice, q, r, channel, theta):
    """Add one particle (returns its id); the channel must be free."""
    if lat.occ[r % lat.height, q % lat.width, channel] >= 0:
        raise ValueError("channel already occupied")
    pid = lat.N
    lat.occ[r % lat.height, q % lat.width, channel] = pid
    lat.theta = np.append(lat.theta, float(theta) % TWO_PI)
    lat.disp = np.vstack([lat.disp, np.zeros((1, 2), dtype=np.int64)])
    return pid


def init_random(width, height, confluency, seed=0) -> HexLattice:
    if not (isinstance(width, int) and isinstance(height, int)) or width < 1 or height < 1:
        raise ParameterError("width/height", "must be positive integers")
    if not (0 < confluency <= 1):
        raise ParameterError("confluency", "must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    slots = width * height * NCH
    n = int(round(confluency * slots))
    chosen = rng.choice(slots, size=n, replace=False)
    occ = np.full(slots, -1, dtype=np.int64)
    occ[chosen] = np.arange(n)
    theta = rng.uniform(0.0, TWO_PI, size=n)
    return HexLattice(width, height, occ.reshape(height, width, NCH), theta, seed)


# ---------------------------------------------------------------- hashing

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(x):
    with np.errstate(over="ignore"):
        z = x + _GOLD
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def node_uniforms(seed, step, nodes):
    """Uniform(0,1) per node from hash(seed, step, node); order-independent."""
    s = _splitmix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    s = _splitmix(s ^ np.uint64(step & 0xFFFFFFFFFFFFFFFF))
    h = _splitmix(s ^ np.asarray(nodes, dtype=np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


# ---------------------------------------------------------------- node sums

def _node_sums(lat: HexLattice):
    """Per-node particle count and complex phase sum."""
    mask = lat.occ >= 0
    ids = np.where(mask, lat.occ, 0)
    z = np.where(mask, np.exp(1j * lat.theta[ids]) if lat.N else 0.0, 0.0)
    return mask.sum(axis=2), z.sum(axis=2)


def _shifted(a, d):
    """Value at the neighbour in direction d for every node."""
    dq, dr = DIRECTIONS[d]
    return np.roll(a, shift=(-dr, -dq), axis=(0, 1))


@functools.lru_cache(maxsize=16)
def _neighbour_index(height, width):
    """Flat index of the neighbour in each direction, shape (height, width, 6)."""
    r, q = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    dq, dr = DIRECTIONS.T
    return ((r[..., None] + dr) % height) * width + (q[..., None] + dq) % width


def _neighbour_stack(a):
    """Stack of ``_shifted(a, d)`` over the six directions on the last axis."""
    return a.reshape(-1)[_neighbour_index(*a.shape[:2])]


def node_energy(assignment, resident_theta, neighbour_count, neighbour_sum, J0, J):
    """Energy of one placement of a node's residents.

    ``assignment[k]`` is the channel of resident k, ``neighbour_count[j]``
    and ``neighbour_sum[j]`` the particle count and sum of exp(i theta)
    at the neighbour node in direction j.
    """
    th = np.asarray(resident_theta, dtype=float)
    w = J0 * np.asarray(neighbour_count, float)[None, :] + J * np.real(
        np.exp(-1j * th)[:, None] * np.asarray(neighbour_sum)[None, :])
    return float(sum(DOT[c] @ w[k] for k, c in enumerate(assignment)))


def channel_scores(resident_theta, neighbour_count, neighbour_sum, J0, J):
    """V[..., k, i]: energy of resident k sitting in channel i (batched)."""
    th = np.asarray(resident_theta, dtype=float)
    cnt = np.asarray(neighbour_count, dtype=float)
    S = np.asarray(neighbour_sum, dtype=complex)
    w = J0 * cnt[..., None, :] + J * np.real(np.exp(-1j * th)[..., :, None] * S[..., None, :])
    return w @ DOT.T


def assignment_energies(V):
    """H for every injective assignment; V has shape (..., m, 6)."""
    m = V.shape[-2]
    A = _ASSIGNMENTS[m]
    H = np.zeros(V.shape[:-2] + (A.shape[0],))
    for k in range(m):
        H += V[..., k, :][..., A[:, k]]
    return H


def assignment_probabilities(V):
    H = assignment_energies(V)
    w = np.exp(H - H.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def interaction_step(lat: HexLattice, J0, J) -> HexLattice:
    """Resample every node's channel assignment with probability exp(H)/Z.

    All nodes read the pre-step neighbourhood (synchronous update).
    """
    out = lat.copy()
    count, zsum = _node_sums(lat)
    ncount = _neighbour_stack(count)
    nsum = _neighbour_stack(zsum)
    occ = lat.occ.reshape(-1, NCH)
    m_all = (occ >= 0).sum(axis=1)
    new = out.occ.reshape(-1, NCH)
    flat_cnt = ncount.reshape(-1, NCH)
    flat_sum = nsum.reshape(-1, NCH)
    for m in range(1, NCH + 1):
        nodes = np.nonzero(m_all == m)[0]
        if nodes.size == 0:
            continue
        block = occ[nodes]
        # resident ids in channel order
        ids = np.take_along_axis(block, np.argsort(block < 0, axis=1, kind="stable"), axis=1)[:, :m]
        V = channel_scores(lat.theta[ids], flat_cnt[nodes], flat_sum[nodes], J0, J)
        P = assignment_probabilities(V)
        u = node_uniforms(lat.seed, lat.step_count, nodes)
        cum = np.cumsum(P, axis=1)
        pick = (cum < (u * cum[:, -1])[:, None]).sum(axis=1)
        pick = np.minimum(pick, P.shape[1] - 1)
        chans = _ASSIGNMENTS[m][pick]
        rows = np.full((nodes.size, NCH), -1, dtype=np.int64)
        np.put_along_axis(rows, chans, ids, axis=1)
        new[nodes] = rows
    return out


def propagation_step(lat: HexLattice) -> HexLattice:
    out = lat.copy()
    for c in range(NCH):
        dq, dr = DIRECTIONS[c]
        out.occ[:, :, c] = np.roll(lat.occ[:, :, c], shift=(dr, dq), axis=(0, 1))
        ids = lat.occ[:, :, c]
        ids = ids[ids >= 0]
        out.disp[ids] += (dq, dr)
    return out


def clock_step(lat: HexLattice, K, omega=0.0, n_substeps=10) -> HexLattice:
    """Kuramoto sub-steps; neighbours are the node's other residents plus
    every particle in the six adjacent nodes."""
    if n_substeps < 1:
        raise ParameterError("n_substeps", "must be >= 1")
    out = lat.copy()
    if lat.N == 0:
        return out
    mask = lat.occ >= 0
    r, q, c = np.nonzero(mask)
    ids = lat.occ[r, q, c]
    dt = 1.0 / n_substeps
    theta = out.theta
    for _ in range(n_substeps):
        count, zsum = _node_sums(out)
        tot_n = count + _neighbour_stack(count).sum(axis=-1)
        tot_z = zsum + _neighbour_stack(zsum).sum(axis=-1)
        n_i = tot_n[r, q] - 1
        coupling = np.imag(np.exp(-1j * theta[ids]) * tot_z[r, q])
        rate = np.full(ids.size, float(omega))
        has = n_i > 0
        rate[has] += K * coupling[has] / n_i[has]
        theta[ids] = np.mod(theta[ids] + rate * dt, TWO_PI)
        out.theta = theta
    return out


def lgca_step(lat: HexLattice, params: LGCAParams) -> HexLattice:
    for phase in params.order:
        if phase == "interaction":
            lat = interaction_step(lat, params.J0, params.J)
        elif phase == "propagation":
            lat = propagation_step(lat)
        else:
            lat = clock_step(lat, params.K, params.omega, params.n_substeps)
    lat.step_count += 1
    return lat


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class Metrics:
    step: int
    r: float
    r_local: float
    N: int


def metrics(lat: HexLattice) -> Metrics:
    if lat.N == 0:
        raise DegenerateLatticeError("no particles on the lattice")
    r = float(abs(np.exp(1j * lat.theta).mean()))
    count, zsum = _node_sums(lat)
    tot_n = count + _neighbour_stack(count).sum(axis=-1)
    tot_z = zsum + _neighbour_stack(zsum).sum(axis=-1)
    ok = tot_n > 0
    r_local = float(np.mean(np.abs(tot_z[ok]) / tot_n[ok]))
    return Metrics(lat.step_count, min(r, 1.0), min(r_local, 1.0), lat.N)


def mean_squared_displacement(lat: HexLattice):
    """MSD in lattice units using the Cartesian embedding of axial offsets."""
    dq, dr = lat.disp[:, 0], lat.disp[:, 1]
    x = dq + 0.5 * dr
    y = (math.sqrt(3) / 2) * dr
    return float(np.mean(x * x + y * y))


def run(lat: HexLattice, params: LGCAParams, steps, cadence=1, callback=None):
    """Advance ``steps`` steps; returns (final lattice, list of Metrics).

    Metrics are sampled every ``cadence`` steps; ``callback`` sees every step.
    """
    rows = [metrics(lat)]
    for n in range(1, steps + 1):
        lat = lgca_step(lat, params)
        if n % cadence == 0 or n == steps:
            rows.append(metrics(lat))
        if callback is not None:
            callback(lat)
    return lat, rows


# ---------------------------------------------------------------- output

def snapshot_record(lat: HexLattice):
    pos = lat.positions()
    return {
        "step": lat.step_count,
        "width": lat.width,
        "height": lat.height,
        "particles": [{"q": int(q), "r": int(r), "channel": int(c), "theta": float(t)}
                      for (q, r, c), t in zip(pos, lat.theta)],
    }


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    rgb = np.zeros(h.shape + (3,))
    for k, (a, b, c) in enumerate(choices):
        sel = i == k
        rgb[sel] = np.stack([a[sel], b[sel], c[sel]], axis=-1)
    return rgb


def _pixel_nodes(width, height, scale):
    """Node (q, r) under each pixel of a rectangular fundamental domain."""
    w = width * scale
    h = max(1, int(round(height * scale * math.sqrt(3) / 2)))
    px, py = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    x, y = px / scale, py / scale
    rf = y * 2 / math.sqrt(3)
    qf = x - rf / 2
    sf = -qf - rf
    q, r, s = np.round(qf), np.round(rf), np.round(sf)
    dq, dr, ds = np.abs(q - qf), np.abs(r - rf), np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(int) % width, r.astype(int) % height


def render_ppm(lat: HexLattice, scale=6) -> bytes:
    """Binary P6 frame: hue = mean phase of residents, value = occupancy / 6."""
    count, zsum = _node_sums(lat)
    hue = np.mod(np.angle(zsum), TWO_PI) / TWO_PI
    val = count / NCH
    rgb = _hsv_to_rgb(hue, np.ones_like(hue), val)
    q, r = _pixel_nodes(lat.width, lat.height, scale)
    img = np.round(rgb[r, q] * 255).astype(np.uint8)
    h, w = img.shape[:2]
    return f"P6 {w} {h} 255\n".encode() + img.tobytes()


METRICS_HEADER = ["step", "r", "r_local", "N"]


def metrics_rows(rows):
    return [[m.step, m.r, m.r_local, m.N] for m in rows]
