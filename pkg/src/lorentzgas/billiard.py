"""Collision map of the periodic Lorentz gas, its quotient, and the flow.

A collision state is stored post-collisionally as (disk, boundary angle,
outgoing angle); the extended state adds the Z^d cell label of the disk
copy.  Everything heavy runs in numba kernels keyed by counter-based streams
so ensembles are reproducible trajectory by trajectory.
"""
import csv
from collections import Counter
from dataclasses import dataclass
from math import cos, pi, sin

import numpy as np
from numba import njit

from . import rng as _rng
from .geometry import TruncatedFlight, _flight

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CollisionState:
    disk_id: int
    boundary_angle: float
    outgoing_angle: float

    def __post_init__(self):
        if not -pi / 2 < self.outgoing_angle < pi / 2:
            raise ValueError("outgoing angle must lie in (-pi/2, pi/2)")

    def position(self, table):
        d = table.disks[self.disk_id]
        return (d.cx + d.r * cos(self.boundary_angle), d.cy + d.r * sin(self.boundary_angle))

    def velocity(self):
        a = self.boundary_angle + self.outgoing_angle
        return (cos(a), sin(a))

    def reversed(self):
        """Same point with the time-reversed velocity."""
        return CollisionState(self.disk_id, self.boundary_angle, -self.outgoing_angle)


@dataclass(frozen=True)
class ExtendedState:
    base: CollisionState
    cell: tuple

    def __post_init__(self):
        object.__setattr__(self, "cell", tuple(int(c) for c in np.atleast_1d(self.cell)))


@njit(cache=True)
def _step(m, theta, phi, cx, cy, r, cm, cdi, cdj, max_cells):
    """One application of the quotient map.

    Returns ``(m', theta', phi', i, j, tau, ok)`` with ``(i, j)`` the lattice
    translate of the next disk copy.
    """
    px = cx[m] + r[m] * np.cos(theta)
    py = cy[m] + r[m] * np.sin(theta)
    a = theta + phi
    vx = np.cos(a)
    vy = np.sin(a)
    t, m2, i, j, _ = _flight(px, py, vx, vy, cx, cy, r, cm, cdi, cdj, max_cells, m)
    if m2 < 0:
        return m, theta, phi, 0, 0, t, False
    nx = px + t * vx - (cx[m2] + i)
    ny = py + t * vy - (cy[m2] + j)
    nn = np.sqrt(nx * nx + ny * ny)
    nx /= nn
    ny /= nn
    th2 = np.arctan2(ny, nx)
    if th2 < 0.0:
        th2 += TWO_PI
    vn = vx * nx + vy * ny
    wx = vx - 2.0 * vn * nx
    wy = vy - 2.0 * vn * ny
    ph2 = np.arctan2(nx * wy - ny * wx, nx * wx + ny * wy)
    return m2, th2, ph2, i, j, t, True


@njit(cache=True)
def _sample_mu(key, ctr, cum_w):
    """State of the invariant probability of the quotient map, cell 0."""
    u = _rng.uniform(key, ctr)
    m = 0
    while m < cum_w.shape[0] - 1 and u >= cum_w[m]:
        m += 1
    theta = TWO_PI * _rng.uniform(key, ctr + 1)
    phi = np.arcsin(2.0 * _rng.uniform_open(key, ctr + 2) - 1.0)
    return m, theta, phi


def _tables(table):
    cx, cy, r, cm, cdi, cdj, cum = table.arrays
    return cx, cy, r, cm, cdi, cdj


def step(state, table):
    """Apply the collision map once; returns ``(next, psi, tau)``."""
    b = state.base
    m, th, ph, i, j, tau, ok = _step(b.disk_id, b.boundary_angle, b.outgoing_angle, *_tables(table),
                                     table.max_cell_traversal)
    if not ok:
        raise TruncatedFlight(table.max_cell_traversal, b.position(table), b.velocity())
    psi = (int(i),) if table.dim == 1 else (int(i), int(j))
    cell = tuple(c + p for c, p in zip(state.cell, psi))
    return ExtendedState(CollisionState(int(m), float(th), float(ph)), cell), psi, float(tau)


def sample_initial(table, stream):
    """Draw a state of cell 0 from the normalized invariant measure.

    ``stream`` is a numpy Generator; the disk is chosen proportionally to
    its perimeter, the boundary angle uniformly and the outgoing angle with
    density cos/2.
    """
    cum = table.arrays[-1]
    m = int(np.searchsorted(cum, stream.random(), side="right"))
    m = min(m, len(table.disks) - 1)
    theta = TWO_PI * stream.random()
    phi = float(np.arcsin(2.0 * (1.0 - stream.random()) - 1.0))
    if phi >= pi / 2:
        phi = np.nextafter(pi / 2, 0)
    return ExtendedState(CollisionState(m, theta, phi), (0,) * table.dim)


@njit(cache=True)
def _run_map(m, theta, phi, n, cx, cy, r, cm, cdi, cdj, max_cells):
    ms = np.empty(n + 1, np.int64)
    ths = np.empty(n + 1)
    phs = np.empty(n + 1)
    psis = np.zeros((n, 2), np.int64)
    taus = np.empty(n)
    ms[0], ths[0], phs[0] = m, theta, phi
    for k in range(n):
        m2, th2, ph2, i, j, t, ok = _step(ms[k], ths[k], phs[k], cx, cy, r, cm, cdi, cdj, max_cells)
        if not ok:
            return ms[: k + 1], ths[: k + 1], phs[: k + 1], psis[:k], taus[:k], True
        ms[k + 1], ths[k + 1], phs[k + 1] = m2, th2, ph2
        psis[k, 0], psis[k, 1] = i, j
        taus[k] = t
    return ms, ths, phs, psis, taus, False


@dataclass
class TrajectoryRecord:
    disk_ids: np.ndarray
    boundary_angles: np.ndarray
    outgoing_angles: np.ndarray
    cells: np.ndarray  # (len, d), cell of each state
    flight_times: np.ndarray
    birkhoff_sum: np.ndarray  # (len, d), S_k for k = 0..len-1
    truncated: bool

    def __len__(self):
        return len(self.disk_ids)

    def state(self, k):
        return ExtendedState(
            CollisionState(int(self.disk_ids[k]), float(self.boundary_angles[k]), float(self.outgoing_angles[k])),
            tuple(self.cells[k]))

    @property
    def states(self):
        return [self.state(k) for k in range(len(self))]

    @property
    def collision_times(self):
        return np.concatenate([[0.0], np.cumsum(self.flight_times)])

    def to_csv(self, path):
        d = self.cells.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "disk_id", "boundary_angle", "outgoing_angle"]
                       + [f"cell_{c}" for c in range(d)] + ["tau"])
            for k in range(len(self)):
                tau = self.flight_times[k] if k < len(self.flight_times) else ""
                w.writerow([k, int(self.disk_ids[k]), repr(float(self.boundary_angles[k])),
                            repr(float(self.outgoing_angles[k]))] + [int(c) for c in self.cells[k]] + [tau])


def run_map(initial, n, table):
    """Iterate the collision map ``n`` times, recording cells and flights.

    Stops early and sets ``truncated`` if a flight exceeds the cell cap.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    b = initial.base
    ms, ths, phs, psis, taus, trunc = _run_map(b.disk_id, b.boundary_angle, b.outgoing_angle, n,
                                               *_tables(table), table.max_cell_traversal)
    d = table.dim
    psi = psis[:, :d]
    S = np.zeros((len(ms), d), np.int64)
    np.cumsum(psi, axis=0, out=S[1:])
    cells = S + np.asarray(initial.cell, np.int64)
    return TrajectoryRecord(ms, ths, phs, cells, taus, S, bool(trunc))


@dataclass
class FlowRecord:
    checkpoints: np.ndarray
    watched_cells: list
    counts: np.ndarray  # (len(checkpoints), len(watched_cells))
    collisions: np.ndarray  # collision count up to each checkpoint
    visited: Counter  # cell -> number of collisions up to t_max
    truncated: bool
    collision_times: np.ndarray


def run_flow(initial, t_max, table, watched_cells, checkpoints=None):
    """Advance the flow by free flights up to time ``t_max``.

    Collisions happen at times ``s_k = tau_0 + ... + tau_{k-1}``, ``k >= 1``;
    a collision is counted at checkpoint ``t`` when ``s_k <= t``.  The state
    the flow starts from (time 0) is not a counted collision.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    checkpoints = np.sort(np.asarray([t_max] if checkpoints is None else checkpoints, dtype=np.float64))
    if checkpoints[-1] > t_max:
        raise ValueError("checkpoints beyond t_max")
    watched = [tuple(int(x) for x in np.atleast_1d(c)) for c in watched_cells]
    times, cells = [], []
    state, clock, truncated = initial, 0.0, False
    while True:
        try:
            nxt, _, tau = step(state, table)
        except TruncatedFlight:
            truncated = True
            break
        if clock + tau > t_max:
            break
        clock += tau
        state = nxt
        times.append(clock)
        cells.append(state.cell)
    ncoll = np.searchsorted(np.asarray(times), checkpoints, side="right")
    counts = np.zeros((len(checkpoints), len(watched)), np.int64)
    for q, c in enumerate(watched):
        cum = np.concatenate([[0], np.cumsum([cell == c for cell in cells])])
        counts[:, q] = cum[ncoll]
    return FlowRecord(checkpoints, watched, counts, ncoll, Counter(cells), truncated,
                      np.asarray(times))


# ---------------------------------------------------------------------------
# ensemble kernels


@njit(cache=True)
def _lookup(cell0, cell1, sup, d):
    for q in range(sup.shape[0]):
        if sup[q, 0] == cell0 and (d == 1 or sup[q, 1] == cell1):
            return q
    return -1


@njit(cache=True)
def map_ensemble(seed, first, count, n, checkpoints, obs_sup, obs_val, obs_len, d,
                 cx, cy, r, cm, cdi, cdj, cum_w, max_cells):
    """Birkhoff sums of cell observables along independent trajectories.

    Observable ``q`` has support ``obs_sup[q, :obs_len[q]]`` (cells, padded to
    two coordinates) and values ``obs_val[q]``.  Returns partial sums
    ``sum_{k < c} beta_q(S_k)`` at each checkpoint ``c``, the positions
    ``S_c`` and a truncation flag per trajectory.  Trajectory ``first + i``
    uses stream ``(seed, first + i)``.
    """
    nq = obs_len.shape[0]
    ncp = checkpoints.shape[0]
    sums = np.zeros((count, nq, ncp))
    pos = np.zeros((count, ncp, 2), np.int64)
    trunc = np.zeros(count, np.bool_)
    for it in range(count):
        key = _rng.stream_key(seed, first + it)
        m, th, ph = _sample_mu(key, 0, cum_w)
        s0 = 0
        s1 = 0
        acc = np.zeros(nq)
        cp = 0
        for k in range(n + 1):
            while cp < ncp and checkpoints[cp] == k:
                for q in range(nq):
                    sums[it, q, cp] = acc[q]
                pos[it, cp, 0] = s0
                pos[it, cp, 1] = s1
                cp += 1
            if k == n or cp == ncp:
                break
            for q in range(nq):
                idx = _lookup(s0, s1, obs_sup[q, : obs_len[q]], d)
                if idx >= 0:
                    acc[q] += obs_val[q, idx]
            m, th, ph, i, j, t, ok = _step(m, th, ph, cx, cy, r, cm, cdi, cdj, max_cells)
            if not ok:
                trunc[it] = True
                break
            s0 += i
            if d == 2:
                s1 += j
    return sums, pos, trunc


@njit(cache=True)
def flight_sample(seed, count, cx, cy, r, cm, cdi, cdj, cum_w, max_cells):
    """Free-flight lengths from independent invariant-measure states.

    Truncated flights are reported as ``inf``.
    """
    out = np.empty(count)
    for it in range(count):
        key = _rng.stream_key(seed, it)
        m, th, ph = _sample_mu(key, 0, cum_w)
        _, _, _, _, _, t, ok = _step(m, th, ph, cx, cy, r, cm, cdi, cdj, max_cells)
        out[it] = t if ok else np.inf
    return out


@njit(cache=True)
def pushforward_sample(seed, count, cx, cy, r, cm, cdi, cdj, cum_w, max_cells):
    """Invariant-measure samples and their images under the quotient map.

    Columns: boundary angle and sine of outgoing angle, before and after.
    """
    out = np.empty((count, 4))
    for it in range(count):
        key = _rng.stream_key(seed, it)
        m, th, ph = _sample_mu(key, 0, cum_w)
        m2, th2, ph2, _, _, _, ok = _step(m, th, ph, cx, cy, r, cm, cdi, cdj, max_cells)
        out[it, 0] = th
        out[it, 1] = np.sin(ph)
        out[it, 2] = th2 if ok else np.nan
        out[it, 3] = np.sin(ph2) if ok else np.nan
    return out


@njit(cache=True)
def flow_ensemble(seed, first, count, times, obs_sup, obs_val, obs_len, d,
                  cx, cy, r, cm, cdi, cdj, cum_w, max_cells):
    """Flow collision statistics at the given times.

    For each trajectory and time ``t``: number of collisions in ``(0, t]``
    and ``sum_l beta_q(l) N_t(l)`` for every observable ``q``.
    """
    nq = obs_len.shape[0]
    nt = times.shape[0]
    ncoll = np.zeros((count, nt), np.int64)
    sums = np.zeros((count, nq, nt))
    trunc = np.zeros(count, np.bool_)
    for it in range(count):
        key = _rng.stream_key(seed, first + it)
        m, th, ph = _sample_mu(key, 0, cum_w)
        s0 = 0
        s1 = 0
        clock = 0.0
        n = 0
        acc = np.zeros(nq)
        cp = 0
        while cp < nt:
            m, th, ph, i, j, t, ok = _step(m, th, ph, cx, cy, r, cm, cdi, cdj, max_cells)
            if not ok:
                trunc[it] = True
                break
            clock += t
            while cp < nt and clock > times[cp]:
                ncoll[it, cp] = n
                for q in range(nq):
                    sums[it, q, cp] = acc[q]
                cp += 1
            s0 += i
            if d == 2:
                s1 += j
            n += 1
            for q in range(nq):
                idx = _lookup(s0, s1, obs_sup[q, : obs_len[q]], d)
                if idx >= 0:
                    acc[q] += obs_val[q, idx]
    return ncoll, sums, trunc


def pack_observables(specs, d):
    """Pad a list of :class:`~lorentzgas.observables.ObservableSpec` for the kernels."""
    nq = len(specs)
    width = max(1, max(len(s.beta) for s in specs))
    sup = np.zeros((nq, width, 2), np.int64)
    val = np.zeros((nq, width))
    ln = np.zeros(nq, np.int64)
    for q, s in enumerate(specs):
        for k, (cell, v) in enumerate(sorted(s.beta.items())):
            cell = tuple(np.atleast_1d(cell))
            if len(cell) != d:
                raise ValueError(f"observable cell {cell} does not match dimension {d}")
            sup[q, k, :d] = cell
            val[q, k] = v
        ln[q] = len(s.beta)
    return sup, val, ln


# ---------------------------------------------------------------------------
# extended-precision map (reversibility checks)


def step_precise(m, theta, phi, table):
    """One map step in mpmath arithmetic at the current ``mp.dps``.

    The hit disk copy is selected by the double-precision flight search;
    flight time, hit point and reflected angles are then recomputed at full
    working precision.  Returns ``(m', theta', phi', i, j, tau)``.
    """
    import mpmath as mp

    cx, cy, r, cm, cdi, cdj, _ = table.arrays
    px = mp.mpf(cx[m]) + mp.mpf(r[m]) * mp.cos(theta)
    py = mp.mpf(cy[m]) + mp.mpf(r[m]) * mp.sin(theta)
    vx, vy = mp.cos(theta + phi), mp.sin(theta + phi)
    _, m2, i, j, cells = _flight(float(px), float(py), float(vx), float(vy), cx, cy, r, cm, cdi, cdj,
                                 table.max_cell_traversal, m)
    if m2 < 0:
        raise TruncatedFlight(cells)
    wx = px - (mp.mpf(cx[m2]) + i)
    wy = py - (mp.mpf(cy[m2]) + j)
    b = wx * vx + wy * vy
    c = wx * wx + wy * wy - mp.mpf(r[m2]) ** 2
    t = c / (mp.sqrt(b * b - c) - b)
    nx = (wx + t * vx) / mp.mpf(r[m2])
    ny = (wy + t * vy) / mp.mpf(r[m2])
    th2 = mp.atan2(ny, nx) % (2 * mp.pi)
    vn = vx * nx + vy * ny
    ux, uy = vx - 2 * vn * nx, vy - 2 * vn * ny
    ph2 = mp.atan2(nx * uy - ny * ux, nx * ux + ny * uy)
    return int(m2), th2, ph2, int(i), int(j), t


def reversal_error(base, k, table, dps=None):
    """Distance between the start point and the point reached by ``k`` steps,
    velocity reversal and ``k`` more steps, in extended precision.

    Nearby orbits separate by a roughly constant factor per collision, so
    double precision cannot retrace more than a few tens of collisions; the
    default working precision grows with ``k`` (``40 + 2 k`` digits).
    """
    import mpmath as mp

    with mp.workdps(dps or 40 + 2 * k):
        m, th, ph = base.disk_id, mp.mpf(base.boundary_angle), mp.mpf(base.outgoing_angle)
        for _ in range(k):
            m, th, ph, *_ = step_precise(m, th, ph, table)
        ph = -ph
        for _ in range(k):
            m, th, ph, *_ = step_precise(m, th, ph, table)
        if m != base.disk_id:
            return float("inf")
        d = table.disks[m]
        x0 = mp.mpf(d.cx) + d.r * mp.cos(base.boundary_angle)
        y0 = mp.mpf(d.cy) + d.r * mp.sin(base.boundary_angle)
        x1, y1 = mp.mpf(d.cx) + d.r * mp.cos(th), mp.mpf(d.cy) + d.r * mp.sin(th)
        dv = abs(mp.atan2(mp.sin(-ph - base.outgoing_angle), mp.cos(-ph - base.outgoing_angle)))
        return float(max(mp.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2), dv))
