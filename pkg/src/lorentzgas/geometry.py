"""Periodic disk scatterers: table validation, corridor detection, free flights.

Scatterers are disks placed in the unit cell and repeated over Z^2.  For the
one-dimensional tube (``dim == 1``) the vertical coordinate is periodic, so
the geometry is the same doubly periodic array and only the horizontal
lattice translate counts as a cell label.
"""
from dataclasses import dataclass, field
from functools import cached_property
from math import gcd, hypot

import numpy as np
from numba import njit

GRAZING_TOL = 1e-9
DEFAULT_MAX_CELLS = 10**6


class TruncatedFlight(RuntimeError):
    """Raised when a free flight crosses more cells than the table allows."""

    def __init__(self, cells, origin=None, direction=None):
        super().__init__(f"no collision within {cells} cells")
        self.cells = cells
        self.origin = origin
        self.direction = direction


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class BilliardTable:
    """Z^d-periodic configuration of disks in the unit cell.

    ``corridor_directions`` is filled on first access by
    :func:`classify_horizon` with the default search height.
    """

    dim: int
    disks: tuple
    max_cell_traversal: int = DEFAULT_MAX_CELLS
    direction_search_height: int = field(default=5, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        disks = tuple(d if isinstance(d, Disk) else Disk(*map(float, d)) for d in self.disks)
        object.__setattr__(self, "disks", disks)
        if self.max_cell_traversal < 1:
            raise ValueError("max_cell_traversal must be positive")

    @cached_property
    def corridor_directions(self):
        rep = classify_horizon(self, self.direction_search_height)
        return tuple(c.direction for c in rep.corridors)

    @property
    def infinite_horizon(self):
        return classify_horizon(self, self.direction_search_height).infinite

    @cached_property
    def arrays(self):
        """Flat arrays consumed by the numba kernels."""
        cx = np.array([d.cx for d in self.disks], dtype=np.float64)
        cy = np.array([d.cy for d in self.disks], dtype=np.float64)
        r = np.array([d.r for d in self.disks], dtype=np.float64)
        cand = []
        for m, d in enumerate(self.disks):
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    # closest point of the unit square to the translated center
                    x, y = d.cx + di, d.cy + dj
                    qx, qy = min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)
                    if hypot(x - qx, y - qy) < d.r:
                        cand.append((m, di, dj))
        cand = np.array(cand, dtype=np.int64).reshape(-1, 3)
        weights = r / r.sum()
        return cx, cy, r, cand[:, 0].copy(), cand[:, 1].copy(), cand[:, 2].copy(), np.cumsum(weights)

    def perimeter(self):
        return float(sum(2 * np.pi * d.r for d in self.disks))


def canonical_table(dim=2, r=0.4, max_cell_traversal=DEFAULT_MAX_CELLS):
    """One disk of radius ``r`` centred in the unit cell."""
    return BilliardTable(dim, (Disk(0.5, 0.5, r),), max_cell_traversal)


@dataclass(frozen=True)
class Ray:
    origin: tuple
    direction: tuple

    def __post_init__(self):
        ox, oy = map(float, self.origin)
        dx, dy = map(float, self.direction)
        if abs(hypot(dx, dy) - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector, |d| = {hypot(dx, dy)!r}")
        object.__setattr__(self, "origin", (ox, oy))
        object.__setattr__(self, "direction", (dx, dy))


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        return "OK" if self.ok else "; ".join(self.violations)


def validate_table(table):
    """Check radius bounds and pairwise disjointness of all periodic copies."""
    out = []
    if not table.disks:
        return ValidationReport(["no disks"])
    for m, d in enumerate(table.disks):
        if not d.r > 0:
            out.append(f"disk {m}: radius must be positive")
        if d.r >= 0.5:
            out.append(f"disk {m}: radius >= 1/2")
        if not (0 <= d.cx < 1 and 0 <= d.cy < 1):
            out.append(f"disk {m}: center outside [0,1)^2")
    for i, a in enumerate(table.disks):
        for j in range(i, len(table.disks)):
            b = table.disks[j]
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if i == j and di == 0 and dj == 0:
                        continue
                    if hypot(b.cx + di - a.cx, b.cy + dj - a.cy) <= a.r + b.r:
                        out.append(f"overlap: disk {i} and disk {j} at translate ({di},{dj})")
    return ValidationReport(out)


@dataclass(frozen=True)
class Corridor:
    direction: tuple  # unit vector
    lattice_direction: tuple  # primitive integer (p, q)
    width: float


@dataclass
class HorizonReport:
    corridors: list
    dim: int

    @property
    def infinite(self):
        if self.dim == 1:
            return any(c.lattice_direction == (1, 0) for c in self.corridors)
        return len({c.lattice_direction for c in self.corridors}) >= 2

    @property
    def kind(self):
        return "infinite" if self.infinite else "finite"

    def __str__(self):
        if not self.infinite:
            return "finite horizon"
        dirs = ",".join(f"({p},{q})" for p, q in sorted({c.lattice_direction for c in self.corridors}, reverse=True))
        return f"infinite horizon, corridors: {dirs}"


def _free_gaps(offsets, radii, period):
    """Widths of the uncovered arcs of a circle of length ``period``."""
    if np.any(2 * radii >= period):
        return []
    lo = np.mod(offsets - radii, period)
    order = np.argsort(lo)
    lo, rr = lo[order], radii[order]
    hi = lo + 2 * rr
    # unwrap intervals into [lo0, lo0 + period) and sweep
    gaps = []
    reach = hi[0]
    for k in range(1, len(lo)):
        if lo[k] > reach:
            gaps.append(lo[k] - reach)
        reach = max(reach, hi[k])
    wrap = lo[0] + period - reach
    if wrap > 0:
        gaps.append(wrap)
    return gaps


def _primitive_directions(height, dim):
    if dim == 1:
        return [(1, 0)]
    dirs = {(1, 0), (0, 1)}
    for p in range(0, height + 1):
        for q in range(-height, height + 1):
            if (p, q) == (0, 0) or gcd(p, abs(q)) != 1:
                continue
            if p == 0 and q < 0:
                continue
            dirs.add((p, q))
    return sorted(dirs)


def classify_horizon(table, direction_search_height=5):
    """Find rational directions along which some line misses every disk copy.

    Lines with primitive lattice direction (p, q) see the disk copies
    projected onto the normal axis as a grid of period 1/sqrt(p^2 + q^2); a
    corridor is a gap in the union of the projected intervals.
    """
    if direction_search_height < 1:
        raise ValueError("direction_search_height must be >= 1")
    centers = np.array([(d.cx, d.cy) for d in table.disks])
    radii = np.array([d.r for d in table.disks])
    found = []
    for p, q in _primitive_directions(direction_search_height, table.dim):
        L = hypot(p, q)
        nx, ny = -q / L, p / L
        gaps = _free_gaps(centers @ np.array([nx, ny]), radii, 1.0 / L)
        if gaps:
            found.append(Corridor((p / L, q / L), (p, q), float(max(gaps))))
    return HorizonReport(found, table.dim)


@njit(cache=True)
def _flight(px, py, vx, vy, cx, cy, r, cand_m, cand_di, cand_dj, max_cells, skip_m):
    """First entering intersection of the ray with a disk copy.

    Walks unit cells in traversal order.  Returns ``(t, m, i, j, cells)``
    where disk ``m`` is hit on its copy translated by ``(i, j)`` in the frame
    of ``(px, py)``; ``m == -1`` flags a truncated flight.  The copy
    ``(skip_m, 0, 0)`` is the disk the ray leaves from and is never tested.
    """
    ix = int(np.floor(px))
    iy = int(np.floor(py))
    inf = np.inf
    if vx > 0.0:
        sx, tmx, tdx = 1, (ix + 1 - px) / vx, 1.0 / vx
    elif vx < 0.0:
        sx, tmx, tdx = -1, (ix - px) / vx, -1.0 / vx
    else:
        sx, tmx, tdx = 0, inf, inf
    if vy > 0.0:
        sy, tmy, tdy = 1, (iy + 1 - py) / vy, 1.0 / vy
    elif vy < 0.0:
        sy, tmy, tdy = -1, (iy - py) / vy, -1.0 / vy
    else:
        sy, tmy, tdy = 0, inf, inf
    best = inf
    bm, bi, bj = -1, 0, 0
    nc = cand_m.shape[0]
    for cell in range(max_cells):
        for c in range(nc):
            m = cand_m[c]
            i = ix + cand_di[c]
            j = iy + cand_dj[c]
            if m == skip_m and i == 0 and j == 0:
                continue
            wx = px - (cx[m] + i)
            wy = py - (cy[m] + j)
            b = wx * vx + wy * vy
            if b >= 0.0:
                continue
            ct = wx * wx + wy * wy - r[m] * r[m]
            disc = b * b - ct
            if disc <= 0.0:
                continue
            sq = np.sqrt(disc)
            # |v.n| at the hit point equals sq / r
            if sq < 1e-9 * r[m]:
                continue
            t = ct / (sq - b)
            if t > 1e-12 and t < best:
                best, bm, bi, bj = t, m, i, j
        texit = min(tmx, tmy)
        if best <= texit:
            return best, bm, bi, bj, cell + 1
        if tmx < tmy:
            ix += sx
            tmx += tdx
        else:
            iy += sy
            tmy += tdy
    return inf, -1, 0, 0, max_cells


@dataclass(frozen=True)
class Collision:
    flight_time: float
    cell_offset: tuple
    disk_id: int
    hit_point: tuple
    inward_normal: tuple  # unit normal pointing into the billiard domain
    lattice_translate: tuple  # full (i, j) translate of the hit copy


def next_collision(ray, table, skip_disk=-1):
    """Next scatterer hit by ``ray``.

    ``cell_offset`` is the lattice translate of the hit disk copy relative to
    the frame the ray origin is expressed in (first coordinate only when
    ``dim == 1``).  ``inward_normal`` points from the scatterer into the
    domain the particle moves in, so it can be passed to :func:`reflect`.  Raises :class:`TruncatedFlight` past
    ``table.max_cell_traversal`` cells.
    """
    cx, cy, r, cm, cdi, cdj, _ = table.arrays
    (px, py), (vx, vy) = ray.origin, ray.direction
    t, m, i, j, cells = _flight(px, py, vx, vy, cx, cy, r, cm, cdi, cdj, table.max_cell_traversal, skip_disk)
    if m < 0:
        raise TruncatedFlight(cells, ray.origin, ray.direction)
    ccx, ccy = cx[m] + i, cy[m] + j
    hx, hy = px + t * vx, py + t * vy
    nx, ny = hx - ccx, hy - ccy
    nn = hypot(nx, ny)
    nx, ny = nx / nn, ny / nn
    hit = (float(ccx + r[m] * nx), float(ccy + r[m] * ny))
    off = (int(i),) if table.dim == 1 else (int(i), int(j))
    return Collision(float(t), off, int(m), hit, (float(nx), float(ny)), (int(i), int(j)))


def reflect(direction, normal, tol=1e-9):
    """Specular reflection ``v - 2 (v.n) n`` of an incoming velocity."""
    v = np.asarray(direction, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1) > tol or abs(np.linalg.norm(n) - 1) > tol:
        raise ValueError("direction and normal must be unit vectors")
    vn = float(v @ n)
    if vn >= tol:
        raise ValueError(f"velocity is not incoming (v.n = {vn:.3g})")
    return v - 2.0 * vn * n
