from math import cos, pi, sin, sqrt

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from lorentzgas.geometry import (BilliardTable, Disk, Ray, TruncatedFlight, canonical_table, classify_horizon,
                                 next_collision, reflect, validate_table)

angles = st.floats(0, 2 * pi, allow_nan=False)


def unit(a):
    return (cos(a), sin(a))


# validation


def test_canonical_table_is_valid():
    assert validate_table(canonical_table(2)).ok


def test_radius_bound_violation():
    rep = validate_table(BilliardTable(2, (Disk(0.5, 0.5, 0.6),)))
    assert not rep.ok
    assert any("radius >= 1/2" in v for v in rep.violations)


def test_overlap_violation():
    rep = validate_table(BilliardTable(2, (Disk(0.25, 0.5, 0.3), Disk(0.75, 0.5, 0.3))))
    assert any("overlap" in v for v in rep.violations)


def test_empty_table_reported():
    assert not validate_table(BilliardTable(2, ())).ok


def test_bad_dim_rejected():
    with pytest.raises(ValueError):
        BilliardTable(3, (Disk(0.5, 0.5, 0.4),))


def test_ray_needs_unit_direction():
    with pytest.raises(ValueError):
        Ray((0, 0), (1.0, 1.0))


# horizon


def test_canonical_corridors():
    rep = classify_horizon(canonical_table(2), 3)
    assert rep.infinite
    widths = {c.lattice_direction: c.width for c in rep.corridors}
    assert set(widths) == {(1, 0), (0, 1)}
    assert widths[(1, 0)] == pytest.approx(0.2, abs=1e-12)
    assert widths[(0, 1)] == pytest.approx(0.2, abs=1e-12)
    assert str(rep) == "infinite horizon, corridors: (1,0),(0,1)"


def test_nearly_touching_disks_keep_thin_corridor():
    rep = classify_horizon(canonical_table(2, r=0.49999), 3)
    assert rep.infinite
    assert max(c.width for c in rep.corridors) == pytest.approx(2e-5, rel=1e-6)


def test_tube_horizontal_corridor():
    rep = classify_horizon(canonical_table(1), 3)
    assert rep.infinite
    assert [c.lattice_direction for c in rep.corridors] == [(1, 0)]


def test_small_disks_have_many_corridors():
    rep = classify_horizon(canonical_table(2, r=0.1), 5)
    assert {(1, 1), (1, -1), (1, 2)} <= {c.lattice_direction for c in rep.corridors}


def test_search_height_must_be_positive():
    with pytest.raises(ValueError):
        classify_horizon(canonical_table(2), 0)


def test_corridor_directions_cached_on_table():
    t = canonical_table(2)
    assert len(t.corridor_directions) >= 2 and t.infinite_horizon


# free flights


def test_normal_incidence_from_below():
    c = next_collision(Ray((0.5, 0.0), (0.0, 1.0)), canonical_table(2))
    assert c.flight_time == pytest.approx(0.1, abs=1e-12)
    assert c.hit_point == pytest.approx((0.5, 0.1), abs=1e-12)
    assert c.cell_offset == (0, 0)


def test_flight_across_axis_gap():
    c = next_collision(Ray((0.9, 0.5), (1.0, 0.0)), canonical_table(2))
    assert c.cell_offset == (1, 0)
    assert c.flight_time == pytest.approx(0.2, abs=1e-12)
    assert c.hit_point == pytest.approx((1.1, 0.5), abs=1e-12)
    assert c.inward_normal == pytest.approx((-1.0, 0.0))


def test_corridor_centre_line_truncates():
    t = canonical_table(2, max_cell_traversal=1000)
    with pytest.raises(TruncatedFlight) as e:
        next_collision(Ray((0.0, 0.0), (1.0, 0.0)), t)
    assert e.value.cells >= 1000


def test_tube_offset_is_horizontal_only():
    c = next_collision(Ray((0.5, 0.0), (0.0, -1.0)), canonical_table(1))
    assert c.cell_offset == (0,)
    assert c.lattice_translate == (0, -1)


@given(theta=angles, phi=st.floats(-1.5, 1.5))
def test_flight_consistency(theta, phi):
    t = canonical_table(2)
    d = t.disks[0]
    origin = (d.cx + d.r * cos(theta), d.cy + d.r * sin(theta))
    v = unit(theta + phi)
    try:
        c = next_collision(Ray(origin, v), t, skip_disk=0)
    except TruncatedFlight:
        return
    assert c.flight_time > 0
    end = np.add(origin, c.flight_time * np.asarray(v))
    assert np.allclose(end, c.hit_point, atol=1e-9)
    ctr = (d.cx + c.lattice_translate[0], d.cy + c.lattice_translate[1])
    assert np.hypot(*np.subtract(c.hit_point, ctr)) == pytest.approx(d.r, abs=1e-12)
    # the particle arrives against the outward surface normal
    assert np.dot(v, c.inward_normal) < 0


# reflection


def test_reflect_examples():
    assert reflect((0, -1), (0, 1)) == pytest.approx((0, 1))
    h = sqrt(2) / 2
    assert reflect((h, -h), (0, 1)) == pytest.approx((h, h))


def test_reflect_grazing_keeps_tangent():
    assert reflect((1.0, 0.0), (0.0, 1.0)) == pytest.approx((1.0, 0.0))


def test_reflect_rejects_outgoing():
    with pytest.raises(ValueError):
        reflect((0, 1), (0, 1))


@given(a=angles, b=st.floats(0.01, pi - 0.01))
def test_reflect_speed_and_specularity(a, b):
    n = np.array(unit(a))
    # incoming: angle between v and n strictly greater than pi/2
    v = np.array(unit(a + pi / 2 + b))
    assume(v @ n < -1e-9)
    w = reflect(v, n)
    assert abs(np.linalg.norm(w) - 1) < 1e-12
    assert w @ n == pytest.approx(-(v @ n), abs=1e-12)
    tan = np.array([-n[1], n[0]])
    assert w @ tan == pytest.approx(v @ tan, abs=1e-12)
