import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assn.quadrature import (
    FOUR_PI,
    QuadratureError,
    QuadratureSet,
    build_icosahedron_quadrature,
    export_quadrature,
    load_quadrature,
    n_ordinates,
    spherical_polygon_area,
)


@pytest.mark.parametrize("order, nq", [(2, 12), (3, 42), (4, 92), (5, 162), (8, 492), (15, 1962)])
def test_ordinate_count(order, nq):
    q = build_icosahedron_quadrature(order)
    assert q.nq == nq == n_ordinates(order)


@pytest.mark.parametrize("order", [2, 3, 4, 5, 8])
def test_invariants(order):
    q = build_icosahedron_quadrature(order)
    assert np.all(np.abs(np.linalg.norm(q.points, axis=1) - 1.0) < 1e-12)
    assert np.all(q.weights > 0)
    assert abs(q.weights.sum() - FOUR_PI) < 1e-12 * FOUR_PI
    assert abs(q.integrate(np.ones(q.nq)) - FOUR_PI) < 1e-12
    assert np.min(np.linalg.norm(q.points - [0.0, 0.0, 1.0], axis=1)) < 1e-12
    q.validate()


def test_orientation_edge_in_xz_plane(q2):
    # the pole's neighbours: one of them lies in the x-z half-plane with x > 0
    pole = np.argmax(q2.points[:, 2])
    d = np.linalg.norm(q2.points - q2.points[pole], axis=1)
    nbrs = q2.points[np.argsort(d)[1:6]]
    hit = (np.abs(nbrs[:, 1]) < 1e-12) & (nbrs[:, 0] > 0)
    assert hit.sum() == 1


def test_order_below_two_rejected():
    with pytest.raises(ValueError):
        build_icosahedron_quadrature(1)


@pytest.mark.parametrize("order", [3, 4, 5])
def test_low_moments(order):
    q = build_icosahedron_quadrature(order)
    for k in range(3):
        assert abs(q.integrate(q.points[:, k])) < 1e-12
        assert q.integrate(q.points[:, k] ** 2) == pytest.approx(FOUR_PI / 3, rel=1e-3)


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_antipodal_symmetry(order):
    q = build_icosahedron_quadrature(order)
    for i, p in enumerate(q.points):
        d = np.linalg.norm(q.points + p, axis=1)
        j = np.argmin(d)
        assert d[j] < 1e-9
        assert q.weights[j] == pytest.approx(q.weights[i], rel=1e-12)


def test_vertices_carry_pentagonal_cells(q4):
    # the 12 icosahedron vertices have the smallest dual cells
    five = np.sort(q4.weights)[:12]
    assert np.ptp(five) < 1e-12
    assert np.sort(q4.weights)[12] > five[0]


def test_deterministic():
    a = build_icosahedron_quadrature(4)
    b = build_icosahedron_quadrature(4)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.weights, b.weights)


def test_octant_triangle_area():
    tri = np.eye(3)
    assert spherical_polygon_area(tri) == pytest.approx(np.pi / 2, rel=1e-14)


def _van_oosterom(a, b, c):
    # solid angle of a spherical triangle, Van Oosterom & Strackee
    num = abs(np.dot(a, np.cross(b, c)))
    den = 1.0 + np.dot(a, b) + np.dot(b, c) + np.dot(c, a)
    return 2.0 * np.arctan2(num, den)


unit = st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(lambda v: 0.2 < np.linalg.norm(v))


@settings(max_examples=60, deadline=None)
@given(unit, st.floats(0.05, 0.6), st.floats(0.05, 0.6), st.floats(0, 2 * np.pi))
def test_triangle_area_matches_solid_angle_oracle(v, s1, s2, rot):
    a = np.asarray(v) / np.linalg.norm(v)
    t1 = np.cross(a, [0.3, 0.5, 0.8])
    if np.linalg.norm(t1) < 1e-3:
        t1 = np.cross(a, [1.0, 0.0, 0.0])
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(a, t1)
    b = a + s1 * t1
    c = a + s2 * (np.cos(rot) * t1 + np.sin(rot) * t2)
    tri = np.array([a, b / np.linalg.norm(b), c / np.linalg.norm(c)])
    if abs(np.sin(rot)) < 0.05:
        return  # nearly degenerate
    assert spherical_polygon_area(tri) == pytest.approx(
        _van_oosterom(*tri), rel=1e-9, abs=1e-13
    )


def test_export_load_roundtrip(tmp_path, q2):
    path = tmp_path / "q2.txt"
    export_quadrature(q2, path)
    back = load_quadrature(path)
    assert back.nq == 12 and back.order == 2
    assert np.max(np.abs(back.points - q2.points)) <= 1e-15
    assert np.max(np.abs(back.weights - q2.weights)) <= 1e-15


def test_export_line_count(tmp_path, q4):
    path = tmp_path / "q4.txt"
    export_quadrature(q4, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 92
    assert all(len(l.split()) == 4 for l in lines)


def test_export_unwritable(tmp_path, q2):
    with pytest.raises(OSError):
        export_quadrature(q2, tmp_path / "missing" / "q.txt")


def test_load_empty(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("")
    with pytest.raises(QuadratureError):
        load_quadrature(p)


def test_load_zero_norm_point_names_line(tmp_path, q2):
    p = tmp_path / "bad.txt"
    export_quadrature(q2, p)
    lines = p.read_text().splitlines()
    lines[4] = f"0.0 0.0 0.0 {q2.weights[4]!r}"
    p.write_text("\n".join(lines))
    with pytest.raises(QuadratureError, match=":5:"):
        load_quadrature(p)


def test_load_parse_error_names_line(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 0 1 1.0\n0 0 1 x\n")
    with pytest.raises(QuadratureError, match=":2:"):
        load_quadrature(p)


def test_load_weight_sum_violation(tmp_path, q2):
    p = tmp_path / "bad.txt"
    rows = np.column_stack([q2.points, q2.weights * (1 + 1e-6)])
    np.savetxt(p, rows)
    with pytest.raises(QuadratureError, match="4\\*pi"):
        load_quadrature(p)


def test_handmade_set_order_zero(tmp_path):
    # octahedron with equal weights: a valid set that is not icosahedral
    pts = np.vstack([np.eye(3), -np.eye(3)])
    p = tmp_path / "octa.txt"
    np.savetxt(p, np.column_stack([pts, np.full(6, FOUR_PI / 6)]), fmt="%.17g")
    q = load_quadrature(p)
    assert isinstance(q, QuadratureSet) and q.nq == 6 and q.order == 0
