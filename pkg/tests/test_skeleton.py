import math

import numpy as np
import pytest

from phlab.errors import NotHyperbolicError
from phlab.ergodic import make_rng
from phlab.product import LinearSystem, build_product
from phlab.skeleton import (
    NewtonDidNotConverge,
    distinct_records,
    extract_skeleton,
    grow_fan,
    grow_manifold,
    heteroclinic_test,
    newton_periodic,
)
from phlab.torus import (
    CAT_MAP,
    IntegerMatrix,
    ToralAutomorphism,
    enumerate_periodic,
    fixed_point_count,
    torus_distance,
)


@pytest.fixture(scope="module")
def cat():
    return LinearSystem(ToralAutomorphism(CAT_MAP))


def test_newton_origin_multipliers(cat):
    rec = newton_periodic(cat, np.array([0.01, 0.02]), 1)
    assert torus_distance(rec.point, np.zeros(2)) < 1e-10
    golden = (3.0 + math.sqrt(5.0)) / 2.0
    assert abs(rec.multipliers[0] - golden) < 1e-10
    assert abs(rec.multipliers[1] - 1.0 / golden) < 1e-10
    assert rec.stable_index == 1
    assert rec.residual < 1e-10
    assert rec.hyperbolic


def test_census_matches_determinant(cat):
    d_mat = IntegerMatrix(CAT_MAP)
    rng = make_rng(123)
    for n in range(1, 6):
        guesses = enumerate_periodic(d_mat, n)
        recs = [newton_periodic(cat, g + 1e-3 * rng.standard_normal(2), n)
                for g in guesses]
        recs = distinct_records(recs)
        assert len(recs) == fixed_point_count(d_mat, n)
        for rec in recs:
            # independent re-verification of periodicity
            x = rec.point
            for _ in range(rec.period):
                x = cat.step(x)
            assert torus_distance(x, rec.point) < 1e-10


def test_stable_index_constant_along_orbit(cat):
    d_mat = IntegerMatrix(CAT_MAP)
    pts = [p for p in enumerate_periodic(d_mat, 3) if np.linalg.norm(p) > 1e-9]
    rec = newton_periodic(cat, pts[0], 3)
    x = rec.point
    for _ in range(rec.period):
        x = cat.step(x)
        rec_i = newton_periodic(cat, x, 3)
        assert rec_i.stable_index == rec.stable_index


def test_newton_nonconvergence_reported(cat):
    with pytest.raises(NewtonDidNotConverge) as err:
        newton_periodic(cat, np.array([0.123, 0.456]), 1, max_iter=0)
    assert err.value.residual > 0


def test_newton_rejects_neutral_multiplier(system):
    # the plain deformed map has a unit multiplier at p
    with pytest.raises(NotHyperbolicError):
        newton_periodic(system, system.chart_p.center, 1)


def test_tilde_fixed_point_indices(tilde):
    # seed inside the deformation slab (offsets below delta/k), where the
    # basins of p and q themselves live
    rec_p = newton_periodic(tilde, tilde.chart_p.center + 1e-9, 1)
    rec_q = newton_periodic(tilde, tilde.chart_q.center + 1e-9, 1)
    assert rec_p.stable_index == 3
    assert rec_q.stable_index == 1
    for rec in (rec_p, rec_q):
        assert np.min(np.abs(rec.multipliers - 1.0)) > 1e-6


def test_tilde_satellite_fixed_points(tilde):
    """The eps-term splits the plateau fixed segment at q into q itself plus
    a pair of hyperbolic index-2 satellites where the bump crosses the level
    (ls-1)/(ls-1-ls*eps)."""
    d, k = tilde.params.delta, tilde.params.k
    offset = 0.8 * d / k * tilde.ls  # just outside the plateau half-width
    guess = tilde.chart_q.from_chart(np.array([0.0, 0.0, 0.0, offset]))
    rec = newton_periodic(tilde, guess, 1)
    assert torus_distance(rec.point, tilde.chart_q.center) > 1e-8
    assert rec.stable_index == 2


def test_manifold_straight_on_linear(cat):
    rec = newton_periodic(cat, np.zeros(2), 1)
    arc = grow_manifold(cat, rec, "unstable", 2.0, 1e-3)
    assert arc.arc_length >= 2.0
    assert np.allclose(arc.polyline[0], rec.point)
    u = cat.axes[:, 0]
    from phlab.torus import torus_displacement

    gaps = torus_displacement(arc.polyline[1:], arc.polyline[:-1])
    cross = gaps[:, 0] * u[1] - gaps[:, 1] * u[0]
    assert np.max(np.abs(cross)) < 1e-9
    assert np.linalg.norm(np.abs(arc.tangent_at_root()) - np.abs(u)) < 1e-6


def test_manifold_zero_target(cat):
    rec = newton_periodic(cat, np.zeros(2), 1)
    arc = grow_manifold(cat, rec, "unstable", 0.0, 1e-3)
    assert arc.arc_length == 0.0
    assert len(arc.polyline) == 1


def test_manifold_invariance(cat):
    """Images of arc points stay within resolution of the longer arc."""
    rec = newton_periodic(cat, np.zeros(2), 1)
    short = grow_manifold(cat, rec, "unstable", 1.0, 1e-3)
    longer = grow_manifold(cat, rec, "unstable", 3.0, 1e-3)
    images = cat.step(short.polyline[::20])
    for img in images:
        dist = np.min(torus_distance(longer.polyline, img))
        assert dist < 1e-3


def test_manifold_resolution_control(cat):
    rec = newton_periodic(cat, np.zeros(2), 1)
    arc = grow_manifold(cat, rec, "unstable", 1.5, 5e-4)
    from phlab.torus import torus_displacement

    gaps = np.linalg.norm(torus_displacement(arc.polyline[1:], arc.polyline[:-1]), axis=1)
    assert np.max(gaps) <= 5e-4 + 1e-12


def test_two_dimensional_fan_on_product(cat):
    prod = build_product(LinearSystem(ToralAutomorphism([[13, 8], [8, 5]])),
                         ToralAutomorphism(CAT_MAP))
    rec = newton_periodic(prod, np.zeros(4) + 1e-4, 1)
    assert rec.stable_index == 2
    fan = grow_fan(prod, rec, "unstable", 0.5, 2e-3, rays=8)
    assert len(fan) == 8
    base_u = prod.base.axes[:, 0]
    fiber_u = prod.fiber.splitting.eigenvectors[:, 0]
    plane = np.zeros((4, 2))
    plane[:2, 0] = base_u
    plane[2:, 1] = fiber_u
    for arc in fan:
        t = arc.tangent_at_root()
        proj = plane @ (plane.T @ t)
        assert np.linalg.norm(proj - t) < 1e-6


def test_heteroclinic_same_point(cat):
    rec = newton_periodic(cat, np.zeros(2), 1)
    ua = grow_manifold(cat, rec, "unstable", 1.0, 1e-3)
    sa = grow_manifold(cat, rec, "stable", 1.0, 1e-3)
    ev = heteroclinic_test(ua, sa, 1e-4)
    assert ev.min_distance < 1e-9  # both pass through the root


def test_homoclinic_density_linear(cat):
    """Long unstable/stable arcs of the origin approach each other off-root."""
    rec = newton_periodic(cat, np.zeros(2), 1)
    ua = grow_manifold(cat, rec, "unstable", 4.5, 2e-3)
    sa = grow_manifold(cat, rec, "stable", 4.5, 2e-3)
    # exclude a neighborhood of the root to witness a true homoclinic point
    keep_u = ua.polyline[torus_distance(ua.polyline, rec.point) > 0.2]
    keep_s = sa.polyline[torus_distance(sa.polyline, rec.point) > 0.2]
    from phlab.skeleton import ManifoldArc

    ev = heteroclinic_test(
        ManifoldArc(rec, "unstable", keep_u, 0.0, ua.seed_direction),
        ManifoldArc(rec, "stable", keep_s, 0.0, sa.seed_direction),
        1e-2,
    )
    assert ev.min_distance < 1e-2


def test_short_arc_distance_is_separation(cat):
    d_mat = IntegerMatrix(CAT_MAP)
    pts = [p for p in enumerate_periodic(d_mat, 3) if np.linalg.norm(p) > 1e-9]
    far = max(pts, key=lambda p: float(torus_distance(p, np.zeros(2))))
    rec0 = newton_periodic(cat, np.zeros(2), 1)
    rec1 = newton_periodic(cat, far, 3)
    ua = grow_manifold(cat, rec0, "unstable", 1e-4, 1e-5)
    sa = grow_manifold(cat, rec1, "stable", 1e-4, 1e-5)
    ev = heteroclinic_test(ua, sa, 1e-4)
    sep = float(torus_distance(rec0.point, rec1.point))
    assert abs(ev.min_distance - sep) < 1e-2


def test_heteroclinic_requires_kinds(cat):
    rec = newton_periodic(cat, np.zeros(2), 1)
    ua = grow_manifold(cat, rec, "unstable", 0.5, 1e-3)
    with pytest.raises(ValueError):
        heteroclinic_test(ua, ua, 1e-4)


def test_skeleton_single_record(cat):
    rec = newton_periodic(cat, np.zeros(2), 1)
    cand = extract_skeleton([rec], {0: {"unstable": [], "stable": []}})
    assert cand.members == [rec]


def test_skeleton_mutual_pair_collapses(cat):
    d_mat = IntegerMatrix(CAT_MAP)
    pts = [p for p in enumerate_periodic(d_mat, 3) if np.linalg.norm(p) > 1e-9]
    far = max(pts, key=lambda p: float(torus_distance(p, np.zeros(2))))
    recs = [newton_periodic(cat, np.zeros(2), 1), newton_periodic(cat, far, 3)]
    arcs = {
        i: {"unstable": grow_fan(cat, r, "unstable", 3.0, 2e-3),
            "stable": grow_fan(cat, r, "stable", 3.0, 2e-3)}
        for i, r in enumerate(recs)
    }
    cand = extract_skeleton(recs, arcs, tol=2e-3)
    assert cand.connection_matrix[0, 1] and cand.connection_matrix[1, 0]
    assert len(cand.members) == 1
    assert cand.members[0].period == 1  # tie-break keeps the lower period


def test_skeleton_short_arcs_keep_both(cat):
    d_mat = IntegerMatrix(CAT_MAP)
    pts = [p for p in enumerate_periodic(d_mat, 3) if np.linalg.norm(p) > 1e-9]
    far = max(pts, key=lambda p: float(torus_distance(p, np.zeros(2))))
    recs = [newton_periodic(cat, np.zeros(2), 1), newton_periodic(cat, far, 3)]
    arcs = {
        i: {"unstable": grow_fan(cat, r, "unstable", 1e-4, 1e-5),
            "stable": grow_fan(cat, r, "stable", 1e-4, 1e-5)}
        for i, r in enumerate(recs)
    }
    cand = extract_skeleton(recs, arcs, tol=1e-6)
    assert len(cand.members) == 2  # no evidence of connection: all retained


def test_skeleton_index_mismatch_rejected(cat, tilde):
    rec1 = newton_periodic(cat, np.zeros(2), 1)
    rec_p = newton_periodic(tilde, tilde.chart_p.center, 1)
    with pytest.raises(ValueError):
        extract_skeleton([rec1, rec_p], {0: {"unstable": [], "stable": []},
                                         1: {"unstable": [], "stable": []}})
