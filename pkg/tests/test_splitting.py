import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadproj import (
    Box, DimensionMismatch, InvalidGamma, Method, ProductSet, Quadric, QuadricProjector,
    SolverConfig, Termination, ap_solve, cartesian_project, check_membership, dr_solve,
    drf_solve, project_box, project_exact, restart_flip, solve,
)
from quadproj.splitting import DRF_GAMMA_BOUND

from factories import quadric_from_spectrum, random_valid_quadric
from oracles import kkt_oracle

UNIT_CIRCLE = Quadric(np.eye(2), np.zeros(2), -1.0)
HYPERBOLA = Quadric(np.diag([1.0, -1.0]), np.zeros(2), -1.0)
# box meets only the right branch; x0 sits next to the left one
TRAP_BOX = Box([-0.95, -0.1], [1.05, 0.1])
TRAP_X0 = np.array([-1.2, 0.05])


def assert_feasible(q, box, x, cfg=None):
    cfg = cfg or SolverConfig()
    dev, inside = check_membership(q, box, x, cfg)
    assert dev <= cfg.deviation_tol and inside


class TestBox:
    def test_examples(self):
        box = Box([0, 0], [1, 1])
        np.testing.assert_array_equal(project_box(box, [2, -1]), [1, 0])
        np.testing.assert_array_equal(project_box(box, [0.5, 0.5]), [0.5, 0.5])
        np.testing.assert_array_equal(project_box(box, [1.0, 0.3]), [1.0, 0.3])

    def test_invalid(self):
        with pytest.raises(ValueError):
            Box([1, 0], [0, 1])
        with pytest.raises(DimensionMismatch):
            project_box(Box([0, 0], [1, 1]), [1, 2, 3])

    def test_round_trip_dict(self):
        box = Box([0, -1], [2, 1])
        back = Box.from_dict(box.to_dict())
        np.testing.assert_array_equal(back.lower, box.lower)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8))
    def test_idempotent_nonexpansive(self, seed, n):
        rng = np.random.default_rng(seed)
        lo = rng.normal(size=n)
        box = Box(lo, lo + rng.uniform(0, 2, n))
        x, y = rng.normal(size=n) * 3, rng.normal(size=n) * 3
        px, py = project_box(box, x), project_box(box, y)
        np.testing.assert_array_equal(project_box(box, px), px)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-15
        assert box.contains(px)


class TestMembership:
    def test_examples(self):
        box = Box([-2, -2], [2, 2])
        assert check_membership(UNIT_CIRCLE, box, [1, 0]) == (0.0, True)
        assert check_membership(UNIT_CIRCLE, box, [2, 0])[0] == 3.0
        assert check_membership(UNIT_CIRCLE, Box([0, 0], [1, 1]), [1 + 1e-12, 0.5])[1]
        assert not check_membership(UNIT_CIRCLE, Box([0, 0], [1, 1]), [1 + 1e-6, 0.5])[1]


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.method, cfg.max_iter, cfg.deviation_tol, cfg.box_tol, cfg.gamma, cfg.restart,
                cfg.cycle_tol, cfg.stall_tol) == (Method.APE, 1000, 1e-6, 1e-9, 0.2, True, 1e-10, 1e-12)

    def test_dict_round_trip(self):
        cfg = SolverConfig(method="drf", gamma=0.1)
        assert SolverConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            SolverConfig.from_dict({"speed": 3})

    def test_method_parsing(self):
        assert Method.parse("DR-F") is Method.DRF


class TestAlternatingProjections:
    def test_one_shot_is_exact_projection(self):
        rng = np.random.default_rng(11)
        q = quadric_from_spectrum(rng, [4.0, 1.0])
        x0 = q.center() + np.array([2.0, 1.5])
        p = project_exact(q, x0).point
        box = Box(np.minimum(x0, p) - 0.1, np.maximum(x0, p) + 0.1)
        point, trace = ap_solve(q, box, x0, SolverConfig(method="ape"))
        assert trace.termination is Termination.FEASIBLE and trace.iterations == 1
        np.testing.assert_array_equal(point, p)

    def test_start_in_target(self):
        box = Box([0, 0], [2, 2])
        for method in ("ape", "apc", "apg"):
            point, trace = ap_solve(UNIT_CIRCLE, box, [0.6, 0.8], SolverConfig(method=method))
            assert trace.iterations == 0 and trace.termination is Termination.FEASIBLE
            np.testing.assert_array_equal(point, [0.6, 0.8])

    def test_trap_cycles_without_restart(self):
        point, trace = ap_solve(HYPERBOLA, TRAP_BOX, TRAP_X0, SolverConfig(restart=False))
        assert trace.termination is Termination.CYCLE
        assert trace.restarts == 0
        assert TRAP_BOX.contains(point)

    def test_trap_escapes_with_restart(self):
        point, trace = ap_solve(HYPERBOLA, TRAP_BOX, TRAP_X0, SolverConfig())
        assert trace.termination is Termination.FEASIBLE and trace.restarts >= 1
        assert_feasible(HYPERBOLA, TRAP_BOX, point)

    def test_restart_cap(self):
        # the box misses the quadric: every restart ends in another cycle
        box = Box([-0.9, -0.1], [0.9, 0.1])
        point, trace = ap_solve(HYPERBOLA, box, TRAP_X0, SolverConfig())
        assert trace.termination is Termination.CYCLE and trace.restarts == 5

    def test_wrong_method(self):
        with pytest.raises(ValueError):
            ap_solve(UNIT_CIRCLE, Box([0, 0], [1, 1]), [2, 2], SolverConfig(method="dr"))

    def test_quasi_fallback_counted(self):
        # gradient lines from points just inside the hyperbola gap may miss it
        box = Box([-0.5, 1.0], [2.0, 3.0])
        point, trace = ap_solve(HYPERBOLA, box, [0.0, 2.0], SolverConfig(method="apg"))
        assert trace.termination is Termination.FEASIBLE
        assert trace.exact_fallbacks >= 1

    def test_gradient_from_previous_variant(self):
        rng = np.random.default_rng(4)
        q = random_valid_quadric(rng, 3, "ellipsoid")
        p = project_exact(q, q.center() + rng.normal(size=3)).point
        box = Box(p - 0.3, p + 0.5)
        x0 = np.clip(p + 0.05, box.lower, box.upper)
        point, trace = ap_solve(q, box, x0, SolverConfig(method="apg", gradient_from_previous=True))
        assert trace.termination is Termination.FEASIBLE
        assert_feasible(q, box, point)

    def test_trace_records(self):
        point, trace = ap_solve(HYPERBOLA, TRAP_BOX, TRAP_X0, SolverConfig())
        first = trace.records[0]
        assert first.distance == pytest.approx(np.linalg.norm(first.iterate - TRAP_X0))
        assert [r.restarts for r in trace.records] == sorted(r.restarts for r in trace.records)


class TestRestartFlip:
    def test_on_quadric(self):
        np.testing.assert_allclose(restart_flip(UNIT_CIRCLE, Box([-2, -2], [2, 2]), [1, 0]), [-1, 0])

    def test_off_quadric_reflects_and_clamps(self):
        box = Box([0, 0], [4, 2])
        np.testing.assert_allclose(restart_flip(UNIT_CIRCLE, box, [3.5, 0.5]), [0.5, 1.5])
        np.testing.assert_allclose(restart_flip(UNIT_CIRCLE, box, [5.0, 0.5]), [0.0, 1.5])


class TestDouglasRachford:
    def test_start_in_target(self):
        point, trace = dr_solve(UNIT_CIRCLE, Box([0, 0], [2, 2]), [0.6, 0.8])
        assert trace.iterations == 1 and trace.termination is Termination.FEASIBLE
        np.testing.assert_allclose(point, [0.6, 0.8])

    def test_trap_is_solved(self):
        point, trace = dr_solve(HYPERBOLA, TRAP_BOX, TRAP_X0, SolverConfig(method="dr", restart=False))
        assert trace.termination is Termination.FEASIBLE
        assert_feasible(HYPERBOLA, TRAP_BOX, point)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_ellipse(self, seed):
        rng = np.random.default_rng(seed)
        q = random_valid_quadric(rng, 2, "ellipsoid")
        p = project_exact(q, q.center() + rng.normal(size=2) * 3).point
        box = Box(p - rng.uniform(0.2, 1, 2), p + rng.uniform(0.2, 1, 2))
        x0 = rng.uniform(box.lower, box.upper)
        point, trace = dr_solve(q, box, x0, SolverConfig(method="dr"))
        assert trace.termination is Termination.FEASIBLE and trace.iterations <= 1000
        assert_feasible(q, box, point)


class TestDouglasRachfordFeasibility:
    def test_invalid_gamma(self):
        for g in (0.0, -0.1):
            with pytest.raises(InvalidGamma):
                drf_solve(UNIT_CIRCLE, Box([0, 0], [1, 1]), [2, 2], SolverConfig(method="drf", gamma=g))

    def test_large_gamma_flagged(self):
        assert DRF_GAMMA_BOUND == pytest.approx(0.2247, abs=1e-4)
        _, trace = drf_solve(UNIT_CIRCLE, Box([0, 0], [2, 2]), [2, 2], SolverConfig(method="drf", gamma=0.3))
        assert "no convergence guarantee" in trace.flags
        _, trace = drf_solve(UNIT_CIRCLE, Box([0, 0], [2, 2]), [2, 2], SolverConfig(method="drf", gamma=0.2))
        assert "no convergence guarantee" not in trace.flags

    def test_start_in_target(self):
        point, trace = drf_solve(UNIT_CIRCLE, Box([0, 0], [2, 2]), [0.6, 0.8], SolverConfig(method="drf"))
        assert trace.termination is Termination.FEASIBLE and trace.iterations == 1

    def test_stall_is_a_fixed_point(self):
        # empty intersection: DR-F settles where z = y
        box = Box([-0.9, -0.1], [0.9, 0.1])
        cfg = SolverConfig(method="drf", restart=False, max_iter=20000)
        point, trace = drf_solve(HYPERBOLA, box, TRAP_X0, cfg)
        assert trace.termination is Termination.CYCLE and "stalled" in trace.flags
        assert trace.records[-1].step <= 10 * cfg.stall_tol

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    def test_random_ellipsoid(self, seed, n):
        rng = np.random.default_rng(seed)
        q = random_valid_quadric(rng, n, "ellipsoid")
        p = project_exact(q, q.center() + rng.normal(size=n) * 3).point
        box = Box(p - rng.uniform(0.2, 1, n), p + rng.uniform(0.2, 1, n))
        x0 = rng.uniform(box.lower, box.upper)
        point, trace = drf_solve(q, box, x0, SolverConfig(method="drf", gamma=0.2))
        assert trace.termination is Termination.FEASIBLE
        assert_feasible(q, box, point)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_all_methods_feasible_near_intersection(seed, n):
    """Ellipsoid, nonempty intersection, x0 within 0.1 box diameters of the quadric."""
    rng = np.random.default_rng(seed)
    q = random_valid_quadric(rng, n, "ellipsoid")
    p = project_exact(q, q.center() + rng.normal(size=n) * 3).point
    box = Box(p - rng.uniform(0.2, 1, n), p + rng.uniform(0.2, 1, n))
    diam = np.linalg.norm(box.upper - box.lower)
    step = rng.normal(size=n)
    x0 = np.clip(p + 0.1 * diam * rng.uniform() * step / np.linalg.norm(step), box.lower, box.upper)
    projector = QuadricProjector(q)
    for method in Method:
        cfg = SolverConfig(method=method)
        point, trace = solve(q, box, x0, cfg, projector)
        assert trace.termination is Termination.FEASIBLE, method
        assert_feasible(q, box, point, cfg)


class TestCartesian:
    def test_two_circles(self):
        ps = ProductSet.consecutive([UNIT_CIRCLE, UNIT_CIRCLE])
        np.testing.assert_allclose(cartesian_project(ps, [2, 0, 0, 3]), [1, 0, 0, 1])

    def test_single_block(self):
        rng = np.random.default_rng(0)
        q = random_valid_quadric(rng, 4)
        x0 = rng.normal(size=4)
        np.testing.assert_array_equal(cartesian_project(ProductSet.consecutive([q]), x0),
                                      project_exact(q, x0).point)

    def test_interleaved_blocks(self):
        ps = ProductSet(((UNIT_CIRCLE, [0, 2]), (UNIT_CIRCLE, [1, 3])))
        np.testing.assert_allclose(cartesian_project(ps, [2, 0, 0, 3]), [1, 0, 0, 1])

    def test_bad_partition(self):
        ps = ProductSet(((UNIT_CIRCLE, [0, 1]), (UNIT_CIRCLE, [1, 2])))
        with pytest.raises(ValueError):
            cartesian_project(ps, np.zeros(4))

    def test_random_three_blocks_against_oracle(self):
        rng = np.random.default_rng(8)
        blocks, lams = [], []
        for n in (2, 3, 2):
            lam = np.sort(rng.uniform(0.3, 3, n) * np.where(rng.random(n) < 0.3, -1, 1))[::-1]
            lam[0] = abs(lam[0])
            lams.append(lam)
            blocks.append(Quadric(np.diag(lam), np.zeros(n), -1.0))
        ps = ProductSet.consecutive(blocks)
        x0 = np.abs(rng.normal(size=7)) + 0.05
        out = cartesian_project(ps, x0)
        total = math.sqrt(sum(kkt_oracle(lam, x0[s])[0] ** 2
                              for lam, s in zip(lams, (slice(0, 2), slice(2, 5), slice(5, 7)))))
        assert np.linalg.norm(out - x0) <= total + 1e-6
