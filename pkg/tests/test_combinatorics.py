"""Stratum enumeration and the norm expansion oracles."""

import math

import numpy as np
import pytest

from dirhilbert.combinatorics import (
    Stratum,
    compositions,
    enumerate_strata,
    fibre_count,
    multiplicity_weight,
    norm_expansion_check,
    ray_support_report,
    recursion_report,
    stratum_cubes_disjoint,
    unit_sum,
    verify_partition,
)
from dirhilbert.construction import ConstructionConfig, build_construction
from dirhilbert.errors import ResourceGuardError
from dirhilbert.geometry import build_sector_chain, order_directions, random_directions
from dirhilbert.grid import TorusGrid
from dirhilbert.tree import midpoint_permutation


@pytest.fixture(scope="module")
def oracle_state():
    """n=2, m=2, p0=2 build for expansion oracles."""
    rng = np.random.default_rng(21)
    dirs = random_directions(2, 4, rng)
    chain = build_sector_chain(order_directions(dirs, seed=21))
    grid = TorusGrid(2, 256)
    return build_construction(
        grid, chain, midpoint_permutation(2), ConstructionConfig(m=2, p0=2, seed=21)
    )


@pytest.fixture(scope="module")
def oracle_state_m3():
    rng = np.random.default_rng(29)
    dirs = random_directions(2, 8, rng)
    chain = build_sector_chain(order_directions(dirs, seed=29))
    grid = TorusGrid(2, 512)
    return build_construction(
        grid, chain, midpoint_permutation(3), ConstructionConfig(m=3, p0=2, seed=29)
    )


class TestCompositions:
    def test_small_cases(self):
        assert compositions(3, 2) == [(1, 2), (2, 1)]
        assert compositions(5, 1) == [(5,)]
        assert compositions(4, 4) == [(1, 1, 1, 1)]

    @pytest.mark.parametrize("p,r", [(4, 2), (6, 3), (7, 4), (8, 5)])
    def test_count_matches_binomial(self, p, r):
        out = compositions(p, r)
        assert len(out) == math.comb(p - 1, r - 1)
        assert len(set(out)) == len(out)
        assert all(sum(c) == p and min(c) >= 1 for c in out)

    def test_lexicographic(self):
        out = compositions(5, 3)
        assert out == sorted(out)

    def test_invalid(self):
        with pytest.raises(ValueError):
            compositions(3, 4)


class TestStrata:
    def test_ray_flags_reference(self):
        # (1,2,4) lies on a ray; (1,2,5) does not (4 and 5 are siblings)
        strata = list(enumerate_strata(3, 3, 3))
        by_key = {
            (s.left, s.left_mult, s.right, s.right_mult): s for s in strata
        }
        ray = by_key[((1, 2, 4), (1, 1, 1), (1, 2, 4), (1, 1, 1))]
        assert ray.on_ray and ray.star
        off = by_key[((1, 2, 4), (1, 1, 1), (1, 2, 5), (1, 1, 1))]
        assert not off.on_ray and not off.star

    def test_star_requires_matching_tail(self):
        strata = list(enumerate_strata(2, 2, 2))
        for s in strata:
            if s.star:
                assert s.left[-1] == s.right[-1]
                assert s.left_mult[-1] == s.right_mult[-1]
                assert s.on_ray
        mismatched = [
            s
            for s in strata
            if s.on_ray and s.left[-1] == s.right[-1] and s.left_mult[-1] != s.right_mult[-1]
        ]
        assert all(not s.star for s in mismatched)

    def test_top_height_filter(self):
        all_h1 = list(enumerate_strata(2, 2, 3, top_height=1))
        assert all(s.top_height == 1 for s in all_h1)
        total = len(list(enumerate_strata(2, 2, 3)))
        split = sum(len(list(enumerate_strata(2, 2, 3, top_height=h))) for h in range(3))
        assert split == total

    def test_budget_guard(self):
        with pytest.raises(ResourceGuardError):
            list(enumerate_strata(2, 2, 4, budget=10))

    def test_fibre_count(self):
        assert fibre_count(2, 2) == math.comb(3, 2)
        assert fibre_count(3, 3) == math.comb(7, 3)
        # enumeration agrees with the closed form, independent of multiplicity
        from itertools import combinations

        assert sum(1 for _ in combinations(range(1, 8), 3)) == fibre_count(3, 3)

    def test_weight_formula(self):
        assert multiplicity_weight((2,), (1, 1), 2, 2) == 1 * 2
        assert multiplicity_weight((1, 1), (1, 1), 2, 2) == 4


class TestPartition:
    def test_two_levels_pairs(self):
        report = verify_partition(2, 2)
        assert report.passed
        assert report.total_tuples == 9
        # 3 diagonal singles + 6 off-diagonal permutations
        assert report.count_identity_ok

    def test_single_exponent_trivial(self):
        report = verify_partition(1, 3)
        assert report.passed
        assert report.total_tuples == 7

    def test_three_exponent(self):
        report = verify_partition(3, 2)
        assert report.passed
        assert report.total_tuples == 27

    def test_budget(self):
        with pytest.raises(ResourceGuardError):
            verify_partition(3, 4, budget=100)


class TestNormExpansion:
    def test_p0_one_parseval_style(self, oracle_state):
        report = norm_expansion_check(oracle_state, p0=1)
        assert report.passed
        assert report.relative_error <= 1e-6

    def test_p0_two_agreement(self, oracle_state):
        report = norm_expansion_check(oracle_state, p0=2)
        assert report.passed, report.as_dict()
        assert report.relative_error <= 1e-6

    def test_m3_agreement(self, oracle_state_m3):
        report = norm_expansion_check(oracle_state_m3, p0=2)
        assert report.passed
        assert report.relative_error <= 1e-6

    def test_disjoint_cubes_vanish_exactly(self, oracle_state):
        report = norm_expansion_check(oracle_state, p0=2)
        assert report.max_disjoint_integral <= 1e-10

    def test_direct_side_is_plain_power_mean(self, oracle_state):
        # oracle for the oracle: recompute the direct side independently
        total = np.zeros(oracle_state.grid.shape, dtype=complex)
        for N in range(1, oracle_state.count + 1):
            total += oracle_state.piece(N).values
        direct = float(np.mean(np.abs(total) ** 4))
        report = norm_expansion_check(oracle_state, p0=2)
        assert report.direct == pytest.approx(direct, rel=1e-12)


class TestRaySupport:
    def test_equivalence_all_strata(self, oracle_state_m3):
        report = ray_support_report(oracle_state_m3, 2, 2)
        assert report.passed, report.mismatches[:3]
        assert report.strata > 0

    def test_sibling_intersections_empty(self, oracle_state):
        m2 = oracle_state.vertex(2).mask
        m3 = oracle_state.vertex(3).mask
        assert not np.any(m2 & m3)

    def test_ancestor_chain_nonempty(self, oracle_state_m3):
        m1 = oracle_state_m3.vertex(1).mask
        m2 = oracle_state_m3.vertex(2).mask
        m4 = oracle_state_m3.vertex(4).mask
        assert np.array_equal(m1 & m2 & m4, m4)
        assert m4.any()


class TestUnitSums:
    def test_every_level(self, oracle_state_m3):
        for level in range(oracle_state_m3.m):
            assert unit_sum(oracle_state_m3, level) == pytest.approx(1.0, abs=1e-12)

    def test_root_level(self, oracle_state):
        assert unit_sum(oracle_state, 0) == 1.0


class TestRecursion:
    def test_peeling_identity(self, oracle_state_m3):
        report = recursion_report(oracle_state_m3, p0=2)
        assert report.cases > 0
        assert report.passed, report.as_dict()
        assert report.worst_exact <= 1e-9
        # the star remainder is a smoothing-scale residue, small but nonzero
        assert report.worst_remainder < 0.05

    def test_cube_disjoint_helper(self, oracle_state):
        carriers = [v.carrier for v in oracle_state.vertices()]
        stratum = Stratum((1,), (1,), (2,), (1,), 1, True, False)
        # vertices 1 and 2 have disjoint cubes by construction
        assert stratum_cubes_disjoint(oracle_state, stratum)
        same = Stratum((1,), (1,), (1,), (1,), 0, True, True)
        assert not stratum_cubes_disjoint(oracle_state, same)
