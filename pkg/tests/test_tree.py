"""Tree indexing, midpoint ordering and signed-system checks."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirhilbert.errors import IntegrityError
from dirhilbert.grid import TorusGrid
from dirhilbert.tree import (
    FunctionSystem,
    child_indices,
    decode_index,
    dyadic_midpoint,
    encode_index,
    haar_system,
    height,
    is_ancestor,
    last_negative_rank,
    midpoint_permutation,
    parent_index,
    random_stripe_system,
    trace_ray,
    vertex_count,
    verify_partial_sum_bound,
    verify_signed_tree,
)


class TestIndexing:
    def test_known_pairs(self):
        assert decode_index(27) == (4, 12)
        assert decode_index(13) == (3, 6)
        assert decode_index(1) == (0, 1)

    def test_encode_inverse(self):
        assert encode_index(4, 12) == 27
        assert encode_index(0, 1) == 1

    @given(st.integers(min_value=1, max_value=2**20))
    def test_roundtrip(self, N):
        k, j = decode_index(N)
        assert encode_index(k, j) == N
        assert 1 <= j <= 2**k

    def test_bounds_errors(self):
        with pytest.raises(ValueError, match=">= 1"):
            decode_index(0)
        with pytest.raises(ValueError, match="exceeds"):
            decode_index(8, m=3)
        with pytest.raises(ValueError, match="position"):
            encode_index(2, 5)
        with pytest.raises(ValueError, match="height"):
            encode_index(-1, 1)

    def test_parent_child(self):
        for N in range(2, 64):
            k, j = decode_index(N)
            pk, pj = decode_index(parent_index(N))
            assert (pk, pj) == (k - 1, (j + 1) // 2)
        left, right = child_indices(5)
        assert (left, right) == (10, 11)

    def test_ancestor(self):
        assert is_ancestor(1, 27)
        assert is_ancestor(6, 13)
        assert is_ancestor(6, 27)
        assert not is_ancestor(2, 3)
        assert not is_ancestor(27, 6)


class TestMidpoints:
    def test_reference_values(self):
        assert dyadic_midpoint(1) == Fraction(1, 2)
        assert dyadic_midpoint(2) == Fraction(1, 4)
        assert dyadic_midpoint(3) == Fraction(3, 4)
        assert dyadic_midpoint(4) == Fraction(1, 8)

    @given(st.integers(min_value=1, max_value=2**14))
    def test_child_offsets(self, N):
        # left child sits a quarter level below, right child above
        k = height(N)
        step = Fraction(1, 2 ** (k + 2))
        assert dyadic_midpoint(2 * N) == dyadic_midpoint(N) - step
        assert dyadic_midpoint(2 * N + 1) == dyadic_midpoint(N) + step

    @settings(max_examples=60)
    @given(st.integers(min_value=1, max_value=2**10), st.data())
    def test_descendant_window(self, N, data):
        # all descendants stay within half a cell width of the ancestor
        k = height(N)
        depth = data.draw(st.integers(min_value=1, max_value=6))
        node = N
        for _ in range(depth):
            node = data.draw(st.sampled_from(child_indices(node)))
        window = Fraction(1, 2 ** (k + 1))
        assert abs(dyadic_midpoint(node) - dyadic_midpoint(N)) < window


class TestPermutation:
    def test_small_cases(self):
        assert midpoint_permutation(1).forward == (1,)
        assert midpoint_permutation(2).forward == (2, 1, 3)
        assert midpoint_permutation(3).forward == (4, 2, 5, 1, 6, 3, 7)

    @pytest.mark.parametrize("m", range(1, 13))
    def test_against_naive_sort(self, m):
        # oracle: selection sort with exact integer cross comparisons
        H = vertex_count(m)
        remaining = list(range(1, H + 1))
        order = []
        while remaining:
            best = remaining[0]
            for cand in remaining[1:]:
                bk, bj = decode_index(best)
                ck, cj = decode_index(cand)
                # (2 cj - 1) / 2^{ck+1} < (2 bj - 1) / 2^{bk+1}
                if (2 * cj - 1) * 2 ** (bk + 1) < (2 * bj - 1) * 2 ** (ck + 1):
                    best = cand
            order.append(best)
            remaining.remove(best)
        perm = midpoint_permutation(m)
        assert list(perm.forward) == order
        assert [perm.rank(perm.vertex(r)) for r in range(1, H + 1)] == list(range(1, H + 1))

    def test_strictly_increasing(self):
        perm = midpoint_permutation(6)
        values = [dyadic_midpoint(N) for N in perm.forward]
        assert all(a < b for a, b in zip(values, values[1:]))


def _haar(m, size=64):
    return haar_system(TorusGrid(1, size), m)


class TestRays:
    def test_haar_shallow_point(self):
        system = _haar(2, 64)
        # x ~ 0.1 lies in [0, 1/4): both members positive on the ray
        point = (6,)  # cell centre 6.5/64 ~ 0.1
        ray, right = trace_ray(system, point)
        assert ray == [1, 2]
        assert right == []

    def test_turn_sequence_matches_reference(self):
        # depth 5 Haar: the path right, left, right, right lands on vertex 27
        system = _haar(5, 64)
        # cell centre 45.5/64 = 0.711 lies in [11/16, 23/32): vertex 27 positive
        ray_pos, right_pos = trace_ray(system, (45,))
        assert ray_pos == [1, 3, 6, 13, 27]
        assert right_pos == [1, 6, 13]
        # cell centre 46.5/64 = 0.727 lies in [23/32, 3/4): vertex 27 negative
        ray_neg, right_neg = trace_ray(system, (46,))
        assert ray_neg == [1, 3, 6, 13, 27]
        assert right_neg == [1, 6, 13, 27]

    def test_last_negative_matches_max_right_turn(self):
        system = _haar(5, 64)
        perm = midpoint_permutation(5)
        for cell in (45, 46):
            _, right = trace_ray(system, (cell,))
            rank = last_negative_rank(system, perm, (cell,))
            if right:
                assert perm.vertex(rank) == max(right)
            else:
                assert rank == 0
        assert perm.vertex(last_negative_rank(system, perm, (46,))) == 27
        assert perm.vertex(last_negative_rank(system, perm, (45,))) == 13

    def test_last_negative_zero_when_all_nonnegative(self):
        grid = TorusGrid(1, 16)
        values = np.zeros((3, 16))
        values[0] = 1.0
        values[1, :8] = 1.0  # left child where the root is positive
        system = FunctionSystem(grid, 2, values)
        assert last_negative_rank(system, midpoint_permutation(2), (3,)) == 0

    def test_empty_ray_outside_support(self):
        grid = TorusGrid(1, 64)
        values = haar_system(grid, 2).values.copy()
        values[:, 32:] = 0.0  # root vanishes on the right half
        system = FunctionSystem(grid, 2, values)
        ray, right = trace_ray(system, (40,))
        assert ray == [] and right == []

    def test_inconsistent_system_rejected(self):
        grid = TorusGrid(1, 8)
        values = np.zeros((3, 8))
        values[0] = 1.0
        values[1] = 1.0  # both children alive at every point
        values[2] = 1.0
        system = FunctionSystem(grid, 2, values)
        with pytest.raises(IntegrityError):
            trace_ray(system, (0,))


class TestSignedSystem:
    def test_haar_passes(self):
        report = verify_signed_tree(_haar(3, 64))
        assert report.passed
        assert report.boundary_fraction == 0.0
        assert report.violations == []

    def test_swapped_children_fail(self):
        system = _haar(3, 64)
        values = system.values.copy()
        values[[1, 2]] = values[[2, 1]]  # swap vertices 2 and 3
        bad = FunctionSystem(system.grid, 3, values)
        report = verify_signed_tree(bad)
        assert not report.passed
        assert any(v == 2 for v, _ in report.violations)

    def test_root_only_vacuous(self):
        grid = TorusGrid(1, 16)
        system = FunctionSystem(grid, 1, np.ones((1, 16)))
        assert verify_signed_tree(system).passed

    def test_report_serialises(self):
        report = verify_signed_tree(_haar(2, 32))
        payload = report.as_dict()
        assert payload["pass"] is True
        assert set(payload) == {"pass", "boundary_fraction", "violations"}


class TestPartialSumBound:
    def test_haar_depth2_hand_values(self):
        # left quarter: partial sums 1, 2, 2; right quarter: 0, -1, -2
        system = _haar(2, 64)
        perm = midpoint_permutation(2)
        V = system.values
        order = [v - 1 for v in perm.forward]
        left = np.cumsum(V[order, 4])  # cell centre ~0.07
        right = np.cumsum(V[order, 60])  # cell centre ~0.945
        assert list(left) == [1.0, 2.0, 2.0]
        assert list(right) == [0.0, -1.0, -2.0]
        report = verify_partial_sum_bound(system, perm)
        assert report.passed
        assert report.worst_ratio >= 1.0 / 3.0 - 1e-9

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_haar_all_depths(self, m):
        report = verify_partial_sum_bound(_haar(m, 128), midpoint_permutation(m))
        assert report.passed
        assert report.sign_pattern_ok

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5, 6, 7])
    def test_random_stripe_systems(self, seed):
        grid = TorusGrid(2, 32)
        m = 3 + seed % 2
        system = random_stripe_system(grid, m, np.random.default_rng(seed))
        signed = verify_signed_tree(system)
        assert signed.passed
        report = verify_partial_sum_bound(system, midpoint_permutation(m), signed_report=signed)
        assert report.passed
        assert report.worst_ratio >= 1.0 / 3.0 - 1e-9

    def test_brute_force_ratio_oracle(self):
        # recompute the worst ratio with plain python loops
        grid = TorusGrid(1, 32)
        system = random_stripe_system(grid, 3, np.random.default_rng(11), max_freq=4)
        perm = midpoint_permutation(3)
        worst = np.inf
        for cell in range(32):
            vals = [system.values[N - 1, cell] for N in perm.forward]
            total = sum(abs(v) for v in vals)
            if total <= 1e-12:
                continue
            partial = 0.0
            best = 0.0
            for v in vals:
                partial += v
                best = max(best, abs(partial))
            worst = min(worst, best / total)
        report = verify_partial_sum_bound(system, perm)
        assert report.worst_ratio == pytest.approx(worst, rel=1e-12)

    def test_sign_dichotomy_matches_last_negative(self):
        system = _haar(4, 64)
        perm = midpoint_permutation(4)
        V = system.values
        order = [v - 1 for v in perm.forward]
        for cell in range(0, 64, 7):
            rank = last_negative_rank(system, perm, (cell,))
            vals = V[order, cell]
            assert np.all(vals[:rank] <= 1e-12)
            assert np.all(vals[rank:] >= -1e-12)

    def test_unsigned_system_rejected(self):
        system = _haar(3, 64)
        values = system.values.copy()
        values[[1, 2]] = values[[2, 1]]
        bad = FunctionSystem(system.grid, 3, values)
        report = verify_partial_sum_bound(bad, midpoint_permutation(3))
        assert not report.passed
        assert np.isnan(report.worst_ratio)
