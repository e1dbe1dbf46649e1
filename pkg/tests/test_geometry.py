"""Direction validation, ordering and sector chain checks."""

import json

import numpy as np
import pytest

from dirhilbert.errors import GeometryError
from dirhilbert.geometry import (
    build_sector_chain,
    chain_as_dict,
    crossing_heights,
    load_directions,
    order_directions,
    random_directions,
    sample_sector,
    save_chain,
    validate_directions,
    verify_sector_pattern,
)

SQ2 = np.sqrt(2.0)


class TestValidation:
    def test_accepts_unit_vectors(self):
        dirs = validate_directions([[0, 0, 1], [1 / SQ2, 0, 1 / SQ2]])
        assert np.allclose(dirs, [[0, 0, 1], [1 / SQ2, 0, 1 / SQ2]])

    def test_flips_lower_hemisphere(self):
        dirs = validate_directions([[0.0, -1.0]])
        assert np.allclose(dirs, [[0.0, 1.0]])

    def test_normalises_length(self):
        dirs = validate_directions([[0.0, 5.0]])
        assert np.allclose(dirs, [[0.0, 1.0]])

    def test_rejects_horizontal(self):
        with pytest.raises(GeometryError, match="horizontal"):
            validate_directions([[1.0, 0.0]])

    def test_rejects_duplicates_even_mirrored(self):
        with pytest.raises(GeometryError, match="coincide"):
            validate_directions([[0.6, 0.8], [-0.6, -0.8]])

    def test_rejects_low_dimension(self):
        with pytest.raises(GeometryError, match="dimension"):
            validate_directions([[1.0]])


class TestOrdering:
    def test_reference_configuration(self):
        # three directions over base point 1 cross at heights 1, 0, -1
        dirs = validate_directions([[0, 1], [-1 / SQ2, 1 / SQ2], [1 / SQ2, 1 / SQ2]])
        ordering = order_directions(dirs, base_point=[1.0])
        assert np.allclose(ordering.heights, [1.0, 0.0, -1.0])
        assert np.allclose(ordering.directions[0], [-1 / SQ2, 1 / SQ2])
        assert np.allclose(ordering.directions[1], [0, 1])
        assert np.allclose(ordering.directions[2], [1 / SQ2, 1 / SQ2])

    def test_height_formula(self):
        dirs = validate_directions([[0.3, 0.9], [-0.5, 0.5]])
        x = np.array([0.7])
        t = crossing_heights(dirs, x)
        for v, ti in zip(dirs, t):
            point = np.array([0.7, ti])
            assert abs(point @ v) < 1e-12

    def test_collision_triggers_resample(self):
        # two mirrored directions cross at the same height over 0
        dirs = validate_directions([[-0.6, 0.8], [0.6, 0.8]])
        ordering = order_directions(dirs, base_point=[0.0], seed=5)
        assert ordering.attempts > 1
        assert ordering.heights[0] - ordering.heights[1] > 1e-9

    def test_two_directions(self):
        dirs = random_directions(3, 2, np.random.default_rng(0))
        ordering = order_directions(dirs, seed=1)
        assert ordering.heights[0] > ordering.heights[1]


class TestSectorChain:
    def test_reference_witness(self):
        dirs = validate_directions([[0, 1], [-1 / SQ2, 1 / SQ2], [1 / SQ2, 1 / SQ2]])
        chain = build_sector_chain(order_directions(dirs, base_point=[1.0]))
        # first sector: negative side of u1, positive side of u2, u3
        w = chain.witnesses[0]
        assert np.allclose(w, [1.0, 0.5])
        dots = chain.directions @ w
        assert dots[0] < 0 and dots[1] > 0 and dots[2] > 0

    def test_single_sector_for_two_directions(self):
        dirs = random_directions(2, 2, np.random.default_rng(3))
        chain = build_sector_chain(order_directions(dirs, seed=3))
        assert chain.count == 1
        assert chain.sectors[0].membership(chain.witnesses[0])

    def test_witness_pattern_exact(self):
        dirs = random_directions(3, 8, np.random.default_rng(2))
        chain = build_sector_chain(order_directions(dirs, seed=2))
        M = 8
        for i in range(1, M):
            for l in range(1, M + 1):
                dot = chain.witnesses[i - 1] @ chain.directions[l - 1]
                assert (dot < 0) == (l <= i)

    def test_membership_scale_invariance(self):
        dirs = random_directions(2, 4, np.random.default_rng(4))
        chain = build_sector_chain(order_directions(dirs, seed=4))
        sector = chain.sectors[1]
        rng = np.random.default_rng(0)
        pts = sample_sector(sector, 32, rng)
        for point in pts[:8]:
            for t in (0.01, 3.0, 250.0):
                assert sector.membership(t * point)

    def test_boundary_classification(self):
        dirs = validate_directions([[0, 1], [-1 / SQ2, 1 / SQ2], [1 / SQ2, 1 / SQ2]])
        chain = build_sector_chain(order_directions(dirs, base_point=[1.0]))
        assert chain.sectors[0].classify(np.zeros(2)) == "boundary"


class TestPattern:
    @pytest.mark.parametrize("n,count,seed", [(2, 8, 0), (3, 8, 1), (4, 6, 2)])
    def test_random_chains_pass(self, n, count, seed):
        dirs = random_directions(n, count, np.random.default_rng(seed))
        chain = build_sector_chain(order_directions(dirs, seed=seed))
        report = verify_sector_pattern(chain, samples_per_sector=64, seed=seed)
        assert report.passed, report.violations[:3]

    def test_first_direction_misses_all_sectors(self):
        dirs = random_directions(2, 8, np.random.default_rng(9))
        chain = build_sector_chain(order_directions(dirs, seed=9))
        u1 = chain.directions[0]
        for i, sector in enumerate(chain.sectors, start=1):
            rng = np.random.default_rng(i)
            pts = sample_sector(sector, 32, rng)
            assert np.all(pts @ u1 < 0)

    def test_determinism(self):
        dirs = random_directions(3, 8, np.random.default_rng(6))
        a = order_directions(dirs, seed=42)
        b = order_directions(dirs, seed=42)
        assert np.array_equal(a.directions, b.directions)
        assert np.array_equal(a.heights, b.heights)
        assert np.array_equal(a.base_point, b.base_point)


class TestSerialisation:
    def test_load_directions(self, tmp_path):
        path = tmp_path / "dirs.json"
        path.write_text(json.dumps({"n": 2, "vectors": [[0.0, 2.0], [1.0, 1.0]]}))
        dirs = load_directions(path)
        assert dirs.shape == (2, 2)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)

    def test_load_rejects_shape_mismatch(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"n": 3, "vectors": [[0.0, 1.0]]}))
        with pytest.raises(GeometryError):
            load_directions(path)

    def test_chain_roundtrip(self, tmp_path):
        dirs = random_directions(2, 4, np.random.default_rng(8))
        chain = build_sector_chain(order_directions(dirs, seed=8))
        path = tmp_path / "chain.json"
        save_chain(chain, path)
        payload = json.loads(path.read_text())
        assert payload["n"] == 2
        assert np.allclose(payload["ordering"], chain.directions)
        assert np.allclose(payload["heights"], chain.heights)
        assert payload == chain_as_dict(chain)
