"""Direction sets, half-spaces, conic sectors and ordered sector chains.

A direction is a unit vector with positive last coordinate (flipping v to
-v leaves the maximal transform magnitudes unchanged, so the upper
hemisphere is enough).  Ordering M directions by the heights at which
their orthogonal hyperplanes cross a generic vertical line produces M - 1
pairwise disjoint sectors S_1 .. S_{M-1} with the staircase property

    S_i inside {x . u_l > 0}  exactly when  i < l,

each carrying an explicit witness point on the vertical line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GenericityError, GeometryError, IntegrityError

BOUNDARY_TOL = 1e-12
ANGULAR_TOL = 1e-9
HEIGHT_TOL = 1e-9


def validate_directions(raw, angular_tol: float = ANGULAR_TOL) -> np.ndarray:
    """Normalise a list of vectors into canonical directions.

    Vectors are scaled to unit length and flipped into the upper
    hemisphere.  Horizontal vectors (zero last coordinate) and duplicates
    within the angular tolerance are rejected.
    """
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise GeometryError("expected a nonempty list of vectors")
    n = arr.shape[1]
    if n < 2:
        raise GeometryError(f"dimension must be >= 2, got {n}")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0):
        raise GeometryError("zero vector in direction list")
    unit = arr / norms[:, None]
    last = unit[:, -1]
    horizontal = np.abs(last) <= angular_tol
    if horizontal.any():
        bad = int(np.flatnonzero(horizontal)[0])
        raise GeometryError(f"direction {bad} is horizontal (v . e_n = 0)")
    unit = np.where(last[:, None] < 0, -unit, unit)
    gram = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(gram, 0.0)
    dup = np.argwhere(np.arccos(gram) <= angular_tol)
    if dup.size:
        i, j = int(dup[0, 0]), int(dup[0, 1])
        raise GeometryError(f"directions {min(i, j)} and {max(i, j)} coincide")
    return unit


def random_directions(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded uniform sample of distinct directions on the upper hemisphere."""
    out = []
    while len(out) < count:
        v = rng.standard_normal(n)
        norm = np.linalg.norm(v)
        if norm < 1e-12 or abs(v[-1]) / norm < 1e-6:
            continue
        out.append(v / norm if v[-1] > 0 else -v / norm)
    return validate_directions(np.array(out))


@dataclass(frozen=True)
class Sector:
    """Open conic region cut out by signed half-space constraints.

    A point x belongs to the sector iff sign * (x . normal) > 0 for every
    row; the optional witness certifies nonemptiness.
    """

    normals: np.ndarray  # (r, n)
    signs: np.ndarray  # (r,) of +-1
    witness: np.ndarray | None = None

    def classify(self, x, tol: float = BOUNDARY_TOL) -> str:
        dots = self.signs * (self.normals @ np.asarray(x, dtype=float))
        if np.any(np.abs(dots) <= tol):
            return "boundary"
        return "inside" if np.all(dots > 0) else "outside"

    def membership(self, x, tol: float = BOUNDARY_TOL) -> bool:
        return self.classify(x, tol) == "inside"


@dataclass(frozen=True)
class DirectionOrdering:
    """Directions sorted by decreasing crossing height over a base point."""

    directions: np.ndarray  # (M, n), ordered
    heights: np.ndarray  # (M,), strictly decreasing
    base_point: np.ndarray  # (n - 1,)
    attempts: int


def crossing_heights(directions: np.ndarray, base_point: np.ndarray) -> np.ndarray:
    """Heights t where the vertical line over base_point meets each x.v=0."""
    head = directions[:, :-1]
    last = directions[:, -1]
    return -(head @ base_point) / last


def order_directions(
    directions: np.ndarray,
    base_point=None,
    seed: int = 0,
    retries: int = 64,
    height_tol: float = HEIGHT_TOL,
) -> DirectionOrdering:
    """Order directions by decreasing crossing height, resampling the base
    point from the seeded unit ball whenever two heights collide."""
    directions = np.asarray(directions, dtype=float)
    M, n = directions.shape
    if M < 2:
        raise GeometryError(f"need at least two directions, got {M}")
    rng = np.random.default_rng(seed)

    def sample_ball():
        while True:
            x = rng.uniform(-1.0, 1.0, size=n - 1)
            if np.linalg.norm(x) <= 1.0:
                return x

    candidate = np.asarray(base_point, dtype=float) if base_point is not None else sample_ball()
    for attempt in range(1, retries + 1):
        t = crossing_heights(directions, candidate)
        order = np.argsort(-t, kind="stable")
        sorted_t = t[order]
        if np.min(sorted_t[:-1] - sorted_t[1:]) > height_tol:
            return DirectionOrdering(
                directions[order].copy(), sorted_t.copy(), candidate.copy(), attempt
            )
        candidate = sample_ball()
    raise GenericityError(
        f"no base point with separated heights after {retries} attempts"
    )


@dataclass(frozen=True)
class SectorChain:
    """The ordered directions with their M - 1 staircase sectors."""

    directions: np.ndarray  # (M, n)
    heights: np.ndarray  # (M,)
    base_point: np.ndarray  # (n - 1,)
    sectors: tuple  # M - 1 Sector objects
    witnesses: np.ndarray  # (M - 1, n)

    @property
    def count(self) -> int:
        return len(self.sectors)


def build_sector_chain(ordering: DirectionOrdering) -> SectorChain:
    """Assemble sectors S_i between consecutive crossing heights.

    S_i keeps the first i half-spaces on their negative side and the rest
    on their positive side; the witness sits on the vertical line halfway
    between heights t_i and t_{i+1}.  A witness failing its own sector
    indicates floating point trouble and raises IntegrityError.
    """
    U = ordering.directions
    t = ordering.heights
    M, n = U.shape
    if np.min(t[:-1] - t[1:]) <= 0:
        raise GeometryError("heights are not strictly decreasing")
    sectors = []
    witnesses = np.empty((M - 1, n))
    for i in range(1, M):
        signs = np.where(np.arange(1, M + 1) <= i, -1.0, 1.0)
        tau = 0.5 * (t[i - 1] + t[i])
        witness = np.concatenate([ordering.base_point, [tau]])
        sector = Sector(U.copy(), signs, witness)
        if not sector.membership(witness):
            raise IntegrityError(f"witness of sector {i} fails membership")
        sectors.append(sector)
        witnesses[i - 1] = witness
    return SectorChain(U, t, ordering.base_point, tuple(sectors), witnesses)


@dataclass
class SectorPatternReport:
    passed: bool
    witness_pattern_ok: bool
    samples_per_sector: int
    violations: list

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "witness_pattern_ok": self.witness_pattern_ok,
            "samples_per_sector": self.samples_per_sector,
            "violations": self.violations,
        }


def sample_sector(
    sector: Sector, count: int, rng: np.random.Generator, max_tries: int = 200
) -> np.ndarray:
    """Rejection-sample points from a sector around its scaled witness."""
    if sector.witness is None:
        raise GeometryError("sector has no witness to sample around")
    w = sector.witness
    scale = np.linalg.norm(w)
    out = np.empty((count, w.size))
    filled = 0
    radius = 0.5
    for _ in range(max_tries):
        need = count - filled
        if need <= 0:
            break
        t = rng.uniform(0.25, 4.0, size=need)
        jitter = rng.standard_normal((need, w.size)) * radius * scale
        pts = t[:, None] * (w + jitter)
        dots = (pts @ sector.normals.T) * sector.signs
        keep = np.all(dots > BOUNDARY_TOL, axis=1)
        good = pts[keep]
        take = min(len(good), need)
        out[filled : filled + take] = good[:take]
        filled += take
        radius *= 0.7  # shrink towards the witness if acceptance is poor
    if filled < count:
        raise GeometryError("rejection sampling failed to fill the sector sample")
    return out


def verify_sector_pattern(
    chain: SectorChain, samples_per_sector: int = 256, seed: int = 0
) -> SectorPatternReport:
    """Exact witness check of the staircase pattern plus sampled evidence.

    For every witness Q_i and direction u_l the sign of Q_i . u_l must be
    negative iff l <= i.  Sampled points then confirm the same pattern and
    that no point of S_i lies in any other sector.
    """
    U = chain.directions
    M = U.shape[0]
    dots = chain.witnesses @ U.T  # (M-1, M)
    expected = np.where(
        np.arange(1, M + 1)[None, :] <= np.arange(1, M)[:, None], -1.0, 1.0
    )
    witness_ok = bool(np.all(np.sign(dots) == expected))
    violations = []
    if not witness_ok:
        bad = np.argwhere(np.sign(dots) != expected)
        for i, l in bad[:20]:
            violations.append(
                {"kind": "witness", "sector": int(i + 1), "direction": int(l + 1)}
            )
    for i, sector in enumerate(chain.sectors, start=1):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        pts = sample_sector(sector, samples_per_sector, rng)
        sgn = np.sign(pts @ U.T)
        exp_row = np.where(np.arange(1, M + 1) <= i, -1.0, 1.0)
        bad = np.flatnonzero(np.any(sgn != exp_row, axis=1))
        for b in bad[:10]:
            violations.append(
                {"kind": "sample", "sector": i, "point": pts[b].tolist()}
            )
        # a point matching another sector's sign pattern would break
        # pairwise disjointness
        for other_i in range(1, M):
            if other_i == i:
                continue
            other_row = np.where(np.arange(1, M + 1) <= other_i, -1.0, 1.0)
            overlap = np.flatnonzero(np.all(sgn == other_row, axis=1))
            for b in overlap[:5]:
                violations.append(
                    {"kind": "overlap", "sector": i, "other": other_i,
                     "point": pts[b].tolist()}
                )
    passed = witness_ok and not violations
    return SectorPatternReport(passed, witness_ok, samples_per_sector, violations)


def load_directions(path) -> np.ndarray:
    """Read a direction set from JSON: {"n": int, "vectors": [[...], ...]}."""
    with open(path) as fh:
        payload = json.load(fh)
    vectors = np.asarray(payload["vectors"], dtype=float)
    if vectors.ndim != 2 or vectors.shape[1] != payload["n"]:
        raise GeometryError(f"vector shapes do not match n={payload['n']}")
    return validate_directions(vectors)


def chain_as_dict(chain: SectorChain) -> dict:
    return {
        "n": int(chain.directions.shape[1]),
        "ordering": chain.directions.tolist(),
        "heights": chain.heights.tolist(),
        "base_point": chain.base_point.tolist(),
        "witnesses": chain.witnesses.tolist(),
    }


def save_chain(chain: SectorChain, path) -> None:
    with open(path, "w") as fh:
        json.dump(chain_as_dict(chain), fh, indent=2, sort_keys=True)
