"""Binary tree indexing, the midpoint ordering and signed system checks.

Vertices of the full binary tree of depth m are numbered N = 2^k + j - 1
where k is the height (0 at the root) and j = 1..2^k the position within
the level.  A family of grid functions indexed by these vertices is a
*tree system* when sibling supports are disjoint and children are
supported inside their parent, and a *signed tree system* when the left
child lives where the parent is positive and the right child where it is
negative.  The midpoint permutation sorts vertices by the dyadic points
(2j - 1) / 2^{k+1}; against that ordering the largest partial sum of a
signed system dominates a third of the full absolute sum at every point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import IntegrityError
from .grid import TorusGrid

DEFAULT_ZERO_TOL = 1e-12
DEFAULT_NULL_FRACTION = 0.01


def vertex_count(m: int) -> int:
    return 2**m - 1


def decode_index(N: int, m: int | None = None) -> tuple[int, int]:
    """Split a vertex number into (height, position)."""
    if N < 1:
        raise ValueError(f"vertex number must be >= 1, got {N}")
    if m is not None and N > vertex_count(m):
        raise ValueError(f"vertex number {N} exceeds 2^{m} - 1 = {vertex_count(m)}")
    k = N.bit_length() - 1
    return k, N - 2**k + 1


def encode_index(k: int, j: int) -> int:
    """Vertex number of the pair (height, position)."""
    if k < 0:
        raise ValueError(f"height must be >= 0, got {k}")
    if not 1 <= j <= 2**k:
        raise ValueError(f"position must satisfy 1 <= j <= 2^{k} = {2**k}, got {j}")
    return 2**k + j - 1


def height(N: int) -> int:
    if N < 1:
        raise ValueError(f"vertex number must be >= 1, got {N}")
    return N.bit_length() - 1


def parent_index(N: int) -> int:
    if N < 2:
        raise ValueError("the root has no parent")
    return N // 2


def child_indices(N: int) -> tuple[int, int]:
    return 2 * N, 2 * N + 1


def is_ancestor(a: int, b: int) -> bool:
    """True when a is an ancestor of b or equal to it."""
    ha, hb = height(a), height(b)
    return ha <= hb and (b >> (hb - ha)) == a


def on_common_ray(vertices) -> bool:
    """True when all vertices lie on a single root-to-leaf ray."""
    ordered = sorted(set(vertices))
    return all(is_ancestor(a, b) for a, b in zip(ordered, ordered[1:]))


def dyadic_midpoint(N: int) -> Fraction:
    """The exact sign-change point (2j - 1) / 2^{k+1} of vertex N."""
    k, j = decode_index(N)
    return Fraction(2 * j - 1, 2 ** (k + 1))


@dataclass(frozen=True)
class TreePermutation:
    """Bijection of {1..2^m - 1}; rank r maps to vertex forward[r - 1]."""

    m: int
    forward: tuple[int, ...]
    inverse: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        H = vertex_count(self.m)
        if sorted(self.forward) != list(range(1, H + 1)):
            raise ValueError("forward is not a bijection of {1..2^m - 1}")
        inv = [0] * H
        for r, N in enumerate(self.forward, start=1):
            inv[N - 1] = r
        object.__setattr__(self, "inverse", tuple(inv))

    def vertex(self, rank: int) -> int:
        return self.forward[rank - 1]

    def rank(self, vertex: int) -> int:
        return self.inverse[vertex - 1]


def midpoint_permutation(m: int) -> TreePermutation:
    """The unique permutation sorting dyadic midpoints increasingly.

    Comparison is exact (rational), so the result is platform independent.
    """
    if m < 1:
        raise ValueError(f"depth must be >= 1, got {m}")
    order = sorted(range(1, vertex_count(m) + 1), key=dyadic_midpoint)
    return TreePermutation(m, tuple(order))


class FunctionSystem:
    """Real-valued grid functions indexed by the vertices of a depth-m tree.

    Values are stacked as one array of shape (2^m - 1, *grid.shape); all
    members live on the same grid, the grid realisation of the unit cube.
    """

    def __init__(self, grid: TorusGrid, m: int, values: np.ndarray):
        H = vertex_count(m)
        values = np.asarray(values, dtype=float)
        if values.shape != (H,) + grid.shape:
            raise ValueError(
                f"expected values of shape {(H,) + grid.shape}, got {values.shape}"
            )
        self.grid = grid
        self.m = m
        self.values = values

    def member(self, N: int) -> np.ndarray:
        if not 1 <= N <= vertex_count(self.m):
            raise ValueError(f"vertex {N} out of range for depth {self.m}")
        return self.values[N - 1]


def haar_system(grid: TorusGrid, m: int) -> FunctionSystem:
    """The Haar prototype on a 1-d grid: +1 / -1 on dyadic half-intervals."""
    if grid.n != 1:
        raise ValueError("the Haar prototype is one dimensional")
    if 2**m > grid.size:
        raise ValueError(f"grid too coarse for depth {m}")
    x = (np.arange(grid.size) + 0.5) / grid.size
    H = vertex_count(m)
    values = np.zeros((H, grid.size))
    for N in range(1, H + 1):
        k, j = decode_index(N)
        left = (j - 1) / 2**k
        mid = (2 * j - 1) / 2 ** (k + 1)
        right = j / 2**k
        values[N - 1][(x >= left) & (x < mid)] = 1.0
        values[N - 1][(x >= mid) & (x < right)] = -1.0
    return FunctionSystem(grid, m, values)


def random_stripe_system(
    grid: TorusGrid, m: int, rng: np.random.Generator, max_freq: int = 6
) -> FunctionSystem:
    """A random signed tree system built from cosine stripe masks.

    Each member is amplitude * cos(2 pi q . x) restricted to the cell set
    where all its ancestors have the required sign, which is exactly the
    signed nesting rule.  Frequencies get an odd coordinate sum so that no
    cosine vanishes at a cell centre.
    """
    H = vertex_count(m)
    values = np.zeros((H,) + grid.shape)
    masks = {1: np.ones(grid.shape, dtype=bool)}
    waves = {}
    for N in range(1, H + 1):
        q = rng.integers(1, max_freq + 1, size=grid.n)
        if q.sum() % 2 == 0:
            q[rng.integers(grid.n)] += 1
        amplitude = float(rng.uniform(0.5, 2.0))
        wave = np.cos(2 * np.pi * grid.phase(q))
        waves[N] = wave
        values[N - 1] = amplitude * wave * masks[N]
        if height(N) < m - 1:
            left, right = child_indices(N)
            masks[left] = masks[N] & (wave > 0)
            masks[right] = masks[N] & (wave < 0)
    return FunctionSystem(grid, m, values)


def trace_ray(
    system: FunctionSystem, point: tuple[int, ...], zero_tol: float = DEFAULT_ZERO_TOL
) -> tuple[list[int], list[int]]:
    """Follow the nonzero members downward from the root at one grid point.

    Returns (ray, right_turns): the maximal chain of vertices whose member
    is nonzero at the point, and the vertices where the chain moves to a
    right child, including the terminal vertex iff its value is negative.
    An empty ray means the root vanishes at the point.
    """
    values = system.values[(slice(None),) + tuple(point)]
    if abs(values[0]) <= zero_tol:
        return [], []
    ray = [1]
    right_turns = []
    N = 1
    while height(N) < system.m - 1:
        left, right = child_indices(N)
        lv, rv = values[left - 1], values[right - 1]
        if abs(lv) > zero_tol and abs(rv) > zero_tol:
            raise IntegrityError(
                f"both children of vertex {N} are nonzero at point {point}"
            )
        if abs(lv) > zero_tol:
            N = left
        elif abs(rv) > zero_tol:
            right_turns.append(N)
            N = right
        else:
            break
        ray.append(N)
    if values[ray[-1] - 1] < -zero_tol:
        right_turns.append(ray[-1])
    return ray, right_turns


def last_negative_rank(
    system: FunctionSystem,
    perm: TreePermutation,
    point: tuple[int, ...],
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> int:
    """The largest rank h with f_{perm(h)}(point) < 0, or 0 if none."""
    values = system.values[(slice(None),) + tuple(point)]
    result = 0
    for rank in range(1, len(perm.forward) + 1):
        if values[perm.vertex(rank) - 1] < -zero_tol:
            result = rank
    return result


@dataclass
class SignedTreeReport:
    passed: bool
    boundary_fraction: float
    violations: list
    checked_vertices: int

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "boundary_fraction": self.boundary_fraction,
            "violations": [
                {"vertex": int(v), "point": list(map(int, p))} for v, p in self.violations
            ],
        }


def verify_signed_tree(
    system: FunctionSystem,
    null_fraction: float = DEFAULT_NULL_FRACTION,
    zero_tol: float = DEFAULT_ZERO_TOL,
    max_violations: int = 100,
) -> SignedTreeReport:
    """Check the signed nesting rule and the support laws cell by cell.

    Cells where the parent value sits within zero_tol of zero are counted
    as boundary and excluded; the report fails if they exceed the allowed
    null fraction or if any genuine violation exists.  Violation lists are
    sorted so the report is independent of evaluation order.
    """
    V = system.values.reshape(system.values.shape[0], -1)
    H = V.shape[0]
    supp = np.abs(V) > zero_tol
    boundary = np.zeros(V.shape[1], dtype=bool)
    violations = []

    def record(vertex, flat_mask):
        idx = np.flatnonzero(flat_mask)
        for flat in idx[:max_violations]:
            violations.append((vertex, np.unravel_index(flat, system.grid.shape)))

    for N in range(2, H + 1):
        P = V[parent_index(N) - 1]
        sign = 1.0 if N % 2 == 0 else -1.0  # left children have even numbers
        par_boundary = np.abs(P) <= zero_tol
        bad = supp[N - 1] & ~(sign * P > 0) & ~par_boundary
        boundary |= supp[N - 1] & par_boundary
        record(N, bad)
        # support laws: nesting inside the parent, disjoint siblings
        record(N, supp[N - 1] & ~supp[parent_index(N) - 1] & ~par_boundary)
        if N % 2 == 0 and N + 1 <= H:
            record(N, supp[N - 1] & supp[N])
    violations = sorted(set(violations))[:max_violations]
    boundary_fraction = float(boundary.mean())
    passed = not violations and boundary_fraction <= null_fraction
    return SignedTreeReport(passed, boundary_fraction, violations, H)


@dataclass
class PartialSumReport:
    passed: bool
    worst_ratio: float
    boundary_fraction: float
    sign_pattern_ok: bool
    violations: list

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "worst_ratio": self.worst_ratio,
            "boundary_fraction": self.boundary_fraction,
            "sign_pattern_ok": self.sign_pattern_ok,
            "violations": [
                {"vertex": int(v), "point": list(map(int, p))} for v, p in self.violations
            ],
        }


def verify_partial_sum_bound(
    system: FunctionSystem,
    perm: TreePermutation,
    ratio_tol: float = 1e-9,
    zero_tol: float = DEFAULT_ZERO_TOL,
    signed_report: SignedTreeReport | None = None,
) -> PartialSumReport:
    """Check that max partial sums dominate a third of the absolute sum.

    At every cell with S = sum |f_N| > 0 computes
    M = max_l |sum_{h <= l} f_{perm(h)}| and reports min M/S; passes iff
    the minimum is >= 1/3 - ratio_tol.  Also checks the two-block sign
    pattern: no strictly positive value may precede the last strictly
    negative one in permutation order.
    """
    if signed_report is None:
        signed_report = verify_signed_tree(system, zero_tol=zero_tol)
    if not signed_report.passed:
        return PartialSumReport(
            False,
            float("nan"),
            signed_report.boundary_fraction,
            False,
            signed_report.violations,
        )
    V = system.values.reshape(system.values.shape[0], -1)
    order = np.asarray(perm.forward) - 1
    W = V[order]
    partial = np.cumsum(W, axis=0)
    M = np.max(np.abs(partial), axis=0)
    S = np.sum(np.abs(V), axis=0)
    active = S > zero_tol
    if active.any():
        worst = float(np.min(M[active] / S[active]))
    else:
        worst = float("inf")

    H = W.shape[0]
    ranks = np.arange(H).reshape(H, 1)
    neg = W < -zero_tol
    pos = W > zero_tol
    last_neg = np.where(neg.any(axis=0), H - 1 - np.argmax(neg[::-1], axis=0), -1)
    pattern_bad = (pos & (ranks <= last_neg)).any(axis=0)
    sign_ok = not pattern_bad.any()

    violations = []
    if pattern_bad.any():
        for flat in np.flatnonzero(pattern_bad)[:100]:
            violations.append((0, np.unravel_index(flat, system.grid.shape)))
    passed = worst >= 1.0 / 3.0 - ratio_tol and sign_ok
    return PartialSumReport(
        passed, worst, signed_report.boundary_fraction, sign_ok, sorted(violations)
    )
