"""Stratum bookkeeping for the even-exponent norm expansion.

Expanding ||sum_N f_N||_{2 p0}^{2 p0} over the grid produces integrals of
products of pieces and conjugate pieces.  Each product is classified by a
pair of strictly increasing vertex tuples with multiplicity vectors (a
*stratum*); the height of the largest vertex stratifies the sum.  Strata
whose vertices fail to lie on a single tree ray have empty common support
and vanish; among ray strata, only those whose two maximal entries agree
with equal multiplicity survive the frequency cancellation.

All oracles here enumerate the exact finite sums on small trees and
compare against direct grid integration, with hard enumeration budgets.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb, factorial, prod

import numpy as np

from .errors import ResourceGuardError
from .tree import height, on_common_ray, vertex_count

DEFAULT_BUDGET = 10**7


def compositions(p: int, r: int) -> list[tuple[int, ...]]:
    """All r-part compositions of p (entries >= 1), lexicographically.

    The count is C(p - 1, r - 1).
    """
    if r < 1 or r > p:
        raise ValueError(f"need 1 <= r <= p, got r={r}, p={p}")
    out = []
    for cuts in combinations(range(1, p), r - 1):
        bounds = (0,) + cuts + (p,)
        out.append(tuple(bounds[i + 1] - bounds[i] for i in range(r)))
    return out


def multiplicity_weight(left_mult, right_mult, p: int, q: int) -> int:
    """The multinomial coefficient attached to a stratum in the expansion."""
    return (factorial(p) // prod(factorial(u) for u in left_mult)) * (
        factorial(q) // prod(factorial(u) for u in right_mult)
    )


@dataclass(frozen=True)
class Stratum:
    """One grouped term of the expansion.

    left/right are strictly increasing vertex tuples, left_mult/right_mult
    the matching multiplicity vectors; top_height is the height of the
    largest vertex overall.  on_ray marks strata whose vertices share a
    tree ray; star additionally requires the two maximal vertices to agree
    with equal multiplicity.
    """

    left: tuple[int, ...]
    left_mult: tuple[int, ...]
    right: tuple[int, ...]
    right_mult: tuple[int, ...]
    top_height: int
    on_ray: bool
    star: bool

    def net_frequency(self, carriers) -> np.ndarray:
        acc = np.zeros(len(carriers[0]), dtype=int)
        for v, u in zip(self.left, self.left_mult):
            acc += u * np.asarray(carriers[v - 1])
        for v, u in zip(self.right, self.right_mult):
            acc -= u * np.asarray(carriers[v - 1])
        return acc


def _tuples_with_mults(p: int, universe: int):
    for r in range(1, p + 1):
        mults = compositions(p, r)
        for verts in combinations(range(1, universe + 1), r):
            for mu in mults:
                yield verts, mu


def enumerate_strata(
    p: int,
    q: int,
    m: int,
    top_height: int | None = None,
    budget: int = DEFAULT_BUDGET,
):
    """Yield every stratum of the (p, q) expansion on the depth-m tree.

    top_height (0-based) restricts to strata whose maximal vertex sits at
    that height.  Raises ResourceGuardError beyond the enumeration budget.
    """
    H = vertex_count(m)
    count = 0
    for left, left_mult in _tuples_with_mults(p, H):
        for right, right_mult in _tuples_with_mults(q, H):
            h = max(height(left[-1]), height(right[-1]))
            if top_height is not None and h != top_height:
                continue
            count += 1
            if count > budget:
                raise ResourceGuardError(f"stratum enumeration exceeded budget {budget}")
            ray = on_common_ray(left + right)
            star = (
                ray
                and left[-1] == right[-1]
                and left_mult[-1] == right_mult[-1]
            )
            yield Stratum(left, left_mult, right, right_mult, h, ray, star)


@dataclass
class PartitionReport:
    passed: bool
    total_tuples: int
    classified: int
    count_identity_ok: bool

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "total_tuples": self.total_tuples,
            "classified": self.classified,
            "count_identity_ok": self.count_identity_ok,
        }


def verify_partition(p: int, levels: int, budget: int = DEFAULT_BUDGET) -> PartitionReport:
    """Every p-tuple over {1 .. 2^levels - 1} matches exactly one stratum class.

    Each tuple must be a permutation of the canonical vector of exactly
    one (vertices, multiplicities) pair, and the multinomial counts must
    add up to the total number of tuples.
    """
    universe = 2**levels - 1
    total = universe**p
    if total > budget:
        raise ResourceGuardError(f"partition check needs {total} tuples, budget {budget}")
    classified = 0
    ok = True
    for idx in np.ndindex(*([universe] * p)):
        tup = tuple(sorted(i + 1 for i in idx))
        verts = tuple(sorted(set(tup)))
        mults = tuple(tup.count(v) for v in verts)
        if sum(mults) != p:
            ok = False
        classified += 1
    count_sum = 0
    for verts, mu in _tuples_with_mults(p, universe):
        count_sum += factorial(p) // prod(factorial(u) for u in mu)
    identity = count_sum == total
    return PartitionReport(ok and identity and classified == total, total, classified, identity)


def fibre_count(levels: int, r: int) -> int:
    """Number of increasing r-tuples over {1 .. 2^levels - 1}."""
    return comb(2**levels - 1, r)


# ---------------------------------------------------------------------------
# grid integrals of strata
# ---------------------------------------------------------------------------


class _PieceCache:
    def __init__(self, state):
        self.state = state
        self._pieces: dict[int, np.ndarray] = {}

    def piece(self, N: int) -> np.ndarray:
        if N not in self._pieces:
            self._pieces[N] = self.state.piece(N).values
        return self._pieces[N]


def stratum_f_integral(cache: _PieceCache, stratum: Stratum) -> complex:
    """Grid integral of the piece product attached to a stratum."""
    acc = np.ones(cache.state.grid.shape, dtype=complex)
    for v, u in zip(stratum.left, stratum.left_mult):
        acc *= cache.piece(v) ** u
    for v, u in zip(stratum.right, stratum.right_mult):
        acc *= np.conj(cache.piece(v)) ** u
    return complex(acc.mean())


def stratum_g_integral(state, stratum: Stratum) -> complex:
    """Grid integral of e(net_frequency . x) over the common mask."""
    mask = np.ones(state.grid.shape, dtype=bool)
    for v in set(stratum.left) | set(stratum.right):
        mask &= state.vertex(v).mask
    if not mask.any():
        return 0.0 + 0.0j
    carriers = [v.carrier for v in state.vertices()]
    freq = stratum.net_frequency(carriers)
    phase = state.grid.phase(freq)
    return complex(np.mean(np.exp(2j * np.pi * phase) * mask))


def stratum_cubes_disjoint(state, stratum: Stratum) -> bool:
    """Whether the two Minkowski frequency cubes avoid each other mod G."""
    carriers = [np.asarray(v.carrier) for v in state.vertices()]
    bands = [v.bandwidth for v in state.vertices()]
    pa = sum(u * carriers[v - 1] for v, u in zip(stratum.left, stratum.left_mult))
    pb = sum(u * carriers[v - 1] for v, u in zip(stratum.right, stratum.right_mult))
    la = sum(u * bands[v - 1] for v, u in zip(stratum.left, stratum.left_mult))
    lb = sum(u * bands[v - 1] for v, u in zip(stratum.right, stratum.right_mult))
    G = state.grid.size
    folded = (pa - pb + G // 2) % G - G // 2
    return bool(np.max(np.abs(folded)) > la + lb)


@dataclass
class NormExpansionReport:
    passed: bool
    direct: float
    stratum_sum: float
    relative_error: float
    strata: int
    max_disjoint_integral: float
    tolerance: float

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "direct": self.direct,
            "stratum_sum": self.stratum_sum,
            "relative_error": self.relative_error,
            "strata": self.strata,
            "max_disjoint_integral": self.max_disjoint_integral,
            "tolerance": self.tolerance,
        }


def norm_expansion_check(
    state, p0: int | None = None, rel_tol: float = 1e-6, budget: int = DEFAULT_BUDGET
) -> NormExpansionReport:
    """Compare ||f||_{2 p0}^{2 p0} against the full stratum sum.

    The left side is direct grid integration of |sum f_N|^{2 p0}; the
    right side enumerates every stratum with its multinomial weight.  Also
    records the largest |integral| among strata whose frequency cubes are
    disjoint mod G, which must sit at roundoff level.
    """
    p0 = state.config.p0 if p0 is None else p0
    cache = _PieceCache(state)
    total = np.zeros(state.grid.shape, dtype=complex)
    for N in range(1, state.count + 1):
        total += cache.piece(N)
    direct = float(np.mean(np.abs(total) ** (2 * p0)))
    acc = 0.0 + 0.0j
    strata = 0
    max_disjoint = 0.0
    for stratum in enumerate_strata(p0, p0, state.m, budget=budget):
        strata += 1
        weight = multiplicity_weight(stratum.left_mult, stratum.right_mult, p0, p0)
        value = stratum_f_integral(cache, stratum)
        acc += weight * value
        if stratum_cubes_disjoint(state, stratum):
            max_disjoint = max(max_disjoint, abs(value))
    stratum_sum = float(acc.real)
    rel = abs(direct - stratum_sum) / max(abs(direct), 1e-300)
    return NormExpansionReport(
        rel <= rel_tol, direct, stratum_sum, rel, strata, max_disjoint, rel_tol
    )


@dataclass
class RaySupportReport:
    passed: bool
    strata: int
    mismatches: list

    def as_dict(self) -> dict:
        return {"pass": self.passed, "strata": self.strata, "mismatches": self.mismatches[:20]}


def ray_support_report(state, p: int, q: int, budget: int = DEFAULT_BUDGET) -> RaySupportReport:
    """Common mask nonemptiness must match the ray flag for every stratum."""
    strata = 0
    mismatches = []
    for stratum in enumerate_strata(p, q, state.m, budget=budget):
        strata += 1
        mask = np.ones(state.grid.shape, dtype=bool)
        for v in set(stratum.left) | set(stratum.right):
            mask &= state.vertex(v).mask
        nonempty = bool(mask.any())
        if nonempty != stratum.on_ray:
            mismatches.append(
                {
                    "left": list(stratum.left),
                    "right": list(stratum.right),
                    "on_ray": stratum.on_ray,
                    "nonempty": nonempty,
                }
            )
    return RaySupportReport(not mismatches, strata, mismatches)


def unit_sum(state, level: int) -> float:
    """Total cell fraction of all masks at one tree height."""
    return float(
        sum(v.cell_fraction for v in state.vertices() if v.tree_height == level)
    )


@dataclass
class RecursionReport:
    """Exact telescope error plus the measured soft remainder.

    worst_exact compares the matched-tail (star) sums against the peeled
    lower-height ray sums; on the grid that identity is a mask telescope
    and must hold to roundoff.  worst_remainder measures how far the full
    ray sums sit from their star parts: the paper drives this term to
    zero with exponentially fine smoothing, so at desk scale it is a
    reported residue, not a gate.
    """

    passed: bool
    cases: int
    worst_exact: float
    worst_remainder: float
    tolerance: float

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "cases": self.cases,
            "worst_exact": self.worst_exact,
            "worst_remainder": self.worst_remainder,
            "tolerance": self.tolerance,
        }


def _ray_sum(
    state, p: int, q: int, mu, nu, top_height: int, budget: int, star_only: bool = False
) -> float:
    acc = 0.0 + 0.0j
    for stratum in enumerate_strata(p, q, state.m, top_height=top_height, budget=budget):
        if not stratum.on_ray:
            continue
        if star_only and not stratum.star:
            continue
        if stratum.left_mult != mu or stratum.right_mult != nu:
            continue
        acc += stratum_g_integral(state, stratum)
    return float(acc.real)


def recursion_report(
    state, p0: int | None = None, tol: float = 1e-9, budget: int = DEFAULT_BUDGET
) -> RecursionReport:
    """Peel the deepest matched entry off the ray sums and compare.

    For multiplicity vectors with matching top entries, the star sum at
    height h equals the sum over lower heights of the truncated ray sums
    exactly (a telescope over child masks).  The gap between the full ray
    sum and its star part is recorded as the smoothing-scale remainder.
    """
    p0 = state.config.p0 if p0 is None else p0
    worst_exact = 0.0
    worst_remainder = 0.0
    cases = 0
    for p in range(1, p0 + 1):
        for q in range(1, p0 + 1):
            for r in range(2, p + 1):
                for s in range(2, q + 1):
                    for mu in compositions(p, r):
                        for nu in compositions(q, s):
                            for h in range(1, state.m):
                                cases += 1
                                direct = _ray_sum(state, p, q, mu, nu, h, budget)
                                star = _ray_sum(
                                    state, p, q, mu, nu, h, budget, star_only=True
                                )
                                if mu[-1] == nu[-1]:
                                    recursed = sum(
                                        _ray_sum(
                                            state,
                                            p - mu[-1],
                                            q - nu[-1],
                                            mu[:-1],
                                            nu[:-1],
                                            h1,
                                            budget,
                                        )
                                        for h1 in range(0, h)
                                    )
                                    worst_exact = max(worst_exact, abs(star - recursed))
                                else:
                                    worst_exact = max(worst_exact, abs(star))
                                worst_remainder = max(worst_remainder, abs(direct - star))
    passed = worst_exact <= tol
    return RecursionReport(passed, cases, worst_exact, worst_remainder, tol)
