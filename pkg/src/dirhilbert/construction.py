"""The inductive frequency-localised construction of test functions.

Given a sector chain with 2^m - 1 sectors and the midpoint permutation,
the builder walks vertices in index order.  Vertex N refines its parent's
cell mask by the sign of cos(2 pi x . carrier), smooths the refined
indicator with a band-limited nonnegative kernel, and places an integer
carrier frequency deep inside its assigned sector so that the frequency
cube carrier + [-bandwidth, bandwidth]^n

  * keeps every lattice point strictly inside the sector,
  * leaves the |cos| mass over the mask above a third of its measure,
  * splits the mask into two children of viable cell count,
  * avoids every Minkowski-sum cube formed with earlier vertices at
    unbalanced top multiplicity, also after folding modulo the grid, and
  * respects Nyquist headroom |carrier|_inf + bandwidth < G/2.

The pieces are f_N = e(carrier . x) g_N with g_N the smoothed indicator;
the companions cos(2 pi carrier . x) chi_N form a signed tree system.

Smoothing kernel.  The spectral taper is the normalised autocorrelation
of a C-infinity plateau window, so the spatial kernel is a nonnegative
probability kernel on the torus: the smoothed indicator lands in [0, 1]
up to roundoff by construction, and its lattice spectrum vanishes exactly
outside [-bandwidth, bandwidth]^n.

Carriers are preferred with odd coordinate sum: cos(2 pi x . carrier)
then never vanishes at a cell centre, so mask splits are exact and no
boundary cells arise anywhere in the tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .errors import ConstructionError, IntegrityError
from .geometry import DirectionOrdering, SectorChain, build_sector_chain
from .grid import GridFunction, TorusGrid
from .tree import (
    FunctionSystem,
    TreePermutation,
    child_indices,
    height,
    is_ancestor,
    midpoint_permutation,
    parent_index,
    vertex_count,
)

SMOOTHING_TARGET_DEFAULT = 0.02
MIN_CHILD_CELLS_DEFAULT = 16
BANDWIDTH_DIVISOR = 8  # soft cap: bandwidth <= G / BANDWIDTH_DIVISOR
COS_ZERO_TOL = 1e-12
MANIFEST_FORMAT = 1


# ---------------------------------------------------------------------------
# spectral taper
# ---------------------------------------------------------------------------

_TAPER_SAMPLES = 4096
_taper_table: tuple[np.ndarray, np.ndarray] | None = None


def _plateau_window(s: np.ndarray) -> np.ndarray:
    # 1 on |s| <= 1/4, C-infinity roll to 0 at |s| = 1/2
    a = np.abs(s)
    out = np.zeros_like(a)
    out[a <= 0.25] = 1.0
    roll = (a > 0.25) & (a < 0.5)
    u = (a[roll] - 0.25) / 0.25

    def f(t):
        r = np.zeros_like(t)
        pos = t > 0
        r[pos] = np.exp(-1.0 / t[pos])
        return r

    out[roll] = f(1.0 - u) / (f(1.0 - u) + f(u))
    return out


def _taper_samples() -> tuple[np.ndarray, np.ndarray]:
    global _taper_table
    if _taper_table is None:
        K = _TAPER_SAMPLES
        s = (np.arange(K) + 0.5) / K - 0.5
        b = _plateau_window(s)
        ac = np.fft.irfft(np.abs(np.fft.rfft(b, 2 * K)) ** 2)[:K]
        ac /= ac[0]
        lags = np.arange(K) / K
        _taper_table = (lags, ac)
    return _taper_table


def taper_profile(t) -> np.ndarray:
    """The even spectral taper: 1 at 0, supported strictly inside (-1, 1)."""
    lags, ac = _taper_samples()
    t = np.abs(np.asarray(t, dtype=float))
    return np.where(t >= 1.0, 0.0, np.interp(t, lags, ac, right=0.0))


def smoothed_indicator(grid: TorusGrid, mask_spectrum: np.ndarray, bandwidth: int) -> np.ndarray:
    """Band-limit an indicator spectrum and return the spatial values.

    The result G^n values are clipped into [0, 1]; anything further than
    1e-9 outside that range trips IntegrityError (it would mean the kernel
    lost positivity, which the taper construction rules out).
    """
    spec = mask_spectrum.copy()
    weights = taper_profile(grid.freqs / bandwidth)
    for a in range(grid.n):
        shape = [1] * grid.n
        shape[a] = grid.size
        spec *= weights.reshape(shape)
    g = grid.inverse(spec).real
    if g.min() < -1e-9 or g.max() > 1.0 + 1e-9:
        raise IntegrityError(
            f"smoothed indicator left [0,1]: min={g.min():.3e} max={g.max():.3e}"
        )
    return np.clip(g, 0.0, 1.0)


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------


def smoothing_baseline(mask_fraction: float, p0: int) -> float:
    """Combined error of the trivial bandwidth-one smoothing g = |E| const.

    This is the saturation floor: any correct smoothing does at least this
    well, and on a grid too coarse to resolve the finest mask stripes no
    band-limited kernel can do materially better.
    """
    e = mask_fraction
    l1 = 2.0 * e * (1.0 - e)
    high = (e * (1.0 - e) ** (2 * p0) + (1.0 - e) * e ** (2 * p0)) ** (1.0 / (2 * p0))
    return l1 + high


@dataclass
class ConstructionConfig:
    """Tunable knobs of the construction.

    delta, when set, is a uniform per-piece gate on the combined smoothing
    error ||g - chi||_1 + ||g - chi||_{2 p0}; builds that cannot meet it
    fail so the caller can escalate the grid.  When unset, each vertex is
    gated adaptively at a small factor above its saturation floor (see
    smoothing_baseline): resolvable masks must actually resolve, while
    masks whose stripes exceed the Nyquist budget are accepted at the
    floor with their true errors recorded.
    """

    m: int
    p0: int = 1
    delta: float | None = None
    smoothing_target: float = SMOOTHING_TARGET_DEFAULT
    min_child_cells: int = MIN_CHILD_CELLS_DEFAULT
    magnitude_growth: float = 1.2
    direction_candidates: int = 9
    seed: int = 0
    avoid_mod_grid: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"depth must be >= 1, got {self.m}")
        if self.p0 < 1:
            raise ValueError(f"p0 must be >= 1, got {self.p0}")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 1.0 < self.magnitude_growth <= 4.0:
            raise ValueError("magnitude growth must lie in (1, 4]")

    def gate_for(self, mask_fraction: float) -> float:
        if self.delta is not None:
            return self.delta
        return 1.2 * smoothing_baseline(mask_fraction, self.p0) + 0.02


@dataclass
class VertexData:
    index: int
    sector_rank: int
    mask: np.ndarray
    cell_fraction: float
    bandwidth: int
    smooth: np.ndarray
    smoothing_error_l1: float
    smoothing_error_high: float
    carrier: tuple[int, ...]
    carrier_margin: float
    integral_mean: float
    boundary_cells: int

    @property
    def tree_height(self) -> int:
        return height(self.index)


class ConstructionState:
    """All per-vertex artifacts of one build, plus derived functions."""

    def __init__(
        self,
        grid: TorusGrid,
        chain: SectorChain,
        perm: TreePermutation,
        config: ConstructionConfig,
        vertices: list[VertexData],
    ):
        self.grid = grid
        self.chain = chain
        self.perm = perm
        self.config = config
        self._vertices = vertices
        self._total: GridFunction | None = None

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def count(self) -> int:
        return len(self._vertices)

    def vertex(self, N: int) -> VertexData:
        if not 1 <= N <= self.count:
            raise ValueError(f"vertex {N} out of range")
        return self._vertices[N - 1]

    def vertices(self):
        return iter(self._vertices)

    def piece(self, N: int) -> GridFunction:
        """f_N = e(carrier . x) g_N."""
        v = self.vertex(N)
        phase = self.grid.phase(np.asarray(v.carrier))
        return GridFunction(self.grid, np.exp(2j * np.pi * phase) * v.smooth)

    def cosine_piece(self, N: int) -> GridFunction:
        """cos(2 pi carrier . x) restricted to the vertex mask."""
        v = self.vertex(N)
        phase = self.grid.phase(np.asarray(v.carrier))
        return GridFunction(self.grid, np.cos(2 * np.pi * phase) * v.mask)

    def cosine_system(self) -> FunctionSystem:
        values = np.stack([self.cosine_piece(N).values for N in range(1, self.count + 1)])
        return FunctionSystem(self.grid, self.m, values)

    def total(self) -> GridFunction:
        if self._total is None:
            acc = np.zeros(self.grid.shape, dtype=complex)
            for N in range(1, self.count + 1):
                acc += self.piece(N).values
            self._total = GridFunction(self.grid, acc)
        return self._total

    def max_partial_magnitude(self) -> np.ndarray:
        """max_l |sum_{h <= l} f_{perm(h)}| cell by cell, streamed."""
        acc = np.zeros(self.grid.shape, dtype=complex)
        best = np.zeros(self.grid.shape)
        for rank in range(1, self.count + 1):
            acc += self.piece(self.perm.vertex(rank)).values
            np.maximum(best, np.abs(acc), out=best)
        return best

    def max_partial_cosine(self) -> np.ndarray:
        """Same maximum for the cosine companions (real partial sums)."""
        acc = np.zeros(self.grid.shape)
        best = np.zeros(self.grid.shape)
        for rank in range(1, self.count + 1):
            acc += self.cosine_piece(self.perm.vertex(rank)).values
            np.maximum(best, np.abs(acc), out=best)
        return best

    def manifest(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "n": self.grid.n,
            "grid": self.grid.size,
            "m": self.m,
            "p0": self.config.p0,
            "delta": self.config.delta,
            "seed": self.config.seed,
            "chain": {
                "directions": self.chain.directions.tolist(),
                "heights": self.chain.heights.tolist(),
                "base_point": self.chain.base_point.tolist(),
            },
            "permutation": list(self.perm.forward),
            "vertices": [
                {
                    "index": v.index,
                    "sector_rank": v.sector_rank,
                    "carrier": list(v.carrier),
                    "bandwidth": v.bandwidth,
                    "cells": int(round(v.cell_fraction * self.grid.cell_count)),
                    "cell_fraction": v.cell_fraction,
                    "carrier_margin": v.carrier_margin,
                    "integral_mean": v.integral_mean,
                    "smoothing_error_l1": v.smoothing_error_l1,
                    "smoothing_error_high": v.smoothing_error_high,
                    "boundary_cells": v.boundary_cells,
                }
                for v in self._vertices
            ],
        }


# ---------------------------------------------------------------------------
# mask refinement
# ---------------------------------------------------------------------------


def refine_mask(
    grid: TorusGrid, parent_mask: np.ndarray, parent_carrier, child_index: int
) -> tuple[np.ndarray, int]:
    """Split a parent mask by the sign of its carrier cosine.

    Left children (even index) keep the cells where the cosine is
    positive, right children the negative ones.  Returns the child mask
    and the number of parent cells lost to the |cos| <= tol boundary.
    """
    wave = np.cos(2 * np.pi * grid.phase(np.asarray(parent_carrier)))
    sign = 1.0 if child_index % 2 == 0 else -1.0
    boundary = parent_mask & (np.abs(wave) <= COS_ZERO_TOL)
    child = parent_mask & (sign * wave > COS_ZERO_TOL)
    return child, int(np.count_nonzero(boundary))


# ---------------------------------------------------------------------------
# smoothing selection
# ---------------------------------------------------------------------------


def _smoothing_errors(g: np.ndarray, chi: np.ndarray, p0: int) -> tuple[float, float]:
    err = np.abs(g - chi)
    l1 = float(err.mean())
    high = float(np.mean(err ** (2 * p0)) ** (1.0 / (2 * p0)))
    return l1, high


def select_smoothing(
    grid: TorusGrid,
    mask: np.ndarray,
    p0: int,
    target: float,
    bandwidth_limit: int,
) -> tuple[int, np.ndarray, float, float]:
    """Double the bandwidth until the smoothing error meets the target.

    Stops at the first bandwidth with l1 + l_{2 p0} error below target, or
    at the limit, returning the best bandwidth seen.
    """
    chi = mask.astype(float)
    spec = grid.forward(chi)
    bandwidth_limit = max(1, bandwidth_limit)
    ell = 1
    best = None
    while True:
        g = smoothed_indicator(grid, spec, ell)
        l1, high = _smoothing_errors(g, chi, p0)
        if best is None or l1 + high < best[2] + best[3]:
            best = (ell, g, l1, high)
        if l1 + high <= target or ell >= bandwidth_limit:
            return best
        ell = min(2 * ell, bandwidth_limit)


# ---------------------------------------------------------------------------
# cube avoidance
# ---------------------------------------------------------------------------


def avoidance_rows(
    carriers: list,
    bandwidths: list,
    own_bandwidth: int,
    N: int,
    p0: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forbidden-cube data for the carrier of vertex N.

    Enumerates pairs of multisets A, B over {1..N} of equal size h <= p0
    whose multiplicities of N differ (mu > nu), reduced to the condition
    | s . carrier_N + D |_inf > L with s = mu - nu, D the signed sum of
    the remaining carriers and L the sum of all 2h bandwidths involved.
    Returns stacked arrays (s, D, L); duplicates are collapsed.
    """
    n = len(carriers[0]) if carriers else None
    rows = {}
    earlier = list(range(1, N))
    for mu in range(1, p0 + 1):
        for nu in range(0, mu):
            s = mu - nu
            for h in range(mu, p0 + 1):
                for rest_a in combinations_with_replacement(earlier, h - mu):
                    base_d = sum((np.asarray(carriers[j - 1]) for j in rest_a), np.zeros(n, dtype=int)) if n else 0
                    base_l = sum(bandwidths[j - 1] for j in rest_a)
                    for rest_b in combinations_with_replacement(earlier, h - nu):
                        D = base_d - (
                            sum((np.asarray(carriers[j - 1]) for j in rest_b), np.zeros(n, dtype=int))
                            if n
                            else 0
                        )
                        L = (mu + nu) * own_bandwidth + base_l + sum(
                            bandwidths[j - 1] for j in rest_b
                        )
                        key = (s, tuple(int(x) for x in np.atleast_1d(D)), L)
                        rows[key] = None
    if not rows:
        return np.zeros(0, dtype=int), np.zeros((0, n or 1), dtype=int), np.zeros(0, dtype=int)
    keys = sorted(rows)
    s_arr = np.array([k[0] for k in keys], dtype=int)
    d_arr = np.array([k[1] for k in keys], dtype=int)
    l_arr = np.array([k[2] for k in keys], dtype=int)
    return s_arr, d_arr, l_arr


def _fold(values: np.ndarray, size: int) -> np.ndarray:
    return (values + size // 2) % size - size // 2


def avoidance_ok(
    carrier: np.ndarray,
    rows: tuple[np.ndarray, np.ndarray, np.ndarray],
    grid_size: int,
    mod_grid: bool,
) -> bool:
    s_arr, d_arr, l_arr = rows
    if s_arr.size == 0:
        return True
    pts = s_arr[:, None] * carrier[None, :] + d_arr
    if mod_grid:
        pts = _fold(pts, grid_size)
    return bool(np.all(np.max(np.abs(pts), axis=1) > l_arr))


# ---------------------------------------------------------------------------
# carrier selection
# ---------------------------------------------------------------------------

_DYADIC_FRACTIONS = (
    0.5, 0.25, 0.75, 0.125, 0.375, 0.625, 0.875,
    0.0625, 0.1875, 0.3125, 0.4375, 0.5625, 0.6875, 0.8125, 0.9375,
)


def _deepen_direction(vec: np.ndarray, normals: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Push an interior direction away from its nearest cone boundary.

    Supergradient ascent on the minimum signed margin; cheap and
    deterministic, used to escape the thin slab a vertical segment can be
    confined to when the ambient dimension exceeds two.
    """
    d = vec / np.linalg.norm(vec)
    step = 0.25
    for _ in range(60):
        margins = signs * (normals @ d)
        worst = int(np.argmin(margins))
        trial = d + step * signs[worst] * normals[worst]
        trial /= np.linalg.norm(trial)
        if np.min(signs * (normals @ trial)) > margins[worst]:
            d = trial
        else:
            step *= 0.5
            if step < 1e-4:
                break
    return d


def _candidate_directions(chain: SectorChain, sector_rank: int, count: int) -> list[np.ndarray]:
    """Interior directions of a sector.

    Scans the vertical segment between the bounding heights; in dimension
    three and up each segment point is additionally deepened towards the
    cone's incentre, since the segment itself may hug a boundary plane.
    """
    t_hi = chain.heights[sector_rank - 1]
    t_lo = chain.heights[sector_rank]
    base = chain.base_point
    sector = chain.sectors[sector_rank - 1]
    n = chain.directions.shape[1]
    dirs = []
    for frac in _DYADIC_FRACTIONS[:count]:
        tau = t_lo + frac * (t_hi - t_lo)
        vec = np.concatenate([base, [tau]])
        norm = np.linalg.norm(vec)
        if norm > 1e-12:
            dirs.append(vec / norm)
    if n >= 3:
        deepened = []
        for vec in dirs[: max(3, count // 2)]:
            deep = _deepen_direction(vec, sector.normals, sector.signs)
            if sector.membership(deep):
                deepened.append(deep)
        dirs = deepened + dirs
    return dirs


@dataclass
class CarrierSearchInfo:
    candidates_tried: int = 0
    rejected: dict = field(default_factory=dict)

    def reject(self, reason: str):
        self.rejected[reason] = self.rejected.get(reason, 0) + 1


def select_carrier(
    grid: TorusGrid,
    chain: SectorChain,
    sector_rank: int,
    mask: np.ndarray,
    bandwidth: int,
    rows: tuple[np.ndarray, np.ndarray, np.ndarray],
    config: ConstructionConfig,
    vertex: int = 0,
) -> tuple[np.ndarray, float, float, CarrierSearchInfo]:
    """Search for an integer carrier satisfying every constraint.

    Scans interior directions of the sector ordered by containment
    capacity, growing the magnitude geometrically; candidates are rounded
    to the lattice with a preference for odd coordinate sums.
    """
    G = grid.size
    U = chain.directions
    signs = chain.sectors[sector_rank - 1].signs
    one_norms = np.abs(U).sum(axis=1)
    coords = (np.argwhere(mask) + 0.5) / G  # (cells, n)
    cells = coords.shape[0]
    # search on a deterministic subsample; accepted candidates are
    # re-checked on the full mask before they are returned
    stride = max(1, cells // (1 << 17))
    sub = coords[::stride]
    info = CarrierSearchInfo()

    def grid_checks(cand, pts, scale):
        wave = np.cos(2 * np.pi * (pts @ cand))
        pos = int(np.count_nonzero(wave > COS_ZERO_TOL))
        neg = int(np.count_nonzero(wave < -COS_ZERO_TOL))
        floor = max(1, int(config.min_child_cells * scale))
        if pos < floor or neg < floor:
            return None
        mean_abs = float(np.abs(wave).sum() / pts.shape[0])
        if mean_abs <= 1.0 / 3.0:
            return None
        return mean_abs

    dirs = _candidate_directions(chain, sector_rank, config.direction_candidates)
    capacity = []
    for d in dirs:
        margins = signs * (U @ d)
        if margins.min() <= 0:
            continue
        capacity.append((float(np.max(one_norms / margins)), d))
    capacity.sort(key=lambda item: item[0])

    for _, d in capacity:
        margins = signs * (U @ d)
        r_lo = float(np.max((bandwidth + 0.75) * one_norms / margins)) * (1 + 1e-9)
        r_hi = (G / 2 - 1.25 - bandwidth) / float(np.max(np.abs(d)))
        if r_lo > r_hi:
            info.reject("margin")
            continue
        radii = [r_lo]
        r = r_lo
        while r < r_hi:
            r = min(r * config.magnitude_growth, r_hi)
            radii.append(r)
        for r in radii:
            base = r * d
            rounded = np.rint(base).astype(int)
            trials = [rounded]
            for a in range(grid.n):
                for step in (1, -1, 2, -2):
                    adj = rounded.copy()
                    adj[a] += step
                    trials.append(adj)
            # prefer an odd coordinate sum: cosine never hits a cell centre zero
            trials.sort(key=lambda c: (int(np.abs(c).sum()) % 2 == 0,
                                       float(np.abs(c - base).sum())))
            for cand in trials:
                info.candidates_tried += 1
                if np.max(np.abs(cand)) + bandwidth >= G // 2:
                    info.reject("headroom")
                    continue
                dots = signs * (U @ cand)
                margin = float(np.min(dots - bandwidth * one_norms))
                if margin <= 1e-9:
                    info.reject("sector")
                    continue
                if not avoidance_ok(cand, rows, G, config.avoid_mod_grid):
                    info.reject("cube-avoidance")
                    continue
                if stride > 1 and grid_checks(cand, sub, 0.25 / stride) is None:
                    info.reject("mask-subsample")
                    continue
                mean_abs = grid_checks(cand, coords, 1.0)
                if mean_abs is None:
                    info.reject("mask-full")
                    continue
                return cand, margin, mean_abs, info
    raise ConstructionError(
        vertex,
        "carrier-search",
        f"exhausted candidates at bandwidth {bandwidth} "
        f"(tried {info.candidates_tried}, rejections {info.rejected})",
    )


# ---------------------------------------------------------------------------
# the build loop
# ---------------------------------------------------------------------------


def _bandwidth_limit(
    grid: TorusGrid, chain: SectorChain, sector_rank: int, config: ConstructionConfig
) -> int:
    """Largest bandwidth any interior direction could possibly contain.

    Besides the sector margin and the Nyquist headroom, bandwidths are
    capped by a packing heuristic: avoidance conditions sum up to 2 p0 + 1
    bandwidths, so larger half exponents demand smaller frequency cubes.
    """
    G = grid.size
    U = chain.directions
    signs = chain.sectors[sector_rank - 1].signs
    one_norms = np.abs(U).sum(axis=1)
    best = 1
    for d in _candidate_directions(chain, sector_rank, config.direction_candidates):
        margins = signs * (U @ d)
        if margins.min() <= 0:
            continue
        amp = float(np.max(one_norms / margins))  # carrier magnitude per unit bandwidth
        cap = int((G / 2 - 2) / (amp * float(np.max(np.abs(d))) + 1.0))
        best = max(best, cap)
    packing = G // (BANDWIDTH_DIVISOR * (2 * config.p0 - 1))
    return max(1, min(best, packing))


def build_construction(
    grid: TorusGrid,
    chain: SectorChain,
    perm: TreePermutation,
    config: ConstructionConfig,
) -> ConstructionState:
    """Run the induction over all 2^m - 1 vertices.

    Raises ConstructionError when a vertex cannot satisfy its constraints;
    the caller may escalate the grid size and retry.
    """
    H = vertex_count(config.m)
    if chain.count != H:
        raise ValueError(f"chain has {chain.count} sectors, expected {H}")
    if len(perm.forward) != H:
        raise ValueError("permutation depth does not match config")
    vertices: list[VertexData] = []
    carriers: list[np.ndarray] = []
    bandwidths: list[int] = []
    for N in range(1, H + 1):
        if N == 1:
            mask = np.ones(grid.shape, dtype=bool)
            boundary = 0
        else:
            parent = vertices[parent_index(N) - 1]
            mask, boundary = refine_mask(grid, parent.mask, np.asarray(parent.carrier), N)
            if np.count_nonzero(mask) < config.min_child_cells:
                raise ConstructionError(N, "mask", "child mask below min_child_cells")
        rank = perm.rank(N)
        limit = _bandwidth_limit(grid, chain, rank, config)
        ell, g, err_l1, err_high = select_smoothing(
            grid, mask, config.p0, config.smoothing_target, limit
        )
        while True:
            rows = avoidance_rows(carriers, bandwidths, ell, N, config.p0)
            try:
                carrier, margin, mean_abs, _ = select_carrier(
                    grid, chain, rank, mask, ell, rows, config, vertex=N
                )
                break
            except ConstructionError as exc:
                if ell <= 1:
                    raise
                # shrink the frequency cube and retry the search
                ell = max(1, ell // 2)
                g = smoothed_indicator(grid, grid.forward(mask.astype(float)), ell)
                err_l1, err_high = _smoothing_errors(g, mask.astype(float), config.p0)
        fraction = float(np.count_nonzero(mask) / grid.cell_count)
        gate = config.gate_for(fraction)
        if err_l1 + err_high > gate:
            raise ConstructionError(
                N,
                "smoothing",
                f"error {err_l1 + err_high:.4f} exceeds gate {gate:.4f} "
                f"at bandwidth {ell}; a larger grid is needed",
            )
        vertices.append(
            VertexData(
                index=N,
                sector_rank=rank,
                mask=mask,
                cell_fraction=fraction,
                bandwidth=ell,
                smooth=g,
                smoothing_error_l1=err_l1,
                smoothing_error_high=err_high,
                carrier=tuple(int(c) for c in carrier),
                carrier_margin=margin,
                integral_mean=mean_abs,
                boundary_cells=boundary,
            )
        )
        carriers.append(carrier)
        bandwidths.append(ell)
    return ConstructionState(grid, chain, perm, config, vertices)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass
class CubeCertificateReport:
    passed: bool
    conditions_checked: int
    mod_grid_checked: bool
    violations: list

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "conditions_checked": self.conditions_checked,
            "mod_grid_checked": self.mod_grid_checked,
            "violations": self.violations[:20],
        }


def cube_avoidance_certificate(
    state: ConstructionState, p0: int | None = None, budget: int = 10**7
) -> CubeCertificateReport:
    """Exhaustively re-check the Minkowski cube conditions for every vertex."""
    from .errors import ResourceGuardError

    p0 = state.config.p0 if p0 is None else p0
    carriers = [np.asarray(v.carrier) for v in state.vertices()]
    bandwidths = [v.bandwidth for v in state.vertices()]
    checked = 0
    violations = []
    for N in range(1, state.count + 1):
        rows = avoidance_rows(carriers[: N - 1], bandwidths[: N - 1], bandwidths[N - 1], N, p0)
        checked += rows[0].size
        if checked > budget:
            raise ResourceGuardError(f"cube certificate exceeded budget {budget}")
        s_arr, d_arr, l_arr = rows
        if s_arr.size == 0:
            continue
        pts = s_arr[:, None] * carriers[N - 1][None, :] + d_arr
        folded = _fold(pts, state.grid.size)
        bad = np.flatnonzero(np.max(np.abs(folded), axis=1) <= l_arr)
        for b in bad[:10]:
            violations.append(
                {
                    "vertex": N,
                    "s": int(s_arr[b]),
                    "offset": d_arr[b].tolist(),
                    "halfside": int(l_arr[b]),
                }
            )
    return CubeCertificateReport(not violations, checked, True, violations)


@dataclass
class ConstructionReport:
    passed: bool
    checks: dict
    vertex_stats: list

    def as_dict(self) -> dict:
        return {"pass": self.passed, "checks": self.checks, "vertex_stats": self.vertex_stats}


def verify_construction(
    state: ConstructionState,
    null_fraction: float = 0.01,
    tolerance_scale: float = 1.0,
) -> ConstructionReport:
    """Re-verify every constructed invariant from the stored artifacts.

    Covers the sibling partition, the constant level sums, the subtree
    identities, the signed system property of the cosine companions with
    the one-third partial sum bound, the per-vertex integral bound, exact
    frequency support inside each cube and sector, cube avoidance and the
    smoothing gate.  Boundary cells (never present with odd carriers) are
    tolerated up to the null fraction.
    """
    from .tree import verify_partial_sum_bound, verify_signed_tree

    grid = state.grid
    H = state.count
    cells = grid.cell_count
    checks: dict = {}
    stats = []

    masks = [v.mask for v in state.vertices()]
    budget = int(null_fraction * cells)

    sibling_bad = 0
    for N in range(1, H + 1):
        if height(N) >= state.m - 1:
            continue
        left, right = child_indices(N)
        overlap = int(np.count_nonzero(masks[left - 1] & masks[right - 1]))
        mismatch = int(np.count_nonzero((masks[left - 1] | masks[right - 1]) ^ masks[N - 1]))
        sibling_bad += overlap + max(0, mismatch)
    checks["sibling_partition"] = {"pass": sibling_bad <= budget, "bad_cells": sibling_bad}

    level_sum = np.zeros(grid.shape, dtype=np.int64)
    for msk in masks:
        level_sum += msk
    off = int(np.count_nonzero(level_sum != state.m))
    checks["level_sum"] = {"pass": off <= budget, "bad_cells": off}

    subtree_bad = 0
    for N0 in range(1, H + 1):
        for r in range(height(N0), state.m):
            acc = np.zeros(grid.shape, dtype=np.int64)
            for N in range(1, H + 1):
                if height(N) == r and is_ancestor(N0, N):
                    acc += masks[N - 1]
            subtree_bad += int(np.count_nonzero(acc != masks[N0 - 1]))
    checks["subtree_identity"] = {"pass": subtree_bad <= budget, "bad_cells": subtree_bad}

    system = state.cosine_system()
    signed = verify_signed_tree(system, null_fraction=null_fraction)
    checks["signed_system"] = signed.as_dict()
    bound = verify_partial_sum_bound(
        system, state.perm, ratio_tol=1e-9 * tolerance_scale, signed_report=signed
    )
    checks["partial_sum_bound"] = bound.as_dict()

    integral_ok = True
    support_worst = 0.0
    sector_ok = True
    for v in state.vertices():
        coords = (np.argwhere(v.mask) + 0.5) / grid.size
        carrier = np.asarray(v.carrier)
        phases = coords @ carrier
        mean_abs = float(np.mean(np.abs(np.cos(2 * np.pi * phases))))
        rl_first = complex(np.mean(np.exp(-2j * np.pi * phases))) * v.cell_fraction
        rl_double = complex(np.mean(np.exp(-4j * np.pi * phases))) * v.cell_fraction
        ok = mean_abs > 1.0 / 3.0
        integral_ok &= ok
        spec = state.piece(v.index).spectrum()
        outside = np.ones(grid.shape, dtype=bool)
        sel = tuple(
            slice(
                max(0, c + grid.size // 2 - v.bandwidth),
                min(grid.size, c + grid.size // 2 + v.bandwidth + 1),
            )
            for c in v.carrier
        )
        outside[sel] = False
        leak = float(np.max(np.abs(spec[outside])) / max(np.max(np.abs(spec)), 1e-300))
        support_worst = max(support_worst, leak)
        signs = state.chain.sectors[v.sector_rank - 1].signs
        margins = signs * (state.chain.directions @ carrier)
        one_norms = np.abs(state.chain.directions).sum(axis=1)
        sector_ok &= bool(np.all(margins - v.bandwidth * one_norms > 0))
        stats.append(
            {
                "vertex": v.index,
                "carrier": list(v.carrier),
                "bandwidth": v.bandwidth,
                "cells": int(round(v.cell_fraction * cells)),
                "integral_mean": mean_abs,
                "indicator_hat_at_carrier": abs(rl_first),
                "indicator_hat_at_double": abs(rl_double),
                "smoothing_error_l1": v.smoothing_error_l1,
                "smoothing_error_high": v.smoothing_error_high,
                "carrier_margin": v.carrier_margin,
            }
        )
    checks["integral_bound"] = {"pass": integral_ok}
    checks["frequency_support"] = {
        "pass": support_worst <= 1e-12 * tolerance_scale,
        "worst_leak": support_worst,
    }
    checks["sector_containment"] = {"pass": sector_ok}

    cert = cube_avoidance_certificate(state)
    checks["cube_avoidance"] = cert.as_dict()

    smoothing_ok = all(
        v.smoothing_error_l1 + v.smoothing_error_high
        <= state.config.gate_for(v.cell_fraction)
        for v in state.vertices()
    )
    checks["smoothing_gate"] = {
        "pass": smoothing_ok,
        "gate": state.config.delta if state.config.delta is not None else "adaptive",
    }
    range_ok = all(
        float(v.smooth.min()) >= 0.0 and float(v.smooth.max()) <= 1.0 + 1e-9
        for v in state.vertices()
    )
    checks["smooth_range"] = {"pass": range_ok}

    boundary_total = sum(v.boundary_cells for v in state.vertices())
    checks["boundary_cells"] = {
        "pass": boundary_total <= budget,
        "count": boundary_total,
    }

    passed = all(c["pass"] for c in checks.values())
    return ConstructionReport(passed, checks, stats)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def save_manifest(state: ConstructionState, path) -> None:
    with open(path, "w") as fh:
        json.dump(state.manifest(), fh, indent=2, sort_keys=True)


def state_from_manifest(manifest: dict, memory_budget: int | None = None) -> ConstructionState:
    """Rebuild a construction state from a manifest (no searching).

    Masks are replayed from the recorded carriers and the smoothed pieces
    from the recorded bandwidths, so a manifest with perturbed entries
    reproduces a state whose defects the verifiers can expose.
    """
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"unsupported manifest format {manifest.get('format')}")
    kwargs = {}
    if memory_budget is not None:
        kwargs["memory_budget"] = memory_budget
    grid = TorusGrid(int(manifest["n"]), int(manifest["grid"]), **kwargs)
    directions = np.asarray(manifest["chain"]["directions"], dtype=float)
    heights_arr = np.asarray(manifest["chain"]["heights"], dtype=float)
    base_point = np.asarray(manifest["chain"]["base_point"], dtype=float)
    ordering = DirectionOrdering(directions, heights_arr, base_point, attempts=0)
    chain = build_sector_chain(ordering)
    m = int(manifest["m"])
    perm = midpoint_permutation(m)
    if list(perm.forward) != list(manifest["permutation"]):
        raise ValueError("manifest permutation does not match the midpoint ordering")
    delta = manifest.get("delta")
    config = ConstructionConfig(
        m=m,
        p0=int(manifest["p0"]),
        delta=None if delta is None else float(delta),
        seed=int(manifest.get("seed", 0)),
    )
    entries = sorted(manifest["vertices"], key=lambda e: e["index"])
    vertices: list[VertexData] = []
    for entry in entries:
        N = int(entry["index"])
        carrier = np.asarray(entry["carrier"], dtype=int)
        ell = int(entry["bandwidth"])
        if N == 1:
            mask = np.ones(grid.shape, dtype=bool)
            boundary = 0
        else:
            parent = vertices[parent_index(N) - 1]
            mask, boundary = refine_mask(grid, parent.mask, np.asarray(parent.carrier), N)
        g = smoothed_indicator(grid, grid.forward(mask.astype(float)), ell)
        l1, high = _smoothing_errors(g, mask.astype(float), config.p0)
        coords = (np.argwhere(mask) + 0.5) / grid.size
        mean_abs = float(np.mean(np.abs(np.cos(2 * np.pi * (coords @ carrier))))) if coords.size else 0.0
        signs = chain.sectors[int(entry["sector_rank"]) - 1].signs
        margins = signs * (chain.directions @ carrier)
        one_norms = np.abs(chain.directions).sum(axis=1)
        vertices.append(
            VertexData(
                index=N,
                sector_rank=int(entry["sector_rank"]),
                mask=mask,
                cell_fraction=float(np.count_nonzero(mask) / grid.cell_count),
                bandwidth=ell,
                smooth=g,
                smoothing_error_l1=l1,
                smoothing_error_high=high,
                carrier=tuple(int(c) for c in carrier),
                carrier_margin=float(np.min(margins - ell * one_norms)),
                integral_mean=mean_abs,
                boundary_cells=boundary,
            )
        )
    return ConstructionState(grid, chain, perm, config, vertices)
