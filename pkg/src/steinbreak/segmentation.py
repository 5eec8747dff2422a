"""Break-date estimation by least squares.

Break dates are chosen to minimize the sum of squared residuals over all
partitions whose segments respect a minimum length, for both the plain and
the linearly restricted regression.  The unrestricted criterion separates
across segments, so a Bellman recursion over a precomputed table of
single-segment SSRs finds the global optimum in ``O(m T^2)``.  A
cross-segment restriction destroys that separability; the restricted
search therefore offers exhaustive enumeration (global, guarded by a
partition-count budget) and cyclic coordinate refinement of one break at a
time (fast, flagged non-global).

Ties between partitions with identical SSR are broken lexicographically on
the break vector, in every search method, so results are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BudgetExceeded,
    InfeasibleConfig,
    SegmentRankDeficient,
)
from .model import Partition, RegressionData, Restriction

METHOD_DP = "dynamic-programming"
METHOD_EXHAUSTIVE = "exhaustive"
METHOD_REFINE = "coordinate-refine"

_METHODS = (METHOD_DP, METHOD_EXHAUSTIVE, METHOD_REFINE)


@dataclass(frozen=True)
class SearchConfig:
    """Options for a break search.

    ``min_seg_frac`` is the minimum segment length as a fraction of T; the
    effective minimum is ``max(floor(min_seg_frac * T), q)`` so that every
    candidate segment has at least as many observations as regressors.
    """

    m: int
    min_seg_frac: float = 0.05
    method: str = METHOD_DP
    max_iters: int = 50
    exhaustive_budget: int = 200_000

    def __post_init__(self):
        if self.m < 0:
            raise InfeasibleConfig(f"break count must be >= 0, got {self.m}")
        if not 0.0 < self.min_seg_frac < 1.0:
            raise InfeasibleConfig("min_seg_frac must be in (0, 1)")
        if self.method not in _METHODS:
            raise InfeasibleConfig(f"unknown method {self.method!r}")
        if self.max_iters < 1:
            raise InfeasibleConfig("max_iters must be >= 1")

    def min_segment_length(self, n_obs: int, n_regressors: int) -> int:
        return max(int(math.floor(self.min_seg_frac * n_obs)), n_regressors)


@dataclass(frozen=True)
class SegmentationResult:
    """Outcome of a break search.

    ``ssr`` is always recomputed from scratch at the returned partition.
    ``is_global`` is True for dynamic programming and exhaustive search,
    False for coordinate refinement.  ``iterations`` counts refinement
    cycles (0 for the global methods).
    """

    partition: Partition
    ssr: float
    method_used: str
    iterations: int = 0
    is_global: bool = True


class SegmentMoments:
    """Prefix sums of (z z', z y, y^2) plus a single-segment SSR table.

    Built once per dataset and shared between the unrestricted and
    restricted searches.  ``segment_gram(s, e)`` and friends return the
    moments of observations ``s..e-1`` (0-based, half-open) by differencing
    the prefix accumulators.
    """

    def __init__(self, data: RegressionData):
        self.data = data
        z, y = data.z, data.y
        t_total, q = data.n_obs, data.n_regressors
        outer = z[:, :, None] * z[:, None, :]
        self._cum_gram = np.concatenate(
            [np.zeros((1, q, q)), np.cumsum(outer, axis=0)]
        )
        self._cum_zy = np.concatenate(
            [np.zeros((1, q)), np.cumsum(z * y[:, None], axis=0)]
        )
        self._cum_yy = np.concatenate([[0.0], np.cumsum(y * y)])
        self.n_obs = t_total
        self.n_regressors = q
        self._tables: dict[int, np.ndarray] = {}

    def segment_gram(self, s: int, e: int) -> np.ndarray:
        return self._cum_gram[e] - self._cum_gram[s]

    def segment_zy(self, s: int, e: int) -> np.ndarray:
        return self._cum_zy[e] - self._cum_zy[s]

    def segment_yy(self, s: int, e: int) -> float:
        return float(self._cum_yy[e] - self._cum_yy[s])

    def ssr_table(self, min_len: int) -> np.ndarray:
        """Table ``tab[i, j]`` = OLS SSR of observations ``i..j`` inclusive.

        Entries for segments shorter than ``min_len`` (or with a singular
        Gram matrix) are ``+inf``.
        """
        min_len = max(int(min_len), 1)
        if min_len in self._tables:
            return self._tables[min_len]
        t_total = self.n_obs
        tab = np.full((t_total, t_total), np.inf)
        for i in range(t_total):
            n_ends = t_total - i - min_len + 1
            if n_ends <= 0:
                continue
            lo = i + min_len  # first end boundary (exclusive) with valid length
            grams = self._cum_gram[lo:] - self._cum_gram[i]
            zys = self._cum_zy[lo:] - self._cum_zy[i]
            yys = self._cum_yy[lo:] - self._cum_yy[i]
            try:
                betas = np.linalg.solve(grams, zys[..., None])[..., 0]
                ssr = yys - np.einsum("nq,nq->n", zys, betas)
            except np.linalg.LinAlgError:
                ssr = np.empty(n_ends)
                for idx in range(n_ends):
                    try:
                        beta = np.linalg.solve(grams[idx], zys[idx])
                        ssr[idx] = yys[idx] - zys[idx] @ beta
                    except np.linalg.LinAlgError:
                        ssr[idx] = np.inf
            tab[i, lo - 1:] = np.maximum(ssr, 0.0)
        self._tables[min_len] = tab
        return tab


def _segment_ols_residuals(data: RegressionData, s: int, e: int) -> np.ndarray:
    """OLS residuals of observations ``s..e-1``; raises on rank deficiency."""
    zseg, yseg = data.z[s:e], data.y[s:e]
    q = data.n_regressors
    beta, _, rank, _ = np.linalg.lstsq(zseg, yseg, rcond=None)
    if rank < q:
        raise SegmentRankDeficient(
            f"segment {s + 1}..{e} has rank {rank} < {q} regressors"
        )
    return yseg - zseg @ beta


def ssr_unrestricted(data: RegressionData, partition: Partition) -> float:
    """Sum over segments of the per-segment OLS residual sum of squares.

    Equals the SSR of the stacked block-diagonal fit, by block diagonality.

    Raises
    ------
    SegmentRankDeficient
        If any segment Gram matrix is singular.
    """
    partition.validate_for(data.n_obs)
    total = 0.0
    for s, e in partition.segments(data.n_obs):
        r = _segment_ols_residuals(data, s, e)
        total += float(r @ r)
    return total


def _restricted_solve(
    stats: SegmentMoments, bounds: tuple[int, ...], restriction: Restriction
) -> tuple[np.ndarray, float]:
    """Equality-constrained LS at the partition given by ``bounds``.

    Solves the KKT system on the stacked normal equations and returns
    ``(delta, ssr)`` with the SSR computed from explicit residuals.
    """
    q = stats.n_regressors
    n_seg = len(bounds) - 1
    n = n_seg * q
    restriction.check_dims(n)
    k = restriction.k
    gram = np.zeros((n, n))
    zy = np.zeros(n)
    for p in range(n_seg):
        s, e = bounds[p], bounds[p + 1]
        gram[p * q:(p + 1) * q, p * q:(p + 1) * q] = stats.segment_gram(s, e)
        zy[p * q:(p + 1) * q] = stats.segment_zy(s, e)
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = gram
    kkt[:n, n:] = restriction.matrix.T
    kkt[n:, :n] = restriction.matrix
    rhs = np.concatenate([zy, restriction.rhs])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise SegmentRankDeficient(
            "constrained normal equations are singular at this partition"
        ) from exc
    delta = sol[:n]
    ssr = 0.0
    y, z = stats.data.y, stats.data.z
    for p in range(n_seg):
        s, e = bounds[p], bounds[p + 1]
        r = y[s:e] - z[s:e] @ delta[p * q:(p + 1) * q]
        ssr += float(r @ r)
    return delta, ssr


def ssr_restricted(
    data: RegressionData, partition: Partition, restriction: Restriction
) -> float:
    """SSR of the least squares fit subject to ``R delta = r``.

    Never below :func:`ssr_unrestricted` at the same partition.

    Raises
    ------
    SegmentRankDeficient
        If the constrained normal equations are singular.
    DimensionMismatch
        If the restriction is not dimensioned for this partition.
    """
    partition.validate_for(data.n_obs)
    stats = SegmentMoments(data)
    _, ssr = _restricted_solve(stats, partition.bounds(data.n_obs), restriction)
    return ssr


def count_partitions(n_obs: int, m: int, min_len: int) -> int:
    """Number of break vectors with all ``m + 1`` segments >= ``min_len``."""
    slack = n_obs - (m + 1) * min_len
    if slack < 0:
        return 0
    return math.comb(slack + m, m)


def _iter_partitions(n_obs: int, m: int, min_len: int):
    """Yield feasible break-boundary tuples in lexicographic order."""
    bounds = [0] * m

    def rec(level: int, lo: int):
        if level == m:
            yield tuple(bounds)
            return
        # leave room for the remaining m - level - 1 breaks plus last segment
        hi = n_obs - (m - level) * min_len
        for b in range(lo + min_len, hi + 1):
            bounds[level] = b
            yield from rec(level + 1, b)

    yield from rec(0, 0)


def _suffix_dp(tab: np.ndarray, m: int, min_len: int) -> tuple[np.ndarray, list[int]]:
    """Suffix Bellman recursion plus lexicographic front-to-back readout.

    ``best[j, c]`` is the minimal SSR of covering observations ``j..T-1``
    with ``c`` breaks.  The readout picks, at each level, the smallest next
    boundary attaining the recorded optimum, which yields the
    lexicographically smallest optimal break vector.
    """
    t_total = tab.shape[0]
    best = np.full((t_total + 1, m + 1), np.inf)
    for j in range(t_total - min_len + 1):
        best[j, 0] = tab[j, t_total - 1]
    for c in range(1, m + 1):
        for j in range(t_total - (c + 1) * min_len + 1):
            lo, hi = j + min_len, t_total - c * min_len
            cand = tab[j, lo - 1:hi] + best[lo:hi + 1, c - 1]
            best[j, c] = cand.min()
    if not np.isfinite(best[0, m]):
        raise SegmentRankDeficient("every feasible partition hit a singular segment")
    breaks: list[int] = []
    j = 0
    for c in range(m, 0, -1):
        lo, hi = j + min_len, t_total - c * min_len
        cand = tab[j, lo - 1:hi] + best[lo:hi + 1, c - 1]
        b = lo + int(np.argmax(cand == best[j, c]))
        breaks.append(b)
        j = b
    return best, breaks


def find_breaks_unrestricted(
    data: RegressionData, config: SearchConfig, stats: SegmentMoments | None = None
) -> SegmentationResult:
    """Globally minimize the unrestricted SSR over feasible partitions.

    Uses dynamic programming by default; ``config.method`` may also select
    exhaustive enumeration (identical result, used as a cross-check).

    Raises
    ------
    InfeasibleConfig
        If ``(m + 1)`` segments of the minimum length do not fit in ``T``.
    """
    if config.method == METHOD_REFINE:
        raise InfeasibleConfig("coordinate refinement applies to restricted search only")
    stats = stats if stats is not None else SegmentMoments(data)
    t_total, q = data.n_obs, data.n_regressors
    min_len = config.min_segment_length(t_total, q)
    m = config.m
    if (m + 1) * min_len > t_total:
        raise InfeasibleConfig(
            f"{m + 1} segments of length >= {min_len} do not fit in T = {t_total}"
        )
    tab = stats.ssr_table(min_len)
    if config.method == METHOD_EXHAUSTIVE:
        breaks = _exhaustive_min(
            tab, t_total, m, min_len, lambda bounds: _fold_total(tab, bounds, t_total)
        )
    else:
        _, breaks = _suffix_dp(tab, m, min_len)
    partition = Partition(tuple(breaks))
    return SegmentationResult(
        partition=partition,
        ssr=ssr_unrestricted(data, partition),
        method_used=config.method,
    )


def _fold_total(tab: np.ndarray, bounds: tuple[int, ...], t_total: int) -> float:
    """Right-associated SSR total, matching the suffix recursion's rounding."""
    full = (0, *bounds, t_total)
    total = 0.0
    for p in range(len(full) - 2, -1, -1):
        total = tab[full[p], full[p + 1] - 1] + total
    return total


def _exhaustive_min(tab, t_total, m, min_len, objective) -> list[int]:
    best_val = np.inf
    best_bounds: tuple[int, ...] | None = None
    for bounds in _iter_partitions(t_total, m, min_len):
        val = objective(bounds)
        if val < best_val:
            best_val = val
            best_bounds = bounds
    if best_bounds is None or not np.isfinite(best_val):
        raise SegmentRankDeficient("every feasible partition hit a singular segment")
    return list(best_bounds)


def find_breaks_restricted(
    data: RegressionData,
    restriction: Restriction,
    config: SearchConfig,
    stats: SegmentMoments | None = None,
) -> SegmentationResult:
    """Minimize the restricted SSR over feasible partitions.

    ``method="exhaustive"`` enumerates every feasible partition (global;
    raises ``BudgetExceeded`` when the partition count tops
    ``config.exhaustive_budget``).  ``method="coordinate-refine"`` runs
    cyclic coordinate descent: one break is re-optimized over its feasible
    range holding the others fixed (each evaluation an exact restricted
    SSR), moving only on strict improvement, until a full cycle makes no
    move or ``max_iters`` cycles.  Descent starts from the unrestricted
    optimum and, for two or more breaks, also from the best few
    coarse-lattice partitions; the best refined end point is returned with
    ``iterations`` counting cycles over all starts.  The refined result is
    exact at the returned partition but not certified global.
    """
    stats = stats if stats is not None else SegmentMoments(data)
    t_total, q = data.n_obs, data.n_regressors
    min_len = config.min_segment_length(t_total, q)
    m = config.m
    if (m + 1) * min_len > t_total:
        raise InfeasibleConfig(
            f"{m + 1} segments of length >= {min_len} do not fit in T = {t_total}"
        )
    restriction.check_dims((m + 1) * q)

    def restricted_ssr(bounds: tuple[int, ...]) -> float:
        try:
            return _restricted_solve(stats, (0, *bounds, t_total), restriction)[1]
        except SegmentRankDeficient:
            return np.inf

    if config.method == METHOD_EXHAUSTIVE:
        n_part = count_partitions(t_total, m, min_len)
        if n_part > config.exhaustive_budget:
            raise BudgetExceeded(n_part, config.exhaustive_budget)
        best_val = np.inf
        best_bounds: tuple[int, ...] | None = None
        for bounds in _iter_partitions(t_total, m, min_len):
            val = restricted_ssr(bounds)
            if val < best_val:
                best_val = val
                best_bounds = bounds
        if best_bounds is None or not np.isfinite(best_val):
            raise SegmentRankDeficient("no feasible partition is estimable")
        partition = Partition(best_bounds)
        return SegmentationResult(
            partition=partition,
            ssr=ssr_restricted(data, partition, restriction),
            method_used=METHOD_EXHAUSTIVE,
        )

    if config.method != METHOD_REFINE:
        raise InfeasibleConfig(
            "restricted search method must be 'exhaustive' or 'coordinate-refine'"
        )

    def refine_from(start: tuple[int, ...]) -> tuple[tuple[int, ...], float, int]:
        bounds = list(start)
        current = restricted_ssr(tuple(bounds))
        cycles = 0
        for cycles in range(1, config.max_iters + 1):
            moved = False
            for p in range(m):
                lo = (bounds[p - 1] if p > 0 else 0) + min_len
                hi = (bounds[p + 1] if p + 1 < m else t_total) - min_len
                best_val, best_b = current, bounds[p]
                for b in range(lo, hi + 1):
                    if b == bounds[p]:
                        continue
                    trial = bounds.copy()
                    trial[p] = b
                    val = restricted_ssr(tuple(trial))
                    if val < best_val:
                        best_val, best_b = val, b
                if best_b != bounds[p]:
                    bounds[p] = best_b
                    current = best_val
                    moved = True
            if not moved:
                break
        return tuple(bounds), current, cycles

    init = find_breaks_unrestricted(
        data, SearchConfig(m=m, min_seg_frac=config.min_seg_frac), stats=stats
    )
    if not np.isfinite(restricted_ssr(init.partition.breaks)):
        raise SegmentRankDeficient("restricted fit singular at the initial partition")
    starts = [init.partition.breaks]
    # Single-coordinate moves cannot cross SSR valleys when several breaks
    # must shift together, so for m >= 2 a few coarse-lattice starts are
    # refined as well (the best end point wins; result stays non-global).
    if m >= 2:
        starts.extend(_coarse_starts(t_total, m, min_len, restricted_ssr, init.partition.breaks))
    best_bounds: tuple[int, ...] | None = None
    best_val = np.inf
    total_cycles = 0
    for start in starts:
        bounds, val, cycles = refine_from(start)
        total_cycles += cycles
        if np.isfinite(val) and (val < best_val or (val == best_val and bounds < best_bounds)):
            best_bounds, best_val = bounds, val
    if best_bounds is None:
        raise SegmentRankDeficient("no refinement start produced an estimable fit")
    partition = Partition(best_bounds)
    return SegmentationResult(
        partition=partition,
        ssr=ssr_restricted(data, partition, restriction),
        method_used=METHOD_REFINE,
        iterations=total_cycles,
        is_global=False,
    )


def _coarse_starts(t_total, m, min_len, objective, skip, n_starts=4, n_lattice=8):
    """Best few partitions on a coarse break lattice, as refinement seeds."""
    from itertools import combinations

    stride = max(min_len, t_total // n_lattice)
    lattice = list(range(stride, t_total - min_len + 1, stride))
    scored = []
    for combo in combinations(lattice, m):
        if combo == skip:
            continue
        prev = 0
        feasible = True
        for b in combo:
            if b - prev < min_len:
                feasible = False
                break
            prev = b
        if not feasible or t_total - combo[-1] < min_len:
            continue
        scored.append((objective(combo), combo))
    scored.sort()
    return [combo for _, combo in scored[:n_starts]]
