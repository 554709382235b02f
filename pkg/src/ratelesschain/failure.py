"""Decoding-failure estimation and group sizing.

The failure probability of a group under churn has no usable closed form
here, so it is estimated end to end: each Monte Carlo trial builds the coded
population of one group, churns it for the horizon with maintenance joins in
force, then probes whether a full group decode from every surviving block
still succeeds.  Decodability of an erasure code is purely structural, so
trials track neighbor sets only and never touch payloads.

Estimates are collected into a table over (N, k) cells, cleaned to be
monotone, and fitted per N with a straight line in (k, log10 f) over the
smallest simulated decade; lookups below the simulated range use that line,
which is how targets such as 1e-12 stay reachable from simulations that
bottom out near 1e-4.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import group_length
from .degree import DegreeDistribution, encoding_distribution
from .fastpeel import peel_count
from .network import EPS_SCHEDULE, ChurnModel

_UPPER_SLACK = 1.0 + 1e-12


class SizingInfeasibleError(RuntimeError):
    """No group size satisfies the failure target on the covered table."""


@dataclass(frozen=True)
class SizingPolicy:
    """Failure target and the epochs a group must survive before re-check."""

    zeta: float
    gamma: float
    alpha: int
    beta: int

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ValueError("target failure probability must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.alpha < 1 or self.beta < 1:
            raise ValueError("alpha and beta must be positive")

    @property
    def horizon(self) -> float:
        # confirmation adds alpha/beta epochs between mining and encoding
        return self.gamma + self.alpha / self.beta


@dataclass(frozen=True)
class FailureEstimate:
    trials: int
    failures: int
    estimate: float
    ci_halfwidth: float
    repairs: int
    fallbacks: int


def _ci_halfwidth(failures: int, trials: int) -> float:
    if trials <= 0:
        return 1.0
    if failures == 0:
        return 3.0 / trials  # 95% rule-of-three upper bound
    p = failures / trials
    return 1.96 * math.sqrt(p * (1.0 - p) / trials)


def _draw_parity_blocks(count: int, omega: DegreeDistribution,
                        rng: np.random.Generator) -> list:
    """Batch-draw `count` sorted neighbor arrays from omega (distinct indices)."""
    if count <= 0:
        return []
    n = omega.support
    degrees = omega.sample_many(rng, count)
    flat = rng.integers(0, n, size=int(degrees.sum()))
    out = []
    pos = 0
    for d in degrees.tolist():
        view = flat[pos : pos + d]
        pos += d
        nbrs = np.unique(view)
        if nbrs.size < d:  # birthday collision: redraw this block exactly
            nbrs = np.sort(rng.choice(n, size=d, replace=False))
        out.append(nbrs.astype(np.int32))
    return out


def _decode_failure_trial(
    k: int,
    n: int,
    omega: DegreeDistribution,
    n_nodes: int,
    lam_leave: float,
    lam_join: float,
    horizon: float,
    rng: np.random.Generator,
    eps_schedule=EPS_SCHEDULE,
):
    """One churned-group trial.  Returns (failed, repairs, fallbacks)."""
    blocks: dict[int, np.ndarray] = {}
    claimed_by: dict[int, int] = {}
    claimed = np.zeros(n, dtype=bool)
    dyn_edges: dict[int, list] = {}  # join-created blocks, by index
    alive: list[int] = []
    alive_pos: dict[int, int] = {}

    def activate(nid: int) -> None:
        alive_pos[nid] = len(alive)
        alive.append(nid)

    def deactivate(nid: int) -> None:
        pos = alive_pos.pop(nid)
        last = alive.pop()
        if last != nid:
            alive[pos] = last
            alive_pos[last] = pos
        blk = blocks.get(nid)
        if blk is not None and blk.size == 1:
            i = int(blk[0])
            if claimed_by.get(i) == nid:
                del claimed_by[i]
                claimed[i] = False

    n_sys = min(n, n_nodes)
    claimed[:n_sys] = True
    for i in range(n_sys):
        blocks[i] = np.array([i], dtype=np.int32)
        claimed_by[i] = i
        activate(i)
    parity = _draw_parity_blocks(n_nodes - n_sys, omega, rng)
    for offset, nbrs in enumerate(parity):
        nid = n_sys + offset
        blocks[nid] = nbrs
        activate(nid)
    next_id = n_nodes
    # static edge index over the initial parity blocks, in CSR form
    if parity:
        static_nodes = np.repeat(
            np.arange(n_sys, n_nodes, dtype=np.int64),
            np.array([a.size for a in parity]),
        )
        static_flat = np.concatenate(parity)
        order = np.argsort(static_flat, kind="stable")
        static_idx = static_flat[order]
        static_node = static_nodes[order]
    else:
        static_idx = np.empty(0, dtype=np.int32)
        static_node = np.empty(0, dtype=np.int64)

    def edge_holders(i: int):
        lo = int(np.searchsorted(static_idx, i, side="left"))
        hi = int(np.searchsorted(static_idx, i, side="right"))
        if lo != hi:
            yield from static_node[lo:hi].tolist()
        lst = dyn_edges.get(i)
        if lst:
            yield from lst

    repairs = 0
    fallbacks = 0

    def join() -> None:
        nonlocal next_id, repairs, fallbacks
        nid = next_id
        next_id += 1
        activate(nid)
        d = omega.sample(rng)
        nbrs = np.sort(rng.choice(n, size=d, replace=False)).astype(np.int32)
        miss = nbrs[~claimed[nbrs]]
        if miss.size == 0:
            blocks[nid] = nbrs
            for i in nbrs.tolist():
                dyn_edges.setdefault(i, []).append(nid)
            return
        # repair with set expansion; candidate order is insertion order
        cand_list = miss.tolist()
        want = set(cand_list)
        repaired = -1
        while cand_list:
            pos = int(rng.integers(len(cand_list)))
            i = cand_list[pos]
            cand_list[pos] = cand_list[-1]
            cand_list.pop()
            found = False
            grown: list[np.ndarray] = []
            for x in edge_holders(i):
                if x not in alive_pos:
                    continue
                blk = blocks[x]
                m = blk[~claimed[blk]]
                if m.size == 1:  # the only missing neighbor is i itself
                    found = True
                    break
                grown.append(m)
            if found:
                repaired = i
                break
            for m in grown:
                for o in m.tolist():
                    if o not in want:
                        want.add(o)
                        cand_list.append(o)
        if repaired >= 0:
            repairs += 1
            blocks[nid] = np.array([repaired], dtype=np.int32)
            claimed_by[repaired] = nid
            claimed[repaired] = True
            return
        # every candidate was a dead end: whole-group decode fallback
        fallbacks += 1
        holders = [x for x in alive if x in blocks]
        if len(holders) < k:
            return
        # escalation grows one collection, so only the largest take decides
        take = min(math.ceil((1 + eps_schedule[-1]) * k), len(holders))
        picked = rng.choice(len(holders), size=take, replace=False)
        subset = [blocks[holders[j]] for j in sorted(picked.tolist())]
        if peel_count(subset, n, stop_after=k) >= k:
            targets = sorted(want)
            target = targets[int(rng.integers(len(targets)))]
            blocks[nid] = np.array([target], dtype=np.int32)
            claimed_by[target] = nid
            claimed[target] = True

    steps = int(horizon)
    fractions = [1.0] * steps
    if horizon - steps > 1e-12:
        fractions.append(horizon - steps)
    for scale in fractions:
        leaves = int(rng.poisson(lam_leave * scale))
        joins = int(rng.poisson(lam_join * scale))
        if leaves >= len(alive):
            for nid in list(alive):
                deactivate(nid)
        elif leaves > 0:
            positions = rng.choice(len(alive), size=leaves, replace=False)
            ids = [alive[j] for j in sorted(positions.tolist())]
            for nid in ids:
                deactivate(nid)
        if alive:
            for _ in range(joins):
                join()

    holders = [blocks[x] for x in alive if x in blocks]
    if len(holders) < k:
        return True, repairs, fallbacks
    if len(claimed_by) >= k:
        return False, repairs, fallbacks
    failed = peel_count(holders, n, stop_after=k) < k
    return failed, repairs, fallbacks


def _trial_rng(seed: int, n_nodes: int, k: int, trial: int) -> np.random.Generator:
    # private stream per (master seed, cell, trial); mergeable across workers
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(n_nodes, k, trial))
    )


def estimate_failure(
    k: int,
    n_nodes: int,
    churn: ChurnModel,
    horizon: float,
    trials: int,
    seed: int,
    *,
    precode_rate: float = 0.8,
    c: float = 0.1,
    delta: float = 0.5,
    omega: DegreeDistribution | None = None,
    max_failures: int | None = None,
) -> FailureEstimate:
    """Monte Carlo estimate of the group decode-failure probability.

    `max_failures` allows the table builder to stop a clearly-failing cell
    early; the estimate then uses the trials actually run.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if k < 1:
        raise ValueError("group size must be positive")
    if k > n_nodes:
        raise ValueError(f"group size {k} exceeds node count {n_nodes}")
    n = group_length(k, precode_rate)
    if omega is None:
        omega = encoding_distribution(n, c, delta)
    elif omega.support != n:
        raise ValueError("supplied distribution support must equal n")
    failures = 0
    repairs = 0
    fallbacks = 0
    ran = 0
    for t in range(trials):
        rng = _trial_rng(seed, n_nodes, k, t)
        failed, r, f = _decode_failure_trial(
            k, n, omega, n_nodes, churn.lambda_leave, churn.lambda_join, horizon, rng
        )
        ran += 1
        repairs += r
        fallbacks += f
        if failed:
            failures += 1
            if max_failures is not None and failures >= max_failures:
                break
    return FailureEstimate(
        trials=ran,
        failures=failures,
        estimate=failures / ran,
        ci_halfwidth=_ci_halfwidth(failures, ran),
        repairs=repairs,
        fallbacks=fallbacks,
    )


# table ---------------------------------------------------------------------


@dataclass
class TableCell:
    n_nodes: int
    k: int
    trials: int
    failures: int
    estimate: float
    ci_halfwidth: float
    cleaned: float = 0.0

    @property
    def upper(self) -> float:
        return self.estimate + self.ci_halfwidth


@dataclass(frozen=True)
class FitLine:
    """log10(f) ~ slope * k + intercept, fitted on the last simulated decade."""

    slope: float
    intercept: float
    points: int

    def value(self, k: float) -> float:
        return 10.0 ** (self.slope * k + self.intercept)

    def k_at(self, zeta: float) -> float:
        return (math.log10(zeta) - self.intercept) / self.slope


class FailureTable:
    """Empirical f(k, N) samples plus per-N extrapolation lines."""

    def __init__(self):
        self.cells: dict[tuple, TableCell] = {}
        self.fits: dict[int, FitLine] = {}
        self._finalized = False

    def add_cell(self, cell: TableCell) -> None:
        self.cells[(cell.n_nodes, cell.k)] = cell
        self._finalized = False

    def covered_ns(self) -> list:
        return sorted({key[0] for key in self.cells})

    def cells_for(self, n_nodes: int) -> list:
        return sorted(
            (c for c in self.cells.values() if c.n_nodes == n_nodes),
            key=lambda c: c.k,
        )

    def row_for(self, n_now: int):
        """Largest covered node count at or below n_now (conservative)."""
        below = [n for n in self.covered_ns() if n <= n_now]
        return below[-1] if below else None

    # cleanup and fitting -------------------------------------------------

    def finalize(self) -> "FailureTable":
        for cell in self.cells.values():
            cell.cleaned = cell.estimate
        changed = True
        passes = 0
        while changed and passes < 16:
            changed = False
            passes += 1
            # f never decreases as k grows at fixed N
            for n_nodes in self.covered_ns():
                running = 0.0
                for cell in self.cells_for(n_nodes):
                    running = max(running, cell.cleaned)
                    if cell.cleaned != running:
                        cell.cleaned = running
                        changed = True
            # f never increases as N grows at fixed k (aligned cells only)
            by_k: dict[int, list] = {}
            for cell in self.cells.values():
                by_k.setdefault(cell.k, []).append(cell)
            for cells in by_k.values():
                cells.sort(key=lambda c: -c.n_nodes)
                running = 0.0
                for cell in cells:
                    running = max(running, cell.cleaned)
                    if cell.cleaned != running:
                        cell.cleaned = running
                        changed = True
        self.fits = {}
        for n_nodes in self.covered_ns():
            fit = self._fit_row(n_nodes)
            if fit is not None:
                self.fits[n_nodes] = fit
        self._finalized = True
        return self

    def _usable_cells(self, n_nodes: int) -> list:
        """Rare-event noise must not steer the fit: walking k downward, a
        cell is usable only while the upper confidence bounds stay monotone."""
        usable = []
        min_upper = math.inf
        for cell in reversed(self.cells_for(n_nodes)):
            if cell.upper <= min_upper * _UPPER_SLACK:
                usable.append(cell)
                min_upper = min(min_upper, cell.upper)
        usable.reverse()
        return usable

    def _fit_row(self, n_nodes: int):
        positive = [c for c in self._usable_cells(n_nodes) if c.cleaned > 0.0]
        if len(positive) < 2:
            return None
        fmin = min(c.cleaned for c in positive)
        window = [c for c in positive if c.cleaned <= 10.0 * fmin]
        if len(window) < 2:
            window = sorted(positive, key=lambda c: c.cleaned)[:3]
        ks = np.array([c.k for c in window], dtype=float)
        logs = np.log10([c.cleaned for c in window])
        if np.unique(ks).size < 2:
            return None
        slope, intercept = np.polyfit(ks, logs, 1)
        if slope <= 1e-12:
            return None
        return FitLine(float(slope), float(intercept), len(window))

    # lookup ---------------------------------------------------------------

    def _require_final(self) -> None:
        if not self._finalized:
            self.finalize()

    def lookup(self, k: int, n_nodes: int) -> float:
        """Cleaned estimate at (k, row N): interpolated inside the simulated
        range, extrapolated by the fitted line below it."""
        self._require_final()
        cells = self.cells_for(n_nodes)
        if not cells:
            raise KeyError(f"no cells for node count {n_nodes}")
        positive = [c for c in cells if c.cleaned > 0.0]
        if not positive:
            raise ValueError(
                f"row {n_nodes} has no positive estimates to interpolate from"
            )
        if k >= positive[-1].k:
            return positive[-1].cleaned
        if k < positive[0].k:
            fit = self.fits.get(n_nodes)
            if fit is None:
                raise ValueError(
                    f"row {n_nodes} has no usable fit for extrapolation"
                )
            return min(fit.value(k), positive[0].cleaned)
        lo = max(c for c in positive if c.k <= k)
        hi = min(c for c in positive if c.k > k)
        if lo.cleaned <= 0.0:
            return lo.cleaned
        t = (k - lo.k) / (hi.k - lo.k)
        return 10.0 ** (
            (1.0 - t) * math.log10(lo.cleaned) + t * math.log10(hi.cleaned)
        )

    def k_at(self, zeta: float, n_nodes: int) -> int:
        """Largest k with f(k) <= zeta on this row; ties go to the larger k."""
        self._require_final()
        cells = self.cells_for(n_nodes)
        if not cells:
            raise SizingInfeasibleError(f"no cells for node count {n_nodes}")
        positive = [c for c in cells if c.cleaned > 0.0]
        if not positive:
            raise SizingInfeasibleError(
                f"row {n_nodes} never observed a failure; refusing to "
                f"extrapolate from nothing"
            )
        if zeta >= positive[-1].cleaned and positive[-1].k == cells[-1].k:
            return cells[-1].k
        if zeta >= positive[-1].cleaned:
            return cells[-1].k
        fmin = positive[0].cleaned
        if zeta < fmin:
            fit = self.fits.get(n_nodes)
            if fit is None:
                raise SizingInfeasibleError(
                    f"row {n_nodes} has no usable extrapolation fit"
                )
            k = math.floor(fit.k_at(zeta))
            k = min(k, positive[0].k)
            if k < 1:
                raise SizingInfeasibleError(
                    f"no group size satisfies target {zeta} at row {n_nodes}"
                )
            return k
        lo = max((c for c in positive if c.cleaned <= zeta), key=lambda c: c.k)
        hi = min((c for c in positive if c.cleaned > zeta), key=lambda c: c.k)
        if hi.k <= lo.k:
            return lo.k
        span = math.log10(hi.cleaned) - math.log10(lo.cleaned)
        t = (math.log10(zeta) - math.log10(lo.cleaned)) / span
        return math.floor(lo.k + t * (hi.k - lo.k))

    # persistence -----------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("N", "k", "trials", "failures", "estimate", "ci_halfwidth"))
            for key in sorted(self.cells):
                c = self.cells[key]
                w.writerow(
                    (
                        c.n_nodes,
                        c.k,
                        c.trials,
                        c.failures,
                        format(c.estimate, ".12g"),
                        format(c.ci_halfwidth, ".12g"),
                    )
                )

    def save_fits(self, path) -> None:
        self._require_final()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("N", "slope", "intercept", "points"))
            for n_nodes in sorted(self.fits):
                fit = self.fits[n_nodes]
                w.writerow(
                    (
                        n_nodes,
                        format(fit.slope, ".12g"),
                        format(fit.intercept, ".12g"),
                        fit.points,
                    )
                )

    @classmethod
    def load(cls, path) -> "FailureTable":
        table = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != ("N", "k", "trials", "failures", "estimate", "ci_halfwidth"):
                raise ValueError(f"unexpected failure table header: {header}")
            for row in reader:
                table.add_cell(
                    TableCell(
                        n_nodes=int(row[0]),
                        k=int(row[1]),
                        trials=int(row[2]),
                        failures=int(row[3]),
                        estimate=float(row[4]),
                        ci_halfwidth=float(row[5]),
                    )
                )
        table.finalize()
        return table


def _build_cell(args) -> TableCell:
    (n_nodes, k, churn, horizon, trials, seed, precode_rate, c, delta, max_failures) = args
    est = estimate_failure(
        k,
        n_nodes,
        churn,
        horizon,
        trials,
        seed,
        precode_rate=precode_rate,
        c=c,
        delta=delta,
        max_failures=max_failures,
    )
    return TableCell(
        n_nodes=n_nodes,
        k=k,
        trials=est.trials,
        failures=est.failures,
        estimate=est.estimate,
        ci_halfwidth=est.ci_halfwidth,
    )


def build_failure_table(
    n_grid,
    k_ratios,
    churn: ChurnModel,
    horizon: float,
    trials_per_cell: int,
    seed: int,
    *,
    precode_rate: float = 0.8,
    c: float = 0.1,
    delta: float = 0.5,
    max_failures: int = 50,
    threads: int = 1,
) -> FailureTable:
    """Fill the (N, k) grid; k cells are ratios of each N.

    Cells stop early once `max_failures` failures are seen, which bounds the
    work spent on clearly infeasible sizes.
    """
    n_grid = sorted(set(int(n) for n in n_grid))
    ratios = sorted(set(float(r) for r in k_ratios))
    if not n_grid or not ratios:
        raise ValueError("both node-count and size-ratio grids must be non-empty")
    if any(n < 1 for n in n_grid):
        raise ValueError("node counts must be positive")
    if any(not 0 < r <= 1 for r in ratios):
        raise ValueError("size ratios must lie in (0, 1]")
    jobs = []
    for n_nodes in n_grid:
        ks = sorted({min(max(1, round(r * n_nodes)), n_nodes) for r in ratios})
        for k in ks:
            jobs.append(
                (
                    n_nodes,
                    k,
                    churn,
                    horizon,
                    trials_per_cell,
                    seed,
                    precode_rate,
                    c,
                    delta,
                    max_failures,
                )
            )
    table = FailureTable()
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for cell in pool.map(_build_cell, jobs):
                table.add_cell(cell)
    else:
        for job in jobs:
            table.add_cell(_build_cell(job))
    table.finalize()
    return table


def choose_group_size(n_now: int, table: FailureTable, policy: SizingPolicy) -> int:
    """Eq.-style table lookup: the largest k whose predicted failure over the
    policy horizon stays within the target, read from the closest covered
    row at or below the current node count."""
    row = table.row_for(n_now)
    if row is None:
        raise SizingInfeasibleError(
            f"failure table covers no node count at or below {n_now}"
        )
    return table.k_at(policy.zeta, row)


def min_survivors_experiment(
    k: int,
    n_nodes: int,
    precode_rate: float,
    trials: int,
    seed: int,
    *,
    c: float = 0.1,
    delta: float = 0.5,
) -> np.ndarray:
    """Per-trial minimum survivor count that still decodes the group.

    Build the full coded population, remove nodes in a random order, and
    bisect for the deepest removal that still decodes.  precode_rate=1.0 is
    the plain-LT configuration (no parity intermediates, every intermediate
    must peel); smaller rates add the MDS slack.
    """
    n = group_length(k, precode_rate)
    if n > n_nodes:
        raise ValueError("population must cover all intermediates")
    omega = encoding_distribution(n, c, delta)
    out = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(0x51E9, n_nodes, k, t))
        )
        blocks = [np.array([i], dtype=np.int32) for i in range(n)]
        blocks.extend(_draw_parity_blocks(n_nodes - n, omega, rng))
        order = rng.permutation(n_nodes)

        def survives(removed: int) -> bool:
            subset = [blocks[j] for j in order[removed:]]
            return peel_count(subset, n, stop_after=k) >= k

        lo, hi = 0, n_nodes - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if survives(mid):
                lo = mid
            else:
                hi = mid - 1
        out[t] = n_nodes - lo
    return out
