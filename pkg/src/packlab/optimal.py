"""Optimal baselines: exact optimum for small instances, bounds, and the
configuration LP whose objective is the asymptotic fractional optimum
rate (bins per item) for a discrete size distribution.

All arithmetic is exact.  The LP is solved by a two-phase primal simplex
over rationals with Bland's rule, so reported objectives carry no
floating tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from math import ceil, lcm
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    CapExceededError,
    Category,
    CoverageError,
    DiscreteDistribution,
    Instance,
    InvariantError,
    ParseError,
    as_size,
    classify,
    parse_size,
)

# A configuration is a multiset of item sizes, stored as sorted
# (size, multiplicity) pairs so it hashes and compares deterministically.
Configuration = tuple[tuple[Fraction, int], ...]


def make_configuration(counts: dict[Fraction, int]) -> Configuration:
    items = tuple(sorted((as_size(s), int(k)) for s, k in counts.items() if k))
    if not items:
        raise InvariantError("a configuration holds at least one item")
    if any(k <= 0 for _, k in items):
        raise InvariantError("configuration multiplicities must be positive")
    if configuration_volume(items) > 1:
        raise InvariantError(f"configuration {items} exceeds capacity 1")
    return items


def configuration_volume(config: Configuration) -> Fraction:
    return sum((s * k for s, k in config), Fraction(0))


def configuration_count(config: Configuration, size: Fraction) -> int:
    for s, k in config:
        if s == size:
            return k
    return 0


def enumerate_configurations(
    support: Sequence[Fraction], cap: int = 10**6
) -> list[Configuration]:
    """All maximal feasible multisets over ``support``, exhaustively.

    Maximal means no support size fits in the remaining slack.  Every
    feasible configuration is dominated by a maximal one, so these
    suffice for the LP.  Deterministic order (lexicographic in counts
    over ascending sizes).
    """
    sizes = sorted(set(as_size(s) for s in support))
    if not sizes:
        raise InvariantError("empty support")
    smallest = sizes[0]
    out: list[Configuration] = []

    def emit_check(counts: list[int], slack: Fraction) -> None:
        if slack < smallest and any(counts):
            out.append(
                tuple((sizes[i], counts[i]) for i in range(len(sizes)) if counts[i])
            )
            if len(out) > cap:
                raise CapExceededError(f"more than {cap} configurations")

    def rec(i: int, counts: list[int], slack: Fraction) -> None:
        if i == len(sizes):
            emit_check(counts, slack)
            return
        max_k = int(slack / sizes[i])
        for k in range(max_k, -1, -1):
            counts[i] = k
            rec(i + 1, counts, slack - k * sizes[i])
        counts[i] = 0

    rec(0, [0] * len(sizes), Fraction(1))
    return out


@dataclass(frozen=True)
class LpSolution:
    """Exact optimum of the coverage LP: min total rate of configurations
    such that each item type i receives at least prob_i per item."""

    rates: dict[Configuration, Fraction]
    objective: Fraction


def _simplex_min(
    columns: list[list[Fraction]], rhs: list[Fraction], costs: list[Fraction]
) -> tuple[Fraction, list[Fraction]]:
    """Solve min c.x s.t. A x >= b, x >= 0 (b >= 0) exactly.

    Two-phase tableau simplex with Bland's rule.  ``columns`` holds A by
    column.  Returns (objective, x).  Raises InvariantError if phase 1
    cannot reach feasibility (cannot happen for coverage systems whose
    every row has a positive entry).
    """
    m = len(rhs)
    n = len(columns)
    zero = Fraction(0)
    one = Fraction(1)
    # Variables: n structural, m surplus, m artificial.
    total = n + m + m
    tableau = [[zero] * (total + 1) for _ in range(m)]
    for j, col in enumerate(columns):
        for i in range(m):
            tableau[i][j] = col[i]
    for i in range(m):
        tableau[i][n + i] = -one  # surplus
        tableau[i][n + m + i] = one  # artificial
        tableau[i][total] = rhs[i]
    basis = [n + m + i for i in range(m)]

    def pivot(row: int, col: int) -> None:
        piv = tableau[row][col]
        tableau[row] = [v / piv for v in tableau[row]]
        for r in range(m):
            if r != row and tableau[r][col] != 0:
                f = tableau[r][col]
                tableau[r] = [a - f * b for a, b in zip(tableau[r], tableau[row])]
        basis[row] = col

    def run_phase(cost: list[Fraction], allowed: int) -> None:
        while True:
            # Reduced costs via basis cost row; Bland picks the smallest
            # eligible entering index.
            y = [cost[basis[i]] for i in range(m)]
            entering = -1
            for j in range(allowed):
                if j in basis:
                    continue
                red = cost[j] - sum(y[i] * tableau[i][j] for i in range(m))
                if red < 0:
                    entering = j
                    break
            if entering < 0:
                return
            leaving = -1
            best = None
            for i in range(m):
                a = tableau[i][entering]
                if a > 0:
                    ratio = tableau[i][total] / a
                    if best is None or ratio < best or (
                        ratio == best and basis[i] < basis[leaving]
                    ):
                        best = ratio
                        leaving = i
            if leaving < 0:
                raise InvariantError("unbounded coverage LP")
            pivot(leaving, entering)

    phase1 = [zero] * (n + m) + [one] * m + [zero]
    run_phase(phase1, total)
    infeas = sum(tableau[i][total] for i in range(m) if basis[i] >= n + m)
    if infeas != 0:
        raise InvariantError("coverage LP infeasible")
    # Drive leftover artificials out of the basis where possible.
    for i in range(m):
        if basis[i] >= n + m:
            for j in range(n + m):
                if tableau[i][j] != 0:
                    pivot(i, j)
                    break

    phase2 = list(costs) + [zero] * (m + m) + [zero]
    run_phase(phase2, n + m)

    x = [zero] * n
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = tableau[i][total]
    objective = sum((costs[j] * x[j] for j in range(n)), zero)
    return objective, x


def configuration_lp(
    dist: DiscreteDistribution, enumeration_cap: int = 10**6
) -> LpSolution:
    """Minimum bins-per-item rate that fractionally covers ``dist``.

    Zero-probability item types would be dropped; the distribution type
    already forbids them, so every support size is covered exactly.
    """
    configs = enumerate_configurations(dist.sizes, cap=enumeration_cap)
    sizes = list(dist.sizes)
    columns = [
        [Fraction(configuration_count(c, s)) for s in sizes] for c in configs
    ]
    costs = [Fraction(1)] * len(configs)
    objective, x = _simplex_min(columns, list(dist.probs), costs)
    rates = {c: v for c, v in zip(configs, x) if v != 0}
    return LpSolution(rates=rates, objective=objective)


def verify_recipe(
    dist: DiscreteDistribution, recipe: Sequence[tuple[Configuration, Fraction]]
) -> Fraction:
    """Check a packing recipe covers the distribution; return its rate.

    Coverage is exact: for every item type, sum over recipe entries of
    rate times multiplicity must be at least the type's probability.
    """
    for config, rate in recipe:
        make_configuration(dict(config))  # re-validates feasibility
        if rate < 0:
            raise InvariantError("recipe rates must be nonnegative")
    for s, p in dist.items():
        covered = sum((rate * configuration_count(c, s) for c, rate in recipe), Fraction(0))
        if covered < p:
            raise CoverageError(
                f"item type {s} covered at rate {covered} < required {p}"
            )
    return sum((rate for _, rate in recipe), Fraction(0))


def load_recipe(path: str | Path) -> list[tuple[Configuration, Fraction]]:
    """Read a recipe file: {"bins": [{"counts": {"<size>": k}, "rate": "r"}]}."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "bins" not in doc:
        raise ParseError(f"{path}: expected an object with a 'bins' list")
    recipe = []
    for entry in doc["bins"]:
        counts = {parse_size(s): int(k) for s, k in entry["counts"].items()}
        rate = Fraction(str(entry["rate"]))
        recipe.append((make_configuration(counts), rate))
    return recipe


def _scaled_ints(sizes: Sequence[Fraction]) -> tuple[list[int], int]:
    """Common-denominator integer view of sizes; capacity becomes D."""
    denom = lcm(*(s.denominator for s in sizes)) if sizes else 1
    return [int(s * denom) for s in sizes], denom


def ffd_count(sizes: Sequence[Fraction]) -> int:
    """First-fit-decreasing bin count; a cheap valid upper bound on Opt.

    Uses a segment tree over bin free space so 10^4-item prefixes are
    fine; arithmetic is integer after common-denominator scaling.
    """
    if not sizes:
        return 0
    ints, cap = _scaled_ints(list(sizes))
    ints.sort(reverse=True)
    n = len(ints)
    # seg[i] = max free capacity in subtree; leaves are potential bins.
    size = 1
    while size < n:
        size *= 2
    free = [0] * (2 * size)

    def update(leaf: int, value: int) -> None:
        i = leaf + size
        free[i] = value
        i //= 2
        while i:
            free[i] = max(free[2 * i], free[2 * i + 1])
            i //= 2

    used = 0
    for s in ints:
        if free[1] < s and used < n:
            update(used, cap)
            used += 1
        # descend to leftmost leaf with free >= s
        i = 1
        while i < size:
            i = 2 * i if free[2 * i] >= s else 2 * i + 1
        update(i - size, free[i] - s)
    return used


def opt_lower_bound(sizes: Sequence[Fraction]) -> int:
    """max(ceil(total volume), number of large items); never above Opt."""
    items = [as_size(s) for s in sizes]
    if not items:
        return 0
    vol = sum(items, Fraction(0))
    large = sum(1 for s in items if s > Fraction(1, 2))
    return max(ceil(vol), large)


def opt_exact(
    instance: Instance | Sequence[Fraction], cap: int = 24
) -> tuple[int, list[list[Fraction]]]:
    """Provably minimal bin count with a witness packing.

    Branch and bound over items in decreasing size order: each item goes
    into one existing bin per distinct load (equal-load bins are
    interchangeable) or opens one new bin.  Pruned by the volume bound
    and seeded with the first-fit-decreasing packing.
    """
    sizes = list(instance.items) if isinstance(instance, Instance) else [
        as_size(s) for s in instance
    ]
    n = len(sizes)
    if n == 0:
        return 0, []
    if n > cap:
        raise CapExceededError(f"instance size {n} exceeds opt_exact cap {cap}")

    ints, capacity = _scaled_ints(sizes)
    order = sorted(range(n), key=lambda i: ints[i], reverse=True)
    items = [ints[i] for i in order]
    suffix_vol = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix_vol[i] = suffix_vol[i + 1] + items[i]

    best_packing = _ffd_packing(sizes)
    best_count = len(best_packing)
    best_assign: list[int] | None = None
    assign = [-1] * n
    loads: list[int] = []
    seen: set[tuple[int, tuple[int, ...]]] = set()

    def dfs(i: int) -> None:
        nonlocal best_count, best_assign
        # Volume bound: new bins are forced once the remaining volume
        # exceeds the free space of the bins already open.
        excess = suffix_vol[i] - (len(loads) * capacity - sum(loads))
        need = -(-excess // capacity) if excess > 0 else 0
        if len(loads) + need >= best_count:
            return
        if i == n:
            best_count = len(loads)
            best_assign = assign.copy()
            return
        # Revisiting an identical load multiset cannot improve: the first
        # visit ran under a bound at least as permissive.
        key = (i, tuple(sorted(loads)))
        if key in seen:
            return
        seen.add(key)
        s = items[i]
        tried: set[int] = set()
        for b, load in enumerate(loads):
            if load + s <= capacity and load not in tried:
                tried.add(load)
                loads[b] = load + s
                assign[i] = b
                dfs(i + 1)
                loads[b] = load
        loads.append(s)
        assign[i] = len(loads) - 1
        dfs(i + 1)
        loads.pop()
        assign[i] = -1

    dfs(0)
    if best_assign is None:
        return best_count, best_packing
    packing: list[list[Fraction]] = [[] for _ in range(best_count)]
    for pos, b in enumerate(best_assign):
        packing[b].append(sizes[order[pos]])
    return best_count, packing


def _ffd_packing(sizes: Sequence[Fraction]) -> list[list[Fraction]]:
    bins: list[tuple[Fraction, list[Fraction]]] = []
    for s in sorted(sizes, reverse=True):
        for i, (load, contents) in enumerate(bins):
            if load + s <= 1:
                contents.append(s)
                bins[i] = (load + s, contents)
                break
        else:
            bins.append((s, [s]))
    return [contents for _, contents in bins]


def opt_lm_packing(sizes: Sequence[Fraction]) -> list[list[Fraction]]:
    """Optimal packing for instances of only large and medium items.

    Maximising the number of fitting large+medium pairs is optimal here:
    bins used = #large + ceil((#medium - pairs) / 2), decreasing in the
    pair count.  Works at any instance size, unlike opt_exact.
    """
    items = [as_size(s) for s in sizes]
    larges = sorted((s for s in items if classify(s) is Category.LARGE), reverse=False)
    mediums = sorted((s for s in items if classify(s) is Category.MEDIUM), reverse=True)
    if len(larges) + len(mediums) != len(items):
        raise InvariantError("opt_lm_packing requires large/medium items only")
    packing: list[list[Fraction]] = []
    li = 0
    unpaired_mediums: list[Fraction] = []
    for m in mediums:  # largest mediums try the smallest larges first
        if li < len(larges) and m + larges[li] <= 1:
            packing.append([larges[li], m])
            li += 1
        else:
            unpaired_mediums.append(m)
    for l in larges[li:]:
        packing.append([l])
    for i in range(0, len(unpaired_mediums), 2):
        packing.append(list(unpaired_mediums[i : i + 2]))
    return packing


def max_fitting_pairs(
    q_sizes: Sequence[Fraction], l_sizes: Sequence[Fraction]
) -> int:
    """Maximum number of disjoint pairs (q, l) with q + l <= 1.

    Greedy proof by exchange: the largest remaining q either fits the
    smallest remaining l (match them) or fits nothing and is discarded.
    """
    qs = sorted(q_sizes, reverse=True)
    ls = sorted(l_sizes)
    pairs = 0
    j = 0
    for q in qs:
        if j >= len(ls):
            break
        if q + ls[j] <= 1:
            pairs += 1
            j += 1
    return pairs


@dataclass(frozen=True)
class PrefixOptPoint:
    """Bracket (or exact value) for Opt of a permuted prefix."""

    t: int
    lower: int
    upper: int
    exact: bool

    @property
    def value(self) -> int:
        if not self.exact:
            raise InvariantError("prefix optimum is only bracketed")
        return self.lower


def opt_prefix_curve(
    instance: Instance,
    permutation: Sequence[int],
    grid: Sequence[int],
    cap: int = 24,
) -> list[PrefixOptPoint]:
    """Opt of each permuted prefix: exact within ``cap``, else [LB, FFD]."""
    arrival = instance.permuted(permutation)
    out = []
    for t in grid:
        if not 0 <= t <= len(arrival):
            raise InvariantError(f"grid point {t} outside [0, {len(arrival)}]")
        prefix = arrival[:t]
        if t <= cap:
            value, _ = opt_exact(prefix, cap=cap)
            out.append(PrefixOptPoint(t=t, lower=value, upper=value, exact=True))
        else:
            out.append(
                PrefixOptPoint(
                    t=t,
                    lower=opt_lower_bound(prefix),
                    upper=ffd_count(prefix),
                    exact=False,
                )
            )
    return out
