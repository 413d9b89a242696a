"""Open-bin Markov chains for Best-Fit on i.i.d. discrete size streams.

States are multisets of open-bin loads: a bin stays in the state only
while it can still accept the smallest support item, because closed bins
never influence future Best-Fit choices.  The stationary distribution is
solved exactly over rationals (certified against the defining equations)
or iteratively in floating point, and the asymptotic bins-per-item rate
of Best-Fit is the stationary opening-transition mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, isqrt
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    CapExceededError,
    DiscreteDistribution,
    InvariantError,
    ParseError,
    parse_size,
)
from .optimal import configuration_lp, verify_recipe

State = tuple[Fraction, ...]  # sorted ascending loads of open bins


class ChainExplosionError(CapExceededError):
    """State enumeration hit the cap; carries what was found so far."""

    def __init__(self, cap: int, states_found: int):
        self.cap = cap
        self.states_found = states_found
        super().__init__(f"chain exceeds state cap {cap} ({states_found} states found)")


class ReducibleChainError(InvariantError):
    """Stationary analysis requires an irreducible chain."""


@dataclass(frozen=True, slots=True)
class Transition:
    item_index: int
    prob: Fraction
    target: int
    opened_new: bool


@dataclass(frozen=True)
class ChainSpec:
    """Finite chain: ``transitions[i]`` lists one entry per support item."""

    dist: DiscreteDistribution
    states: tuple[State, ...]
    transitions: tuple[tuple[Transition, ...], ...]

    @property
    def num_states(self) -> int:
        return len(self.states)

    def probability_matrix(self) -> list[list[Fraction]]:
        n = len(self.states)
        zero = Fraction(0)
        P = [[zero] * n for _ in range(n)]
        for i, outs in enumerate(self.transitions):
            for tr in outs:
                P[i][tr.target] += tr.prob
        return P


def _step(state: State, size: Fraction, open_limit: Fraction) -> tuple[State, bool]:
    """Place one item by the Best-Fit rule and drop bins that close."""
    candidate = None
    for load in state:  # ascending, so the last fitting load is the fullest
        if load + size <= 1:
            candidate = load
    if candidate is None:
        loads = list(state) + [size]
        opened = True
    else:
        loads = list(state)
        loads.remove(candidate)
        loads.append(candidate + size)
        opened = False
    return tuple(sorted(l for l in loads if l <= open_limit)), opened


def build_chain(dist: DiscreteDistribution, state_cap: int = 200_000) -> ChainSpec:
    """Breadth-first closure of reachable open-bin states from the empty state."""
    open_limit = 1 - dist.min_size
    empty: State = ()
    index: dict[State, int] = {empty: 0}
    order: list[State] = [empty]
    transitions: list[tuple[Transition, ...]] = []
    frontier = 0
    while frontier < len(order):
        state = order[frontier]
        outs = []
        for k, (size, prob) in enumerate(dist.items()):
            target, opened = _step(state, size, open_limit)
            j = index.get(target)
            if j is None:
                j = len(order)
                if j >= state_cap:
                    raise ChainExplosionError(state_cap, len(order))
                index[target] = j
                order.append(target)
            outs.append(Transition(item_index=k, prob=prob, target=j, opened_new=opened))
        transitions.append(tuple(outs))
        frontier += 1
    return ChainSpec(dist=dist, states=tuple(order), transitions=tuple(transitions))


@dataclass(frozen=True)
class ErgodicityReport:
    irreducible: bool
    aperiodic: bool
    period: int | None
    unreachable_states: int
    states_not_returning: int

    @property
    def ergodic(self) -> bool:
        return self.irreducible and self.aperiodic


def verify_ergodicity(chain: ChainSpec) -> ErgodicityReport:
    """Strong connectivity plus the gcd-of-cycles aperiodicity test.

    The period is the gcd of ``level[u] + 1 - level[v]`` over all edges
    of a BFS tree rooted at state 0, which equals the gcd of all cycle
    lengths through state 0 on a strongly connected graph.
    """
    n = chain.num_states
    fwd = [[tr.target for tr in outs] for outs in chain.transitions]
    rev: list[list[int]] = [[] for _ in range(n)]
    for u, outs in enumerate(fwd):
        for v in outs:
            rev[v].append(u)

    def bfs(adj: list[list[int]]) -> list[int]:
        level = [-1] * n
        level[0] = 0
        queue = [0]
        for u in queue:
            for v in adj[u]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level

    level_fwd = bfs(fwd)
    level_rev = bfs(rev)
    unreachable = sum(1 for l in level_fwd if l < 0)
    not_returning = sum(1 for l in level_rev if l < 0)
    irreducible = unreachable == 0 and not_returning == 0

    period: int | None = None
    aperiodic = False
    if irreducible:
        g = 0
        for u in range(n):
            for v in fwd[u]:
                g = gcd(g, level_fwd[u] + 1 - level_fwd[v])
        period = abs(g) if g != 0 else 0
        aperiodic = period == 1
    return ErgodicityReport(
        irreducible=irreducible,
        aperiodic=aperiodic,
        period=period,
        unreachable_states=unreachable,
        states_not_returning=not_returning,
    )


@dataclass(frozen=True)
class StationaryVector:
    omega: tuple  # Fractions in exact mode, floats in iterative mode
    exact: bool
    residual: float  # max-norm of omega P - omega, 0.0 when exact
    iterations: int | None = None

    def as_floats(self) -> list[float]:
        return [float(w) for w in self.omega]


def stationary(chain: ChainSpec, mode: str = "auto") -> StationaryVector:
    """Solve omega P = omega, sum(omega) = 1.

    ``exact`` works over rationals and certifies the result against the
    defining equations; ``iterative`` is float power iteration to a
    1e-13 max-norm residual; ``auto`` picks exact up to 2000 states.
    """
    if mode not in ("auto", "exact", "iterative"):
        raise InvariantError(f"unknown stationary mode {mode!r}")
    report = verify_ergodicity(chain)
    if not report.irreducible:
        raise ReducibleChainError(
            f"chain is reducible ({report.unreachable_states} unreachable, "
            f"{report.states_not_returning} not returning)"
        )
    if mode == "auto":
        mode = "exact" if chain.num_states <= 2000 else "iterative"
    if mode == "exact":
        return _stationary_exact(chain)
    return _stationary_iterative(chain)


def _stationary_exact(chain: ChainSpec) -> StationaryVector:
    n = chain.num_states
    P = chain.probability_matrix()
    # Rows of (P^T - I) x = 0, with the last equation replaced by sum = 1.
    A = [[P[j][i] - (1 if i == j else 0) for j in range(n)] for i in range(n)]
    A[n - 1] = [Fraction(1)] * n
    b = [Fraction(0)] * (n - 1) + [Fraction(1)]
    if n <= 64:
        omega = _solve_fraction_ge(A, b)
    else:
        omega = _solve_dixon(A, b)
    _certify_stationary(P, omega)
    return StationaryVector(omega=tuple(omega), exact=True, residual=0.0)


def _certify_stationary(P: list[list[Fraction]], omega: list[Fraction]) -> None:
    n = len(omega)
    if sum(omega) != 1 or any(w < 0 for w in omega):
        raise InvariantError("stationary solve produced an invalid distribution")
    for j in range(n):
        if sum(omega[i] * P[i][j] for i in range(n)) != omega[j]:
            raise InvariantError("stationary solve failed certification")


def _solve_fraction_ge(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gaussian elimination with exact rationals; first-nonzero pivoting."""
    n = len(b)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise InvariantError("singular stationary system")
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * c for a, c in zip(M[r], M[col])]
    return [M[i][n] for i in range(n)]


_DIXON_PRIME = 1048573  # < 2**20 so int64 matvec accumulation cannot overflow


def _solve_dixon(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Exact rational solve by modular elimination plus p-adic lifting.

    Clears denominators row-wise, inverts the matrix modulo a prime with
    vectorised elimination, lifts the residual p-adically, and recovers
    rationals by half-gcd reconstruction.  The caller certifies the
    result, so correctness does not rest on this routine's internals.
    """
    n = len(b)
    Ai = np.zeros((n, n), dtype=np.int64)
    bi = [0] * n
    for i in range(n):
        denom = 1
        for v in A[i]:
            denom = denom * v.denominator // gcd(denom, v.denominator)
        denom = denom * b[i].denominator // gcd(denom, b[i].denominator)
        for j, v in enumerate(A[i]):
            Ai[i, j] = int(v * denom)
        bi[i] = int(b[i] * denom)

    max_entry = int(np.abs(Ai).max())
    if max_entry >= 1 << 30 or any(abs(v) >= 1 << 30 for v in bi):
        # int64 matvec headroom would be gone; fall back to plain rationals.
        return _solve_fraction_ge(A, b)

    p = _DIXON_PRIME
    C = _invert_mod(Ai % p, p)
    if C is None:
        raise InvariantError("stationary system singular modulo the lifting prime")

    # Residuals stay bounded by n * max|A| throughout, so int64 suffices.
    r = np.array(bi, dtype=np.int64)
    x_acc = [0] * n
    p_pow = 1
    max_steps = 8 * (n * (max_entry + 1).bit_length() // p.bit_length() + 8)
    step = 0
    while True:
        for _ in range(64):
            y = (C @ (r % p)) % p
            for i in range(n):
                x_acc[i] += int(y[i]) * p_pow
            p_pow *= p
            r = (r - Ai @ y) // p
            step += 1
        sol = _reconstruct(x_acc, p_pow)
        if sol is not None and _check_int_solution(Ai, sol, bi):
            return sol
        if step > max_steps:
            raise InvariantError("p-adic lifting failed to converge")


def _invert_mod(M: np.ndarray, p: int) -> np.ndarray | None:
    n = M.shape[0]
    work = np.concatenate([M.astype(np.int64) % p, np.eye(n, dtype=np.int64)], axis=1)
    for col in range(n):
        piv = None
        for r in range(col, n):
            if work[r, col] % p:
                piv = r
                break
        if piv is None:
            return None
        if piv != col:
            work[[col, piv]] = work[[piv, col]]
        inv = pow(int(work[col, col]), p - 2, p)
        work[col] = (work[col] * inv) % p
        factors = work[:, col].copy()
        factors[col] = 0
        work = (work - np.outer(factors, work[col])) % p
    return work[:, n:]


def _reconstruct(x_acc: Sequence[int], modulus: int) -> list[Fraction] | None:
    bound = isqrt(modulus // 2)
    out = []
    for a in x_acc:
        r0, r1 = modulus, int(a) % modulus
        s0, s1 = 0, 1
        while r1 > bound:
            q = r0 // r1
            r0, r1 = r1, r0 - q * r1
            s0, s1 = s1, s0 - q * s1
        if s1 == 0 or abs(s1) > bound:
            return None
        out.append(Fraction(r1, s1))
    return out


def _check_int_solution(Ai: np.ndarray, sol: list[Fraction], bi: list[int]) -> bool:
    n = len(bi)
    for i in range(n):
        total = Fraction(0)
        row = Ai[i]
        for j in range(n):
            v = int(row[j])
            if v:
                total += v * sol[j]
        if total != bi[i]:
            return False
    return True


def _stationary_iterative(
    chain: ChainSpec, residual_target: float = 1e-13, max_iter: int = 10**7
) -> StationaryVector:
    n = chain.num_states
    P = np.zeros((n, n), dtype=float)
    for i, outs in enumerate(chain.transitions):
        for tr in outs:
            P[i, tr.target] += float(tr.prob)
    w = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        w_next = w @ P
        w_next /= w_next.sum()
        residual = float(np.max(np.abs(w_next - w)))
        w = w_next
        if residual <= residual_target:
            return StationaryVector(
                omega=tuple(float(v) for v in w),
                exact=False,
                residual=residual,
                iterations=it,
            )
    raise InvariantError(
        f"power iteration did not reach residual {residual_target} in {max_iter} steps"
    )


def bf_rate(chain: ChainSpec, omega: StationaryVector):
    """Asymptotic bins opened per item: stationary mass on opening moves."""
    if len(omega.omega) != chain.num_states:
        raise InvariantError("stationary vector does not match the chain")
    total = Fraction(0) if omega.exact else 0.0
    for i, outs in enumerate(chain.transitions):
        w = omega.omega[i]
        for tr in outs:
            if tr.opened_new:
                total += w * (tr.prob if omega.exact else float(tr.prob))
    return total


def iid_ratio(
    dist: DiscreteDistribution,
    opt_mode: str = "lp",
    recipe=None,
    state_cap: int = 200_000,
    stationary_mode: str = "auto",
):
    """Best-Fit rate over the optimum rate for i.i.d. draws from ``dist``.

    This is a valid lower bound on the random-order performance of
    Best-Fit whenever the optimum rate is not an underestimate, which
    holds for both the configuration LP objective and any verified
    recipe rate.
    """
    if opt_mode not in ("lp", "recipe"):
        raise InvariantError(f"unknown opt mode {opt_mode!r}")
    chain = build_chain(dist, state_cap=state_cap)
    omega = stationary(chain, mode=stationary_mode)
    rate = bf_rate(chain, omega)
    if opt_mode == "recipe":
        if recipe is None:
            raise InvariantError("opt_mode='recipe' requires a recipe")
        opt_rate = verify_recipe(dist, recipe)
    else:
        opt_rate = configuration_lp(dist).objective
    if omega.exact:
        return Fraction(rate) / opt_rate
    return float(rate) / float(opt_rate)


def load_distribution(path: str | Path) -> DiscreteDistribution:
    """Read {"items": [{"size": "...", "prob": "..."}]} with exact parsing.

    Bare JSON numbers are accepted through their shortest decimal
    representation, which recovers the literal the user wrote.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "items" not in doc:
        raise ParseError(f"{path}: expected an object with an 'items' list")
    sizes = []
    probs = []
    for entry in doc["items"]:
        sizes.append(parse_size(_exact_text(entry["size"])))
        probs.append(Fraction(_exact_text(entry["prob"])))
    try:
        return DiscreteDistribution(tuple(sizes), tuple(probs))
    except InvariantError as exc:
        raise ParseError(f"{path}: {exc}") from None


def _exact_text(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
