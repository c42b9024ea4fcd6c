"""Brute-force checks of the max-min selection game on small pools.

Everything here is computed independently of :mod:`alkdrec.policy` except
where a report explicitly compares against it: adversarial assignments are
enumerated exhaustively, the closed-form quantities are recomputed in exact
rational arithmetic, and a candidate optimal policy is obtained from a linear
program and then scored by enumeration.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import linprog

from .policy import build_policy
from .profiling import TypeCounts

EF, SI, IN = 0, 1, 2
TYPE_NAMES = ("effective", "similar", "incorrect")
MAX_ENUM_N = 14


class InfeasibleCHat(ValueError):
    def __init__(self, message: str, position: int | None = None, kind: str | None = None):
        super().__init__(message)
        self.position = position
        self.kind = kind


@dataclass
class FractionalAssignment:
    c_ef: np.ndarray
    c_si: np.ndarray
    c_in: np.ndarray

    def type_sums(self) -> tuple[float, float, float]:
        return (math.fsum(self.c_ef), math.fsum(self.c_si), math.fsum(self.c_in))

    def stacked(self) -> np.ndarray:
        return np.stack([self.c_ef, self.c_si, self.c_in], axis=1)


def _gains(g_ef, g_si=None, g_in=None):
    g_ef = np.asarray(g_ef, dtype=np.float64)
    g_si = g_ef / 2 if g_si is None else np.asarray(g_si, dtype=np.float64)
    g_in = g_ef / 2 if g_in is None else np.asarray(g_in, dtype=np.float64)
    return g_ef, g_si, g_in


def payoff_matrix(g_ef, g_si, g_in) -> np.ndarray:
    """(N, 3) payoff of each type at each position: g_ef, g_si, -g_in."""
    return np.stack([g_ef, g_si, -np.asarray(g_in)], axis=1)


def expected_gain(p, c, g_ef, g_si=None, g_in=None) -> float:
    """z(p, c) for an integer assignment (type codes) or a fractional one."""
    g_ef, g_si, g_in = _gains(g_ef, g_si, g_in)
    p = np.asarray(p, dtype=np.float64)
    pay = payoff_matrix(g_ef, g_si, g_in)
    if isinstance(c, FractionalAssignment):
        weights = c.stacked()
        if weights.shape != pay.shape or len(p) != len(pay):
            raise ValueError("dimension mismatch between p, c and gains")
        return float(np.sum(p * np.sum(weights * pay, axis=1)))
    c = np.asarray(c, dtype=np.int64)
    if c.shape != p.shape or len(p) != len(pay):
        raise ValueError("dimension mismatch between p, c and gains")
    return float(np.sum(p * pay[np.arange(len(p)), c]))


def n_assignments(counts: TypeCounts) -> int:
    k = counts.as_tuple()
    return math.factorial(sum(k)) // (math.factorial(k[0]) * math.factorial(k[1]) * math.factorial(k[2]))


def enumerate_assignments(n: int, counts: TypeCounts) -> Iterator[tuple[int, ...]]:
    """Every type vector with the given counts, in lexicographic order (ef < si < in)."""
    if n > MAX_ENUM_N:
        raise ValueError(f"N={n} exceeds the enumeration cap of {MAX_ENUM_N}; exact large-N game values need an LP")
    if counts.n != n:
        raise ValueError(f"counts sum to {counts.n}, not {n}")
    remaining = list(counts.as_tuple())
    prefix: list[int] = []

    def walk():
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for t in (EF, SI, IN):
            if remaining[t]:
                remaining[t] -= 1
                prefix.append(t)
                yield from walk()
                prefix.pop()
                remaining[t] += 1

    yield from walk()


def min_gain(p, counts: TypeCounts, g_ef, g_si=None, g_in=None, chunk: int = 100_000) -> tuple[float, np.ndarray]:
    """Exact minimum of z(p, .) over all integer assignments, with a worst-case witness."""
    g_ef, g_si, g_in = _gains(g_ef, g_si, g_in)
    p = np.asarray(p, dtype=np.float64)
    weighted = p[:, None] * payoff_matrix(g_ef, g_si, g_in)
    cols = np.arange(len(p))
    best, witness = np.inf, None
    it = enumerate_assignments(len(p), counts)
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=np.int8)
        if block.size == 0:
            break
        z = weighted[cols, block].sum(axis=1)
        j = int(np.argmin(z))
        if z[j] < best:
            best, witness = float(z[j]), block[j].astype(np.int64)
    return best, witness


# -- exact closed form -------------------------------------------------------

@dataclass
class ExactPolicy:
    H: list[Fraction]
    G: list[Fraction]
    k_star: int
    gamma: Fraction
    p: list[Fraction]
    values: list[Fraction]  # objective of the k* search at each s (None outside range)


def exact_policy(g_ef, counts: TypeCounts, g_si=None, g_in=None, rule: str = "gamma") -> ExactPolicy:
    """Recompute H, G, k*, gamma and p* in rational arithmetic with plain loops."""
    fe = [Fraction(x) for x in g_ef]
    fs = [x / 2 for x in fe] if g_si is None else [Fraction(x) for x in g_si]
    fi = [x / 2 for x in fe] if g_in is None else [Fraction(x) for x in g_in]
    n = len(fe)
    m = counts.k_si + counts.k_in
    H, G = [], []
    h = g = Fraction(0)
    for s in range(n):
        if s < m:
            h += 1 / (fs[s] + fi[s])
            g += fs[s] / (fs[s] + fi[s])
        else:
            h += 1 / (fe[s] + fi[s])
            g += fe[s] / (fe[s] + fi[s])
        H.append(h)
        G.append(g)
    base = counts.k_ef + counts.k_si - n
    values = []
    for s in range(1, n + 1):
        if s < max(1, m):
            values.append(None)
        elif rule == "gamma":
            values.append((base + G[s - 1]) / H[s - 1])
        else:
            values.append((fe[s - 1] + base) / H[s - 1])
    best = max(v for v in values if v is not None)
    k_star = next(s for s in range(1, n + 1) if values[s - 1] == best)
    hk = H[k_star - 1]
    p = []
    for s in range(n):
        if s >= k_star:
            p.append(Fraction(0))
        elif s < m:
            p.append(1 / (hk * (fs[s] + fi[s])))
        else:
            p.append(1 / (hk * (fe[s] + fi[s])))
    gamma = (base + G[k_star - 1]) / hk
    return ExactPolicy(H, G, k_star, gamma, p, values)


# -- the adversary's equalizing assignment -----------------------------------

def build_c_hat(
    g_ef,
    counts: TypeCounts,
    k_star: int,
    gamma: float,
    g_si=None,
    g_in=None,
    variant: str = "equalizing",
    check: bool = True,
    tol: float = 1e-9,
) -> FractionalAssignment:
    """Fractional assignment meant to hold the per-position payoff at gamma up to k*.

    ``variant="equalizing"``: similar share ``(gamma + g_in) / (g_si + g_in)`` on
    the first ``k_si + k_in`` positions and effective share
    ``(gamma + g_in) / (g_ef + g_in)`` on the rest of ``[1, k*]``, which makes
    every payoff there exactly gamma. ``variant="printed"`` swaps the two
    denominators and starts the effective remainder sum one position early,
    reproducing the formulas as typeset. Positions past ``k*`` share whatever
    mass is left of each type uniformly; incorrect takes the complement.

    With ``check`` the result must have entries in [0, 1] and per-type sums
    equal to the counts, otherwise :class:`InfeasibleCHat` is raised.
    """
    if variant not in ("equalizing", "printed"):
        raise ValueError("variant must be 'equalizing' or 'printed'")
    g_ef, g_si, g_in = _gains(g_ef, g_si, g_in)
    n = len(g_ef)
    m = counts.k_si + counts.k_in
    c_ef = np.zeros(n)
    c_si = np.zeros(n)
    first = slice(0, m)
    second = slice(m, k_star)
    if variant == "equalizing":
        c_si[first] = (gamma + g_in[first]) / (g_si[first] + g_in[first])
        c_ef[second] = (gamma + g_in[second]) / (g_ef[second] + g_in[second])
        ef_used = math.fsum(c_ef[:k_star])
        si_used = math.fsum(c_si[:k_star])
    else:
        c_si[first] = (gamma + g_in[first]) / (g_ef[first] + g_in[first])
        c_ef[second] = (gamma + g_in[second]) / (g_si[second] + g_in[second])
        lo = max(m - 1, 0)
        ef_used = math.fsum((gamma + g_in[lo:k_star]) / (g_si[lo:k_star] + g_in[lo:k_star]))
        si_used = math.fsum(c_si[first])
    if k_star < n:
        c_ef[k_star:] = (counts.k_ef - ef_used) / (n - k_star)
        c_si[k_star:] = (counts.k_si - si_used) / (n - k_star)
    c_hat = FractionalAssignment(c_ef, c_si, 1.0 - c_ef - c_si)
    if check:
        check_feasible(c_hat, counts, tol)
    return c_hat


def check_feasible(c: FractionalAssignment, counts: TypeCounts, tol: float = 1e-9) -> None:
    for name, col in zip(TYPE_NAMES, (c.c_ef, c.c_si, c.c_in)):
        bad = np.flatnonzero((col < -tol) | (col > 1 + tol))
        if bad.size:
            s = int(bad[0])
            raise InfeasibleCHat(f"infeasible c_hat: {name} share {col[s]:.6g} at position {s + 1}", position=s + 1, kind=name)
    for name, total, want in zip(TYPE_NAMES, c.type_sums(), counts.as_tuple()):
        if abs(total - want) > tol:
            raise InfeasibleCHat(f"infeasible c_hat: {name} shares sum to {total:.12g}, need {want}", kind=name)


@dataclass
class CHatBest:
    value: float
    support: np.ndarray          # 0-based positions attaining the max
    payoffs: np.ndarray          # t(s) per position
    tail_violations: np.ndarray  # 0-based positions past k* with t(s) > gamma + tol


def max_gain_under_c_hat(c_hat: FractionalAssignment, g_ef, g_si=None, g_in=None, k_star=None, gamma=None, tol: float = 1e-9) -> CHatBest:
    """Best response of the selector to a fixed fractional assignment."""
    g_ef, g_si, g_in = _gains(g_ef, g_si, g_in)
    t = c_hat.c_ef * (g_ef + g_in) + c_hat.c_si * (g_si + g_in) - g_in
    value = float(t.max())
    support = np.flatnonzero(t >= value - tol)
    tail = np.zeros(0, dtype=np.int64)
    if k_star is not None and gamma is not None:
        tail = k_star + np.flatnonzero(t[k_star:] > gamma + tol)
    return CHatBest(value, support, t, tail)


# -- LP witness --------------------------------------------------------------

def game_value_lp(counts: TypeCounts, g_ef, g_si=None, g_in=None) -> tuple[float, np.ndarray]:
    """Max-min value via the adversary's transportation-LP dual; returns (value, maximizing p).

    Payoffs are rescaled by the largest gain before solving. The LP value is
    only as precise as the solver; use :func:`min_gain` on the returned p for
    an exact statement about that policy.
    """
    g_ef, g_si, g_in = _gains(g_ef, g_si, g_in)
    n = len(g_ef)
    scale = float(np.max(np.abs(payoff_matrix(g_ef, g_si, g_in))))
    pay = payoff_matrix(g_ef, g_si, g_in) / scale
    k = np.asarray(counts.as_tuple(), dtype=np.float64)
    # variables: p (n), u (n), v (3); maximize sum(u) + k.v
    nv = 2 * n + 3
    cost = np.zeros(nv)
    cost[n : 2 * n] = -1.0
    cost[2 * n :] = -k
    A = np.zeros((3 * n, nv))
    for s in range(n):
        for t in range(3):
            row = 3 * s + t
            A[row, s] = -pay[s, t]
            A[row, n + s] = 1.0
            A[row, 2 * n + t] = 1.0
    A_eq = np.zeros((1, nv))
    A_eq[0, :n] = 1.0
    bounds = [(0, None)] * n + [(None, None)] * (n + 3)
    res = linprog(cost, A_ub=A, b_ub=np.zeros(3 * n), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"LP failed: {res.message}")
    p = np.clip(res.x[:n], 0, None)
    return float(-res.fun * scale), p / p.sum()


# -- certification -----------------------------------------------------------

@dataclass
class SaddleReport:
    n: int
    counts: tuple[int, int, int]
    k_star: int
    gamma_closed_form: float
    lower_value: float
    upper_value: float | None
    worst_assignment: list[int]
    passed: bool
    tolerance: float
    guarantee_ok: bool
    c_hat_feasible: bool
    reason: str = ""
    cutoff_bound_ok: bool | None = None
    exact_match: bool | None = None
    witness_value: float | None = None
    witness_beats_gamma: bool | None = None
    witness_rel_gap: float | None = None
    ranks: list[int] | None = None
    gains: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def verify_saddle(
    g_ef,
    counts: TypeCounts,
    g_si=None,
    g_in=None,
    tol: float = 1e-9,
    rule: str = "gamma",
    variant: str = "equalizing",
    witness: bool = True,
    ranks: Sequence[int] | None = None,
) -> SaddleReport:
    """Check lower bound, upper bound and their agreement with the closed-form value.

    ``passed`` requires the brute-force minimum under p* and the best response
    to a feasible c_hat to both equal gamma within ``tol``. With ``witness``
    the LP's policy is scored by enumeration; a score above gamma shows gamma
    is not the value of the game for these gains.
    """
    g_ef, g_si, g_in = _gains(g_ef, g_si, g_in)
    n = len(g_ef)
    pol = build_policy(g_ef, counts, g_si, g_in, rule=rule)
    gamma = pol.gamma

    exact = exact_policy(g_ef, counts, g_si, g_in, rule=rule)
    exact_match = (
        exact.k_star == pol.k_star
        and abs(float(exact.gamma) - gamma) <= tol
        and all(abs(float(a) - b) <= tol for a, b in zip(exact.p, pol.p))
    )

    lower, worst = min_gain(pol.p, counts, g_ef, g_si, g_in)
    guarantee_ok = abs(lower - gamma) <= tol

    cutoff_ok = None
    if pol.k_star < n:
        cutoff_ok = bool(gamma >= g_ef[pol.k_star] - 1e-12)

    upper, feasible, reason = None, True, ""
    try:
        c_hat = build_c_hat(g_ef, counts, pol.k_star, gamma, g_si, g_in, variant=variant, tol=tol)
        best = max_gain_under_c_hat(c_hat, g_ef, g_si, g_in, pol.k_star, gamma, tol)
        upper = best.value
        if best.tail_violations.size:
            reason = f"payoff above gamma past k* at positions {(best.tail_violations + 1).tolist()}"
    except InfeasibleCHat as exc:
        feasible, reason = False, str(exc)

    passed = guarantee_ok and feasible and upper is not None and abs(upper - gamma) <= tol
    if not guarantee_ok:
        reason = (reason + "; " if reason else "") + f"min_c z(p*,c)={lower:.6g} != gamma"
    elif feasible and not passed:
        reason = reason or f"max_p z(p,c_hat)={upper:.6g} != gamma"

    witness_value = beats = rel_gap = None
    if witness:
        _, p_lp = game_value_lp(counts, g_ef, g_si, g_in)
        witness_value, _ = min_gain(p_lp, counts, g_ef, g_si, g_in)
        beats = bool(witness_value > gamma + tol)
        rel_gap = (witness_value - gamma) / abs(gamma) if gamma else None

    return SaddleReport(
        n=n,
        counts=counts.as_tuple(),
        k_star=pol.k_star,
        gamma_closed_form=gamma,
        lower_value=lower,
        upper_value=upper,
        worst_assignment=[int(x) for x in worst],
        passed=bool(passed),
        tolerance=tol,
        guarantee_ok=bool(guarantee_ok),
        c_hat_feasible=feasible,
        reason=reason,
        cutoff_bound_ok=cutoff_ok,
        exact_match=bool(exact_match),
        witness_value=witness_value,
        witness_beats_gamma=beats,
        witness_rel_gap=rel_gap,
        ranks=list(ranks) if ranks is not None else None,
        gains=[float(x) for x in g_ef],
    )


RANK_SCHEMES = ("pool", "sparse")


def random_trial(rng: np.random.Generator, nmin: int = 6, nmax: int = 12, mu: float = 10.0, ranks: str = "sparse"):
    """A pool size, type counts with ``k_si + k_in >= 1`` and rank-rule gains.

    Counts are uniform over all compositions of N. ``ranks="sparse"`` draws N
    distinct ranks from ``1..2N``; ``"pool"`` uses ``1..N`` as a real pool
    would. Gains are the ranks raised to ``-mu``.
    """
    if ranks not in RANK_SCHEMES:
        raise ValueError(f"ranks must be one of {RANK_SCHEMES}")
    n = int(rng.integers(nmin, nmax + 1))
    comps = [(a, b, n - a - b) for a in range(n + 1) for b in range(n + 1 - a) if n - a >= 1]
    counts = TypeCounts(*comps[int(rng.integers(len(comps)))])
    if ranks == "pool":
        r = np.arange(1, n + 1)
    else:
        r = np.sort(rng.choice(np.arange(1, 2 * n + 1), size=n, replace=False))
    return counts, r, r.astype(np.float64) ** -mu


@dataclass
class CampaignResult:
    reports: list[SaddleReport]
    seconds: float

    @property
    def total(self) -> int:
        return len(self.reports)

    def count(self, attr: str) -> int:
        return sum(1 for r in self.reports if getattr(r, attr) is True)

    def summary(self) -> dict:
        with_tail = [r for r in self.reports if r.cutoff_bound_ok is not None]
        return {
            "trials": self.total,
            "passed": self.count("passed"),
            "guarantee_ok": self.count("guarantee_ok"),
            "c_hat_feasible": self.count("c_hat_feasible"),
            "exact_match": self.count("exact_match"),
            "cutoff_bound_ok": f"{sum(r.cutoff_bound_ok for r in with_tail)}/{len(with_tail)}",
            "witness_beats_gamma": self.count("witness_beats_gamma"),
            "witness_beats_gamma_rel1e-6": sum(1 for r in self.reports if r.witness_rel_gap is not None and r.witness_rel_gap > 1e-6),
            "seconds": round(self.seconds, 3),
        }


def run_campaign(
    trials: int = 200,
    nmin: int = 6,
    nmax: int = 12,
    tol: float = 1e-9,
    seed: int = 0,
    mu: float = 10.0,
    rule: str = "gamma",
    variant: str = "equalizing",
    witness: bool = True,
    ranks: str = "sparse",
) -> CampaignResult:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    reports = []
    for _ in range(trials):
        counts, r, gains = random_trial(rng, nmin, nmax, mu, ranks)
        reports.append(verify_saddle(gains, counts, tol=tol, rule=rule, variant=variant, witness=witness, ranks=r.tolist()))
    return CampaignResult(reports, time.perf_counter() - start)
