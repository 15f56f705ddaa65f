"""Verification machinery: exact region probabilities, Monte Carlo, exponent
fits, and the binary worked example with phase-transition detection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp as lse

from .core import (
    Pmf,
    RuleSpec,
    TypeComposition,
    binary_divergence,
    logsumexp,
    seq_log_prob,
    type_stats,
)
from .exponents import exponent_e_c, exponent_e_fa, exponent_e_md
from .regions import Region, membership

# the binary example: a fair coin against P1(1) = 3/4
EXAMPLE_P0 = Pmf((0.5, 0.5))
EXAMPLE_P1 = Pmf((0.25, 0.75))

KINK_THRESHOLD = 0.01
MC_CHUNK = 100_000


def exact_region_prob(region: Region, p: Pmf) -> float:
    """ln p(region), summed exactly over the accepted types."""
    if p.alphabet_size != region.alphabet_size:
        raise ValueError("alphabet mismatch")
    return logsumexp(type_stats(t).log_type_size + seq_log_prob(p, t) for t in region.accepted)


class MonteCarloResult(NamedTuple):
    hits: int
    trials: int
    estimate: float
    std_error: float


def monte_carlo_region_prob(
    rule: RuleSpec,
    p0: Optional[Pmf],
    p1: Optional[Pmf],
    sample_from: str,
    n: int,
    trials: int,
    seed: int,
    t0: Optional[TypeComposition] = None,
    t1: Optional[TypeComposition] = None,
) -> MonteCarloResult:
    """Fraction of i.i.d. draws from P0 or P1 that the rule accepts.

    Draws go through numpy's PCG64 seeded with ``seed``; each sequence is drawn
    as its symbol counts (a multinomial sample), which is all any rule reads.
    Same seed and parameters give the same hits.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    source = {"P0": p0, "P1": p1}.get(str(sample_from).upper())
    if source is None:
        raise ValueError(f"cannot sample from {sample_from!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    cache = {}
    hits = 0
    done = 0
    probs = np.asarray(source.probs)
    while done < trials:
        size = min(MC_CHUNK, trials - done)
        draws = rng.multinomial(n, probs, size=size)
        keys, freq = np.unique(draws, axis=0, return_counts=True)
        for key, f in zip(map(tuple, keys.tolist()), freq.tolist()):
            accepted = cache.get(key)
            if accepted is None:
                accepted = membership(TypeComposition(key), rule, p0, p1, t0, t1)
                cache[key] = accepted
            if accepted:
                hits += f
        done += size
    est = hits / trials
    return MonteCarloResult(hits, trials, est, math.sqrt(est * (1.0 - est) / trials))


class ExponentFit(NamedTuple):
    slope: float
    intercept_log_term: float
    constant: float


def exponent_fit(points: Sequence) -> ExponentFit:
    """Least-squares fit of -log_prob = slope*n + c*ln(n) + const."""
    pts = [(float(n), float(lp)) for n, lp in points]
    if len({n for n, _ in pts}) < 3:
        raise ValueError("need at least 3 distinct n")
    n = np.array([p[0] for p in pts])
    y = -np.array([p[1] for p in pts])
    design = np.column_stack([n, np.log(n), np.ones_like(n)])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 3:
        raise ValueError("degenerate design")
    return ExponentFit(float(coef[0]), float(coef[1]), float(coef[2]))


def moment_upper_bound(region: Region, theta1: float) -> float:
    """ln of an upper bound on max over P1 of sum_region P1(x) exp(n theta1 H_x).

    Uses two bounds: P1(x) <= exp(-n H_x) gives sum_T |T| exp(n (theta1 - 1) H_T),
    and P1(region) <= 1 gives max_T exp(n theta1 H_T). Returns the smaller one.
    """
    if not region.accepted:
        return -math.inf
    n = region.n
    stats = [type_stats(t) for t in region.accepted]
    chain = logsumexp(s.log_type_size + n * (theta1 - 1.0) * s.empirical_entropy for s in stats)
    top = max(n * theta1 * s.empirical_entropy for s in stats)
    return min(chain, top)


def worst_case_moment(region: Region, theta1: float, starts: int = 20) -> float:
    """ln max over memoryless P1 of sum_region P1(x) exp(n theta1 H_x).

    Multistart L-BFGS over softmax logits, seeded at the empirical PMFs of the
    heaviest types. The result is a lower bound on the maximum and in practice
    equals it; :func:`moment_upper_bound` brackets it from above.
    """
    if not region.accepted:
        return -math.inf
    n = region.n
    types = sorted(region.accepted)
    counts = np.array([t.counts for t in types], dtype=float)
    stats = [type_stats(t) for t in types]
    logw = np.array([s.log_type_size + n * theta1 * s.empirical_entropy for s in stats])
    k = counts.shape[1]

    def neg(z):
        logq = z - lse(z)
        v = logw + counts @ logq
        r = np.exp(v - lse(v))
        grad = r @ counts - n * np.exp(logq)
        return -lse(v), -grad

    # a type's own PMF maximizes its likelihood, so its weight there is a good start
    own = logw + np.array([s.max_iid_log_likelihood for s in stats])
    best = -math.inf
    for i in np.argsort(-own, kind="stable")[:starts]:
        z0 = np.log((counts[i] + 0.5) / (n + 0.5 * k))
        res = minimize(neg, z0, jac=True, method="L-BFGS-B")
        best = max(best, -float(res.fun), float(own[i]))
    return best


# ---------------------------------------------------------------------------
# binary example


class QThreshold(NamedTuple):
    q: float
    branch: int       # 1: code-length test binds, 2: likelihood-ratio test binds
    in_regime: bool   # q in (1/2, 3/4)
    tie: bool


def _branch_values(theta, alpha, beta):
    return math.log(4) - beta * (1 + 1 / theta), math.log(2) + alpha - beta


def binary_q_threshold(theta: float, alpha: float, beta: float) -> QThreshold:
    """Ones-frequency threshold of the HAT region for the binary example."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    b1, b2 = _branch_values(theta, alpha, beta)
    q = max(b1, b2) / math.log(3)
    return QThreshold(q, 1 if b1 > b2 else 2, 0.5 < q < 0.75, abs(b1 - b2) <= 1e-12)


def closed_form_exponents(theta: float, alpha: float, beta: float):
    """(e_fa, e_md, e_c) of the binary example from the ones-frequency threshold.

    Valid for every q, not only inside (1/2, 3/4): the accepted set is
    {k/n >= q}, so e_fa vanishes once q <= 1/2 and e_md once q >= 3/4.
    """
    q = binary_q_threshold(theta, alpha, beta).q
    if q <= 0.5:
        e_fa = 0.0
    elif q <= 1.0:
        e_fa = binary_divergence(q, 0.5)
    else:
        e_fa = math.inf
    if q >= 0.75:
        e_md = 0.0
    elif q >= 0.0:
        e_md = binary_divergence(q, 0.75)
    else:
        e_md = math.inf
    a = 0.25 ** (1 / (1 + theta))
    b = 0.75 ** (1 / (1 + theta))
    q_free = b / (a + b)
    if q <= q_free:
        e_c = (1 + theta) * math.log(a + b)
    elif q <= 1.0:
        h = -(q * math.log(q) + (1 - q) * math.log1p(-q)) if q < 1 else 0.0
        e_c = (1 + theta) * h + q * math.log(0.75) + (1 - q) * math.log(0.25)
    else:
        e_c = -math.inf
    return e_fa, e_md, e_c


@dataclass(frozen=True)
class SweepRow:
    variable: str
    value: float
    theta: float
    alpha: float
    beta: float
    q_threshold: float
    branch: int
    in_regime: bool
    e_fa_closed: float
    e_md_closed: float
    e_c_closed: float
    e_fa: float
    e_md: float
    e_c: float
    e_md_branch: str
    e_fa_active: str


class Kink(NamedTuple):
    location: float   # interpolated branch-equality point
    index: int        # flip lies between grid points index and index + 1
    left_slope: float
    right_slope: float
    gap: float
    flagged: bool


class SweepResult(NamedTuple):
    rows: List[SweepRow]
    flips: List[Kink]

    @property
    def kinks(self) -> List[Kink]:
        return [k for k in self.flips if k.flagged]


def sweep_binary_example(
    variable: str,
    values: Sequence[float],
    theta: float = 1.0,
    alpha: float = 0.0,
    beta: float = 0.0,
    kink_threshold: float = KINK_THRESHOLD,
) -> SweepResult:
    """Exponents of the binary example along a grid in theta, alpha or beta.

    Each row carries the closed-form exponents and the generic solver values.
    Every cell where the maximizing branch of the threshold flips is reported;
    it is flagged as a kink when the one-sided slopes of e_FA on either side
    differ by more than ``kink_threshold``.
    """
    if variable not in ("theta", "alpha", "beta"):
        raise ValueError(f"cannot sweep {variable!r}")
    vals = [float(v) for v in values]
    if len(vals) < 5:
        raise ValueError("sweep grid needs at least 5 points")
    diffs = np.diff(vals)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("sweep grid must be strictly monotone")

    rows = []
    for v in vals:
        params = {"theta": theta, "alpha": alpha, "beta": beta, variable: v}
        th, al, be = params["theta"], params["alpha"], params["beta"]
        qt = binary_q_threshold(th, al, be)
        e_fa_c, e_md_c, e_c_c = closed_form_exponents(th, al, be)
        fa = exponent_e_fa(EXAMPLE_P0, EXAMPLE_P1, th, al, be)
        md = exponent_e_md(EXAMPLE_P0, EXAMPLE_P1, th, al, be)
        ec = exponent_e_c(EXAMPLE_P0, EXAMPLE_P1, th, al, be)
        rows.append(SweepRow(
            variable, v, th, al, be, qt.q, qt.branch, qt.in_regime,
            e_fa_c, e_md_c, e_c_c, fa.value, md.value, ec.value,
            md.branch or "", "".join("1" if a else "0" for a in fa.active),
        ))

    flips = []
    for i in range(len(rows) - 1):
        if rows[i].branch == rows[i + 1].branch:
            continue
        flips.append(_flip_report(rows, i, kink_threshold))
    return SweepResult(rows, flips)


def _slope(rows, i, j):
    a, b = rows[i], rows[j]
    if not (math.isfinite(a.e_fa_closed) and math.isfinite(b.e_fa_closed)):
        return math.nan
    return (b.e_fa_closed - a.e_fa_closed) / (b.value - a.value)


def _flip_report(rows, i, threshold) -> Kink:
    a, b = rows[i], rows[i + 1]
    da = np.subtract(*_branch_values(a.theta, a.alpha, a.beta))
    db = np.subtract(*_branch_values(b.theta, b.alpha, b.beta))
    location = a.value + (b.value - a.value) * da / (da - db) if da != db else a.value
    left = _slope(rows, i - 1, i) if i >= 1 else math.nan
    right = _slope(rows, i + 1, i + 2) if i + 2 < len(rows) else math.nan
    gap = abs(right - left)
    return Kink(float(location), i, left, right, gap, bool(gap > threshold))
