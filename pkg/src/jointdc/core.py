"""Finite-alphabet probability primitives.

PMFs, empirical types, entropies, divergences, tilted exponential families and
type-class combinatorics. Everything is in nats.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

PMF_TOL = 1e-12


def _xlogy(x: float, y: float) -> float:
    """x * ln(y) with the convention 0 * ln(anything) = 0."""
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return -math.inf
    return x * math.log(y)


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over symbols ``0 .. alphabet_size - 1``."""

    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) < 2:
            raise ValueError("alphabet_size must be at least 2")
        if any(not math.isfinite(p) or p < 0.0 for p in probs):
            raise ValueError(f"probabilities must be finite and nonnegative: {probs}")
        total = math.fsum(probs)
        if abs(total - 1.0) > PMF_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, weights: Sequence[float], tol: float = 1e-6) -> "Pmf":
        """Renormalize hand-typed probabilities that sum to 1 within ``tol``."""
        w = [float(x) for x in weights]
        total = math.fsum(w)
        if abs(total - 1.0) > tol:
            raise ValueError(f"probabilities sum to {total!r}, outside 1 +/- {tol}")
        return cls(tuple(x / total for x in w))

    @classmethod
    def uniform(cls, alphabet_size: int) -> "Pmf":
        return cls((1.0 / alphabet_size,) * alphabet_size)

    @property
    def alphabet_size(self) -> int:
        return len(self.probs)

    @property
    def full_support(self) -> bool:
        return all(p > 0.0 for p in self.probs)

    def logs(self) -> np.ndarray:
        """Per-symbol ln p(x), with -inf where p(x) = 0."""
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.probs))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, k):
        return self.probs[k]


@dataclass(frozen=True, order=True)
class TypeComposition:
    """Symbol counts of a length-n sequence."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError(f"negative count in {counts}")
        if sum(counts) <= 0:
            raise ValueError("a type needs n >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    def pmf(self) -> Pmf:
        n = self.n
        return Pmf(tuple(c / n for c in self.counts))


class RuleKind(str, enum.Enum):
    STAR = "STAR"
    HAT = "HAT"
    STAR_UNIV = "STAR_UNIV"
    EXCESS = "EXCESS"
    U_KNOWN_P0 = "U_KNOWN_P0"
    U_COST = "U_COST"
    U_BLIND = "U_BLIND"
    U_TRAINING = "U_TRAINING"


KNOWN_KINDS = frozenset({RuleKind.STAR, RuleKind.HAT, RuleKind.STAR_UNIV, RuleKind.EXCESS})
UNIVERSAL_KINDS = frozenset(RuleKind) - KNOWN_KINDS


@dataclass(frozen=True)
class RuleSpec:
    """Which decision rule is in force, plus its parameters.

    Only the fields relevant to ``kind`` are consulted. Exponent-like fields are
    in nats per symbol.
    """

    kind: RuleKind = RuleKind.HAT
    theta: float = 1.0
    theta0: float = 1.0
    theta1: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    lambda0: float = 0.0
    lambda1: float = 0.0
    rate_R: float = 0.0
    exp_fa: float = 0.0
    slack_c: float = 1.0
    m: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.slack_c < 0:
            raise ValueError("slack_c must be nonnegative")
        for name in self._theta_fields():
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive for {self.kind.value}")

    def _theta_fields(self):
        k = self.kind
        if k in (RuleKind.STAR, RuleKind.HAT):
            return ("theta",)
        if k in (RuleKind.STAR_UNIV, RuleKind.U_COST, RuleKind.U_BLIND, RuleKind.U_TRAINING):
            return ("theta0", "theta1")
        if k is RuleKind.U_KNOWN_P0:
            return ("theta1",)
        return ()


@dataclass(frozen=True)
class ExponentResult:
    """Outcome of a constrained KL program.

    ``multipliers`` and ``active`` have one entry per constraint. ``q_opt`` is
    None when the program is infeasible.
    """

    value: float
    q_opt: Optional[Pmf]
    multipliers: tuple = ()
    active: tuple = ()
    feasible: bool = True
    branch: Optional[str] = None


class TypeStats(NamedTuple):
    log_type_size: float
    empirical_entropy: float
    max_iid_log_likelihood: float


# ---------------------------------------------------------------------------
# information measures


def entropy(q: Pmf) -> float:
    """Shannon entropy in nats."""
    return -math.fsum(_xlogy(p, p) for p in q.probs)


def kl_divergence(q: Pmf, p: Pmf) -> float:
    """D(q||p) in nats; +inf when q charges a symbol that p does not."""
    if q.alphabet_size != p.alphabet_size:
        raise ValueError(
            f"alphabet mismatch: {q.alphabet_size} vs {p.alphabet_size}"
        )
    terms = []
    for qx, px in zip(q.probs, p.probs):
        if qx == 0.0:
            continue
        if px == 0.0:
            return math.inf
        terms.append(qx * math.log(qx / px))
    return max(math.fsum(terms), 0.0)


def binary_divergence(s: float, t: float) -> float:
    """D(s||t) between Bernoulli(s) and Bernoulli(t)."""
    if not 0.0 <= s <= 1.0 or not 0.0 <= t <= 1.0:
        raise ValueError("arguments must lie in [0, 1]")
    return kl_divergence(Pmf((1.0 - s, s)), Pmf((1.0 - t, t)))


def empirical_type(x: Sequence[int], alphabet_size: int) -> TypeComposition:
    if len(x) == 0:
        raise ValueError("empty sequence has no type")
    counts = [0] * alphabet_size
    for sym in x:
        sym = int(sym)
        if not 0 <= sym < alphabet_size:
            raise ValueError(f"symbol {sym} outside alphabet of size {alphabet_size}")
        counts[sym] += 1
    return TypeComposition(tuple(counts))


def tilted_family(p0: Pmf, p1: Pmf, u: float, v: float) -> Pmf:
    """Normalized Q(x) proportional to p0(x)**u * p1(x)**v.

    Zero bases with a positive exponent get probability 0; ``0**0`` is 1.
    """
    if p0.alphabet_size != p1.alphabet_size:
        raise ValueError("alphabet mismatch")
    logw = []
    for a, b in zip(p0.probs, p1.probs):
        la = _power_log(a, u)
        lb = _power_log(b, v)
        logw.append(la + lb)
    if any(w == math.inf for w in logw):
        raise ValueError("zero base raised to a negative power")
    finite = [w for w in logw if w > -math.inf]
    if not finite:
        raise ValueError("tilted family has zero total mass")
    top = max(finite)
    w = [math.exp(x - top) if x > -math.inf else 0.0 for x in logw]
    total = math.fsum(w)
    return Pmf(tuple(x / total for x in w))


def _power_log(base: float, exponent: float) -> float:
    """ln(base**exponent) with 0**0 = 1."""
    if exponent == 0.0:
        return 0.0
    if base == 0.0:
        return -math.inf if exponent > 0 else math.inf
    return exponent * math.log(base)


# ---------------------------------------------------------------------------
# types


def log_multinomial(counts: Sequence[int]) -> float:
    """ln(n! / prod(c!)) via log-gamma."""
    n = sum(counts)
    return math.lgamma(n + 1) - math.fsum(math.lgamma(c + 1) for c in counts)


def type_stats(t: TypeComposition) -> TypeStats:
    n = t.n
    h = -math.fsum(_xlogy(c / n, c / n) for c in t.counts)
    return TypeStats(log_multinomial(t.counts), h, -n * h)


def empirical_entropy(t: TypeComposition) -> float:
    n = t.n
    return -math.fsum(_xlogy(c / n, c / n) for c in t.counts)


def seq_log_prob(p: Pmf, t: TypeComposition) -> float:
    """ln P(x) for any x of type ``t`` under the memoryless source ``p``."""
    if p.alphabet_size != t.alphabet_size:
        raise ValueError("alphabet mismatch")
    total = []
    for c, px in zip(t.counts, p.probs):
        if c == 0:
            continue
        if px == 0.0:
            return -math.inf
        total.append(c * math.log(px))
    return math.fsum(total)


def count_types(n: int, alphabet_size: int) -> int:
    """Number of type compositions of length n, C(n+k-1, k-1)."""
    return math.comb(n + alphabet_size - 1, alphabet_size - 1)


def iter_types(n: int, alphabet_size: int) -> Iterator[TypeComposition]:
    """All types of length n in lexicographic order of the count vectors."""
    if n < 1:
        raise ValueError("n must be positive")
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be positive")
    for counts in _compositions(n, alphabet_size):
        yield TypeComposition(counts)


def _compositions(n: int, k: int):
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def logsumexp(values) -> float:
    """Stable ln(sum(exp(v))); -inf for an empty or all -inf input."""
    vals = [v for v in values if v > -math.inf]
    if not vals:
        return -math.inf
    top = max(vals)
    if top == math.inf:
        return math.inf
    return top + math.log(math.fsum(math.exp(v - top) for v in vals))
