"""Decision rules as membership predicates and materialized regions.

Every rule here depends on a sequence only through its type, so regions are
built at type granularity: a :class:`Region` is the set of accepted types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import (
    KNOWN_KINDS,
    Pmf,
    RuleKind,
    RuleSpec,
    TypeComposition,
    count_types,
    empirical_entropy,
    empirical_type,
    iter_types,
    kl_divergence,
    logsumexp,
    seq_log_prob,
)

DEFAULT_TYPE_CAP = 2_000_000

# relative slack on log-domain comparisons so that exact ties survive rounding
_TIE_RTOL = 1e-12


def _le(lhs: float, rhs: float) -> bool:
    """lhs <= rhs, closed under rounding noise."""
    if lhs <= rhs:
        return True
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        return False
    return lhs - rhs <= _TIE_RTOL * max(1.0, abs(lhs), abs(rhs))


@dataclass(frozen=True)
class ScoredSpace:
    """Finite space with three real scores per element."""

    elements: tuple  # of (identifier, f, g, h)

    def __post_init__(self):
        elements = tuple(tuple(e) for e in self.elements)
        if not elements:
            raise ValueError("ScoredSpace must be nonempty")
        object.__setattr__(self, "elements", elements)

    @classmethod
    def from_arrays(cls, f, g, h, ids=None) -> "ScoredSpace":
        ids = range(len(f)) if ids is None else ids
        return cls(tuple(zip(ids, f, g, h)))


def lemma1_region(space: ScoredSpace, a: float, b: float) -> set:
    """Identifiers x with f(x) + a*g(x) <= b*h(x).

    Given a, b >= 0 no other subset has a larger g-sum, a larger h-sum on its
    complement and at the same time a strictly smaller f-sum.
    """
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    return {ident for ident, f, g, h in space.elements if f + a * g <= b * h}


@dataclass(frozen=True)
class Region:
    n: int
    alphabet_size: int
    accepted: frozenset
    rule: RuleSpec

    def __contains__(self, t: TypeComposition) -> bool:
        return t in self.accepted

    def __len__(self):
        return len(self.accepted)

    def all_types(self):
        return iter_types(self.n, self.alphabet_size)


def slack(rule: RuleSpec, n: int, alphabet_size: int) -> float:
    """delta_n = slack_c * |X| * ln(n+1) / n."""
    return rule.slack_c * alphabet_size * math.log(n + 1) / n


def _check_known(p0: Pmf, p1: Pmf, t: TypeComposition):
    if p0.alphabet_size != p1.alphabet_size or p1.alphabet_size != t.alphabet_size:
        raise ValueError("alphabet mismatch between sources and type")
    if not p1.full_support:
        raise ValueError("p1 must have full support")


def _known_decision(l0: float, l1: float, h_emp: float, n: int, rule: RuleSpec) -> bool:
    kind = rule.kind
    if kind is RuleKind.HAT:
        code_ok = _le(-l1, n * rule.beta * (1.0 + 1.0 / rule.theta))
        llr = math.inf if l0 == -math.inf else l1 - l0
        return code_ok and _le(n * (rule.alpha - rule.beta), llr)
    if kind is RuleKind.STAR:
        lhs = logsumexp([l1 / (1.0 + rule.theta), n * rule.alpha + l0])
        return _le(lhs, n * rule.beta + l1)
    if kind is RuleKind.STAR_UNIV:
        lhs = logsumexp([
            l1 + n * rule.theta1 * h_emp,
            n * rule.alpha + l0 + n * rule.theta0 * h_emp,
        ])
        return _le(lhs, n * rule.beta + l1)
    if kind is RuleKind.EXCESS:
        if h_emp < rule.rate_R:
            # f = g = 0 here, and 0 <= b*h holds
            return True
        lhs = logsumexp([l1, n * rule.alpha + l0])
        return _le(lhs, n * rule.beta + l1)
    raise ValueError(f"{kind.value} is not a known-source rule")


def membership_known(t: TypeComposition, p0: Pmf, p1: Pmf, rule: RuleSpec) -> bool:
    """Whether sequences of type ``t`` are accepted by a known-source rule."""
    if rule.kind not in KNOWN_KINDS:
        raise ValueError(f"{rule.kind.value} is not a known-source rule")
    _check_known(p0, p1, t)
    h_emp = empirical_entropy(t)
    return _known_decision(seq_log_prob(p0, t), seq_log_prob(p1, t), h_emp, t.n, rule)


def membership_universal(
    t: TypeComposition,
    p0: Optional[Pmf],
    rule: RuleSpec,
    t0: Optional[TypeComposition] = None,
    t1: Optional[TypeComposition] = None,
) -> bool:
    """Whether sequences of type ``t`` are accepted by a universal rule."""
    kind = rule.kind
    if kind in KNOWN_KINDS:
        raise ValueError(f"{kind.value} is not a universal rule")
    n = t.n
    k = t.alphabet_size
    delta = slack(rule, n, k)
    h_emp = empirical_entropy(t)

    if kind in (RuleKind.U_KNOWN_P0, RuleKind.U_COST):
        if p0 is None:
            raise ValueError(f"{kind.value} needs p0")
        if p0.alphabet_size != k:
            raise ValueError("alphabet mismatch between p0 and type")
        if not _le(h_emp, rule.lambda1 / rule.theta1 + delta):
            return False
        div = kl_divergence(t.pmf(), p0)
        if kind is RuleKind.U_KNOWN_P0:
            return _le(rule.exp_fa - delta, div)
        return _le(rule.theta0 * h_emp - div, rule.lambda0 + delta)

    if kind is RuleKind.U_BLIND:
        cap = min(rule.lambda0 / rule.theta0, rule.lambda1 / rule.theta1)
        return _le(h_emp, cap + delta)

    # U_TRAINING
    if t0 is None or t1 is None:
        raise ValueError("U_TRAINING needs both training types t0 and t1")
    if t0.alphabet_size != k or t1.alphabet_size != k:
        raise ValueError("alphabet mismatch between training types and type")
    m = t0.n
    if t1.n != m or (rule.m is not None and rule.m != m):
        raise ValueError("training sequences must both have length m")
    for theta_i, lam_i, ti in ((rule.theta0, rule.lambda0, t0), (rule.theta1, rule.lambda1, t1)):
        stat = training_statistic(t, ti, theta_i)
        if not _le(stat, lam_i + delta):
            return False
    return True


def training_statistic(t: TypeComposition, ti: TypeComposition, theta_i: float) -> float:
    """theta*H(x) - D(P_x||P_xxi) - (m/n) D(P_xi||P_xxi), P_xxi the pooled type."""
    n, m = t.n, ti.n
    pooled = TypeComposition(tuple(a + b for a, b in zip(t.counts, ti.counts))).pmf()
    return (
        theta_i * empirical_entropy(t)
        - kl_divergence(t.pmf(), pooled)
        - (m / n) * kl_divergence(ti.pmf(), pooled)
    )


def membership(
    t: TypeComposition,
    rule: RuleSpec,
    p0: Optional[Pmf] = None,
    p1: Optional[Pmf] = None,
    t0: Optional[TypeComposition] = None,
    t1: Optional[TypeComposition] = None,
) -> bool:
    """Dispatch to the known-source or universal predicate."""
    if rule.kind in KNOWN_KINDS:
        if p0 is None or p1 is None:
            raise ValueError(f"{rule.kind.value} needs both p0 and p1")
        return membership_known(t, p0, p1, rule)
    return membership_universal(t, p0, rule, t0, t1)


def membership_sequence(
    x: Sequence[int],
    rule: RuleSpec,
    p0: Optional[Pmf] = None,
    p1: Optional[Pmf] = None,
    t0: Optional[TypeComposition] = None,
    t1: Optional[TypeComposition] = None,
    alphabet_size: Optional[int] = None,
) -> bool:
    """Sequence-level decision.

    Known-source rules accumulate log-likelihoods symbol by symbol instead of
    going through the type, so agreement with :func:`membership` is a real
    check of type-measurability.
    """
    if alphabet_size is None:
        src = p1 if p1 is not None else p0
        if src is None:
            raise ValueError("alphabet_size is required when no source is given")
        alphabet_size = src.alphabet_size
    t = empirical_type(x, alphabet_size)
    if rule.kind not in KNOWN_KINDS:
        return membership_universal(t, p0, rule, t0, t1)
    if p0 is None or p1 is None:
        raise ValueError(f"{rule.kind.value} needs both p0 and p1")
    _check_known(p0, p1, t)
    l0 = 0.0
    l1 = 0.0
    for sym in x:
        l1 += math.log(p1.probs[sym])
        l0 = l0 + math.log(p0.probs[sym]) if p0.probs[sym] > 0 else -math.inf
    return _known_decision(l0, l1, empirical_entropy(t), len(x), rule)


def materialize_region(
    rule: RuleSpec,
    p0: Optional[Pmf],
    p1: Optional[Pmf],
    n: int,
    alphabet_size: Optional[int] = None,
    t0: Optional[TypeComposition] = None,
    t1: Optional[TypeComposition] = None,
    cap: int = DEFAULT_TYPE_CAP,
) -> Region:
    """Enumerate every type of length n and keep the accepted ones."""
    if alphabet_size is None:
        src = p1 if p1 is not None else p0
        if src is None:
            raise ValueError("alphabet_size is required when no source is given")
        alphabet_size = src.alphabet_size
    total = count_types(n, alphabet_size)
    if total > cap:
        raise ValueError(
            f"{total} types for n={n}, |X|={alphabet_size} exceeds the cap of {cap}"
        )
    accepted = frozenset(
        t for t in iter_types(n, alphabet_size)
        if membership(t, rule, p0, p1, t0, t1)
    )
    return Region(n, alphabet_size, accepted, rule)


def region_from_types(n: int, alphabet_size: int, types: Iterable, rule: RuleSpec) -> Region:
    """Region over an explicit collection of types (count tuples or compositions)."""
    accepted = []
    for t in types:
        t = t if isinstance(t, TypeComposition) else TypeComposition(tuple(t))
        if t.n != n or t.alphabet_size != alphabet_size:
            raise ValueError(f"type {t.counts} does not match n={n}, |X|={alphabet_size}")
        accepted.append(t)
    return Region(n, alphabet_size, frozenset(accepted), rule)
