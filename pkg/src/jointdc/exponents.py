"""Error-exponent calculus.

Constrained minimization of D(Q||P) over the simplex through tilted families
Q_s(x) ~ P(x) exp(-s . c(x)), the compression exponent, exponent inverses, the
(alpha, beta) planner and a brute-force grid oracle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, linprog, minimize
from scipy.special import logsumexp

from .core import ExponentResult, Pmf, entropy, kl_divergence

MOMENT_TOL = 1e-10
CONSTRAINT_TOL = 1e-9
NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 200
MULTIPLIER_CAP = 2.0 ** 60


@dataclass(frozen=True)
class LinearConstraint:
    """E_Q c(X) <= bound.

    Coefficients may be +inf (the symbol is then excluded from any feasible Q)
    or -inf on symbols outside the support of the reference PMF.
    """

    coeffs: tuple
    bound: float

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if any(math.isnan(c) for c in coeffs):
            raise ValueError("NaN coefficient")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "bound", float(self.bound))

    def moment(self, q) -> float:
        q = np.asarray(q, dtype=float)
        c = np.asarray(self.coeffs)
        mask = q > 0
        return float(np.sum(q[mask] * c[mask]))

    def satisfied(self, q, tol: float = CONSTRAINT_TOL) -> bool:
        return self.moment(q) <= self.bound + tol


def _log(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def _kl(q: np.ndarray, p: np.ndarray) -> float:
    mask = q > 0
    if np.any(p[mask] == 0):
        return math.inf
    return max(math.fsum(q[mask] * (np.log(q[mask]) - np.log(p[mask]))), 0.0)


def _softmax(logw: np.ndarray) -> np.ndarray:
    top = np.max(logw)
    w = np.exp(logw - top)
    return w / w.sum()


class _Support(NamedTuple):
    idx: np.ndarray       # symbols usable by Q
    logp: np.ndarray      # ln p on idx
    coeffs: np.ndarray    # constraint rows restricted to idx, shape (r, |idx|)
    lost_mass: float      # p-mass on symbols forced to zero


def _support(p: Pmf, constraints: Sequence[LinearConstraint]) -> _Support:
    probs = np.asarray(p.probs)
    rows = np.array([c.coeffs for c in constraints], dtype=float).reshape(len(constraints), -1)
    if rows.shape[1] != p.alphabet_size:
        raise ValueError("constraint and PMF alphabets differ")
    on = probs > 0
    if np.any(np.isneginf(rows[:, on])):
        raise ValueError("-inf coefficient on a symbol inside the support")
    usable = on & np.all(np.isfinite(rows), axis=0)
    idx = np.flatnonzero(usable)
    lost = float(probs[on & ~usable].sum())
    return _Support(idx, np.log(probs[idx]), rows[:, idx], lost)


def _embed(q_sub: np.ndarray, idx: np.ndarray, size: int) -> Pmf:
    q = np.zeros(size)
    q[idx] = q_sub
    return Pmf(tuple(q / q.sum()))


def min_kl_linear(p: Pmf, c: LinearConstraint) -> ExponentResult:
    """min D(Q||p) subject to E_Q c(X) <= bound.

    The optimizer is p itself when feasible, otherwise a member of the family
    Q_s ~ p exp(-s c) with s >= 0 found by bisection, or a point mass on the
    minimizing symbols when the bound sits at min c.
    """
    sup = _support(p, [c])
    if sup.idx.size == 0:
        return ExponentResult(math.inf, None, (math.nan,), (True,), False)
    cs = sup.coeffs[0]
    size = p.alphabet_size
    probs = np.asarray(p.probs)
    bound = c.bound

    base = _softmax(sup.logp)
    m0 = float(base @ cs)
    if m0 <= bound:
        q = _embed(base, sup.idx, size)
        value = -math.log1p(-sup.lost_mass) if sup.lost_mass > 0 else 0.0
        return ExponentResult(value, q, (0.0,), (sup.lost_mass > 0,), True)

    cmin = float(cs.min())
    scale = max(1.0, abs(cmin), abs(bound))
    if bound < cmin - MOMENT_TOL * scale:
        return ExponentResult(math.inf, None, (math.nan,), (True,), False)
    if bound <= cmin + 1e-15 * scale:
        return _vertex(probs, sup, cs, size)

    def excess(s):
        return float(_softmax(sup.logp - s * cs) @ cs) - bound

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
        if hi > MULTIPLIER_CAP:
            return _vertex(probs, sup, cs, size)
    s = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    q_sub = _softmax(sup.logp - s * cs)
    q = _embed(q_sub, sup.idx, size)
    return ExponentResult(_kl(np.asarray(q.probs), probs), q, (s,), (True,), True)


def _vertex(probs, sup: _Support, cs: np.ndarray, size: int) -> ExponentResult:
    cmin = cs.min()
    at_min = np.isclose(cs, cmin, rtol=1e-13, atol=1e-13)
    w = np.where(at_min, np.exp(sup.logp), 0.0)
    q = _embed(w / w.sum(), sup.idx, size)
    return ExponentResult(_kl(np.asarray(q.probs), probs), q, (math.inf,), (True,), True)


def _newton_both(logp: np.ndarray, C: np.ndarray, b: np.ndarray):
    """Solve E_{Q_s} C = b for Q_s ~ p exp(-s . C) by damped Newton.

    The moment residual is the gradient of the convex dual
    phi(s) = ln sum p exp(-s . C) + s . b, so steps are halved until phi
    decreases enough (Armijo); a plain residual test can stall when a full
    step overshoots onto a vertex. Returns (s, q) or None when the system is
    singular or has no solution.
    """
    s = np.zeros(2)

    def phi(s):
        z = logp - s @ C
        top = z.max()
        return top + math.log(np.exp(z - top).sum()) + s @ b

    q = _softmax(logp)
    mean = C @ q
    res = mean - b
    val = phi(s)
    for _ in range(NEWTON_MAX_ITER):
        if np.linalg.norm(res) <= 1e-13 * max(1.0, np.abs(b).max()):
            break
        centered = C - mean[:, None]
        cov = (centered * q) @ centered.T
        if np.linalg.cond(cov) > 1e12:
            return None
        step = np.linalg.solve(cov, res)
        slope = -float(res @ step)
        t = 1.0
        while t > 1e-12:
            cand = s + t * step
            cand_val = phi(cand)
            if cand_val <= val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        s, val = cand, cand_val
        q = _softmax(logp - s @ C)
        mean = C @ q
        res = mean - b
    if np.linalg.norm(res) > NEWTON_TOL or not np.all(np.isfinite(s)):
        return None
    return s, q


def _dual_bounded(logp: np.ndarray, C: np.ndarray, b: np.ndarray):
    """Minimize the dual phi over s >= 0 with L-BFGS-B.

    Used when the feasible set is so thin that the multipliers are huge and
    Newton's covariance is singular. Returns (s, q) or None if the resulting
    tilt misses the constraints by more than NEWTON_TOL.
    """
    def phi(s):
        z = logp - s @ C
        norm = logsumexp(z)
        return norm + s @ b, b - C @ np.exp(z - norm)

    res = minimize(phi, np.zeros(len(b)), jac=True, method="L-BFGS-B",
                   bounds=[(0.0, None)] * len(b),
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000})
    z = logp - res.x @ C
    q = np.exp(z - logsumexp(z))
    if np.any(C @ q - b > NEWTON_TOL) or not np.all(np.isfinite(res.x)):
        return None
    return res.x, q


def _jointly_feasible(p: Pmf, constraints: Sequence[LinearConstraint]) -> bool:
    sup = _support(p, constraints)
    if sup.idx.size == 0:
        return False
    m = sup.idx.size
    res = linprog(
        np.zeros(m),
        A_ub=sup.coeffs,
        b_ub=np.array([c.bound for c in constraints]) + CONSTRAINT_TOL,
        A_eq=np.ones((1, m)),
        b_eq=[1.0],
        bounds=[(0, None)] * m,
        method="highs",
    )
    return res.status == 0


def min_kl_two_linear(p: Pmf, c1: LinearConstraint, c2: LinearConstraint) -> ExponentResult:
    """min D(Q||p) subject to two linear moment constraints.

    Active-set enumeration: neither, only c1, only c2, both. The feasible
    candidate with the smallest divergence wins. A nearly degenerate feasible
    set falls back to a bounded solve of the dual.
    """
    probs = np.asarray(p.probs)
    size = p.alphabet_size
    both = (c1, c2)
    candidates = []

    sup = _support(p, both)
    if sup.idx.size and sup.lost_mass == 0:
        if c1.satisfied(probs, 0.0) and c2.satisfied(probs, 0.0):
            return ExponentResult(0.0, p, (0.0, 0.0), (False, False), True)

    r1 = min_kl_linear(p, c1)
    if r1.feasible and c2.satisfied(r1.q_opt.probs):
        candidates.append(ExponentResult(r1.value, r1.q_opt, (r1.multipliers[0], 0.0),
                                         (r1.active[0], False), True))
    r2 = min_kl_linear(p, c2)
    if r2.feasible and c1.satisfied(r2.q_opt.probs):
        candidates.append(ExponentResult(r2.value, r2.q_opt, (0.0, r2.multipliers[0]),
                                         (False, r2.active[0]), True))

    if sup.idx.size >= 3:
        b = np.array([c1.bound, c2.bound])
        solved = _newton_both(sup.logp, sup.coeffs, b)
        if solved is not None:
            s, q_sub = solved
            if np.all(s >= -1e-9):
                q = _embed(q_sub, sup.idx, size)
                candidates.append(ExponentResult(
                    _kl(np.asarray(q.probs), probs), q, (float(s[0]), float(s[1])),
                    (True, True), True))

    if candidates:
        return min(candidates, key=lambda r: r.value)
    if not _jointly_feasible(p, both):
        return ExponentResult(math.inf, None, (math.nan, math.nan), (True, True), False)
    solved = _dual_bounded(sup.logp, sup.coeffs, np.array([c1.bound, c2.bound]))
    if solved is not None:
        s, q_sub = solved
        q = _embed(q_sub, sup.idx, size)
        return ExponentResult(_kl(np.asarray(q.probs), probs), q, (float(s[0]), float(s[1])),
                              (bool(s[0] > 0), bool(s[1] > 0)), True)
    raise RuntimeError(
        "active-set solver found no candidate for a feasible two-constraint program "
        f"(p={p.probs}, bounds={c1.bound}, {c2.bound})"
    )


# ---------------------------------------------------------------------------
# named exponents


def _require_full_support(p: Pmf, name: str):
    if not p.full_support:
        raise ValueError(f"{name} must have full support")


def _log_ratio(p1: Pmf, p0: Pmf) -> np.ndarray:
    """ln(p1/p0) per symbol, +inf where p0 = 0."""
    return _log(p1.probs) - _log(p0.probs)


def e1_constraint(p1: Pmf, theta: float, beta: float) -> LinearConstraint:
    return LinearConstraint(tuple(p1.logs()), -beta * (1.0 + 1.0 / theta))


def e2_constraint(p0: Pmf, p1: Pmf, t: float) -> LinearConstraint:
    return LinearConstraint(tuple(_log_ratio(p1, p0)), t)


def exponent_e1(p1: Pmf, theta: float, beta: float) -> ExponentResult:
    """min D(Q||P1) s.t. E_Q ln P1 <= -beta (1 + 1/theta)."""
    _require_full_support(p1, "p1")
    return min_kl_linear(p1, e1_constraint(p1, theta, beta))


def exponent_e2(p0: Pmf, p1: Pmf, t: float) -> ExponentResult:
    """min D(Q||P1) s.t. E_Q ln(P1/P0) <= t, with t = alpha - beta."""
    _require_full_support(p1, "p1")
    return min_kl_linear(p1, e2_constraint(p0, p1, t))


def exponent_e_md(p0: Pmf, p1: Pmf, theta: float, alpha: float, beta: float) -> ExponentResult:
    """Misdetection exponent min{e1(beta), e2(alpha - beta)}."""
    r1 = exponent_e1(p1, theta, beta)
    r2 = exponent_e2(p0, p1, alpha - beta)
    best, branch = (r1, "e1") if r1.value <= r2.value else (r2, "e2")
    return ExponentResult(
        best.value,
        best.q_opt,
        (r1.multipliers[0], r2.multipliers[0]),
        (r1.active[0], r2.active[0]),
        best.feasible,
        branch,
    )


def acceptance_constraints(p0: Pmf, p1: Pmf, theta: float, alpha: float, beta: float):
    """The two moment conditions describing the accepted types, in <= form.

    -E_Q ln P1 <= beta (1 + 1/theta) and E_Q ln(P0/P1) <= beta - alpha.
    """
    _require_full_support(p1, "p1")
    c1 = LinearConstraint(tuple(-p1.logs()), beta * (1.0 + 1.0 / theta))
    c2 = LinearConstraint(tuple(_log(p0.probs) - p1.logs()), beta - alpha)
    return c1, c2


def exponent_e_fa(p0: Pmf, p1: Pmf, theta: float, alpha: float, beta: float) -> ExponentResult:
    """False-alarm exponent: min D(Q||P0) over the accepted moment set."""
    c1, c2 = acceptance_constraints(p0, p1, theta, alpha, beta)
    return min_kl_two_linear(p0, c1, c2)


def exponent_e_c(p0: Pmf, p1: Pmf, theta: float, alpha: float, beta: float) -> ExponentResult:
    """Compression exponent max{theta H(Q) - D(Q||P1)} over the accepted moment set.

    The objective equals (1+theta) [ln Z - D(Q||P~)] with P~ ~ P1**(1/(1+theta))
    and Z its normalizer, so it reduces to a two-constraint KL projection.
    Multipliers are reported on the scale of that projection.
    """
    _require_full_support(p0, "p0")
    c1, c2 = acceptance_constraints(p0, p1, theta, alpha, beta)
    logs = p1.logs() / (1.0 + theta)
    top = logs.max()
    log_z = top + math.log(np.exp(logs - top).sum())
    tilted = Pmf(tuple(_softmax(logs)))
    proj = min_kl_two_linear(tilted, c1, c2)
    if not proj.feasible:
        return ExponentResult(-math.inf, None, proj.multipliers, proj.active, False)
    value = (1.0 + theta) * (log_z - proj.value)
    return ExponentResult(value, proj.q_opt, proj.multipliers, proj.active, True)


def compression_objective(q: Pmf, p1: Pmf, theta: float) -> float:
    """theta H(Q) - D(Q||P1)."""
    return theta * entropy(q) - kl_divergence(q, p1)


# ---------------------------------------------------------------------------
# inverses and planning


class ExponentKind(str, enum.Enum):
    E1 = "E1"
    E2 = "E2"
    EFA = "EFA"


class ExponentRangeError(ValueError):
    """Target exponent outside what the branch can attain."""

    def __init__(self, which, target, lo, hi):
        self.which, self.target, self.lo, self.hi = which, target, lo, hi
        super().__init__(f"{which} target {target!r} outside attainable range [{lo!r}, {hi!r}]")


def e1_branch(p1: Pmf, theta: float):
    """(beta_lo, beta_hi, e_max): e1 rises from 0 to e_max on [beta_lo, beta_hi]."""
    _require_full_support(p1, "p1")
    k = theta / (1.0 + theta)
    lo = k * entropy(p1)
    pmin = min(p1.probs)
    hi = -k * math.log(pmin)
    mass = math.fsum(x for x in p1.probs if x <= pmin * (1 + 1e-13))
    return lo, hi, -math.log(mass)


def e2_branch(p0: Pmf, p1: Pmf):
    """(t_lo, t_hi, e_max): e2 falls from e_max to 0 on [t_lo, t_hi]."""
    _require_full_support(p0, "p0")
    _require_full_support(p1, "p1")
    ratio = _log_ratio(p1, p0)
    lo = float(ratio.min())
    hi = kl_divergence(p1, p0)
    at_min = np.isclose(ratio, lo, rtol=1e-13, atol=1e-13)
    return lo, hi, -math.log(float(np.asarray(p1.probs)[at_min].sum()))


def efa_branch(p0: Pmf, p1: Pmf, theta: float, t: float):
    """Strictly monotone branch of beta -> e_FA(beta) at fixed alpha - beta = t.

    Returns (beta_min, beta_star, e_max, e_floor): e_FA falls from e_max at
    beta_min (the smallest jointly feasible beta) to e_floor at beta_star and
    stays there for larger beta.
    """
    _require_full_support(p0, "p0")
    _require_full_support(p1, "p1")
    k = 1.0 + 1.0 / theta
    c2 = LinearConstraint(tuple(_log(p0.probs) - p1.logs()), -t)
    floor_res = min_kl_linear(p0, c2)
    if not floor_res.feasible:
        raise ExponentRangeError(ExponentKind.EFA, math.nan, math.inf, math.inf)
    beta_star = -float(np.asarray(floor_res.q_opt.probs) @ p1.logs()) / k
    lp = linprog(
        -p1.logs(),
        A_ub=np.asarray(c2.coeffs)[None, :],
        b_ub=[c2.bound],
        A_eq=np.ones((1, p0.alphabet_size)),
        b_eq=[1.0],
        bounds=[(0, None)] * p0.alphabet_size,
        method="highs",
    )
    beta_min = lp.fun / k
    probe = beta_min + 1e-11 * max(1.0, abs(beta_min))
    e_max = exponent_e_fa(p0, p1, theta, probe + t, probe).value
    return beta_min, beta_star, e_max, floor_res.value


def invert_exponent(
    which,
    target: float,
    p0: Optional[Pmf] = None,
    p1: Optional[Pmf] = None,
    theta: float = 1.0,
    t: Optional[float] = None,
) -> float:
    """Argument at which an exponent equals ``target``.

    E1 and EFA return beta; E2 returns t = alpha - beta. EFA needs the fixed
    ``t``. Bisection runs on the strictly monotone branch only.
    """
    which = ExponentKind(which)
    if target < 0:
        raise ValueError("target must be nonnegative")
    xtol = 1e-13

    if which is ExponentKind.E1:
        lo, hi, e_max = e1_branch(p1, theta)
        if target == 0:
            return lo
        if target > e_max + 1e-12:
            raise ExponentRangeError(which, target, 0.0, e_max)
        if target >= e_max - 1e-12:
            return hi
        return brentq(lambda b: exponent_e1(p1, theta, b).value - target, lo, hi, xtol=xtol)

    if which is ExponentKind.E2:
        lo, hi, e_max = e2_branch(p0, p1)
        if target == 0:
            return hi
        if target > e_max + 1e-12:
            raise ExponentRangeError(which, target, 0.0, e_max)
        if target >= e_max - 1e-12:
            return lo
        return brentq(lambda x: exponent_e2(p0, p1, x).value - target, lo, hi, xtol=xtol)

    if t is None:
        raise ValueError("EFA inversion needs t = alpha - beta")
    beta_min, beta_star, e_max, e_floor = efa_branch(p0, p1, theta, t)
    if target > e_max + 1e-12 or target < e_floor - 1e-12:
        raise ExponentRangeError(which, target, e_floor, e_max)
    if target <= e_floor + 1e-12:
        return beta_star
    lo = beta_min + 1e-11 * max(1.0, abs(beta_min))
    if target >= e_max - 1e-12:
        return lo
    return brentq(
        lambda b: exponent_e_fa(p0, p1, theta, b + t, b).value - target,
        lo, beta_star, xtol=xtol,
    )


class Plan(NamedTuple):
    alpha: float
    beta: float
    e_fa_inv: float
    e2_inv: float
    e1_inv: float
    feasible: bool
    margin: float


def plan_parameters(E_FA: float, E_MD: float, theta: float, p0: Pmf, p1: Pmf) -> Plan:
    """Assign alpha = e_FA^-1(E_FA) + e2^-1(E_MD) and beta = e_FA^-1(E_FA).

    Feasible iff e_FA^-1(E_FA) >= e1^-1(E_MD); ``margin`` is the difference.
    Targets beyond what an exponent can reach make the plan infeasible rather
    than raising. When E_FA is below the FA floor every beta on the branch meets
    it, so beta is the smallest one past the branch edge that also meets E_MD.
    """
    if not (E_FA > 0 and E_MD > 0):
        raise ValueError("E_FA and E_MD must be positive")
    nan = math.nan
    try:
        e2_inv = invert_exponent(ExponentKind.E2, E_MD, p0, p1, theta)
        e1_inv = invert_exponent(ExponentKind.E1, E_MD, p0, p1, theta)
    except ExponentRangeError:
        return Plan(nan, nan, nan, nan, nan, False, -math.inf)
    try:
        fa_inv = invert_exponent(ExponentKind.EFA, E_FA, p0, p1, theta, t=e2_inv)
    except ExponentRangeError as err:
        if err.target < err.lo:
            fa_inv = max(efa_branch(p0, p1, theta, e2_inv)[1], e1_inv)
        else:
            return Plan(nan, nan, nan, e2_inv, e1_inv, False, -math.inf)
    margin = fa_inv - e1_inv
    return Plan(fa_inv + e2_inv, fa_inv, fa_inv, e2_inv, e1_inv, margin >= -1e-12, margin)


# ---------------------------------------------------------------------------
# grid oracle


class OracleObjective(str, enum.Enum):
    KL_MIN = "KL_MIN"
    EC_MAX = "EC_MAX"


def simplex_grid(alphabet_size: int, resolution: int) -> np.ndarray:
    """All points k/resolution of the simplex, one per row."""
    r = resolution
    if alphabet_size == 2:
        k = np.arange(r + 1)
        return np.stack([r - k, k], axis=1) / r
    if alphabet_size == 3:
        i, j = np.triu_indices(r + 1)
        # i <= j; map to (i, j - i, r - j)
        return np.stack([i, j - i, r - j], axis=1) / r
    raise ValueError(f"grid oracle supports alphabets of size 2 or 3, not {alphabet_size}")


def simplex_grid_oracle(
    p: Pmf,
    constraints: Sequence[LinearConstraint],
    objective="KL_MIN",
    resolution: int = 2000,
    theta: Optional[float] = None,
) -> float:
    """Brute-force optimum over rational grid points of the simplex.

    KL_MIN minimizes D(q||p); EC_MAX maximizes theta H(q) - D(q||p). Returns
    +inf / -inf when no grid point is feasible.
    """
    objective = OracleObjective(objective)
    k = p.alphabet_size
    limit = 5000 if k == 2 else 400
    if resolution > limit or resolution < 1:
        raise ValueError(f"resolution must be in [1, {limit}] for |X|={k}")
    Q = simplex_grid(k, resolution)
    pos = Q > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logq = np.where(pos, np.log(np.where(pos, Q, 1.0)), 0.0)
        logp = _log(p.probs)
        cross = np.where(pos, Q * logp, 0.0)
        div = np.sum(np.where(pos, Q * logq, 0.0) - cross, axis=1)
        ok = np.ones(len(Q), dtype=bool)
        for c in constraints:
            coeffs = np.asarray(c.coeffs)
            mom = np.sum(np.where(pos, Q * coeffs, 0.0), axis=1)
            ok &= mom <= c.bound + 1e-12
    div = np.where(np.isnan(div), math.inf, div)
    if objective is OracleObjective.KL_MIN:
        vals = div[ok]
        return float(vals.min()) if vals.size else math.inf
    if theta is None:
        raise ValueError("EC_MAX needs theta")
    ent = -np.sum(np.where(pos, Q * logq, 0.0), axis=1)
    vals = (theta * ent - div)[ok]
    return float(vals.max()) if vals.size else -math.inf
