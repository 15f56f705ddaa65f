import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import ORACLE
from jointdc.core import Pmf, entropy, kl_divergence
from jointdc.exponents import (
    ExponentKind,
    ExponentRangeError,
    LinearConstraint,
    acceptance_constraints,
    compression_objective,
    e1_branch,
    e1_constraint,
    e2_branch,
    e2_constraint,
    efa_branch,
    exponent_e1,
    exponent_e2,
    exponent_e_c,
    exponent_e_fa,
    exponent_e_md,
    invert_exponent,
    min_kl_linear,
    min_kl_two_linear,
    plan_parameters,
    simplex_grid,
    simplex_grid_oracle,
)

LOG_RATIO = (math.log(0.5), math.log(1.5))  # ln(P1/P0) of the binary example


def rand_pmf(rng, k):
    return Pmf(tuple(rng.dirichlet(np.ones(k))))


def slsqp_min_kl(p, constraints, starts=20):
    """Independent reference: SLSQP over the simplex from several starts."""
    probs = np.asarray(p.probs)
    k = len(probs)

    def obj(q):
        q = np.clip(q, 1e-300, None)
        return float(np.sum(q * np.log(q / probs)))

    cons = [{"type": "eq", "fun": lambda q: q.sum() - 1.0}]
    cons += [{"type": "ineq", "fun": lambda q, c=c: c.bound - np.dot(q, c.coeffs)} for c in constraints]
    rng = np.random.default_rng(0)
    best = math.inf
    for _ in range(starts):
        res = minimize(obj, rng.dirichlet(np.ones(k)), constraints=cons, bounds=[(1e-15, 1.0)] * k,
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        if res.success and all(c.bound - np.dot(res.x, c.coeffs) > -1e-9 for c in constraints):
            best = min(best, res.fun)
    return best


class TestSingleConstraint:
    def test_slack_constraint_returns_reference(self, p1):
        r = min_kl_linear(p1, LinearConstraint(p1.logs(), 0.0))
        assert r.value == 0.0 and r.active == (False,)
        assert r.q_opt.probs == pytest.approx(p1.probs, abs=1e-15)

    def test_e1_example(self, p1):
        r = exponent_e1(p1, 1.0, 0.4)
        assert r.value == pytest.approx(ORACLE["e1_value"], abs=1e-10)
        assert r.q_opt.probs[0] == pytest.approx(ORACLE["e1_q0"], abs=1e-9)
        assert r.multipliers[0] == pytest.approx(1 - ORACLE["e1_lambda"], abs=1e-8)
        assert r.active == (True,)

    def test_e2_chernoff_point(self, p0, p1):
        r = exponent_e2(p0, p1, 0.0)
        q = r.q_opt
        assert r.value == pytest.approx(ORACLE["e2_zero"], abs=1e-10)
        assert q.probs[1] == pytest.approx(ORACLE["q_chernoff"], abs=1e-10)
        assert abs(kl_divergence(q, p0) - kl_divergence(q, p1)) < 1e-9

    def test_infeasible_bound(self, p1):
        r = min_kl_linear(p1, LinearConstraint((1.0, 2.0), 0.5))
        assert not r.feasible and r.value == math.inf and r.q_opt is None

    def test_bound_at_minimum_gives_vertex(self, p1):
        r = min_kl_linear(p1, LinearConstraint((1.0, 2.0), 1.0))
        assert r.q_opt.probs == (1.0, 0.0)
        assert r.value == pytest.approx(-math.log(0.25))

    def test_infinite_coefficient_excludes_symbol(self):
        p = Pmf((0.2, 0.3, 0.5))
        r = min_kl_linear(p, LinearConstraint((0.0, 1.0, math.inf), 0.5))
        assert r.q_opt.probs[2] == 0.0
        assert r.feasible

    def test_constraint_satisfied_within_tolerance(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = rand_pmf(rng, 4)
            c = LinearConstraint(tuple(rng.normal(size=4)), 0.0)
            lo, hi = min(c.coeffs), float(np.dot(p.probs, c.coeffs))
            c = LinearConstraint(c.coeffs, rng.uniform(lo, hi) if lo < hi else hi)
            r = min_kl_linear(p, c)
            assert c.moment(r.q_opt) <= c.bound + 1e-8


class TestTwoConstraints:
    def test_reference_feasible(self, p0, p1):
        # beta (1 + 1/theta) = 0.9 >= 0.836988 and beta - alpha = 0.2 >= D(P0||P1)
        r = exponent_e_fa(p0, p1, 1.0, 0.25, 0.45)
        assert r.value == 0.0 and r.active == (False, False)

    def test_example(self, p0, p1):
        r = exponent_e_fa(p0, p1, 1.0, 0.6, 0.5)
        assert r.value == pytest.approx(ORACLE["efa_example"], abs=1e-10)
        assert r.q_opt.probs[1] == pytest.approx(ORACLE["q_example"], abs=1e-9)
        assert r.active == (False, True)
        assert r.multipliers[0] == 0.0

    def test_only_likelihood_constraint_gives_chernoff(self, p0, p1):
        c1 = LinearConstraint((0.0, 0.0), 1.0)
        c2 = LinearConstraint((-LOG_RATIO[0], -LOG_RATIO[1]), 0.0)
        r = min_kl_two_linear(p0, c1, c2)
        assert r.value == pytest.approx(ORACLE["e2_zero"], abs=1e-10)
        assert r.active == (False, True)

    def test_jointly_infeasible(self):
        p = Pmf((0.3, 0.3, 0.4))
        c1 = LinearConstraint((0.0, 1.0, 2.0), 0.5)
        c2 = LinearConstraint((0.0, -1.0, -2.0), -1.5)
        r = min_kl_two_linear(p, c1, c2)
        assert not r.feasible and r.value == math.inf

    def test_both_active_regression(self):
        # a full Newton step lands on a vertex here; damping must recover
        p = Pmf((0.01450148005705752, 0.35173726105397307, 0.6337612588889694))
        c1 = LinearConstraint((0.49079114666662754, 2.427663800295201, 1.205255804240102),
                              0.8133827317019335)
        c2 = LinearConstraint((-3.7427134151975463, 1.3827930007426479, 0.7491728455108304),
                              -1.880956070716091)
        r = min_kl_two_linear(p, c1, c2)
        assert r.active == (True, True)
        assert r.value == pytest.approx(slsqp_min_kl(p, [c1, c2]), abs=1e-7)

    @pytest.mark.parametrize("eps", [1e-11, 1e-8, 1e-5])
    def test_thin_feasible_set(self, eps):
        # just past the smallest feasible beta the multipliers are in the hundreds
        rng = np.random.default_rng(1)
        p0, p1 = rand_pmf(rng, 3), rand_pmf(rng, 3)
        theta = rng.uniform(0.5, 2)
        t = rng.uniform(*e2_branch(p0, p1)[:2])
        beta = efa_branch(p0, p1, theta, t)[0] + eps
        cs = acceptance_constraints(p0, p1, theta, beta + t, beta)
        r = min_kl_two_linear(p0, *cs)
        assert r.feasible
        assert all(c.moment(r.q_opt) <= c.bound + 1e-8 for c in cs)
        assert r.value == pytest.approx(slsqp_min_kl(p0, cs), abs=1e-7)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_independent_solver(self, seed):
        rng = np.random.default_rng(100 + seed)
        for _ in range(8):
            k = int(rng.integers(3, 6))
            p0, p1 = rand_pmf(rng, k), rand_pmf(rng, k)
            theta = rng.uniform(0.3, 3)
            q = rng.dirichlet(np.ones(k))
            c1, c2 = acceptance_constraints(p0, p1, theta, 0.0, 0.0)
            beta = (c1.moment(q) + rng.uniform(0, 0.3)) / (1 + 1 / theta)
            alpha = beta - c2.moment(q) - rng.uniform(0, 0.3)
            r = exponent_e_fa(p0, p1, theta, alpha, beta)
            ref = slsqp_min_kl(p0, acceptance_constraints(p0, p1, theta, alpha, beta))
            assert r.value == pytest.approx(ref, abs=1e-7)


class TestKKT:
    @pytest.mark.parametrize("seed", range(5))
    def test_stationarity(self, seed):
        rng = np.random.default_rng(seed)
        k = 4
        p0, p1 = rand_pmf(rng, k), rand_pmf(rng, k)
        theta = rng.uniform(0.5, 2)
        q = rng.dirichlet(np.ones(k))
        c1, c2 = acceptance_constraints(p0, p1, theta, 0.0, 0.0)
        beta = c1.moment(q) / (1 + 1 / theta)
        alpha = beta - c2.moment(q)
        r = exponent_e_fa(p0, p1, theta, alpha, beta)
        cs = acceptance_constraints(p0, p1, theta, alpha, beta)
        qo = np.asarray(r.q_opt.probs)
        grad = np.log(qo / np.asarray(p0.probs))
        for s, c in zip(r.multipliers, cs):
            grad = grad + s * np.asarray(c.coeffs)
        assert np.ptp(grad) < 1e-6
        for s, active in zip(r.multipliers, r.active):
            assert s >= -1e-9
            if not active:
                assert s == 0.0


class TestNamedExponents:
    def test_md_zero_at_e1_edge(self, p0, p1):
        beta = ORACLE["H_p1"] / 2
        r = exponent_e_md(p0, p1, 1.0, beta - 0.1, beta)
        assert r.value == pytest.approx(0.0, abs=1e-12)

    def test_md_e2_branch(self, p0, p1):
        r = exponent_e_md(p0, p1, 1.0, 3.0, 3.0)
        assert r.branch == "e2"
        assert r.value == pytest.approx(ORACLE["e2_zero"], abs=1e-10)

    def test_md_example(self, p0, p1):
        r = exponent_e_md(p0, p1, 1.0, 0.6, 0.5)
        assert r.value == pytest.approx(ORACLE["emd_example"], abs=1e-10)
        expected = min(exponent_e1(p1, 1.0, 0.5).value, exponent_e2(p0, p1, 0.1).value)
        assert r.value == pytest.approx(expected, abs=1e-14)

    def test_compression_unconstrained(self, p0, p1):
        r = exponent_e_c(p0, p1, 1.0, -5.0, 5.0)
        assert r.value == pytest.approx(ORACLE["ec_free"], abs=1e-12)
        assert compression_objective(r.q_opt, p1, 1.0) == pytest.approx(r.value, abs=1e-12)

    def test_compression_small_theta(self, p0, p1):
        r = exponent_e_c(p0, p1, 1e-6, -5.0, 50.0)
        assert abs(r.value) < 1e-5
        assert r.q_opt.probs == pytest.approx(p1.probs, abs=1e-5)

    def test_compression_binding_constraint(self, p0, p1):
        # the free maximizer has E ln(P0/P1) = -0.0034; ask for at most -0.1
        alpha, beta = 5.1, 5.0
        r = exponent_e_c(p0, p1, 1.0, alpha, beta)
        assert r.value < ORACLE["ec_free"] - 1e-3
        assert r.active == (False, True)
        cs = acceptance_constraints(p0, p1, 1.0, alpha, beta)
        assert cs[1].moment(r.q_opt) == pytest.approx(-0.1, abs=1e-9)
        grid = simplex_grid_oracle(p1, cs, "EC_MAX", 2000, theta=1.0)
        assert r.value == pytest.approx(grid, abs=2e-3)

    def test_compression_infeasible(self, p0, p1):
        r = exponent_e_c(p0, p1, 1.0, 5.0, 0.0)
        assert not r.feasible and r.value == -math.inf

    def test_full_support_required(self, p0):
        with pytest.raises(ValueError):
            exponent_e1(Pmf((0.0, 1.0)), 1.0, 0.3)


class TestMonotonicity:
    def test_e1_nondecreasing(self, p1):
        vals = [exponent_e1(p1, 1.0, b).value for b in np.linspace(0.0, 0.69, 70)]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_e2_nonincreasing(self, p0, p1):
        vals = [exponent_e2(p0, p1, t).value for t in np.linspace(-0.69, 0.2, 90)]
        assert np.all(np.diff(vals) <= 1e-12)

    def test_efa_nonincreasing_in_beta(self):
        p0, p1 = Pmf((0.5, 0.3, 0.2)), Pmf((0.1, 0.3, 0.6))
        t = 0.1
        vals = [exponent_e_fa(p0, p1, 1.3, b + t, b).value for b in np.linspace(0.3, 1.5, 61)]
        assert np.all(np.diff(vals) <= 1e-10)


class TestInverses:
    def test_e1_zero(self, p0, p1):
        assert invert_exponent("E1", 0.0, p0, p1, 1.0) == pytest.approx(ORACLE["H_p1"] / 2, abs=1e-12)

    def test_e2_zero(self, p0, p1):
        assert invert_exponent("E2", 0.0, p0, p1) == pytest.approx(ORACLE["D_p1_p0"], abs=1e-12)

    def test_e1_example(self, p0, p1):
        assert invert_exponent("E1", ORACLE["e1_value"], p0, p1, 1.0) == pytest.approx(0.4, abs=1e-9)

    def test_e2_upper_edge(self, p0, p1):
        assert invert_exponent(ExponentKind.E2, math.log(4), p0, p1) == pytest.approx(-math.log(2), abs=1e-12)

    def test_out_of_range_reports_range(self, p0, p1):
        with pytest.raises(ExponentRangeError, match="outside attainable range"):
            invert_exponent("E2", 2.0, p0, p1)

    def test_efa_needs_t(self, p0, p1):
        with pytest.raises(ValueError):
            invert_exponent("EFA", 0.1, p0, p1)

    @pytest.mark.parametrize("seed", range(4))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        p0, p1 = rand_pmf(rng, 3), rand_pmf(rng, 3)
        theta = rng.uniform(0.5, 2)
        lo, hi, _ = e1_branch(p1, theta)
        for beta in rng.uniform(lo, hi, 5):
            e = exponent_e1(p1, theta, beta).value
            assert invert_exponent("E1", e, p0, p1, theta) == pytest.approx(beta, abs=1e-6)
        lo, hi, _ = e2_branch(p0, p1)
        for t in rng.uniform(lo, hi, 5):
            e = exponent_e2(p0, p1, t).value
            assert invert_exponent("E2", e, p0, p1) == pytest.approx(t, abs=1e-6)


class TestPlanner:
    def test_contradictory_targets(self, p0, p1):
        assert not plan_parameters(5.0, 5.0, 1.0, p0, p1).feasible

    def test_nonpositive_targets(self, p0, p1):
        with pytest.raises(ValueError):
            plan_parameters(0.0, 0.1, 1.0, p0, p1)

    @pytest.mark.parametrize(
        "probs0, probs1, theta, e_fa, e_md",
        [
            ((0.5, 0.5), (0.25, 0.75), 1.0, 0.05, 0.01),
            ((0.5, 0.3, 0.2), (0.1, 0.3, 0.6), 1.0, 0.05, 0.02),
            ((0.5, 0.3, 0.2), (0.1, 0.3, 0.6), 2.0, 0.3, 0.005),
        ],
    )
    def test_round_trip(self, probs0, probs1, theta, e_fa, e_md):
        p0, p1 = Pmf(probs0), Pmf(probs1)
        plan = plan_parameters(e_fa, e_md, theta, p0, p1)
        assert plan.feasible
        assert plan.alpha - plan.beta == pytest.approx(plan.e2_inv)
        assert exponent_e_md(p0, p1, theta, plan.alpha, plan.beta).value >= e_md - 1e-6
        assert exponent_e_fa(p0, p1, theta, plan.alpha, plan.beta).value >= e_fa - 1e-6


    def test_fa_floor_takes_smallest_md_beta(self):
        p0, p1 = Pmf((0.5, 0.3, 0.2)), Pmf((0.1, 0.3, 0.6))
        plan = plan_parameters(0.05, 0.02, 1.0, p0, p1)
        assert plan.feasible and plan.beta == pytest.approx(plan.e1_inv)

    @pytest.mark.parametrize("seed", range(4))
    def test_efa_inverse_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        p0, p1 = rand_pmf(rng, 3), rand_pmf(rng, 3)
        theta = rng.uniform(0.5, 2)
        t = rng.uniform(*e2_branch(p0, p1)[:2])
        lo, star, e_max, floor = efa_branch(p0, p1, theta, t)
        for beta in rng.uniform(lo, star, 4)[1:]:
            e = exponent_e_fa(p0, p1, theta, beta + t, beta).value
            if floor + 1e-6 < e < e_max - 1e-6:
                assert invert_exponent("EFA", e, p0, p1, theta, t=t) == pytest.approx(beta, abs=1e-6)


class TestGridOracle:
    def test_e2_instance(self, p0, p1):
        value = simplex_grid_oracle(p1, [e2_constraint(p0, p1, 0.0)], "KL_MIN", 2000)
        assert value == pytest.approx(ORACLE["e2_zero"], abs=2e-3)

    def test_unconstrained_min(self, p1):
        assert simplex_grid_oracle(p1, [], "KL_MIN", 100) == pytest.approx(0.0, abs=1e-15)

    def test_ec_unconstrained(self, p1):
        assert simplex_grid_oracle(p1, [], "EC_MAX", 2000, theta=1.0) == pytest.approx(ORACLE["ec_free"], abs=2e-3)

    def test_grid_sizes(self):
        assert simplex_grid(2, 10).shape == (11, 2)
        assert simplex_grid(3, 10).shape == (66, 3)
        assert np.allclose(simplex_grid(3, 7).sum(axis=1), 1.0)

    def test_unsupported_alphabet(self):
        with pytest.raises(ValueError):
            simplex_grid_oracle(Pmf((0.25,) * 4), [], "KL_MIN", 10)

    def test_resolution_limit(self, p1):
        with pytest.raises(ValueError):
            simplex_grid_oracle(Pmf((0.2, 0.3, 0.5)), [], "KL_MIN", 401)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_solver_never_worse_than_grid(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 4))
        p0, p1 = rand_pmf(rng, k), rand_pmf(rng, k)
        theta = rng.uniform(0.3, 3)
        q = rng.dirichlet(np.ones(k))
        c1, c2 = acceptance_constraints(p0, p1, theta, 0.0, 0.0)
        beta = (c1.moment(q) + rng.uniform(0, 0.5)) / (1 + 1 / theta)
        alpha = beta - c2.moment(q) - rng.uniform(0, 0.5)
        cs = acceptance_constraints(p0, p1, theta, alpha, beta)
        res = 1000 if k == 2 else 150
        assert exponent_e_fa(p0, p1, theta, alpha, beta).value <= simplex_grid_oracle(p0, cs, "KL_MIN", res) + 1e-12
        ec = exponent_e_c(p0, p1, theta, alpha, beta).value
        assert ec >= simplex_grid_oracle(p1, cs, "EC_MAX", res, theta=theta) - 1e-12


def test_entropy_identity_used_by_compression(p1):
    q = Pmf((0.4, 0.6))
    lhs = compression_objective(q, p1, 1.0)
    rhs = 2 * entropy(q) + float(np.dot(q.probs, p1.logs()))
    assert lhs == pytest.approx(rhs, abs=1e-14)


def test_e1_constraint_shape(p1):
    c = e1_constraint(p1, 1.0, 0.4)
    assert c.bound == pytest.approx(-0.8)
    assert c.coeffs == tuple(p1.logs())
