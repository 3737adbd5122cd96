import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uglyduckling.divergence import (
    ProblemSpec,
    SolverConfig,
    SolverError,
    SolverReport,
    _fixed_point,
    _newton,
    _penalty_pgd,
    constraint_value,
    criterion_K,
    default_delta_grid,
    divergence_D,
    kkt_residual,
    objective_value,
    project_simplex,
    script_V,
    solve_V,
)
from uglyduckling.prob import bhattacharyya, bias, special_law

from oracles import brute_force_two_point, slsqp_multistart
from strategies import positive_pairs

MU_SUB, F_SUB = (0.35, 0.4, 0.25), (0, 1, 3)
MU_SUP, F_SUP = (0.29, 0.4, 0.31), (0, 1, 4)


def closed_form(p, q):
    g = np.sqrt(np.asarray(p) * np.asarray(q))
    return g / g.sum()


def report_at(p, q, x, y, z, gamma, alpha=0.0):
    spec = ProblemSpec(p, q, alpha=alpha)
    rep = SolverReport(
        x=np.asarray(x), y=np.asarray(y), z=np.asarray(z), alpha=alpha, delta=spec.delta,
        epsilon=0.0, objective=math.nan, scaled_objective=math.nan, gamma=gamma,
    )
    return spec, rep


class TestProblemSpec:
    def test_alpha_delta_conversion(self):
        s = ProblemSpec((0.5, 0.5), (0.9, 0.1), delta=3.0)
        assert s.alpha == pytest.approx(0.75)
        s = ProblemSpec((0.5, 0.5), (0.9, 0.1), alpha=0.5)
        assert s.delta == pytest.approx(1.0)
        assert math.isinf(ProblemSpec((0.5, 0.5), (0.9, 0.1), alpha=1.0).delta)

    @pytest.mark.parametrize(
        "kwargs",
        [{}, {"alpha": 0.5, "delta": 1.0}, {"alpha": 1.5}, {"delta": -1.0}, {"alpha": 0.5, "epsilon": -1}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ProblemSpec((0.5, 0.5), (0.9, 0.1), **kwargs)

    def test_support_mismatch(self):
        with pytest.raises(ValueError, match="support"):
            solve_V(ProblemSpec((0.5, 0.5, 0), (0.5, 0.25, 0.25), alpha=0.2))

    def test_shared_zero_is_dropped(self):
        rep = solve_V(ProblemSpec((0, 0.5, 0.5), (0, 0.9, 0.1), alpha=0.0))
        assert rep.objective == pytest.approx(bhattacharyya((0.5, 0.5), (0.9, 0.1)), abs=1e-9)
        assert rep.x[0] == 0


class TestSimplexProjection:
    def test_known(self):
        np.testing.assert_allclose(project_simplex([0.5, 0.5]), [0.5, 0.5])
        np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
        np.testing.assert_allclose(project_simplex([1.0, 1.0, -5]), [0.5, 0.5, 0])

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=8))
    def test_is_projection(self, v):
        v = np.asarray(v)
        w = project_simplex(v)
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        # optimality: v - w is constant on the support and no smaller off it
        r = v - w
        sup = w > 0
        assert np.ptp(r[sup]) < 1e-9
        if (~sup).any():
            assert r[~sup].max() <= r[sup].min() + 1e-9


class TestClosedForm:
    @given(positive_pairs())
    def test_alpha_zero_is_bhattacharyya(self, pq):
        p, q = pq
        rep = solve_V(ProblemSpec(p, q, alpha=0.0))
        assert rep.converged
        assert rep.objective == pytest.approx(bhattacharyya(p, q), abs=1e-6)
        g = closed_form(p, q)
        assert np.abs(rep.x - g).sum() <= 1e-6
        assert np.abs(rep.y - g).sum() <= 1e-6

    def test_equal_distributions(self):
        rep = solve_V(ProblemSpec((0.3, 0.7), (0.3, 0.7), alpha=0.4))
        assert rep.objective == 0.0

    def test_alpha_one(self):
        rep = solve_V(ProblemSpec((0.3, 0.7), (0.6, 0.4), alpha=1.0))
        assert rep.objective == 0.0


class TestKKTResidual:
    def test_closed_form_point(self):
        p, q = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
        g = closed_form(p, q)
        spec, rep = report_at(p, q, g, g, q, -1.0)
        assert kkt_residual(spec, rep) <= 1e-10
        assert constraint_value(spec, g, g, q) == pytest.approx(0, abs=1e-15)

    def test_unconstrained_point_is_infeasible(self):
        p, q = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
        spec, rep = report_at(p, q, p, q, q, 0.0)
        assert kkt_residual(spec, rep) <= 1e-12
        assert constraint_value(spec, p, q, q) < 0

    def test_perturbed_feasible_point(self):
        p, q = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
        g = closed_form(p, q)
        x = 0.8 * g + 0.2 * np.array([0.1, 0.1, 0.8])
        spec, rep = report_at(p, q, x, g, q, -1.0)
        if constraint_value(spec, x, g, q) < 0:
            x, rep.x = g, g  # keep the point feasible
            rep.y = 0.8 * g + 0.2 * np.array([0.1, 0.1, 0.8])
        assert constraint_value(spec, rep.x, rep.y, rep.z) >= 0
        assert kkt_residual(spec, rep) > 1e-3

    def test_boundary(self):
        p, q = np.array([0.5, 0.5]), np.array([0.9, 0.1])
        spec, rep = report_at(p, q, [1.0, 0.0], q, q, -1.0)
        with pytest.raises(ValueError, match="KKT undefined at boundary"):
            kkt_residual(spec, rep)

    @given(positive_pairs(max_n=4), st.sampled_from([0.1, 0.5, 0.9]))
    def test_reported_solutions(self, pq, alpha):
        p, q = pq
        spec = ProblemSpec(p, q, alpha=alpha)
        rep = solve_V(spec)
        assert kkt_residual(spec, rep) <= 1e-6
        assert rep.constraint_slack >= -1e-8


class TestSolverProperties:
    @settings(max_examples=25)
    @given(positive_pairs(max_n=4), st.sampled_from([0.1, 0.5, 0.9]))
    def test_active_interior_certified(self, pq, alpha):
        p, q = pq
        spec = ProblemSpec(p, q, alpha=alpha)
        rep = solve_V(spec)
        assert rep.converged
        assert abs(constraint_value(spec, rep.x, rep.y, rep.z)) <= 1e-6
        assert min(rep.x.min(), rep.y.min(), rep.z.min()) > 0
        assert rep.objective == pytest.approx(objective_value(spec, rep.x, rep.y, rep.z), abs=1e-14)
        # convex-dual lower bound
        assert rep.dual_bound <= rep.objective + 1e-9
        assert rep.objective - rep.dual_bound <= 1e-8

    @settings(max_examples=15)
    @given(positive_pairs(max_n=3))
    def test_epsilon_monotone(self, pq):
        p, q = pq
        for alpha in (0.2, 0.6):
            vals = [solve_V(ProblemSpec(p, q, alpha=alpha, epsilon=e)).objective for e in (0, 1e-3, 1e-2, 0.05)]
            assert np.all(np.diff(vals) <= 1e-9)

    def test_stability_in_epsilon(self):
        rng = np.random.default_rng(5)
        p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        alphas = (0.1, 0.3, 0.5, 0.7, 0.9)
        v0 = np.array([solve_V(ProblemSpec(p, q, alpha=a)).objective for a in alphas])
        ok = False
        for eps in (1e-1, 1e-2, 1e-3, 1e-4):
            ve = np.array([solve_V(ProblemSpec(p, q, alpha=a, epsilon=eps)).objective for a in alphas])
            if np.all(ve >= v0 - 0.01):
                ok = True
                break
        assert ok

    @given(positive_pairs(max_n=3), st.sampled_from([0.0, 1.0, 10.0]))
    def test_upper_bound(self, pq, delta):
        p, q = pq
        assert script_V(p, q, delta) <= bhattacharyya(p, q) + 1e-8

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_slsqp(self, seed):
        rng = np.random.default_rng(seed)
        n = 2 + seed % 3
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        for alpha, eps in ((0.3, 0.0), (0.8, 0.01)):
            rep = solve_V(ProblemSpec(p, q, alpha=alpha, epsilon=eps))
            ref = slsqp_multistart(p, q, alpha, eps)
            assert rep.objective <= ref + 1e-8
            assert rep.objective == pytest.approx(ref, abs=1e-7)

    @pytest.mark.parametrize("delta", [0.0, 1.0, 10.0])
    def test_two_point_brute_force(self, delta):
        p, q = np.array([0.3, 0.7]), np.array([0.8, 0.2])
        alpha = delta / (1 + delta)
        rep = solve_V(ProblemSpec(p, q, alpha=alpha))
        assert abs(rep.objective - brute_force_two_point(p, q, alpha)) <= 1e-3

    def test_delta_zero_reduction(self):
        # delta = 0: inf KL(x||p) + KL(y||q) subject to KL(x||p) >= KL(y||p)
        rng = np.random.default_rng(2)
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        assert script_V(p, q, 0.0) == pytest.approx(slsqp_multistart(p, q, 0.0), abs=1e-7)

    def test_large_delta_limit(self):
        p, q = (0.5, 0.5), (0.9, 0.1)
        assert script_V(p, q, 1e3) == pytest.approx(bhattacharyya(p, q), rel=0.05)

    def test_scaled_and_alpha_forms_agree(self):
        p, q = (0.2, 0.3, 0.5), (0.5, 0.4, 0.1)
        rep = solve_V(ProblemSpec(p, q, alpha=0.75))
        assert rep.scaled_objective == pytest.approx(rep.objective / 0.25, rel=1e-12)
        assert script_V(p, q, 3.0) == pytest.approx(rep.scaled_objective, rel=1e-9)


class TestInnerSolvers:
    def setup_method(self):
        rng = np.random.default_rng(9)
        self.p, self.q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))

    @pytest.mark.parametrize("gamma", [-0.3, -0.7])
    def test_fixed_point_matches_newton(self, gamma):
        cfg = SolverConfig()
        start = (self.p, self.q, self.q)
        a, _, ok_a = _newton(self.p, self.q, 2.0, gamma, 0.0, start, cfg)
        b, _, ok_b = _fixed_point(self.p, self.q, 2.0, gamma, start, cfg)
        assert ok_a and ok_b
        for u, v in zip(a, b):
            np.testing.assert_allclose(u, v, atol=1e-9)

    def test_penalty_fallback(self):
        sol, _ = _penalty_pgd(self.p, self.q, 2.0, 0.0, SolverConfig(restarts=3, pgd_iters=8000))
        ref = solve_V(ProblemSpec(self.p, self.q, delta=2.0))
        x, y, z = sol
        spec = ProblemSpec(self.p, self.q, delta=2.0)
        assert constraint_value(spec, x, y, z) >= -1e-8
        # a feasible point cannot beat the certified optimum
        assert objective_value(spec, x, y, z) >= ref.objective - 1e-9
        assert objective_value(spec, x, y, z) <= ref.objective + 5e-3

    def test_failure_is_flagged(self):
        cfg = SolverConfig(max_newton=1, max_fixed_point=1)
        with pytest.raises(SolverError):
            script_V((0.2, 0.3, 0.5), (0.5, 0.4, 0.1), 1.0, cfg)


class TestDivergence:
    def test_identity(self):
        res = divergence_D((0.3, 0.7), (0.3, 0.7))
        assert res.value == 0.0

    def test_grid(self):
        g = default_delta_grid()
        assert g[0] == 0 and g.size == 41
        assert g[1] == pytest.approx(1e-2) and g[-1] == pytest.approx(1e3)

    def test_subcritical_value(self):
        res = divergence_D(bias(MU_SUB), special_law(MU_SUB, F_SUB))
        assert res.value == pytest.approx(0.0098, abs=5e-4)
        assert res.value <= res.bhattacharyya + 1e-8
        assert res.matches_bhattacharyya

    def test_two_point_value_is_flat(self):
        # with two support points the scaled value does not depend on delta
        p, q = (0.4, 0.6), (0.7, 0.3)
        vals = [script_V(p, q, d) for d in (0.0, 0.1, 1.0, 10.0, 100.0)]
        np.testing.assert_allclose(vals, bhattacharyya(p, q), rtol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_two_point_grid_stays_below_bhattacharyya(self, seed):
        # the dual has a kink here, so landing on the active constraint needs
        # the segment between the minimizers on either side of gamma*
        rng = np.random.default_rng(seed)
        p, q = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
        db = bhattacharyya(p, q)
        for d in default_delta_grid():
            rep = solve_V(ProblemSpec(p, q, delta=d))
            assert rep.converged
            assert rep.scaled_objective <= db + 1e-9
            assert rep.constraint_slack >= -1e-12

    def test_non_monotone_example(self):
        p = np.array([0.1, 0.2, 0.7])
        q = np.array([0.6, 0.3, 0.1])
        res = divergence_D(p, q)
        assert res.value < res.bhattacharyya
        assert 0 < res.delta < 1e3
        assert not res.matches_bhattacharyya


class TestCriterion:
    def test_kesten(self):
        res = criterion_K(MU_SUB, (0, 1, 2))
        assert res.divergence == 0.0
        assert res.value == pytest.approx(math.log(0.9), abs=1e-12)

    def test_supercritical(self):
        res = criterion_K(MU_SUP, F_SUP)
        assert res.log_mean == pytest.approx(0.0198026, abs=1e-6)
        assert res.divergence == pytest.approx(0.0258, abs=5e-4)
        assert res.value == pytest.approx(-0.006, abs=5e-3)

    def test_degenerate_mean(self):
        with pytest.raises(ValueError):
            criterion_K((1.0, 0.0), (0, 1))
