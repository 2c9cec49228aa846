import numpy as np
import pytest

from semidavies.numkit import TimeGrid
from semidavies.semi_markov import (
    JumpKernel,
    RateKernel,
    build_T_series,
    ensure_valid,
    rates_from_jump_kernel,
    survival_and_waiting,
    validate_jump_kernel,
)

# Reference kernel: q_10 = 3 e^{-5t}, q_01 = e^{-5t}. Laplace inversion of the
# renewal series gives, with r = sqrt(3),
#   T_00 = 10/22 + a+ e^{(-5+r)t} + a- e^{(-5-r)t}
#   T_11 = 20/22 + b+ e^{(-5+r)t} + b- e^{(-5-r)t}
# and the derived rate kernel is W_10 = 3 delta - 6 e^{-2t}, W_01 = delta - 4 e^{-4t}.
KAPPA = [[0.0, 1.0], [3.0, 0.0]]
GAMMA = 5.0
A_PLUS, A_MINUS = 0.19399769056505103, 0.3514568548894944
B_PLUS, B_MINUS = -0.11200461886989792, 0.20291370977898884


def reference_kernel() -> JumpKernel:
    return JumpKernel.exponential(KAPPA, GAMMA)


def reference_T(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.sqrt(3.0)
    e_plus = np.exp((-5.0 + r) * t)
    e_minus = np.exp((-5.0 - r) * t)
    t00 = 10.0 / 22.0 + A_PLUS * e_plus + A_MINUS * e_minus
    t11 = 20.0 / 22.0 + B_PLUS * e_plus + B_MINUS * e_minus
    return t00, t11


class TestJumpKernel:
    def test_exponential_shapes(self):
        q = reference_kernel()
        assert q.dimension == 2
        g = TimeGrid(1.0, 4)
        s = q.sample(g)
        assert s.shape == (5, 2, 2)
        np.testing.assert_allclose(s[:, 1, 0], 3.0 * np.exp(-5.0 * g.t), atol=0)

    def test_scalar_gamma_broadcasts(self):
        q = JumpKernel.exponential([[0.0, 2.0], [1.0, 0.0]], 3.0)
        np.testing.assert_array_equal(q.gamma, np.full((2, 2), 3.0))

    def test_column_masses(self):
        np.testing.assert_allclose(reference_kernel().column_masses(), [0.6, 0.2], atol=0)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            JumpKernel.exponential([[0.0, 1.0]], 1.0)

    def test_tabulated_needs_matching_grid(self):
        g = TimeGrid(1.0, 10)
        q = JumpKernel.tabulated(np.zeros((11, 2, 2)), g)
        with pytest.raises(ValueError, match="different grid"):
            q.sample(TimeGrid(1.0, 20))

    def test_tabulated_shape_check(self):
        with pytest.raises(ValueError, match="samples"):
            JumpKernel.tabulated(np.zeros((7, 2, 2)), TimeGrid(1.0, 10))


class TestValidation:
    def test_reference_kernel_is_valid(self):
        report = validate_jump_kernel(reference_kernel())
        assert report.ok
        assert report.violations == ()
        assert str(report) == "kernel valid"

    def test_negative_rate_is_located(self):
        report = validate_jump_kernel(JumpKernel.exponential([[0.0, -1.0], [1.0, 0.0]], 2.0))
        assert not report.ok
        assert any(v.i == 0 and v.j == 1 for v in report.violations)

    def test_excess_mass_is_reported(self):
        report = validate_jump_kernel(JumpKernel.exponential([[0.0, 1.0], [3.0, 0.0]], 2.0))
        assert not report.ok
        assert "mass" in str(report)

    def test_nonzero_diagonal_is_reported(self):
        report = validate_jump_kernel(JumpKernel.exponential([[0.5, 1.0], [1.0, 0.0]], 9.0))
        assert any("diagonal" in v.message for v in report.violations)

    def test_negative_sample_carries_its_time(self):
        g = TimeGrid(1.0, 4)
        s = np.zeros((5, 2, 2))
        s[3, 0, 1] = -0.25
        report = validate_jump_kernel(JumpKernel.tabulated(s, g))
        v = next(v for v in report.violations if v.message == "negative sample")
        assert v.t == pytest.approx(0.75)

    def test_ensure_valid_raises(self):
        with pytest.raises(ValueError, match="invalid jump kernel"):
            ensure_valid(JumpKernel.exponential([[0.0, -1.0], [1.0, 0.0]], 2.0))


class TestSurvival:
    def test_exponential_closed_form(self):
        g = TimeGrid(3.0, 300)
        f, surv = survival_and_waiting(reference_kernel(), g)
        np.testing.assert_allclose(f[:, 0], 3.0 * np.exp(-5.0 * g.t), atol=1e-15)
        np.testing.assert_allclose(
            surv[:, 0], 1.0 - 0.6 * (1.0 - np.exp(-5.0 * g.t)), atol=1e-15
        )
        # defective column: survival saturates at 1 - mass
        assert surv[-1, 0] == pytest.approx(0.4, abs=1e-6)

    def test_tabulated_matches_exponential(self):
        g = TimeGrid(2.0, 2000)
        qe = reference_kernel()
        qt = JumpKernel.tabulated(qe.sample(g), g)
        fe, ge = survival_and_waiting(qe, g)
        ft, gt = survival_and_waiting(qt, g)
        np.testing.assert_array_equal(fe, ft)
        assert np.max(np.abs(ge - gt)) < 5e-6

    def test_survival_is_monotone(self):
        g = TimeGrid(4.0, 400)
        _, surv = survival_and_waiting(reference_kernel(), g)
        assert np.all(np.diff(surv, axis=0) <= 1e-15)


class TestOccupationSeries:
    def test_matches_the_inverted_transform(self):
        g = TimeGrid(4.0, 4000)
        T = build_T_series(reference_kernel(), g)
        t00, t11 = reference_T(g.t)
        assert np.max(np.abs(T[:, 0, 0] - t00)) < 1e-10
        assert np.max(np.abs(T[:, 1, 1] - t11)) < 1e-10

    def test_starts_at_identity(self):
        T = build_T_series(reference_kernel(), TimeGrid(1.0, 100))
        np.testing.assert_allclose(T[0], np.eye(2), atol=1e-15)

    def test_columns_sum_to_one(self):
        T = build_T_series(reference_kernel(), TimeGrid(4.0, 1000))
        assert np.max(np.abs(T.sum(axis=1) - 1.0)) < 1e-10

    def test_entries_are_occupation_probabilities(self):
        T = build_T_series(reference_kernel(), TimeGrid(4.0, 1000))
        assert T.min() >= -1e-10
        assert T.max() <= 1.0 + 1e-10

    def test_invalid_kernel_is_rejected(self):
        with pytest.raises(ValueError, match="mass"):
            build_T_series(JumpKernel.exponential([[0.0, 1.0], [3.0, 0.0]], 2.0), TimeGrid(1.0, 50))

    def test_term_budget_is_enforced(self):
        with pytest.raises(RuntimeError, match="did not converge"):
            build_T_series(reference_kernel(), TimeGrid(4.0, 200), max_terms=2)


class TestDerivedRates:
    def test_exponential_closed_form(self):
        w = rates_from_jump_kernel(reference_kernel())
        np.testing.assert_array_equal(w.delta, KAPPA)
        terms = {rate: coef for coef, rate in w.terms}
        np.testing.assert_array_equal(terms[2.0], [[0.0, 0.0], [-6.0, 0.0]])
        np.testing.assert_array_equal(terms[4.0], [[0.0, -4.0], [0.0, 0.0]])

    def test_inactive_column_contributes_nothing(self):
        w = rates_from_jump_kernel(JumpKernel.exponential([[0.0, 0.0], [3.0, 0.0]], 5.0))
        assert all(np.all(coef[:, 1] == 0.0) for coef, _ in w.terms)

    def test_mixed_column_rates_are_refused(self):
        kappa = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
        gamma = [[5.0, 5.0, 5.0], [5.0, 5.0, 5.0], [2.0, 5.0, 5.0]]
        q = JumpKernel.exponential(kappa, gamma)
        with pytest.raises(ValueError, match="mixes decay rates"):
            rates_from_jump_kernel(q)

    def test_tabulated_deconvolution_matches_closed_form(self):
        g = TimeGrid(2.0, 2000)
        qe = reference_kernel()
        we = rates_from_jump_kernel(qe)
        wt = rates_from_jump_kernel(JumpKernel.tabulated(qe.sample(g), g))
        np.testing.assert_array_equal(wt.delta, we.delta)
        assert np.max(np.abs(wt.samples - we.sample_regular(g))) < 5e-4

    def test_refuses_grids_coarser_than_the_decay(self):
        g = TimeGrid(2.0, 20)
        q = JumpKernel.tabulated(reference_kernel().sample(g), g)
        with pytest.raises(ValueError, match="too coarse"):
            rates_from_jump_kernel(q)

    def test_refuses_vanishing_survival(self):
        # box density eating essentially all mass: survival drops below 1e-6
        g = TimeGrid(1.0, 1000)
        box = np.zeros((g.n_nodes, 2, 2))
        box[:, 1, 0] = (g.t <= 0.5).astype(float)
        mass = np.trapezoid(box[:, 1, 0], dx=g.h)
        box[:, 1, 0] *= (1.0 - 1e-8) / mass
        q = JumpKernel.tabulated(box, g)
        with pytest.raises(ValueError, match="ill-conditioned"):
            rates_from_jump_kernel(q)


class TestRateKernel:
    def test_diagonal_is_zeroed(self):
        w = RateKernel(delta=np.array([[4.0, 1.0], [3.0, 4.0]]), terms=())
        np.testing.assert_array_equal(w.delta, [[0.0, 1.0], [3.0, 0.0]])

    def test_rejects_negative_instantaneous_rates(self):
        with pytest.raises(ValueError, match="nonnegative"):
            RateKernel(delta=np.array([[0.0, -1.0], [1.0, 0.0]]), terms=())

    def test_rejects_terms_and_samples_together(self):
        g = TimeGrid(1.0, 2)
        with pytest.raises(ValueError, match="not both"):
            RateKernel(
                delta=np.zeros((2, 2)),
                terms=((np.ones((2, 2)), 1.0),),
                samples=np.zeros((3, 2, 2)),
                grid=g,
            )

    def test_exponential_pairs_groups_rates(self):
        w = RateKernel.exponential_pairs([[0.0, 1.0], [3.0, 0.0]], [[9.0, 3.0], [2.0, 9.0]])
        rates = sorted(rate for _, rate in w.terms)
        assert rates == [2.0, 3.0]
        terms = {rate: coef for coef, rate in w.terms}
        np.testing.assert_array_equal(terms[2.0], [[0.0, 0.0], [3.0, 0.0]])
        np.testing.assert_array_equal(terms[3.0], [[0.0, 1.0], [0.0, 0.0]])

    def test_escape_and_master_delta(self):
        w = RateKernel.delta_only([[0.0, 1.0], [3.0, 0.0]])
        np.testing.assert_array_equal(w.escape_delta(), [3.0, 1.0])
        m = w.master_delta()
        np.testing.assert_array_equal(m, [[-3.0, 1.0], [3.0, -1.0]])
        np.testing.assert_array_equal(m.sum(axis=0), [0.0, 0.0])

    def test_master_terms_have_zero_column_sums(self):
        w = rates_from_jump_kernel(reference_kernel())
        for coef, _ in w.master_terms():
            np.testing.assert_allclose(coef.sum(axis=0), 0.0, atol=0)

    def test_master_samples_have_zero_column_sums(self):
        g = TimeGrid(1.0, 100)
        w = RateKernel.tabulated(
            delta=np.zeros((2, 2)),
            samples=np.abs(np.random.default_rng(0).normal(size=(101, 2, 2))),
            grid=g,
        )
        np.testing.assert_allclose(w.master_samples(g).sum(axis=1), 0.0, atol=1e-15)

    def test_sample_regular_sums_terms(self):
        g = TimeGrid(1.0, 10)
        w = rates_from_jump_kernel(reference_kernel())
        expected = (
            np.array([[0.0, 0.0], [-6.0, 0.0]]) * np.exp(-2.0 * g.t)[:, None, None]
            + np.array([[0.0, -4.0], [0.0, 0.0]]) * np.exp(-4.0 * g.t)[:, None, None]
        )
        np.testing.assert_allclose(w.sample_regular(g), expected, atol=1e-15)
