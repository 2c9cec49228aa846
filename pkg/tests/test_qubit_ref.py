import numpy as np
import pytest

from semidavies.numkit import TimeGrid
from semidavies.qubit_ref import (
    FIG1_DEPHASINGS,
    Fig1Data,
    QubitParams,
    closed_forms,
    damped_mode,
    fig1_dataset,
)


class TestDampedMode:
    @pytest.mark.parametrize(
        "gamma,c,bound",
        [(5.0, 4.0, 1e-4), (5.0, 12.0, 1e-4), (4.0, 4.0, 1e-4), (0.3, 25.0, 1e-3)],
    )
    def test_solves_the_damped_oscillator(self, gamma, c, bound):
        # independent check: B'' + gamma B' + c B = 0, B(0) = 1, B'(0) = 0
        g = TimeGrid(3.0, 3000)
        b = damped_mode(gamma, c, g.t)
        d1 = np.gradient(b, g.h, edge_order=2)
        d2 = np.gradient(d1, g.h, edge_order=2)
        assert np.max(np.abs(d2 + gamma * d1 + c * b)[2:-2]) < bound
        assert b[0] == 1.0
        assert abs(d1[0]) < 1e-4

    def test_critical_case_is_exact(self):
        t = np.linspace(0.0, 4.0, 200)
        b = damped_mode(4.0, 4.0, t)  # discriminant zero: B = e^{-2t}(1 + 2t)
        np.testing.assert_allclose(b, np.exp(-2.0 * t) * (1.0 + 2.0 * t), atol=1e-12)

    def test_no_overflow_for_stiff_parameters(self):
        b = damped_mode(200.0, 1.0, np.linspace(0.0, 50.0, 1001))
        assert np.all(np.isfinite(b))
        assert b.max() <= 1.0 + 1e-12
        assert b.min() > 0.0

    def test_series_switch_is_seamless(self):
        gamma, c = 5.0, 6.2499999
        root = np.sqrt(abs(gamma * gamma - 4.0 * c))
        tc = 1e-4 / root
        b = damped_mode(gamma, c, np.array([tc * (1 - 1e-9), tc * (1 + 1e-9)]))
        assert abs(b[1] - b[0]) < 1e-9

    def test_oscillatory_regime_crosses_zero(self):
        t = np.linspace(0.0, 10.0, 2000)
        b = damped_mode(0.5, 20.0, t)
        assert b.min() < -0.1


class TestQubitParams:
    def test_validation(self):
        with pytest.raises(ValueError, match="nonnegative"):
            QubitParams(-1.0, 1.0, 5.0)
        with pytest.raises(ValueError, match="gamma"):
            QubitParams(1.0, 1.0, 0.0)
        with pytest.raises(ValueError, match="finite"):
            QubitParams(1.0, 1.0, 5.0, omega=np.inf)

    def test_totals(self):
        p = QubitParams(1.0, 3.0, 5.0)
        assert p.kappa == 4.0
        assert p.real_mode_condition()
        assert not QubitParams(4.0, 4.0, 5.0).real_mode_condition()


class TestClosedForms:
    def test_initial_values(self):
        c = closed_forms(QubitParams(1.0, 3.0, 5.0, gamma_z=0.3), TimeGrid(2.0, 20))
        assert c.t00[0] == 1.0
        assert c.t11[0] == 1.0
        assert c.lam01[0] == 1.0
        assert c.det_c[0] == 0.0

    def test_populations_relax_to_the_rate_ratio(self):
        c = closed_forms(QubitParams(1.0, 3.0, 5.0), TimeGrid(40.0, 100))
        assert c.t00[-1] == pytest.approx(0.25, abs=1e-12)
        assert c.t11[-1] == pytest.approx(0.75, abs=1e-12)

    def test_det_combines_the_curves(self):
        g = TimeGrid(3.0, 300)
        p = QubitParams(1.0, 3.0, 5.0, gamma_z=0.7)
        c = closed_forms(p, g)
        np.testing.assert_allclose(
            c.det_c,
            c.t00 * c.t11 - c.lam01**2 * np.exp(-1.4 * g.t),
            atol=1e-15,
        )

    def test_zero_kappa_leaves_pure_dephasing(self):
        g = TimeGrid(2.0, 50)
        c = closed_forms(QubitParams(0.0, 0.0, 5.0, gamma_z=2.0), g)
        np.testing.assert_array_equal(c.t00, np.ones(g.n_nodes))
        np.testing.assert_allclose(c.det_c, 1.0 - np.exp(-4.0 * g.t), atol=1e-15)


class TestFig1Dataset:
    def test_columns_are_ordered_by_dephasing(self):
        assert FIG1_DEPHASINGS == (0.0, 0.1, 1.0)
        g = TimeGrid(5.0, 500)
        data = fig1_dataset(g)
        cols = data.columns()
        assert len(cols) == 4
        np.testing.assert_array_equal(cols[0], g.t)
        assert isinstance(data, Fig1Data)

    def test_curves_start_at_zero(self):
        data = fig1_dataset(TimeGrid(5.0, 100))
        assert data.det_gz0[0] == 0.0
        assert data.det_gz0p1[0] == 0.0
        assert data.det_gz1[0] == 0.0

    def test_determinants_stay_nonnegative_at_this_rate_ratio(self):
        # negativity needs kappa_-/kappa_+ > 2 + sqrt(3); this point sits at 3
        data = fig1_dataset(TimeGrid(5.0, 5000))
        assert data.det_gz0.min() >= -1e-12
        assert data.det_gz0p1.min() >= -1e-12
        assert data.det_gz1.min() >= -1e-12

    def test_dephasing_orders_the_curves(self):
        data = fig1_dataset(TimeGrid(5.0, 500))
        assert np.all(data.det_gz1[1:] >= data.det_gz0p1[1:])
        assert np.all(data.det_gz0p1[1:] >= data.det_gz0[1:])
