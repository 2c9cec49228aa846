import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semidavies.hybrid_map import (
    DecoherenceModel,
    HybridGeneratorSpec,
    assemble_and_apply,
    build_trajectory,
    coherence_trajectory,
    cp_witness,
    decoherence_factors,
    population_trajectory,
)
from semidavies.numkit import TimeGrid
from semidavies.qubit_ref import QubitParams, closed_forms
from semidavies.semi_markov import JumpKernel, RateKernel

FIG_KAPPA = [[0.0, 1.0], [3.0, 0.0]]
FIG_GAMMA = 5.0


def rates_spec(decoherence=None, kappa=FIG_KAPPA, gamma=FIG_GAMMA) -> HybridGeneratorSpec:
    return HybridGeneratorSpec(
        energies=np.array([0.0, 1.0]),
        dissipation=RateKernel.exponential_pairs(kappa, gamma),
        decoherence=decoherence,
    )


def semi_spec() -> HybridGeneratorSpec:
    return HybridGeneratorSpec(
        energies=np.array([0.0, 1.0]),
        dissipation=JumpKernel.exponential(FIG_KAPPA, FIG_GAMMA),
    )


class TestDecoherenceModel:
    def test_gkls_rejects_indefinite_matrices(self):
        with pytest.raises(ValueError, match="semidefinite"):
            DecoherenceModel.gkls([[1.0, 2.0], [2.0, 1.0]])

    def test_gkls_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            DecoherenceModel.gkls([[1.0, 0.5], [0.0, 1.0]])

    def test_noise_rejects_negative_strengths(self):
        with pytest.raises(ValueError, match="nonnegative"):
            DecoherenceModel.noise([1.0, -0.1])

    def test_direct_rejects_asymmetry(self):
        with pytest.raises(ValueError, match="symmetric"):
            DecoherenceModel.direct([[0.0, 1.0], [2.0, 0.0]])

    def test_dimension(self):
        assert DecoherenceModel.noise([1.0, 2.0, 3.0]).dimension == 3
        assert DecoherenceModel.gkls(np.eye(2)).dimension == 2


class TestDecoherenceFactors:
    def test_gkls_rates_and_rotations(self):
        d_mat = np.array([[1.0, 0.2 + 0.3j], [0.2 - 0.3j, 1.0]])
        g = TimeGrid(2.0, 20)
        mu = decoherence_factors(DecoherenceModel.gkls(d_mat), g)
        expected = np.exp((-(1.0 - 0.2) + 1j * 0.3) * g.t)
        np.testing.assert_allclose(mu[:, 0, 1], expected, atol=1e-14)
        np.testing.assert_allclose(mu[:, 1, 0], np.conj(expected), atol=1e-14)

    def test_noise_pair_rates(self):
        g = TimeGrid(2.0, 20)
        mu = decoherence_factors(DecoherenceModel.noise([1.0, 0.5]), g)
        np.testing.assert_allclose(mu[:, 0, 1], np.exp(-0.75 * g.t), atol=1e-14)

    def test_direct_rates(self):
        g = TimeGrid(2.0, 20)
        mu = decoherence_factors(DecoherenceModel.direct([[0.0, 2.0], [2.0, 0.0]]), g)
        np.testing.assert_allclose(mu[:, 0, 1], np.exp(-2.0 * g.t), atol=1e-14)

    def test_diagonal_is_one(self):
        g = TimeGrid(1.0, 5)
        mu = decoherence_factors(DecoherenceModel.noise([3.0, 4.0]), g)
        np.testing.assert_array_equal(mu[:, 0, 0], np.ones(g.n_nodes))

    def test_none_model_needs_dimension(self):
        g = TimeGrid(1.0, 5)
        with pytest.raises(ValueError, match="dimension"):
            decoherence_factors(None, g)
        mu = decoherence_factors(None, g, d=3)
        np.testing.assert_array_equal(mu, np.ones((6, 3, 3)))


class TestGeneratorSpec:
    def test_mode_follows_kernel_type(self):
        assert rates_spec().mode == "rates"
        assert semi_spec().mode == "semi-markov"

    def test_dimension_mismatch_is_rejected(self):
        with pytest.raises(ValueError, match="match"):
            HybridGeneratorSpec(
                energies=np.array([0.0, 1.0, 2.0]),
                dissipation=RateKernel.exponential_pairs(FIG_KAPPA, FIG_GAMMA),
            )

    def test_noise_strength_count_is_checked(self):
        with pytest.raises(ValueError, match="one strength per level"):
            HybridGeneratorSpec(
                energies=np.array([0.0, 1.0]),
                dissipation=RateKernel.exponential_pairs(FIG_KAPPA, FIG_GAMMA),
                decoherence=DecoherenceModel.noise([1.0, 2.0, 3.0]),
            )

    def test_needs_two_levels(self):
        with pytest.raises(ValueError, match="two"):
            HybridGeneratorSpec(
                energies=np.array([1.0]),
                dissipation=RateKernel.delta_only(np.zeros((1, 1))),
            )


class TestPopulations:
    def test_rates_mode_matches_closed_forms(self):
        g = TimeGrid(2.0, 2000)
        T = population_trajectory(rates_spec(), g, backend="expsum")
        ref = closed_forms(QubitParams(1.0, 3.0, 5.0), g)
        assert np.max(np.abs(T[:, 0, 0] - ref.t00)) < 1e-10
        assert np.max(np.abs(T[:, 1, 1] - ref.t11)) < 1e-10

    def test_backends_agree(self):
        g = TimeGrid(2.0, 2000)
        te = population_trajectory(rates_spec(), g, backend="expsum")
        tq = population_trajectory(rates_spec(), g, backend="quadrature")
        assert np.max(np.abs(te - tq)) < 1e-6

    def test_unknown_backend_is_rejected(self):
        with pytest.raises(ValueError, match="backend"):
            population_trajectory(rates_spec(), TimeGrid(1.0, 10), backend="magic")

    def test_semi_mode_uses_the_series(self):
        g = TimeGrid(2.0, 500)
        from semidavies.semi_markov import build_T_series

        T = population_trajectory(semi_spec(), g)
        np.testing.assert_array_equal(T, build_T_series(semi_spec().dissipation, g))


class TestCoherence:
    def test_rates_mode_matches_closed_form(self):
        g = TimeGrid(2.0, 2000)
        lam = coherence_trajectory(rates_spec(), g, backend="expsum")
        ref = closed_forms(QubitParams(1.0, 3.0, 5.0), g)
        assert np.max(np.abs(lam[:, 0, 1] - ref.lam01)) < 1e-10

    def test_semi_mode_matches_derived_rates(self):
        # lambda for the derived kernel: 8/15 + e^{-3t}/6 + 3 e^{-5t}/10
        g = TimeGrid(3.0, 3000)
        lam = coherence_trajectory(semi_spec(), g)
        ref = 8.0 / 15.0 + np.exp(-3.0 * g.t) / 6.0 + 0.3 * np.exp(-5.0 * g.t)
        assert np.max(np.abs(lam[:, 0, 1] - ref)) < 1e-10

    def test_symmetric_with_unit_diagonal(self):
        g = TimeGrid(1.0, 200)
        lam = coherence_trajectory(rates_spec(), g)
        np.testing.assert_array_equal(lam, lam.swapaxes(1, 2))
        np.testing.assert_array_equal(lam[:, 0, 0], np.ones(g.n_nodes))


class TestTrajectoryAssembly:
    def test_phases_follow_the_energy_gaps(self):
        g = TimeGrid(1.0, 100)
        traj = build_trajectory(rates_spec(), g)
        np.testing.assert_allclose(
            traj.phases[:, 0, 1], np.exp(1j * g.t), atol=1e-14
        )

    def test_apply_reproduces_the_factor_form(self):
        g = TimeGrid(2.0, 400)
        spec = rates_spec(DecoherenceModel.noise([1.0, 0.5]))
        traj = build_trajectory(spec, g)
        rho0 = np.array([[0.375, 0.25 - 0.1j], [0.25 + 0.1j, 0.625]])
        node = 150
        out = assemble_and_apply(traj, rho0, node)
        ref = closed_forms(QubitParams(1.0, 3.0, 5.0), g)
        t = g.t[node]
        np.testing.assert_allclose(
            out[0, 0], ref.t00[node] * 0.375 + (1.0 - ref.t11[node]) * 0.625, atol=1e-10
        )
        expected_01 = (
            np.exp(1j * t) * ref.lam01[node] * np.exp(-0.75 * t) * rho0[0, 1]
        )
        np.testing.assert_allclose(out[0, 1], expected_01, atol=1e-10)
        np.testing.assert_allclose(out, out.conj().T, atol=1e-15)
        assert abs(np.trace(out) - 1.0) < 1e-12

    def test_apply_rejects_bad_states(self):
        g = TimeGrid(1.0, 10)
        traj = build_trajectory(rates_spec(), g)
        with pytest.raises(ValueError, match="semidefinite"):
            assemble_and_apply(traj, np.diag([1.5, -0.5]).astype(complex), 1)
        with pytest.raises(ValueError, match="trace"):
            assemble_and_apply(traj, np.diag([0.7, 0.7]).astype(complex), 1)
        with pytest.raises(ValueError, match="2x2"):
            assemble_and_apply(traj, np.eye(3) / 3.0, 1)


class TestWitness:
    def test_reference_map_is_completely_positive(self):
        g = TimeGrid(5.0, 1000)
        traj = build_trajectory(rates_spec(DecoherenceModel.noise([1.0, 1.0])), g)
        w = cp_witness(traj)
        assert w.is_cp()
        assert w.negative_population_nodes == 0
        np.testing.assert_allclose(
            w.choi_min_eig, np.minimum(w.min_eig, w.population_offdiag_min), atol=1e-10
        )

    def test_detects_positivity_loss(self):
        # strong downhill rates with slow memory leave the witness indefinite
        g = TimeGrid(5.0, 2000)
        traj = build_trajectory(rates_spec(kappa=[[0.0, 1.0], [10.0, 0.0]], gamma=7.0), g)
        w = cp_witness(traj)
        assert not w.is_cp()
        det = w.det2()
        node = int(np.argmin(det))
        assert det[node] == pytest.approx(-5.9727318e-3, abs=1e-8)
        assert g.t[node] == pytest.approx(0.5275, abs=1e-10)
        assert w.global_min < 0.0
        assert w.argmin_node > 0

    def test_det2_matches_closed_form(self):
        g = TimeGrid(3.0, 3000)
        gz = 1.0
        spec = rates_spec(DecoherenceModel.direct([[0.0, gz], [gz, 0.0]]))
        w = cp_witness(build_trajectory(spec, g))
        ref = closed_forms(QubitParams(1.0, 3.0, 5.0, gamma_z=gz), g)
        assert np.max(np.abs(w.det2() - ref.det_c)) < 1e-9

    def test_det2_requires_two_levels(self):
        g = TimeGrid(1.0, 20)
        spec = HybridGeneratorSpec(
            energies=np.array([0.0, 1.0, 2.0]),
            dissipation=RateKernel.delta_only(
                [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.5, 0.5, 0.0]]
            ),
        )
        w = cp_witness(build_trajectory(spec, g))
        with pytest.raises(ValueError, match="two-level"):
            w.det2()

    def test_three_level_complex_rotations(self):
        g = TimeGrid(2.0, 200)
        rng = np.random.default_rng(5)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        model = DecoherenceModel.gkls(a @ a.conj().T / 3.0)
        spec = HybridGeneratorSpec(
            energies=np.array([0.0, 0.7, 1.9]),
            dissipation=RateKernel.delta_only(
                [[0.0, 0.3, 0.2], [0.4, 0.0, 0.1], [0.2, 0.3, 0.0]]
            ),
            decoherence=model,
        )
        w = cp_witness(build_trajectory(spec, g))
        # Markovian input: the witness stays positive and the Choi check holds
        assert w.is_cp()

    @given(st.floats(min_value=-20.0, max_value=20.0))
    def test_witness_ignores_the_hamiltonian(self, shift):
        g = TimeGrid(1.0, 50)
        base = build_trajectory(rates_spec(), g)
        shifted = build_trajectory(
            HybridGeneratorSpec(
                energies=np.array([0.0, 1.0 + shift]),
                dissipation=RateKernel.exponential_pairs(FIG_KAPPA, FIG_GAMMA),
            ),
            g,
        )
        np.testing.assert_allclose(
            cp_witness(base).min_eig, cp_witness(shifted).min_eig, atol=1e-12
        )

    def test_swap_of_the_two_rate_coefficients_preserves_det(self):
        g = TimeGrid(3.0, 600)
        w_a = cp_witness(build_trajectory(rates_spec(), g))
        w_b = cp_witness(
            build_trajectory(rates_spec(kappa=[[0.0, 3.0], [1.0, 0.0]]), g)
        )
        assert np.max(np.abs(w_a.det2() - w_b.det2())) < 1e-10


class TestTrajectoryValidation:
    def test_initial_conditions_are_enforced(self):
        g = TimeGrid(1.0, 10)
        traj = build_trajectory(rates_spec(), g)
        bad_pop = np.array(traj.populations)
        bad_pop[0, 0, 0] = 0.5
        from semidavies.hybrid_map import MapTrajectory

        with pytest.raises(ValueError, match="identity"):
            MapTrajectory(
                grid=g,
                energies=traj.energies,
                populations=bad_pop,
                coherence=traj.coherence,
                dephasing=traj.dephasing,
                phases=traj.phases,
            )
