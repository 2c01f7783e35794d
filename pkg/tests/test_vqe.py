"""Circuit-ansatz preparation, shot-noise estimation, and optimizers."""

import numpy as np
import pytest
import scipy.linalg

from spinlab.pauli import PauliString, PauliSum, group_qubitwise
from spinlab.statevector import (SpinConfiguration, TFIMModel, basis_state,
                                 ground_state, init_plus)
from spinlab.vqe import (HVAnsatz, ShotPlan, amplitude_ratio_estimate,
                         energy_and_gradient, estimate_energy_pauli,
                         exact_energy, natural_gradient_step,
                         noisy_gradient_step, optimize_noiseless,
                         predicted_error, prepare, shot_budget,
                         shots_for_ratio_precision, sr_matrix)


def dense_pauli(label: str) -> np.ndarray:
    mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]),
            "Y": np.array([[0, -1j], [1j, 0]]),
            "Z": np.array([[1, 0], [0, -1]])}
    out = np.array([[1.0 + 0j]])
    for ch in label:  # leftmost letter = highest qubit
        out = np.kron(out, mats[ch])
    return out


def dense_sum(h: PauliSum) -> np.ndarray:
    dim = 2 ** h.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, string in h.terms:
        out += coeff * dense_pauli(string.label())
    return out


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

class TestPrepare:
    def test_zero_angles_give_plus_state(self):
        a = HVAnsatz.zeros(TFIMModel(L=4), 3)
        assert np.allclose(prepare(a).amplitudes, init_plus(4).amplitudes)

    def test_zero_angle_energy_is_minus_gamma_l(self):
        # ZZ terms average to zero on |+...+>, X terms each give -Gamma
        for L, Gamma in ((4, 1.0), (6, 0.7)):
            model = TFIMModel(L=L, Gamma=Gamma)
            a = HVAnsatz.zeros(model, 2)
            assert exact_energy(a) == pytest.approx(-Gamma * L, abs=1e-12)

    def test_depth_one_matches_dense_exponentials(self):
        model = TFIMModel(L=2)
        theta = (0.37, -0.61)
        a = HVAnsatz(model, 1, theta)
        h1 = dense_sum(PauliSum.from_terms(
            2, [(-2.0 * model.J + 0j, PauliString("ZZ"))]))
        h2 = dense_sum(PauliSum.from_terms(
            2, [(-model.Gamma + 0j, PauliString("IX")),
                (-model.Gamma + 0j, PauliString("XI"))]))
        u = (scipy.linalg.expm(1j * theta[1] * h2)
             @ scipy.linalg.expm(1j * theta[0] * h1))
        expected = u @ init_plus(2).amplitudes
        assert np.max(np.abs(prepare(a).amplitudes - expected)) < 1e-10

    def test_parameter_count_enforced(self):
        with pytest.raises(ValueError):
            HVAnsatz(TFIMModel(L=4), 3, (0.0,) * 5)


# ---------------------------------------------------------------------------
# gradient
# ---------------------------------------------------------------------------

class TestGradient:
    @pytest.mark.parametrize("L,depth,seed", [(4, 2, 0), (6, 4, 1), (4, 3, 2)])
    def test_matches_central_finite_differences(self, L, depth, seed):
        model = TFIMModel(L=L)
        h = model.as_pauli_sum()
        rng = np.random.default_rng(seed)
        a = HVAnsatz(model, depth, tuple(rng.uniform(-0.6, 0.6, 2 * depth)))
        energy, grad = energy_and_gradient(a, h)
        assert energy == pytest.approx(exact_energy(a, h), abs=1e-12)
        step = 1e-5
        for j in range(a.n_params):
            up = np.asarray(a.params, dtype=float)
            dn = up.copy()
            up[j] += step
            dn[j] -= step
            fd = (exact_energy(a.with_params(up), h)
                  - exact_energy(a.with_params(dn), h)) / (2 * step)
            assert grad[j] == pytest.approx(fd, abs=1e-6)


# ---------------------------------------------------------------------------
# shot-noise estimation
# ---------------------------------------------------------------------------

class TestEstimateEnergyPauli:
    def test_single_z_term_on_zero_state_is_deterministic(self):
        h = PauliSum.from_terms(3, [(0.8 + 0j, PauliString("IIZ"))])
        groups = group_qubitwise(h)
        est = estimate_energy_pauli(basis_state(3, 0), h, groups,
                                    ShotPlan.uniform(groups.n_groups, 50),
                                    np.random.default_rng(0))
        assert est.mean == pytest.approx(0.8, abs=1e-12)
        assert est.stderr == pytest.approx(0.0, abs=1e-12)
        assert est.shots_used == 50

    def test_ground_state_unbiased_but_noisy(self):
        model = TFIMModel(L=10)
        h = model.as_pauli_sum()
        e0, v0 = ground_state(h)
        groups = group_qubitwise(h)
        plan = ShotPlan.uniform(groups.n_groups, 1000)
        est = estimate_energy_pauli(v0, h, groups, plan,
                                    np.random.default_rng(7))
        assert est.stderr > 0
        assert abs(est.mean - e0) < 3 * est.stderr

    def test_reported_stderr_matches_spread_of_means(self):
        # the error bar of one run should predict the scatter across runs
        model = TFIMModel(L=6)
        h = model.as_pauli_sum()
        _, v0 = ground_state(h)
        groups = group_qubitwise(h)
        plan = ShotPlan.uniform(groups.n_groups, 1000)
        rng = np.random.default_rng(12)
        ests = [estimate_energy_pauli(v0, h, groups, plan, rng)
                for _ in range(100)]
        spread = np.std([e.mean for e in ests], ddof=1)
        typical = np.mean([e.stderr for e in ests])
        assert abs(typical - spread) / spread < 0.25

    def test_unbiased_on_random_states(self):
        model = TFIMModel(L=6)
        h = model.as_pauli_sum()
        rng = np.random.default_rng(3)
        amps = rng.normal(size=64) + 1j * rng.normal(size=64)
        from spinlab.statevector import StateVector, expectation
        s = StateVector(amps / np.linalg.norm(amps))
        exact = expectation(s, h)
        groups = group_qubitwise(h)
        plan = ShotPlan.uniform(groups.n_groups, 400)
        means = [estimate_energy_pauli(s, h, groups, plan, rng).mean
                 for _ in range(200)]
        stderr = np.std(means, ddof=1)
        assert abs(np.mean(means) - exact) < 4 * stderr / np.sqrt(200)

    def test_plan_size_mismatch_rejected(self):
        h = TFIMModel(L=4).as_pauli_sum()
        groups = group_qubitwise(h)
        with pytest.raises(ValueError):
            estimate_energy_pauli(init_plus(4), h, groups, ShotPlan((10,)),
                                  np.random.default_rng(0))

    def test_shot_plan_requires_positive_counts(self):
        with pytest.raises(ValueError):
            ShotPlan((100, 0))


class TestPredictedError:
    def test_zero_on_joint_eigenstate(self):
        h = PauliSum.from_terms(3, [(1.0 + 0j, PauliString("IIZ")),
                                    (-0.5 + 0j, PauliString("ZZI"))])
        assert predicted_error(basis_state(3, 0), h,
                               ShotPlan.uniform(1, 100)) == pytest.approx(0.0)

    def test_scales_as_inverse_sqrt_shots(self):
        model = TFIMModel(L=6)
        h = model.as_pauli_sum()
        s = init_plus(6)
        groups = group_qubitwise(h)
        e1 = predicted_error(s, h, ShotPlan.uniform(groups.n_groups, 100))
        e4 = predicted_error(s, h, ShotPlan.uniform(groups.n_groups, 400))
        assert e1 / e4 == pytest.approx(2.0, rel=1e-12)

    def test_zero_variance_fails_for_pauli_estimator(self):
        # the exact eigenvector still fluctuates under basis-wise sampling
        model = TFIMModel(L=10)
        h = model.as_pauli_sum()
        _, v0 = ground_state(h)
        groups = group_qubitwise(h)
        plan = ShotPlan.uniform(groups.n_groups, 1000)
        assert predicted_error(v0, h, plan, groups) > 0.05
        est = estimate_energy_pauli(v0, h, groups, plan,
                                    np.random.default_rng(1))
        assert est.stderr > 0


class TestShotBudget:
    def test_arithmetic(self):
        assert shot_budget(2, 10 ** 3, 100) == 2 * 10 ** 5
        assert shot_budget(1, 1, 1) == 1


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

class TestOptimizeNoiseless:
    def test_small_instance_reaches_exact_ground_state(self):
        model = TFIMModel(L=2)
        e0, _ = ground_state(model.as_pauli_sum())
        res = optimize_noiseless(HVAnsatz.zeros(model, 1), restarts=2,
                                 rng=np.random.default_rng(0))
        assert abs(res.energy - e0) / abs(e0) < 1e-8

    def test_never_worse_than_initial_point(self):
        model = TFIMModel(L=4)
        rng = np.random.default_rng(5)
        a = HVAnsatz(model, 2, tuple(rng.uniform(-0.1, 0.1, 4)))
        start = exact_energy(a)
        res = optimize_noiseless(a, restarts=0, rng=rng, max_iter=3)
        assert res.energy <= start + 1e-12

    def test_derivative_free_method_also_descends(self):
        model = TFIMModel(L=4)
        a = HVAnsatz.zeros(model, 2)
        res = optimize_noiseless(a, method="derivative-free", restarts=1,
                                 rng=np.random.default_rng(2), max_iter=2000)
        assert res.energy < exact_energy(a) - 0.5

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            optimize_noiseless(HVAnsatz.zeros(TFIMModel(L=2), 1),
                               method="simulated-annealing",
                               rng=np.random.default_rng(0))


class TestNoisyGradientStep:
    def test_infinite_shot_limit_is_plain_gradient_step(self):
        model = TFIMModel(L=4)
        rng = np.random.default_rng(4)
        a = HVAnsatz(model, 2, tuple(rng.uniform(-0.3, 0.3, 4)))
        _, grad = energy_and_gradient(a, model.as_pauli_sum())
        expected = np.asarray(a.params) - 0.1 * grad
        stepped = noisy_gradient_step(a, 10 ** 14, 0.1,
                                      np.random.default_rng(0))
        assert np.max(np.abs(np.asarray(stepped.params) - expected)) < 1e-5

    def test_noise_variance_halves_when_shots_double(self):
        model = TFIMModel(L=4)
        a = HVAnsatz(model, 2, (0.2, -0.1, 0.05, 0.3))
        _, grad = energy_and_gradient(a, model.as_pauli_sum())
        drift = np.asarray(a.params) - 0.1 * grad

        def noise_var(M, seed):
            rng = np.random.default_rng(seed)
            kicks = [np.asarray(noisy_gradient_step(a, M, 0.1, rng).params)
                     - drift for _ in range(400)]
            return np.mean(np.var(kicks, axis=0))

        ratio = noise_var(50, 8) / noise_var(100, 9)
        assert ratio == pytest.approx(2.0, rel=0.25)

    def test_sample_threshold_separates_stall_from_convergence(self):
        # starved of shots the Langevin iteration wanders >1% away from the
        # optimum; with plentiful shots the same schedule stays converged.
        # The step sits inside the stability bound 2/lam_max of the local
        # Hessian (top curvature ~433 at this optimum).
        model = TFIMModel(L=6)
        h = model.as_pauli_sum()
        e0, _ = ground_state(h)
        opt = optimize_noiseless(HVAnsatz.zeros(model, 6), restarts=2,
                                 rng=np.random.default_rng(0), max_iter=200)
        assert abs(opt.energy - e0) / abs(e0) < 1e-10

        def stationary_error(M):
            rng = np.random.default_rng(5)
            a = opt.ansatz
            tail = []
            for t in range(300):
                a = noisy_gradient_step(a, M, 0.002, rng)
                if t >= 200:
                    tail.append(exact_energy(a, h))
            return abs(np.mean(tail) - e0) / abs(e0)

        assert stationary_error(4) > 0.01
        assert stationary_error(100_000) < 0.001

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            noisy_gradient_step(HVAnsatz.zeros(TFIMModel(L=2), 1), 100, 0.0,
                                np.random.default_rng(0))


# ---------------------------------------------------------------------------
# stochastic reconfiguration on the circuit
# ---------------------------------------------------------------------------

class TestSRMatrix:
    def test_first_entry_is_generator_variance(self):
        # S_00 equals Var(H_1) on the state right after the first layer
        model = TFIMModel(L=4)
        a = HVAnsatz(model, 1, (0.3, 0.0))
        from spinlab.statevector import apply_exp_zz
        s_after = apply_exp_zz(init_plus(4), 0.3, model)
        h1 = PauliSum.from_terms(4, [
            (-model.J + 0j, PauliString(lbl))
            for lbl in ("IIZZ", "IZZI", "ZZII", "ZIIZ")])
        dense = dense_sum(h1)
        amps = s_after.amplitudes
        mean = np.real(np.vdot(amps, dense @ amps))
        second = np.real(np.vdot(amps, dense @ (dense @ amps)))
        var = second - mean ** 2
        s = sr_matrix(a).entries
        assert s[0, 0] == pytest.approx(var, abs=1e-10)
        assert var >= 0

    @pytest.mark.parametrize("L,depth,seed", [(4, 2, 0), (6, 4, 3)])
    def test_matches_finite_difference_states(self, L, depth, seed):
        model = TFIMModel(L=L)
        rng = np.random.default_rng(seed)
        a = HVAnsatz(model, depth, tuple(rng.uniform(-0.5, 0.5, 2 * depth)))
        step = 1e-5
        n = a.n_params
        base = prepare(a).amplitudes
        derivs = np.zeros((n, base.size), dtype=complex)
        for j in range(n):
            up = np.asarray(a.params)
            dn = up.copy()
            up = up.copy()
            up[j] += step
            dn[j] -= step
            derivs[j] = (prepare(a.with_params(up)).amplitudes
                         - prepare(a.with_params(dn)).amplitudes) / (2 * step)
        overlaps = derivs.conj() @ derivs.T
        with_psi = derivs.conj() @ base
        expected = np.real(overlaps - np.outer(with_psi, with_psi.conj()))
        got = sr_matrix(a).entries
        assert np.max(np.abs(got - expected)) < 1e-6

    def test_symmetric_psd_for_random_parameters(self):
        model = TFIMModel(L=6)
        for seed in range(4):
            rng = np.random.default_rng(seed)
            a = HVAnsatz(model, 4, tuple(rng.uniform(-1, 1, 8)))
            s = sr_matrix(a).entries
            assert np.allclose(s, s.T, atol=1e-10)
            assert np.linalg.eigvalsh(s).min() > -1e-8

    def test_block_projection_zeroes_cross_terms(self):
        model = TFIMModel(L=4)
        rng = np.random.default_rng(1)
        a = HVAnsatz(model, 3, tuple(rng.uniform(-0.5, 0.5, 6)))
        full = sr_matrix(a).entries
        blocked = sr_matrix(a, block_size=2).entries
        assert np.allclose(blocked[0:2, 0:2], full[0:2, 0:2])
        assert np.all(blocked[0:2, 2:] == 0)
        assert np.all(blocked[2:, 0:2] == 0)


class TestNaturalGradientStep:
    def test_large_regularization_recovers_scaled_gradient(self):
        model = TFIMModel(L=4)
        rng = np.random.default_rng(6)
        a = HVAnsatz(model, 2, tuple(rng.uniform(-0.4, 0.4, 4)))
        _, grad = energy_and_gradient(a, model.as_pauli_sum())
        lam = 1e8
        stepped = natural_gradient_step(a, 0.5, lam_reg=lam)
        move = (np.asarray(a.params) - np.asarray(stepped.params)) / 0.5
        assert np.allclose(move * lam, grad, rtol=1e-4, atol=1e-10)

    def test_preconditioning_beats_plain_gradient(self):
        # natural gradient reaches 1e-6 relative error in fewer iterations
        model = TFIMModel(L=6)
        h = model.as_pauli_sum()
        e0, _ = ground_state(h)
        start = HVAnsatz(model, 4, tuple(
            np.random.default_rng(3).uniform(-0.1, 0.1, 8)))
        delta = 0.05

        def iterations(kind, cap=3000):
            a = start
            for it in range(1, cap + 1):
                if kind == "plain":
                    _, g = energy_and_gradient(a, h)
                    a = a.with_params(np.asarray(a.params) - delta * g)
                else:
                    a = natural_gradient_step(a, delta)
                if abs(exact_energy(a, h) - e0) / abs(e0) <= 1e-6:
                    return it
            return cap + 1

        n_natural = iterations("natural")
        n_plain = iterations("plain")
        assert n_natural < n_plain


# ---------------------------------------------------------------------------
# amplitude ratios
# ---------------------------------------------------------------------------

class TestAmplitudeRatio:
    def test_identical_configurations_give_unit_ratio(self):
        s = init_plus(4)
        x = SpinConfiguration((1, 1, -1, 1))
        est = amplitude_ratio_estimate(s, x, x, 100, np.random.default_rng(0))
        assert est.ratio == 1.0
        assert est.stderr == 0.0
        assert est.defined

    def test_uniform_state_ratio_near_one(self):
        s = init_plus(6)
        x = SpinConfiguration((1,) * 6)
        y = SpinConfiguration((-1,) * 6)
        est = amplitude_ratio_estimate(s, x, y, 10 ** 5,
                                       np.random.default_rng(13))
        assert est.defined
        assert abs(est.ratio - 1.0) < 0.05

    def test_zero_denominator_flags_undefined(self):
        s = basis_state(3, 0)  # never samples any other configuration
        x = SpinConfiguration((-1, 1, 1))
        y = SpinConfiguration((1, 1, 1))
        est = amplitude_ratio_estimate(s, x, y, 1000,
                                       np.random.default_rng(0))
        assert not est.defined
        assert np.isnan(est.ratio)

    def test_required_shots_track_inverse_denominator_probability(self):
        model = TFIMModel(L=6)
        _, v0 = ground_state(model.as_pauli_sum())
        neel = SpinConfiguration(tuple(1 if k % 2 == 0 else -1
                                       for k in range(6)))
        spins = list(neel.spins)
        spins[0] = -spins[0]
        flip = SpinConfiguration(tuple(spins))
        easy = shots_for_ratio_precision(v0, SpinConfiguration((1,) * 6),
                                         flip, 0.10,
                                         np.random.default_rng(1))
        hard = shots_for_ratio_precision(v0, neel, flip, 0.10,
                                         np.random.default_rng(1))
        assert hard > easy
