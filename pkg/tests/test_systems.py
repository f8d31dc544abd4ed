import numpy as np
import pytest

from torusflow.driver import NoiseDriver
from torusflow.fields import Grid, ScalarField, lp_norm
from torusflow.flows import FlowMap, Interpolator, l1_flow_distance
from torusflow.noise import build_basis, corrector
from torusflow.systems import (
    DEFAULT_TEST_FUNCTIONS,
    SystemError,
    TrigTestFunction,
    deposit,
    deposit_vorticity,
    init_state,
    initial_condition,
    range_inflation,
    refresh_fields,
    spectral_pairing,
    step_e,
    step_limit_system,
    step_se,
    weak_form_residual_run,
    weak_pairing,
    zeta_diagnostic,
    zeta_representation_check,
)

G64 = Grid(64)
G32 = Grid(32)


class TestInitialConditions:
    def test_two_mode_shear_extremum(self):
        xi = initial_condition("shear-two-mode", G64)
        assert np.max(np.abs(xi.values)) == pytest.approx(1.5, abs=1e-12)
        assert abs(xi.values.mean()) <= 1e-12

    def test_all_zero_mean(self):
        for name in ("shear-two-mode", "steady-shear", "random-band", "bump"):
            xi = initial_condition(name, G64, seed=3)
            assert abs(xi.values.mean()) <= 1e-12

    def test_random_band_reproducible(self):
        a = initial_condition("random-band", G64, seed=11)
        b = initial_condition("random-band", G64, seed=11)
        assert np.array_equal(a.values, b.values)
        assert np.max(np.abs(a.values)) == pytest.approx(1.0)

    def test_unknown_name(self):
        with pytest.raises(SystemError):
            initial_condition("nope", G64)


class TestDeposition:
    def test_constant_particles_exact(self):
        fm = FlowMap.identity(64)
        rng = np.random.default_rng(1)
        fm = FlowMap(64, (fm.positions + rng.uniform(-0.3, 0.3, fm.positions.shape)) % 1.0)
        vals, min_w = deposit(G64, fm.positions, np.full(64 * 64, 2.5))
        covered = vals[np.abs(vals) > 0]
        assert np.max(np.abs(covered - 2.5)) < 1e-12

    def test_identity_particles_reproduce_grid(self):
        xi0 = initial_condition("shear-two-mode", G64)
        f, _ = deposit_vorticity(G64, FlowMap.identity(64), xi0.values.ravel())
        assert np.max(np.abs(f.values - xi0.values)) < 1e-12

    def test_deposit_interpolate_second_order(self):
        # particles shifted off the lattice: deposition is bilinear, O(h^2)
        errs = []
        for grid in (G32, G64):
            m = grid.n
            fm = FlowMap.identity(m)
            shift = 0.5 * grid.h
            pos = (fm.positions + shift) % 1.0
            vals = np.sin(2 * np.pi * pos[:, 0])
            dep, _ = deposit(grid, pos, vals)
            X1, _ = grid.nodes()
            errs.append(np.max(np.abs(dep - np.sin(2 * np.pi * X1))))
        assert 3.0 < errs[0] / errs[1] < 6.0

    def test_deposited_mean_free(self):
        rng = np.random.default_rng(2)
        fm = FlowMap(64, rng.uniform(size=(64 * 64, 2)))
        f, _ = deposit_vorticity(G64, fm, rng.normal(size=64 * 64))
        assert abs(f.values.mean()) < 1e-14


class TestColoredSystem:
    def test_steady_state_invariance(self):
        basis = build_basis(1, 1.0, 0.0, G64)
        st = init_state("steady-shear", G64, 64, kind="se")
        d = NoiseDriver(0.5, 1e-3, basis.n_channels, seed=3)
        for _ in range(10):
            step_se(st, basis, d, 1e-3)
        refresh_fields(st)
        xi0 = initial_condition("steady-shear", G64)
        assert np.max(np.abs(st.xi.values - xi0.values)) < 5e-4

    def test_range_never_inflates(self):
        basis = build_basis(3, 1.0, 0.9, G64)
        eps = 0.3
        st = init_state("shear-two-mode", G64, 64, kind="se")
        d = NoiseDriver(eps, 2e-3, basis.n_channels, seed=4)
        for _ in range(50):
            step_se(st, basis, d, 2e-3)
        refresh_fields(st)
        assert range_inflation(st) <= 0.02
        assert abs(weak_pairing(st.xi, ScalarField(G64, np.ones((64, 64))))) <= 1e-8

    def test_energy_drift_small_without_noise(self):
        basis = build_basis(1, 1.0, 0.0, G64)
        st = init_state("shear-two-mode", G64, 64, kind="se")
        d = NoiseDriver(0.5, 1e-3, basis.n_channels, seed=5)
        e0 = lp_norm(st.u, 2)
        for _ in range(250):
            step_se(st, basis, d, 1e-3)
        refresh_fields(st)
        assert abs(lp_norm(st.u, 2) - e0) / e0 < 0.01


class TestLimitSystem:
    def test_zero_basis_matches_colored_bitwise(self):
        basis = build_basis(2, 1.0, 0.0, G64)
        corr = corrector(basis)
        sa = init_state("shear-two-mode", G64, 64, kind="se")
        sb = init_state("shear-two-mode", G64, 64, kind="limit")
        d = NoiseDriver(0.4, 2e-3, basis.n_channels, seed=6)
        for _ in range(25):
            inc = d.advance()
            step_se(sa, basis, inc, 2e-3)
            step_limit_system(sb, basis, corr, inc, 2e-3)
        assert np.array_equal(sa.flow.positions, sb.flow.positions)

    def test_range_preserved_with_noise(self):
        basis = build_basis(3, 1.0, 0.9, G64)
        corr = corrector(basis)
        st = init_state("random-band", G64, 64, kind="limit", seed=7)
        d = NoiseDriver(0.3, 1e-3, basis.n_channels, seed=8)
        for _ in range(100):
            step_limit_system(st, basis, corr, d, 1e-3)
        refresh_fields(st)
        assert range_inflation(st) <= 0.02

    def test_constant_sigma_shift_oracle(self):
        # with one spatially constant sigma the law of <xi_t, f> is the
        # deterministic solution paired against a direction-smoothed f
        from torusflow.fields import to_spectral

        sigma = np.array([0.25, 0.0])

        class ConstBasis:
            amp = np.array([1.0])
            n_channels = 1

            def velocity_at(self, pts, weights):
                return np.outer(np.full(pts.shape[0], weights[0]), sigma)

        basis = ConstBasis()
        zero_basis = build_basis(1, 1.0, 0.0, G32)
        T, dt, R = 0.15, 2.5e-3, 32
        f = TrigTestFunction((1, 0), "sin").field(G32)

        det = init_state("shear-two-mode", G32, 32, kind="se")
        dzero = NoiseDriver(0.5, dt, zero_basis.n_channels, seed=9)
        for _ in range(int(T / dt)):
            step_se(det, zero_basis, dzero, dt)
        refresh_fields(det)

        # E<xi_t, f> = sum_k xihat_det(k) conj(fhat(k)) exp(-2 pi^2 (k.sigma)^2 t)
        xih = to_spectral(det.xi).coeffs
        fh = to_spectral(f).coeffs
        k = np.fft.fftfreq(32, d=1 / 32)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        damp = np.exp(-2 * np.pi**2 * (K1 * sigma[0] + K2 * sigma[1]) ** 2 * T)
        target = float(np.real(np.sum(xih * np.conj(fh) * damp)))

        vals = []
        for r in range(R):
            st = init_state("shear-two-mode", G32, 32, kind="limit")
            d = NoiseDriver(0.5, dt, 1, seed=100 + r)
            for _ in range(int(T / dt)):
                step_limit_system(st, basis, None, d, dt)
            refresh_fields(st)
            vals.append(weak_pairing(st.xi, f))
        vals = np.array(vals)
        se = vals.std(ddof=1) / np.sqrt(R)
        assert abs(vals.mean() - target) < 3 * se + 0.01


class TestTwoScaleSystem:
    def test_frozen_advection_reproduces_theta(self):
        basis = build_basis(2, 1.0, 0.9, G32)
        eps = 0.3
        d = NoiseDriver(eps, eps**2 / 10, basis.n_channels, seed=10)
        st = init_state(
            "shear-two-mode", G32, 32, kind="e", epsilon=eps, basis=basis, eta0=d.eta
        )
        for _ in range(50):
            step_e(st, basis, d, eps**2 / 10, freeze_advection=True)
        assert np.max(np.abs(st.xi_s - st.theta)) < 1e-12
        assert zeta_diagnostic(st).l1 < 1e-12

    def test_frozen_node_variance_matches_stationary_law(self):
        basis = build_basis(2, 1.0, 0.9, G32)
        eps = 0.3
        dt = eps**2 / 10
        d = NoiseDriver(eps, dt, basis.n_channels, seed=11)
        st = init_state("steady-shear", G32, 32, kind="e", epsilon=eps, basis=basis, eta0=d.eta)
        samples = []
        for i in range(4000):
            step_e(st, basis, d, dt, freeze_advection=True)
            if i % 10 == 9:
                samples.append(st.xi_s[5, 7])
        samples = np.array(samples)
        target = np.sum(basis.theta_fields[:, 5, 7] ** 2) * eps**-2 / 2
        se = target * np.sqrt(2.0 / samples.size)
        assert abs(samples.var() - target) < 4 * se

    def test_deterministic_reduction_bitwise(self):
        basis = build_basis(2, 1.0, 0.0, G64)
        sa = init_state("shear-two-mode", G64, 64, kind="se")
        se_state = init_state(
            "shear-two-mode", G64, 64, kind="e", epsilon=0.4, basis=basis, zero_small_scale=True
        )
        d = NoiseDriver(0.4, 2e-3, basis.n_channels, seed=12)
        for _ in range(25):
            inc = d.advance()
            step_se(sa, basis, inc, 2e-3)
            step_e(se_state, basis, inc, 2e-3)
        assert np.array_equal(sa.flow.positions, se_state.flow.positions)
        assert np.max(np.abs(se_state.xi_s)) == 0.0

    def test_collapses_to_colored_when_small_scale_not_advected(self):
        basis = build_basis(2, 1.0, 0.9, G32)
        eps = 0.4
        dt = 2e-3
        sa = init_state("shear-two-mode", G32, 32, kind="se")
        d0 = NoiseDriver(eps, dt, basis.n_channels, seed=13)
        eb = init_state("shear-two-mode", G32, 32, kind="e", epsilon=eps, basis=basis, eta0=d0.eta)
        d = NoiseDriver(eps, dt, basis.n_channels, seed=13)
        assert np.array_equal(d.eta, d0.eta)
        for _ in range(25):
            inc = d.advance()
            step_se(sa, basis, inc, dt)
            step_e(eb, basis, inc, dt, advect_small_scale=False)
        assert np.max(np.abs(eb.xi_s - eb.theta)) < 1e-12
        assert l1_flow_distance(sa.flow, eb.flow) < 5e-3

    def test_step_constraint(self):
        basis = build_basis(1, 1.0, 0.9, G32)
        d = NoiseDriver(0.1, 0.01, basis.n_channels, seed=14)
        st = init_state("steady-shear", G32, 32, kind="e", epsilon=0.1, basis=basis, eta0=d.eta)
        with pytest.raises(SystemError):
            step_e(st, basis, d, 0.01)

    def test_zeta_zero_at_start_and_wrong_kind_rejected(self):
        basis = build_basis(1, 1.0, 0.9, G32)
        d = NoiseDriver(0.3, 1e-3, basis.n_channels, seed=15)
        st = init_state("steady-shear", G32, 32, kind="e", epsilon=0.3, basis=basis, eta0=d.eta)
        assert zeta_diagnostic(st).l1 == 0.0
        with pytest.raises(SystemError):
            zeta_diagnostic(init_state("steady-shear", G32, 32, kind="se"))

    def test_zeta_integral_representation(self):
        basis = build_basis(2, 1.0, 0.9, G32)
        eps = 0.35
        diff, size = zeta_representation_check(
            "shear-two-mode", G32, basis, eps, dt=eps**2 / 12, T=0.2, seed=16
        )
        assert diff < 0.35 * size


class TestWeakPairing:
    def test_constant_against_zero_mean(self):
        xi = initial_condition("shear-two-mode", G64)
        one = ScalarField(G64, np.ones((64, 64)))
        assert abs(weak_pairing(xi, one)) <= 1e-10

    def test_sine_self_pairing(self):
        f = TrigTestFunction((1, 0), "sin").field(G64)
        assert weak_pairing(f, f) == pytest.approx(0.5, abs=1e-12)

    def test_parseval_cross_check(self):
        xi = initial_condition("random-band", G64, seed=17)
        f = TrigTestFunction((1, 1), "sin").field(G64)
        assert weak_pairing(xi, f) == pytest.approx(spectral_pairing(xi, f), abs=1e-12)

    def test_grid_mismatch(self):
        with pytest.raises(SystemError):
            weak_pairing(
                initial_condition("steady-shear", G64), initial_condition("steady-shear", G32)
            )


class TestWeakFormResidual:
    def test_zero_basis_steady_state_tiny(self):
        basis = build_basis(1, 1.0, 0.0, G32)
        corr = corrector(basis)
        res = weak_form_residual_run(
            "steady-shear", G32, basis, corr, epsilon=0.5, dt=2e-3, T=0.1
        )
        assert np.max(res) < 1e-4

    def test_zero_basis_refinement(self):
        basis = build_basis(1, 1.0, 0.0, G32)
        corr = corrector(basis)
        r_coarse = weak_form_residual_run(
            "shear-two-mode", G32, basis, corr, epsilon=0.5, dt=4e-3, T=0.12
        )
        r_fine = weak_form_residual_run(
            "shear-two-mode", G32, basis, corr, epsilon=0.5, dt=1e-3, T=0.12
        )
        ratio = np.max(r_coarse) / np.max(r_fine)
        assert 2.0 < ratio < 8.0
