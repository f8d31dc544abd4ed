"""Acceptance suite: one test per primary criterion, stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see the one-line
PASS report per criterion with the measured values.
"""

import numpy as np
import pytest

from torusflow.driver import (
    NoiseDriver,
    iterated_integral_check,
    iterated_integral_stationary_mean,
)
from torusflow.fields import Grid, ScalarField, VectorField, biot_savart, curl, divergence, lp_norm
from torusflow.flows import l1_flow_distance
from torusflow.harness import ExperimentConfig, replica_seed, run_sweep
from torusflow.modulus import gamma_ode_bound_check, gamma_ode_max_z0, log_lip_kernel_check
from torusflow.noise import build_basis, corrector
from torusflow.systems import (
    init_state,
    initial_condition,
    range_inflation,
    refresh_fields,
    step_e,
    step_limit_system,
    step_se,
    weak_form_residual_run,
    zeta_diagnostic,
)

G64 = Grid(64)


def report(name: str, detail: str):
    print(f"[ACCEPTANCE] {name}: PASS ({detail})")


def random_band_limited(grid, kmax, rng):
    n = grid.n
    F = np.zeros((n, n), dtype=complex)
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if k1 == 0 and k2 == 0:
                continue
            c = rng.normal() + 1j * rng.normal()
            F[k1 % n, k2 % n] += c
            F[-k1 % n, -k2 % n] += np.conj(c)
    vals = np.fft.ifft2(F).real
    return ScalarField(grid, vals - vals.mean())


def test_c01_biot_savart_correctness():
    """curl(K*xi) = xi and div(K*xi) = 0 to 1e-10, 20 random fields, n=64."""
    rng = np.random.default_rng(101)
    worst_curl = worst_div = 0.0
    for _ in range(20):
        xi = random_band_limited(G64, 16, rng)
        u = biot_savart(xi)
        worst_curl = max(worst_curl, float(np.max(np.abs(curl(u).values - xi.values))))
        worst_div = max(worst_div, float(np.max(np.abs(divergence(u).values))))
    assert worst_curl <= 1e-10
    assert worst_div <= 1e-10
    report("biot_savart", f"max curl err {worst_curl:.2e}, max div {worst_div:.2e}")


def test_c02_ou_law():
    """Stationary variance eps^-2/2 and autocovariance decay, 3 stderr."""
    worst_var_z = worst_cov_z = 0.0
    R = 10_000
    for eps in (0.4, 0.2, 0.1):
        d = NoiseDriver(eps, eps**2 / 4, R, seed=202)
        for _ in range(8):
            d.advance()
        eta_a = d.eta.copy()
        for _ in range(4):  # lag = eps^2
            d.advance()
        eta_b = d.eta.copy()
        target = eps**-2 / 2
        z_var = abs(eta_a.var() - target) / (target * np.sqrt(2.0 / R))
        lag = 4 * d.dt
        cov_t = target * np.exp(-lag / eps**2)
        rho = cov_t / target
        z_cov = abs(np.mean(eta_a * eta_b) - cov_t) / (target * np.sqrt((1 + rho**2) / R))
        worst_var_z = max(worst_var_z, z_var)
        worst_cov_z = max(worst_cov_z, z_cov)
        assert z_var < 3.0
        assert z_cov < 3.0
    report("ou_law", f"max var z {worst_var_z:.2f}, max autocov z {worst_cov_z:.2f}")


def test_c03_integrated_ou_brownian_closeness():
    """RMS of sup_t |int eta - beta| <= 3 eps, 10^3 replicas, T = 1."""
    worst = 0.0
    for eps in (0.4, 0.3, 0.2, 0.15, 0.1):
        d = NoiseDriver(eps, eps**2 / 10, 1000, seed=303)
        eta0 = d.eta.copy()
        sup = np.zeros(1000)
        for _ in range(int(round(1.0 / d.dt))):
            inc = d.advance()
            np.maximum(sup, np.abs(eps**2 * (inc.eta1 - eta0)), out=sup)
        rms = float(np.sqrt((sup**2).mean()))
        assert rms <= 3 * eps, f"eps={eps}: RMS {rms:.3f} > {3 * eps}"
        worst = max(worst, rms / eps)
    report("integrated_ou", f"worst RMS/eps = {worst:.2f} (bound 3)")


def test_c04_iterated_integral_formula():
    """Conditional mean of the one-mesh iterated integral, 3 stderr + limit."""
    eps = 0.3
    delta = eps ** (7 / 4)
    st_same = iterated_integral_check(eps, delta, True, 100_000, seed=404)
    st_cross = iterated_integral_check(eps, delta, False, 100_000, seed=405)
    assert abs(st_same.z_score) < 3.0
    assert abs(st_cross.z_score) < 3.0

    # closed form approaches delta/2 once the mesh dwarfs the relaxation time
    for r in (10.0, 15.0, 20.0, 50.0):
        ratio = iterated_integral_stationary_mean(0.2, r * 0.2**2, True) / (r * 0.2**2 / 2)
        assert abs(ratio - 1.0) <= 0.1

    # and the simulated value agrees with delta/2 within 10% there
    eps_l = 0.25
    delta_l = 15.0 * eps_l**2
    st_lim = iterated_integral_check(eps_l, delta_l, True, 100_000, seed=406)
    gap = abs(st_lim.empirical_mean - st_lim.limit_value) / st_lim.limit_value
    assert gap <= 0.10
    report(
        "iterated_integral",
        f"z_same {st_same.z_score:+.2f}, z_cross {st_cross.z_score:+.2f}, "
        f"mesh-limit gap {gap:.3f}",
    )


def test_c05_comparison_ode_bound():
    """z_t <= e z0^exp(-lam t) on 50 random admissible (z0, lam, T)."""
    rng = np.random.default_rng(505)
    worst = -np.inf
    for _ in range(50):
        lam = rng.uniform(0.3, 2.5)
        T = rng.uniform(0.2, 1.5)
        z0 = rng.uniform(0.0, 1.0) * gamma_ode_max_z0(lam, T)
        rep = gamma_ode_bound_check(z0, lam, T)
        assert rep.bound_satisfied
        worst = max(worst, rep.max_excess)
    report("comparison_ode", f"max excess over bound {worst:.2e}")


def test_c06_log_lip_constant_stability():
    """Fitted kernel constant agrees within factor 2 between n=64 and n=128."""
    c64 = log_lip_kernel_check(200, Grid(64), seed=606).fitted_constant
    c128 = log_lip_kernel_check(200, Grid(128), seed=607).fitted_constant
    ratio = max(c64 / c128, c128 / c64)
    assert ratio <= 2.0
    report("log_lip", f"C(64) = {c64:.3f}, C(128) = {c128:.3f}, spread {ratio:.2f}")


def test_c07_measure_preservation():
    """No-noise Euler at n=128, dt=1e-3, T=0.5: defect <= 1e-3, range <= 2%."""
    from torusflow.flows import measure_preservation_defect

    grid = Grid(128)
    basis = build_basis(1, 1.0, 0.0, grid)
    details = []
    for ic in ("steady-shear", "shear-two-mode"):
        st = init_state(ic, grid, 128, kind="se")
        xi0 = initial_condition(ic, grid)
        d = NoiseDriver(0.5, 1e-3, basis.n_channels, seed=707)
        for _ in range(500):
            step_se(st, basis, d, 1e-3)
        refresh_fields(st)
        rep = measure_preservation_defect(st.flow, xi0)
        infl = range_inflation(st)
        assert rep.defect <= 1e-3, f"{ic}: defect {rep.defect:.2e}"
        assert infl <= 0.02, f"{ic}: range inflation {infl:.3f}"
        details.append(f"{ic}: defect {rep.defect:.2e}, inflation {infl:.4f}")
    report("measure_preservation", "; ".join(details))


def test_c08_deterministic_reduction():
    """Amplitude 0: all three systems within 1e-6 in sup L1 flow distance."""
    basis = build_basis(3, 1.0, 0.0, G64)
    corr = corrector(basis)
    eps, dt, steps = 0.4, 1e-3, 500
    se_st = init_state("shear-two-mode", G64, 64, kind="se")
    li_st = init_state("shear-two-mode", G64, 64, kind="limit")
    e_st = init_state(
        "shear-two-mode", G64, 64, kind="e", epsilon=eps, basis=basis, zero_small_scale=True
    )
    d = NoiseDriver(eps, dt, basis.n_channels, seed=808)
    sup_ab = sup_ac = sup_bc = 0.0
    for _ in range(steps):
        inc = d.advance()
        step_se(se_st, basis, inc, dt)
        step_limit_system(li_st, basis, corr, inc, dt)
        step_e(e_st, basis, inc, dt)
        sup_ab = max(sup_ab, l1_flow_distance(se_st.flow, li_st.flow))
        sup_ac = max(sup_ac, l1_flow_distance(se_st.flow, e_st.flow))
        sup_bc = max(sup_bc, l1_flow_distance(li_st.flow, e_st.flow))
    assert max(sup_ab, sup_ac, sup_bc) <= 1e-6
    report("deterministic_reduction", f"max pairwise sup distance {max(sup_ab, sup_ac, sup_bc):.2e}")


def test_c09_zeta_bound():
    """||zeta||_1 / (eps^2 sup ||grad Theta||) spread <= 3 over eps, M=4."""
    basis = build_basis(3, 1.0, 0.9, G64)
    cfg = ExperimentConfig()
    means = {}
    for ei, eps in enumerate((0.4, 0.2, 0.1)):
        dt = min(eps**2 / 10, 1e-3)
        vals = []
        for r in range(4):
            d = NoiseDriver(eps, dt, basis.n_channels, seed=replica_seed(cfg, ei, r))
            st = init_state(
                "shear-two-mode", G64, 64, kind="e", epsilon=eps, basis=basis, eta0=d.eta
            )
            rmax = 0.0
            for _ in range(int(round(0.5 / dt))):
                step_e(st, basis, d, dt)
                rmax = max(rmax, zeta_diagnostic(st).bound_ratio)
            vals.append(rmax)
        means[eps] = float(np.mean(vals))
    spread = max(means.values()) / min(means.values())
    assert spread <= 3.0
    report("zeta_bound", f"ratio means {means}, spread {spread:.2f}")


@pytest.fixture(scope="module")
def trend_sweep():
    cfg = ExperimentConfig(workers=2)  # acceptance defaults
    return run_sweep(cfg)


def test_c10_wong_zakai_trend(trend_sweep):
    """Matched-seed means decrease in eps, <= 1 inversion within 1 stderr."""
    details = []
    for system in ("se", "e"):
        for metric in (f"flow_l1_{system}", f"vel_l1_{system}", f"weak_gap_{system}"):
            rep = trend_sweep.monotonicity[metric]
            assert rep["inversions"] <= 1, f"{metric}: {rep}"
            if rep["inversions"] == 1:
                assert rep["max_violation_stderr"] <= 1.0, f"{metric}: {rep}"
            details.append(f"{metric}: inversions {rep['inversions']}")
    n_failed = sum(1 for r in trend_sweep.records if r.failed)
    assert n_failed == 0
    report("wong_zakai_trend", "; ".join(details))


def test_c11_weak_form_residual_order():
    """Quartering dt halves the RMS residual within +-30%, 16 replicas."""
    basis = build_basis(3, 1.0, 0.9, G64)
    corr = corrector(basis)
    R = 16

    def rms_at(dt, seed0):
        res = np.array(
            [
                weak_form_residual_run(
                    "shear-two-mode", G64, basis, corr, epsilon=0.3, dt=dt, T=0.25, seed=seed0 + r
                )
                for r in range(R)
            ]
        )
        return np.sqrt((res**2).mean(axis=0))

    coarse = rms_at(4e-3, 1100)
    fine = rms_at(1e-3, 1100)
    ratios = coarse / fine
    for r in ratios:
        assert 1.4 <= r <= 2.6, f"halving ratios {ratios}"
    report("weak_form_residual", f"RMS ratios across test functions {np.round(ratios, 2)}")
