import numpy as np
import pytest

from torusflow.fields import (
    FieldError,
    Grid,
    ScalarField,
    TorusPoint,
    VectorField,
    biot_savart,
    curl,
    dealias,
    divergence,
    from_spectral,
    geodesic_distance,
    gradient,
    lp_norm,
    to_spectral,
)


def random_band_limited(grid, kmax, rng, zero_mean=True):
    """Random real field with modes only in |k|_inf <= kmax."""
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
    if zero_mean:
        vals -= vals.mean()
    return ScalarField(grid, vals)


GRID = Grid(64)
X1, X2 = GRID.nodes()


class TestTransforms:
    def test_constant_field_single_coefficient(self):
        F = to_spectral(ScalarField(GRID, np.ones((64, 64))))
        assert F.coeffs[0, 0] == pytest.approx(1.0)
        off = F.coeffs.copy()
        off[0, 0] = 0.0
        assert np.max(np.abs(off)) < 1e-14

    def test_cosine_mode_coefficients(self):
        f = ScalarField(GRID, np.cos(2 * np.pi * X1))
        F = to_spectral(f)
        assert F.coeffs[1, 0] == pytest.approx(0.5, abs=1e-13)
        assert F.coeffs[-1, 0] == pytest.approx(0.5, abs=1e-13)
        F.coeffs[1, 0] = F.coeffs[-1, 0] = 0.0
        assert np.max(np.abs(F.coeffs)) < 1e-13

    def test_round_trip_random(self):
        rng = np.random.default_rng(7)
        f = ScalarField(GRID, rng.normal(size=(64, 64)))
        g = from_spectral(to_spectral(f))
        scale = np.max(np.abs(f.values))
        assert np.max(np.abs(g.values - f.values)) <= 1e-12 * scale

    def test_hermitian_defect_zero_for_real_fields(self):
        rng = np.random.default_rng(8)
        F = to_spectral(ScalarField(GRID, rng.normal(size=(64, 64))))
        assert F.hermitian_defect() < 1e-12

    def test_size_mismatch_rejected(self):
        with pytest.raises(FieldError):
            ScalarField(GRID, np.zeros((32, 32)))


class TestBiotSavart:
    def test_zero_field(self):
        u = biot_savart(ScalarField(GRID, np.zeros((64, 64))))
        assert np.max(np.abs(u.u1)) == 0.0
        assert np.max(np.abs(u.u2)) == 0.0

    def test_single_sine_mode(self):
        # curl u = sin(2 pi x1) with u = (0, -cos(2 pi x1)/(2 pi))
        xi = ScalarField(GRID, np.sin(2 * np.pi * X1))
        u = biot_savart(xi)
        assert np.max(np.abs(u.u1)) < 1e-13
        expected = -np.cos(2 * np.pi * X1) / (2 * np.pi)
        assert np.max(np.abs(u.u2 - expected)) < 1e-13
        back = curl(u)
        assert np.max(np.abs(back.values - xi.values)) < 1e-12

    def test_curl_and_divergence_roundtrip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            xi = random_band_limited(GRID, 12, rng)
            u = biot_savart(xi)
            assert np.max(np.abs(curl(u).values - xi.values)) <= 1e-10
            assert np.max(np.abs(divergence(u).values)) <= 1e-10

    def test_zero_mode_of_output_vanishes(self):
        rng = np.random.default_rng(12)
        u = biot_savart(random_band_limited(GRID, 6, rng))
        assert abs(u.u1.mean()) < 1e-13
        assert abs(u.u2.mean()) < 1e-13

    def test_nonzero_mean_rejected(self):
        with pytest.raises(FieldError):
            biot_savart(ScalarField(GRID, np.ones((64, 64))))


class TestDerivatives:
    def test_curl_of_shear(self):
        u = VectorField(GRID, np.zeros((64, 64)), np.sin(2 * np.pi * X1))
        w = curl(u)
        assert np.max(np.abs(w.values - 2 * np.pi * np.cos(2 * np.pi * X1))) < 1e-12

    def test_gradient_field_has_zero_curl(self):
        rng = np.random.default_rng(13)
        g = random_band_limited(GRID, 10, rng)
        w = curl(gradient(g))
        assert np.max(np.abs(w.values)) <= 1e-10

    def test_dealias_removes_high_modes(self):
        f = ScalarField(GRID, np.cos(2 * np.pi * 30 * X1) + np.cos(2 * np.pi * X2))
        g = dealias(f)
        assert np.max(np.abs(g.values - np.cos(2 * np.pi * X2))) < 1e-12


class TestNorms:
    def test_l1_of_constant(self):
        assert lp_norm(ScalarField(GRID, 2 * np.ones((64, 64))), 1) == pytest.approx(2.0)

    def test_l2_of_sine(self):
        f = ScalarField(GRID, np.sin(2 * np.pi * X1))
        # the lattice sum of sin^2 is exactly n^2/2
        assert lp_norm(f, 2) == pytest.approx(1 / np.sqrt(2), abs=1e-12)

    def test_linf(self):
        f = ScalarField(GRID, np.sin(2 * np.pi * X1))
        assert lp_norm(f, np.inf) == pytest.approx(1.0, abs=1e-12)

    def test_biot_savart_l2_multiplier_bound(self):
        # |u_hat| = |xi_hat| / (2 pi |k|), largest at |k| = 1
        rng = np.random.default_rng(14)
        for _ in range(5):
            xi = random_band_limited(GRID, 8, rng)
            u = biot_savart(xi)
            assert lp_norm(u, 2) <= lp_norm(xi, 2) / (2 * np.pi) + 1e-12


class TestGeodesic:
    def test_coincident(self):
        assert geodesic_distance(TorusPoint(0.3, 0.7), TorusPoint(0.3, 0.7)) == 0.0

    def test_wraparound(self):
        assert geodesic_distance(TorusPoint(0, 0), TorusPoint(0.9, 0)) == pytest.approx(0.1)

    def test_antipodal(self):
        d = geodesic_distance(TorusPoint(0, 0), TorusPoint(0.5, 0.5))
        assert d == pytest.approx(np.sqrt(2) / 2)

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(15)
        for _ in range(1000):
            a, b, c = rng.uniform(size=(3, 2))
            dab = geodesic_distance(a, b)
            dba = geodesic_distance(b, a)
            dac = geodesic_distance(a, c)
            dcb = geodesic_distance(c, b)
            assert dab == pytest.approx(dba, abs=1e-15)
            assert dab <= dac + dcb + 1e-12

    def test_point_reduced_mod_one(self):
        p = TorusPoint(1.25, -0.25)
        assert p.x1 == pytest.approx(0.25)
        assert p.x2 == pytest.approx(0.75)
