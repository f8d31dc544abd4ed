"""Solenoidal noise basis on the torus.

Real sin/cos pairs over a half-lattice of wavevectors replace the complex
exponentials: for each k with 0 < |k|_inf <= K_max kept by the half-lattice
rule (k1 > 0, or k1 = 0 and k2 > 0) the two scalar modes are

    theta_{k,cos}(x) = a_k cos(2 pi k.x),   theta_{k,sin}(x) = a_k sin(2 pi k.x),

with a_k = sqrt(2) * q_k and decay weights q_k = amplitude * |k|^-(3+delta).
Their Biot-Savart images have the closed form

    sigma_{k,cos}(x) = +a_k w_k sin(2 pi k.x),
    sigma_{k,sin}(x) = -a_k w_k cos(2 pi k.x),      w_k = k_perp / (2 pi |k|^2),

which is used for exact pointwise evaluation at particle positions; the
grid representation is computed independently through the spectral solver
so the two routes cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Grid, ScalarField, VectorField, biot_savart, gradient

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Mode:
    k: tuple[int, int]
    phase: str  # "cos" or "sin"
    q: float


def half_lattice(k_max: int) -> list[tuple[int, int]]:
    """Wavevectors with 0 < |k|_inf <= k_max, one per +-k pair."""
    out = []
    for k1 in range(0, k_max + 1):
        for k2 in range(-k_max, k_max + 1):
            if k1 == 0 and k2 <= 0:
                continue
            out.append((k1, k2))
    return out


class NoiseBasis:
    """Immutable family {theta_k, sigma_k} with exact evaluators.

    Channels are ordered [cos, sin] per wavevector, so n_channels is twice
    the half-lattice size.
    """

    def __init__(self, grid: Grid, k_max: int, decay_exponent: float, amplitude: float):
        if k_max < 1:
            raise ValueError("k_max must be >= 1")
        if decay_exponent <= 0:
            raise ValueError("decay exponent must be positive")
        self.grid = grid
        self.k_max = k_max
        self.decay_exponent = decay_exponent
        self.amplitude = amplitude

        kvecs = half_lattice(k_max)
        self.kvec = np.array(kvecs, dtype=float)  # (M, 2)
        self._k1_idx = np.array([k[0] for k in kvecs])
        self._k2_abs = np.array([abs(k[1]) for k in kvecs])
        self._k2_sign = np.array([float(np.sign(k[1])) if k[1] else 1.0 for k in kvecs])
        knorm = np.hypot(self.kvec[:, 0], self.kvec[:, 1])
        self.q = amplitude / knorm ** (3.0 + decay_exponent)
        self.amp = np.sqrt(2.0) * self.q
        kperp = np.stack([-self.kvec[:, 1], self.kvec[:, 0]], axis=1)
        self.wvec = kperp / (TWO_PI * knorm**2)[:, None]  # (M, 2)
        self.modes = [
            Mode(k, phase, q) for k, q in zip(kvecs, self.q) for phase in ("cos", "sin")
        ]
        self.n_channels = 2 * len(kvecs)

        X1, X2 = grid.nodes()
        P = TWO_PI * (self.kvec[:, 0, None, None] * X1 + self.kvec[:, 1, None, None] * X2)
        cosP, sinP = np.cos(P), np.sin(P)
        n = grid.n
        M = len(kvecs)
        self.theta_fields = np.empty((self.n_channels, n, n))
        self.theta_fields[0::2] = self.amp[:, None, None] * cosP
        self.theta_fields[1::2] = self.amp[:, None, None] * sinP

        # grad theta, closed form: cos-mode -> -a 2pi k sin, sin-mode -> +a 2pi k cos
        self.grad_theta_fields = np.empty((self.n_channels, 2, n, n))
        for ax in range(2):
            coef = TWO_PI * self.amp * self.kvec[:, ax]
            self.grad_theta_fields[0::2, ax] = -coef[:, None, None] * sinP
            self.grad_theta_fields[1::2, ax] = coef[:, None, None] * cosP

        # sigma on the grid via the spectral Biot-Savart solver (independent
        # of the closed-form particle evaluators above)
        self.sigma_fields = np.empty((self.n_channels, 2, n, n))
        for c in range(self.n_channels):
            u = biot_savart(ScalarField(grid, self.theta_fields[c]))
            self.sigma_fields[c, 0] = u.u1
            self.sigma_fields[c, 1] = u.u2

        # truncated (A1) sums; |grad theta_k|_inf = a_k 2 pi |k| and the
        # R^8 Hessian norm of sigma_k takes the same value
        self.a1_grad_theta_sum = float(np.sum(2 * (self.amp * TWO_PI * knorm)))
        self.a1_hess_sigma_sum = self.a1_grad_theta_sum
        if not np.isfinite(self.a1_grad_theta_sum):
            raise ValueError("(A1) sum is not finite")
        self.sigma_sup = float(np.max(self.amp / (TWO_PI * knorm)))

    # -- exact pointwise evaluators ----------------------------------------

    def trig_at(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(sin, cos) of 2 pi k.x for every half-lattice k; shape (N, M) each.

        Wavevectors are small integers, so cos/sin of k.x come from integer
        angle addition of the two per-axis phases: four trig calls per point
        replace 2M of them.
        """
        km = self.k_max
        N = pts.shape[0]
        a1 = TWO_PI * pts[:, 0]
        a2 = TWO_PI * pts[:, 1]
        c1t = np.empty((N, km + 1))
        s1t = np.empty((N, km + 1))
        c2t = np.empty((N, km + 1))
        s2t = np.empty((N, km + 1))
        c1t[:, 0] = c2t[:, 0] = 1.0
        s1t[:, 0] = s2t[:, 0] = 0.0
        c1t[:, 1] = np.cos(a1)
        s1t[:, 1] = np.sin(a1)
        c2t[:, 1] = np.cos(a2)
        s2t[:, 1] = np.sin(a2)
        for p in range(2, km + 1):
            c1t[:, p] = c1t[:, p - 1] * c1t[:, 1] - s1t[:, p - 1] * s1t[:, 1]
            s1t[:, p] = s1t[:, p - 1] * c1t[:, 1] + c1t[:, p - 1] * s1t[:, 1]
            c2t[:, p] = c2t[:, p - 1] * c2t[:, 1] - s2t[:, p - 1] * s2t[:, 1]
            s2t[:, p] = s2t[:, p - 1] * c2t[:, 1] + c2t[:, p - 1] * s2t[:, 1]
        ca = c1t[:, self._k1_idx]
        sa = s1t[:, self._k1_idx]
        cb = c2t[:, self._k2_abs]
        sb = s2t[:, self._k2_abs] * self._k2_sign[None, :]
        return sa * cb + ca * sb, ca * cb - sa * sb

    def velocity_from_trig(self, S, C, weights: np.ndarray) -> np.ndarray:
        """sum_k weights_k sigma_k(x) given precomputed trig tables."""
        if not self.amp.any() or not np.any(weights):
            return np.zeros((S.shape[0], 2))
        coef_sin = self.amp * weights[0::2]  # cos-phase modes ride on sin(P)
        coef_cos = -self.amp * weights[1::2]  # sin-phase modes ride on -cos(P)
        T = S * coef_sin + C * coef_cos
        return T @ self.wvec

    def velocity_at(self, pts: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Exact sum_k weights_k sigma_k at arbitrary points, shape (N, 2)."""
        if not self.amp.any() or not np.any(weights):
            return np.zeros((pts.shape[0], 2))
        S, C = self.trig_at(pts)
        return self.velocity_from_trig(S, C, weights)

    def velocity_at_batch(self, pts: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Per-point channel weights: pts (N, 2), weights (N, n_channels).

        Row i receives sum_k weights[i, k] sigma_k(pts[i]); used by Monte
        Carlo checks where each point is an independent replica.
        """
        S, C = self.trig_at(pts)
        coef_sin = self.amp * weights[:, 0::2]
        coef_cos = -self.amp * weights[:, 1::2]
        return (S * coef_sin + C * coef_cos) @ self.wvec

    def theta_at(self, pts: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Exact sum_k weights_k theta_k at arbitrary points, shape (N,)."""
        S, C = self.trig_at(pts)
        return C @ (self.amp * weights[0::2]) + S @ (self.amp * weights[1::2])

    def sigma_closed_form_grid(self) -> np.ndarray:
        """Closed-form sigma fields at grid nodes, same layout as sigma_fields."""
        X1, X2 = self.grid.nodes()
        pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
        n = self.grid.n
        out = np.empty_like(self.sigma_fields)
        S, C = self.trig_at(pts)
        for j in range(len(self.kvec)):
            base = self.amp[j] * self.wvec[j]  # (2,)
            out[2 * j, 0] = (S[:, j] * base[0]).reshape(n, n)
            out[2 * j, 1] = (S[:, j] * base[1]).reshape(n, n)
            out[2 * j + 1, 0] = (-C[:, j] * base[0]).reshape(n, n)
            out[2 * j + 1, 1] = (-C[:, j] * base[1]).reshape(n, n)
        return out

    # -- weighted grid fields ----------------------------------------------

    def combine_theta_values(self, weights: np.ndarray) -> np.ndarray:
        n = self.grid.n
        return (weights @ self.theta_fields.reshape(self.n_channels, -1)).reshape(n, n)

    def combine_theta(self, weights: np.ndarray) -> ScalarField:
        return ScalarField(self.grid, self.combine_theta_values(weights))

    def _combine_grad_values(self, weights: np.ndarray) -> np.ndarray:
        n = self.grid.n
        return (weights @ self.grad_theta_fields.reshape(self.n_channels, -1)).reshape(2, n, n)

    def combine_grad_theta(self, weights: np.ndarray) -> VectorField:
        g = self._combine_grad_values(weights)
        return VectorField(self.grid, g[0], g[1])

    def grad_theta_sup(self, weights: np.ndarray) -> float:
        g = self._combine_grad_values(weights)
        return float(np.max(g[0] ** 2 + g[1] ** 2)) ** 0.5


def build_basis(k_max: int, decay_exponent: float, amplitude: float, grid: Grid) -> NoiseBasis:
    return NoiseBasis(grid, k_max, decay_exponent, amplitude)


@dataclass
class CorrectorField:
    """Drift converting the Stratonovich flow equation to Ito form."""

    field: VectorField
    max_abs: float


def corrector(basis: NoiseBasis) -> CorrectorField:
    """(1/2) sum_k (sigma_k . grad) sigma_k assembled from the grid fields.

    For purely trigonometric modes each term vanishes identically (the mode
    direction w_k is orthogonal to its own wavevector), so this evaluates to
    zero up to spectral round-off; it is computed rather than assumed so a
    different basis would be handled correctly.
    """
    n = basis.grid.n
    acc = np.zeros((2, n, n))
    for c in range(basis.n_channels):
        s1 = basis.sigma_fields[c, 0]
        s2 = basis.sigma_fields[c, 1]
        for ax, comp in enumerate((s1, s2)):
            g = gradient(ScalarField(basis.grid, comp))
            acc[ax] += 0.5 * (s1 * g.u1 + s2 * g.u2)
    field = VectorField(basis.grid, acc[0], acc[1])
    return CorrectorField(field, float(np.max(np.hypot(acc[0], acc[1]))))


def mode_self_advection_coeff(basis: NoiseBasis) -> tuple[np.ndarray, np.ndarray]:
    """Per-wavevector strengths of (sigma_k . grad) sigma_k and its divergence.

    (sigma.grad)sigma = a^2 2pi (w.k) w sin(P)cos(P) for either phase, and
    its divergence picks up a second 2pi (w.k) factor.  Both coefficients
    vanish identically here because w_k is orthogonal to k, but they are
    computed, not assumed, so a non-shear basis would flow through.
    """
    wdotk = TWO_PI * np.einsum("ma,ma->m", basis.wvec, basis.kvec)
    adv = basis.amp**2 * wdotk
    return adv, adv * wdotk


def corrector_closed_form_at(basis: NoiseBasis, pts: np.ndarray) -> np.ndarray:
    """Per-mode analytic corrector at points; each term carries a w_k.k factor.

    w_k.k = 0 for every mode, so the result is exactly zero for this basis.
    """
    S, C = basis.trig_at(pts)
    wdotk = np.einsum("ma,ma->m", basis.wvec, TWO_PI * basis.kvec)  # identically 0
    out = np.zeros((pts.shape[0], 2))
    # cos-phase: sigma = a w sin(P), (sigma.grad)sigma = a^2 (w.2pik) w sin cos
    coef = 0.5 * basis.amp**2 * wdotk
    out += ((S * C) * coef) @ basis.wvec
    # sin-phase: sigma = -a w cos(P), same product with opposite trig signs
    out += ((C * S) * coef) @ basis.wvec
    return out


def theta_field(basis: NoiseBasis, eta: np.ndarray) -> ScalarField:
    """Colored small-scale field Theta = sum_k theta_k eta_k on the grid."""
    if eta.shape != (basis.n_channels,):
        raise ValueError("channel count mismatch between basis and driver state")
    return basis.combine_theta(eta)


def w_field(basis: NoiseBasis, beta: np.ndarray) -> ScalarField:
    """Cylindrical Brownian field W = sum_k theta_k beta_k on the grid."""
    if beta.shape != (basis.n_channels,):
        raise ValueError("channel count mismatch between basis and driver state")
    return basis.combine_theta(beta)


def b_field(basis: NoiseBasis, beta: np.ndarray) -> VectorField:
    """Vector Brownian field B = -K * W."""
    w = w_field(basis, beta)
    u = biot_savart(ScalarField(basis.grid, w.values - w.values.mean()))
    return VectorField(basis.grid, -u.u1, -u.u2, solenoidal=True)
