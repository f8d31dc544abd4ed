"""Concave log-Lipschitz modulus, its comparison ODE, and the kernel check.

gamma(r) = r(1 - log r) on (0, 1/e) and r + 1/e beyond is the modulus of
continuity governing uniqueness of the torus Euler characteristics.  The
comparison ODE dz/dt = lambda * gamma(z) admits the closed bound
z_t <= e * z0^exp(-lambda t) for admissible z0, which is checked by direct
high-order integration, and the kernel estimate

    int |K(x-y) - K(x'-y)| dy <= C * gamma(|x-x'|)

is probed on the discrete Biot-Savart kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Grid, ScalarField, biot_savart, geodesic_distance

_BREAK = 1.0 / np.e


def gamma(r):
    """Concave modulus r(1-log r) for 0 < r < 1/e, r + 1/e otherwise; gamma(0)=0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("gamma is defined for r >= 0")
    out = np.where(r >= _BREAK, r + _BREAK, 0.0)
    small = (r > 0) & (r < _BREAK)
    rs = np.where(small, r, 1.0)  # placeholder keeps log() quiet off-branch
    out = np.where(small, rs * (1.0 - np.log(rs)), out)
    return float(out) if out.ndim == 0 else out


def _gamma_scalar(r: float) -> float:
    # plain-float twin of gamma() for tight integration loops
    if r <= 0.0:
        return 0.0
    if r >= _BREAK:
        return r + _BREAK
    return r * (1.0 - np.log(r))


def gamma_ode_max_z0(lam: float, T: float) -> float:
    """Largest admissible initial value exp(1 - 2 e^(lambda T))."""
    return float(np.exp(1.0 - 2.0 * np.exp(lam * T)))


@dataclass
class OdeBoundReport:
    times: np.ndarray
    trajectory: np.ndarray
    bound: np.ndarray
    bound_satisfied: bool
    max_excess: float  # max over steps of z_t - bound_t (negative when satisfied)


def gamma_ode_bound_check(z0: float, lam: float, T: float, steps: int = 0) -> OdeBoundReport:
    """Integrate dz/dt = lambda*gamma(z) with RK4 and test z_t <= e*z0^exp(-lam t).

    z0 must lie in [0, exp(1 - 2 e^(lambda T))].  When steps == 0 the step
    count is chosen from the initial stiffness lambda*(1 - log z0).
    """
    if lam <= 0 or T <= 0:
        raise ValueError("lambda and T must be positive")
    zmax = gamma_ode_max_z0(lam, T)
    if not 0.0 <= z0 <= zmax * (1 + 1e-12):
        raise ValueError(f"z0={z0:.3e} outside admissible range [0, {zmax:.3e}]")
    if steps <= 0:
        rate = lam * (2.0 - np.log(z0)) if z0 > 0 else lam
        steps = int(min(2_000_000, max(400, 60 * rate * T)))
    dt = T / steps
    ts = np.linspace(0.0, T, steps + 1)
    zs = np.empty(steps + 1)
    zs[0] = z0
    z = z0
    g = _gamma_scalar
    for i in range(steps):
        k1 = lam * g(z)
        k2 = lam * g(z + 0.5 * dt * k1)
        k3 = lam * g(z + 0.5 * dt * k2)
        k4 = lam * g(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        zs[i + 1] = z
    if z0 > 0:
        bound = np.exp(1.0 + np.exp(-lam * ts) * np.log(z0))
    else:
        bound = np.zeros_like(ts)
    excess = zs - bound
    ok = bool(np.max(excess) <= 1e-12 * max(1.0, np.max(bound)))
    return OdeBoundReport(ts, zs, bound, ok, float(np.max(excess)))


@dataclass
class KernelCheckReport:
    distances: np.ndarray
    ratios: np.ndarray
    fitted_constant: float  # max over sampled pairs of LHS / gamma(dist)


def discrete_kernel(grid: Grid) -> np.ndarray:
    """Biot-Savart response to a unit grid delta at the origin, shape (2,n,n).

    The delta carries weight h^-2 so that its Riemann integral is one; its
    mean is removed before inversion (the kernel only sees the zero-mean part).
    """
    n = grid.n
    vals = np.zeros((n, n))
    vals[0, 0] = n**2
    vals -= vals.mean()
    u = biot_savart(ScalarField(grid, vals))
    return np.stack([u.u1, u.u2])


def kernel_pair_ratio(G: np.ndarray, grid: Grid, di: int, dj: int) -> tuple[float, float]:
    """(LHS, LHS/gamma(dist)) for a lattice offset (di, dj); ratio is 0 at x = x'."""
    if di % grid.n == 0 and dj % grid.n == 0:
        return 0.0, 0.0
    h = grid.h
    shifted = np.roll(G, (di, dj), axis=(1, 2))
    lhs = float(np.sum(np.hypot(G[0] - shifted[0], G[1] - shifted[1])) * h**2)
    dist = geodesic_distance(np.zeros(2), np.array([di * h, dj * h]))
    return lhs, lhs / gamma(dist)


def log_lip_kernel_check(samples: int, grid: Grid, seed: int = 0) -> KernelCheckReport:
    """Sample pairs (x, x') and bound int |K(x-y)-K(x'-y)| dy by C*gamma(|x-x'|).

    Pair separations are drawn log-uniformly in [h, 0.5] and snapped to the
    lattice, so both the near-singular and the antipodal regime are probed.
    Returns the per-pair ratios and their maximum (the fitted constant).
    """
    n = grid.n
    h = grid.h
    G = discrete_kernel(grid)
    rng = np.random.default_rng(seed)
    dists = []
    ratios = []
    while len(ratios) < samples:
        r = np.exp(rng.uniform(np.log(h), np.log(0.5)))
        phi = rng.uniform(0.0, 2 * np.pi)
        di = int(np.rint(r * np.cos(phi) * n))
        dj = int(np.rint(r * np.sin(phi) * n))
        if di == 0 and dj == 0:
            continue
        _, ratio = kernel_pair_ratio(G, grid, di, dj)
        dists.append(geodesic_distance(np.zeros(2), np.array([di * h, dj * h])))
        ratios.append(ratio)
    dists = np.array(dists)
    ratios = np.array(ratios)
    return KernelCheckReport(dists, ratios, float(ratios.max()))
