"""Flow-map integration for the characteristics of the three systems.

A FlowMap carries the positions of an m-by-m label lattice.  Velocities on
the grid reach the particles through periodic bicubic (Catmull-Rom)
interpolation, which is exact at the nodes, reproduces constants, and has
cubic consistency; the noise fields sigma_k are evaluated at particles
through their closed-form mode expressions instead (no interpolation
error on the stochastic part).

Integrators:
  * colored system: Heun step of the random ODE, the OU weights taken at
    both endpoints of the step (requires dt <= eps^2/10);
  * white-noise limit: the same Heun stages for the drift u + c plus the
    Ito increment sum_k sigma_k(x) dbeta^k evaluated at the left point.

With the noise amplitude at zero the two integrators follow bit-identical
trajectories, which is what makes the deterministic-reduction checks and
the coupled convergence runs meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .driver import DriverIncrement
from .fields import Grid, ScalarField, VectorField, geodesic_distance_points
from .noise import CorrectorField, NoiseBasis


class FlowError(ValueError):
    pass


@dataclass
class FlowMap:
    """Positions of an m*m label lattice on the torus, shape (m*m, 2)."""

    m: int
    positions: np.ndarray
    t: float = 0.0

    @classmethod
    def identity(cls, m: int) -> "FlowMap":
        x = (np.arange(m) + 0.0) / m
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return cls(m, np.stack([X1.ravel(), X2.ravel()], axis=1))

    def labels(self) -> np.ndarray:
        return FlowMap.identity(self.m).positions

    def copy(self) -> "FlowMap":
        return FlowMap(self.m, self.positions.copy(), self.t)


# ---------------------------------------------------------------------------
# periodic bicubic interpolation (Keys / Catmull-Rom, a = -1/2)
# ---------------------------------------------------------------------------

def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Kernel weights for samples at offsets (-1, 0, 1, 2); rows sum to 1."""
    t2 = t * t
    t3 = t2 * t
    w = np.empty(t.shape + (4,))
    w[..., 0] = -0.5 * t3 + t2 - 0.5 * t
    w[..., 1] = 1.5 * t3 - 2.5 * t2 + 1.0
    w[..., 2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w[..., 3] = 0.5 * t3 - 0.5 * t2
    return w


class BicubicTables:
    """Index/weight tables for one set of points, reusable across components."""

    def __init__(self, pts: np.ndarray, n: int):
        x = pts * n
        i0 = np.floor(x).astype(np.int64)
        frac = x - i0
        offs = np.arange(-1, 3)
        self.rows = (i0[:, 0:1] + offs) % n  # (N, 4)
        self.cols = (i0[:, 1:2] + offs) % n
        self.wx = _cubic_weights(frac[:, 0])  # (N, 4)
        self.wy = _cubic_weights(frac[:, 1])

    def apply(self, values: np.ndarray) -> np.ndarray:
        patch = values[self.rows[:, :, None], self.cols[:, None, :]]  # (N, 4, 4)
        return np.einsum("nij,ni,nj->n", patch, self.wx, self.wy)


@dataclass
class Interpolator:
    """Periodic bicubic sampler of a grid scalar field."""

    grid: Grid
    values: np.ndarray

    def at(self, pts: np.ndarray) -> np.ndarray:
        return BicubicTables(pts, self.grid.n).apply(self.values)


def interpolate_vector(u: VectorField, pts: np.ndarray) -> np.ndarray:
    """Bicubic sample of both components, shape (N, 2)."""
    tab = BicubicTables(pts, u.grid.n)
    return np.stack([tab.apply(u.u1), tab.apply(u.u2)], axis=1)


# ---------------------------------------------------------------------------
# time steppers
# ---------------------------------------------------------------------------

def _heun_positions(x: np.ndarray, u: VectorField, dt: float) -> np.ndarray:
    k1 = interpolate_vector(u, x)
    xp = (x + dt * k1) % 1.0
    k2 = interpolate_vector(u, xp)
    return (x + 0.5 * dt * (k1 + k2)) % 1.0


def step_heun(fm: FlowMap, u: VectorField, dt: float) -> FlowMap:
    """Deterministic Heun step against a frozen grid velocity."""
    return FlowMap(fm.m, _heun_positions(fm.positions, u, dt), fm.t + dt)


def step_simplified(
    fm: FlowMap, u: VectorField, basis: NoiseBasis, inc: DriverIncrement, dt: float
) -> FlowMap:
    """Heun step of dx = u(x) dt + sum_k sigma_k(x) eta_k dt.

    The OU weights are taken at the two step endpoints carried by the
    driver increment; dt must not exceed eps^2/10 so the step resolves the
    OU relaxation time.
    """
    eps = inc.epsilon
    if dt > eps**2 / 10.0 + 1e-15:
        raise FlowError(
            f"dt={dt:.3e} exceeds eps^2/10 = {eps**2 / 10:.3e}; "
            "the colored system requires steps resolving the OU time scale"
        )
    if abs(dt - inc.dt) > 1e-15:
        raise FlowError("step dt does not match the driver increment dt")
    x = fm.positions
    k1 = interpolate_vector(u, x) + basis.velocity_at(x, inc.eta0)
    xp = (x + dt * k1) % 1.0
    k2 = interpolate_vector(u, xp) + basis.velocity_at(xp, inc.eta1)
    return FlowMap(fm.m, (x + 0.5 * dt * (k1 + k2)) % 1.0, fm.t + dt)


def step_limit(
    fm: FlowMap,
    u: VectorField,
    basis: NoiseBasis,
    corrector: CorrectorField,
    inc: DriverIncrement,
    dt: float,
) -> FlowMap:
    """Ito step of dx = [u + c](x) dt + sum_k sigma_k(x) dbeta_k.

    The drift runs through the same Heun stages as the colored system (so
    the two coincide exactly when the noise amplitude vanishes); the noise
    increment is evaluated at the left point, keeping the Ito reading.
    """
    if abs(dt - inc.dt) > 1e-15:
        raise FlowError("step dt does not match the driver increment dt")
    x = fm.positions
    tab1 = BicubicTables(x, u.grid.n)
    k1 = np.stack([tab1.apply(u.u1), tab1.apply(u.u2)], axis=1)
    if corrector is not None and corrector.max_abs > 0:
        k1 += np.stack([tab1.apply(corrector.field.u1), tab1.apply(corrector.field.u2)], axis=1)
    xp = (x + dt * k1) % 1.0
    tab2 = BicubicTables(xp, u.grid.n)
    k2 = np.stack([tab2.apply(u.u1), tab2.apply(u.u2)], axis=1)
    if corrector is not None and corrector.max_abs > 0:
        k2 += np.stack([tab2.apply(corrector.field.u1), tab2.apply(corrector.field.u2)], axis=1)
    noise = basis.velocity_at(x, inc.dbeta)
    return FlowMap(fm.m, (x + 0.5 * dt * (k1 + k2) + noise) % 1.0, fm.t + dt)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass
class MeasureReport:
    defect: float
    jacobian_mean: float
    jacobian_std: float
    jacobian_max_dev: float


def measure_preservation_defect(fm: FlowMap, f: ScalarField) -> MeasureReport:
    """Riemann-sum defect |int f(phi(y)) dy - int f dx| plus Jacobian stats.

    Requires the label lattice at full grid resolution (m = n).  The
    Jacobian is estimated from centered differences of the displacement
    field over the label lattice.
    """
    n = f.grid.n
    if fm.m != n:
        raise FlowError("measure check requires label grid at full resolution m = n")
    vals = Interpolator(f.grid, f.values).at(fm.positions)
    defect = abs(float(vals.mean()) - float(f.values.mean()))

    m = fm.m
    disp = fm.positions - fm.labels()
    disp = (disp + 0.5) % 1.0 - 0.5
    D = disp.reshape(m, m, 2)
    hm = 1.0 / m
    d_dy1 = (np.roll(D, -1, axis=0) - np.roll(D, 1, axis=0)) / (2 * hm)
    d_dy2 = (np.roll(D, -1, axis=1) - np.roll(D, 1, axis=1)) / (2 * hm)
    j11 = 1.0 + d_dy1[..., 0]
    j12 = d_dy2[..., 0]
    j21 = d_dy1[..., 1]
    j22 = 1.0 + d_dy2[..., 1]
    det = j11 * j22 - j12 * j21
    return MeasureReport(
        defect, float(det.mean()), float(det.std()), float(np.max(np.abs(det - 1.0)))
    )


def l1_flow_distance(a: FlowMap, b: FlowMap) -> float:
    """Mean geodesic label displacement, the discrete L1 map distance."""
    if a.m != b.m:
        raise FlowError("flow maps carry different label lattices")
    return float(geodesic_distance_points(a.positions, b.positions).mean())


# ---------------------------------------------------------------------------
# auxiliary two-parameter flow from stored velocity checkpoints
# ---------------------------------------------------------------------------

class FlowHistory:
    """Velocity fields stored at every step of a run, for phi_{s,t} queries."""

    def __init__(self, dt: float):
        self.dt = dt
        self.fields: list[VectorField] = []

    def append(self, u: VectorField):
        self.fields.append(u)

    def _index(self, t: float) -> int:
        i = t / self.dt
        if abs(i - round(i)) > 1e-9:
            raise FlowError(f"time {t} not aligned to stored checkpoints")
        i = int(round(i))
        # fields[r] rules the interval [r dt, (r+1) dt), so the admissible
        # endpoints run one past the last stored field
        if not 0 <= i <= len(self.fields):
            raise FlowError(f"time {t} outside stored history")
        return i

    def flow_between(self, s: float, t: float, pts: np.ndarray) -> np.ndarray:
        """Integrate d phi/dt = u(t, phi) from s to t starting at pts."""
        i, j = self._index(s), self._index(t)
        if j < i:
            raise FlowError("backward windows use inverse_flow_between")
        x = pts.copy()
        for r in range(i, j):
            x = _heun_positions(x, self.fields[r], self.dt)
        return x

    def inverse_flow_between(self, s: float, t: float, pts: np.ndarray) -> np.ndarray:
        """(phi_{s,t})^{-1} by integrating the time-reversed velocity."""
        i, j = self._index(s), self._index(t)
        if j < i:
            raise FlowError("window must satisfy s <= t")
        x = pts.copy()
        for r in range(j, i, -1):
            u = self.fields[r - 1]
            neg = VectorField(u.grid, -u.u1, -u.u2)
            x = _heun_positions(x, neg, self.dt)
        return x


def backward_flow(history: FlowHistory, s: float, t: float, pts: np.ndarray) -> np.ndarray:
    """Positions of pts under the auxiliary flow phi_{s,t}."""
    return history.flow_between(s, t, pts)
