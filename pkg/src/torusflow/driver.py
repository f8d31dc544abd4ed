"""Coupled exact simulation of Brownian channels and their OU smoothings.

Each channel k carries a standard Brownian motion beta^k and the
Ornstein-Uhlenbeck process

    eta_t = e^(-t/eps^2) eta_0 + int_0^t eps^-2 e^(-(t-s)/eps^2) dbeta_s,

i.e. d eta = -eps^-2 eta dt + eps^-2 dbeta.  One step draws the pair
(dbeta, I) from its exact joint Gaussian law,

    Var(dbeta) = dt,
    Var(I)     = eps^-2 (1 - e^(-2 dt/eps^2)) / 2,
    Cov        = 1 - e^(-dt/eps^2),

where I is the stochastic-integral part of the eta update, so the same
Gaussian draws drive both the colored system and the white-noise limit.
The time integral of eta never uses quadrature; it follows from the exact
identity  int_s^t eta dr = (beta_t - beta_s) - eps^2 (eta_t - eta_s).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DriverIncrement:
    """State of all channels across one step [t0, t1]."""

    t0: float
    t1: float
    dt: float
    epsilon: float
    eta0: np.ndarray
    eta1: np.ndarray
    dbeta: np.ndarray
    dint: np.ndarray  # eta1 - decay * eta0, the forcing part of the update


class NoiseDriver:
    """Exact OU/Brownian channel bank sharing one Gaussian source.

    Confine one driver to one replica; reproducibility is per seed: the
    same seed yields bit-identical paths.
    """

    def __init__(
        self,
        epsilon: float,
        dt: float,
        n_channels: int,
        seed,
        stationary_init: bool = True,
        record: bool = False,
    ):
        if epsilon <= 0 or dt <= 0:
            raise ValueError("epsilon and dt must be positive")
        self.epsilon = epsilon
        self.dt = dt
        self.n_channels = n_channels
        self.rng = np.random.default_rng(seed)
        self.stationary_init = stationary_init

        a = dt / epsilon**2
        self.decay = float(np.exp(-a))
        self.int_var = 0.5 * epsilon**-2 * (1.0 - self.decay**2)
        self.cov = 1.0 - self.decay
        self.resid_sd = float(np.sqrt(max(self.int_var - self.cov**2 / dt, 0.0)))

        self.step_index = 0
        self.beta = np.zeros(n_channels)
        if stationary_init:
            self.eta = self.rng.normal(0.0, epsilon**-1 / np.sqrt(2.0), n_channels)
        else:
            self.eta = np.zeros(n_channels)
        self.record = record
        self.history_beta = [self.beta.copy()] if record else None
        self.history_eta = [self.eta.copy()] if record else None

    @property
    def t(self) -> float:
        return self.step_index * self.dt

    def advance(self) -> DriverIncrement:
        """Advance every channel by dt with the exact joint Gaussian draw."""
        z = self.rng.standard_normal((2, self.n_channels))
        dbeta = np.sqrt(self.dt) * z[0]
        dint = (self.cov / self.dt) * dbeta + self.resid_sd * z[1]
        eta0 = self.eta
        eta1 = self.decay * eta0 + dint
        t0 = self.t
        self.step_index += 1
        self.beta = self.beta + dbeta
        self.eta = eta1
        if self.record:
            self.history_beta.append(self.beta.copy())
            self.history_eta.append(self.eta.copy())
        return DriverIncrement(t0, self.t, self.dt, self.epsilon, eta0, eta1, dbeta, dint)


def integrated_ou(driver: NoiseDriver, channel: int, s: float, t: float) -> float:
    """int_s^t eta^k dr from the exact identity, windows aligned to steps."""
    if not driver.record:
        raise ValueError("driver must be constructed with record=True")
    for name, val in (("s", s), ("t", t)):
        if abs(val / driver.dt - round(val / driver.dt)) > 1e-9:
            raise ValueError(f"window endpoint {name}={val} not aligned to driver steps")
    i = int(round(s / driver.dt))
    j = int(round(t / driver.dt))
    if not 0 <= i <= j <= driver.step_index:
        raise ValueError("window outside recorded history")
    dbeta = driver.history_beta[j][channel] - driver.history_beta[i][channel]
    deta = driver.history_eta[j][channel] - driver.history_eta[i][channel]
    return float(dbeta - driver.epsilon**2 * deta)


@dataclass
class OuSupReport:
    epsilon: float
    T: float
    replicas: int
    mean_sup: float
    mean_sup_sq: float
    ratio: float  # mean_sup / (eps^-1 sqrt(log(1 + eps^-2)))


def ou_sup_check(epsilon: float, T: float, replicas: int, seed=0, dt=None) -> OuSupReport:
    """Monte Carlo estimate of E[sup |eta|] over [0, T] against the OU scaling."""
    if dt is None:
        dt = epsilon**2 / 10.0
    steps = max(1, int(round(T / dt)))
    d = NoiseDriver(epsilon, dt, replicas, seed)
    sup = np.abs(d.eta.copy())
    for _ in range(steps):
        inc = d.advance()
        np.maximum(sup, np.abs(inc.eta1), out=sup)
    scale = epsilon**-1 * np.sqrt(np.log1p(epsilon**-2))
    return OuSupReport(
        epsilon, T, replicas, float(sup.mean()), float((sup**2).mean()), float(sup.mean() / scale)
    )


# ---------------------------------------------------------------------------
# iterated integrals of the OU process over one mesh interval
# ---------------------------------------------------------------------------

def iterated_integral_cond_mean(
    epsilon: float, delta: float, eta_h0, eta_k0, same_channel: bool
):
    """Conditional mean of int_0^delta (int_0^s eta^h dr) eta^k ds given eta_0."""
    r = delta / epsilon**2
    e1 = np.exp(-r)
    val = 0.5 * epsilon**4 * np.asarray(eta_h0) * np.asarray(eta_k0) * (e1 - 1.0) ** 2
    if same_channel:
        val += 0.5 * (delta + epsilon**2 * (-1.5 + 2.0 * e1 - 0.5 * np.exp(-2.0 * r)))
    return float(val) if np.ndim(val) == 0 else val


def iterated_integral_stationary_mean(epsilon: float, delta: float, same_channel: bool) -> float:
    """Conditional mean averaged over the stationary law of eta_0."""
    if not same_channel:
        return 0.0
    r = delta / epsilon**2
    e1 = np.exp(-r)
    return float(
        0.25 * epsilon**2 * (1.0 - e1) ** 2
        + 0.5 * (delta + epsilon**2 * (-1.5 + 2.0 * e1 - 0.5 * np.exp(-2.0 * r)))
    )


@dataclass
class IteratedIntegralStat:
    epsilon: float
    delta: float
    same_channel: bool
    eta0: tuple[float, float]
    replicas: int
    empirical_mean: float
    empirical_stderr: float
    predicted: float
    limit_value: float  # delta/2, the white-noise half-increment
    z_score: float


def iterated_integral_check(
    epsilon: float,
    delta: float,
    same_channel: bool,
    replicas: int,
    seed=0,
    eta0: tuple[float, float] | None = None,
) -> IteratedIntegralStat:
    """Simulate c^0_{h,k} on a fine subgrid and test the closed-form mean.

    eta_0 is held fixed across replicas (drawn once from the stationary law
    when not supplied) so the empirical average estimates the conditional
    mean.  The inner integral uses the exact OU identity; the outer one is
    a trapezoid with substep <= eps^2/50, whose bias is quadratic in the
    substep and negligible against the Monte Carlo error.
    """
    rng = np.random.default_rng(seed)
    sd0 = epsilon**-1 / np.sqrt(2.0)
    if eta0 is None:
        eta0 = (float(rng.normal(0, sd0)), float(rng.normal(0, sd0)))
    if same_channel:
        eta0 = (eta0[0], eta0[0])
    n_sub = max(int(np.ceil(delta / (epsilon**2 / 50.0))), 40)
    dts = delta / n_sub
    decay = np.exp(-dts / epsilon**2)
    int_var = 0.5 * epsilon**-2 * (1.0 - decay**2)
    cov = 1.0 - decay
    resid_sd = np.sqrt(max(int_var - cov**2 / dts, 0.0))

    eta_h = np.full(replicas, eta0[0])
    eta_k = np.full(replicas, eta0[1]) if not same_channel else eta_h
    A = np.zeros(replicas)  # running int_0^s eta^h dr
    c = np.zeros(replicas)
    for _ in range(n_sub):
        zh = rng.standard_normal((2, replicas))
        db_h = np.sqrt(dts) * zh[0]
        eta_h_new = decay * eta_h + (cov / dts) * db_h + resid_sd * zh[1]
        if same_channel:
            eta_k_new = eta_h_new
        else:
            zk = rng.standard_normal((2, replicas))
            db_k = np.sqrt(dts) * zk[0]
            eta_k_new = decay * eta_k + (cov / dts) * db_k + resid_sd * zk[1]
        A_new = A + db_h - epsilon**2 * (eta_h_new - eta_h)
        c += 0.5 * dts * (A * eta_k + A_new * eta_k_new)
        eta_h, eta_k, A = eta_h_new, eta_k_new, A_new

    predicted = iterated_integral_cond_mean(epsilon, delta, eta0[0], eta0[1], same_channel)
    mean = float(c.mean())
    stderr = float(c.std(ddof=1) / np.sqrt(replicas))
    z = (mean - predicted) / stderr if stderr > 0 else 0.0
    return IteratedIntegralStat(
        epsilon, delta, same_channel, eta0, replicas, mean, stderr, predicted, delta / 2.0, z
    )
