"""Reference simulators and excitation signals used to generate identification data."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .data import Dataset
from .exceptions import ConfigError, DivergenceError

DIVERGENCE_LIMIT = 1e6


def rk4_step(f, x, u, h):
    k1 = f(x, u)
    k2 = f(x + 0.5 * h * k1, u)
    k3 = f(x + 0.5 * h * k2, u)
    k4 = f(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(f, x0, inputs, dt, n_steps, substeps=1):
    """Zero-order-hold RK4 integration; returns ``n_steps + 1`` samples."""
    if not dt > 0 or n_steps < 1 or substeps < 1:
        raise ConfigError("need dt > 0, n_steps >= 1 and substeps >= 1")
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    h = dt / substeps
    for k in range(n_steps):
        u = inputs[k] if inputs is not None else None
        for _ in range(substeps):
            x = rk4_step(f, x, u, h)
        if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
            raise DivergenceError(f"integration diverged at step {k + 1}")
        out[k + 1] = x
    return out


def simulate_lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0, x0=None, dt=0.001, n_steps=6000,
                    seed=None, substeps=1) -> Dataset:
    """Lorenz system integrated with classic RK4 at the sampling step.

    If ``x0`` is None a start point is drawn (with ``seed``) around ``(-8, 8, 27)``.
    """
    if x0 is None:
        x0 = np.array([-8.0, 8.0, 27.0]) + np.random.default_rng(seed).normal(scale=1.0, size=3)

    def f(x, _u):
        return np.array([sigma * (x[1] - x[0]),
                         x[0] * (rho - x[2]) - x[1],
                         x[0] * x[1] - beta * x[2]])

    states = integrate(f, x0, None, dt, n_steps, substeps)
    return Dataset(states, np.zeros((n_steps, 0)), dt, ["x", "y", "z"])


@dataclass(frozen=True)
class USVParams:
    """Three-DOF surface vessel (surge u, sway v, yaw rate r) with two thrusters.

    Defaults describe a small (~30 kg) catamaran; every value can be
    overridden from a JSON config.
    """

    m11: float = 30.0
    m22: float = 45.0
    m33: float = 5.0
    xu: float = 5.0
    xuu: float = 8.0
    yv: float = 20.0
    yvv: float = 30.0
    nr: float = 4.0
    nrr: float = 6.0
    half_beam: float = 0.37

    def __post_init__(self):
        if min(self.m11, self.m22, self.m33) <= 0:
            raise ConfigError("mass entries must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def usv_dynamics(p: USVParams):
    def f(v, u):
        su, sv, r = v
        tl, tr = u
        tau = np.array([tl + tr, 0.0, (tr - tl) * p.half_beam])
        coriolis = np.array([-p.m22 * sv * r, p.m11 * su * r, (p.m22 - p.m11) * su * sv])
        damping = np.array([(p.xu + p.xuu * abs(su)) * su,
                            (p.yv + p.yvv * abs(sv)) * sv,
                            (p.nr + p.nrr * abs(r)) * r])
        return (tau - coriolis - damping) / np.array([p.m11, p.m22, p.m33])
    return f


def simulate_usv(params: USVParams | None = None, x0=(0.0, 0.0, 0.0), input_signal=None,
                 dt=0.1, n_steps=2000, seed=None, substeps=1, amplitude=20.0) -> Dataset:
    """Body-velocity response of the vessel to left/right thrust.

    Without ``input_signal`` a seeded two-channel PRBS (held 20 samples) of
    ``amplitude`` newtons around ``amplitude`` is generated.
    """
    p = params or USVParams()
    if input_signal is None:
        input_signal = amplitude + excitation("prbs", n_steps, 2, amplitude, seed, hold=20)
    U = np.asarray(input_signal, dtype=float)
    if U.ndim != 2 or U.shape[1] != 2 or U.shape[0] < n_steps:
        raise ConfigError(f"input_signal must have shape (>= {n_steps}, 2)")
    U = U[:n_steps]
    states = integrate(usv_dynamics(p), x0, U, dt, n_steps, substeps)
    return Dataset(states, U, dt, ["surge", "sway", "yaw_rate", "thrust_left", "thrust_right"])


@dataclass(frozen=True)
class WHParams:
    """Linear filter -> saturation -> linear filter cascade (discrete time).

    ``x[k+1] = a1 x[k] + b1 (u[k] + w[k])``, ``s = tanh(gain * x) / gain``,
    ``z[k+1] = a2 z[k] + b2 s[k]``, ``y = z + d2 s``, where ``w`` is
    process noise entering ahead of the nonlinearity.
    """

    a1: float = 0.8
    b1: float = 0.5
    gain: float = 1.5
    a2: float = 0.6
    b2: float = 0.8
    d2: float = 0.3
    process_noise_std: float = 0.05

    def to_dict(self) -> dict:
        return asdict(self)


def simulate_wiener_hammerstein(params: WHParams | None = None, input_signal=None, n_steps=2000,
                                dt=1.0, seed=None, amplitude=1.5) -> Dataset:
    """Output ``y`` (state) and input ``u`` of the cascade; seeded multisine input by default."""
    p = params or WHParams()
    rng = np.random.default_rng(seed)
    if input_signal is None:
        input_signal = excitation("multisine", n_steps, 1, amplitude, rng)
    u = np.asarray(input_signal, dtype=float).reshape(-1)[:n_steps]
    if u.size < n_steps:
        raise ConfigError(f"need {n_steps} input samples")
    w = rng.normal(scale=p.process_noise_std, size=n_steps) if p.process_noise_std else np.zeros(n_steps)
    x = z = 0.0
    s = 0.0
    y = np.empty(n_steps + 1)
    y[0] = 0.0
    for k in range(n_steps):
        x = p.a1 * x + p.b1 * (u[k] + w[k])
        s_next = np.tanh(p.gain * x) / p.gain
        z = p.a2 * z + p.b2 * s
        s = s_next
        y[k + 1] = z + p.d2 * s
    return Dataset(y[:, None], u[:, None], dt, ["y", "u"])


def excitation(kind: str, n_steps: int, channels: int = 1, amplitude: float = 1.0, seed=None,
               hold: int = 1, n_sines: int = 12, f_max: float = 0.2) -> np.ndarray:
    """Persistently exciting input of shape ``(n_steps, channels)`` bounded by ``amplitude``.

    ``prbs``: random +/-amplitude levels held for ``hold`` samples.
    ``multisine``: ``n_sines`` random-phase sines up to ``f_max`` cycles/sample,
    rescaled to peak ``amplitude``. ``chirp``: sweep from 0 to ``f_max``.
    """
    if not amplitude > 0:
        raise ConfigError("amplitude must be > 0")
    if n_steps < 1 or channels < 1 or hold < 1:
        raise ConfigError("need n_steps, channels, hold >= 1")
    rng = np.random.default_rng(seed)
    k = np.arange(n_steps)
    if kind == "prbs":
        blocks = -(-n_steps // hold)
        levels = rng.choice([-1.0, 1.0], size=(blocks, channels))
        return amplitude * np.repeat(levels, hold, axis=0)[:n_steps]
    if kind == "multisine":
        out = np.empty((n_steps, channels))
        freqs = np.linspace(f_max / n_sines, f_max, n_sines)
        for c in range(channels):
            phases = rng.uniform(0, 2 * np.pi, n_sines)
            sig = np.sin(2 * np.pi * np.outer(k, freqs) + phases).sum(1)
            peak = np.max(np.abs(sig))
            out[:, c] = amplitude * sig / peak if peak > 0 else 0.0
        return out
    if kind == "chirp":
        phases = rng.uniform(0, 2 * np.pi, channels)
        inst = np.pi * f_max * k * k / max(n_steps, 1)
        return amplitude * np.sin(inst[:, None] + phases[None, :])
    raise ConfigError(f"unknown excitation kind {kind!r}")
