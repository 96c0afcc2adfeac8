"""Ground-truth data generation: fixed-step RK4 for deterministic-forcing
runs, Euler-Maruyama for SDE runs, the built-in example systems, forcing
synthesis and measurement-noise injection.

Forcing convention: continuous white noise of intensity sigma is realized
as nodal samples sigma * xi_k / sqrt(dt) interpolated piecewise-linearly
between samples.  The nodal values are recorded as the dataset's input
channels, so the same physical excitation level drives both the
deterministic (RK4) and stochastic (EM) modes, and the regression's input
column is the actually applied force.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .targets import Dataset, NominalModel
from .errors import ConfigurationError, SimulationBlowUpError

_BLOWUP = 1e8


@dataclass
class SystemDef:
    """A simulatable system: nominal and true dynamics plus metadata.

    ``nominal_rhs``/``true_rhs`` are vectorized maps (states (N, m),
    inputs (N, n_u) or None, t (N,)) -> (N, m); they agree when the
    perturbation parameters are zero.  ``diffusion`` is the constant (m, n)
    noise-intensity matrix for SDE mode; ``forcing_scale`` the per-channel
    white-noise intensity for deterministic mode.  ``perturbation_truth``
    and ``input_truth`` hold the ground-truth discovered-term coefficients
    per state index (library-label keyed), used by recovery studies.
    """

    name: str
    state_dim: int
    params: dict
    nominal_rhs: object
    true_rhs: object
    diffusion: np.ndarray
    n_inputs: int = 1
    forcing_scale: np.ndarray | None = None
    x0_default: np.ndarray | None = None
    derivative_pairs: dict = field(default_factory=dict)
    nominal_description: list = field(default_factory=list)
    perturbation_truth: dict = field(default_factory=dict)
    input_truth: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        self.diffusion = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
        if self.diffusion.shape[0] != self.state_dim:
            raise ConfigurationError("diffusion must have state_dim rows")
        if self.forcing_scale is not None:
            self.forcing_scale = np.asarray(self.forcing_scale, dtype=float).ravel()
        if self.x0_default is None:
            self.x0_default = np.zeros(self.state_dim)
        else:
            self.x0_default = np.asarray(self.x0_default, dtype=float).ravel()

    def nominal_model(self) -> NominalModel:
        """Homogeneous nominal dynamics (zero input) for target builders."""

        def rhs(states, t):
            states = np.atleast_2d(states)
            u = np.zeros((states.shape[0], self.n_inputs))
            return self.nominal_rhs(states, u, np.atleast_1d(t))

        return NominalModel(
            state_dim=self.state_dim,
            rhs=rhs,
            description=list(self.nominal_description),
            derivative_pairs=dict(self.derivative_pairs),
        )

    def truth_labels(self, state_index: int, framework: int) -> set:
        """Ground-truth support for recovery checks (inputs count for f1)."""
        labels = set(self.perturbation_truth.get(state_index, {}))
        if framework == 1:
            labels |= set(self.input_truth.get(state_index, {}))
        return labels

    def truth_terms(self, state_index: int, framework: int) -> dict:
        terms = dict(self.perturbation_truth.get(state_index, {}))
        if framework == 1:
            terms.update(self.input_truth.get(state_index, {}))
        return terms


@dataclass
class NoisePolicy:
    """Additive Gaussian measurement noise, per-channel std = level * std(channel)."""

    level: float
    seed: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ConfigurationError("noise level must be >= 0")


def default_noise_levels(n: int = 14, top: float = 0.6) -> np.ndarray:
    """The standard sweep grid: n levels linearly spaced over [0, top]."""
    return np.linspace(0.0, top, n)


def synth_forcing(n_samples: int, scales: np.ndarray, delta_t: float, seed: int,
                  node_stride: int = 1, gain: float = 1.0) -> np.ndarray:
    """Band-limited Gaussian forcing samples, per channel.

    Node values gain * scale * xi / sqrt(dt) are drawn every ``node_stride``
    samples and interpolated piecewise-linearly in between, which keeps the
    excitation inside the bandwidth that finite-difference differentiation
    of the response can resolve.  node_stride=1, gain=1 is the plain
    white-noise discretization of intensity ``scale``.
    """
    scales = np.asarray(scales, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    L = max(int(node_stride), 1)
    n_nodes = (n_samples - 1) // L + 2
    nodes = rng.standard_normal((n_nodes, scales.size)) * (gain * scales / np.sqrt(delta_t))
    if L == 1:
        return nodes[:n_samples]
    pos = np.arange(n_samples) / L
    base = np.floor(pos).astype(int)
    frac = (pos - base)[:, None]
    return nodes[base] * (1.0 - frac) + nodes[base + 1] * frac


def _check_finite(x: np.ndarray, t: float):
    if not np.isfinite(x).all() or np.max(np.abs(x)) > _BLOWUP:
        raise SimulationBlowUpError(f"state blew up at t={t:.6g}", t_last=t)


def rk4_simulate(system: SystemDef, T: float, delta_t: float, forcing_seed: int = 0,
                 x0: np.ndarray | None = None, forcing: np.ndarray | None = None,
                 forcing_node_stride: int = 1, forcing_gain: float = 1.0) -> Dataset:
    """Classical fixed-step RK4 with piecewise-linear interpolated forcing.

    Produces N = round(T / delta_t) samples on t = 0, dt, ..., T - dt; the
    applied forcing is recorded in the dataset's input channels.
    """
    if delta_t <= 0:
        raise ConfigurationError("delta_t must be > 0")
    n = int(round(T / delta_t))
    if n < 2:
        raise ConfigurationError("T too short for the requested delta_t")
    x = np.array(system.x0_default if x0 is None else x0, dtype=float).ravel()
    if x.size != system.state_dim:
        raise ConfigurationError("x0 has wrong dimension")
    if forcing is None:
        scales = system.forcing_scale
        if scales is None:
            scales = np.zeros(system.n_inputs)
        u = synth_forcing(n + 1, scales, delta_t, forcing_seed,
                          node_stride=forcing_node_stride, gain=forcing_gain)
    else:
        u = np.asarray(forcing, dtype=float)
        if u.shape[0] < n + 1:
            raise ConfigurationError("forcing array too short")
    t = np.arange(n) * delta_t
    states = np.empty((n, system.state_dim))
    states[0] = x

    def f(xv, uv, tv):
        return system.true_rhs(xv[None, :], uv[None, :], np.array([tv]))[0]

    for k in range(n - 1):
        tk = t[k]
        u0, u1 = u[k], u[k + 1]
        um = 0.5 * (u0 + u1)
        k1 = f(x, u0, tk)
        k2 = f(x + 0.5 * delta_t * k1, um, tk + 0.5 * delta_t)
        k3 = f(x + 0.5 * delta_t * k2, um, tk + 0.5 * delta_t)
        k4 = f(x + delta_t * k3, u1, tk + delta_t)
        x = x + (delta_t / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_finite(x, t[k + 1])
        states[k + 1] = x

    return Dataset(
        t, states, inputs=u[:n],
        meta={
            "system": system.name, "mode": "rk4", "delta_t": delta_t, "T": T,
            "forcing_seed": forcing_seed, "params": dict(system.params),
            "x0": states[0].tolist(),
            "forcing_node_stride": forcing_node_stride, "forcing_gain": forcing_gain,
        },
    )


def em_simulate(system: SystemDef, T: float, delta_t: float, n_realizations: int = 100,
                seed: int = 0, x0: np.ndarray | None = None) -> Dataset:
    """Euler-Maruyama ensemble: X_{k+1} = X_k + f dt + g sqrt(dt) xi.

    Each realization draws from its own generator stream (spawned from
    ``seed``), so path e is reproducible regardless of ensemble size.
    """
    if delta_t <= 0:
        raise ConfigurationError("delta_t must be > 0")
    n = int(round(T / delta_t))
    if n < 2:
        raise ConfigurationError("T too short for the requested delta_t")
    E = int(n_realizations)
    if E < 1:
        raise ConfigurationError("need at least one realization")
    g = system.diffusion
    n_noise = g.shape[1]
    x_init = np.array(system.x0_default if x0 is None else x0, dtype=float).ravel()
    if x_init.size != system.state_dim:
        raise ConfigurationError("x0 has wrong dimension")

    streams = np.random.SeedSequence(seed).spawn(E)
    dW = np.empty((E, n - 1, n_noise))
    for e, ss in enumerate(streams):
        dW[e] = np.random.default_rng(ss).standard_normal((n - 1, n_noise))
    dW *= np.sqrt(delta_t)

    t = np.arange(n) * delta_t
    states = np.empty((E, n, system.state_dim))
    states[:, 0, :] = x_init
    u = np.zeros((E, system.n_inputs))
    x = states[:, 0, :].copy()
    for k in range(n - 1):
        drift = system.true_rhs(x, u, np.full(E, t[k]))
        x = x + drift * delta_t + dW[:, k, :] @ g.T
        _check_finite(x, t[k + 1])
        states[:, k + 1, :] = x

    return Dataset(
        t, states,
        meta={
            "system": system.name, "mode": "em", "delta_t": delta_t, "T": T,
            "seed": seed, "n_realizations": E, "params": dict(system.params),
            "x0": x_init.tolist(),
        },
    )


def corrupt(data: Dataset, policy: NoisePolicy) -> Dataset:
    """Add per-channel i.i.d. Gaussian noise with std = level * std(channel).

    The pristine arrays are kept on the returned dataset (``clean_states``,
    ``clean_inputs``) for oracle tests; level 0 returns identical values.
    """
    rng = np.random.default_rng(policy.seed)
    states = data.states.copy()
    if policy.level > 0:
        flat = states.reshape(-1, data.n_states)
        std = flat.std(axis=0)
        states = states + rng.standard_normal(states.shape) * (policy.level * std)
    inputs = None
    if data.inputs is not None:
        inputs = data.inputs.copy()
        if policy.level > 0:
            flat = inputs.reshape(-1, inputs.shape[-1])
            std = flat.std(axis=0)
            inputs = inputs + rng.standard_normal(inputs.shape) * (policy.level * std)
    meta = dict(data.meta)
    meta.update({"noise_level": policy.level, "noise_seed": policy.seed})
    return Dataset(
        data.t, states, inputs, meta,
        clean_states=data.states.copy(),
        clean_inputs=None if data.inputs is None else data.inputs.copy(),
    )


# --- built-in example systems ---------------------------------------------

def make_duffing(**overrides) -> SystemDef:
    """SDOF oscillator whose nominal linear physics is perturbed by a cubic
    stiffness term: m x'' + c x' + k x + alpha x^3 = force."""
    p = {"m": 1.0, "c": 2.0, "k": 1000.0, "alpha": 100000.0, "sigma": 0.5}
    p.update(overrides)
    m, c, k, alpha = p["m"], p["c"], p["k"], p["alpha"]

    def nominal(x, u, t):
        out = np.empty_like(x)
        out[:, 0] = x[:, 1]
        out[:, 1] = (-c * x[:, 1] - k * x[:, 0] + u[:, 0]) / m
        return out

    def true(x, u, t):
        out = nominal(x, u, t)
        out[:, 1] -= (alpha / m) * x[:, 0] ** 3
        return out

    return SystemDef(
        name="duffing",
        state_dim=2,
        params=p,
        nominal_rhs=nominal,
        true_rhs=true,
        diffusion=np.array([[0.0], [p["sigma"] / m]]),
        n_inputs=1,
        forcing_scale=np.array([p["sigma"]]),
        x0_default=np.array([0.1, 0.0]),
        derivative_pairs={0: 1},
        nominal_description=["X2", f"(-{c:g}*X2 - {k:g}*X1 + u1)/{m:g}"],
        perturbation_truth={1: {"X1^3": -alpha / m}},
        input_truth={1: {"u1": 1.0 / m}},
        description="SDOF linear oscillator perturbed by a cubic stiffness term",
    )


def make_coupled_2dof(**overrides) -> SystemDef:
    """Two-DOF chain whose nominal linear physics gains coupled cubic
    terms; state ordering [X1, X2, X3, X4] = [pos1, vel1, pos2, vel2]."""
    p = {
        "m1": 1.0, "m2": 1.0, "c1": 4.0, "c2": 4.0,
        "k1": 4000.0, "k2": 2000.0, "alpha": 50000.0,
        "sigma1": 0.5, "sigma2": 0.5,
    }
    p.update(overrides)
    m1, m2, c1, c2 = p["m1"], p["m2"], p["c1"], p["c2"]
    k1, k2, alpha = p["k1"], p["k2"], p["alpha"]

    def nominal(x, u, t):
        out = np.empty_like(x)
        x1, v1, x2, v2 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
        out[:, 0] = v1
        out[:, 1] = (-(c1 + c2) * v1 + c2 * v2 - (k1 + k2) * x1 + k2 * x2 + u[:, 0]) / m1
        out[:, 2] = v2
        out[:, 3] = (c2 * v1 - c2 * v2 + k2 * x1 - k2 * x2 + u[:, 1]) / m2
        return out

    def true(x, u, t):
        out = nominal(x, u, t)
        x1, x2 = x[:, 0], x[:, 2]
        out[:, 1] -= (alpha * x1**3 + alpha * (x1 - x2) ** 3) / m1
        out[:, 3] -= (alpha * (x2 - x1) ** 3) / m2
        return out

    g = np.zeros((4, 2))
    g[1, 0] = p["sigma1"] / m1
    g[3, 1] = p["sigma2"] / m2
    return SystemDef(
        name="coupled-2dof",
        state_dim=4,
        params=p,
        nominal_rhs=nominal,
        true_rhs=true,
        diffusion=g,
        n_inputs=2,
        forcing_scale=np.array([p["sigma1"], p["sigma2"]]),
        x0_default=np.array([0.2, 0.0, -0.1, 0.0]),
        derivative_pairs={0: 1, 2: 3},
        nominal_description=[
            "X2",
            f"(-{c1 + c2:g}*X2 + {c2:g}*X4 - {k1 + k2:g}*X1 + {k2:g}*X3 + u1)/{m1:g}",
            "X4",
            f"({c2:g}*X2 - {c2:g}*X4 + {k2:g}*X1 - {k2:g}*X3 + u2)/{m2:g}",
        ],
        perturbation_truth={
            1: {
                "X1^3": -2.0 * alpha / m1,
                "X1^2*X3": 3.0 * alpha / m1,
                "X1*X3^2": -3.0 * alpha / m1,
                "X3^3": alpha / m1,
            },
            3: {
                "X1^3": alpha / m2,
                "X1^2*X3": -3.0 * alpha / m2,
                "X1*X3^2": 3.0 * alpha / m2,
                "X3^3": -alpha / m2,
            },
        },
        input_truth={1: {"u1": 1.0 / m1}, 3: {"u2": 1.0 / m2}},
        description="2-DOF linear chain perturbed by coupled cubic stiffness terms",
    )


def make_crack(**overrides) -> SystemDef:
    """Linear oscillator with fatigue-driven stiffness degradation.

    States [X1, X2, X3] = [x, x', q]; stiffness k * lambda with
    lambda = a1 + a2 exp(-a3 q^a4) and damage rate
    q' = gamma (x^2 + x'^2)^(beta/2).  The nominal model knows mass and
    damping only; the whole stiffness path and the damage law are
    discovered.
    """
    p = {
        "m": 1.0, "c": 2.0, "k": 2000.0,
        "alpha1": 0.5, "alpha2": 0.5, "alpha3": 1.0, "alpha4": 1.0,
        "gamma": 0.001, "beta": 2.0, "sigma": 1.0,
    }
    p.update(overrides)
    m, c, k = p["m"], p["c"], p["k"]
    a1, a2, a3, a4 = p["alpha1"], p["alpha2"], p["alpha3"], p["alpha4"]
    gamma, beta = p["gamma"], p["beta"]

    def nominal(x, u, t):
        out = np.empty_like(x)
        out[:, 0] = x[:, 1]
        out[:, 1] = (-c * x[:, 1] + u[:, 0]) / m
        out[:, 2] = 0.0
        return out

    def true(x, u, t):
        out = nominal(x, u, t)
        q = np.maximum(x[:, 2], 0.0)
        lam = a1 + a2 * np.exp(-a3 * q**a4)
        out[:, 1] -= (k / m) * lam * x[:, 0]
        out[:, 2] = gamma * (x[:, 0] ** 2 + x[:, 1] ** 2) ** (beta / 2.0)
        return out

    truth_state1 = {"X1": -k * a1 / m, "exp(-X3)*X1": -k * a2 / m}
    truth_state2 = {"X1^2": gamma, "X2^2": gamma} if beta == 2.0 else {}
    return SystemDef(
        name="crack",
        state_dim=3,
        params=p,
        nominal_rhs=nominal,
        true_rhs=true,
        diffusion=np.array([[0.0], [p["sigma"] / m], [0.0]]),
        n_inputs=1,
        forcing_scale=np.array([p["sigma"]]),
        x0_default=np.array([0.5, 0.0, 0.0]),
        derivative_pairs={0: 1},
        nominal_description=["X2", f"(-{c:g}*X2 + u1)/{m:g}", "0"],
        perturbation_truth={1: truth_state1, 2: truth_state2},
        input_truth={1: {"u1": 1.0 / m}},
        description="linear oscillator with crack-driven stiffness degradation",
    )


_BUILTINS = {
    "duffing": make_duffing,
    "coupled-2dof": make_coupled_2dof,
    "crack": make_crack,
}


def builtin_systems() -> list:
    """The three example systems with their default parameters."""
    return [make() for make in _BUILTINS.values()]


def get_system(name: str, **overrides) -> SystemDef:
    if name not in _BUILTINS:
        raise ConfigurationError(
            f"unknown system {name!r}; available: {sorted(_BUILTINS)}"
        )
    return _BUILTINS[name](**overrides)
