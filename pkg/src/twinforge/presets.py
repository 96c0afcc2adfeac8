"""Per-example run presets: library subsets, chain settings and simulation
protocols sized so that recovery is feasible at the documented noise levels.

The "full" library (all eight families, degree 6) is available through
:func:`full_library`; the example presets use leaner subsets because highly
collinear families (cos vs constant, sin vs X) add nothing to these systems
and slow mixing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dictionary import LibrarySpec
from .sampler import Hyperparameters
from .errors import ConfigurationError
from . import simulate as sim


def full_library(state_dim: int, n_inputs: int = 0, p_max: int = 6) -> LibrarySpec:
    """All eight families plus optional input columns."""
    return LibrarySpec(
        state_dim=state_dim,
        p_max=p_max,
        include_input=n_inputs > 0,
        n_inputs=max(n_inputs, 1),
    )


def polynomial_library(state_dim: int, p_max: int, n_inputs: int = 0) -> LibrarySpec:
    return LibrarySpec(
        state_dim=state_dim,
        families=("constant", "multinomial"),
        p_max=p_max,
        include_input=n_inputs > 0,
        n_inputs=max(n_inputs, 1),
    )


@dataclass
class RunPreset:
    """Everything one example run needs: system, protocol and chain setup."""

    name: str
    system_name: str
    framework: int
    spec: LibrarySpec
    spec_diff: LibrarySpec | None = None
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    T: float = 1.0
    delta_t: float = 1e-3
    x0: list | None = None
    noise_level: float = 0.05
    n_realizations: int = 100
    stride: int = 1            # f1 differentiation stride
    drift_stride: int = 1
    diff_stride: int = 1
    noise_correction: bool = True
    diffusion_pairs: list = field(default_factory=list)
    forcing_node_stride: int = 1
    forcing_gain: float = 1.0
    system_overrides: dict = field(default_factory=dict)

    def system(self) -> sim.SystemDef:
        return sim.get_system(self.system_name, **self.system_overrides)

    def update_options(self) -> dict:
        """Options dict consumed by twin.noise_sweep / the CLI."""
        opts = {
            "spec": self.spec, "T": self.T, "delta_t": self.delta_t,
            "x0": self.x0,
        }
        if self.framework == 1:
            opts["stride"] = self.stride
            opts["forcing_node_stride"] = self.forcing_node_stride
            opts["forcing_gain"] = self.forcing_gain
        else:
            opts.update({
                "spec_diff": self.spec_diff or self.spec,
                "n_realizations": self.n_realizations,
                "drift_stride": self.drift_stride,
                "diff_stride": self.diff_stride,
                "noise_correction": self.noise_correction,
                "diffusion_pairs": self.diffusion_pairs,
            })
        return opts


def _duffing_f1() -> RunPreset:
    return RunPreset(
        name="duffing-f1",
        system_name="duffing",
        framework=1,
        spec=polynomial_library(2, 6, n_inputs=1),
        T=1.0, delta_t=1e-3, x0=[0.05, 0.0],
        noise_level=0.05, stride=3,
        forcing_node_stride=12, forcing_gain=9.0,
    )


def _duffing_f2() -> RunPreset:
    return RunPreset(
        name="duffing-f2",
        system_name="duffing",
        framework=2,
        spec=polynomial_library(2, 6),
        spec_diff=polynomial_library(2, 2),
        T=8.0, delta_t=1e-3, x0=[0.02, 0.0],
        noise_level=0.05, n_realizations=500,
        drift_stride=1, diff_stride=10, noise_correction=True,
        diffusion_pairs=[(1, 1)],
    )


def _twodof_f1() -> RunPreset:
    return RunPreset(
        name="twodof-f1",
        system_name="coupled-2dof",
        framework=1,
        spec=polynomial_library(4, 3, n_inputs=2),
        T=3.0, delta_t=1e-3, x0=[0.2, 0.0, -0.1, 0.0],
        noise_level=0.05, stride=8,
    )


def _twodof_f2() -> RunPreset:
    return RunPreset(
        name="twodof-f2",
        system_name="coupled-2dof",
        framework=2,
        spec=polynomial_library(4, 3),
        spec_diff=polynomial_library(4, 2),
        T=2.0, delta_t=1e-3, x0=[0.2, 0.0, -0.1, 0.0],
        noise_level=0.05, n_realizations=400,
        diffusion_pairs=[],
    )


def _crack_f1() -> RunPreset:
    spec = LibrarySpec(
        state_dim=3,
        families=("constant", "multinomial", "exp_prod"),
        p_max=2,
        include_input=True,
        n_inputs=1,
    )
    return RunPreset(
        name="crack-f1",
        system_name="crack",
        framework=1,
        spec=spec,
        T=2.0, delta_t=1e-4, x0=[0.5, 0.0, 0.0],
        noise_level=0.02, stride=50,
    )


def _crack_f2() -> RunPreset:
    spec = LibrarySpec(
        state_dim=3,
        families=("constant", "multinomial", "exp_prod"),
        p_max=2,
    )
    return RunPreset(
        name="crack-f2",
        system_name="crack",
        framework=2,
        spec=spec,
        spec_diff=polynomial_library(3, 2),
        T=2.0, delta_t=1e-3, x0=[0.5, 0.0, 0.0],
        noise_level=0.02, n_realizations=600,
        diffusion_pairs=[],
    )


_PRESETS = {
    "duffing-f1": _duffing_f1,
    "duffing-f2": _duffing_f2,
    "twodof-f1": _twodof_f1,
    "twodof-f2": _twodof_f2,
    "crack-f1": _crack_f1,
    "crack-f2": _crack_f2,
}


def preset_names() -> list:
    return sorted(_PRESETS)


def get_preset(name: str) -> RunPreset:
    if name not in _PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {preset_names()}"
        )
    return _PRESETS[name]()
