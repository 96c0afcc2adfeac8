"""Regression-problem construction from measurements.

Framework 1 (input-output data): the target is the measured state
derivative with the known nominal dynamics removed, Y_i = dX_i/dt -
f_i(X, t), regressed on the candidate library evaluated at the measured
states (and inputs).

Framework 2 (output-only data): measurements are treated as sample paths of
an Ito SDE.  Drift targets are nominal-removed scaled increments
dZ_i/dt; diffusion targets are scaled increment products dZ_i dZ_j / dt,
whose conditional mean is the covariation Gamma = g g^T.  An optional
lag-autocovariance correction removes the additive bias that i.i.d.
measurement noise induces in the products (noise contributes 2 var(n)/dt to
the diagonal; its magnitude is estimable from the negative lag-1
autocovariance of the increments).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dictionary import LibrarySpec, LibraryMatrix, evaluate
from .errors import ConfigurationError

_DT_JITTER = 1e-9
DEFAULT_MAX_DELTA_T = 5e-3


@dataclass
class Dataset:
    """Sampled trajectories: t (N,), states (N, m) or (E, N, m) for an
    ensemble, optional inputs with matching leading shape.  ``clean_states``
    and ``clean_inputs`` retain the pre-noise copies when present."""

    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    clean_states: np.ndarray | None = None
    clean_inputs: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).ravel()
        self.states = np.asarray(self.states, dtype=float)
        if self.inputs is not None:
            self.inputs = np.asarray(self.inputs, dtype=float)
        if self.t.size < 2:
            raise ConfigurationError("dataset needs at least two samples")
        if self.states.ndim not in (2, 3):
            raise ConfigurationError("states must be (N, m) or (E, N, m)")
        n = self.states.shape[-2]
        if n != self.t.size:
            raise ConfigurationError("states and t row counts differ")
        dt = np.diff(self.t)
        if np.any(dt <= 0):
            raise ConfigurationError("timestamps must be strictly increasing")
        if np.max(np.abs(dt - dt[0])) > _DT_JITTER * max(abs(dt[0]), 1e-30):
            raise ConfigurationError("timestamps must be uniformly spaced")
        if self.inputs is not None and self.inputs.shape[:-1] != self.states.shape[:-1]:
            raise ConfigurationError("inputs shape does not match states")

    @property
    def delta_t(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def n_states(self) -> int:
        return self.states.shape[-1]

    @property
    def is_ensemble(self) -> bool:
        return self.states.ndim == 3

    @property
    def n_realizations(self) -> int:
        return self.states.shape[0] if self.is_ensemble else 1

    def realization(self, e: int) -> "Dataset":
        if not self.is_ensemble:
            if e != 0:
                raise ConfigurationError("dataset has a single realization")
            return self
        return Dataset(
            self.t,
            self.states[e],
            None if self.inputs is None else self.inputs[e],
            dict(self.meta),
            None if self.clean_states is None else self.clean_states[e],
            None if self.clean_inputs is None else self.clean_inputs[e],
        )


@dataclass
class NominalModel:
    """Known prior physics: a vectorized map (states, t) -> state derivatives.

    ``derivative_pairs`` maps a state index to the index of a measured
    channel that equals its derivative (e.g. displacement -> velocity
    channel); states absent from the map get numerically differentiated.
    ``description`` holds one human-readable rhs expression per state.
    """

    state_dim: int
    rhs: object
    description: list = field(default_factory=list)
    derivative_pairs: dict = field(default_factory=dict)

    def __call__(self, states: np.ndarray, t: np.ndarray) -> np.ndarray:
        out = np.asarray(self.rhs(states, t), dtype=float)
        if out.shape != states.shape:
            raise ConfigurationError("nominal rhs returned a wrong shape")
        return out


@dataclass
class RegressionProblem:
    """Target vector plus design matrix, with provenance."""

    y: np.ndarray
    library: LibraryMatrix
    kind: str  # drift-f1 | drift-f2 | diffusion-f2
    state_index: int
    pair: tuple | None = None
    delta_t: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.y.shape[0] != self.library.n_rows:
            raise ConfigurationError("target and library row counts differ")
        if self.kind not in ("drift-f1", "drift-f2", "diffusion-f2"):
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")


# --- numerical differentiation -------------------------------------------

# 4th-order stencils over a stride-s grid; one-sided at the edges.
_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FORWARD = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_OFFSET1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def differentiate(states: np.ndarray, delta_t: float, stride: int = 1) -> np.ndarray:
    """4th-order finite-difference time derivatives, column-wise.

    Interior rows use the 5-point central stencil on a stride-``s`` grid
    (step s*delta_t); the first and last 2s rows use one-sided 4th-order
    stencils.  Wider strides trade truncation error for noise attenuation
    on densely sampled noisy data.
    """
    x = np.asarray(states, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = x.shape[0]
    s = int(stride)
    if s < 1:
        raise ConfigurationError("stride must be >= 1")
    if n < 4 * s + 1:
        raise ConfigurationError(f"need at least {4 * s + 1} samples for stride {s}")
    h = delta_t * s
    d = np.empty_like(x)
    # interior
    core = slice(2 * s, n - 2 * s)
    d[core] = (
        _CENTRAL[0] * x[: n - 4 * s]
        + _CENTRAL[1] * x[s: n - 3 * s]
        + _CENTRAL[3] * x[3 * s: n - s]
        + _CENTRAL[4] * x[4 * s:]
    ) / h
    # edges, one-sided on the stride grid
    for r in range(2 * s):
        if r < s:
            idx = r + s * np.arange(5)
            coeff = _FORWARD
        else:
            idx = (r - s) + s * np.arange(5)
            coeff = _OFFSET1
        d[r] = (coeff @ x[idx]) / h
        if r < s:
            idx2 = (n - 1 - r) - s * np.arange(5)
            d[n - 1 - r] = -(coeff @ x[idx2]) / h
        else:
            idx2 = (n - 1 - (r - s)) - s * np.arange(5)
            d[n - 1 - r] = -(_OFFSET1 @ x[idx2]) / h
    return d[:, 0] if squeeze else d


# --- framework 1 ----------------------------------------------------------

def build_f1(data: Dataset, nominal: NominalModel, spec: LibrarySpec, state_index: int,
             stride: int = 1, trim: int | None = None) -> RegressionProblem:
    """Input-output target: Y = dX_i/dt - f_i(X, t) on the library rows.

    The derivative uses the measured channel from
    ``nominal.derivative_pairs`` when one exists, numerical differentiation
    otherwise.  ``trim`` rows are dropped at each end (default 2*stride,
    the one-sided stencil region).
    """
    if data.is_ensemble:
        raise ConfigurationError("framework-1 targets expect a single trajectory")
    if data.n_states != nominal.state_dim:
        raise ConfigurationError("dataset and nominal state dimensions differ")
    if spec.include_input and data.inputs is None:
        raise ConfigurationError("library includes inputs but the dataset has none")
    states, t = data.states, data.t
    if state_index in nominal.derivative_pairs:
        deriv = states[:, nominal.derivative_pairs[state_index]]
    else:
        deriv = differentiate(states[:, state_index], data.delta_t, stride)
    y = deriv - nominal(states, t)[:, state_index]
    cut = 2 * stride if trim is None else int(trim)
    sl = slice(cut, states.shape[0] - cut) if cut else slice(None)
    lib = evaluate(spec, states[sl], None if data.inputs is None else data.inputs[sl])
    return RegressionProblem(
        y[sl], lib, "drift-f1", state_index, delta_t=data.delta_t,
        meta={"stride": stride, "trim": cut},
    )


# --- framework 2 ----------------------------------------------------------

def _require_fine_sampling(delta_t: float, max_delta_t: float):
    if delta_t > max_delta_t:
        raise ConfigurationError(
            f"delta_t={delta_t:g} too coarse for Kramers-Moyal targets "
            f"(cap {max_delta_t:g} s)"
        )


def _stacked(data: Dataset) -> np.ndarray:
    return data.states if data.is_ensemble else data.states[None, :, :]


def _increments(data: Dataset, nominal: NominalModel | None, state_index: int,
                stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Nominal-removed increments over ``stride`` steps and the matching
    evaluation states, both shaped (E, N - stride[, m])."""
    X = _stacked(data)
    s = int(stride)
    if s < 1:
        raise ConfigurationError("stride must be >= 1")
    if X.shape[1] <= s:
        raise ConfigurationError("not enough samples for the requested stride")
    dz = X[:, s:, state_index] - X[:, :-s, state_index]
    if nominal is not None:
        base = X[:, :-s, :]
        flat = base.reshape(-1, X.shape[2])
        tt = np.tile(data.t[:-s], X.shape[0])
        drift = nominal(flat, tt)[:, state_index].reshape(X.shape[0], -1)
        dz = dz - drift * (s * data.delta_t)
    return dz, X[:, :-s, :]


def build_f2_drift(data: Dataset, nominal: NominalModel, spec: LibrarySpec,
                   state_index: int, stride: int = 1, ensemble_average: bool = False,
                   max_delta_t: float = DEFAULT_MAX_DELTA_T) -> RegressionProblem:
    """Output-only drift target: Y = dZ_i / dt with the nominal drift removed.

    Rows stack every (realization, step) increment by default;
    ``ensemble_average`` averages targets and library rows across the
    ensemble at matched time indices instead.
    """
    _require_fine_sampling(data.delta_t, max_delta_t)
    if spec.include_input:
        raise ConfigurationError("framework-2 libraries are output-only (no input columns)")
    dz, base = _increments(data, nominal, state_index, stride)
    h = stride * data.delta_t
    y = dz / h
    flat = base.reshape(-1, base.shape[2])
    if ensemble_average:
        y = y.mean(axis=0)
        lib_full = evaluate(spec, flat)
        vals = lib_full.values.reshape(base.shape[0], base.shape[1], -1).mean(axis=0)
        lib = LibraryMatrix(vals, lib_full.labels, spec)
    else:
        y = y.ravel()
        lib = evaluate(spec, flat)
    return RegressionProblem(
        y, lib, "drift-f2", state_index, delta_t=data.delta_t,
        meta={"stride": stride, "ensemble_average": ensemble_average},
    )


def build_f2_diffusion(data: Dataset, spec: LibrarySpec, pair: tuple,
                       nominal: NominalModel | None = None, stride: int = 1,
                       noise_correction: bool = True,
                       max_delta_t: float = DEFAULT_MAX_DELTA_T) -> RegressionProblem:
    """Output-only covariation target: Y = dZ_i dZ_j / dt.

    Identifies Gamma_ij of Gamma = g g^T; diagonal magnitudes are reported
    as square roots downstream.  With ``noise_correction`` the additive
    measurement-noise bias (2 cov(n_i, n_j) per product) is estimated from
    the lag-1 increment autocovariance and subtracted; the estimate is
    recorded in ``meta['noise_bias']``.
    """
    _require_fine_sampling(data.delta_t, max_delta_t)
    if spec.include_input:
        raise ConfigurationError("framework-2 libraries are output-only (no input columns)")
    i, j = pair
    dz_i, base = _increments(data, nominal, i, stride)
    dz_j = dz_i if j == i else _increments(data, nominal, j, stride)[0]
    h = stride * data.delta_t
    prod = dz_i * dz_j
    bias = 0.0
    if noise_correction:
        # E[dZ_k dZ_{k+s}] = -cov(n_i, n_j) + O(dt^2) for i.i.d. noise
        s = int(stride)
        if dz_i.shape[1] > s:
            lag = 0.5 * (dz_i[:, :-s] * dz_j[:, s:] + dz_j[:, :-s] * dz_i[:, s:])
            bias = -2.0 * float(lag.mean())
    y = (prod - bias) / h
    flat = base.reshape(-1, base.shape[2])
    lib = evaluate(spec, flat)
    return RegressionProblem(
        y.ravel(), lib, "diffusion-f2", i, pair=(i, j), delta_t=data.delta_t,
        meta={"stride": stride, "noise_correction": noise_correction, "noise_bias": bias},
    )
