"""Digital-twin updating: run the sparse regression per state, assemble the
updated model (nominal + discovered perturbation + diffusion), render it as
readable equations, and drive prediction and noise-robustness studies."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import dictionary as dct
from . import sampler as smp
from . import simulate as sim
from . import targets as tgt
from .errors import ConfigurationError, PredictionError, SimulationBlowUpError

ENERGY_GATE = 1e-12


@dataclass
class Term:
    label: str
    mean: float
    std: float

    def to_dict(self):
        return {"label": self.label, "mean": self.mean, "std": self.std}


@dataclass
class DiffusionTerm:
    label: str
    mean: float
    std: float
    sqrt_magnitude: float | None = None
    sqrt_std: float | None = None

    def to_dict(self):
        return {
            "label": self.label, "mean": self.mean, "std": self.std,
            "sqrt_magnitude": self.sqrt_magnitude, "sqrt_std": self.sqrt_std,
        }


@dataclass
class UpdatedTwin:
    """Nominal physics augmented with the discovered terms and their
    posterior statistics."""

    nominal: tgt.NominalModel
    framework: int
    perturbation: dict  # state index -> list[Term]
    diffusion: dict = field(default_factory=dict)  # (i, j) -> list[DiffusionTerm]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for terms in self.perturbation.values():
            for t in terms:
                if t.std < 0:
                    raise ConfigurationError("term std must be >= 0")

    def perturbation_labels(self, state_index: int) -> set:
        return {t.label for t in self.perturbation.get(state_index, [])}

    def diffusion_magnitude(self, state_index: int) -> float | None:
        """sqrt of the identified covariation for a diagonal entry, summing
        selected terms' means (state-independent part included)."""
        terms = self.diffusion.get((state_index, state_index))
        if not terms:
            return None
        total = sum(t.mean for t in terms)
        return float(np.sqrt(total)) if total > 0 else None

    def to_json(self) -> str:
        payload = {
            "schema": "twinforge/1",
            "framework": self.framework,
            "state_dim": self.nominal.state_dim,
            "nominal_description": list(self.nominal.description),
            "derivative_pairs": {str(k): v for k, v in self.nominal.derivative_pairs.items()},
            "perturbation": {
                str(i): [t.to_dict() for t in terms]
                for i, terms in self.perturbation.items()
            },
            "diffusion": {
                f"{i},{j}": [t.to_dict() for t in terms]
                for (i, j), terms in self.diffusion.items()
            },
            "provenance": _jsonable(self.provenance),
        }
        return json.dumps(payload, sort_keys=True, indent=1)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, smp.PosteriorSummary):
        return json.loads(obj.to_json())
    if isinstance(obj, smp.Hyperparameters):
        return obj.to_dict()
    if isinstance(obj, dct.LibrarySpec):
        return obj.to_dict()
    return obj


def _child_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)).generate_state(1)[0])


def _terms_from_summary(summary: smp.PosteriorSummary) -> list:
    out = []
    for k in summary.selected:
        mean = float(summary.mu_theta[k])
        std = float(np.sqrt(max(summary.sigma_theta[k, k], 0.0)))
        out.append(Term(summary.labels[k], mean, std))
    return out


def update_f1(data: tgt.Dataset, nominal: tgt.NominalModel, spec: dct.LibrarySpec,
              hp: smp.Hyperparameters, seed: int, stride: int = 1,
              states: list | None = None) -> UpdatedTwin:
    """Framework-1 update from one input-output trajectory.

    Builds the nominal-removed derivative target per state, skips states
    whose residual energy is below the kinematic-identity floor, runs the
    chain and keeps the PIP-selected terms.
    """
    perturbation: dict = {}
    summaries: dict = {}
    scan = range(nominal.state_dim) if states is None else states
    for i in scan:
        problem = tgt.build_f1(data, nominal, spec, i, stride=stride)
        signal_scale = float(np.var(data.states))
        if float(np.var(problem.y)) < ENERGY_GATE * max(signal_scale, 1e-30):
            perturbation[i] = []
            continue
        summary = smp.run_chain(problem.y, problem.library, hp, _child_seed(seed, i))
        summaries[("drift", i)] = summary
        perturbation[i] = _terms_from_summary(summary)
    return UpdatedTwin(
        nominal=nominal,
        framework=1,
        perturbation=perturbation,
        provenance={
            "summaries": summaries, "seed": seed, "library": spec,
            "hyperparameters": hp, "stride": stride,
            "dataset_meta": dict(data.meta),
        },
    )


def update_f2(data: tgt.Dataset, nominal: tgt.NominalModel, spec_drift: dct.LibrarySpec,
              spec_diff: dct.LibrarySpec, hp: smp.Hyperparameters, seed: int,
              drift_stride: int = 1, diff_stride: int = 1, noise_correction: bool = True,
              diffusion_pairs: list | None = None, states: list | None = None,
              ensemble_average: bool = False) -> UpdatedTwin:
    """Framework-2 update from an output-only ensemble.

    Drift problems are solved per state, diffusion problems per requested
    (i, j) pair (diagonal magnitudes reported as square roots of the
    identified covariation).  ``diffusion_pairs=[]`` skips diffusion.
    """
    if diffusion_pairs is None:
        diffusion_pairs = [(i, i) for i in range(nominal.state_dim)]
    perturbation: dict = {}
    diffusion: dict = {}
    summaries: dict = {}
    scan = range(nominal.state_dim) if states is None else states
    for i in scan:
        problem = tgt.build_f2_drift(
            data, nominal, spec_drift, i, stride=drift_stride,
            ensemble_average=ensemble_average,
        )
        if float(np.var(problem.y)) < 1e-30:
            perturbation[i] = []
            continue
        summary = smp.run_chain(problem.y, problem.library, hp, _child_seed(seed, i))
        summaries[("drift", i)] = summary
        perturbation[i] = _terms_from_summary(summary)
    for (i, j) in diffusion_pairs:
        problem = tgt.build_f2_diffusion(
            data, spec_diff, (i, j), nominal=nominal, stride=diff_stride,
            noise_correction=noise_correction,
        )
        summary = smp.run_chain(
            problem.y, problem.library, hp, _child_seed(seed, 1000 + 10 * i + j)
        )
        summaries[("diffusion", i, j)] = summary
        terms = []
        for t in _terms_from_summary(summary):
            sqrt_mag = sqrt_std = None
            if i == j and t.mean > 0:
                sqrt_mag = float(np.sqrt(t.mean))
                sqrt_std = float(0.5 * t.std / np.sqrt(t.mean))
            terms.append(DiffusionTerm(t.label, t.mean, t.std, sqrt_mag, sqrt_std))
        diffusion[(i, j)] = terms
    return UpdatedTwin(
        nominal=nominal,
        framework=2,
        perturbation=perturbation,
        diffusion=diffusion,
        provenance={
            "summaries": summaries, "seed": seed,
            "library_drift": spec_drift, "library_diff": spec_diff,
            "hyperparameters": hp, "drift_stride": drift_stride,
            "diff_stride": diff_stride, "noise_correction": noise_correction,
            "dataset_meta": dict(data.meta),
        },
    )


# --- rendering -------------------------------------------------------------

def render_equations(twin: UpdatedTwin, precision: int = 6) -> str:
    """Human-readable per-state equations; the discovered part after the
    '| discovered:' marker is machine-parsable (see parse_equations)."""
    lines = []
    m = twin.nominal.state_dim
    for i in range(m):
        base = (
            twin.nominal.description[i]
            if i < len(twin.nominal.description)
            else "<nominal>"
        )
        line = f"dX{i + 1}/dt = {base}"
        terms = twin.perturbation.get(i, [])
        if terms:
            rendered = " + ".join(
                f"{t.mean:.{precision}g}*{t.label} [±{t.std:.{precision}g}]"
                for t in terms
            )
            line += f" | discovered: {rendered}"
        diff = twin.diffusion.get((i, i), [])
        mags = [t for t in diff if t.sqrt_magnitude is not None]
        if mags:
            total = twin.diffusion_magnitude(i)
            if total is not None:
                line += f" | diffusion: + {total:.{precision}g}*dB{i + 1}/dt"
        lines.append(line)
    return "\n".join(lines) + "\n"


_TERM_RE = re.compile(r"^\s*(-?[0-9.eE+-]+)\*(.+?)\s*\[±(-?[0-9.eE+-]+)\]\s*$")


def parse_equations(text: str) -> dict:
    """Inverse of the discovered-term section of render_equations."""
    out: dict = {}
    for line in text.strip().splitlines():
        m = re.match(r"^dX(\d+)/dt = ", line)
        if not m:
            continue
        i = int(m.group(1)) - 1
        out[i] = []
        if "| discovered:" not in line:
            continue
        section = line.split("| discovered:", 1)[1]
        section = section.split("| diffusion:", 1)[0]
        for chunk in section.split(" + "):
            tm = _TERM_RE.match(chunk)
            if tm:
                out[i].append(Term(tm.group(2), float(tm.group(1)), float(tm.group(3))))
    return out


# --- prediction -------------------------------------------------------------

@dataclass
class Prediction:
    t: np.ndarray
    mean: np.ndarray          # (N, m) mean trajectory
    band_std: np.ndarray      # (N, m) local predictive std per state row
    meta: dict = field(default_factory=dict)


def _twin_rhs(twin: UpdatedTwin):
    """Mean-parameter dynamics: nominal rhs plus discovered terms."""
    m = twin.nominal.state_dim
    terms = {
        i: [(dct.parse_label(t.label, m), t.mean) for t in twin.perturbation.get(i, [])]
        for i in twin.perturbation
    }

    def rhs(states, inputs, t):
        out = np.asarray(twin.nominal.rhs(states, t), dtype=float).copy()
        for i, tl in terms.items():
            for col, mean in tl:
                out[:, i] += mean * col.evaluate(states, inputs)
        return out

    return rhs


def predict_states(twin: UpdatedTwin, x0: np.ndarray, T: float, delta_t: float,
                   forcing: np.ndarray | None = None, forcing_seed: int | None = None,
                   forcing_scale: np.ndarray | None = None,
                   noise_seed: int = 0) -> Prediction:
    """Integrate the mean-parameter twin and attach the local uncertainty band.

    Framework 1 integrates with RK4 under the given (or synthesized)
    forcing; framework 2 runs Euler-Maruyama with the identified diffusion
    magnitudes.  The band is the per-step posterior-predictive std of each
    state's regression problem evaluated on the trajectory (local,
    non-propagated).
    """
    m = twin.nominal.state_dim
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != m:
        raise PredictionError("x0 has wrong dimension")
    rhs = _twin_rhs(twin)
    n = int(round(T / delta_t))
    if n < 2:
        raise PredictionError("T too short for the requested delta_t")

    if twin.framework == 1:
        n_inputs = 1
        if forcing is not None:
            forcing = np.atleast_2d(np.asarray(forcing, dtype=float))
            if forcing.shape[0] == 1:
                forcing = forcing.T
            n_inputs = forcing.shape[1]
        elif forcing_seed is not None:
            scale = np.atleast_1d(
                forcing_scale if forcing_scale is not None
                else twin.provenance.get("forcing_scale", 0.0)
            )
            n_inputs = scale.size
            forcing = sim.synth_forcing(n + 1, scale, delta_t, forcing_seed)
        else:
            forcing = np.zeros((n + 1, 1))
        shell = sim.SystemDef(
            name="twin", state_dim=m, params={}, nominal_rhs=rhs, true_rhs=rhs,
            diffusion=np.zeros((m, 1)), n_inputs=n_inputs, x0_default=x0,
        )
        try:
            data = sim.rk4_simulate(shell, T, delta_t, x0=x0, forcing=forcing)
        except SimulationBlowUpError as exc:
            raise PredictionError(f"twin prediction blew up: {exc}") from exc
        traj, inputs = data.states, data.inputs
    else:
        g = np.zeros((m, m))
        for i in range(m):
            mag = twin.diffusion_magnitude(i)
            if mag is not None:
                g[i, i] = mag
        shell = sim.SystemDef(
            name="twin", state_dim=m, params={},
            nominal_rhs=lambda x, u, t: rhs(x, u, t),
            true_rhs=lambda x, u, t: rhs(x, u, t),
            diffusion=g, n_inputs=1, x0_default=x0,
        )
        try:
            data = sim.em_simulate(shell, T, delta_t, n_realizations=1, seed=noise_seed, x0=x0)
        except SimulationBlowUpError as exc:
            raise PredictionError(f"twin prediction blew up: {exc}") from exc
        traj, inputs = data.states[0], None

    band = np.zeros_like(traj)
    summaries = twin.provenance.get("summaries", {})
    spec = twin.provenance.get(
        "library", twin.provenance.get("library_drift")
    )
    if spec is not None:
        lib = dct.evaluate(spec, traj, inputs if spec.include_input else None)
        for key, summary in summaries.items():
            if key[0] != "drift":
                continue
            i = key[1]
            if list(lib.labels) != list(summary.labels):
                continue
            quad = np.einsum("nk,kl,nl->n", lib.values, summary.sigma_theta, lib.values)
            band[:, i] = np.sqrt(np.maximum(quad, 0.0) + summary.mu_sigma2)
    return Prediction(data.t, traj, band, meta={"framework": twin.framework})


# --- noise sweep -------------------------------------------------------------

@dataclass
class SweepReport:
    """Per-noise-level recovery statistics across seeds."""

    levels: list
    framework: int
    term_labels: list
    errors: dict        # level -> {label: (mean_abs_rel_err, std)}
    support_rate: dict  # level -> fraction of seeds with exact support
    n_seeds: int = 0
    failures: list = field(default_factory=list)

    def __post_init__(self):
        lv = list(self.levels)
        if any(b < a for a, b in zip(lv, lv[1:])):
            raise ConfigurationError("sweep levels must be ascending")

    def to_json(self) -> str:
        payload = {
            "schema": "twinforge/1",
            "framework": self.framework,
            "levels": [float(l) for l in self.levels],
            "term_labels": list(self.term_labels),
            "errors": {
                f"{lvl:.6g}": {lab: [float(a), float(b)] for lab, (a, b) in d.items()}
                for lvl, d in self.errors.items()
            },
            "support_rate": {f"{lvl:.6g}": float(v) for lvl, v in self.support_rate.items()},
            "n_seeds": self.n_seeds,
            "failures": [str(f) for f in self.failures],
        }
        return json.dumps(payload, sort_keys=True, indent=1)


def _sweep_cell(system: sim.SystemDef, framework: int, level: float, seed: int,
                hp: smp.Hyperparameters, options: dict):
    """One (noise level, seed) run; returns (errors_by_label, support_exact)."""
    T = options.get("T", 1.0)
    delta_t = options.get("delta_t", 1e-3)
    x0 = options.get("x0")
    nominal = system.nominal_model()
    if framework == 1:
        data = sim.rk4_simulate(
            system, T, delta_t, forcing_seed=seed, x0=x0,
            forcing_node_stride=options.get("forcing_node_stride", 1),
            forcing_gain=options.get("forcing_gain", 1.0),
        )
        noisy = sim.corrupt(data, sim.NoisePolicy(level, seed=seed + 77_000))
        twin = update_f1(
            noisy, nominal, options["spec"], hp, seed=seed + 31_000,
            stride=options.get("stride", 1),
            states=options.get("states"),
        )
    else:
        data = sim.em_simulate(
            system, T, delta_t,
            n_realizations=options.get("n_realizations", 100),
            seed=seed, x0=x0,
        )
        noisy = sim.corrupt(data, sim.NoisePolicy(level, seed=seed + 77_000))
        twin = update_f2(
            noisy, nominal, options["spec"], options.get("spec_diff", options["spec"]),
            hp, seed=seed + 31_000,
            drift_stride=options.get("drift_stride", 1),
            diff_stride=options.get("diff_stride", 1),
            noise_correction=options.get("noise_correction", True),
            diffusion_pairs=options.get("diffusion_pairs", []),
            states=options.get("states"),
        )
    errors = {}
    support_ok = True
    interesting = [i for i in range(system.state_dim) if system.truth_labels(i, framework)]
    for i in interesting:
        truth = system.truth_terms(i, framework)
        found = {t.label: t.mean for t in twin.perturbation.get(i, [])}
        if set(found) != system.truth_labels(i, framework):
            support_ok = False
        for label, coef in truth.items():
            if label in found:
                errors[f"X{i + 1}:{label}"] = abs((found[label] - coef) / coef)
            else:
                errors[f"X{i + 1}:{label}"] = 1.0  # missed term counts as 100% error
    return errors, support_ok


def noise_sweep(system: sim.SystemDef, framework: int, levels=None, seeds=range(10),
                hp: smp.Hyperparameters | None = None, jobs: int = 1,
                **options) -> SweepReport:
    """Noise-robustness study: simulate, corrupt, update and score recovery
    for every (level, seed) cell.  Individual cell failures are recorded,
    not fatal.  ``options`` forwards the per-framework update settings
    (spec, spec_diff, T, delta_t, x0, stride, n_realizations, ...).
    """
    if levels is None:
        levels = sim.default_noise_levels()
    levels = [float(l) for l in levels]
    seeds = list(seeds)
    if hp is None:
        hp = smp.Hyperparameters()
    if "spec" not in options:
        raise ConfigurationError("noise_sweep needs a library spec in options['spec']")

    cells = [(lvl, s) for lvl in levels for s in seeds]
    results: dict = {}
    failures: list = []

    def run(cell):
        lvl, s = cell
        try:
            return cell, _sweep_cell(system, framework, lvl, s, hp, options), None
        except Exception as exc:  # recorded, not fatal
            return cell, None, f"level={lvl:g} seed={s}: {exc}"

    if jobs > 1:
        import multiprocessing.pool

        with multiprocessing.pool.ThreadPool(jobs) as pool:
            outcomes = pool.map(run, cells)
    else:
        outcomes = [run(c) for c in cells]

    for cell, payload, err in outcomes:
        if err is not None:
            failures.append(err)
        else:
            results[cell] = payload

    labels: list = []
    for (lvl, s), (errs, _ok) in sorted(results.items()):
        for lab in errs:
            if lab not in labels:
                labels.append(lab)
    errors: dict = {}
    support: dict = {}
    for lvl in levels:
        per_label: dict = {}
        oks = []
        for s in seeds:
            if (lvl, s) not in results:
                continue
            errs, ok = results[(lvl, s)]
            oks.append(ok)
            for lab, e in errs.items():
                per_label.setdefault(lab, []).append(e)
        errors[lvl] = {
            lab: (float(np.mean(v)), float(np.std(v))) for lab, v in per_label.items()
        }
        support[lvl] = float(np.mean(oks)) if oks else 0.0
    return SweepReport(
        levels=levels, framework=framework, term_labels=labels,
        errors=errors, support_rate=support, n_seeds=len(seeds), failures=failures,
    )
