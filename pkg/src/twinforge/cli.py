"""Command-line entry point: simulate / update / predict / sweep.

Configuration precedence: flags > config file (--config JSON) > preset
defaults.  Exit codes: 0 ok, 2 configuration error, 3 simulation blow-up,
4 sampler failure, 5 prediction failure.  Every command writes a manifest
capturing the fully resolved configuration, and re-running a command from
its manifest reproduces byte-identical numeric outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as tfio
from . import presets as pst
from . import simulate as sim
from . import twin as twn
from .dictionary import LibrarySpec
from .sampler import Hyperparameters
from .errors import (
    ConfigurationError,
    IllConditionedLibraryError,
    PredictionError,
    SimulationBlowUpError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_SAMPLER = 4
EXIT_PREDICT = 5


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twinforge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (flags override its fields)")
        sp.add_argument("--preset", help=f"run preset, one of {pst.preset_names()}")
        sp.add_argument("--system", help="built-in system name")
        sp.add_argument("--framework", type=int, choices=(1, 2))
        sp.add_argument("--T", type=float, dest="T")
        sp.add_argument("--dt", type=float, dest="delta_t")
        sp.add_argument("--noise", type=float, dest="noise_level")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--x0", help="comma-separated initial state")
        sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("simulate", help="generate (and corrupt) a dataset")
    common(sp)
    sp.add_argument("--mode", choices=("rk4", "sde"), help="integration mode (default by framework)")
    sp.add_argument("--ensemble", type=int, dest="n_realizations")

    sp = sub.add_parser("update", help="update the twin from a dataset")
    common(sp)
    sp.add_argument("--dataset", help="dataset file (.csv or .npz); simulated when omitted")
    sp.add_argument("--n-mcmc", type=int, dest="n_mcmc")
    sp.add_argument("--n-burn", type=int, dest="n_burn")
    sp.add_argument("--pip-threshold", type=float, dest="pip_threshold")

    sp = sub.add_parser("predict", help="predict from an updated twin")
    common(sp)
    sp.add_argument("--twin", required=True, help="twin JSON from the update command")
    sp.add_argument("--forcing-seed", type=int, dest="forcing_seed")
    sp.add_argument("--noise-seed", type=int, dest="noise_seed")
    sp.add_argument("--truth", help="optional dataset CSV to score NRMSE against")

    sp = sub.add_parser("sweep", help="noise-robustness sweep")
    common(sp)
    sp.add_argument("--levels", help="comma-separated noise levels (default: 14 in [0, 0.6])")
    sp.add_argument("--seeds", type=int, default=10, help="number of seeds (0..n-1)")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--ensemble", type=int, dest="n_realizations")
    return p


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < flags into one plain dict."""
    cfg: dict = {}
    if args.config:
        file_cfg = tfio.read_json(args.config)
        cfg.update(file_cfg.get("config", file_cfg))  # accept a manifest directly
    for key, val in vars(args).items():
        if key in ("config",) or val is None:
            continue
        cfg[key] = val
    if "x0" in cfg and isinstance(cfg["x0"], str):
        cfg["x0"] = [float(v) for v in cfg["x0"].split(",")]
    if "levels" in cfg and isinstance(cfg["levels"], str):
        cfg["levels"] = [float(v) for v in cfg["levels"].split(",")]
    if ("system" in cfg) == ("dataset" in cfg) and args.command == "update":
        if "preset" not in cfg and "system" not in cfg and "dataset" not in cfg:
            raise ConfigurationError("update needs a --preset, --system or --dataset")
        if "system" in cfg and "dataset" in cfg:
            raise ConfigurationError("give exactly one of --system or --dataset")
    return cfg


def _preset_for(cfg: dict) -> pst.RunPreset:
    if cfg.get("preset"):
        preset = pst.get_preset(cfg["preset"])
    else:
        system = cfg.get("system")
        if not system:
            raise ConfigurationError("need --preset or --system")
        framework = cfg.get("framework", 1)
        name = {"duffing": "duffing", "coupled-2dof": "twodof", "crack": "crack"}.get(system)
        if name is None:
            raise ConfigurationError(f"unknown system {system!r}")
        preset = pst.get_preset(f"{name}-f{framework}")
    for key in ("T", "delta_t", "noise_level", "x0", "n_realizations", "framework"):
        if cfg.get(key) is not None:
            setattr(preset, key, cfg[key])
    if "library" in cfg:
        preset.spec = LibrarySpec.from_dict(cfg["library"])
    if "library_diff" in cfg:
        preset.spec_diff = LibrarySpec.from_dict(cfg["library_diff"])
    hp_fields = {k: cfg[k] for k in ("n_mcmc", "n_burn", "pip_threshold") if cfg.get(k) is not None}
    if hp_fields or "hyperparameters" in cfg:
        d = preset.hp.to_dict()
        d.update(cfg.get("hyperparameters", {}))
        d.update(hp_fields)
        preset.hp = Hyperparameters.from_dict(d)
    return preset


def _simulate_dataset(preset: pst.RunPreset, cfg: dict):
    system = preset.system()
    seed = cfg.get("seed", 0)
    mode = cfg.get("mode") or ("sde" if preset.framework == 2 else "rk4")
    if mode == "rk4":
        data = sim.rk4_simulate(
            system, preset.T, preset.delta_t, forcing_seed=seed, x0=preset.x0
        )
    else:
        data = sim.em_simulate(
            system, preset.T, preset.delta_t,
            n_realizations=preset.n_realizations, seed=seed, x0=preset.x0,
        )
    noisy = sim.corrupt(data, sim.NoisePolicy(preset.noise_level, seed=seed + 77_000))
    return system, data, noisy, mode


def cmd_simulate(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    preset = _preset_for(cfg)
    system, clean, noisy, mode = _simulate_dataset(preset, cfg)
    outputs = []
    clean_csv = out / "dataset_clean.csv"
    noisy_csv = out / "dataset.csv"
    tfio.dataset_to_csv(clean, clean_csv)
    tfio.dataset_to_csv(noisy, noisy_csv)
    outputs += [clean_csv, noisy_csv]
    if noisy.is_ensemble:
        npz = out / "dataset.npz"
        tfio.dataset_to_npz(noisy, npz)
        outputs.append(npz)
    tfio.write_manifest(out / "manifest.json", "simulate", _manifest_cfg(cfg, preset), outputs)
    print(f"wrote {len(outputs)} dataset files to {out}")
    return EXIT_OK


def _manifest_cfg(cfg: dict, preset: pst.RunPreset) -> dict:
    resolved = dict(cfg)
    resolved.pop("out", None)
    resolved.update(
        {
            "preset": preset.name,
            "framework": preset.framework,
            "T": preset.T,
            "delta_t": preset.delta_t,
            "noise_level": preset.noise_level,
            "x0": preset.x0,
            "n_realizations": preset.n_realizations,
            "library": preset.spec.to_dict(),
            "library_diff": None if preset.spec_diff is None else preset.spec_diff.to_dict(),
            "hyperparameters": preset.hp.to_dict(),
            "seed": cfg.get("seed", 0),
        }
    )
    return resolved


def cmd_update(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    preset = _preset_for(cfg)
    system = preset.system()
    nominal = system.nominal_model()
    seed = cfg.get("seed", 0)
    if cfg.get("dataset"):
        path = Path(cfg["dataset"])
        data = tfio.dataset_from_npz(path) if path.suffix == ".npz" else tfio.dataset_from_csv(path)
    else:
        _, _, data, _ = _simulate_dataset(preset, cfg)
    if preset.framework == 1:
        updated = twn.update_f1(data, nominal, preset.spec, preset.hp, seed, stride=preset.stride)
    else:
        updated = twn.update_f2(
            data, nominal, preset.spec, preset.spec_diff or preset.spec, preset.hp, seed,
            drift_stride=preset.drift_stride, diff_stride=preset.diff_stride,
            noise_correction=preset.noise_correction,
            diffusion_pairs=preset.diffusion_pairs,
        )
    twin_path = out / "twin.json"
    twin_path.write_text(updated.to_json() + "\n")
    eq_path = out / "equations.txt"
    eq_path.write_text(twn.render_equations(updated))
    pip_rows = []
    for key, summary in updated.provenance["summaries"].items():
        tag = "-".join(str(k) for k in key)
        for lab, pip in zip(summary.labels, summary.pip):
            pip_rows.append([tag, lab, float(pip)])
    pip_path = out / "pip.csv"
    tfio.write_table(pip_path, ["problem", "label", "pip"], pip_rows)
    outputs = [twin_path, eq_path, pip_path]
    tfio.write_manifest(out / "manifest.json", "update", _manifest_cfg(cfg, preset), outputs)
    print(twn.render_equations(updated), end="")
    return EXIT_OK


def _twin_from_json(path) -> twn.UpdatedTwin:
    d = tfio.read_json(path)
    from .sampler import PosteriorSummary

    nominal = twn.tgt.NominalModel(
        state_dim=d["state_dim"],
        rhs=None,
        description=d["nominal_description"],
        derivative_pairs={int(k): v for k, v in d["derivative_pairs"].items()},
    )
    # rebuild the nominal rhs from the recorded system if available
    prov = d.get("provenance", {})
    meta = prov.get("dataset_meta", {})
    sys_name = meta.get("system")
    if sys_name:
        nominal = sim.get_system(sys_name, **meta.get("params", {})).nominal_model()
    perturbation = {
        int(i): [twn.Term(t["label"], t["mean"], t["std"]) for t in terms]
        for i, terms in d["perturbation"].items()
    }
    diffusion = {}
    for key, terms in d.get("diffusion", {}).items():
        i, j = (int(v) for v in key.split(","))
        diffusion[(i, j)] = [
            twn.DiffusionTerm(t["label"], t["mean"], t["std"], t.get("sqrt_magnitude"),
                              t.get("sqrt_std"))
            for t in terms
        ]
    provenance = {"dataset_meta": meta}
    if "summaries" in prov:
        summaries = {}
        for key, s in prov["summaries"].items():
            parts = key.strip("()").replace("'", "").split(",")
            parts = [p.strip() for p in parts if p.strip()]
            tkey = tuple([parts[0]] + [int(p) for p in parts[1:]])
            summaries[tkey] = PosteriorSummary.from_json(json.dumps(s))
        provenance["summaries"] = summaries
    if "library" in prov:
        provenance["library"] = LibrarySpec.from_dict(prov["library"])
    if "library_drift" in prov:
        provenance["library_drift"] = LibrarySpec.from_dict(prov["library_drift"])
    if sys_name:
        scale = sim.get_system(sys_name, **meta.get("params", {})).forcing_scale
        provenance["forcing_scale"] = scale
    return twn.UpdatedTwin(
        nominal=nominal, framework=d["framework"],
        perturbation=perturbation, diffusion=diffusion, provenance=provenance,
    )


def cmd_predict(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    updated = _twin_from_json(cfg["twin"])
    T = cfg.get("T", 1.0)
    delta_t = cfg.get("delta_t", 1e-3)
    x0 = cfg.get("x0")
    if x0 is None:
        meta = updated.provenance.get("dataset_meta", {})
        x0 = meta.get("x0", [0.0] * updated.nominal.state_dim)
    pred = twn.predict_states(
        updated, np.asarray(x0, float), T, delta_t,
        forcing_seed=cfg.get("forcing_seed"),
        noise_seed=cfg.get("noise_seed", 0),
    )
    header = ["t"]
    m = updated.nominal.state_dim
    for i in range(m):
        header += [f"mean_{i + 1}", f"lo95_{i + 1}", f"hi95_{i + 1}"]
    rows = []
    for r in range(pred.t.size):
        row = [pred.t[r]]
        for i in range(m):
            mu = pred.mean[r, i]
            half = 1.96 * pred.band_std[r, i]
            row += [mu, mu - half, mu + half]
        rows.append(row)
    footer = {}
    if cfg.get("truth"):
        truth = tfio.dataset_from_csv(cfg["truth"])
        n = min(truth.t.size, pred.t.size)
        err = pred.mean[:n] - truth.states[:n]
        denom = np.sqrt(np.mean(truth.states[:n] ** 2, axis=0))
        nrmse = np.sqrt(np.mean(err**2, axis=0)) / np.where(denom > 0, denom, 1.0)
        footer["nrmse"] = " ".join(f"{v:.6g}" for v in nrmse)
    traj_path = out / "trajectory.csv"
    tfio.write_table(traj_path, header, rows, footer=footer)
    tfio.write_manifest(out / "manifest.json", "predict", dict(cfg), [traj_path])
    print(f"wrote {traj_path}")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    preset = _preset_for(cfg)
    system = preset.system()
    levels = cfg.get("levels")
    seeds = range(int(cfg.get("seeds", 10)))
    options = preset.update_options()
    report = twn.noise_sweep(
        system, preset.framework, levels=levels, seeds=seeds, hp=preset.hp,
        jobs=int(cfg.get("jobs", 1)), **options,
    )
    sweep_json = out / "sweep.json"
    sweep_json.write_text(report.to_json() + "\n")
    rows = []
    for lvl in report.levels:
        for lab, (mean_err, std_err) in report.errors.get(lvl, {}).items():
            rows.append([lvl, lab, mean_err, std_err, report.support_rate.get(lvl, 0.0)])
    sweep_csv = out / "sweep.csv"
    tfio.write_table(
        sweep_csv, ["level", "term", "mean_abs_rel_err", "std", "support_rate"], rows
    )
    tfio.write_manifest(
        out / "manifest.json", "sweep",
        {**_manifest_cfg(cfg, preset), "levels": [float(l) for l in report.levels],
         "seeds": len(list(seeds))},
        [sweep_json, sweep_csv],
    )
    print(f"wrote {sweep_json}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "update":
            return cmd_update(cfg)
        if args.command == "predict":
            return cmd_predict(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationBlowUpError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except IllConditionedLibraryError as exc:
        print(f"sampler failed: {exc} (columns: {exc.labels})", file=sys.stderr)
        return EXIT_SAMPLER
    except PredictionError as exc:
        print(f"prediction failed: {exc}", file=sys.stderr)
        return EXIT_PREDICT


if __name__ == "__main__":
    raise SystemExit(main())
