"""Artifact persistence: dataset CSV / columnar NPZ, JSON helpers and run
manifests.  CSVs are RFC-4180 with a mandatory header, '.' decimals and
full 17-significant-digit precision so every file round-trips losslessly;
lines starting with '#' after the data block carry optional footer
metadata and are ignored on read."""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .targets import Dataset
from .errors import ConfigurationError

SCHEMA = "twinforge/1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dataset_to_csv(data: Dataset, path) -> None:
    """Write a dataset as long-form CSV: t, X1..Xm[, u1..un][, realization]."""
    path = Path(path)
    m = data.n_states
    n_u = 0 if data.inputs is None else data.inputs.shape[-1]
    header = ["t"] + [f"X{i + 1}" for i in range(m)] + [f"u{j + 1}" for j in range(n_u)]
    ensemble = data.is_ensemble
    if ensemble:
        header.append("realization")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        reals = range(data.n_realizations)
        for e in reals:
            states = data.states[e] if ensemble else data.states
            inputs = None
            if data.inputs is not None:
                inputs = data.inputs[e] if ensemble else data.inputs
            for r in range(data.t.size):
                row = [_fmt(data.t[r])]
                row += [_fmt(v) for v in states[r]]
                if inputs is not None:
                    row += [_fmt(v) for v in inputs[r]]
                if ensemble:
                    row.append(str(e))
                w.writerow(row)


def dataset_from_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ConfigurationError(f"empty CSV {path}")
    header = rows[0]
    if header[0] != "t":
        raise ConfigurationError("dataset CSV must start with a 't' column header")
    state_cols = [i for i, h in enumerate(header) if h.startswith("X")]
    input_cols = [i for i, h in enumerate(header) if h.startswith("u")]
    has_real = header[-1] == "realization"
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    if has_real:
        reals = body[:, -1].astype(int)
        E = reals.max() + 1
        n = int(body.shape[0] // E)
        t = body[:n, 0]
        states = body[:, state_cols].reshape(E, n, len(state_cols))
        inputs = body[:, input_cols].reshape(E, n, len(input_cols)) if input_cols else None
    else:
        t = body[:, 0]
        states = body[:, state_cols]
        inputs = body[:, input_cols] if input_cols else None
    return Dataset(t, states, inputs)


def dataset_to_npz(data: Dataset, path) -> None:
    """Binary columnar form (primary format for ensembles)."""
    payload = {"t": data.t, "states": data.states, "meta": json.dumps(_plain(data.meta))}
    if data.inputs is not None:
        payload["inputs"] = data.inputs
    if data.clean_states is not None:
        payload["clean_states"] = data.clean_states
    if data.clean_inputs is not None:
        payload["clean_inputs"] = data.clean_inputs
    np.savez_compressed(Path(path), **payload)


def dataset_from_npz(path) -> Dataset:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"])) if "meta" in z else {}
        return Dataset(
            z["t"], z["states"],
            z["inputs"] if "inputs" in z.files else None,
            meta,
            z["clean_states"] if "clean_states" in z.files else None,
            z["clean_inputs"] if "clean_inputs" in z.files else None,
        )


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(_plain(payload), sort_keys=True, indent=1) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_manifest(path, command: str, config: dict, outputs: list) -> None:
    """Run manifest capturing everything needed for byte-identical replay."""
    write_json(
        {
            "schema": SCHEMA,
            "command": command,
            "config": config,
            "outputs": [str(o) for o in outputs],
        },
        path,
    )


def write_table(path, header: list, rows: list, footer: dict | None = None) -> None:
    """Generic CSV writer with full-precision floats and optional footer."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row])
        if footer:
            for k, v in footer.items():
                fh.write(f"# {k}: {v}\n")
