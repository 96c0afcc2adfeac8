"""Candidate basis-function library: declaration, enumeration and evaluation.

A :class:`LibrarySpec` declares which function families are enabled; column
descriptors are enumerated deterministically from the spec alone, so the
design-matrix width K and the column labels are known before any data is
seen.  Labels follow a small text grammar ("X1^3", "X1*X2^2", "sgn(X2)",
"exp(-X1)*X2", "abs(X1)", "X1*abs(X2)", "sin(X1)", "u1") and are the stable
cross-file identity of basis functions.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Family order is fixed; it defines the column order of the design matrix.
FAMILIES = (
    "constant",
    "multinomial",
    "signum",
    "neg_exp",
    "exp_prod",
    "absolute",
    "signed_quadratic",
    "sine",
    "cosine",
)

MAX_POLY_DEGREE = 10


@dataclass(frozen=True)
class LibrarySpec:
    """Declarative description of the candidate function library.

    ``families`` is an ordered subset of :data:`FAMILIES`; ``p_max`` caps the
    multinomial degree; ``include_input`` appends one raw column per measured
    input channel (``n_inputs`` of them) after all state families.
    """

    state_dim: int
    families: tuple = FAMILIES
    p_max: int = 6
    include_input: bool = False
    n_inputs: int = 1

    def __post_init__(self):
        if self.state_dim < 1:
            raise ConfigurationError("state_dim must be >= 1")
        if self.p_max < 1:
            raise ConfigurationError("p_max must be >= 1")
        if self.p_max > MAX_POLY_DEGREE:
            raise ConfigurationError(
                f"p_max={self.p_max} exceeds the cap of {MAX_POLY_DEGREE} "
                "(combinatorial blowup guard)"
            )
        unknown = [f for f in self.families if f not in FAMILIES]
        if unknown:
            raise ConfigurationError(f"unknown families: {unknown}")
        if len(set(self.families)) != len(self.families):
            raise ConfigurationError("duplicate families in spec")
        if self.include_input and self.n_inputs < 1:
            raise ConfigurationError("include_input requires n_inputs >= 1")
        # normalize family order to the canonical one
        object.__setattr__(
            self, "families", tuple(f for f in FAMILIES if f in self.families)
        )

    def to_dict(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "families": list(self.families),
            "p_max": self.p_max,
            "include_input": self.include_input,
            "n_inputs": self.n_inputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LibrarySpec":
        return cls(
            state_dim=d["state_dim"],
            families=tuple(d.get("families", FAMILIES)),
            p_max=d.get("p_max", 6),
            include_input=d.get("include_input", False),
            n_inputs=d.get("n_inputs", 1),
        )


@dataclass(frozen=True)
class Column:
    """One basis-function column descriptor.

    ``kind`` is one of const|mono|sgn|negexp|expprod|abs|xabs|sin|cos|input.
    ``i``/``j`` are 0-based state (or input) indices; ``exponents`` is the
    monomial exponent tuple for kind == "mono".
    """

    kind: str
    i: int = -1
    j: int = -1
    exponents: tuple = ()

    @property
    def label(self) -> str:
        if self.kind == "const":
            return "1"
        if self.kind == "mono":
            parts = []
            for idx, p in enumerate(self.exponents):
                if p == 0:
                    continue
                parts.append(f"X{idx + 1}" + (f"^{p}" if p > 1 else ""))
            return "*".join(parts)
        if self.kind == "sgn":
            return f"sgn(X{self.i + 1})"
        if self.kind == "negexp":
            return f"exp(-X{self.i + 1})"
        if self.kind == "expprod":
            return f"exp(-X{self.i + 1})*X{self.j + 1}"
        if self.kind == "abs":
            return f"abs(X{self.i + 1})"
        if self.kind == "xabs":
            return f"X{self.i + 1}*abs(X{self.j + 1})"
        if self.kind == "sin":
            return f"sin(X{self.i + 1})"
        if self.kind == "cos":
            return f"cos(X{self.i + 1})"
        if self.kind == "input":
            return f"u{self.j + 1}"
        raise ValueError(f"unknown column kind {self.kind!r}")

    def evaluate(self, states: np.ndarray, inputs: np.ndarray | None = None) -> np.ndarray:
        """Evaluate this column on (N, m) states / (N, n_u) inputs."""
        if self.kind == "const":
            return np.ones(states.shape[0])
        if self.kind == "mono":
            out = np.ones(states.shape[0])
            for idx, p in enumerate(self.exponents):
                if p:
                    out = out * states[:, idx] ** p
            return out
        if self.kind == "sgn":
            return np.sign(states[:, self.i])
        if self.kind == "negexp":
            return np.exp(-states[:, self.i])
        if self.kind == "expprod":
            return np.exp(-states[:, self.i]) * states[:, self.j]
        if self.kind == "abs":
            return np.abs(states[:, self.i])
        if self.kind == "xabs":
            return states[:, self.i] * np.abs(states[:, self.j])
        if self.kind == "sin":
            return np.sin(states[:, self.i])
        if self.kind == "cos":
            return np.cos(states[:, self.i])
        if self.kind == "input":
            if inputs is None:
                raise ConfigurationError("column refers to inputs but none were given")
            return inputs[:, self.j]
        raise ValueError(f"unknown column kind {self.kind!r}")


def _monomial_exponents(m: int, p_max: int):
    """Exponent tuples for all monomials of total degree 1..p_max in m
    variables, in graded-lexicographic order (X1 dominates)."""
    for degree in range(1, p_max + 1):
        for combo in itertools.combinations_with_replacement(range(m), degree):
            exps = [0] * m
            for idx in combo:
                exps[idx] += 1
            yield tuple(exps)


def enumerate_columns(spec: LibrarySpec) -> list[Column]:
    """Full ordered column list for a spec. Constant first, multinomial in
    graded-lex order, remaining state families in canonical family order,
    input columns last."""
    m = spec.state_dim
    cols: list[Column] = []
    for family in spec.families:
        if family == "constant":
            cols.append(Column("const"))
        elif family == "multinomial":
            cols.extend(Column("mono", exponents=e) for e in _monomial_exponents(m, spec.p_max))
        elif family == "signum":
            cols.extend(Column("sgn", i=i) for i in range(m))
        elif family == "neg_exp":
            cols.extend(Column("negexp", i=i) for i in range(m))
        elif family == "exp_prod":
            # all ordered pairs (i, j), including i == j
            cols.extend(Column("expprod", i=i, j=j) for i in range(m) for j in range(m))
        elif family == "absolute":
            cols.extend(Column("abs", i=i) for i in range(m))
        elif family == "signed_quadratic":
            cols.extend(Column("xabs", i=i, j=j) for i in range(m) for j in range(m))
        elif family == "sine":
            cols.extend(Column("sin", i=i) for i in range(m))
        elif family == "cosine":
            cols.extend(Column("cos", i=i) for i in range(m))
    if spec.include_input:
        cols.extend(Column("input", j=j) for j in range(spec.n_inputs))
    return cols


def n_columns(spec: LibrarySpec) -> int:
    """Column count K, computable from the spec alone."""
    return len(enumerate_columns(spec))


def column_labels(spec: LibrarySpec) -> list[str]:
    return [c.label for c in enumerate_columns(spec)]


@dataclass
class LibraryMatrix:
    """Evaluated design matrix L (N x K) with its labels and generating spec."""

    values: np.ndarray
    labels: list[str] = field(default_factory=list)
    spec: LibrarySpec | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ConfigurationError("library values must be a 2-D matrix")
        if len(self.labels) != self.values.shape[1]:
            raise ConfigurationError("label count does not match column count")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigurationError("duplicate column labels")
        if not np.isfinite(self.values).all():
            raise ConfigurationError("library matrix contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]


def evaluate(spec: LibrarySpec, states: np.ndarray, inputs: np.ndarray | None = None) -> LibraryMatrix:
    """Evaluate every column of the spec on row-wise state measurements.

    ``states`` is (N, state_dim); ``inputs`` is required iff the spec has
    ``include_input`` set and must then be (N, n_inputs).
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[1] != spec.state_dim:
        raise ConfigurationError(
            f"states have width {states.shape[1]}, spec.state_dim is {spec.state_dim}"
        )
    if not np.isfinite(states).all():
        raise ConfigurationError("states contain non-finite values")
    if spec.include_input:
        if inputs is None:
            raise ConfigurationError("spec.include_input is set but no inputs were given")
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[0] != states.shape[0]:
            raise ConfigurationError("inputs and states row counts differ")
        if inputs.shape[1] != spec.n_inputs:
            raise ConfigurationError(
                f"inputs have width {inputs.shape[1]}, spec.n_inputs is {spec.n_inputs}"
            )
        if not np.isfinite(inputs).all():
            raise ConfigurationError("inputs contain non-finite values")
    cols = enumerate_columns(spec)
    values = np.empty((states.shape[0], len(cols)))
    for k, col in enumerate(cols):
        values[:, k] = col.evaluate(states, inputs)
    return LibraryMatrix(values, [c.label for c in cols], spec)


# --- label grammar -------------------------------------------------------

_MONO_PART = re.compile(r"^X(\d+)(?:\^(\d+))?$")
_FUNCS = {
    "sgn": "sgn",
    "abs": "abs",
    "sin": "sin",
    "cos": "cos",
}


def parse_label(label: str, state_dim: int | None = None) -> Column:
    """Parse a column label back into its descriptor (grammar inverse)."""
    label = label.strip()
    if label == "1":
        return Column("const")
    m = re.match(r"^u(\d+)$", label)
    if m:
        return Column("input", j=int(m.group(1)) - 1)
    m = re.match(r"^exp\(-X(\d+)\)$", label)
    if m:
        return Column("negexp", i=int(m.group(1)) - 1)
    m = re.match(r"^exp\(-X(\d+)\)\*X(\d+)$", label)
    if m:
        return Column("expprod", i=int(m.group(1)) - 1, j=int(m.group(2)) - 1)
    m = re.match(r"^X(\d+)\*abs\(X(\d+)\)$", label)
    if m:
        return Column("xabs", i=int(m.group(1)) - 1, j=int(m.group(2)) - 1)
    m = re.match(r"^(sgn|abs|sin|cos)\(X(\d+)\)$", label)
    if m:
        kind = {"sgn": "sgn", "abs": "abs", "sin": "sin", "cos": "cos"}[m.group(1)]
        return Column(kind, i=int(m.group(2)) - 1)
    # monomial: "X1", "X1^3", "X1*X2^2", ...
    parts = label.split("*")
    indices: dict[int, int] = {}
    for part in parts:
        pm = _MONO_PART.match(part)
        if not pm:
            raise ConfigurationError(f"unparseable column label {label!r}")
        idx = int(pm.group(1)) - 1
        power = int(pm.group(2)) if pm.group(2) else 1
        indices[idx] = indices.get(idx, 0) + power
    dim = state_dim if state_dim is not None else max(indices) + 1
    exps = [0] * dim
    for idx, p in indices.items():
        if idx >= dim:
            raise ConfigurationError(f"label {label!r} exceeds state_dim {dim}")
        exps[idx] = p
    return Column("mono", exponents=tuple(exps))


def evaluate_label(label: str, states: np.ndarray, inputs: np.ndarray | None = None,
                   state_dim: int | None = None) -> np.ndarray:
    """Evaluate a single label on state rows; convenience for prediction."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    dim = state_dim if state_dim is not None else states.shape[1]
    return parse_label(label, dim).evaluate(states, inputs)
