"""Experiment configuration: a flat, typed ``key = value`` document.

Grammar: one ``key = value`` pair per line; blank lines and ``#`` comments
are ignored; list values are comma separated. Keys are validated against
the schema of the experiment kind and every error in the document is
reported, not just the first.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field, fields

from .lattice import new_parameters

KINDS = (
    "exact-check",
    "hydrodynamics",
    "hydrostatics",
    "qv-check",
    "gaussianity",
    "ou-covariance",
    "replacement-scaling",
)


class ConfigError(ValueError):
    """Carries every validation problem found in a config document."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class ExperimentConfig:
    """A fully resolved experiment description (defaults filled in)."""

    kind: str
    n: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    alpha: float = 0.1
    beta: float = 0.9
    rho: float = 0.5
    rho0: float = 0.5
    replicas: int = 1000
    T: float = 0.1
    t_grid: list = field(default_factory=list)
    seed: int = 0
    out_dir: str = "out"
    threads: int = 0
    # solver and estimator knobs
    M: int = 400
    dt: float = 1e-3
    burn_in: float = 1.0
    avg_window: float = 20.0
    lambdas: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    random_f: int = 100
    exact_n: list = field(default_factory=lambda: [6])
    basis_size: int = 16
    export: str = "none"
    # tolerance overrides
    tol_l1: float = 0.02
    sigma_band: float = 4.0
    slope_tol: float = 0.2
    skew_tol: float = 0.1

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# key -> (python type tag, per-kind default or None when the common default applies)
_COMMON_KEYS = {
    "kind": "str", "seed": "int", "out_dir": "str", "threads": "int",
    "n": "ints", "theta": "floats", "alpha": "float", "beta": "float",
    "rho": "float", "replicas": "int", "export": "str",
}

_KIND_KEYS = {
    "exact-check": {"random_f": "int", "exact_n": "ints"},
    "hydrodynamics": {"rho0": "float", "t_grid": "floats", "M": "int",
                      "dt": "float", "tol_l1": "float", "basis_size": "int"},
    "hydrostatics": {"burn_in": "float", "avg_window": "float", "tol_l1": "float"},
    "qv-check": {"T": "float", "exact_n": "ints", "sigma_band": "float",
                 "basis_size": "int"},
    "gaussianity": {"lambdas": "floats", "sigma_band": "float", "skew_tol": "float"},
    "ou-covariance": {"t_grid": "floats", "sigma_band": "float", "basis_size": "int"},
    "replacement-scaling": {"T": "float", "slope_tol": "float"},
}

_KIND_DEFAULTS = {
    "exact-check": {"n": [4, 6], "theta": [0.0, 0.5, 1.0, 2.0], "rho": 0.5,
                    "alpha": 0.2, "beta": 0.8},
    "hydrodynamics": {"n": [200], "theta": [0.5, 1.0, 2.0], "alpha": 0.1,
                      "beta": 0.9, "t_grid": [0.01, 0.05, 0.1],
                      "replicas": 1000, "tol_l1": 0.02},
    "hydrostatics": {"n": [200], "theta": [0.5, 1.0, 2.0], "alpha": 0.1,
                     "beta": 0.9, "replicas": 12, "tol_l1": 0.03},
    "qv-check": {"n": [100], "theta": [0.5, 1.0, 2.0], "rho": 0.5,
                 "T": 0.1, "replicas": 10000},
    "gaussianity": {"n": [100], "theta": [0.0], "rho": 0.5, "replicas": 10000},
    "ou-covariance": {"n": [100], "theta": [0.5, 1.0, 2.0], "rho": 0.5,
                      "t_grid": [0.02, 0.05, 0.1], "replicas": 400},
    "replacement-scaling": {"n": [32, 64, 128], "theta": [0.5, 2.0], "rho": 0.5,
                            "T": 0.5, "replicas": 4000},
}


def _convert(key: str, kind_tag: str, raw: str):
    def one(token, target):
        token = token.strip()
        if target == "int":
            v = int(token)
            return v
        if target == "float":
            return float(token)
        return token
    if kind_tag in ("int", "float", "str"):
        return one(raw, kind_tag)
    element = "int" if kind_tag == "ints" else "float"
    return [one(tok, element) for tok in raw.split(",") if tok.strip()]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; raises ConfigError listing
    every problem (unknown keys, type mismatches, invalid values)."""
    pairs = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in pairs:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        pairs[key] = (lineno, raw)

    kind = pairs.pop("kind", (0, ""))[1] if "kind" in pairs else None
    if kind is None:
        problems.append("missing required key 'kind'")
    elif kind not in KINDS:
        hint = difflib.get_close_matches(kind, KINDS, n=1)
        extra = f" (did you mean {hint[0]!r}?)" if hint else ""
        problems.append(f"unknown kind {kind!r}{extra}; valid kinds: {', '.join(KINDS)}")
        kind = None
    if kind is None:
        raise ConfigError(problems)

    valid = dict(_COMMON_KEYS)
    valid.update(_KIND_KEYS[kind])
    values = {}
    for key, (lineno, raw) in pairs.items():
        if key not in valid:
            hint = difflib.get_close_matches(key, sorted(valid), n=1)
            extra = f" (did you mean {hint[0]!r}?)" if hint else ""
            problems.append(f"line {lineno}: unknown key {key!r} for kind {kind}{extra}")
            continue
        try:
            values[key] = _convert(key, valid[key], raw)
        except ValueError:
            problems.append(
                f"line {lineno}: key {key!r} expects {valid[key]}, got {raw!r}")

    cfg_kwargs = dict(_KIND_DEFAULTS[kind])
    cfg_kwargs.update(values)
    cfg_kwargs["kind"] = kind
    cfg = ExperimentConfig(**{k: v for k, v in cfg_kwargs.items()
                              if k in {f.name for f in fields(ExperimentConfig)}})

    problems.extend(validate_config(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(cfg: ExperimentConfig) -> list:
    """Semantic validation shared by the parser and programmatic callers."""
    problems = []
    if cfg.replicas < 1:
        problems.append(f"replicas must be >= 1, got {cfg.replicas}")
    if not cfg.n:
        problems.append("n grid must not be empty")
    if not cfg.theta:
        problems.append("theta grid must not be empty")
    uses_reservoirs = cfg.kind in ("exact-check", "hydrodynamics", "hydrostatics")
    for n in cfg.n:
        for theta in cfg.theta:
            try:
                if uses_reservoirs:
                    new_parameters(n, theta, cfg.alpha, cfg.beta, cfg.rho)
                else:
                    new_parameters(n, theta, cfg.rho, cfg.rho, cfg.rho)
            except ValueError as exc:
                problems.append(f"(n={n}, theta={theta}): {exc}")
    if cfg.kind in ("hydrodynamics", "ou-covariance"):
        if not cfg.t_grid:
            problems.append("t_grid must not be empty")
        elif any(t <= 0 for t in cfg.t_grid):
            problems.append("t_grid times must be positive")
    if cfg.kind in ("qv-check", "replacement-scaling") and cfg.T <= 0:
        problems.append(f"T must be positive, got {cfg.T}")
    if cfg.kind == "hydrodynamics":
        if not (0.0 <= cfg.rho0 <= 1.0):
            problems.append(f"rho0 must lie in [0, 1], got {cfg.rho0}")
        if cfg.dt <= 0 or cfg.M < 4:
            problems.append("need dt > 0 and M >= 4")
    if cfg.kind == "hydrostatics" and (cfg.burn_in < 0 or cfg.avg_window <= 0):
        problems.append("need burn_in >= 0 and avg_window > 0")
    if cfg.kind == "qv-check":
        for n in cfg.exact_n:
            if n > 8:
                problems.append(f"exact_n entries must be <= 8, got {n}")
    if cfg.export not in ("none", "csv", "binary"):
        problems.append(f"export must be none, csv or binary, got {cfg.export!r}")
    return problems


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
