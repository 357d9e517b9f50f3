"""Command-line entry point.

Verbs: ``exact``, ``simulate``, ``pde``, ``fluct`` and ``sweep``, each taking
``--config <path>`` plus optional ``--seed``, ``--out`` and ``--threads``
overrides. The SLOWSEP_THREADS environment variable overrides --threads.
Exit status is 0 exactly when every statistical gate in the report passed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, pde
from .config import ConfigError, load_config
from .lattice import classify_regime

_VERB_KINDS = {
    "exact": ("exact-check",),
    "simulate": ("hydrodynamics", "hydrostatics"),
    "pde": ("hydrodynamics", "hydrostatics"),
    "fluct": ("qv-check", "gaussianity", "ou-covariance", "replacement-scaling"),
    "sweep": None,  # any kind
}


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument("--seed", type=int, default=None, help="master seed override")
    sub.add_argument("--out", default=None, help="output directory override")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (SLOWSEP_THREADS overrides)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowsep",
        description="Exclusion process with slow reservoirs: simulation, "
                    "exact oracles, PDE solvers and fluctuation statistics.")
    subs = parser.add_subparsers(dest="verb", required=True)
    for verb, kinds in _VERB_KINDS.items():
        doc = "run any experiment kind" if kinds is None else f"kinds: {', '.join(kinds)}"
        _add_common(subs.add_parser(verb, help=doc))
    return parser


def _run_pde_only(cfg) -> int:
    """Solve the heat equation for each theta and export field + basis CSVs."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    T = max(cfg.t_grid) if cfg.t_grid else 1.0
    for ci, theta in enumerate(cfg.theta):
        regime = classify_regime(theta)
        field = pde.solve_heat(regime, lambda u: np.full_like(u, cfg.rho0),
                               cfg.alpha, cfg.beta, M=cfg.M, dt=cfg.dt, T=T)
        every = max(1, field.times.size // 200)
        pde.field_to_csv(field, os.path.join(cfg.out_dir, f"field_cell{ci}.csv"), every=every)
        basis = pde.eigenbasis(regime, cfg.basis_size)
        pde.basis_to_csv(basis, os.path.join(cfg.out_dir, f"basis_cell{ci}.csv"))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    allowed = _VERB_KINDS[args.verb]
    if allowed is not None and cfg.kind not in allowed:
        print(f"verb {args.verb!r} accepts kinds {allowed}, config has {cfg.kind!r}",
              file=sys.stderr)
        return 2

    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        cfg.threads = args.threads

    if args.verb == "pde":
        harness.set_threads(cfg.threads)
        return _run_pde_only(cfg)

    status, report, paths = harness.run_experiment(cfg)
    gates = sum(len(c["checks"]) for c in report["cells"])
    failed = sum(1 for c in report["cells"] for k in c["checks"] if not k["passed"])
    errored = sum(1 for c in report["cells"] if "error" in c)
    print(f"{cfg.kind}: {gates - failed}/{gates} gates passed"
          + (f", {errored} cell error(s)" if errored else "")
          + f" -> {paths['json']}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
