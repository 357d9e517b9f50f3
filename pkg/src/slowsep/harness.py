"""Experiment orchestration: runs the configured pipeline over the
parameter grid, evaluates the statistical gates, and writes deterministic
JSON/CSV reports. Exit status is a pure function of the report contents.

Replicas are simulated in parallel but every aggregate is accumulated in
replica-index order, so a rerun with the same (config, seed) produces
byte-identical reports regardless of thread count.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import exact, fluct, kmc
from .config import ExperimentConfig
from .lattice import Parameters, Regime, classify_regime
from .pde import eigenbasis, hydrostatic_profile, solve_heat

SCHEMA_VERSION = 1


def set_threads(threads: int) -> int:
    """Apply thread override: SLOWSEP_THREADS beats the argument, which
    beats the default (all cores). Returns the effective count."""
    env = os.environ.get("SLOWSEP_THREADS")
    if env:
        threads = int(env)
    import numba
    if threads and threads > 0:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return numba.get_num_threads()


def check(statistic: str, estimate: float, tol, passed: bool,
          stderr=None, theory=None, z=None) -> dict:
    return {
        "statistic": statistic,
        "estimate": float(estimate),
        "stderr": None if stderr is None else float(stderr),
        "theory": None if theory is None else float(theory),
        "z": None if z is None else float(z),
        "tol": None if tol is None else float(tol),
        "passed": bool(passed),
    }


def band_check(statistic: str, estimate: float, theory: float, stderr: float,
               band: float) -> dict:
    z = abs(estimate - theory) / stderr if stderr > 0 else math.inf
    return check(statistic, estimate, band, z < band, stderr=stderr,
                 theory=theory, z=z)


def _l1(a: np.ndarray, b: np.ndarray, n: int) -> float:
    return float(np.sum(np.abs(np.asarray(a) - np.asarray(b))) / n)


def _safe_cell(params: dict, body) -> dict:
    """Evaluate one grid cell, trapping per-cell failures in the report."""
    try:
        result = body()
        checks, extra = result if isinstance(result, tuple) else (result, None)
        cell = {"cell": params, "checks": checks}
        if extra:
            cell.update(extra)
    except Exception as exc:
        cell = {"cell": params, "checks": [],
                "error": f"{type(exc).__name__}: {exc}"}
    return cell


def first_eigen_test_function(theta: float, basis_size: int = 16):
    """First non-constant eigenfunction of the regime of theta, with its
    eigenvalue."""
    basis = eigenbasis(classify_regime(theta), basis_size)
    k = basis.first_excited
    return basis.member(k), float(basis.eigenvalues[k])


def _qv_identity_residual(p: Parameters, rho: float, f) -> float:
    """|enumeration - formula| / scale for the martingale QV rate."""
    occ = exact.state_occupations(p.n_sites).astype(np.float64)
    fv = fluct._f_values(f, p)
    F = (occ - rho) @ fv / math.sqrt(p.n)
    rate_enum = exact.expected_carre_du_champ(p, rho, F)
    rate_formula = fluct.predicted_qv(f, p, 1.0, rho)
    return abs(rate_enum - rate_formula) / (1.0 + abs(rate_formula))


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------

def _exact_check_cells(cfg: ExperimentConfig):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 0xE))))
    cells = []
    for n in cfg.n:
        for theta in cfg.theta:
            def body(n=n, theta=theta):
                checks = []
                peq = Parameters.equilibrium(n, theta, cfg.rho)
                Q = exact.build_generator(peq)
                nu = exact.bernoulli_measure(peq, cfg.rho)
                resid = float(np.abs(nu @ Q.matrix).max())
                checks.append(check("stationarity_residual", resid, 1e-10, resid < 1e-10))
                resid = exact.detailed_balance_check(peq)
                checks.append(check("detailed_balance_residual", resid, 1e-12, resid < 1e-12))

                Q0 = exact.build_generator(peq, accelerated=False)
                worst = 0.0
                for _ in range(cfg.random_f):
                    f = rng.standard_normal(Q.dimension)
                    lhs = exact.generator_quadratic_form(Q0, f, nu)
                    dn = exact.dirichlet_form(f, nu, peq)
                    worst = max(worst, abs(lhs - 0.5 * dn) / (1.0 + abs(dn)))
                checks.append(check("dirichlet_form_identity", worst, 1e-10, worst < 1e-10))

                pne = Parameters(n=n, theta=theta, alpha=cfg.alpha, beta=cfg.beta, rho=cfg.rho)
                prof = exact.exact_mean_profile(exact.build_generator(pne), pne)
                dev = float(np.abs(prof - exact.closed_form_profile(pne)).max())
                checks.append(check("profile_vs_closed_form", dev, 1e-9, dev < 1e-9))

                mu_t = exact.exact_evolution(Q, nu, 0.1)
                inv = float(np.abs(mu_t - nu).max())
                checks.append(check("bernoulli_invariance", inv, 1e-9, inv < 1e-9))

                two_step = exact.exact_evolution(Q, exact.exact_evolution(Q, nu, 0.03), 0.07)
                semi = float(np.abs(two_step - mu_t).max())
                checks.append(check("evolution_semigroup", semi, 1e-9, semi < 1e-9))

                if n <= 8:
                    f_tf, _ = first_eigen_test_function(theta)
                    qv_dev = _qv_identity_residual(peq, cfg.rho, f_tf)
                    checks.append(check("qv_enumeration_identity", qv_dev, 1e-10, qv_dev < 1e-10))
                return checks

            cells.append(_safe_cell({"n": n, "theta": theta, "rho": cfg.rho,
                                     "alpha": cfg.alpha, "beta": cfg.beta}, body))
    return cells


def _hydrostatics_cells(cfg: ExperimentConfig):
    cells = []
    for ci, (n, theta) in enumerate(_grid(cfg)):
        def body(ci=ci, n=n, theta=theta):
            p = Parameters(n=n, theta=theta, alpha=cfg.alpha, beta=cfg.beta, rho=cfg.rho)
            T = cfg.burn_in + cfg.avg_window
            t0 = cfg.burn_in if cfg.burn_in > 0 else T / 2
            res = kmc.run_ensemble(p, T=T, grid=[t0, T], replicas=cfg.replicas,
                                   master_seed=cfg.seed, seed_salt=(ci,),
                                   init=kmc.InitSpec.bernoulli(0.5))
            mean, _ = kmc.time_averaged_profile(res, t0, T)
            target = hydrostatic_profile(theta, cfg.alpha, cfg.beta)(np.arange(1, n) / n)
            l1 = _l1(mean, target, n)
            return [check("hydrostatic_l1", l1, cfg.tol_l1, l1 < cfg.tol_l1)]

        cells.append(_safe_cell({"n": n, "theta": theta, "alpha": cfg.alpha,
                                 "beta": cfg.beta, "replicas": cfg.replicas,
                                 "window": cfg.avg_window}, body))
    return cells


def _hydrodynamics_cells(cfg: ExperimentConfig):
    cells = []
    t_grid = sorted(cfg.t_grid)
    T = t_grid[-1]
    for ci, (n, theta) in enumerate(_grid(cfg)):
        def body(ci=ci, n=n, theta=theta):
            p = Parameters(n=n, theta=theta, alpha=cfg.alpha, beta=cfg.beta, rho=cfg.rho)
            res = kmc.run_ensemble(p, T=T, grid=t_grid, replicas=cfg.replicas,
                                   master_seed=cfg.seed, seed_salt=(ci,),
                                   init=kmc.InitSpec.bernoulli(cfg.rho0))
            field = solve_heat(classify_regime(theta),
                               lambda u: np.full_like(u, cfg.rho0),
                               cfg.alpha, cfg.beta, M=cfg.M, dt=cfg.dt, T=T)
            sites = np.arange(1, n) / n
            lattice_mean = exact.evolve_mean_profile(
                p, np.full(n - 1, cfg.rho0), np.array(t_grid))
            checks = []
            for ti, t in enumerate(t_grid):
                emp, _ = kmc.empirical_density_profile(res, t)
                target = field.sample(sites, t)
                l1 = _l1(emp, target, n)
                c = check(f"hydrodynamic_l1_t={t}", l1, cfg.tol_l1, l1 < cfg.tol_l1)
                # exact first-moment gap: isolates finite-n bias from MC noise
                c["lattice_bias_l1"] = _l1(lattice_mean[ti], target, n)
                checks.append(c)
            if cfg.export != "none":
                _export_snapshots(cfg, res, ci)
            return checks

        cells.append(_safe_cell({"n": n, "theta": theta, "alpha": cfg.alpha,
                                 "beta": cfg.beta, "rho0": cfg.rho0,
                                 "replicas": cfg.replicas}, body))
    return cells


def _export_snapshots(cfg: ExperimentConfig, res, cell_index: int):
    os.makedirs(cfg.out_dir, exist_ok=True)
    base = os.path.join(cfg.out_dir, f"trajectories_cell{cell_index}")
    if cfg.export == "csv":
        kmc.snapshots_to_csv(res, base + ".csv")
    elif cfg.export == "binary":
        kmc.write_snapshots_binary(res, base + ".bin")


def _qv_cells(cfg: ExperimentConfig):
    cells = []
    for ci, (n, theta) in enumerate(_grid(cfg)):
        def body(ci=ci, n=n, theta=theta):
            p = Parameters.equilibrium(n, theta, cfg.rho)
            f, _ = first_eigen_test_function(theta, cfg.basis_size)
            res = kmc.run_ensemble(p, T=cfg.T, grid=[0.0, cfg.T], replicas=cfg.replicas,
                                   master_seed=cfg.seed, seed_salt=(ci,),
                                   init=kmc.InitSpec.bernoulli(cfg.rho))
            ms = fluct.martingale_ensemble(res, f, cfg.rho)
            m_t = ms.m_values[:, -1]
            var = float(np.var(m_t, ddof=1))
            m4 = float(np.mean((m_t - m_t.mean()) ** 4))
            se = math.sqrt(max(m4 - var * var, 0.0) / m_t.size)
            theory = fluct.predicted_qv(f, p, cfg.T, cfg.rho)
            checks = [band_check(f"qv_variance_t={cfg.T}", var, theory, se, cfg.sigma_band),
                      band_check("martingale_mean", float(m_t.mean()), 0.0,
                                 float(m_t.std(ddof=1) / math.sqrt(m_t.size)),
                                 cfg.sigma_band)]
            for ne in cfg.exact_n:
                pe = Parameters.equilibrium(ne, theta, cfg.rho)
                dev = _qv_identity_residual(pe, cfg.rho, f)
                checks.append(check(f"qv_enumeration_identity_n={ne}", dev, 1e-10,
                                    dev < 1e-10))
            if cfg.export == "csv":
                os.makedirs(cfg.out_dir, exist_ok=True)
                fluct.series_to_csv(ms, os.path.join(cfg.out_dir,
                                                     f"martingale_cell{ci}.csv"))
            return checks

        cells.append(_safe_cell({"n": n, "theta": theta, "rho": cfg.rho,
                                 "T": cfg.T, "replicas": cfg.replicas}, body))
    return cells


def _gaussianity_cells(cfg: ExperimentConfig):
    cells = []
    for ci, n in enumerate(cfg.n):
        def body(ci=ci, n=n):
            p = Parameters.equilibrium(n, cfg.theta[0], cfg.rho)
            basis = eigenbasis(Regime.DIRICHLET, 4)
            f = basis.member(basis.first_excited)
            series = fluct.sample_initial_fields(p, cfg.rho, f, cfg.replicas,
                                                 master_seed=cfg.seed + ci)
            rep = fluct.initial_gaussianity(series, lambdas=cfg.lambdas)
            checks = [
                band_check("variance", rep.variance, rep.theory_variance,
                           rep.variance_stderr, cfg.sigma_band),
                check("skewness", rep.skewness, cfg.skew_tol,
                      abs(rep.skewness) < cfg.skew_tol),
            ]
            for lam, emp_re, _, theory, se, z in rep.cf_checks:
                checks.append(check(f"cf_lambda={lam}", emp_re, cfg.sigma_band,
                                    z < cfg.sigma_band, stderr=se, theory=theory, z=z))
            return checks, {"report": rep.to_dict()}

        cells.append(_safe_cell({"n": n, "rho": cfg.rho, "replicas": cfg.replicas}, body))
    return cells


def _ou_covariance_cells(cfg: ExperimentConfig):
    cells = []
    chi = cfg.rho * (1.0 - cfg.rho)
    t_grid = sorted(cfg.t_grid)
    for ci, (n, theta) in enumerate(_grid(cfg)):
        def body(ci=ci, n=n, theta=theta):
            p = Parameters.equilibrium(n, theta, cfg.rho)
            f, lam1 = first_eigen_test_function(theta, cfg.basis_size)
            res = kmc.run_ensemble(p, T=t_grid[-1], grid=[0.0] + t_grid,
                                   replicas=cfg.replicas, master_seed=cfg.seed,
                                   seed_salt=(ci,), init=kmc.InitSpec.bernoulli(cfg.rho))
            series = fluct.fluctuation_series(res, f, cfg.rho)
            fv = fluct._f_values(f, p)
            var0, var0_se = fluct.cov_jackknife(series.values[:, 0], series.values[:, 0])
            checks = [band_check("variance_t=0", var0,
                                 chi * float(np.sum(fv ** 2)) / n, var0_se,
                                 cfg.sigma_band)]
            for t in t_grid:
                cov, se = fluct.covariance_estimator(series, 0.0, t)
                theory = chi * math.exp(-lam1 * t)  # ||f||_{L2[0,1]} = 1
                checks.append(band_check(f"ou_covariance_t={t}", cov, theory, se,
                                         cfg.sigma_band))
            if cfg.export == "csv":
                os.makedirs(cfg.out_dir, exist_ok=True)
                fluct.series_to_csv(series, os.path.join(cfg.out_dir,
                                                         f"fluctuation_cell{ci}.csv"))
            return checks

        cells.append(_safe_cell({"n": n, "theta": theta, "rho": cfg.rho,
                                 "replicas": cfg.replicas}, body))
    return cells


def _replacement_cells(cfg: ExperimentConfig):
    cells = []
    for ci, theta in enumerate(cfg.theta):
        def body(ci=ci, theta=theta):
            moments = []
            for ni, n in enumerate(cfg.n):
                p = Parameters.equilibrium(n, theta, cfg.rho)
                c_n = math.sqrt(n) if theta < 1.0 else float(n) ** (1.5 - theta)
                res = kmc.run_ensemble(p, T=cfg.T, grid=[cfg.T], replicas=cfg.replicas,
                                       master_seed=cfg.seed, seed_salt=(ci, ni),
                                       init=kmc.InitSpec.bernoulli(cfg.rho))
                est, se = fluct.replacement_moment(res, 1, c_n, cfg.T)
                moments.append((n, est, se))
            ln = np.log([m[0] for m in moments])
            lv = np.log([m[1] for m in moments])
            slope = float(np.polyfit(ln, lv, 1)[0])
            envelope = theta - 1.0 if theta < 1.0 else 1.0 - theta
            checks = [check("moment_loglog_slope", slope, cfg.slope_tol,
                            slope <= envelope + cfg.slope_tol, theory=envelope)]
            for n, est, se in moments:
                checks.append(check(f"second_moment_n={n}", est, None, True, stderr=se))
            return checks

        cells.append(_safe_cell({"theta": theta, "rho": cfg.rho, "T": cfg.T,
                                 "replicas": cfg.replicas, "n_grid": list(cfg.n)}, body))
    return cells


def _grid(cfg: ExperimentConfig):
    return [(n, theta) for n in cfg.n for theta in cfg.theta]


_RUNNERS = {
    "exact-check": _exact_check_cells,
    "hydrostatics": _hydrostatics_cells,
    "hydrodynamics": _hydrodynamics_cells,
    "qv-check": _qv_cells,
    "gaussianity": _gaussianity_cells,
    "ou-covariance": _ou_covariance_cells,
    "replacement-scaling": _replacement_cells,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Run the configured experiment; returns (exit_status, report, paths)."""
    set_threads(cfg.threads)
    out = out_dir if out_dir is not None else cfg.out_dir
    cells = _RUNNERS[cfg.kind](cfg)
    for cell in cells:
        cell["passed"] = bool(all(c["passed"] for c in cell["checks"])) and "error" not in cell
    # out_dir and threads are execution details; dropping them keeps reports
    # byte-identical across output locations and worker counts
    config_echo = {k: v for k, v in cfg.to_dict().items()
                   if k not in ("out_dir", "threads")}
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": cfg.kind,
        "config": config_echo,
        "cells": cells,
        "passed": bool(all(cell["passed"] for cell in cells)),
    }
    paths = write_report(report, out)
    return (0 if report["passed"] else 1), report, paths


def write_report(report: dict, out_dir) -> dict:
    """Write report.json and cells.csv; byte-identical for identical inputs."""
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = os.path.join(out_dir, "cells.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("kind,cell,statistic,estimate,stderr,theory,z,tol,passed\n")
        for cell in report["cells"]:
            tag = ";".join(f"{k}={v}" for k, v in sorted(cell["cell"].items()))
            for c in cell["checks"]:
                fields = [report["kind"], tag, c["statistic"]]
                for key in ("estimate", "stderr", "theory", "z", "tol"):
                    v = c.get(key)
                    fields.append("" if v is None else repr(v))
                fields.append(str(c["passed"]))
                fh.write(",".join(fields) + "\n")
    return {"json": json_path, "csv": csv_path}
