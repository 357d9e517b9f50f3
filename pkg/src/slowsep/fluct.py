"""Density-fluctuation statistics from simulator output: the fluctuation
field, Dynkin martingales with exact time integrals, the predicted
quadratic variation, covariance and Gaussianity estimators, and the
boundary replacement-moment probe.

Everything is equilibrium-only: the field is centered at the constant
density rho, the regime where the limiting field is Ornstein-Uhlenbeck.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .kmc import EnsembleResult, TrajectoryRecord
from .lattice import Configuration, Parameters
from .pde import TestFunction


def _site_points(p: Parameters) -> np.ndarray:
    return np.arange(1, p.n) / p.n


def _f_values(f, p: Parameters) -> np.ndarray:
    fun = f.f if isinstance(f, TestFunction) else f
    return np.asarray(fun(_site_points(p)), dtype=float)


def fluctuation_field(eta, f, p: Parameters, rho: float) -> float:
    """Y^n(f) = n^{-1/2} sum_x f(x/n) (eta(x) - rho)."""
    occ = eta.occupations if isinstance(eta, Configuration) else np.asarray(eta)
    if occ.size != p.n_sites:
        raise ValueError(f"configuration has {occ.size} sites, expected {p.n_sites}")
    return float(np.sum(_f_values(f, p) * (occ - rho)) / math.sqrt(p.n))


def gamma_term(eta, f, p: Parameters, rho: float) -> float:
    """The generator part of the Dynkin decomposition, term by term:
    bulk lattice Laplacian, one-sided boundary gradients, and the
    reservoir terms carrying the n^{3/2 - theta} factor."""
    occ = eta.occupations if isinstance(eta, Configuration) else np.asarray(eta)
    fun = f.f if isinstance(f, TestFunction) else f
    n = p.n
    pts = np.arange(0, n + 1) / n
    fv = np.asarray(fun(pts), dtype=float)
    centered = occ - rho
    lap = n * n * (fv[2:] + fv[:-2] - 2.0 * fv[1:-1])
    bulk = np.sum(lap * centered) / math.sqrt(n)
    grad_left = n * (fv[1] - fv[0])          # nabla+ f(0)
    grad_right = n * (fv[n] - fv[n - 1])     # nabla- f(n)
    grad = math.sqrt(n) * (grad_left * centered[0] - grad_right * centered[-1])
    res = n ** 1.5 / n ** p.theta
    reservoir = -res * (fv[1] * centered[0] + fv[n - 1] * centered[-1])
    return float(bulk + grad + reservoir)


def gamma_site_weights(f, p: Parameters) -> np.ndarray:
    """Site weights w with Gamma(eta) = sum_x w(x) (eta(x) - rho).

    The generator part is linear in the centered occupations with
    time-constant coefficients, which is what makes its path integral an
    exact function of the per-site occupation time integrals.
    """
    fun = f.f if isinstance(f, TestFunction) else f
    n = p.n
    pts = np.arange(0, n + 1) / n
    fv = np.asarray(fun(pts), dtype=float)
    w = n * n * (fv[2:] + fv[:-2] - 2.0 * fv[1:-1]) / math.sqrt(n)
    res = n ** 1.5 / n ** p.theta
    w[0] += math.sqrt(n) * n * (fv[1] - fv[0]) - res * fv[1]
    w[-1] += -math.sqrt(n) * n * (fv[n] - fv[n - 1]) - res * fv[n - 1]
    return w


@dataclass(frozen=True)
class FluctuationSeries:
    """Per-replica fluctuation field values on the ensemble time grid."""

    f: object
    times: np.ndarray
    values: np.ndarray  # (replicas, grid)
    params: Parameters
    rho: float

    @property
    def replicas(self) -> int:
        return self.values.shape[0]

    def column(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not on the series grid")
        return self.values[:, idx]


def fluctuation_series(result: EnsembleResult, f, rho: float) -> FluctuationSeries:
    """Evaluate Y_t^n(f) for every replica and grid time of an ensemble."""
    p = result.params
    fv = _f_values(f, p)
    vals = (result.snapshots.astype(np.float64) - rho) @ fv / math.sqrt(p.n)
    return FluctuationSeries(f=f, times=result.grid.copy(), values=vals,
                             params=p, rho=rho)


@dataclass(frozen=True)
class MartingaleSeries:
    """Dynkin martingale M_t = Y_t - Y_0 - int_0^t Gamma_s ds at grid times."""

    f: object
    times: np.ndarray
    m_values: np.ndarray        # (replicas, grid)
    y_values: np.ndarray
    gamma_integrals: np.ndarray
    params: Parameters
    rho: float


def _require_site_integrals(record: TrajectoryRecord):
    si = record.observables.get("site_time_integrals")
    if si is None and record.event_log is None:
        raise ValueError(
            "record lacks exact time-integral data; rerun with the "
            "'site_time_integrals' observer or with log_events=True")
    return si


def martingale_ensemble(result: EnsembleResult, f, rho: float) -> MartingaleSeries:
    """Martingale series for all replicas, with exact Gamma integrals.

    The integral of Gamma over [0, t] equals sum_x w(x) (S_t(x) - rho t)
    where S_t(x) is the exact occupation time of site x, so no quadrature
    enters anywhere.
    """
    p = result.params
    fv = _f_values(f, p)
    w = gamma_site_weights(f, p)
    t = result.grid
    y = (result.snapshots.astype(np.float64) - rho) @ fv / math.sqrt(p.n)
    integ = (result.site_integrals - rho * t[None, :, None]) @ w
    m = y - y[:, :1] - (integ - integ[:, :1])
    return MartingaleSeries(f=f, times=t.copy(), m_values=m, y_values=y,
                            gamma_integrals=integ, params=p, rho=rho)


def dynkin_martingale(record: TrajectoryRecord, f, p: Parameters, rho: float) -> MartingaleSeries:
    """Martingale series for a single trajectory record.

    Uses the exact per-site occupation integrals when present; otherwise
    replays the full event log (grid must then start at 0).
    """
    si = _require_site_integrals(record)
    fv = _f_values(f, p)
    w = gamma_site_weights(f, p)
    t = record.grid
    snaps = np.stack([record.snapshots[float(tk)].occupations for tk in t]).astype(np.float64)
    y = (snaps - rho) @ fv / math.sqrt(p.n)
    if si is not None:
        integ = (si - rho * t[:, None]) @ w
    else:
        integ = _gamma_integral_from_log(record, w, rho)
    m = y - y[0] - (integ - integ[0])
    return MartingaleSeries(f=f, times=t.copy(),
                            m_values=m[None, :], y_values=y[None, :],
                            gamma_integrals=integ[None, :], params=p, rho=rho)


def _gamma_integral_from_log(record: TrajectoryRecord, w: np.ndarray, rho: float) -> np.ndarray:
    """Exact int_0^t Gamma ds by replaying the event log."""
    t = record.grid
    if t[0] != 0.0:
        raise ValueError("event-log replay needs the grid to start at time 0")
    occ = record.snapshots[0.0].occupations.astype(np.int8).copy()
    times, bonds = record.event_log
    m = occ.size
    gamma = float(np.sum(w * (occ - rho)))
    out = np.zeros(t.size)
    acc = 0.0
    prev = 0.0
    gi = 1
    for k in range(times.size):
        tk = times[k]
        while gi < t.size and t[gi] <= tk:
            out[gi] = acc + gamma * (t[gi] - prev)
            gi += 1
        acc += gamma * (tk - prev)
        prev = tk
        b = int(bonds[k])
        if b == 0:
            occ[0] ^= 1
            gamma += w[0] * (1 if occ[0] else -1)
        elif b == m:
            occ[-1] ^= 1
            gamma += w[-1] * (1 if occ[-1] else -1)
        else:
            occ[b - 1], occ[b] = occ[b], occ[b - 1]
            d = float(occ[b - 1]) - float(occ[b])
            gamma += (w[b - 1] - w[b]) * d
    while gi < t.size:
        out[gi] = acc + gamma * (t[gi] - prev)
        gi += 1
    return out


def predicted_qv(f, p: Parameters, t: float, rho: float) -> float:
    """Expected squared martingale at time t under the stationary start:
    2 chi(rho) t [ n^{-1} sum (nabla+ f)^2 + n^{1-theta} (f(1/n)^2 + f((n-1)/n)^2) ].
    """
    fun = f.f if isinstance(f, TestFunction) else f
    n = p.n
    pts = np.arange(0, n + 1) / n
    fv = np.asarray(fun(pts), dtype=float)
    gradp = n * (fv[1:] - fv[:-1])  # nabla+ f(x/n) at x = 0..n-1
    bulk = np.sum(gradp[1:n - 1] ** 2) / n
    boundary = n ** (1.0 - p.theta) * (fv[1] ** 2 + fv[n - 1] ** 2)
    chi = rho * (1.0 - rho)
    return float(2.0 * chi * t * (bulk + boundary))


def covariance_estimator(series: FluctuationSeries, s: float, t: float):
    """Sample covariance of (Y_s, Y_t) across replicas with jackknife error."""
    if series.replicas < 2:
        raise ValueError("need at least 2 replicas for a covariance estimate")
    a = series.column(s)
    b = series.column(t)
    return cov_jackknife(a, b)


def cov_jackknife(a: np.ndarray, b: np.ndarray):
    """Covariance of two replica-aligned samples and its jackknife stderr."""
    R = a.size
    if R < 2:
        raise ValueError("need at least 2 replicas")
    S_a, S_b, S_ab = a.sum(), b.sum(), (a * b).sum()
    cov = (S_ab - S_a * S_b / R) / (R - 1)
    if R == 2:
        return float(cov), float("nan")
    ma = (S_a - a) / (R - 1)
    mb = (S_b - b) / (R - 1)
    loo = ((S_ab - a * b) - (R - 1) * ma * mb) / (R - 2)
    se = math.sqrt((R - 1) / R * np.sum((loo - loo.mean()) ** 2))
    return float(cov), float(se)


@dataclass(frozen=True)
class GaussianityReport:
    """Moment and characteristic-function diagnostics of the initial field."""

    replicas: int
    mean: float
    mean_stderr: float
    variance: float
    variance_stderr: float
    theory_variance: float
    skewness: float
    excess_kurtosis: float
    normality_pvalue: float
    cf_checks: tuple  # (lam, empirical_re, empirical_im, theory, stderr, z)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "replicas", "mean", "mean_stderr", "variance", "variance_stderr",
            "theory_variance", "skewness", "excess_kurtosis", "normality_pvalue")}
        d["cf_checks"] = [list(c) for c in self.cf_checks]
        return d


def initial_gaussianity(series: FluctuationSeries, f=None,
                        lambdas=(0.5, 1.0, 2.0), min_replicas: int = 1000) -> GaussianityReport:
    """Test the t=0 field against the centered Gaussian limit.

    Reports moments against chi(rho) n^{-1} sum f(x/n)^2 and the empirical
    characteristic function against exp(-lam^2 variance / 2).
    """
    if series.replicas < min_replicas:
        raise ValueError(f"need at least {min_replicas} replicas, got {series.replicas}")
    y = series.column(series.times[0])
    R = y.size
    p = series.params
    fv = _f_values(f if f is not None else series.f, p)
    chi = series.rho * (1.0 - series.rho)
    theory_var = chi * np.sum(fv ** 2) / p.n

    mean = float(y.mean())
    var = float(y.var(ddof=1))
    centered = y - mean
    m4 = float(np.mean(centered ** 4))
    var_se = math.sqrt(max(m4 - var ** 2, 0.0) / R)
    skew = float(scipy.stats.skew(y))
    kurt = float(scipy.stats.kurtosis(y))
    pval = float(scipy.stats.normaltest(y).pvalue)

    checks = []
    for lam in lambdas:
        re = np.cos(lam * y)
        im = np.sin(lam * y)
        emp_re, emp_im = float(re.mean()), float(im.mean())
        theory = math.exp(-lam * lam * theory_var / 2.0)
        se = float(re.std(ddof=1) / math.sqrt(R))
        z = abs(emp_re - theory) / se if se > 0 else float("inf")
        checks.append((float(lam), emp_re, emp_im, theory, se, z))
    return GaussianityReport(replicas=R, mean=mean,
                             mean_stderr=float(y.std(ddof=1) / math.sqrt(R)),
                             variance=var, variance_stderr=var_se,
                             theory_variance=float(theory_var), skewness=skew,
                             excess_kurtosis=kurt, normality_pvalue=pval,
                             cf_checks=tuple(checks))


def sample_initial_fields(p: Parameters, rho: float, f, replicas: int,
                          master_seed: int) -> FluctuationSeries:
    """Draw Y_0 samples directly from the Bernoulli product measure."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed))))
    occ = rng.random((replicas, p.n_sites)) < rho
    fv = _f_values(f, p)
    vals = (occ.astype(np.float64) - rho) @ fv / math.sqrt(p.n)
    return FluctuationSeries(f=f, times=np.zeros(1), values=vals[:, None],
                             params=p, rho=rho)


def series_to_csv(series: FluctuationSeries | MartingaleSeries, path) -> None:
    """Write a per-replica time series as (replica, t, value) rows."""
    values = series.values if isinstance(series, FluctuationSeries) else series.m_values
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("replica,t,value\n")
        for r in range(values.shape[0]):
            for g, t in enumerate(series.times):
                fh.write(f"{r},{float(t)!r},{float(values[r, g])!r}\n")


def replacement_moment(result: EnsembleResult, x: int, c_n: float, t: float):
    """Second moment of int_0^t c_n (eta_s(x) - rho) ds across replicas.

    x must be a boundary site (1 or n-1); the run must be an equilibrium
    ensemble (alpha = beta) so the centering density is unambiguous.
    """
    p = result.params
    if x not in (1, p.n - 1):
        raise ValueError(f"x must be a boundary site (1 or {p.n - 1}), got {x}")
    if p.alpha != p.beta:
        raise ValueError("replacement moments are defined for alpha == beta")
    rho = p.alpha
    gi = result.grid_index(t)
    tg = result.grid[gi]
    if tg == 0.0:
        return 0.0, 0.0
    I = c_n * (result.site_integrals[:, gi, x - 1] - rho * tg)
    sq = I ** 2
    R = sq.size
    est = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    return est, se
