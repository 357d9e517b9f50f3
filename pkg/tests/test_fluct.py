import math

import numpy as np
import pytest

from slowsep import exact, fluct, kmc
from slowsep.harness import first_eigen_test_function
from slowsep.lattice import Configuration, Parameters
from slowsep.pde import discrete_operators, eigenbasis, polynomial_dirichlet


def test_fluctuation_field_zero_function():
    p = Parameters.equilibrium(8, 0.0, 0.5)
    eta = Configuration.from_sites([1, 0, 1, 0, 1, 0, 1])
    assert fluct.fluctuation_field(eta, lambda u: 0.0 * u, p, 0.5) == 0.0


def test_fluctuation_field_hand_value():
    # n=4, rho=1/2, eta=(1,0,0), f(u)=u -> -0.25
    p = Parameters.equilibrium(4, 0.0, 0.5)
    eta = Configuration.from_sites([1, 0, 0])
    y = fluct.fluctuation_field(eta, lambda u: u, p, 0.5)
    assert y == pytest.approx(-0.25)


def test_fluctuation_field_linearity():
    p = Parameters.equilibrium(10, 1.0, 0.3)
    eta = Configuration.from_sites([1, 1, 0, 1, 0, 0, 0, 1, 1])
    f = lambda u: np.sin(np.pi * u)
    g = lambda u: u * u
    lhs = fluct.fluctuation_field(eta, lambda u: 2.0 * f(u) - 3.5 * g(u), p, 0.3)
    rhs = (2.0 * fluct.fluctuation_field(eta, f, p, 0.3)
           - 3.5 * fluct.fluctuation_field(eta, g, p, 0.3))
    assert lhs == pytest.approx(rhs, abs=1e-14)


def test_fluctuation_field_variance_under_bernoulli():
    p = Parameters.equilibrium(100, 0.0, 0.3)
    f, _ = first_eigen_test_function(0.0)
    series = fluct.sample_initial_fields(p, 0.3, f, 40000, master_seed=4)
    y = series.values[:, 0]
    fv = fluct._f_values(f, p)
    expect = 0.3 * 0.7 * np.sum(fv ** 2) / 100
    se = math.sqrt(2.0 / y.size) * expect  # approx var-of-variance
    assert abs(y.var(ddof=1) - expect) < 4 * se


def test_fluctuation_field_crude_bound():
    # |Y(f)| <= sqrt(n) max|f| for any configuration (n-1 bounded summands)
    p = Parameters.equilibrium(30, 0.5, 0.5)
    f = lambda u: np.cos(3 * np.pi * u)
    rng = np.random.default_rng(2)
    bound = math.sqrt(p.n) * 1.0
    for _ in range(20):
        occ = (rng.random(p.n_sites) < rng.random()).astype(np.uint8)
        assert abs(fluct.fluctuation_field(occ, f, p, 0.5)) <= bound


def test_gamma_equals_generator_action_enumeration():
    # Gamma must equal n^2 L Y(f) state by state, all regimes
    for theta in (0.0, 0.5, 1.0, 2.0):
        p = Parameters.equilibrium(6, theta, 0.35)
        f, _ = first_eigen_test_function(theta)
        occs = exact.state_occupations(p.n_sites)
        fv = fluct._f_values(f, p)
        Y = (occs.astype(float) - 0.35) @ fv / math.sqrt(p.n)
        LY = exact.build_generator(p).matrix @ Y
        for i in (0, 7, 13, 31):
            gam = fluct.gamma_term(occs[i], f, p, 0.35)
            assert gam == pytest.approx(LY[i], abs=1e-12)


def test_gamma_weights_agree_with_gamma_term():
    p = Parameters.equilibrium(9, 0.7, 0.4)
    f = polynomial_dirichlet(1)
    w = fluct.gamma_site_weights(f, p)
    rng = np.random.default_rng(0)
    for _ in range(10):
        occ = (rng.random(p.n_sites) < 0.4).astype(np.uint8)
        direct = fluct.gamma_term(occ, f, p, 0.4)
        assert direct == pytest.approx(float(w @ (occ - 0.4)), abs=1e-12)


def test_gamma_dirichlet_reduction_at_theta_zero():
    # f(0)=f(1)=0 and theta=0: Gamma = Y(Delta_n f) exactly
    p = Parameters.equilibrium(12, 0.0, 0.5)
    f = polynomial_dirichlet(0)
    lap, _, _ = discrete_operators(f, p.n)
    rng = np.random.default_rng(1)
    for _ in range(10):
        occ = (rng.random(p.n_sites) < 0.5).astype(np.uint8)
        gam = fluct.gamma_term(occ, f, p, 0.5)
        y_lap = float(np.sum(lap * (occ - 0.5)) / math.sqrt(p.n))
        assert gam == pytest.approx(y_lap, abs=1e-10)


def test_gamma_constant_function_neumann_branch():
    # f == 1: only the reservoir terms survive
    p = Parameters.equilibrium(10, 2.0, 0.5)
    occ = np.array([1, 0, 0, 1, 1, 0, 1, 0, 0], dtype=np.uint8)
    gam = fluct.gamma_term(occ, lambda u: np.ones_like(np.asarray(u, float)), p, 0.5)
    expect = -(10 ** 1.5 / 10 ** 2.0) * ((occ[0] - 0.5) + (occ[-1] - 0.5))
    assert gam == pytest.approx(expect, abs=1e-12)


def test_gamma_vanishes_when_field_is_flat():
    # all sites equal to the centering density surrogate
    p = Parameters.equilibrium(7, 1.0, 0.5)
    occ = np.ones(p.n_sites, dtype=np.uint8)
    gam = fluct.gamma_term(occ, lambda u: np.sin(np.pi * u), p, 1.0)
    assert gam == pytest.approx(0.0, abs=1e-12)


def test_martingale_zero_at_time_zero():
    p = Parameters.equilibrium(8, 1.0, 0.5)
    res = kmc.run_ensemble(p, T=0.2, grid=[0.0, 0.1, 0.2], replicas=16,
                           master_seed=0, init=kmc.InitSpec.bernoulli(0.5))
    f, _ = first_eigen_test_function(1.0)
    ms = fluct.martingale_ensemble(res, f, 0.5)
    assert np.all(ms.m_values[:, 0] == 0.0)


def test_martingale_mean_and_variance():
    p = Parameters.equilibrium(24, 0.5, 0.5)
    f, _ = first_eigen_test_function(0.5)
    res = kmc.run_ensemble(p, T=0.1, grid=[0.0, 0.1], replicas=8000,
                           master_seed=19, init=kmc.InitSpec.bernoulli(0.5))
    ms = fluct.martingale_ensemble(res, f, 0.5)
    m = ms.m_values[:, -1]
    se_mean = m.std(ddof=1) / math.sqrt(m.size)
    assert abs(m.mean()) < 4 * se_mean
    qv = fluct.predicted_qv(f, p, 0.1, 0.5)
    var = m.var(ddof=1)
    m4 = np.mean((m - m.mean()) ** 4)
    se_var = math.sqrt(max(m4 - var ** 2, 0.0) / m.size)
    assert abs(var - qv) < 4 * se_var


def test_martingale_increment_orthogonality():
    p = Parameters.equilibrium(16, 1.0, 0.5)
    f, _ = first_eigen_test_function(1.0)
    res = kmc.run_ensemble(p, T=0.3, grid=[0.0, 0.1, 0.2, 0.3], replicas=6000,
                           master_seed=29, init=kmc.InitSpec.bernoulli(0.5))
    ms = fluct.martingale_ensemble(res, f, 0.5)
    d1 = ms.m_values[:, 1] - ms.m_values[:, 0]
    d2 = ms.m_values[:, 3] - ms.m_values[:, 2]
    cov, se = fluct.cov_jackknife(d1, d2)
    assert abs(cov) < 4 * se


def test_dynkin_martingale_paths_match_replay():
    p = Parameters.equilibrium(10, 2.0, 0.4)
    init = Configuration.from_sites([1, 0, 0, 1, 0, 1, 1, 0, 0])
    rec = kmc.run_trajectory(p, init, T=0.5, grid=np.linspace(0, 0.5, 11),
                             rng=77, log_events=True)
    f, _ = first_eigen_test_function(2.0)
    via_integrals = fluct.dynkin_martingale(rec, f, p, 0.4)
    stripped = kmc.TrajectoryRecord(params=rec.params, grid=rec.grid,
                                    snapshots=rec.snapshots, observables={},
                                    event_count=rec.event_count, seed=rec.seed,
                                    event_log=rec.event_log)
    via_log = fluct.dynkin_martingale(stripped, f, p, 0.4)
    assert np.abs(via_integrals.m_values - via_log.m_values).max() < 1e-10


def test_dynkin_martingale_requires_exact_integrals():
    p = Parameters.equilibrium(6, 0.0, 0.5)
    init = Configuration.from_sites([1, 0, 1, 0, 1])
    rec = kmc.run_trajectory(p, init, T=0.1, grid=[0.0, 0.1], rng=0)
    bare = kmc.TrajectoryRecord(params=rec.params, grid=rec.grid,
                                snapshots=rec.snapshots, observables={},
                                event_count=rec.event_count, seed=rec.seed)
    f, _ = first_eigen_test_function(0.0)
    with pytest.raises(ValueError, match="time-integral"):
        fluct.dynkin_martingale(bare, f, p, 0.5)


def test_theta_zero_pathwise_closure():
    # M_t = Y_t - Y_0 - int Y_s(Delta_n f) ds exactly, pathwise
    p = Parameters.equilibrium(10, 0.0, 0.5)
    f = polynomial_dirichlet(0)
    res = kmc.run_ensemble(p, T=0.2, grid=[0.0, 0.07, 0.2], replicas=32,
                           master_seed=3, init=kmc.InitSpec.bernoulli(0.5))
    ms = fluct.martingale_ensemble(res, f, 0.5)
    lap, _, _ = discrete_operators(f, p.n)
    w = lap / math.sqrt(p.n)
    closure = (res.site_integrals - 0.5 * res.grid[None, :, None]) @ w
    m_closure = ms.y_values - ms.y_values[:, :1] - (closure - closure[:, :1])
    assert np.abs(ms.m_values - m_closure).max() < 1e-10


def test_predicted_qv_zero_function():
    p = Parameters.equilibrium(50, 1.0, 0.5)
    assert fluct.predicted_qv(lambda u: 0.0 * u, p, 1.0, 0.5) == 0.0


def test_predicted_qv_dirichlet_sine_limit():
    # theta=0, f = sqrt(2) sin(pi u): QV -> 2 chi t pi^2, boundary term O(1/n)
    f, _ = first_eigen_test_function(0.0)
    vals = []
    for n in (100, 400, 1600):
        p = Parameters.equilibrium(n, 0.0, 0.3)
        vals.append(fluct.predicted_qv(f, p, 1.0, 0.3))
    limit = 2 * 0.3 * 0.7 * math.pi ** 2
    errs = [abs(v - limit) for v in vals]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < limit * 2e-3


def test_predicted_qv_robin_keeps_boundary_mass():
    # theta=1: the boundary terms converge to 2 chi (f(0)^2 + f(1)^2)
    f, _ = first_eigen_test_function(1.0)
    chi = 0.25
    f0, f1 = float(f(0.0)), float(f(1.0))
    p = Parameters.equilibrium(4000, 1.0, 0.5)
    fun = f.f
    n = p.n
    boundary = n ** (1 - 1.0) * (fun(1.0 / n) ** 2 + fun((n - 1.0) / n) ** 2)
    assert boundary == pytest.approx(f0 ** 2 + f1 ** 2, rel=1e-2)
    grad_sq = np.trapezoid(f.df(np.linspace(0, 1, 20001)) ** 2,
                           np.linspace(0, 1, 20001))
    expect = 2 * chi * (grad_sq + f0 ** 2 + f1 ** 2)
    assert fluct.predicted_qv(f, p, 1.0, 0.5) == pytest.approx(expect, rel=1e-2)


def test_predicted_qv_matches_enumeration_all_regimes():
    for theta in (0.0, 0.5, 1.0, 2.0):
        for n in (4, 6, 8):
            p = Parameters.equilibrium(n, theta, 0.5)
            f, _ = first_eigen_test_function(theta)
            occ = exact.state_occupations(p.n_sites).astype(float)
            fv = fluct._f_values(f, p)
            F = (occ - 0.5) @ fv / math.sqrt(p.n)
            enum_rate = exact.expected_carre_du_champ(p, 0.5, F)
            formula = fluct.predicted_qv(f, p, 1.0, 0.5)
            assert abs(enum_rate - formula) < 1e-10 * (1 + abs(formula))


def test_covariance_estimator_matches_initial_variance():
    p = Parameters.equilibrium(100, 0.5, 0.5)
    f, _ = first_eigen_test_function(0.5)
    res = kmc.run_ensemble(p, T=0.01, grid=[0.0, 0.01], replicas=4000,
                           master_seed=15, init=kmc.InitSpec.bernoulli(0.5))
    series = fluct.fluctuation_series(res, f, 0.5)
    cov, se = fluct.covariance_estimator(series, 0.0, 0.0)
    fv = fluct._f_values(f, p)
    expect = 0.25 * np.sum(fv ** 2) / p.n
    assert abs(cov - expect) < 4 * se
    # one-point law is time-invariant under the stationary start
    var_t, se_t = fluct.covariance_estimator(series, 0.01, 0.01)
    assert abs(var_t - cov) < 4 * math.hypot(se, se_t)


def test_covariance_estimator_needs_replicas():
    p = Parameters.equilibrium(6, 0.0, 0.5)
    series = fluct.FluctuationSeries(f=None, times=np.zeros(1),
                                     values=np.zeros((1, 1)), params=p, rho=0.5)
    with pytest.raises(ValueError, match="replicas"):
        fluct.covariance_estimator(series, 0.0, 0.0)


def test_jackknife_error_is_calibrated():
    rng = np.random.default_rng(8)
    zs = []
    for _ in range(200):
        a = rng.standard_normal(400)
        b = 0.5 * a + rng.standard_normal(400)
        cov, se = fluct.cov_jackknife(a, b)
        zs.append((cov - 0.5) / se)
    # z-scores should be roughly standard normal
    assert abs(np.mean(zs)) < 0.3
    assert 0.7 < np.std(zs) < 1.4


def test_initial_gaussianity_report():
    p = Parameters.equilibrium(100, 0.0, 0.5)
    f, _ = first_eigen_test_function(0.0)
    series = fluct.sample_initial_fields(p, 0.5, f, 20000, master_seed=21)
    rep = fluct.initial_gaussianity(series)
    assert abs(rep.variance - rep.theory_variance) < 4 * rep.variance_stderr
    assert abs(rep.skewness) < 0.1
    assert abs(rep.mean) < 4 * rep.mean_stderr
    y = series.values[:, 0]
    for lam, emp_re, emp_im, theory, se, z in rep.cf_checks:
        assert z < 4.0
        se_im = np.sin(lam * y).std(ddof=1) / math.sqrt(y.size)
        assert abs(emp_im) < 4 * se_im


def test_initial_gaussianity_replica_floor():
    p = Parameters.equilibrium(20, 0.0, 0.5)
    f, _ = first_eigen_test_function(0.0)
    series = fluct.sample_initial_fields(p, 0.5, f, 100, master_seed=0)
    with pytest.raises(ValueError, match="replicas"):
        fluct.initial_gaussianity(series)


def test_replacement_moment_zero_time():
    p = Parameters.equilibrium(16, 0.5, 0.5)
    res = kmc.run_ensemble(p, T=0.1, grid=[0.0, 0.1], replicas=8,
                           master_seed=1, init=kmc.InitSpec.bernoulli(0.5))
    est, se = fluct.replacement_moment(res, 1, math.sqrt(16), 0.0)
    assert est == 0.0


def test_replacement_moment_interior_site_rejected():
    p = Parameters.equilibrium(16, 0.5, 0.5)
    res = kmc.run_ensemble(p, T=0.1, grid=[0.1], replicas=8,
                           master_seed=1, init=kmc.InitSpec.bernoulli(0.5))
    with pytest.raises(ValueError, match="boundary site"):
        fluct.replacement_moment(res, 5, 1.0, 0.1)


def test_replacement_moment_against_duality_oracle():
    # exact second moment from the two-point closed system
    theta, n, t = 0.5, 24, 0.3
    p = Parameters.equilibrium(n, theta, 0.5)
    res = kmc.run_ensemble(p, T=t, grid=[t], replicas=12000,
                           master_seed=47, init=kmc.InitSpec.bernoulli(0.5))
    c_n = math.sqrt(n)
    est, se = fluct.replacement_moment(res, 1, c_n, t)
    B, _ = exact.mean_evolution_system(p)
    w, V = np.linalg.eigh(B)
    a = V[0, :] * V[0, :]
    integral = np.sum(a * (np.exp(w * t) - 1 - w * t) / (w * w))
    expect = 2 * c_n ** 2 * 0.25 * integral
    assert abs(est - expect) < 4 * se
