"""Exact small-system oracle: the full generator on the 2**(n-1) state space.

Configurations are encoded as bitmasks (bit x-1 holds the occupation of
site x), which keeps every operation a vectorized sweep over state indices.
The oracle is deliberately capped at n <= 14 (state dimension 8192); it is
the ground truth that every Monte Carlo estimate is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import Parameters

MAX_EXACT_N = 14


@dataclass(frozen=True)
class GeneratorMatrix:
    """Accelerated generator n**2 * L on the enumerated state space.

    ``matrix[i, j]`` is the jump rate from state i to state j; the diagonal
    holds the negative row sums. ``accelerated`` records whether the n**2
    diffusive factor is included.
    """

    params: Parameters
    matrix: sp.csr_matrix
    accelerated: bool = True

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _check_small(p: Parameters):
    if p.n > MAX_EXACT_N:
        raise ValueError(
            f"n={p.n} too large for exact enumeration (cap is n <= {MAX_EXACT_N})")


def state_occupations(m: int) -> np.ndarray:
    """(2**m, m) matrix of occupation bits for every encoded configuration."""
    idx = np.arange(1 << m, dtype=np.int64)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(np.uint8)


def bond_transitions(p: Parameters, accelerated: bool = True):
    """Per-bond transition data on the enumerated state space.

    Yields (bond, image_index, rate) arrays over the states where the bond
    produces an actual state change (no-op swaps between equal occupations
    are excluded, so they never enter the generator).
    """
    m = p.n_sites
    dim = 1 << m
    idx = np.arange(dim, dtype=np.int64)
    speed = float(p.n) ** 2 if accelerated else 1.0
    damp = p.boundary_factor

    # left reservoir flip of site 1 (bit 0)
    b1 = (idx & 1).astype(np.float64)
    rate = speed * damp * (p.alpha * (1.0 - b1) + (1.0 - p.alpha) * b1)
    yield 0, idx ^ 1, rate

    for x in range(1, p.n - 1):  # bulk bond {x, x+1} -> bits x-1, x
        lo = (idx >> (x - 1)) & 1
        hi = (idx >> x) & 1
        active = lo != hi
        mask = np.int64((1 << (x - 1)) | (1 << x))
        yield x, np.where(active, idx ^ mask, idx), np.where(active, speed, 0.0)

    bm = ((idx >> (m - 1)) & 1).astype(np.float64)
    rate = speed * damp * (p.beta * (1.0 - bm) + (1.0 - p.beta) * bm)
    yield p.n - 1, idx ^ (1 << (m - 1)), rate


def build_generator(p: Parameters, accelerated: bool = True) -> GeneratorMatrix:
    """Assemble the (sparse) generator matrix, skipping identity transitions."""
    _check_small(p)
    dim = 1 << p.n_sites
    idx = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    diag = np.zeros(dim)
    for _, image, rate in bond_transitions(p, accelerated):
        keep = rate > 0.0
        rows.append(idx[keep])
        cols.append(image[keep])
        vals.append(rate[keep])
        diag -= np.where(keep, rate, 0.0)
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    Q = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    return GeneratorMatrix(params=p, matrix=Q, accelerated=accelerated)


def bernoulli_measure(p: Parameters, rho: float) -> np.ndarray:
    """Product Bernoulli(rho) measure as a vector over encoded states."""
    m = p.n_sites
    counts = np.array([bin(i).count("1") for i in range(1 << m)])
    return rho ** counts * (1.0 - rho) ** (m - counts)


def stationary_distribution(Q: GeneratorMatrix, residual_tol: float = 1e-10) -> np.ndarray:
    """Unique probability vector pi with pi Q = 0.

    Solved by replacing one column equation of Q^T x = 0 with the
    normalization sum(x) = 1; dense LU below dimension 1024, sparse LU above.
    """
    dim = Q.dimension
    A = Q.matrix.T.tolil(copy=True)
    A[-1, :] = 1.0
    b = np.zeros(dim)
    b[-1] = 1.0
    if dim <= 1024:
        pi = np.linalg.solve(A.toarray(), b)
    else:
        pi = spla.spsolve(A.tocsc(), b)
    resid = np.abs(pi @ Q.matrix).max()
    if resid >= residual_tol:
        raise ArithmeticError(f"stationary solve residual {resid:.3e} exceeds {residual_tol:.1e}")
    return pi


def closed_form_profile(p: Parameters) -> np.ndarray:
    """Stationary mean occupation a_n * x + b_n over sites x = 1..n-1."""
    nt = float(p.n) ** p.theta
    a_n = (p.beta - p.alpha) / (2.0 * nt + p.n - 2.0)
    b_n = p.alpha + a_n * (nt - 1.0)
    x = np.arange(1, p.n)
    return a_n * x + b_n


def exact_mean_profile(Q: GeneratorMatrix, p: Parameters, pi: np.ndarray | None = None) -> np.ndarray:
    """Stationary site marginals sum_eta pi(eta) eta(x), from the exact solve."""
    if pi is None:
        pi = stationary_distribution(Q)
    occ = state_occupations(p.n_sites)
    return pi @ occ


def exact_evolution(Q: GeneratorMatrix, mu0: np.ndarray, t: float,
                    tol: float = 1e-12) -> np.ndarray:
    """Distribution mu0 * exp(t Q) by uniformization.

    The Poisson-weighted power series keeps every intermediate a genuine
    distribution. Long horizons are split into chunks with Lambda*dt <= 200
    so the Poisson weights never underflow.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    mu = np.asarray(mu0, dtype=np.float64).copy()
    if t == 0.0:
        return mu
    lam = float(np.abs(Q.matrix.diagonal()).max())
    if lam == 0.0:
        return mu
    P = sp.eye(Q.dimension, format="csr") + Q.matrix / lam
    remaining = t
    while remaining > 0.0:
        dt = min(remaining, 200.0 / lam)
        remaining -= dt
        a = lam * dt
        w = np.exp(-a)
        acc = w * mu
        vec = mu
        k = 0
        cum = w
        while 1.0 - cum > tol:
            k += 1
            vec = vec @ P
            w *= a / k
            cum += w
            acc += w * vec
            if k > 10_000_000:  # pragma: no cover - safety valve
                raise ArithmeticError("uniformization failed to converge")
        mu = acc / cum
    return mu


def dirichlet_form(f: np.ndarray, mu: np.ndarray, p: Parameters) -> float:
    """D_n(f, mu) = sum over bonds of int r(eta) (f(sigma eta) - f(eta))^2 dmu.

    Uses the un-accelerated rates; f and mu are vectors over encoded states.
    """
    _check_small(p)
    f = np.asarray(f, dtype=np.float64)
    total = 0.0
    for _, image, rate in bond_transitions(p, accelerated=False):
        total += float(np.sum(mu * rate * (f[image] - f) ** 2))
    return total


def generator_quadratic_form(Q: GeneratorMatrix, f: np.ndarray, mu: np.ndarray) -> float:
    """Inner product <-L f, f>_mu for the given generator matrix."""
    f = np.asarray(f, dtype=np.float64)
    return float(-np.sum(mu * (Q.matrix @ f) * f))


def detailed_balance_check(p: Parameters) -> float:
    """Max residual of r(eta) nu(eta) = r(sigma eta) nu(sigma eta) over all
    states and bonds, for the equilibrium case alpha = beta = rho."""
    if p.alpha != p.beta:
        raise ValueError("detailed balance is only claimed for alpha == beta")
    _check_small(p)
    nu = bernoulli_measure(p, p.alpha)
    worst = 0.0
    for _, image, rate in bond_transitions(p, accelerated=False):
        changed = image != np.arange(image.size)
        # the reverse of eta -> sigma eta uses the same bond, evaluated at sigma eta
        resid = np.abs(rate * nu - rate[image] * nu[image])
        worst = max(worst, float(resid[changed].max(initial=0.0)))
    return worst


def expected_carre_du_champ(p: Parameters, rho: float, F: np.ndarray) -> float:
    """E_nu[ n^2 sum_b r_b(eta) (F(eta^b) - F(eta))^2 ] by full enumeration.

    This is the exact instantaneous quadratic-variation rate of the Dynkin
    martingale of any observable F, evaluated under Bernoulli(rho).
    """
    _check_small(p)
    nu = bernoulli_measure(p, rho)
    F = np.asarray(F, dtype=np.float64)
    total = 0.0
    for _, image, rate in bond_transitions(p, accelerated=True):
        total += float(np.sum(nu * rate * (F[image] - F) ** 2))
    return total


def mean_evolution_system(p: Parameters):
    """Closed first-moment system d/dt m = B m + s (accelerated time).

    Site means of the exclusion process obey an autonomous linear ODE: the
    discrete Laplacian sped up by n**2 in the bulk and reservoir coupling
    n**(2-theta) at the two ends. Valid for any n, so it serves as the
    exact marginal oracle where full state enumeration is out of reach.
    """
    m = p.n_sites
    speed = float(p.n) ** 2
    coupling = float(p.n) ** (2.0 - p.theta)
    B = np.zeros((m, m))
    for i in range(m):
        if i > 0:
            B[i, i - 1] = speed
            B[i, i] -= speed
        if i < m - 1:
            B[i, i + 1] = speed
            B[i, i] -= speed
    B[0, 0] -= coupling
    B[-1, -1] -= coupling
    s = np.zeros(m)
    s[0] = coupling * p.alpha
    s[-1] = coupling * p.beta
    return B, s


def evolve_mean_profile(p: Parameters, m0, t) -> np.ndarray:
    """Exact site means at macroscopic time(s) t from initial means m0.

    Returns an array of shape (len(t), n-1) for a sequence of times, or
    (n-1,) for a scalar t.
    """
    B, s = mean_evolution_system(p)
    m0 = np.asarray(m0, dtype=np.float64)
    stationary = np.linalg.solve(B, -s)
    w, V = np.linalg.eigh(B)  # B is symmetric
    coeffs = V.T @ (m0 - stationary)
    times = np.atleast_1d(np.asarray(t, dtype=np.float64))
    modal = (V * coeffs[None, :]) @ np.exp(np.outer(w, times))  # (sites, times)
    out = stationary[:, None] + modal
    return out.T[0] if np.ndim(t) == 0 else out.T


def dump_sparse_triplets(Q: GeneratorMatrix, path) -> None:
    """Write the generator as one ``row col value`` line per stored entry."""
    coo = Q.matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


def dump_distribution(pi: np.ndarray, path) -> None:
    """Write a distribution as one ``index value`` line per state."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, v in enumerate(pi):
            fh.write(f"{i} {float(v)!r}\n")
