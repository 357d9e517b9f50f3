"""Macroscopic side of the model: the heat equation in the three boundary
regimes, the matching Sturm-Liouville eigenbases, the associated semigroup,
hydrostatic profiles, lattice difference operators and the test-function
library used by the fluctuation estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lattice import Regime, classify_regime


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """A smooth function on [0, 1] with first and second derivatives.

    ``regime`` tags which boundary conditions the function is meant to
    satisfy; ``boundary_residuals`` measures them at order zero.
    """

    regime: Regime
    f: callable
    df: callable
    d2f: callable
    description: str = ""

    def __call__(self, u):
        return self.f(u)

    def boundary_residuals(self) -> tuple:
        f0, f1 = float(self.f(0.0)), float(self.f(1.0))
        d0, d1 = float(self.df(0.0)), float(self.df(1.0))
        if self.regime is Regime.DIRICHLET:
            return abs(f0), abs(f1)
        if self.regime is Regime.ROBIN:
            return abs(d0 - f0), abs(d1 + f1)
        return abs(d0), abs(d1)

    def satisfies_boundary(self, tol: float = 1e-10) -> bool:
        r0, r1 = self.boundary_residuals()
        return r0 < tol and r1 < tol


def polynomial_dirichlet(kind: int = 0) -> TestFunction:
    """Polynomials vanishing at both endpoints (Dirichlet members at order 0)."""
    if kind == 0:
        return TestFunction(Regime.DIRICHLET,
                            lambda u: u * (1.0 - u),
                            lambda u: 1.0 - 2.0 * np.asarray(u, dtype=float),
                            lambda u: -2.0 * np.ones_like(np.asarray(u, dtype=float)),
                            description="u(1-u)")
    if kind == 1:
        return TestFunction(Regime.DIRICHLET,
                            lambda u: u * (1.0 - u) * (1.0 - 2.0 * u),
                            lambda u: 1.0 - 6.0 * np.asarray(u, float) + 6.0 * np.asarray(u, float) ** 2,
                            lambda u: -6.0 + 12.0 * np.asarray(u, float),
                            description="u(1-u)(1-2u)")
    raise ValueError(f"unknown polynomial kind {kind}")


# ---------------------------------------------------------------------------
# Eigenbases
# ---------------------------------------------------------------------------

def robin_eigenvalue_equation(mu: float) -> float:
    """Transcendental condition 2 mu cos(mu) = (mu^2 - 1) sin(mu) as a residual."""
    return 2.0 * mu * math.cos(mu) - (mu * mu - 1.0) * math.sin(mu)


def _robin_root(j: int, tol: float = 1e-13) -> float:
    """j-th Robin root (j >= 0), mu_j in (j pi, (j+1) pi).

    Solves mu + 2 arctan(mu) = (j+1) pi by bisection; the left side is
    strictly increasing so the bracket contains exactly one root.
    """
    target = (j + 1) * math.pi
    lo, hi = j * math.pi, (j + 1) * math.pi
    h = lambda mu: mu + 2.0 * math.atan(mu) - target
    flo, fhi = h(lo), h(hi)
    if not (flo < 0.0 < fhi):
        raise ArithmeticError(
            f"Robin root bracketing failed for mode {j} on ({lo:.6f}, {hi:.6f})")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol:
            break
        if h(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _robin_norm(mu: float) -> float:
    """L2 norm of sin(mu u) + mu cos(mu u) on [0, 1], in closed form."""
    s2 = math.sin(2.0 * mu)
    integral = (1.0 + mu * mu) / 2.0 + (mu * mu - 1.0) * s2 / (4.0 * mu) + math.sin(mu) ** 2
    return math.sqrt(integral)


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenpairs (lambda_k, Psi_k) of the Laplacian in one boundary regime.

    Modes are stored in ascending eigenvalue order. Dirichlet has no zero
    mode; Neumann includes the constant mode at position 0; Robin modes are
    indexed from the smallest positive root of the transcendental condition.
    """

    regime: Regime
    eigenvalues: np.ndarray
    normalizers: np.ndarray
    mus: np.ndarray  # frequency of each mode (sqrt(lambda); 0 for constants)

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    def psi(self, k: int, u):
        u = np.asarray(u, dtype=float)
        mu = self.mus[k]
        A = self.normalizers[k]
        if self.regime is Regime.DIRICHLET:
            return A * np.sin(mu * u)
        if self.regime is Regime.NEUMANN:
            return A * np.cos(mu * u) if mu > 0 else A * np.ones_like(u)
        return A * (np.sin(mu * u) + mu * np.cos(mu * u))

    def dpsi(self, k: int, u):
        u = np.asarray(u, dtype=float)
        mu = self.mus[k]
        A = self.normalizers[k]
        if self.regime is Regime.DIRICHLET:
            return A * mu * np.cos(mu * u)
        if self.regime is Regime.NEUMANN:
            return -A * mu * np.sin(mu * u) if mu > 0 else np.zeros_like(u)
        return A * mu * (np.cos(mu * u) - mu * np.sin(mu * u))

    def d2psi(self, k: int, u):
        return -self.eigenvalues[k] * self.psi(k, u)

    def member(self, k: int) -> TestFunction:
        """Mode k wrapped as a TestFunction (eigenfunctions lie in S_theta)."""
        return TestFunction(self.regime,
                            lambda u: self.psi(k, u),
                            lambda u: self.dpsi(k, u),
                            lambda u: self.d2psi(k, u),
                            description=f"{self.regime.value} eigenfunction {k}"
                                        f" (lambda={self.eigenvalues[k]:.6g})")

    @property
    def first_excited(self) -> int:
        """Index of the first non-constant mode."""
        return int(np.argmax(self.eigenvalues > 0.0))


def eigenbasis(regime: Regime | float, K: int) -> SpectralBasis:
    """Build the orthonormal eigenbasis of the regime, K non-constant modes.

    Dirichlet: lambda_k = k^2 pi^2, Psi_k = sqrt(2) sin(k pi u), k = 1..K.
    Neumann: the constant mode plus sqrt(2) cos(k pi u), k = 1..K.
    Robin: successive roots of tan(mu) = 2 mu / (mu^2 - 1), with the
    normalizer fixing unit L2 norm.
    """
    if not isinstance(regime, Regime):
        regime = classify_regime(float(regime))
    if K < 1:
        raise ValueError("K must be >= 1")
    if regime is Regime.DIRICHLET:
        ks = np.arange(1, K + 1, dtype=float)
        return SpectralBasis(regime, (ks * math.pi) ** 2,
                             np.full(K, math.sqrt(2.0)), ks * math.pi)
    if regime is Regime.NEUMANN:
        ks = np.arange(0, K + 1, dtype=float)
        norm = np.full(K + 1, math.sqrt(2.0))
        norm[0] = 1.0
        return SpectralBasis(regime, (ks * math.pi) ** 2, norm, ks * math.pi)
    mus = np.array([_robin_root(j) for j in range(K)])
    norms = np.array([1.0 / _robin_norm(mu) for mu in mus])
    return SpectralBasis(regime, mus ** 2, norms, mus)


def robin_fd_eigenvalues(M: int, K: int) -> np.ndarray:
    """First K eigenvalues of the finite-difference Robin Laplacian on M+1
    points (homogeneous boundary data), the independent oracle for the
    transcendental roots."""
    h = 1.0 / M
    d = np.full(M + 1, 2.0 / h**2)
    d[0] = d[M] = (2.0 + 2.0 * h) / h**2
    e = np.full(M, 1.0 / h**2)
    # trapezoid-weight similarity transform makes the matrix symmetric
    e[0] = e[M - 1] = math.sqrt(2.0) / h**2
    vals = sla.eigh_tridiagonal(d, -e, select="i", select_range=(0, K - 1))[0]
    return vals


# ---------------------------------------------------------------------------
# Heat equation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityField:
    """Space-time density values from the heat-equation solver."""

    regime: Regime
    grid: np.ndarray    # M+1 spatial points on [0, 1]
    times: np.ndarray
    values: np.ndarray  # (times, space)
    alpha: float
    beta: float

    def time_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not on the solver time grid")
        return idx

    def at(self, t: float) -> np.ndarray:
        return self.values[self.time_index(t)]

    def sample(self, u, t: float) -> np.ndarray:
        """Linear interpolation of the field at time t onto points u."""
        return np.interp(np.asarray(u, dtype=float), self.grid, self.at(t))


def solve_heat(regime: Regime | float, rho0, alpha: float, beta: float,
               M: int = 400, dt: float = 1e-3, T: float = 1.0) -> DensityField:
    """Crank-Nicolson solution of d_t rho = d_uu rho with regime boundaries.

    Dirichlet pins rho(t,0)=alpha, rho(t,1)=beta; Robin and Neumann use
    second-order ghost-node rows. The first two steps are backward Euler
    halves (Rannacher smoothing) so rough initial data cannot excite the
    undamped Crank-Nicolson mode.
    """
    if not isinstance(regime, Regime):
        regime = classify_regime(float(regime))
    if M < 4 or dt <= 0 or T <= 0:
        raise ValueError("invalid grid parameters: need M >= 4, dt > 0, T > 0")
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    grid = np.linspace(0.0, 1.0, M + 1)
    h = 1.0 / M
    u = np.asarray(rho0(grid) if callable(rho0) else rho0, dtype=float).copy()
    if u.shape != grid.shape:
        raise ValueError(f"rho0 must give {M + 1} values")
    if u.min() < 0.0 or u.max() > 1.0:
        raise ValueError("rho0 must map into [0, 1]")

    if regime is Regime.DIRICHLET:
        # interior unknowns only; boundary values enter as constants
        main = np.full(M - 1, -2.0) / h**2
        off = np.full(M - 2, 1.0) / h**2
        src = np.zeros(M - 1)
        src[0] = alpha / h**2
        src[-1] = beta / h**2
        interior = slice(1, M)
    else:
        main = np.full(M + 1, -2.0) / h**2
        off = np.full(M, 1.0) / h**2
        off_lower = off.copy()
        src = np.zeros(M + 1)
        # ghost elimination: rho' (0) = rho(0) - alpha (Robin), = 0 (Neumann)
        off[0] = 2.0 / h**2        # upper diagonal, row 0
        off_lower[-1] = 2.0 / h**2  # lower diagonal, row M
        if regime is Regime.ROBIN:
            main[0] = main[-1] = -(2.0 + 2.0 * h) / h**2
            src[0] = 2.0 * alpha / h
            src[-1] = 2.0 * beta / h
        interior = slice(0, M + 1)

    size = main.size

    def banded(scale):
        ab = np.zeros((3, size))
        ab[1] = 1.0 - scale * main
        if regime is Regime.DIRICHLET:
            ab[0, 1:] = -scale * off
            ab[2, :-1] = -scale * off
        else:
            ab[0, 1:] = -scale * off
            ab[2, :-1] = -scale * off_lower
        return ab

    def explicit(vec, scale):
        out = (1.0 + scale * main) * vec
        if regime is Regime.DIRICHLET:
            out[1:] += scale * off * vec[:-1]
            out[:-1] += scale * off * vec[1:]
        else:
            out[:-1] += scale * off * vec[1:]
            out[1:] += scale * off_lower * vec[:-1]
        return out

    # backward Euler at step dt/2 and Crank-Nicolson at step dt share the
    # same implicit matrix I - (dt/2) A
    ab = banded(dt / 2.0)

    values = np.empty((nsteps + 1, M + 1))
    values[0] = u
    vec = u[interior].copy()
    step_times = dt * np.arange(nsteps + 1)
    rannacher = 2  # first two dt-steps as four BE halves
    for k in range(1, nsteps + 1):
        if k <= rannacher:
            for _ in range(2):
                vec = sla.solve_banded((1, 1), ab, vec + (dt / 2.0) * src)
        else:
            rhs = explicit(vec, dt / 2.0) + dt * src
            vec = sla.solve_banded((1, 1), ab, rhs)
        row = values[k]
        row[interior] = vec
        if regime is Regime.DIRICHLET:
            row[0] = alpha
            row[M] = beta
    return DensityField(regime=regime, grid=grid, times=step_times,
                        values=values, alpha=alpha, beta=beta)


def hydrostatic_profile(theta: float, alpha: float, beta: float):
    """The limiting stationary profile on [0, 1] for the given slowness."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    regime = classify_regime(theta)

    def profile(u):
        u = np.asarray(u, dtype=float)
        if regime is Regime.DIRICHLET:
            return (beta - alpha) * u + alpha
        if regime is Regime.ROBIN:
            return (beta - alpha) / 3.0 * u + alpha + (beta - alpha) / 3.0
        return np.full_like(u, (alpha + beta) / 2.0)

    return profile


# ---------------------------------------------------------------------------
# Semigroup
# ---------------------------------------------------------------------------

def _coefficients(basis: SpectralBasis, f, quad_tol: float = 1e-10):
    """Fourier coefficients of f by composite trapezoid, refined until stable."""
    if callable(f):
        nodes = 513
        prev = None
        while True:
            uu = np.linspace(0.0, 1.0, nodes)
            fv = np.asarray(f(uu), dtype=float)
            coeff = np.array([np.trapezoid(fv * basis.psi(k, uu), uu)
                              for k in range(basis.size)])
            if prev is not None and np.max(np.abs(coeff - prev)) < quad_tol:
                return coeff, uu, fv
            if nodes > 1 << 16:
                return coeff, uu, fv
            prev = coeff
            nodes = 2 * nodes - 1
    fv = np.asarray(f, dtype=float)
    uu = np.linspace(0.0, 1.0, fv.size)
    coeff = np.array([np.trapezoid(fv * basis.psi(k, uu), uu)
                      for k in range(basis.size)])
    return coeff, uu, fv


def semigroup_apply(basis: SpectralBasis, f, t: float, out_grid=None,
                    return_info: bool = False):
    """Apply the heat semigroup of the regime to f at time t >= 0.

    f is a TestFunction/callable or a profile sampled on a uniform grid.
    Returns the truncated eigen-series on ``out_grid`` (default: the
    quadrature grid); with ``return_info`` also reports the L2 projection
    error and the truncation tail bound.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    coeff, uu, fv = _coefficients(basis, f)
    grid = uu if out_grid is None else np.asarray(out_grid, dtype=float)
    decay = np.exp(-basis.eigenvalues * t)
    out = np.zeros_like(grid)
    for k in range(basis.size):
        if abs(coeff[k] * decay[k]) == 0.0:
            continue
        out += coeff[k] * decay[k] * basis.psi(k, grid)
    if not return_info:
        return out
    proj = np.zeros_like(uu)
    for k in range(basis.size):
        proj += coeff[k] * basis.psi(k, uu)
    l2_err = math.sqrt(max(0.0, np.trapezoid((fv - proj) ** 2, uu)))
    fnorm = math.sqrt(np.trapezoid(fv ** 2, uu))
    tail = math.exp(-basis.eigenvalues[-1] * t) * fnorm if t > 0 else fnorm
    info = {"projection_error": l2_err, "modes": basis.size, "tail_bound": tail}
    return out, info


# ---------------------------------------------------------------------------
# Lattice difference operators
# ---------------------------------------------------------------------------

def discrete_operators(f, n: int):
    """Sampled lattice operators of a smooth f.

    Returns (lap, grad_plus, grad_minus):
      lap[x-1]        = n^2 [f((x+1)/n) + f((x-1)/n) - 2 f(x/n)], x = 1..n-1
      grad_plus[x]    = n [f((x+1)/n) - f(x/n)],                  x = 0..n-1
      grad_minus[x-1] = n [f(x/n) - f((x-1)/n)],                  x = 1..n
    """
    fun = f.f if isinstance(f, TestFunction) else f
    pts = np.arange(0, n + 1) / n
    fv = np.asarray(fun(pts), dtype=float)
    lap = n * n * (fv[2:] + fv[:-2] - 2.0 * fv[1:-1])
    grad = n * (fv[1:] - fv[:-1])
    return lap, grad, grad.copy()


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def field_to_csv(field: DensityField, path, every: int = 1) -> None:
    """Write (t, u, value) rows, thinning time steps by ``every``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,u,value\n")
        for i in range(0, field.times.size, every):
            t = field.times[i]
            for j, u in enumerate(field.grid):
                fh.write(f"{float(t)!r},{float(u)!r},{float(field.values[i, j])!r}\n")


def basis_to_csv(basis: SpectralBasis, path) -> None:
    """Write (k, lambda, normalizer) rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,lambda,normalizer\n")
        for k in range(basis.size):
            fh.write(f"{k},{float(basis.eigenvalues[k])!r},{float(basis.normalizers[k])!r}\n")
