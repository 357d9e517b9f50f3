"""Core lattice objects: parameters, occupation configurations, jump rates
and the elementary bond events of the open exclusion dynamics.

Sites live on {1, ..., n-1}. Bond x for 1 <= x <= n-2 swaps the occupations
of sites x and x+1 at rate 1; bonds 0 and n-1 are the reservoir bonds and
flip the occupation of site 1 (resp. n-1) at a rate damped by n**-theta.
All rates returned here are un-accelerated; the diffusive n**2 speed-up is
applied by the simulator and the exact generator builder.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Regime(enum.Enum):
    """Boundary regime of the macroscopic limit, a pure function of theta."""

    DIRICHLET = "dirichlet"  # theta < 1
    ROBIN = "robin"          # theta == 1
    NEUMANN = "neumann"      # theta > 1


def classify_regime(theta: float) -> Regime:
    if theta < 1.0:
        return Regime.DIRICHLET
    if theta == 1.0:
        return Regime.ROBIN
    return Regime.NEUMANN


@dataclass(frozen=True)
class Parameters:
    """Validated model parameters.

    n      lattice scale; the bulk is {1, ..., n-1}, so there are n-1 sites
    theta  slowness exponent of the reservoir bonds (>= 0)
    alpha  left reservoir density, in (0, 1)
    beta   right reservoir density, in (0, 1)
    rho    equilibrium density, in (0, 1); meaningful when alpha == beta == rho
    """

    n: int
    theta: float
    alpha: float
    beta: float
    rho: float = 0.5

    def __post_init__(self):
        problems = []
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 2):
            problems.append(f"n must be an integer >= 2, got {self.n!r}")
        if not self.theta >= 0.0:
            problems.append(f"theta must be >= 0, got {self.theta!r}")
        for name in ("alpha", "beta", "rho"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                problems.append(f"{name} must lie strictly inside (0, 1), got {v!r}")
        if problems:
            raise ValueError("invalid parameters: " + "; ".join(problems))

    @property
    def n_sites(self) -> int:
        return self.n - 1

    @property
    def n_bonds(self) -> int:
        return self.n

    @property
    def regime(self) -> Regime:
        return classify_regime(self.theta)

    @property
    def boundary_factor(self) -> float:
        """The damping n**-theta shared by both reservoir bonds."""
        return float(self.n) ** (-self.theta)

    @classmethod
    def equilibrium(cls, n: int, theta: float, rho: float) -> "Parameters":
        """Parameters with alpha = beta = rho (Bernoulli(rho) is stationary)."""
        return cls(n=n, theta=theta, alpha=rho, beta=rho, rho=rho)


def new_parameters(n: int, theta: float, alpha: float, beta: float,
                   rho: float = 0.5) -> Parameters:
    """Validate and build a Parameters value (raises ValueError on bad input)."""
    return Parameters(n=n, theta=theta, alpha=alpha, beta=beta, rho=rho)


@dataclass(frozen=True)
class Configuration:
    """An occupation configuration eta over sites {1, ..., n-1}.

    ``occupations[i]`` is the occupation of site i+1 and is 0 or 1. The
    underlying array is write-protected; all operations return fresh values.
    """

    occupations: np.ndarray

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupations, dtype=np.uint8)
        if occ.ndim != 1:
            raise ValueError("occupations must be one-dimensional")
        if occ.size and occ.max() > 1:
            raise ValueError("occupations must be 0/1 valued")
        occ.setflags(write=False)
        object.__setattr__(self, "occupations", occ)

    def __len__(self) -> int:
        return self.occupations.size

    def site(self, x: int) -> int:
        """Occupation eta(x) for a site label x in {1, ..., n-1}."""
        if not 1 <= x <= len(self):
            raise IndexError(f"site {x} outside 1..{len(self)}")
        return int(self.occupations[x - 1])

    def particle_count(self) -> int:
        return int(self.occupations.sum())

    @classmethod
    def from_sites(cls, values) -> "Configuration":
        return cls(np.asarray(values, dtype=np.uint8))


@dataclass(frozen=True)
class BondEvent:
    """A bond index in {0, ..., n-1}; 0 and n-1 denote the reservoir flips."""

    bond: int

    def is_boundary(self, p: Parameters) -> bool:
        return self.bond == 0 or self.bond == p.n - 1


def jump_rates(p: Parameters, eta: Configuration) -> np.ndarray:
    """Un-accelerated jump rates indexed by bond 0..n-1 for the state eta.

    Bond 0 carries alpha/n**theta * (1 - eta(1)) + (1-alpha)/n**theta * eta(1),
    bond n-1 the mirrored expression with beta and eta(n-1); every bulk bond
    carries rate 1 regardless of the occupations it would swap.
    """
    if len(eta) != p.n_sites:
        raise ValueError(f"configuration has {len(eta)} sites, expected {p.n_sites}")
    rates = np.ones(p.n_bonds)
    damp = p.boundary_factor
    e1 = eta.occupations[0]
    er = eta.occupations[-1]
    rates[0] = damp * (p.alpha * (1 - e1) + (1.0 - p.alpha) * e1)
    rates[-1] = damp * (p.beta * (1 - er) + (1.0 - p.beta) * er)
    return rates


def apply_event(eta: Configuration, event: BondEvent | int) -> Configuration:
    """Apply a bond event to eta and return the resulting configuration.

    Bulk bond x exchanges the occupations of sites x and x+1; bond 0 flips
    site 1 and bond n-1 flips site n-1. The input value is never mutated.
    """
    bond = event.bond if isinstance(event, BondEvent) else int(event)
    m = len(eta)  # m = n - 1 sites, bonds run over 0..m
    if not 0 <= bond <= m:
        raise ValueError(f"bond {bond} outside 0..{m}")
    occ = eta.occupations.copy()
    if bond == 0:
        occ[0] ^= 1
    elif bond == m:
        occ[-1] ^= 1
    else:
        occ[bond - 1], occ[bond] = occ[bond], occ[bond - 1]
    return Configuration(occ)


def bernoulli_sample(p: Parameters, rho: float, rng: np.random.Generator) -> Configuration:
    """Sample each site independently occupied with probability rho."""
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")
    occ = (rng.random(p.n_sites) < rho).astype(np.uint8)
    return Configuration(occ)
