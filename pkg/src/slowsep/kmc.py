"""Event-driven continuous-time simulation of the accelerated exclusion
process on macroscopic time [0, T].

User-facing times are macroscopic: the kernel multiplies the total rate by
n**2 internally, matching the diffusively rescaled process. Snapshots use
last-value carry-forward at grid times (paths are right continuous), and the
per-site occupation time integrals recorded alongside them are exact, which
is what makes downstream martingale integrals quadrature-free.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import Configuration, Parameters

_MAGIC = b"SSEPSNAP"
_BINARY_VERSION = 1
REBUILD_EVERY = 1_000_000

OBSERVERS = ("particle_count", "site_time_integrals", "boundary_events")


@dataclass(frozen=True)
class InitSpec:
    """How each replica draws its initial configuration.

    kind = "fixed" (shared configuration), "bernoulli" (iid sites at density
    rho) or "profile" (independent sites with site-dependent marginals).
    """

    kind: str
    configuration: Configuration | None = None
    rho: float | None = None
    probs: np.ndarray | None = None

    @classmethod
    def fixed(cls, configuration: Configuration) -> "InitSpec":
        return cls(kind="fixed", configuration=configuration)

    @classmethod
    def bernoulli(cls, rho: float) -> "InitSpec":
        return cls(kind="bernoulli", rho=float(rho))

    @classmethod
    def profile(cls, probs) -> "InitSpec":
        return cls(kind="profile", probs=np.asarray(probs, dtype=np.float64))

    def mode_arrays(self, p: Parameters):
        m = p.n_sites
        fixed = np.zeros(m, dtype=np.uint8)
        probs = np.zeros(m, dtype=np.float64)
        if self.kind == "fixed":
            if self.configuration is None or len(self.configuration) != m:
                raise ValueError("fixed init requires a configuration of matching size")
            return 0, self.configuration.occupations.copy(), probs, 0.0
        if self.kind == "bernoulli":
            if self.rho is None or not 0.0 < self.rho < 1.0:
                raise ValueError("bernoulli init requires rho in (0, 1)")
            return 1, fixed, probs, float(self.rho)
        if self.kind == "profile":
            if self.probs is None or self.probs.size != m:
                raise ValueError("profile init requires one probability per site")
            if np.any((self.probs < 0) | (self.probs > 1)):
                raise ValueError("profile probabilities must lie in [0, 1]")
            return 2, fixed, self.probs.astype(np.float64), 0.0
        raise ValueError(f"unknown init kind {self.kind!r}")


@dataclass
class TrajectoryRecord:
    """One simulated trajectory sampled on a macroscopic time grid."""

    params: Parameters
    grid: np.ndarray
    snapshots: dict = field(repr=False)
    observables: dict = field(repr=False)
    event_count: int
    seed: object
    event_log: tuple | None = None  # (times, bonds) when requested

    def snapshot(self, t: float) -> Configuration:
        key = _grid_key(self.grid, t)
        return self.snapshots[key]


def _grid_key(grid: np.ndarray, t: float) -> float:
    idx = int(np.argmin(np.abs(grid - t)))
    if abs(grid[idx] - t) > 1e-12 * max(1.0, abs(t)):
        raise KeyError(f"time {t} is not on the record grid")
    return float(grid[idx])


def _validate_grid(grid, T: float) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a non-empty 1-d time sequence")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid times must be strictly increasing")
    if g[0] < 0 or g[-1] > T:
        raise ValueError("grid times must lie within [0, T]")
    return g


def replica_seeds(master_seed: int, replicas: int, salt: tuple = ()) -> np.ndarray:
    """xoshiro seed words for each replica, derived from (master seed, r).

    SeedSequence does the entropy spreading, so streams are independent and
    reproducible regardless of how replicas are scheduled across threads.
    """
    out = np.empty((replicas, 4), dtype=np.uint64)
    for r in range(replicas):
        ss = np.random.SeedSequence(entropy=(int(master_seed), *salt, r))
        out[r] = ss.generate_state(4, np.uint64)
    return out


@dataclass
class EnsembleResult:
    """Stacked grid-time statistics for a batch of independent replicas.

    snapshots      uint8 (replicas, grid, sites)
    site_integrals float64 (replicas, grid, sites), cumulative occupation time
    counts         int64 (replicas, 2): total and boundary event counts
    """

    params: Parameters
    grid: np.ndarray
    snapshots: np.ndarray
    site_integrals: np.ndarray
    counts: np.ndarray
    master_seed: int

    @property
    def replicas(self) -> int:
        return self.snapshots.shape[0]

    def grid_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[idx] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not on the ensemble grid")
        return idx

    def record(self, r: int) -> TrajectoryRecord:
        """Materialize replica r as a TrajectoryRecord."""
        snaps = {float(t): Configuration(self.snapshots[r, g].copy())
                 for g, t in enumerate(self.grid)}
        obs = {
            "particle_count": self.snapshots[r].sum(axis=1).astype(np.int64),
            "site_time_integrals": self.site_integrals[r].copy(),
            "boundary_events": int(self.counts[r, 1]),
        }
        return TrajectoryRecord(params=self.params, grid=self.grid.copy(),
                                snapshots=snaps, observables=obs,
                                event_count=int(self.counts[r, 0]),
                                seed=(self.master_seed, r))


def run_ensemble(p: Parameters, T: float, grid, replicas: int, master_seed: int,
                 init: InitSpec, seed_salt: tuple = ()) -> EnsembleResult:
    """Simulate ``replicas`` independent trajectories in parallel."""
    if T <= 0:
        raise ValueError("T must be positive")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    g = _validate_grid(grid, T)
    mode, fixed, probs, rho = init.mode_arrays(p)
    seeds = replica_seeds(master_seed, replicas, seed_salt)
    m = p.n_sites
    snaps = np.zeros((replicas, g.size, m), dtype=np.uint8)
    site_int = np.zeros((replicas, g.size, m), dtype=np.float64)
    counts = np.zeros((replicas, 2), dtype=np.int64)
    _kernels._run_ensemble(p.n, p.theta, p.alpha, p.beta, float(T), g, seeds,
                           mode, fixed, probs, rho,
                           snaps, site_int, counts, REBUILD_EVERY)
    return EnsembleResult(params=p, grid=g, snapshots=snaps,
                          site_integrals=site_int, counts=counts,
                          master_seed=int(master_seed))


def run_trajectory(p: Parameters, init: Configuration, T: float, grid,
                   observers=OBSERVERS, rng=0, log_events: bool = False,
                   max_log_events: int = 4_000_000) -> TrajectoryRecord:
    """Simulate one trajectory from a fixed initial configuration.

    ``rng`` is an integer seed or a SeedSequence; identical inputs give a
    bit-identical record. With ``log_events`` the full (time, bond) event
    log is kept, which is only sensible for moderate event counts.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if len(init) != p.n_sites:
        raise ValueError(f"init has {len(init)} sites, expected {p.n_sites}")
    unknown = set(observers) - set(OBSERVERS)
    if unknown:
        raise ValueError(f"unknown observers: {sorted(unknown)}; available: {OBSERVERS}")
    g = _validate_grid(grid, T)
    if isinstance(rng, np.random.SeedSequence):
        seed_words = rng.generate_state(4, np.uint64)
        seed_repr = rng.entropy
    else:
        seed_words = np.random.SeedSequence(entropy=int(rng)).generate_state(4, np.uint64)
        seed_repr = int(rng)
    if not seed_words.any():
        seed_words[0] = 1

    m = p.n_sites
    occ = init.occupations.copy()
    snaps = np.zeros((g.size, m), dtype=np.uint8)
    site_int = np.zeros((g.size, m), dtype=np.float64)
    cap = max_log_events if log_events else 0
    log_t = np.empty(cap, dtype=np.float64)
    log_b = np.empty(cap, dtype=np.int32)
    events, boundary, log_len = _kernels._sim_core(
        occ, p.theta, p.alpha, p.beta, p.n, float(T), g, seed_words.copy(),
        snaps, site_int, REBUILD_EVERY, log_t, log_b, log_events)

    if log_events and log_len < 0:
        raise RuntimeError(f"event log overflowed max_log_events={max_log_events}")

    snapshots = {float(t): Configuration(snaps[i].copy()) for i, t in enumerate(g)}
    observables = {}
    if "particle_count" in observers:
        observables["particle_count"] = snaps.sum(axis=1).astype(np.int64)
    if "site_time_integrals" in observers:
        observables["site_time_integrals"] = site_int
    if "boundary_events" in observers:
        observables["boundary_events"] = int(boundary)
    log = (log_t[:log_len].copy(), log_b[:log_len].copy()) if log_events else None
    return TrajectoryRecord(params=p, grid=g, snapshots=snapshots,
                            observables=observables, event_count=int(events),
                            seed=seed_repr, event_log=log)


def empirical_density_profile(result: EnsembleResult, t: float):
    """Per-site sample mean and standard error across replicas at grid time t."""
    if result.replicas == 0:
        raise ValueError("empty ensemble")
    gi = result.grid_index(t)
    data = result.snapshots[:, gi, :].astype(np.float64)
    mean = data.mean(axis=0)
    if result.replicas > 1:
        se = data.std(axis=0, ddof=1) / np.sqrt(result.replicas)
    else:
        se = np.zeros_like(mean)
    return mean, se


def time_averaged_profile(result: EnsembleResult, t0: float, t1: float):
    """Profile averaged over the window [t0, t1] (exact time integrals),
    then averaged across replicas; returns (mean, standard error)."""
    i0 = result.grid_index(t0)
    i1 = result.grid_index(t1)
    if i1 <= i0:
        raise ValueError("need t1 > t0 on the grid")
    window = result.grid[i1] - result.grid[i0]
    per_rep = (result.site_integrals[:, i1, :] - result.site_integrals[:, i0, :]) / window
    mean = per_rep.mean(axis=0)
    if result.replicas > 1:
        se = per_rep.std(axis=0, ddof=1) / np.sqrt(result.replicas)
    else:
        se = np.zeros_like(mean)
    return mean, se


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def snapshots_to_csv(result: EnsembleResult, path) -> None:
    """Write (replica, t, site, occupation) rows for every grid snapshot."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("replica,t,site,occupation\n")
        for r in range(result.replicas):
            for gi, t in enumerate(result.grid):
                row = result.snapshots[r, gi]
                for x in range(row.size):
                    fh.write(f"{r},{float(t)!r},{x + 1},{row[x]}\n")


def write_snapshots_binary(result: EnsembleResult, path) -> None:
    """Compact snapshot dump.

    Header: magic 'SSEPSNAP', u32 version, u32 n, f64 theta, u32 grid length,
    u32 replicas; then grid times as f64; then, replica by replica, the raw
    occupation bytes for each grid time (grid*(n-1) bytes per replica).
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIdII", _BINARY_VERSION, result.params.n,
                             result.params.theta, result.grid.size, result.replicas))
        fh.write(result.grid.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(result.snapshots, dtype=np.uint8).tobytes())


def read_snapshots_binary(path):
    """Read a write_snapshots_binary dump; returns (n, theta, grid, snapshots)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError("not a slowsep snapshot file")
        version, n, theta, glen, reps = struct.unpack("<IIdII", fh.read(struct.calcsize("<IIdII")))
        if version != _BINARY_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        grid = np.frombuffer(fh.read(8 * glen), dtype="<f8").copy()
        raw = fh.read(reps * glen * (n - 1))
        snaps = np.frombuffer(raw, dtype=np.uint8).reshape(reps, glen, n - 1).copy()
    return n, theta, grid, snaps
