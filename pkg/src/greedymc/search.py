"""Greedy Monte-Carlo search over fixed-sparsity supports.

A chain proposes pair flips (one active index out, one inactive index in)
and accepts only strict energy decreases. When the support has not changed
for ``t_wait`` consecutive sweeps, every pair-flip neighbour is scanned; the
chain stops if none is lower, otherwise it jumps to the best one and resumes.
"""

import enum
from dataclasses import dataclass, field, replace
from functools import partial
from typing import List, Optional

import numpy as np

from .datagen import random_support
from .errors import GmcError, InvalidParams
from .linalg import ROUNDOFF_RTOL, SparseWeight, factor_init, fit_least_squares
from .parallel import pmap
from .seeding import derive_seed


class DegenerateState(GmcError):
    """Pair flips are impossible because every index is active."""


class Termination(str, enum.Enum):
    LOCAL_OPTIMUM = "LocalOptimum"
    MAX_MCS = "MaxMcs"


@dataclass(frozen=True)
class GmcConfig:
    t_wait: int = 10
    max_mcs: Optional[int] = None  # None -> 100 * t_wait * N
    seed: int = 0
    record_trajectory: bool = False

    def __post_init__(self):
        if int(self.t_wait) < 1:
            raise InvalidParams("t_wait must be >= 1")
        if self.max_mcs is not None and int(self.max_mcs) < 0:
            raise InvalidParams("max_mcs must be >= 0")

    def mcs_cap(self, n):
        return self.max_mcs if self.max_mcs is not None else 100 * self.t_wait * n


@dataclass
class GmcResult:
    c_final: SparseWeight
    energy: float
    n_conv: int
    exhaustive_invocations: int
    terminated_by: Termination
    seed: int
    coefficients: np.ndarray = field(repr=False)
    trajectory: Optional[List[float]] = field(default=None, repr=False)

    @property
    def converged(self):
        return self.terminated_by is Termination.LOCAL_OPTIMUM

    def x_hat(self):
        """Full-length estimate with zeros off the final support."""
        x = np.zeros(self.c_final.N)
        x[self.c_final.ones] = self.coefficients
        return x


@dataclass(frozen=True)
class ExhaustiveOutcome:
    improved: bool
    c: Optional[SparseWeight] = None
    energy: Optional[float] = None


def _try_flip(fs, p, j):
    delta, scale = fs.delta(p, j)
    if delta < -ROUNDOFF_RTOL * scale:
        fs._commit(p, j)
        return True
    return False


def mc_pair_flip(fs, rng):
    """One pair-flip trial on ``fs``; returns whether it was accepted."""
    nz = fs.N - fs.K
    if nz == 0:
        raise DegenerateState("no inactive index to flip in (K == N)")
    u = rng.random(2)
    return _try_flip(fs, int(u[0] * fs.K), int(fs.inactive[int(u[1] * nz)]))


def run_one_mcs(fs, rng):
    """N pair-flip trials. Returns True if the support changed over the sweep.

    Draws the same uniforms as N successive :func:`mc_pair_flip` calls.
    """
    nz = fs.N - fs.K
    if nz == 0:
        raise DegenerateState("no inactive index to flip in (K == N)")
    before = fs.bits.copy()
    u = rng.random((fs.N, 2))
    K = fs.K
    inactive = fs.inactive
    for a, b in u.tolist():
        _try_flip(fs, int(a * K), int(inactive[int(b * nz)]))
    return not np.array_equal(before, fs.bits)


def exhaustive_local_search(fs, rng):
    """Scan all K(N-K) pair-flip neighbours and move to the best if it is lower.

    Ties for the minimum (within round-off) are broken uniformly at random.
    """
    if fs.N == fs.K:
        return ExhaustiveOutcome(False)
    deltas, scale = fs.neighbor_deltas()
    best = deltas.min()
    if not best < -ROUNDOFF_RTOL * scale.flat[np.argmin(deltas)]:
        return ExhaustiveOutcome(False)
    ties = np.flatnonzero(deltas.ravel() <= best + ROUNDOFF_RTOL * scale.ravel())
    pick = ties[rng.integers(ties.size)] if ties.size > 1 else ties[0]
    a, p = divmod(int(pick), fs.K)
    fs._commit(p, int(fs.inactive[a]))
    return ExhaustiveOutcome(True, fs.weight(), fs.energy)


def gmc(inst, c_init, cfg=GmcConfig()):
    """Run one GMC chain from ``c_init``."""
    fs = factor_init(inst, c_init)
    rng = np.random.default_rng(cfg.seed)
    cap = cfg.mcs_cap(inst.N)
    trajectory = [fs.energy] if cfg.record_trajectory else None
    t = 0
    n_mcs = 0
    n_exhaustive = 0
    terminated = Termination.LOCAL_OPTIMUM
    while fs.K < fs.N:
        if n_mcs >= cap:
            terminated = Termination.MAX_MCS
            break
        changed = run_one_mcs(fs, rng)
        n_mcs += 1
        if trajectory is not None:
            trajectory.append(fs.energy)
        t = 0 if changed else t + 1
        if t >= cfg.t_wait:
            n_exhaustive += 1
            outcome = exhaustive_local_search(fs, rng)
            if not outcome.improved:
                break
            if trajectory is not None:
                trajectory.append(fs.energy)
            t = 0
    c_final = fs.weight()
    fit = fit_least_squares(inst, c_final)
    return GmcResult(
        c_final=c_final,
        energy=fit.energy,
        n_conv=n_mcs,
        exhaustive_invocations=n_exhaustive,
        terminated_by=terminated,
        seed=cfg.seed,
        coefficients=fit.coefficients,
        trajectory=trajectory,
    )


def restart_seeds(master, n_init):
    return [derive_seed(master, k) for k in range(n_init)]


def run_restart(inst, k, cfg, seed):
    """One restart: random K-subset drawn from a child of ``seed``, then GMC."""
    c_init = random_support(inst.N, k, np.random.default_rng(derive_seed(seed, 0)))
    return gmc(inst, c_init, replace(cfg, seed=seed))


@dataclass
class RestartSet:
    best: GmcResult
    all: List[GmcResult]

    @property
    def energies(self):
        return [r.energy for r in self.all]


def multi_restart(inst, k, n_init, cfg=GmcConfig(), workers=1):
    """``n_init`` independent GMC runs; the lowest-energy one is ``best``.

    Restart seeds are derived from ``cfg.seed`` and the restart index, so the
    result list does not depend on ``workers``.
    """
    if n_init < 1:
        raise InvalidParams("n_init must be >= 1")
    if not (1 <= k <= inst.M):
        raise InvalidParams(f"need 1 <= K <= M, got K={k}, M={inst.M}")
    seeds = restart_seeds(cfg.seed, n_init)
    results = pmap(partial(run_restart, inst, k, cfg), seeds, workers)
    best = min(range(n_init), key=lambda r: (results[r].energy, r))
    return RestartSet(best=results[best], all=results)
