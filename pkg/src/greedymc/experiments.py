"""Experiment harnesses on planted instances.

Every harness is deterministic given its master seed: instance and restart
seeds are derived from it by task coordinates, and results are aggregated in
task order, so the worker count never changes the numbers.
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import partial
from typing import List, Optional

import numpy as np

from .datagen import EnsembleParams, gen_planted, round_half_up
from .errors import DimensionMismatch, InvalidParams
from .parallel import pmap
from .search import GmcConfig, multi_restart, restart_seeds, run_restart
from .seeding import derive_seed

#: Absolute input-MSE threshold for "perfect reconstruction" (unit signal power).
PERFECT_EPS_X = 1e-10


def input_mse(x0, c, fit):
    """eps_x = ||x0 - x_hat||^2 / (2N), with x_hat the fit embedded at ``c``."""
    x0 = np.asarray(x0, dtype=float)
    if c.N != x0.size:
        raise DimensionMismatch(f"x0 has length {x0.size}, sparse weight has {c.N}")
    if not np.array_equal(c.ones, fit.support):
        raise DimensionMismatch("fit support does not match the sparse weight")
    return _eps_x(x0, fit.full(x0.size))


def _eps_x(x0, x_hat):
    diff = x0 - x_hat
    return float(diff @ diff) / (2 * x0.size)


def mean_stderr(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _key(v):
    # grid coordinate -> seed key, stable across grids containing the cell
    return int(round(float(v) * 1_000_000))


def _count_success(pi, n_init, cfg):
    seeds = restart_seeds(cfg.seed, n_init)
    hits = 0
    capped = 0
    for s in seeds:
        r = run_restart(pi.inst, pi.K0, cfg, s)
        if not r.converged:
            capped += 1
        elif _eps_x(pi.x0, r.x_hat()) <= PERFECT_EPS_X:
            hits += 1
    return hits, capped


def success_rate(pi, n_init, cfg=GmcConfig(), workers=1):
    """Fraction of ``n_init`` restarts (K = K0) that reconstruct x0 exactly.

    Runs stopped by the MCS cap count as failures.
    """
    if n_init < 1:
        raise InvalidParams("n_init must be >= 1")
    if pi.noise_var > 0:
        warnings.warn("success rate is only meaningful on noiseless instances")
    rs = multi_restart(pi.inst, pi.K0, n_init, cfg, workers=workers)
    hits = sum(r.converged and _eps_x(pi.x0, r.x_hat()) <= PERFECT_EPS_X for r in rs.all)
    return hits / n_init


@dataclass
class SuccessReport:
    N: int
    alpha: float
    rho0: float
    n_init: int
    n_samp: int
    p_suc: List[float]
    mean: float
    stderr: float
    n_maxmcs: int
    seed: int

    def csv_rows(self):
        return [(self.N, self.alpha, self.rho0, self.n_init, self.n_samp, self.mean, self.stderr)]


def _success_task(N, alpha, rho0, n_init, cfg, sample):
    pi = gen_planted(EnsembleParams(N, alpha, rho0, seed=derive_seed(cfg.seed, sample, 0)))
    hits, capped = _count_success(pi, n_init, replace(cfg, seed=derive_seed(cfg.seed, sample, 1)))
    return hits / n_init, capped


def success_experiment(N, alpha, rho0, n_samp, n_init, cfg=GmcConfig(), workers=1):
    """P_suc on ``n_samp`` fresh noiseless instances, with mean and standard error."""
    if n_init < 1 or n_samp < 1:
        raise InvalidParams("n_init and n_samp must be >= 1")
    EnsembleParams(N, alpha, rho0).validate()
    out = pmap(partial(_success_task, N, alpha, rho0, n_init, cfg), range(n_samp), workers)
    p = [o[0] for o in out]
    mean, se = mean_stderr(p)
    return SuccessReport(N, alpha, rho0, n_init, n_samp, p, mean, se,
                         sum(o[1] for o in out), cfg.seed)


@dataclass
class PhaseCell:
    alpha: float
    rho0: float
    n_samp: int
    p_samp: float

    @property
    def stderr(self):
        return math.sqrt(self.p_samp * (1 - self.p_samp) / self.n_samp)

    def csv_row(self):
        return (self.alpha, self.rho0, self.n_samp, self.p_samp)


def default_phase_grid(N):
    """alpha, rho0 in {0.05, ..., 0.95}, keeping only cells with K0 <= M."""
    vals = [round(0.05 * k, 2) for k in range(1, 20)]
    return [(a, r) for a in vals for r in vals
            if EnsembleParams(N, a, r).K0 <= EnsembleParams(N, a, r).M]


def _any_success_task(N, n_init, cfg, job):
    alpha, rho0, sample = job
    ck = (_key(alpha), _key(rho0), sample)
    pi = gen_planted(EnsembleParams(N, alpha, rho0, seed=derive_seed(cfg.seed, *ck, 0)))
    rcfg = replace(cfg, seed=derive_seed(cfg.seed, *ck, 1))
    # restarts are independent, so stopping at the first success leaves P_suc > 0 unchanged
    for s in restart_seeds(rcfg.seed, n_init):
        r = run_restart(pi.inst, pi.K0, rcfg, s)
        if r.converged and _eps_x(pi.x0, r.x_hat()) <= PERFECT_EPS_X:
            return True
    return False


def phase_sweep(cells, N, n_samp, n_init, cfg=GmcConfig(), workers=1):
    """P_samp, the fraction of instances with P_suc > 0, per (alpha, rho0) cell."""
    cells = [(float(a), float(r)) for a, r in cells]
    for a, r in cells:
        try:
            EnsembleParams(N, a, r).validate()
        except InvalidParams as exc:
            raise InvalidParams(f"infeasible cell (alpha={a}, rho0={r}): {exc}") from None
    jobs = [(a, r, s) for a, r in cells for s in range(n_samp)]
    hits = pmap(partial(_any_success_task, N, n_init, cfg), jobs, workers)
    out = []
    for ci, (a, r) in enumerate(cells):
        h = hits[ci * n_samp:(ci + 1) * n_samp]
        out.append(PhaseCell(a, r, n_samp, sum(h) / n_samp))
    return out


@dataclass
class ScalingRecord:
    N: int
    nconv_mean: float
    nconv_stderr: float
    n_runs: int
    n_maxmcs: int

    def csv_row(self):
        return (self.N, self.nconv_mean, self.nconv_stderr)


@dataclass
class ScalingReport:
    records: List[ScalingRecord]
    slope: Optional[float]
    params: dict = field(default_factory=dict)


def _nconv_task(alpha, rho, rho0, n_init, cfg, job):
    N, sample = job
    pi = gen_planted(EnsembleParams(N, alpha, rho0, seed=derive_seed(cfg.seed, N, sample, 0)))
    k = round_half_up(rho * N)
    rcfg = replace(cfg, seed=derive_seed(cfg.seed, N, sample, 1))
    return [(r.n_conv, r.converged)
            for r in (run_restart(pi.inst, k, rcfg, s) for s in restart_seeds(rcfg.seed, n_init))]


def loglog_slope(xs, ys):
    if len(xs) < 2:
        return None
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def nconv_scaling(sizes, alpha, rho, rho0, n_samp, cfg=GmcConfig(), n_init=1, workers=1):
    """Mean sweeps-to-convergence per system size, plus the log-log slope.

    Runs stopped by the MCS cap are excluded from the means and counted.
    """
    sizes = [int(n) for n in sizes]
    for n in sizes:
        p = EnsembleParams(n, alpha, rho0).validate()
        if not 1 <= round_half_up(rho * n) <= p.M:
            raise InvalidParams(f"rho={rho} gives K outside [1, M] at N={n}")
    jobs = [(n, s) for n in sizes for s in range(n_samp)]
    out = pmap(partial(_nconv_task, alpha, rho, rho0, n_init, cfg), jobs, workers)
    records = []
    for i, n in enumerate(sizes):
        runs = [r for o in out[i * n_samp:(i + 1) * n_samp] for r in o]
        conv = [nc for nc, ok in runs if ok]
        mean, se = mean_stderr(conv)
        records.append(ScalingRecord(n, mean, se, len(conv), len(runs) - len(conv)))
    ok = [r for r in records if r.n_runs > 0]
    slope = loglog_slope([r.N for r in ok], [r.nconv_mean for r in ok])
    params = {"sizes": sizes, "alpha": alpha, "rho": rho, "rho0": rho0,
              "n_samp": n_samp, "n_init": n_init, "seed": cfg.seed, "t_wait": cfg.t_wait}
    return ScalingReport(records, slope, params)


@dataclass
class MseRow:
    rho: float
    eps_y_mean: float
    eps_y_stderr: float
    eps_x_mean: float
    eps_x_stderr: float

    def csv_row(self):
        return (self.rho, self.eps_y_mean, self.eps_y_stderr, self.eps_x_mean, self.eps_x_stderr)


@dataclass
class MseReport:
    rows: List[MseRow]
    eps_y: List[List[float]] = field(repr=False)  # per rho, per sample
    eps_x: List[List[float]] = field(repr=False)
    params: dict = field(default_factory=dict)


def _mse_task(params, n_init, cfg, job):
    rho, sample = job
    # the same instance is reused across the rho grid
    pi = gen_planted(replace(params, seed=derive_seed(params.seed, sample, 0)))
    k = round_half_up(rho * params.N)
    rcfg = replace(cfg, seed=derive_seed(params.seed, sample, _key(rho)))
    best = multi_restart(pi.inst, k, n_init, rcfg).best
    return best.energy, _eps_x(pi.x0, best.x_hat())


def noisy_mse_curve(params, rho_grid, n_samp, n_init, cfg=GmcConfig(), workers=1):
    """eps_y and eps_x of the best-of-``n_init`` estimator across assumed densities.

    ``params.seed`` is the master seed; instance ``s`` is shared by all rho.
    """
    params.validate()
    rho_grid = [float(r) for r in rho_grid]
    for r in rho_grid:
        k = round_half_up(r * params.N)
        if not 1 <= k <= params.M:
            raise InvalidParams(f"rho={r} gives K={k} outside [1, M={params.M}]")
    jobs = [(r, s) for r in rho_grid for s in range(n_samp)]
    out = pmap(partial(_mse_task, params, n_init, cfg), jobs, workers)
    rows, ey, ex = [], [], []
    for i, r in enumerate(rho_grid):
        chunk = out[i * n_samp:(i + 1) * n_samp]
        ys = [o[0] for o in chunk]
        xs = [o[1] for o in chunk]
        rows.append(MseRow(r, *mean_stderr(ys), *mean_stderr(xs)))
        ey.append(ys)
        ex.append(xs)
    meta = {**params.to_dict(), "rho_grid": rho_grid, "n_samp": n_samp,
            "n_init": n_init, "t_wait": cfg.t_wait}
    return MseReport(rows, ey, ex, meta)
