"""Leave-one-out cross-validation over the sparsity level K."""

from dataclasses import dataclass, field, replace
from functools import partial
from typing import List

import numpy as np

from .errors import IndexOutOfRange, InvalidParams
from .linalg import Instance, SparseWeight, fit_least_squares
from .parallel import pmap
from .search import GmcConfig, multi_restart
from .seeding import derive_seed


def loo_system(inst, mu):
    """``inst`` with row ``mu`` (0-based) removed from A and y."""
    if inst.M < 2:
        raise InvalidParams("leave-one-out needs M >= 2")
    if not 0 <= mu < inst.M:
        raise IndexOutOfRange(f"row {mu} out of range for M={inst.M}")
    keep = np.arange(inst.M) != mu
    return Instance(inst.A[keep], inst.y[keep])


@dataclass
class LooReport:
    K: int
    eps_cv: float
    fold_supports: List[np.ndarray]  # sorted active indices per held-out row
    fold_errors: np.ndarray = field(repr=False)  # held-out residuals
    counts: np.ndarray = field(repr=False)  # times each variable was selected
    seed: int = 0
    n_init_per_fold: int = 1

    def to_dict(self):
        return {
            "K": self.K,
            "eps_cv": self.eps_cv,
            "seed": self.seed,
            "n_init_per_fold": self.n_init_per_fold,
            "fold_supports": [s.tolist() for s in self.fold_supports],
            "fold_errors": self.fold_errors.tolist(),
            "counts": self.counts.tolist(),
        }


def _fold_prediction_error(inst, mu, support):
    sub = loo_system(inst, mu)
    fit = fit_least_squares(sub, SparseWeight.from_indices(support, inst.N))
    return float(inst.y[mu] - inst.A[mu, fit.support] @ fit.coefficients)


def loo_error_given_supports(inst, supports):
    """eps_CV when fold ``mu`` uses ``supports[mu]``; returns (eps_cv, residuals)."""
    if len(supports) != inst.M:
        raise InvalidParams(f"need {inst.M} fold supports, got {len(supports)}")
    res = np.array([_fold_prediction_error(inst, mu, s) for mu, s in enumerate(supports)])
    return float(res @ res) / (2 * inst.M), res


def _fold_task(inst, K, n_init, cfg, mu):
    sub = loo_system(inst, mu)
    best = multi_restart(sub, K, n_init, replace(cfg, seed=derive_seed(cfg.seed, mu))).best
    pred = float(inst.A[mu, best.c_final.ones] @ best.coefficients)
    return best.c_final.ones, inst.y[mu] - pred


def loo_cv_error(inst, K, n_init_per_fold=1, cfg=GmcConfig(), workers=1):
    """LOO CV error at sparsity K, refitting the support by GMC in every fold.

    Returns ``(eps_cv, report)``. Fold ``mu`` uses restarts seeded from
    ``derive_seed(cfg.seed, mu)``.
    """
    if not 1 <= K <= inst.M - 1:
        raise InvalidParams(f"need 1 <= K <= M-1, got K={K}, M={inst.M}")
    if n_init_per_fold < 1:
        raise InvalidParams("n_init_per_fold must be >= 1")
    out = pmap(partial(_fold_task, inst, K, n_init_per_fold, cfg), range(inst.M), workers)
    supports = [o[0] for o in out]
    res = np.array([o[1] for o in out])
    counts = np.zeros(inst.N, dtype=int)
    for s in supports:
        counts[s] += 1
    eps = float(res @ res) / (2 * inst.M)
    report = LooReport(K, eps, supports, res, counts, cfg.seed, n_init_per_fold)
    return eps, report


def selection_counts(report, top=None):
    """(variable, count) sorted by count descending, then index ascending."""
    if not report.fold_supports:
        raise InvalidParams("empty report")
    order = sorted(range(report.counts.size), key=lambda i: (-report.counts[i], i))
    table = [(i, int(report.counts[i])) for i in order]
    return table if top is None else table[:top]
