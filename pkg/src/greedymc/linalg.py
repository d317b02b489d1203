"""Least squares on an active column set and incremental pair-flip energies.

The search energy of a support ``c`` is the output MSE

    energy(c) = ||y - A_c x_c||^2 / (2 M),   x_c = argmin ||y - A_c x||

:class:`FactorState` caches the inverse Gram matrix of the active columns
together with a few N-length tables so that the energy after swapping one
active column for one inactive column costs O(1), and committing the swap
costs one rank-two update of the inverse.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    IndexNotActive,
    IndexNotInactive,
    InvalidParams,
)

#: Relative pivot threshold of the column-pivoted QR used for rank detection.
RANK_RTOL = 1e-10
#: Energy differences below this fraction of the magnitudes being subtracted
#: are not resolvable in double precision and are treated as ties.
ROUNDOFF_RTOL = 1e-12
#: An entering column whose squared distance from the remaining active span is
#: below this fraction of its squared norm is treated as linearly dependent.
DEPENDENT_RTOL = 1e-12
#: Rebuild the cached factorization after this many committed flips.
REBUILD_EVERY = 256
#: Predicted vs recomputed residual mismatch that forces a rebuild.
DRIFT_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Instance:
    """Dense design matrix ``A`` (M x N) and response ``y`` (M,).

    Arrays are copied and made read-only, so instances can be shared freely.
    """

    A: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        y = np.array(self.y, dtype=float)
        if A.ndim != 2:
            raise DimensionMismatch(f"A must be 2-D, got shape {A.shape}")
        if y.ndim != 1:
            raise DimensionMismatch(f"y must be 1-D, got shape {y.shape}")
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionMismatch(f"A must be non-empty, got shape {A.shape}")
        if A.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"A has {A.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
            raise InvalidParams("A and y must be finite")
        A.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)

    @property
    def M(self):
        return self.A.shape[0]

    @property
    def N(self):
        return self.A.shape[1]

    @cached_property
    def gram(self):
        G = self.A.T @ self.A
        G.flags.writeable = False
        return G

    @cached_property
    def aty(self):
        v = self.A.T @ self.y
        v.flags.writeable = False
        return v

    @cached_property
    def yy(self):
        return float(self.y @ self.y)

    def __getstate__(self):
        # drop cached tables when shipping to worker processes
        return {"A": self.A, "y": self.y}

    def __setstate__(self, state):
        object.__setattr__(self, "A", state["A"])
        object.__setattr__(self, "y", state["y"])


class SparseWeight:
    """Binary sparse weight ``c`` of length N with popcount K >= 1.

    ``ones`` and ``zeros`` are the sorted active and inactive index arrays.
    """

    __slots__ = ("bits", "ones", "zeros")

    def __init__(self, bits):
        bits = np.array(bits, dtype=bool).reshape(-1)
        if bits.size == 0:
            raise InvalidParams("sparse weight must have length >= 1")
        if not bits.any():
            raise InvalidParams("sparse weight must have at least one active index (K >= 1)")
        bits.flags.writeable = False
        self.bits = bits
        self.ones = np.flatnonzero(bits)
        self.zeros = np.flatnonzero(~bits)

    @classmethod
    def from_indices(cls, indices, n):
        idx = np.asarray(indices, dtype=int).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise InvalidParams(f"support indices must lie in [0, {n})")
        if np.unique(idx).size != idx.size:
            raise InvalidParams("support indices must be distinct")
        bits = np.zeros(n, dtype=bool)
        bits[idx] = True
        return cls(bits)

    @property
    def N(self):
        return self.bits.size

    @property
    def K(self):
        return self.ones.size

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        if not isinstance(other, SparseWeight):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"SparseWeight(N={self.N}, ones={self.ones.tolist()})"


@dataclass(frozen=True)
class LeastSquaresFit:
    """Least-squares solution restricted to ``support`` (sorted indices)."""

    support: np.ndarray
    coefficients: np.ndarray
    energy: float
    residual: np.ndarray
    rank: int
    rank_deficient: bool

    def full(self, n):
        """Coefficients embedded in a length-``n`` vector, zero off support."""
        x = np.zeros(n)
        x[self.support] = self.coefficients
        return x


def _check(inst, c):
    if not isinstance(c, SparseWeight):
        c = SparseWeight(c)
    if c.N != inst.N:
        raise DimensionMismatch(f"sparse weight has length {c.N}, expected N={inst.N}")
    if c.K > inst.M:
        raise InvalidParams(f"K={c.K} exceeds M={inst.M}")
    return c


def _pivoted_qr(As):
    Q, R, piv = sla.qr(As, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag.size and diag[0] > 0 else 0
    return Q, R, piv, rank


def fit_least_squares(inst, c):
    """Minimum-norm least-squares fit of ``y`` on the active columns of ``c``.

    Rank-deficient active sets are not an error; the minimum-norm solution is
    returned and ``rank_deficient`` is set.
    """
    c = _check(inst, c)
    support = c.ones
    As = inst.A[:, support]
    Q, R, piv, rank = _pivoted_qr(As)
    if rank == c.K:
        x = np.empty(c.K)
        x[piv] = sla.solve_triangular(R, Q.T @ inst.y)
    else:
        x = np.linalg.lstsq(As, inst.y, rcond=RANK_RTOL)[0]
    r = inst.y - As @ x
    return LeastSquaresFit(
        support=support,
        coefficients=x,
        energy=float(r @ r) / (2 * inst.M),
        residual=r,
        rank=rank,
        rank_deficient=rank < c.K,
    )


def energy(inst, c):
    """Output MSE of the least-squares fit on the active columns of ``c``."""
    return fit_least_squares(inst, c).energy


class FactorState:
    """Mutable search state with cached factorization of the active Gram matrix.

    Attributes (K = number of active columns, slots index ``active``):

    ``active``
        active column indices in slot order; a committed flip reuses the slot
        of the leaving column.
    ``inactive``
        inactive column indices (order is arbitrary but deterministic).
    ``H``
        inverse of ``A_S^T A_S`` in slot order.
    ``x``
        least-squares coefficients in slot order.
    ``V``
        ``A^T A_S H`` (N x K); row j, slot p gives the overlap of column j
        with the component of slot p orthogonal to the other active columns.
    ``z``
        ``A^T r`` for the current residual ``r``.
    ``d``
        squared norm of each column's component orthogonal to the active span.

    Use :func:`factor_init` to build one.
    """

    def __init__(self, inst, c):
        c = _check(inst, c)
        self.inst = inst
        self.N = inst.N
        self.M = inst.M
        self.K = c.K
        self.active = c.ones.copy()
        self.inactive = c.zeros.copy()
        self._gdiag = np.diag(inst.gram).copy()
        self.rebuilds = 0
        self._rebuild()

    # -- construction -----------------------------------------------------

    def _rebuild(self):
        inst = self.inst
        # slot[k] is the position of index k within active or inactive
        self.slot = np.empty(self.N, dtype=int)
        self.slot[self.active] = np.arange(self.K)
        self.slot[self.inactive] = np.arange(self.N - self.K)
        self.bits = np.zeros(self.N, dtype=bool)
        self.bits[self.active] = True

        As = inst.A[:, self.active]
        Q, R, piv, rank = _pivoted_qr(As)
        self.rank_deficient = rank < self.K
        self.since_rebuild = 0
        self.rebuilds += 1
        if self.rank_deficient:
            fit = fit_least_squares(inst, SparseWeight(self.bits))
            order = np.argsort(self.active)
            x = np.empty(self.K)
            x[order] = fit.coefficients
            self.x = x
            self.r = fit.residual
            self.rss = float(fit.residual @ fit.residual)
            self.H = self.V = self.C = self.z = self.d = None
            return
        x = np.empty(self.K)
        x[piv] = sla.solve_triangular(R, Q.T @ inst.y)
        Rinv = sla.solve_triangular(R, np.eye(self.K))
        H = np.empty((self.K, self.K))
        H[np.ix_(piv, piv)] = Rinv @ Rinv.T
        r = inst.y - As @ x
        self.x = x
        self.H = H
        self.r = r
        self.rss = float(r @ r)
        self.C = np.array(inst.gram[:, self.active])
        self._refresh_tables()

    def _refresh_tables(self):
        C = self.C
        self.V = C @ self.H
        self.z = self.inst.aty - C @ self.x
        self.d = self._gdiag - np.einsum("ij,ij->i", self.V, C)

    # -- queries ----------------------------------------------------------

    @property
    def energy(self):
        return self.rss / (2 * self.M)

    @property
    def gram_inverse(self):
        return self.H

    def weight(self):
        return SparseWeight(self.bits)

    def _membership(self, i_out, j_in):
        if not (0 <= i_out < self.N) or not self.bits[i_out]:
            raise IndexNotActive(f"index {i_out} is not active")
        if not (0 <= j_in < self.N) or self.bits[j_in]:
            raise IndexNotInactive(f"index {j_in} is not inactive")
        return int(self.slot[i_out])

    def _delta(self, p, j):
        """Change in RSS when slot ``p`` is replaced by column ``j``.

        Returns ``(delta, scale)``; ``scale`` bounds the magnitudes that were
        subtracted and sets the resolution of ``delta``.
        """
        h = self.H[p, p]
        xp = self.x[p]
        v = self.V[j, p]
        removal = xp * xp / h
        s = self.d[j] + v * v / h
        if s <= DEPENDENT_RTOL * self._gdiag[j]:
            gain = 0.0
        else:
            zz = self.z[j] + xp * v / h
            gain = zz * zz / s
        return removal - gain, self.rss + removal

    def _naive_rss(self, p, j):
        bits = self.bits.copy()
        bits[self.active[p]] = False
        bits[j] = True
        fit = fit_least_squares(self.inst, SparseWeight(bits))
        return float(fit.residual @ fit.residual)

    def delta(self, p, j):
        if self.rank_deficient:
            return self._naive_rss(p, j) - self.rss, self.rss
        return self._delta(p, j)

    def _flip_rss(self, p, j):
        # explicit residual of the flipped support, O(MK): accurate even when
        # the O(1) delta suffers cancellation (near-square, ill-conditioned A_S)
        A = self.inst.A
        As = A[:, self.active]
        h = self.H[p, p]
        u = As @ self.H[:, p]
        r_minus = self.r + (self.x[p] / h) * u
        w = A[:, j] - As @ self.V[j] + (self.V[j, p] / h) * u
        ww = float(w @ w)
        if ww <= DEPENDENT_RTOL * self._gdiag[j]:
            return float(r_minus @ r_minus)
        r_new = r_minus - (float(w @ r_minus) / ww) * w
        return float(r_new @ r_new)

    def energy_after_pair_flip(self, i_out, j_in):
        """Energy after swapping active ``i_out`` for inactive ``j_in``; no mutation.

        Costs O(K^2 + MK); the search itself screens proposals with the O(1)
        :meth:`delta`.
        """
        p = self._membership(i_out, j_in)
        if self.rank_deficient:
            return self._naive_rss(p, j_in) / (2 * self.M)
        return self._flip_rss(p, j_in) / (2 * self.M)

    def neighbor_deltas(self):
        """RSS change for every pair flip, shape (N-K, K).

        Row order follows ``inactive``, column order follows ``active`` slots.
        Also returns the matching resolution scales.
        """
        nz = self.N - self.K
        if self.rank_deficient:
            out = np.empty((nz, self.K))
            for a, j in enumerate(self.inactive):
                for p in range(self.K):
                    out[a, p] = self._naive_rss(p, j) - self.rss
            return out, np.full_like(out, self.rss)
        hd = np.diag(self.H)
        J = self.inactive
        V = self.V[J]
        removal = self.x * self.x / hd
        s = self.d[J][:, None] + V * V / hd
        zz = self.z[J][:, None] + V * (self.x / hd)
        dependent = s <= DEPENDENT_RTOL * self._gdiag[J][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(dependent, 0.0, zz * zz / s)
        return removal - gain, np.broadcast_to(self.rss + removal, gain.shape)

    # -- updates ----------------------------------------------------------

    def commit_pair_flip(self, i_out, j_in):
        """Swap active ``i_out`` for inactive ``j_in`` in place; returns self."""
        p = self._membership(i_out, j_in)
        self._commit(p, j_in)
        return self

    def _swap_indices(self, p, j):
        i = self.active[p]
        q = self.slot[j]
        self.active[p] = j
        self.inactive[q] = i
        self.slot[j] = p
        self.slot[i] = q
        self.bits[i] = False
        self.bits[j] = True

    def _commit(self, p, j):
        if self.rank_deficient:
            self._swap_indices(p, j)
            self._rebuild()
            return
        dr, _ = self._delta(p, j)
        predicted = self.rss + dr
        h = self.H[p, p]
        v = self.V[j, p]
        s = self.d[j] + v * v / h
        self._swap_indices(p, j)
        if s <= DEPENDENT_RTOL * self._gdiag[j] or self.since_rebuild + 1 >= REBUILD_EVERY:
            self._rebuild()
            return

        # inverse with slot p removed, then column j inserted into slot p
        hp = self.H[:, p].copy()
        H = self.H - np.outer(hp, hp) / h
        H[p, :] = 0.0
        H[:, p] = 0.0
        self.C[:, p] = self.inst.gram[:, j]
        b = self.C[self.active, p]
        b[p] = 0.0
        e = H @ b
        e[p] = -1.0
        H += np.outer(e, e) / s
        self.H = H
        self.since_rebuild += 1

        As = self.inst.A[:, self.active]
        x = H @ self.inst.aty[self.active]
        r = self.inst.y - As @ x
        # one refinement step: normal equations lose cond(A_S)^2 otherwise
        x += H @ (As.T @ r)
        r = self.inst.y - As @ x
        self.x = x
        self.r = r
        self.rss = float(r @ r)
        floor = 1e-12 * self.inst.yy
        if abs(self.rss - predicted) > DRIFT_RTOL * max(self.rss, floor):
            self._rebuild()
            return
        self._refresh_tables()


def factor_init(inst, c):
    """Build a :class:`FactorState` for support ``c``."""
    return FactorState(inst, c)


def energy_after_pair_flip(fs, i_out, j_in):
    return fs.energy_after_pair_flip(i_out, j_in)


def commit_pair_flip(fs, i_out, j_in):
    return fs.commit_pair_flip(i_out, j_in)
