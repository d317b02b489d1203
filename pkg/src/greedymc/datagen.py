"""Planted sparse-regression instances with Gaussian design.

A has i.i.d. N(0, 1/N) entries, the K0 nonzero signal entries are i.i.d.
N(0, N/K0) (unit signal power per component), and y = A x0 + noise with
i.i.d. N(0, noise_var) noise.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams
from .linalg import Instance, SparseWeight

GENERATOR = {
    "bit_generator": "PCG64",
    "normal": "numpy.random.Generator.standard_normal",
    "subset": "numpy.random.Generator.choice(replace=False)",
    "numpy": np.__version__,
}


def round_half_up(v):
    # 1e-9 absorbs representation error such as 0.29 * 100 = 28.999999999999996
    return int(math.floor(v + 0.5 + 1e-9))


@dataclass(frozen=True)
class EnsembleParams:
    N: int
    alpha: float
    rho0: float
    noise_var: float = 0.0
    seed: int = 0

    @property
    def M(self):
        return round_half_up(self.alpha * self.N)

    @property
    def K0(self):
        return round_half_up(self.rho0 * self.N)

    def validate(self):
        if self.N < 1:
            raise InvalidParams(f"N must be >= 1, got {self.N}")
        if self.noise_var < 0 or not math.isfinite(self.noise_var):
            raise InvalidParams(f"noise_var must be finite and >= 0, got {self.noise_var}")
        M, K0 = self.M, self.K0
        if M < 1:
            raise InvalidParams(f"alpha={self.alpha} gives M={M} at N={self.N}")
        if K0 < 1:
            raise InvalidParams(f"rho0={self.rho0} gives K0={K0} at N={self.N}")
        if M > self.N:
            raise InvalidParams(f"alpha={self.alpha} gives M={M} > N={self.N}")
        if K0 > M:
            raise InvalidParams(
                f"K0={K0} exceeds M={M} (alpha={self.alpha}, rho0={self.rho0}, N={self.N})")
        return self

    def to_dict(self):
        return {"N": self.N, "alpha": self.alpha, "rho0": self.rho0,
                "noise_var": self.noise_var, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    inst: Instance
    x0: np.ndarray
    support0: SparseWeight
    noise_var: float
    generator: dict = field(default_factory=dict)

    @property
    def K0(self):
        return self.support0.K


def random_support(n, k, rng):
    """Uniformly random K-subset of range(n) as a :class:`SparseWeight`."""
    if not (1 <= k <= n):
        raise InvalidParams(f"need 1 <= K <= N, got K={k}, N={n}")
    return SparseWeight.from_indices(rng.choice(n, size=k, replace=False), n)


def gen_planted(params):
    """Draw a planted instance; identical ``params`` give identical output."""
    params.validate()
    N, M, K0 = params.N, params.M, params.K0
    rng = np.random.default_rng(params.seed)
    A = rng.standard_normal((M, N)) / math.sqrt(N)
    support0 = random_support(N, K0, rng)
    x0 = np.zeros(N)
    # realised density, so the signal power is exactly calibrated at finite N
    x0[support0.ones] = rng.standard_normal(K0) * math.sqrt(N / K0)
    noise = rng.standard_normal(M)
    y = A @ x0
    if params.noise_var > 0:
        y = y + math.sqrt(params.noise_var) * noise
    return PlantedInstance(
        inst=Instance(A, y),
        x0=x0,
        support0=support0,
        noise_var=float(params.noise_var),
        generator={**GENERATOR, "params": params.to_dict(), "M": M, "K0": K0},
    )
