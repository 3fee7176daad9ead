"""Online multiplier-bootstrap baseline for the variance comparison.

All b replicas share one ordered pass over the data; replica j applies the
streaming update with its sample weighted by an i.i.d. mean-1 multiplier:

    u_j <- normalize(u_j + eta * W_{i,j} * x_i (x_i . u_j)).

The multipliers are the only replica-to-replica randomness, each replica
owning a derived stream, so permuting replica seeds permutes the outputs.
Time grows linearly in b; space is b state vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, SeedSpec, _check_unit
from .varest import batch_variance

MULTIPLIER_LAWS = ("exponential", "normal", "constant")


@dataclass(frozen=True)
class BootstrapConfig:
    """Replica count, multiplier law, step size, and randomness.

    Laws: ``exponential`` is Exp(1) (mean 1, variance 1, nonnegative, the
    default), ``normal`` is 1 + N(0, 1); ``constant`` pins every multiplier
    to 1, which makes replica 0 reproduce a plain streaming pass bit for bit.
    """

    b: int
    law: str = "exponential"
    eta: float = 0.0
    seed: SeedSpec = SeedSpec(0)

    def __post_init__(self) -> None:
        if self.b < 1:
            raise ValueError(f"need at least one replica (got b={self.b})")
        if self.law not in MULTIPLIER_LAWS:
            raise ValueError(f"unknown multiplier law {self.law!r}; pick from {MULTIPLIER_LAWS}")
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive (got {self.eta})")


def _drawer(law: str, rng: np.random.Generator):
    if law == "exponential":
        return rng.standard_exponential
    if law == "normal":
        return lambda: 1.0 + rng.standard_normal()
    return lambda: 1.0


def bootstrap_run(data: Dataset, config: BootstrapConfig, u0: np.ndarray) -> np.ndarray:
    """Run b weighted replicas over one shared pass; returns (b, d) rows.

    All replicas start from the same ``u0`` and see the samples in the same
    order; only their multipliers differ.
    """
    u0 = _check_unit(u0, "u0")
    if u0.shape[0] != data.d:
        raise ValueError(f"u0 has d={u0.shape[0]}, data has d={data.d}")
    eta = config.eta
    b = config.b
    replicas = [u0.copy() for _ in range(b)]
    draws = [_drawer(config.law, config.seed.child(j).rng()) for j in range(b)]
    for i in range(data.n):
        x = data.samples[i]
        for j in range(b):
            u = replicas[j]
            w = draws[j]()
            s = x @ u
            u += (eta * w * s) * x
            nrm = math.sqrt(u @ u)
            if nrm == 0.0 or not math.isfinite(nrm):
                raise ValueError(f"replica {j} degenerated at sample {i}")
            u *= 1.0 / nrm
    return np.asarray(replicas)


def bootstrap_variance(replicas, vtilde: np.ndarray) -> np.ndarray:
    """Per-coordinate mean squared residual of the replicas around a proxy.

    Same output shape and semantics as the subsampling estimator's per-group
    spread, so the two methods are directly comparable.
    """
    arr = np.atleast_2d(np.asarray(replicas, dtype=np.float64))
    if arr.shape[0] < 1 or arr.size == 0:
        raise ValueError("need at least one replica")
    return batch_variance(arr, vtilde)
