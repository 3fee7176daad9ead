"""Single-pass streaming estimation of the leading eigenvector.

The basic iteration keeps a running unit vector u and, for each incoming
sample x, applies

    u <- normalize(u + eta * x * (x . u))

which is a projected stochastic-gradient step on the Rayleigh quotient. The
module also provides the constant learning-rate schedule used throughout the
library and a boosted variant that runs the iteration on disjoint batches and
picks the most central candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .core import Dataset, SeedSpec, _check_unit, eigendecompose, sample_covariance, sin2


@dataclass(frozen=True)
class OjaConfig:
    """Knobs for a streaming run.

    ``gap`` is the separation lambda_1 - lambda_2 driving the learning rate;
    pass None to have it estimated from a prefix of the data. ``init`` is an
    explicit unit starting vector; None draws a random one from ``seed``.
    """

    alpha: float = 2.0
    gap: float | None = None
    seed: SeedSpec = SeedSpec(0)
    init: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.alpha <= 1.0:
            raise ValueError(f"alpha must exceed 1 (got {self.alpha})")
        if self.gap is not None and self.gap <= 0.0:
            raise ValueError(f"gap must be positive when supplied (got {self.gap})")


@dataclass(frozen=True)
class OjaResult:
    """Outcome of one streaming pass."""

    estimate: np.ndarray
    eta_used: float
    samples_consumed: int
    init_vector: np.ndarray

    def __post_init__(self) -> None:
        nrm = float(np.linalg.norm(self.estimate))
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"estimate must be unit norm (got {nrm!r})")


def learning_rate(n: float, gap: float, alpha: float) -> float:
    """Constant step size alpha * ln(n) / (n * gap) for a pass of length n."""
    if n < 2:
        raise ValueError(f"need n >= 2 samples for a learning rate (got {n})")
    if gap <= 0.0:
        raise ValueError(f"gap must be positive (got {gap})")
    if alpha <= 1.0:
        raise ValueError(f"alpha must exceed 1 (got {alpha})")
    return alpha * math.log(n) / (n * gap)


def gaussian_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    """Uniform random unit vector: g / ||g|| with g ~ N(0, I_d)."""
    g = rng.standard_normal(d)
    return g / np.linalg.norm(g)


def _iter_samples(data) -> tuple[Iterator[np.ndarray], int | None]:
    """Row iterator over a Dataset, array, or generic sample stream."""
    if isinstance(data, Dataset):
        return iter(data.samples), data.n
    if isinstance(data, np.ndarray):
        if data.ndim != 2:
            raise ValueError(f"sample array must be 2-D, got shape {data.shape}")
        return iter(data), data.shape[0]
    return iter(data), None


def oja_run(data, eta: float, u0: np.ndarray) -> OjaResult:
    """One streaming pass over ``data`` starting from the unit vector ``u0``.

    Parameters
    ----------
    data : Dataset, (n, d) array, or iterable of length-d vectors
        Consumed once, in order; only the current sample is held in memory.
    eta : float
        Positive constant step size.
    u0 : (d,) array
        Unit-norm initial vector.

    Returns
    -------
    OjaResult
        Final unit-norm estimate plus run bookkeeping.
    """
    if eta <= 0.0:
        raise ValueError(f"eta must be positive (got {eta})")
    u0 = _check_unit(u0, "u0")
    d = u0.shape[0]
    u = u0.copy()
    stream, _ = _iter_samples(data)
    count = 0
    for x in stream:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (d,):
            raise ValueError(f"sample {count} has shape {x.shape}, expected ({d},)")
        s = x @ u
        u += (eta * s) * x
        nrm = math.sqrt(u @ u)
        if nrm == 0.0 or not math.isfinite(nrm):
            raise ValueError(f"iterate degenerated at sample {count} (norm {nrm!r})")
        u *= 1.0 / nrm
        count += 1
    if count == 0:
        raise ValueError("sample stream was empty")
    return OjaResult(estimate=u, eta_used=float(eta), samples_consumed=count, init_vector=u0)


def estimate_gap(data: Dataset, limit: int = 4096) -> float:
    """Plug-in eigengap from the covariance of the first min(n, limit) rows."""
    head = Dataset(data.samples[: min(data.n, limit)], provenance=data.provenance)
    eig = eigendecompose(sample_covariance(head))
    return eig.require_gap()


def _resolve_gap(data: Dataset, config: OjaConfig) -> float:
    return config.gap if config.gap is not None else estimate_gap(data)


def _initial_vector(config: OjaConfig, d: int, seed: SeedSpec) -> np.ndarray:
    if config.init is not None:
        return _check_unit(config.init, "init")
    return gaussian_unit(seed.rng(), d)


def oja_boosted(data: Dataset, delta: float, config: OjaConfig) -> OjaResult:
    """High-probability variant: batch the stream and pick a central candidate.

    The data is split into q = max(1, ceil(ln(1/delta))) contiguous batches of
    equal size (trailing remainder dropped), a fresh streaming run is made per
    batch, and the winner is the candidate whose median squared-sine distance
    to the other candidates is smallest. Ties go to the earliest batch, which
    keeps the selection deterministic. With a single batch this reduces to a
    plain pass over the whole dataset.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1) (got {delta})")
    q = max(1, math.ceil(math.log(1.0 / delta)))
    batch = data.n // q
    if batch < 2:
        raise ValueError(
            f"need at least 2 samples per batch: n={data.n} gives batches of {batch} for q={q}"
        )
    gap = _resolve_gap(data, config)
    eta = learning_rate(batch, gap, config.alpha)
    candidates: list[OjaResult] = []
    for j in range(q):
        u0 = _initial_vector(config, data.d, config.seed.child(j))
        block = data.samples[j * batch : (j + 1) * batch]
        candidates.append(oja_run(block, eta, u0))
    if q == 1:
        return candidates[0]
    best_idx = 0
    best_score = math.inf
    for i, cand in enumerate(candidates):
        dists = [sin2(cand.estimate, other.estimate) for j, other in enumerate(candidates) if j != i]
        score = float(np.median(dists))
        if score < best_score:
            best_idx, best_score = i, score
    return candidates[best_idx]
