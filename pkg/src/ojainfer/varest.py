"""Subsampled per-coordinate variance estimation with robust aggregation.

The estimator splits n samples into m1 groups of m2 batches of size
B = n // (m1 * m2), runs one streaming pass per batch with step size
eta_B tuned to the batch length, measures per-coordinate spread of the batch
estimates around a high-accuracy proxy vector, and aggregates the m1 group
variances by their median:

    sigma2[l, k] = (1/m2) * sum_j ( e_k . (v_{l,j} - (vt . v_{l,j}) vt) )^2
    gamma[k]     = median_l sigma2[l, k] / (eta_B * gap)

gamma estimates the scale-free per-coordinate limit variance; multiplying it
back by eta_B * gap recovers the batch-scale spread itself.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .core import Dataset, SeedSpec, _check_unit
from .oja import gaussian_unit, learning_rate, oja_run

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VarEstConfig:
    """Schedule and randomness for one estimator run.

    ``m1``/``m2`` override the default schedule (None means use the formula:
    m1 = ceil(8 ln(d/delta)), m2 = max(2, ceil(ln n))).
    """

    delta: float = 0.05
    m1: int | None = None
    m2: int | None = None
    gap: float | None = None
    alpha: float = 2.0
    seed: SeedSpec = SeedSpec(0)
    init: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1) (got {self.delta})")
        for name in ("m1", "m2"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise ValueError(f"{name} must be >= 1 when overridden (got {val})")
        if self.init is not None:
            object.__setattr__(self, "init", _check_unit(self.init, "init"))

    @classmethod
    def paper_experiments(cls, seed: SeedSpec = SeedSpec(0), delta: float = 0.05,
                          alpha: float = 2.0) -> "VarEstConfig":
        """Preset with m1 = 3 groups, as used in the reference experiments."""
        return cls(delta=delta, m1=3, m2=None, alpha=alpha, seed=seed)


@dataclass(frozen=True)
class VarEstResult:
    """Estimates gamma plus the per-group spreads they were aggregated from."""

    gamma: np.ndarray
    batch_sigma2: np.ndarray
    eta_b: float
    batch_size: int
    m1: int
    m2: int
    vtilde: np.ndarray
    samples_unused: int
    batch_estimates: np.ndarray | None = None

    def __post_init__(self) -> None:
        if np.any(self.gamma < 0.0):
            raise ValueError("per-coordinate variance estimates must be nonnegative")

    def batch_scale_sigma2(self) -> np.ndarray:
        """Median group spread, i.e. gamma rescaled back by eta_B * gap."""
        return np.median(self.batch_sigma2, axis=0)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.tolist(),
            "batch_sigma2": self.batch_sigma2.tolist(),
            "eta_b": self.eta_b,
            "batch_size": self.batch_size,
            "m1": self.m1,
            "m2": self.m2,
            "vtilde": self.vtilde.tolist(),
            "samples_unused": self.samples_unused,
        }

    def csv_rows(self) -> list[dict]:
        """One row per coordinate: gamma plus each group's spread."""
        rows = []
        for k in range(self.gamma.shape[0]):
            row = {"coordinate": k + 1, "gamma": float(self.gamma[k])}
            for ell in range(self.m1):
                row[f"sigma2_group{ell + 1}"] = float(self.batch_sigma2[ell, k])
            rows.append(row)
        return rows


def plan_schedule(n: int, d: int, delta: float,
                  m1_override: int | None = None,
                  m2_override: int | None = None) -> tuple[int, int, int]:
    """Resolve the (m1, m2, B) split for n samples in dimension d.

    Defaults: m1 = ceil(8 ln(d/delta)) groups, m2 = max(2, ceil(ln n))
    batches per group, B = n // (m1 * m2) samples per batch. Fails when the
    data cannot give every batch at least 2 samples.
    """
    if n < 4:
        raise ValueError(f"need n >= 4 samples (got {n})")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1) (got {delta})")
    if d < 1:
        raise ValueError(f"need d >= 1 (got {d})")
    m1 = m1_override if m1_override is not None else math.ceil(8.0 * math.log(d / delta))
    m2 = m2_override if m2_override is not None else max(2, math.ceil(math.log(n)))
    if m1 < 1 or m2 < 1:
        raise ValueError(f"schedule collapsed to m1={m1}, m2={m2}")
    batch = n // (m1 * m2)
    if batch < 2:
        raise ValueError(
            f"insufficient data for the schedule: n={n} gives batches of "
            f"{batch} with m1={m1}, m2={m2}"
        )
    return m1, m2, batch


def batch_variance(batch_vectors, vtilde: np.ndarray) -> np.ndarray:
    """Per-coordinate mean squared residual of unit vectors around a proxy.

    Residuals are taken against the component along ``vtilde``, so flipping
    the sign of any input vector leaves the output bit-identical.
    """
    vt = _check_unit(vtilde, "vtilde")
    vecs = np.atleast_2d(np.asarray(batch_vectors, dtype=np.float64))
    if vecs.shape[1] != vt.shape[0]:
        raise ValueError(f"vectors have d={vecs.shape[1]}, proxy has d={vt.shape[0]}")
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValueError("all batch vectors must be unit norm")
    coeffs = vecs @ vt
    residuals = vecs - coeffs[:, None] * vt[None, :]
    return np.mean(residuals**2, axis=0)


def median_of_means(values) -> float:
    """Median with the usual middle-pair average for even counts."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("cannot take a median of no values")
    return float(np.median(arr))


def ojavarest(data: Dataset, delta: float, vtilde: np.ndarray, gap: float,
              config: VarEstConfig | None = None,
              threads: int | None = None,
              keep_batch_estimates: bool = False) -> VarEstResult:
    """Estimate per-coordinate residual variances by batched subsampling.

    Parameters
    ----------
    data : Dataset
        The n samples; only the first m1*m2*B are consumed (in order), the
        trailing remainder is dropped and its size recorded.
    delta : float
        Failure-probability budget driving the default schedule.
    vtilde : (d,) array
        High-accuracy unit proxy for the leading direction, computed by the
        caller (single full pass by default, or a boosted variant).
    gap : float
        Eigengap lambda_1 - lambda_2 used for the step size and rescaling.
    config : VarEstConfig
        Schedule overrides, step multiplier and random seed.
    threads : int, optional
        Worker cap for the independent batch runs; results are identical for
        any value.
    """
    if gap <= 0.0:
        raise ValueError(f"gap must be positive (got {gap})")
    cfg = config if config is not None else VarEstConfig(delta=delta)
    vt = _check_unit(vtilde, "vtilde")
    m1, m2, batch = plan_schedule(data.n, data.d, delta, cfg.m1, cfg.m2)
    eta_b = learning_rate(batch, gap, cfg.alpha)
    used = m1 * m2 * batch
    unused = data.n - used
    if unused:
        log.info("schedule uses %d of %d samples (%d trailing dropped)", used, data.n, unused)

    samples = data.samples

    def run_batch(index: int) -> np.ndarray:
        # Fresh random start per batch unless a fixed one was forced.
        if cfg.init is not None:
            u0 = cfg.init
        else:
            u0 = gaussian_unit(cfg.seed.child(index).rng(), data.d)
        block = samples[index * batch : (index + 1) * batch]
        return oja_run(block, eta_b, u0).estimate

    estimates = parallel_map(run_batch, range(m1 * m2), threads)
    stacked = np.asarray(estimates)
    sigma2 = np.empty((m1, data.d))
    for ell in range(m1):
        sigma2[ell] = batch_variance(stacked[ell * m2 : (ell + 1) * m2], vt)
    med = np.median(sigma2, axis=0)
    gamma = med / (eta_b * gap)
    return VarEstResult(
        gamma=gamma, batch_sigma2=sigma2, eta_b=eta_b, batch_size=batch,
        m1=m1, m2=m2, vtilde=vt, samples_unused=unused,
        batch_estimates=stacked if keep_batch_estimates else None,
    )
