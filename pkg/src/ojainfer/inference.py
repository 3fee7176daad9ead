"""Per-coordinate confidence intervals, coverage evaluation, and limit checks.

No statistics dependency: the normal quantile is obtained by bisecting the
complementary error function, and the normality statistic is a plain
Anderson-Darling computation on standardized values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import sign_align, _check_unit

SIGMA_SOURCES = ("ojavarest", "bootstrap")

# Anderson-Darling critical values for normality with estimated mean and
# variance (statistic modified by (1 + 0.75/n + 2.25/n^2)).
AD_CRITICAL = {0.15: 0.576, 0.10: 0.656, 0.05: 0.787, 0.025: 0.918, 0.01: 1.035}


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, bisected to 1e-10.

    Example: ``normal_quantile(0.975)`` is 1.959964... for a two-sided 95%
    interval.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile argument must lie in (0, 1) (got {p})")
    lo, hi = -13.0, 13.0
    while hi - lo > 1e-10:
        mid = (lo + hi) / 2.0
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


@dataclass(frozen=True)
class ConfidenceBand:
    """Symmetric per-coordinate intervals center +/- half_width."""

    center: np.ndarray
    half_width: np.ndarray
    level: float
    scale_mode: str = "batch"
    sigma_source: str = "ojavarest"

    def __post_init__(self) -> None:
        center = _check_unit(self.center, "center")
        hw = np.asarray(self.half_width, dtype=np.float64).reshape(-1)
        if hw.shape != center.shape:
            raise ValueError("half_width must match the center's dimension")
        if np.any(hw < 0.0):
            raise ValueError("half widths must be nonnegative")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1) (got {self.level})")
        if self.sigma_source not in SIGMA_SOURCES:
            raise ValueError(f"sigma_source must be one of {SIGMA_SOURCES}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_width", hw)

    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    def upper(self) -> np.ndarray:
        return self.center + self.half_width


def build_ci(vtilde: np.ndarray, sigma2: np.ndarray, level: float,
             scale_mode: str = "batch", eta_b: float | None = None,
             eta_n: float | None = None, gap: float | None = None,
             sigma_source: str = "ojavarest") -> ConfidenceBand:
    """Per-coordinate interval vtilde_k +/- z * sqrt(s_k).

    ``sigma2`` is the batch-scale variance estimate. With
    ``scale_mode="batch"`` it is used as-is (the experimental convention);
    with ``"full"`` it is rescaled by eta_n / eta_B to the full-sample scale
    suggested by the concentration analysis. The discrepancy between the two
    conventions is deliberate and surfaced through this switch.
    """
    sigma2 = np.asarray(sigma2, dtype=np.float64).reshape(-1)
    if np.any(sigma2 < 0.0):
        raise ValueError("variance estimates must be nonnegative")
    if scale_mode == "batch":
        scaled = sigma2
    elif scale_mode == "full":
        if eta_b is None or eta_n is None or eta_b <= 0.0 or eta_n <= 0.0:
            raise ValueError("full-scale mode needs positive eta_b and eta_n")
        scaled = sigma2 * (eta_n / eta_b)
    else:
        raise ValueError(f"unknown scale mode {scale_mode!r}")
    if gap is not None and gap <= 0.0:
        raise ValueError(f"gap must be positive when supplied (got {gap})")
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    return ConfidenceBand(center=vtilde, half_width=z * np.sqrt(scaled),
                          level=level, scale_mode=scale_mode, sigma_source=sigma_source)


@dataclass(frozen=True)
class CoverageReport:
    """Per-coordinate hit counts and rates over repeated trials."""

    trials: int
    hits: np.ndarray
    rates: np.ndarray = field(init=False)
    config: dict | None = None

    def __post_init__(self) -> None:
        hits = np.asarray(self.hits, dtype=np.int64)
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if np.any(hits < 0) or np.any(hits > self.trials):
            raise ValueError("hit counts must lie in [0, trials]")
        object.__setattr__(self, "hits", hits)
        object.__setattr__(self, "rates", hits / float(self.trials))

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "hits": self.hits.tolist(),
            "rates": self.rates.tolist(),
            "config": self.config,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def evaluate_coverage(bands: list[ConfidenceBand], truth: np.ndarray,
                      config: dict | None = None) -> CoverageReport:
    """Count, per coordinate, how often each band contains the truth.

    Every band's center is sign-aligned to the truth before testing, since
    the estimators only identify the leading direction up to sign.
    """
    truth = _check_unit(truth, "truth")
    if not bands:
        raise ValueError("need at least one confidence band")
    hits = np.zeros(truth.shape[0], dtype=np.int64)
    for band in bands:
        if band.center.shape != truth.shape:
            raise ValueError("band dimension does not match the truth vector")
        center = sign_align(truth, band.center)
        hits += (np.abs(truth - center) <= band.half_width).astype(np.int64)
    return CoverageReport(trials=len(bands), hits=hits, config=config)


def anderson_darling(values: np.ndarray) -> float:
    """Anderson-Darling normality statistic on standardized values.

    Mean and variance are estimated from the sample; the returned statistic
    includes the usual small-sample modification and compares against
    ``AD_CRITICAL``.
    """
    x = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    n = x.shape[0]
    if n < 8:
        raise ValueError(f"need at least 8 values (got {n})")
    mean = float(x.mean())
    std = float(x.std(ddof=1))
    if std == 0.0:
        raise ValueError("values are constant; normality is undefined")
    z = (x - mean) / std
    cdf = np.array([normal_cdf(v) for v in z])
    eps = 1e-15
    cdf = np.clip(cdf, eps, 1.0 - eps)
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2 * i - 1) * (np.log(cdf) + np.log(1.0 - cdf[::-1])))
    return float(a2 * (1.0 + 0.75 / n + 2.25 / n**2))


@dataclass(frozen=True)
class EntrywiseBoundReport:
    """Scaled 75th-percentile residual magnitudes per coordinate."""

    ratios: dict[int, float]
    flagged: list[int]
    excluded: list[int]
    threshold: float
    trials: int

    def to_dict(self) -> dict:
        return {
            "ratios": {str(k): v for k, v in self.ratios.items()},
            "flagged": self.flagged,
            "excluded": self.excluded,
            "threshold": self.threshold,
            "trials": self.trials,
        }


def check_entrywise_bound(residuals: np.ndarray, v_diag: np.ndarray, eta_n: float,
                          gap: float, threshold: float = 3.0,
                          variance_floor: float = 1e-12) -> EntrywiseBoundReport:
    """Check that residual coordinates stay within their predicted scale.

    For each coordinate k with limit variance above ``variance_floor``,
    reports the 75th percentile over trials of

        |r_k| / sqrt(eta_n * gap * V_kk * ln d)

    and flags coordinates exceeding ``threshold``. Coordinates with
    negligible limit variance are listed separately rather than scored.
    """
    res = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    trials, d = res.shape
    if trials < 200:
        raise ValueError(f"need at least 200 trials (got {trials})")
    v_diag = np.asarray(v_diag, dtype=np.float64).reshape(-1)
    if v_diag.shape[0] != d:
        raise ValueError("variance diagonal does not match residual dimension")
    if eta_n <= 0.0 or gap <= 0.0:
        raise ValueError("eta_n and gap must be positive")
    log_d = math.log(d) if d > 1 else 1.0
    ratios: dict[int, float] = {}
    flagged: list[int] = []
    excluded: list[int] = []
    for k in range(d):
        if v_diag[k] <= variance_floor:
            excluded.append(k)
            continue
        scale = math.sqrt(eta_n * gap * v_diag[k] * log_d)
        ratio = float(np.percentile(np.abs(res[:, k]), 75.0)) / scale
        ratios[k] = ratio
        if ratio > threshold:
            flagged.append(k)
    return EntrywiseBoundReport(ratios=ratios, flagged=flagged, excluded=excluded,
                                threshold=threshold, trials=trials)


@dataclass(frozen=True)
class CltReport:
    """Variance-matching ratios and normality statistics on strong coordinates."""

    coords: list[int]
    variance_ratios: dict[int, float]
    ad_statistics: dict[int, float]
    ad_pass: dict[int, bool]
    significance: float
    trials: int

    def to_dict(self) -> dict:
        return {
            "coords": self.coords,
            "variance_ratios": {str(k): v for k, v in self.variance_ratios.items()},
            "ad_statistics": {str(k): v for k, v in self.ad_statistics.items()},
            "ad_pass": {str(k): v for k, v in self.ad_pass.items()},
            "significance": self.significance,
            "trials": self.trials,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def check_clt(residuals: np.ndarray, v_diag: np.ndarray, eta_n: float, gap: float,
              variance_floor: float, significance: float = 0.01) -> CltReport:
    """Compare residual coordinate distributions against their Gaussian limit.

    Restricted to J = {k : V_kk >= variance_floor}. For each such k, the
    empirical variance of r_k / sqrt(eta_n * gap) is reported as a ratio to
    V_kk, together with an Anderson-Darling normality statistic; the
    normality outcome is informational, not a hard gate.
    """
    res = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    trials, d = res.shape
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials (got {trials})")
    v_diag = np.asarray(v_diag, dtype=np.float64).reshape(-1)
    if v_diag.shape[0] != d:
        raise ValueError("variance diagonal does not match residual dimension")
    coords = [k for k in range(d) if v_diag[k] >= variance_floor]
    if not coords:
        raise ValueError(f"no coordinate has limit variance >= {variance_floor}")
    if significance not in AD_CRITICAL:
        raise ValueError(f"significance must be one of {sorted(AD_CRITICAL)}")
    critical = AD_CRITICAL[significance]
    scale = math.sqrt(eta_n * gap)
    ratios: dict[int, float] = {}
    stats: dict[int, float] = {}
    passes: dict[int, bool] = {}
    for k in coords:
        scaled = res[:, k] / scale
        ratios[k] = float(np.var(scaled)) / float(v_diag[k])
        stat = anderson_darling(scaled)
        stats[k] = stat
        passes[k] = stat < critical
    return CltReport(coords=coords, variance_ratios=ratios, ad_statistics=stats,
                     ad_pass=passes, significance=significance, trials=trials)
