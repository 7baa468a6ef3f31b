"""Survival-ratio sweeps, critical-parameter bracketing and density curves."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .core import LatticeSpec, RateError, RateSet, preset
from .dynamics import run_ensemble

HORIZON_NAMES = ("short", "moderate", "long")


def preset_template(name: str, **kwargs) -> Callable[[float], RateSet]:
    """λ -> preset(name, λ, **kwargs), usable as a sweep template."""

    def template(lam: float) -> RateSet:
        return preset(name, lam, **kwargs)

    template.description = {"preset": name, **kwargs}
    return template


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + confidence / 2))
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class SweepResult:
    """Survival ratios per (λ, horizon) with the per-replica indicators behind them."""

    lambdas: np.ndarray
    horizons: np.ndarray
    survived: np.ndarray  # (R, L, H) bool
    seed: int
    common_random_numbers: bool
    lattice: LatticeSpec
    rates: list[dict]
    extra: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return int(self.survived.shape[0])

    @property
    def ratios(self) -> np.ndarray:
        return self.survived.mean(axis=0)

    def column_names(self) -> list[str]:
        if self.horizons.size == len(HORIZON_NAMES):
            return list(HORIZON_NAMES)
        return [f"T={h:g}" for h in self.horizons]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L"] + self.column_names())
        for lam, row in zip(self.lambdas.tolist(), self.ratios):
            w.writerow([repr(lam)] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "lattice": {"shape": list(self.lattice.shape), "boundary": self.lattice.boundary,
                        "offsets": [list(z) for z in self.lattice.offsets]},
            "lambdas": self.lambdas.tolist(),
            "horizons": self.horizons.tolist(),
            "columns": self.column_names(),
            "replicas": self.replicas,
            "seed": self.seed,
            "common_random_numbers": self.common_random_numbers,
            "initial_infection": [0],
            "initial_activity": "stationary",
            "rates": self.rates,
            **self.extra,
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True, default=str) + "\n"


def _rates_meta(r: RateSet) -> dict:
    return {k: (str(v) if not isinstance(v, (int, float, str)) else v) for k, v in r.as_dict().items()}


def survival_sweep(lattice: LatticeSpec, rates_template: Callable[[float], RateSet], lambdas: Sequence[float],
                   horizons: Sequence[float], replicas: int, seed: int, common_random_numbers: bool = True,
                   origin: int = 0, n_jobs: int = 1) -> SweepResult:
    """Fraction of replicas still infected at each horizon, single infected site at the origin.

    With common random numbers all λ values run in lockstep on the same
    randomness, which makes survival pathwise non-decreasing in λ. Otherwise
    each λ gets its own replica streams.
    """
    lams = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    hs = np.asarray(horizons, dtype=np.float64).reshape(-1)
    if lams.size == 0:
        raise ValueError("lambda grid must be nonempty")
    if hs.size == 0 or np.any(np.diff(hs) <= 0) or hs[0] <= 0:
        raise ValueError("horizons must be positive and strictly increasing")
    if replicas < 1:
        raise ValueError("need at least one replica")
    rate_list = [rates_template(float(l)) for l in lams]
    T = float(hs[-1])
    if common_random_numbers:
        ens = run_ensemble(lattice, rate_list, [origin], None, T, replicas, seed,
                           initial_activity="stationary", n_jobs=n_jobs)
        ext = ens.extinction  # (R, L)
    else:
        cols = []
        for i, r in enumerate(rate_list):
            ens = run_ensemble(lattice, r, [origin], None, T, replicas, seed, initial_activity="stationary",
                               n_jobs=n_jobs, replica_offset=i * replicas)
            cols.append(ens.extinction[:, 0])
        ext = np.stack(cols, axis=1)
    survived = ext[:, :, None] > hs[None, None, :]
    return SweepResult(lams, hs, survived, int(seed), bool(common_random_numbers), lattice,
                       [_rates_meta(r) for r in rate_list])


@dataclass(frozen=True)
class CriticalEstimate:
    low: float
    high: float
    ratio_low: float
    ratio_high: float
    ci_low: tuple[float, float]  # binomial interval of the survival ratio at ``low``
    ci_high: tuple[float, float]
    iterations: int
    evaluations: tuple[tuple[float, float], ...]  # (λ, ratio) in evaluation order

    @property
    def width(self) -> float:
        return self.high - self.low

    def intersects(self, a: float, b: float) -> bool:
        return self.low <= b and a <= self.high


def estimate_critical(lattice: LatticeSpec, rates_template: Callable[[float], RateSet], bracket: tuple[float, float],
                      ratio_threshold: float = 0.05, T: float = 2500.0, replicas: int = 200, max_iters: int = 6,
                      width: float = 0.0, seed: int = 0, origin: int = 0, confidence: float = 0.95,
                      n_jobs: int = 1) -> CriticalEstimate:
    """Bisection on λ for the point where the survival ratio at T crosses the threshold.

    Every evaluation reuses the same replica streams. The bracket must
    straddle the threshold: ratio(low) < threshold <= ratio(high).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must satisfy low < high")
    evals: list[tuple[float, float]] = []
    counts: dict[float, int] = {}

    def survivors(lam):
        if lam not in counts:
            ens = run_ensemble(lattice, rates_template(lam), [origin], None, T, replicas, seed,
                               initial_activity="stationary", n_jobs=n_jobs)
            counts[lam] = int(ens.survived(T)[:, 0].sum())
            evals.append((lam, counts[lam] / replicas))
        return counts[lam]

    r_lo, r_hi = survivors(lo) / replicas, survivors(hi) / replicas
    if not (r_lo < ratio_threshold <= r_hi):
        raise RateError(f"bracket does not straddle the threshold {ratio_threshold}: "
                        f"ratio({lo:g})={r_lo:g}, ratio({hi:g})={r_hi:g}")
    it = 0
    while it < max_iters and hi - lo > width:
        mid = 0.5 * (lo + hi)
        if survivors(mid) / replicas >= ratio_threshold:
            hi = mid
        else:
            lo = mid
        it += 1
    c_lo, c_hi = counts[lo], counts[hi]
    return CriticalEstimate(lo, hi, c_lo / replicas, c_hi / replicas, wilson_interval(c_lo, replicas, confidence),
                            wilson_interval(c_hi, replicas, confidence), it, tuple(evals))


@dataclass(frozen=True)
class DensityCurve:
    times: np.ndarray
    density: np.ndarray
    half_width: np.ndarray  # 95% normal half-widths
    replicas: int

    def increases(self, slack: float = 2.0) -> np.ndarray:
        """Indices i where density[i+1] exceeds density[i] by more than slack half-widths."""
        tol = slack * np.maximum(self.half_width[1:], self.half_width[:-1])
        return np.flatnonzero(np.diff(self.density) > tol)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "density", "half_width"])
        for row in zip(self.times.tolist(), self.density.tolist(), self.half_width.tolist()):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def density_from_full(lattice: LatticeSpec, rates: RateSet, times: Sequence[float], replicas: int, seed: int,
                      n_jobs: int = 1) -> DensityCurve:
    """Estimate P(0 infected at t) from the all-infected start with stationary types.

    On a torus every site has the law of the origin, so the infected
    fraction is used as the (lower-variance) per-replica estimator.
    """
    rates.require_symmetric()
    if rates.variant != "plain":
        raise RateError("density_from_full needs plain-variant rates")
    ts = np.asarray(times, dtype=np.float64).reshape(-1)
    if ts.size == 0 or np.any(np.diff(ts) < 0) or ts[0] < 0:
        raise ValueError("times must be sorted and non-negative")
    T = float(ts[-1]) if ts[-1] > 0 else 1.0
    n = lattice.n_sites
    periodic = lattice.boundary == "periodic"
    ens = run_ensemble(lattice, rates, np.arange(n), None, T, replicas, seed, sample_times=ts,
                       window=None if periodic else [0], initial_activity="stationary", n_jobs=n_jobs)
    if periodic:
        per_rep = ens.infected_count[:, :, 0] / n
    else:
        per_rep = (ens.codes[:, :, 0, 0] >= 2).astype(np.float64)
    mean = per_rep.mean(axis=0)
    sd = per_rep.std(axis=0, ddof=1) if replicas > 1 else np.zeros_like(mean)
    return DensityCurve(ts, mean, 1.96 * sd / math.sqrt(replicas), replicas)
