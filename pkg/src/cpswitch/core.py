"""Domain types, model presets and closed-form rate bounds for the switching contact process."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

VARIANTS = ("plain", "cpb", "cpid")
PRESETS = ("cp", "cpd_microbial", "cpd_social", "cpree", "cpb", "cpid")

# map-based site states, indexed as 2 * infected + dormant
STATES = ((0, "a"), (0, "d"), (1, "a"), (1, "d"))


class _Instant:
    """Symbolic infinite recovery rate (dormant infected sites heal at once)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INSTANT"

    def __reduce__(self):
        return (_Instant, ())


INSTANT = _Instant()


class RateError(ValueError):
    """Raised when a rate set violates a precondition."""


@dataclass(frozen=True)
class LatticeSpec:
    """Finite box or torus in Z^d with an explicit neighbourhood offset list."""

    shape: tuple[int, ...]
    boundary: str = "periodic"
    offsets: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if not shape or any(s < 1 for s in shape):
            raise ValueError(f"side lengths must be positive, got {self.shape}")
        object.__setattr__(self, "shape", shape)
        if self.boundary not in ("periodic", "free"):
            raise ValueError(f"boundary must be 'periodic' or 'free', got {self.boundary!r}")
        d = len(shape)
        if self.offsets is None:
            offs = []
            for axis in range(d):
                for sign in (1, -1):
                    z = [0] * d
                    z[axis] = sign
                    offs.append(tuple(z))
        else:
            offs = [tuple(int(c) for c in z) for z in self.offsets]
        if not offs:
            raise ValueError("neighbourhood must be nonempty")
        for z in offs:
            if len(z) != d:
                raise ValueError(f"offset {z} has wrong dimension (expected {d})")
            if not any(z):
                raise ValueError("neighbourhood must not contain the zero vector")
        object.__setattr__(self, "offsets", tuple(offs))

    @classmethod
    def ring(cls, n: int, boundary: str = "periodic") -> "LatticeSpec":
        return cls((n,), boundary)

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def n_sites(self) -> int:
        return math.prod(self.shape)

    @property
    def neighborhood_size(self) -> int:
        return len(self.offsets)

    def coords(self, site: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(site, self.shape))

    def index(self, coords: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def shift(self, site: int, offset: Sequence[int]) -> int:
        """Site reached from ``site`` by ``offset``; -1 if it leaves a free box."""
        c = np.add(self.coords(site), offset)
        if self.boundary == "periodic":
            c = np.mod(c, self.shape)
        elif np.any(c < 0) or np.any(c >= self.shape):
            return -1
        return self.index(c)

    def neighbor_table(self) -> np.ndarray:
        """(n_sites, |N|) array: entry [x, j] is x + offsets[j], or -1 off a free box."""
        return _neighbor_table(self)

    def edges(self) -> np.ndarray:
        """Directed (source, target) pairs, one per site and offset that stays on the lattice."""
        return _edges(self)

    def reversed(self) -> "LatticeSpec":
        return LatticeSpec(self.shape, self.boundary, tuple(tuple(-c for c in z) for z in self.offsets))

    def sites(self) -> range:
        return range(self.n_sites)


_TABLE_CACHE: dict = {}


def _neighbor_table(lat: LatticeSpec) -> np.ndarray:
    key = ("nbr", lat)
    if key not in _TABLE_CACHE:
        n = lat.n_sites
        coords = np.stack(np.unravel_index(np.arange(n), lat.shape), axis=1)
        shape = np.array(lat.shape)
        table = np.empty((n, len(lat.offsets)), dtype=np.int64)
        for j, z in enumerate(lat.offsets):
            c = coords + np.array(z)
            if lat.boundary == "periodic":
                c = np.mod(c, shape)
                table[:, j] = np.ravel_multi_index(tuple(c.T), lat.shape)
            else:
                ok = np.all((c >= 0) & (c < shape), axis=1)
                col = np.full(n, -1, dtype=np.int64)
                col[ok] = np.ravel_multi_index(tuple(c[ok].T), lat.shape)
                table[:, j] = col
        table.setflags(write=False)
        _TABLE_CACHE[key] = table
    return _TABLE_CACHE[key]


def _edges(lat: LatticeSpec) -> np.ndarray:
    key = ("edges", lat)
    if key not in _TABLE_CACHE:
        table = _neighbor_table(lat)
        src = np.repeat(np.arange(lat.n_sites), table.shape[1])
        dst = table.ravel()
        ok = dst >= 0
        e = np.stack([src[ok], dst[ok]], axis=1).astype(np.int64)
        e.setflags(write=False)
        _TABLE_CACHE[key] = e
    return _TABLE_CACHE[key]


@dataclass(frozen=True)
class SiteState:
    infected: int
    activity: str

    def __post_init__(self):
        if self.infected not in (0, 1) or self.activity not in ("a", "d"):
            raise ValueError(f"not a state of F: ({self.infected}, {self.activity})")

    @property
    def code(self) -> int:
        return 2 * self.infected + (self.activity == "d")


@dataclass(frozen=True)
class Configuration:
    """Set-based state: infected sites and active sites of one lattice."""

    lattice: LatticeSpec
    infected: frozenset
    active: frozenset

    def __post_init__(self):
        object.__setattr__(self, "infected", frozenset(int(x) for x in self.infected))
        object.__setattr__(self, "active", frozenset(int(x) for x in self.active))
        n = self.lattice.n_sites
        for s in (self.infected, self.active):
            if any(x < 0 or x >= n for x in s):
                raise ValueError("configuration contains sites outside the lattice")

    @classmethod
    def from_arrays(cls, lattice, infected, active) -> "Configuration":
        return cls(lattice, frozenset(np.flatnonzero(infected).tolist()), frozenset(np.flatnonzero(active).tolist()))

    def state(self, x: int) -> SiteState:
        return SiteState(int(x in self.infected), "a" if x in self.active else "d")

    def check_variant(self, variant: str) -> None:
        if variant == "cpb" and not self.infected <= self.active:
            raise ValueError("CPB configurations cannot contain infected dormant sites")

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return site_mask(self.lattice, self.infected), site_mask(self.lattice, self.active)


def site_mask(lattice: LatticeSpec, sites: Iterable[int] | np.ndarray | None) -> np.ndarray:
    """Boolean indicator over lattice sites for a site set (or pass-through for an indicator)."""
    n = lattice.n_sites
    if sites is None:
        return np.zeros(n, dtype=bool)
    if isinstance(sites, np.ndarray) and sites.dtype == bool:
        if sites.shape != (n,):
            raise ValueError(f"indicator has shape {sites.shape}, lattice has {n} sites")
        return sites.copy()
    out = np.zeros(n, dtype=bool)
    idx = np.fromiter((int(x) for x in sites), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("site index outside the lattice")
    out[idx] = True
    return out


def _check_rate(name, value, allow_instant=False):
    if value is INSTANT:
        if not allow_instant:
            raise RateError(f"{name} cannot be INSTANT")
        return value
    v = float(value)
    if not math.isfinite(v):
        raise RateError(f"{name} must be finite (use INSTANT for blocking recovery)")
    if v < 0:
        raise RateError(f"{name} must be ≥ 0")
    return v


@dataclass(frozen=True)
class RateSet:
    """Infection, recovery and switching rates plus the model variant.

    Infection rates are per directed neighbour pair; ``lam_ad`` is the rate at
    which an infected active site infects a healthy dormant neighbour.
    """

    lam_aa: float
    lam_ad: float
    lam_da: float
    lam_dd: float
    delta_a: float
    delta_d: object
    sigma0: float = 0.0
    sigma1: float = 0.0
    rho0: float = 0.0
    rho1: float = 0.0
    variant: str = "plain"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise RateError(f"unknown variant {self.variant!r}")
        for name in ("lam_aa", "lam_ad", "lam_da", "lam_dd", "delta_a", "sigma0", "sigma1", "rho0", "rho1"):
            object.__setattr__(self, name, _check_rate(name, getattr(self, name)))
        dd = _check_rate("delta_d", self.delta_d, allow_instant=self.variant == "cpb")
        object.__setattr__(self, "delta_d", dd)
        if self.variant == "cpb":
            if dd is not INSTANT:
                raise RateError("the cpb variant requires delta_d = INSTANT")
            if self.lam_ad or self.lam_da or self.lam_dd:
                raise RateError("the cpb variant only has active-to-active infection")
        if self.variant == "cpid" and (self.lam_da or self.lam_dd):
            raise RateError("in the cpid variant dormant infections do not spread")

    @classmethod
    def symmetric(cls, lam_aa, lam_ad, lam_da, lam_dd, delta_a, delta_d, sigma, rho, variant="plain"):
        return cls(lam_aa, lam_ad, lam_da, lam_dd, delta_a, delta_d, sigma, sigma, rho, rho, variant)

    @property
    def lambdas(self) -> tuple[float, float, float, float]:
        return (self.lam_aa, self.lam_ad, self.lam_da, self.lam_dd)

    @property
    def is_symmetric(self) -> bool:
        return self.sigma0 == self.sigma1 and self.rho0 == self.rho1

    @property
    def sigma(self) -> float:
        self.require_symmetric()
        return self.sigma0

    @property
    def rho(self) -> float:
        self.require_symmetric()
        return self.rho0

    @property
    def has_instant(self) -> bool:
        return self.delta_d is INSTANT

    def require_symmetric(self) -> None:
        if not self.is_symmetric:
            raise RateError("operation requires symmetric switching (sigma0 = sigma1, rho0 = rho1)")

    def require_finite(self) -> None:
        if self.has_instant:
            raise RateError("operation requires finite rates (delta_d is INSTANT)")

    def with_switching(self, sigma: float, rho: float) -> "RateSet":
        return replace(self, sigma0=sigma, sigma1=sigma, rho0=rho, rho1=rho)

    def with_lambdas(self, lam_aa, lam_ad, lam_da, lam_dd) -> "RateSet":
        return replace(self, lam_aa=lam_aa, lam_ad=lam_ad, lam_da=lam_da, lam_dd=lam_dd)

    def scaled_switching(self, c: float) -> "RateSet":
        return replace(self, sigma0=self.sigma0 * c, sigma1=self.sigma1 * c, rho0=self.rho0 * c, rho1=self.rho1 * c)

    def swapped_mixed(self) -> "RateSet":
        """Same rates with lam_ad and lam_da exchanged (the dual process)."""
        return replace(self, lam_ad=self.lam_da, lam_da=self.lam_ad)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("lam_aa", "lam_ad", "lam_da", "lam_dd", "delta_a", "delta_d",
                                          "sigma0", "sigma1", "rho0", "rho1", "variant")}
        if d["delta_d"] is INSTANT:
            d["delta_d"] = "INSTANT"
        return d


@dataclass(frozen=True)
class EffectiveRates:
    lam_star: float
    delta_star: float
    lam_max: float
    delta_bar: float
    lam_bar: float
    delta_max: float
    lam_bar_incoming: float = field(default=float("nan"))


def alpha(rates: RateSet) -> float:
    """Stationary probability that a site is active."""
    rates.require_symmetric()
    s, r = rates.sigma0, rates.rho0
    if s + r <= 0:
        raise RateError("alpha is undefined when sigma + rho = 0")
    return r / (s + r)


def effective_fast_rates(rates: RateSet) -> tuple[float, float]:
    """Infection and recovery rate of the CP obtained in the fast-switching limit."""
    rates.require_finite()
    if rates.variant != "plain":
        raise RateError("fast-switching rates are defined for the plain variant only")
    a = alpha(rates)
    lam = a * a * rates.lam_aa + a * (1 - a) * (rates.lam_ad + rates.lam_da) + (1 - a) ** 2 * rates.lam_dd
    delta = a * rates.delta_a + (1 - a) * rates.delta_d
    return lam, delta


def _modulated_rate(r1: float, r0: float, leave1: float, leave0: float) -> float:
    # Largest homogeneous Poisson rate embeddable in a Poisson stream whose rate
    # switches between r1 (left at rate leave1) and r0 (left at rate leave0).
    # The cross term uses the switching rate out of the higher-rate state; the
    # result is the smallest eigenvalue of the chain killed at rate r1 / r0.
    if r1 == r0:
        return float(r1)
    if r1 < r0:
        r1, r0, leave1, leave0 = r0, r1, leave0, leave1
    gap = r1 - r0
    s = leave1 + leave0
    root = math.sqrt((gap - s) ** 2 + 4.0 * leave1 * gap)
    # determinant over the larger eigenvalue: no cancellation when s dominates
    det = r1 * r0 + r1 * leave0 + r0 * leave1
    return max(2.0 * det / (r1 + r0 + s + root), 0.0)


def dominating_cp_rates(rates: RateSet) -> tuple[float, float]:
    """(lam_max, delta_bar) of the basic CP that dominates the process."""
    rates.require_finite()
    rates.require_symmetric()
    lam_max = max(rates.lambdas)
    delta_bar = _modulated_rate(rates.delta_a, rates.delta_d, rates.sigma0, rates.rho0)
    return lam_max, delta_bar


def lambda_bar(lam0: float, lam1: float, sigma: float, rho: float, k: int) -> float:
    """Rate of each of k independent Poisson streams embeddable in k streams
    modulated by a two-state chain (state 1 left at rate sigma, state 0 at rate rho;
    stream i runs at rate lam1 in state 1 and lam0 in state 0)."""
    for name, v in (("lam0", lam0), ("lam1", lam1), ("sigma", sigma), ("rho", rho)):
        _check_rate(name, v)
    if sigma + rho <= 0:
        raise RateError("lambda_bar requires sigma + rho > 0")
    if int(k) != k or k < 1:
        raise RateError("k must be a positive integer")
    return _modulated_rate(float(lam1), float(lam0), sigma / k, rho / k)


def dominated_cp_rates(rates: RateSet, neighborhood_size: int, orientation: str = "outgoing") -> tuple[float, float]:
    """(lam_bar, delta_max) of the basic CP dominated by the process."""
    rates.require_finite()
    rates.require_symmetric()
    if orientation == "outgoing":
        lam_a = min(rates.lam_aa, rates.lam_ad)
        lam_d = min(rates.lam_da, rates.lam_dd)
    elif orientation == "incoming":
        lam_a = min(rates.lam_aa, rates.lam_da)
        lam_d = min(rates.lam_ad, rates.lam_dd)
    else:
        raise ValueError(f"orientation must be 'outgoing' or 'incoming', got {orientation!r}")
    if lam_a == lam_d:
        lam = lam_a
    else:
        lam = lambda_bar(lam_d, lam_a, rates.sigma0, rates.rho0, neighborhood_size)
    return lam, max(rates.delta_a, rates.delta_d)


def effective_rates(rates: RateSet, neighborhood_size: int) -> EffectiveRates:
    lam_star, delta_star = effective_fast_rates(rates)
    lam_max, delta_bar = dominating_cp_rates(rates)
    lam_bar, delta_max = dominated_cp_rates(rates, neighborhood_size, "outgoing")
    lam_in, _ = dominated_cp_rates(rates, neighborhood_size, "incoming")
    return EffectiveRates(lam_star, delta_star, lam_max, delta_bar, lam_bar, delta_max, lam_in)


def preset(name: str, lam: float, delta: float | None = None, *, delta_a: float | None = None,
           delta_d: float | None = None, sigma: float = 1.0, rho: float = 1.0) -> RateSet:
    """Named special cases.

    ``delta`` sets both recovery rates unless ``delta_a``/``delta_d`` are given.
    ``cpd_microbial`` forces delta_d = 0, ``cpd_social`` forces delta_d = delta_a,
    ``cpb`` normalises delta_a to 1 with instantaneous dormant recovery.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    da = delta_a if delta_a is not None else (delta if delta is not None else 1.0)
    dd = delta_d if delta_d is not None else (delta if delta is not None else da)
    if name == "cp":
        return RateSet.symmetric(lam, lam, lam, lam, da, dd, sigma, rho)
    if name == "cpd_microbial":
        return RateSet.symmetric(lam, 0.0, 0.0, 0.0, da, 0.0, sigma, rho)
    if name == "cpd_social":
        return RateSet.symmetric(lam, 0.0, 0.0, 0.0, da, da, sigma, rho)
    if name == "cpree":
        return RateSet.symmetric(lam, lam, lam, lam, da, dd, sigma, rho)
    if name == "cpb":
        return RateSet.symmetric(lam, 0.0, 0.0, 0.0, 1.0, INSTANT, sigma, rho, variant="cpb")
    # cpid: active infections reach healthy neighbours of either type, landing active
    return RateSet.symmetric(lam, lam, 0.0, 0.0, da, dd, sigma, rho, variant="cpid")


def param_dominates(lower: RateSet, upper: RateSet) -> bool:
    """True iff ``upper`` has all infection rates ≥ and all recovery rates ≤ those of ``lower``."""
    if (lower.sigma0, lower.sigma1, lower.rho0, lower.rho1) != (upper.sigma0, upper.sigma1, upper.rho0, upper.rho1):
        raise RateError("monotone comparison requires identical switching rates")
    if lower.variant != upper.variant:
        raise RateError("monotone comparison requires the same variant")
    if any(u < l for l, u in zip(lower.lambdas, upper.lambdas)):
        return False
    for lo, up in ((lower.delta_a, upper.delta_a), (lower.delta_d, upper.delta_d)):
        if lo is INSTANT or up is INSTANT:
            if up is INSTANT and lo is not INSTANT:
                return False
            continue
        if up > lo:
            return False
    return True


def all_configurations(lattice: LatticeSpec):
    """Iterate every (infected, active) pair of site sets (tiny lattices only)."""
    n = lattice.n_sites
    for codes in itertools.product(range(4), repeat=n):
        inf = [x for x, c in enumerate(codes) if c >= 2]
        act = [x for x, c in enumerate(codes) if c % 2 == 0]
        yield Configuration(lattice, inf, act)
