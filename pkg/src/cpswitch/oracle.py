"""Exact transient laws on tiny lattices.

States are encoded with one base-4 digit per site (base 3 for the blocking
variant, where infected dormant sites do not exist); digit ``2 * infected +
dormant``, site 0 is the least significant digit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .core import INSTANT, LatticeSpec, RateSet, site_mask

MAX_SITES = 8


@dataclass(frozen=True)
class GeneratorMatrix:
    lattice: LatticeSpec
    rates: RateSet
    Q: sp.csr_matrix
    base: int
    digits: np.ndarray  # (n_states, n_sites) site codes

    @property
    def n_states(self) -> int:
        return self.Q.shape[0]

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def encode(self, infected, active) -> int:
        inf = site_mask(self.lattice, infected)
        act = site_mask(self.lattice, active)
        codes = 2 * inf.astype(int) + (~act).astype(int)
        if self.base == 3 and np.any(codes == 3):
            raise ValueError("state (1,d) does not exist in the blocking variant")
        return int(np.dot(codes, self.base ** np.arange(codes.size)))

    def infected(self) -> np.ndarray:
        """(n_states, n_sites) infected indicator."""
        return self.digits >= 2

    def active(self) -> np.ndarray:
        return self.digits % 2 == 0


def generator_matrix(lattice: LatticeSpec, rates: RateSet) -> GeneratorMatrix:
    """Sparse CTMC generator of the chosen variant on at most 8 sites."""
    n = lattice.n_sites
    if n > MAX_SITES:
        raise ValueError(f"the exact oracle supports at most {MAX_SITES} sites, got {n}")
    cpb = rates.variant == "cpb"
    cpid = rates.variant == "cpid"
    base = 3 if cpb else 4
    N = base ** n
    idx = np.arange(N, dtype=np.int64)
    powers = base ** np.arange(n, dtype=np.int64)
    digits = (idx[:, None] // powers[None, :]) % base
    inf = digits >= 2
    dorm = digits % 2 == 1
    nbr = lattice.neighbor_table()

    rows, cols, vals = [], [], []

    def add(mask, x, new_code, rate):
        if np.isscalar(rate):
            if rate == 0:
                return
            rate = np.full(N, float(rate))
        sel = mask & (rate > 0)
        if not sel.any():
            return
        src = idx[sel]
        dst = src + (new_code - digits[sel, x]) * powers[x]
        rows.append(src)
        cols.append(dst)
        vals.append(rate[sel])

    dd = 0.0 if rates.delta_d is INSTANT else rates.delta_d
    for x in range(n):
        n1a = np.zeros(N)
        n1d = np.zeros(N)
        for y in nbr[x]:
            if y < 0:
                continue
            n1a += inf[:, y] & ~dorm[:, y]
            n1d += inf[:, y] & dorm[:, y]
        ha = digits[:, x] == 0
        hd = digits[:, x] == 1
        ia = digits[:, x] == 2
        id_ = digits[:, x] == 3
        # recovery
        add(ia, x, 0, rates.delta_a)
        add(id_, x, 1, dd)
        # switching
        add(ha, x, 1, rates.sigma0)
        add(hd, x, 0, rates.rho0)
        if cpb:
            add(ia, x, 1, rates.sigma1)  # switching off heals at once
        else:
            add(ia, x, 3, rates.sigma1)
            add(id_, x, 2, rates.rho1)
        # infection
        if cpid:
            add(ha, x, 2, rates.lam_aa * n1a)
            add(hd, x, 2, rates.lam_ad * n1a)
        else:
            add(ha, x, 2, rates.lam_aa * n1a + rates.lam_da * n1d)
            if not cpb:
                add(hd, x, 3, rates.lam_ad * n1a + rates.lam_dd * n1d)

    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, np.int64)
        v = np.zeros(0)
    off = sp.coo_matrix((v, (r, c)), shape=(N, N)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sp.diags(diag)).tocsr()
    return GeneratorMatrix(lattice, rates, Q, base, digits)


def _check_distribution(p: np.ndarray, n_states: int) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (n_states,):
        raise ValueError(f"initial distribution must have length {n_states}")
    if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("initial vector is not a probability distribution")
    return p


def transient_distribution(G: GeneratorMatrix, initial: np.ndarray, t: float, tol: float = 1e-13) -> np.ndarray:
    """Law at time t by uniformisation; truncation mass below ``tol``."""
    p0 = _check_distribution(initial, G.n_states)
    if t < 0:
        raise ValueError("t must be non-negative")
    q = float(-G.Q.diagonal().min()) if G.n_states else 0.0
    if t == 0 or q == 0:
        return p0.copy()
    qt = q * t
    P = (sp.identity(G.n_states, format="csr") + G.Q / q).T.tocsr()
    kmax = int(poisson.isf(tol, qt)) + 2
    weights = poisson.pmf(np.arange(kmax + 1), qt)
    v = p0.copy()
    out = weights[0] * v
    for k in range(1, kmax + 1):
        v = P @ v
        out += weights[k] * v
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def expm_taylor(A: np.ndarray, tol: float = 1e-16) -> np.ndarray:
    """exp(A) for a small dense matrix by scaling and squaring with a Taylor series."""
    A = np.asarray(A, dtype=np.float64)
    norm = np.abs(A).sum(axis=1).max() if A.size else 0.0
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    B = A / (2.0 ** s)
    term = np.eye(A.shape[0])
    out = term.copy()
    for k in range(1, 60):
        term = term @ B / k
        out += term
        if np.abs(term).max() < tol:
            break
    for _ in range(s):
        out = out @ out
    return out


def transient_distribution_expm(G: GeneratorMatrix, initial: np.ndarray, t: float) -> np.ndarray:
    p0 = _check_distribution(initial, G.n_states)
    return p0 @ expm_taylor(G.dense() * t)


def exact_marginal(G: GeneratorMatrix, initial: np.ndarray, t: float,
                   predicate: Callable[[np.ndarray, np.ndarray], np.ndarray] | np.ndarray) -> float:
    """Probability of a state predicate at time t.

    ``predicate`` is a boolean vector over states, or a callable receiving the
    (n_states, n_sites) infected and active indicators and returning one.
    """
    p = transient_distribution(G, initial, t)
    mask = predicate(G.infected(), G.active()) if callable(predicate) else np.asarray(predicate, bool)
    return float(p[mask].sum())


def point_distribution(G: GeneratorMatrix, infected, active) -> np.ndarray:
    p = np.zeros(G.n_states)
    p[G.encode(infected, active)] = 1.0
    return p


def product_initial(G: GeneratorMatrix, infected, p_active: float) -> np.ndarray:
    """Fixed infected set, independent Bernoulli(p_active) types (blocking variant:
    infected sites drawn dormant recover at once)."""
    inf0 = site_mask(G.lattice, infected)
    act = G.active()
    inf = G.infected()
    w = np.where(act, p_active, 1.0 - p_active).prod(axis=1)
    if G.base == 3:
        ok = np.all(inf == (inf0[None, :] & act), axis=1)
    else:
        ok = np.all(inf == inf0[None, :], axis=1)
    p = np.where(ok, w, 0.0)
    return p / p.sum()
