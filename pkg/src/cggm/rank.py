"""Extended rank likelihood latent layer.

Observed columns are reduced to integer rank codes: discrete columns keep
their level codes ``0..d-1``; continuous columns are replaced by the dense
rank of their distinct values, so tied values share a code and impose no
mutual constraint. The latent value of a cell must lie strictly between the
largest latent value of any lower code and the smallest latent value of any
higher code in the same column. Missing cells (code ``-1``) are unbounded.

Per-code minima and maxima of the latent column are maintained while
cells are resampled, which makes each bound query O(1).
"""

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.stats import rankdata

from .mvn import std_normal_cdf, std_normal_quantile

log = logging.getLogger(__name__)

KINDS = ("binary", "ordinal", "continuous")


@dataclass
class ObservedData:
    """``n x p`` observations with per-column kinds; ``NaN`` marks missing.

    Discrete (binary/ordinal) columns hold level codes ``0..levels[v]-1``.
    """

    x: np.ndarray
    kinds: list
    names: list = None
    levels: list = None
    codes: np.ndarray = field(init=False, repr=False)
    n_codes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError("observations must be a 2-d array")
        n, p = x.shape
        self.x = x
        self.kinds = list(self.kinds)
        if len(self.kinds) != p:
            raise ValueError(f"{len(self.kinds)} kinds given for {p} columns")
        if self.names is None:
            self.names = [f"V{v + 1}" for v in range(p)]
        levels = list(self.levels) if self.levels is not None else [None] * p
        codes = np.full((n, p), -1, dtype=np.int64)
        n_codes = np.zeros(p, dtype=np.int64)
        for v, kind in enumerate(self.kinds):
            if kind not in KINDS:
                raise ValueError(f"unknown variable kind {kind!r}")
            col = x[:, v]
            seen = ~np.isnan(col)
            if n > 0 and not seen.any():
                raise ValueError(f"column {self.names[v]} has no observed values")
            if kind == "continuous":
                _, inv = np.unique(col[seen], return_inverse=True)
                codes[seen, v] = inv
                n_codes[v] = inv.max() + 1 if seen.any() else 0
                continue
            vals = col[seen]
            if np.any(vals != np.round(vals)) or np.any(vals < 0):
                raise ValueError(f"column {self.names[v]} must hold integer codes >= 0")
            d = levels[v] if levels[v] is not None else (2 if kind == "binary" else
                                                         int(vals.max()) + 1 if len(vals) else 2)
            if kind == "binary" and d != 2:
                raise ValueError(f"binary column {self.names[v]} declared with {d} levels")
            if d < 2:
                raise ValueError(f"discrete column {self.names[v]} needs at least 2 levels")
            if len(vals) and vals.max() >= d:
                raise ValueError(f"column {self.names[v]} has codes beyond {d - 1}")
            levels[v] = int(d)
            codes[seen, v] = vals.astype(np.int64)
            n_codes[v] = d
        self.levels = levels
        self.codes = codes
        self.n_codes = n_codes

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def discrete(self):
        return all(k != "continuous" for k in self.kinds)

    def subsample(self, size, rng):
        rows = np.sort(np.random.default_rng(rng).choice(self.n, size=size, replace=False))
        return ObservedData(self.x[rows], self.kinds, self.names, self.levels)


def empirical_cdf(data, v):
    """``F_hat_v(0..d-1)`` over the observed cells of a discrete column."""
    codes = data.codes[:, v]
    codes = codes[codes >= 0]
    counts = np.bincount(codes, minlength=data.n_codes[v]).astype(float)
    return np.cumsum(counts) / counts.sum()


def latent_bounds(x_col, z_col, j):
    """Direct evaluation of the bounds ``(L, U)`` for row ``j`` (0-based)."""
    x_col = np.asarray(x_col, dtype=float)
    z_col = np.asarray(z_col, dtype=float)
    if len(x_col) != len(z_col):
        raise ValueError("column lengths differ")
    xj = x_col[j]
    if np.isnan(xj):
        return -np.inf, np.inf
    seen = ~np.isnan(x_col)
    below = seen & (x_col < xj)
    above = seen & (x_col > xj)
    lo = z_col[below].max() if below.any() else -np.inf
    hi = z_col[above].min() if above.any() else np.inf
    return float(lo), float(hi)


def init_latents(data):
    """Midpoint normal scores; missing cells start at 0."""
    n, p = data.n, data.p
    z = np.zeros((n, p))
    for v in range(p):
        codes = data.codes[:, v]
        seen = codes >= 0
        m = int(seen.sum())
        if m == 0:
            continue
        if data.kinds[v] == "continuous":
            ranks = rankdata(data.x[seen, v], method="average")
            z[seen, v] = [std_normal_quantile(u) for u in (ranks - 0.5) / m]
        else:
            cdf = empirical_cdf(data, v)
            prev = np.concatenate([[0.0], cdf[:-1]])
            mid = (prev + cdf) / 2.0
            scores = np.array([std_normal_quantile(u) for u in mid])
            z[seen, v] = scores[codes[seen]]
        if len(np.unique(codes[seen])) < 2:
            log.warning("column %s has a single observed category; it imposes no constraints",
                        data.names[v])
    return z


@numba.njit(cache=True, inline="always")
def _tail(a, b, rng):
    # N(0,1) restricted to [a, b], a > 0 (Robert's exponential proposal).
    if b - a < 1.0 / a:
        while True:
            x = a + (b - a) * rng.random()
            if rng.random() <= math.exp(-0.5 * (x * x - a * a)):
                if a < x < b:
                    return x
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        x = a + rng.standard_exponential() / alpha
        if x >= b:
            continue
        if rng.random() <= math.exp(-0.5 * (x - alpha) ** 2):
            return x


# inlined: passing the Generator across a compiled call costs refcounting
@numba.njit(cache=True, inline="always")
def truncnorm_std(a, b, rng):
    """Standard normal draw restricted to the open interval ``(a, b)``."""
    if a >= 4.0:
        return _tail(a, b, rng)
    if b <= -4.0:
        return -_tail(-b, -a, rng)
    if (a <= 0.5 and b == np.inf) or (b >= -0.5 and a == -np.inf) or (a <= 0.0 <= b and b - a >= 1.0):
        # at least ~0.3 of the mass lies in (a, b): plain rejection is exact and cheap
        while True:
            x = rng.standard_normal()
            if a < x < b:
                return x
    if b == np.inf:
        return _tail(a, b, rng)
    if a == -np.inf:
        return -_tail(-b, -a, rng)
    u = rng.random()
    if a >= 0.0:
        qa = std_normal_cdf(-a)
        qb = std_normal_cdf(-b)
        x = -std_normal_quantile(qb + u * (qa - qb))
    else:
        pa = std_normal_cdf(a)
        pb = std_normal_cdf(b)
        x = std_normal_quantile(pa + u * (pb - pa))
    if not (a < x < b):
        # interval narrower than the CDF resolution
        if b - a > 0.0 and math.isfinite(a) and math.isfinite(b):
            m = a if a > 0.0 else (b if b < 0.0 else 0.0)
            for _ in range(10000):
                x = a + (b - a) * rng.random()
                if a < x < b and rng.random() <= math.exp(-0.5 * (x * x - m * m)):
                    return x
        x = 0.5 * (a + b)
    return x


@numba.njit(cache=True, inline="always")
def _truncnorm(mu, sigma, lo, hi, rng):
    return mu + sigma * truncnorm_std((lo - mu) / sigma, (hi - mu) / sigma, rng)


def sample_truncated_normal(mu, sigma, lo, hi, rng, size=None):
    """Draw(s) from ``N(mu, sigma^2)`` conditioned on ``lo < X < hi``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not lo < hi:
        raise ValueError(f"empty interval ({lo}, {hi})")
    if size is None:
        return float(_truncnorm(float(mu), float(sigma), float(lo), float(hi), rng))
    return _truncnorm_many(float(mu), float(sigma), float(lo), float(hi), int(size), rng)


@numba.njit(cache=True)
def _truncnorm_many(mu, sigma, lo, hi, size, rng):
    out = np.empty(size)
    for i in range(size):
        out[i] = _truncnorm(mu, sigma, lo, hi, rng)
    return out


class RankStructure:
    """Compiled-loop view of the rank constraints of an :class:`ObservedData`.

    Codes of column ``v`` get global ids ``offset[v] + code``; ``rows`` lists
    the rows of each global code between ``row_ptr[g]`` and ``row_ptr[g+1]``.
    """

    def __init__(self, data):
        p = data.p
        self.offset = np.concatenate([[0], np.cumsum(data.n_codes)]).astype(np.int64)
        total = int(self.offset[-1])
        gid = np.where(data.codes >= 0, data.codes + self.offset[:-1], -1).astype(np.int64)
        flat = gid.T.ravel()
        order = np.argsort(flat, kind="stable")
        order = order[flat[order] >= 0]
        counts = np.bincount(flat[flat >= 0], minlength=total)
        self.gid = gid
        self.rows = (order % max(data.n, 1)).astype(np.int64)
        self.row_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        prev = np.full(total, -1, dtype=np.int64)
        nxt = np.full(total, -1, dtype=np.int64)
        for v in range(p):
            last = -1
            for g in range(self.offset[v], self.offset[v + 1]):
                prev[g] = last
                if counts[g]:
                    last = g
            last = -1
            for g in range(self.offset[v + 1] - 1, self.offset[v] - 1, -1):
                nxt[g] = last
                if counts[g]:
                    last = g
        self.prev = prev
        self.next = nxt
        self.lvl_min = np.full(total, np.inf)
        self.lvl_max = np.full(total, -np.inf)

    def refresh(self, z):
        _refresh_extremes(z, self.gid, self.lvl_min, self.lvl_max)


@numba.njit(cache=True)
def _refresh_extremes(z, gid, lvl_min, lvl_max):
    lvl_min[:] = np.inf
    lvl_max[:] = -np.inf
    n, p = z.shape
    for j in range(n):
        for v in range(p):
            g = gid[j, v]
            if g >= 0:
                if z[j, v] < lvl_min[g]:
                    lvl_min[g] = z[j, v]
                if z[j, v] > lvl_max[g]:
                    lvl_max[g] = z[j, v]


@numba.njit(cache=True)
def resample_latents(z, scatter, gid, rows, row_ptr, prev, nxt, lvl_min, lvl_max, k, adj, rng):
    """One Gibbs sweep over all cells, ``v`` outer and ``j`` inner.

    Each cell is drawn from its normal full conditional given the other
    coordinates of its row, truncated to the current rank bounds. The per-code
    extremes are updated after every cell and row ``v`` of ``scatter``
    (``z.T @ z``) once column ``v`` is done.
    """
    n, p = z.shape
    nb = np.empty(p, dtype=np.int64)
    for v in range(p):
        m = 0
        for w in range(p):
            if w != v and adj[v, w]:
                nb[m] = w
                m += 1
        kvv = k[v, v]
        sigma = 1.0 / math.sqrt(kvv)
        for j in range(n):
            mu = 0.0
            for t in range(m):
                w = nb[t]
                mu -= k[v, w] * z[j, w]
            mu /= kvv
            g = gid[j, v]
            lo = -np.inf
            hi = np.inf
            if g >= 0:
                if prev[g] >= 0:
                    lo = lvl_max[prev[g]]
                if nxt[g] >= 0:
                    hi = lvl_min[nxt[g]]
            old = z[j, v]
            new = _truncnorm(mu, sigma, lo, hi, rng)
            z[j, v] = new
            if g >= 0:
                if new > lvl_max[g]:
                    lvl_max[g] = new
                elif old == lvl_max[g]:
                    mx = -np.inf
                    for r in range(row_ptr[g], row_ptr[g + 1]):
                        if z[rows[r], v] > mx:
                            mx = z[rows[r], v]
                    lvl_max[g] = mx
                if new < lvl_min[g]:
                    lvl_min[g] = new
                elif old == lvl_min[g]:
                    mn = np.inf
                    for r in range(row_ptr[g], row_ptr[g + 1]):
                        if z[rows[r], v] < mn:
                            mn = z[rows[r], v]
                    lvl_min[g] = mn
        # column v is final for this sweep: its scatter row is exact
        for w in range(p):
            acc = 0.0
            for j in range(n):
                acc += z[j, v] * z[j, w]
            scatter[v, w] = acc
            scatter[w, v] = acc


def in_constraint_set(z, data):
    """Whether every latent column respects the ordering of its codes."""
    for v in range(data.p):
        codes = data.codes[:, v]
        seen = codes >= 0
        if not seen.any():
            continue
        c = codes[seen]
        zc = z[seen, v]
        present = np.unique(c)
        mx = np.array([zc[c == g].max() for g in present])
        mn = np.array([zc[c == g].min() for g in present])
        if np.any(mx[:-1] >= mn[1:]):
            return False
    return True


def step1_resample_latents(state, rng):
    """Resample every latent cell once (mutates and returns ``state``)."""
    resample_latents(state.z, state.scatter, state.ranks.gid, state.ranks.rows,
                     state.ranks.row_ptr, state.ranks.prev, state.ranks.next,
                     state.ranks.lvl_min, state.ranks.lvl_max, state.K, state.adj, rng)
    return state
