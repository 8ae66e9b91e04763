"""G-Wishart densities and log normalizing constants ``log I_G(delta, D)``."""

import math
import threading
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import multigammaln

from .cholesky import in_cone, log_det_precision
from .graph import UndirectedGraph

LOG2 = math.log(2.0)
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GWishartParams:
    delta: float = 3.0
    D: np.ndarray = None

    def __post_init__(self):
        if not self.delta > 2:
            raise ValueError("G-Wishart degrees of freedom must exceed 2")
        if self.D is not None:
            np.linalg.cholesky(self.D)

    def scale(self, p):
        return np.eye(p) if self.D is None else np.asarray(self.D, dtype=float)


def log_density_unnorm(k, params, graph, check=True):
    """``((delta - 2)/2) log det K - <K, D>/2`` for ``K`` in the graph's cone."""
    k = np.asarray(k, dtype=float)
    if check:
        res = in_cone(k, graph)
        if not res:
            raise ValueError(f"K is not in the cone of the graph: {res.reason}")
    D = params.scale(graph.p)
    sign, logdet = np.linalg.slogdet(k)
    return 0.5 * (params.delta - 2.0) * logdet - 0.5 * float(np.sum(k * D))


def log_norm_complete(p, delta=3.0, D=None):
    """Closed-form ``log I_G`` for the complete graph (ordinary Wishart)."""
    if not delta > 2:
        raise ValueError("delta must exceed 2")
    a = (delta + p - 1) / 2.0
    logdet_d = 0.0 if D is None else np.linalg.slogdet(np.asarray(D, float))[1]
    return (a * p * math.log(2.0) + multigammaln(a, p) - a * logdet_d)


@numba.njit(cache=True, inline="always")
def standard_gamma_mt(shape, rng):
    """Marsaglia-Tsang gamma draw; about 3x faster than the Generator method
    from compiled code. Falls back to the latter for ``shape < 1``."""
    if shape < 1.0:
        return rng.standard_gamma(shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        if u < 1.0 - 0.0331 * x * x * x * x:
            return d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


@numba.njit(cache=True)
def _mc_log_weights(adj, delta, n_samples, rng):
    p = adj.shape[0]
    shape = np.zeros(p)
    n_free = 0
    n_fixed = 0
    # only rows >= 1 with a non-free entry divide by their diagonal
    need = np.zeros(p, dtype=np.bool_)
    for i in range(p):
        for j in range(i + 1, p):
            if adj[i, j]:
                shape[i] += 1.0
                n_free += 1
            else:
                n_fixed += 1
                if i > 0:
                    need[i] = True
    shape = (delta + shape) / 2.0
    free_i = np.empty(n_free, dtype=np.int64)
    free_j = np.empty(n_free, dtype=np.int64)
    # non-free entries in column-major order, the order completion needs
    fixed_i = np.empty(n_fixed, dtype=np.int64)
    fixed_j = np.empty(n_fixed, dtype=np.int64)
    a = 0
    b = 0
    for j in range(p):
        for i in range(j):
            if adj[i, j]:
                free_i[a] = i
                free_j[a] = j
                a += 1
            else:
                fixed_i[b] = i
                fixed_j[b] = j
                b += 1
    phi = np.zeros((p, p))
    out = np.zeros(n_samples)
    if n_fixed == 0:
        return out
    for s in range(n_samples):
        for i in range(p):
            if need[i]:
                phi[i, i] = math.sqrt(2.0 * standard_gamma_mt(shape[i], rng))
        for t in range(n_free):
            phi[free_i[t], free_j[t]] = rng.standard_normal()
        acc = 0.0
        for t in range(n_fixed):
            i = fixed_i[t]
            j = fixed_j[t]
            if i == 0:
                phi[i, j] = 0.0
                continue
            s_ij = 0.0
            for v in range(i):
                s_ij += phi[v, i] * phi[v, j]
            val = -s_ij / phi[i, i]
            phi[i, j] = val
            acc += val * val
        out[s] = -0.5 * acc
    return out


@numba.njit(cache=True)
def _log_mean_exp(logw):
    # log of the mean weight and the delta-method SE of that log
    m = len(logw)
    top = logw.max()
    s1 = 0.0
    s2 = 0.0
    for x in logw:
        w = math.exp(x - top)
        s1 += w
        s2 += w * w
    mean = s1 / m
    if m < 2:
        return top + math.log(mean), np.nan
    var = max(s2 / m - mean * mean, 0.0) * m / (m - 1)
    return top + math.log(mean), math.sqrt(var / m) / mean


def _log_norm_closed_part(adj, delta):
    d = np.triu(adj, 1).sum(axis=1)
    total = 0.0
    for dv in d.tolist():
        a = (delta + dv) / 2.0
        total += a * LOG2 + math.lgamma(a)
    return total + 0.5 * float(d.sum()) * LOG_2PI


@dataclass
class NormConstEstimate:
    log_value: float
    std_error: float


def log_norm_mc(graph, delta=3.0, mc_samples=2000, rng=None, D=None):
    """Monte Carlo estimate of ``log I_G(delta, I_p)`` with a delta-method SE.

    The free Cholesky entries are drawn from their reference distributions
    (chi for the diagonal, standard normal at the edges) and the non-free
    entries enter through ``E[exp(-sum phi_ij^2 / 2)]``.
    """
    if D is not None and not np.array_equal(np.asarray(D, float), np.eye(graph.p)):
        raise NotImplementedError("Monte Carlo normalizing constants support D = I only")
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    rng = np.random.default_rng(rng)
    adj = graph.adjacency() if isinstance(graph, UndirectedGraph) else np.asarray(graph, np.uint8)
    closed = _log_norm_closed_part(adj, delta)
    logw = _mc_log_weights(adj, float(delta), int(mc_samples), rng)
    log_mean, se = _log_mean_exp(logw)
    return NormConstEstimate(closed + log_mean, se)


def graph_seed(master_seed, key):
    return np.random.SeedSequence([int(master_seed), int.from_bytes(b"\x01" + key, "little")])


@dataclass
class NormConstCache:
    """Per-run store of ``log I_G`` estimates, one per graph.

    The first request for a graph draws an estimate with a seed derived from
    ``(master_seed, graph key)``; later requests return the stored value. With
    ``enabled=False`` nothing is stored but values are still reproducible.
    Safe to share between threads.
    """

    delta: float = 3.0
    mc_samples: int = 2000
    master_seed: int = 0
    enabled: bool = True
    _store: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __len__(self):
        return len(self._store)

    def log_norm(self, graph):
        key = (graph.p, graph.key())
        if self.enabled:
            with self._lock:
                hit = self._store.get(key)
            if hit is not None:
                return hit
        rng = np.random.default_rng(graph_seed(self.master_seed, key[1]))
        value = log_norm_mc(graph, self.delta, self.mc_samples, rng).log_value
        if self.enabled:
            with self._lock:
                value = self._store.setdefault(key, value)
        return value


def log_norm_cached(graph, delta, cache):
    if cache.delta != delta:
        raise ValueError("cache was built for a different delta")
    return cache.log_norm(graph)


def log_posterior_kernel(k, graph, delta, D, scatter, n):
    """Unnormalized ``W_G(delta + n, D + scatter)`` log density of ``k``."""
    return log_density_unnorm(k, GWishartParams(delta + n, D + scatter), graph)


__all__ = [
    "GWishartParams", "log_density_unnorm", "log_norm_complete", "log_norm_mc",
    "NormConstCache", "log_norm_cached", "log_det_precision", "NormConstEstimate",
]
