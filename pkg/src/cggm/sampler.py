"""Reversible-jump MCMC over (graph, precision matrix, latent data).

Each iteration resamples the latent data (Gibbs, truncated normals), then
perturbs every free Cholesky entry of the precision matrix (Metropolis-
Hastings), then proposes adding or deleting one edge (reversible jump).
``copula_full_baseline`` runs the fixed complete-graph sampler with direct
Wishart draws instead of the last two steps.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .cholesky import complete_inplace, correlation_from_factor, gram_upper, in_cone, trace_diff
from .estimators import PosteriorSummary
from .graph import UndirectedGraph, pair_list
from .gwishart import NormConstCache, standard_gamma_mt
from .mvn import std_normal_cdf
from .rank import RankStructure, in_constraint_set, init_latents, resample_latents, truncnorm_std

log = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class SamplerConfig:
    delta: float = 3.0
    sigma_p: float = 0.1
    sigma_g: float = 0.1
    iterations: int = 10_000
    burn_in: int = 1_000
    thin: int = 25
    chains: int = 1
    master_seed: int = 0
    nc_samples: int = 2_000
    epsilon: float = 0.1
    workers: int = 1

    def __post_init__(self):
        if not (self.sigma_p > 0 and self.sigma_g > 0):
            raise ValueError("sigma_p and sigma_g must be positive")
        if not self.delta > 2:
            raise ValueError("delta must exceed 2")
        if self.iterations < 0 or not 0 <= self.burn_in <= self.iterations:
            raise ValueError("need 0 <= burn_in <= iterations")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.chains < 1:
            raise ValueError("chains must be at least 1")
        if self.nc_samples < 1:
            raise ValueError("nc_samples must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class ChainState:
    graph_bits: np.ndarray
    adj: np.ndarray
    phi: np.ndarray
    K: np.ndarray
    z: np.ndarray
    scatter: np.ndarray
    ranks: RankStructure
    rng: np.random.Generator
    log_norm: float = 0.0
    iteration: int = 0

    @property
    def p(self):
        return self.phi.shape[0]

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def graph(self):
        return UndirectedGraph(self.p, self.graph_bits)

    def dplus(self):
        return np.eye(self.p) + self.scatter

    def check(self, data=None, tol=1e-10):
        """Raise ``AssertionError`` when an internal invariant is broken."""
        k = np.empty_like(self.phi)
        gram_upper(self.phi, k)
        assert np.abs(k - self.K).max() <= tol * max(1.0, np.abs(k).max()), "K != phi' phi"
        res = in_cone(self.K, self.graph, tol=tol * max(1.0, np.abs(self.K).max()))
        assert res, res.reason
        assert np.array_equal(self.adj, self.graph.adjacency()), "adjacency out of sync"
        if data is not None and self.n:
            assert in_constraint_set(self.z, data), "latent data left the constraint set"
            s = self.z.T @ self.z
            assert np.abs(s - self.scatter).max() <= 1e-8 * max(1.0, np.abs(s).max()), \
                "scatter drifted"


@dataclass
class MoveStats:
    diag_proposed: int = 0
    diag_accepted: int = 0
    offdiag_proposed: int = 0
    offdiag_accepted: int = 0
    add_proposed: int = 0
    add_accepted: int = 0
    delete_proposed: int = 0
    delete_accepted: int = 0
    numerical_rejects: int = 0

    def rates(self):
        def r(a, b):
            return a / b if b else float("nan")
        return {
            "diag": r(self.diag_accepted, self.diag_proposed),
            "offdiag": r(self.offdiag_accepted, self.offdiag_proposed),
            "add": r(self.add_accepted, self.add_proposed),
            "delete": r(self.delete_accepted, self.delete_proposed),
        }

    def merge(self, other):
        return MoveStats(*[a + b for a, b in zip(vars(self).values(), vars(other).values())])


# ---------------------------------------------------------------- step 2

@numba.njit(cache=True)
def _diag_move(phi, k, adj, dplus, v, gam, delta, n, sigma_p, phi_new, k_new):
    d_v = 0
    for w in range(v + 1, phi.shape[0]):
        if adj[v, w]:
            d_v += 1
    cur = phi[v, v]
    phi_new[:, :] = phi
    phi_new[v, v] = gam
    complete_inplace(phi_new, adj)
    gram_upper(phi_new, k_new)
    return (math.log(std_normal_cdf(cur / sigma_p)) - math.log(std_normal_cdf(gam / sigma_p))
            + (delta + n + d_v - 1.0) * math.log(gam / cur)
            - 0.5 * trace_diff(k_new, k, dplus))


@numba.njit(cache=True)
def _offdiag_move(phi, k, adj, dplus, i, j, value, phi_new, k_new):
    phi_new[:, :] = phi
    phi_new[i, j] = value
    complete_inplace(phi_new, adj)
    gram_upper(phi_new, k_new)
    return -0.5 * trace_diff(k_new, k, dplus)


@numba.njit(cache=True)
def resample_precision(phi, k, adj, dplus, delta, n, sigma_p, rng, counts):
    """Metropolis sweep over the free Cholesky entries; mutates ``phi``/``k``.

    ``counts`` accumulates [diag proposed, diag accepted, off proposed, off
    accepted, numerical rejects].
    """
    p = phi.shape[0]
    phi_new = np.empty_like(phi)
    k_new = np.empty_like(k)
    for v in range(p):
        cur = phi[v, v]
        gam = cur + sigma_p * truncnorm_std(-cur / sigma_p, np.inf, rng)
        counts[0] += 1
        if not gam > 0.0:
            counts[4] += 1
            continue
        log_r = _diag_move(phi, k, adj, dplus, v, gam, delta, n, sigma_p, phi_new, k_new)
        if not math.isfinite(log_r):
            counts[4] += 1
            continue
        if math.log(rng.random()) < log_r:
            phi[:, :] = phi_new
            k[:, :] = k_new
            counts[1] += 1
    for i in range(p):
        for j in range(i + 1, p):
            if not adj[i, j]:
                continue
            counts[2] += 1
            value = phi[i, j] + sigma_p * rng.standard_normal()
            log_r = _offdiag_move(phi, k, adj, dplus, i, j, value, phi_new, k_new)
            if not math.isfinite(log_r):
                counts[4] += 1
                continue
            if math.log(rng.random()) < log_r:
                phi[:, :] = phi_new
                k[:, :] = k_new
                counts[3] += 1


def log_precision_ratio(phi, adj, dplus, pair, new_value, delta=3.0, n=0, sigma_p=0.1):
    """Log acceptance ratio for moving one free entry of ``phi`` to ``new_value``.

    ``pair`` is a 0-based ``(i, j)``; ``i == j`` is a diagonal move. Returns
    ``(log_ratio, phi_new, k_new)``.
    """
    phi = np.ascontiguousarray(phi, dtype=float)
    adj = np.ascontiguousarray(adj, dtype=np.uint8)
    dplus = np.ascontiguousarray(dplus, dtype=float)
    i, j = pair
    if i != j and not adj[i, j]:
        raise ValueError(f"({i}, {j}) is not a free entry")
    k = np.empty_like(phi)
    gram_upper(phi, k)
    phi_new = np.empty_like(phi)
    k_new = np.empty_like(phi)
    if i == j:
        lr = _diag_move(phi, k, adj, dplus, i, float(new_value), float(delta), float(n),
                        float(sigma_p), phi_new, k_new)
    else:
        lr = _offdiag_move(phi, k, adj, dplus, min(i, j), max(i, j), float(new_value),
                           phi_new, k_new)
    return lr, phi_new, k_new


def step2_resample_precision(state, config, stats=None):
    counts = np.zeros(5, dtype=np.int64)
    resample_precision(state.phi, state.K, state.adj, state.dplus(), float(config.delta),
                       float(state.n), float(config.sigma_p), state.rng, counts)
    if stats is not None:
        stats.diag_proposed += int(counts[0])
        stats.diag_accepted += int(counts[1])
        stats.offdiag_proposed += int(counts[2])
        stats.offdiag_accepted += int(counts[3])
        stats.numerical_rejects += int(counts[4])
    return state


# ---------------------------------------------------------------- step 3

@numba.njit(cache=True)
def _graph_move(phi, k, adj, dplus, i, j, new_value, log_norm_cur, log_norm_new,
                sigma_g, phi_new, k_new):
    adding = adj[i, j] == 0
    adj_new = adj.copy()
    adj_new[i, j] = 1 if adding else 0
    adj_new[j, i] = adj_new[i, j]
    phi_new[:, :] = phi
    if adding:
        phi_new[i, j] = new_value
    complete_inplace(phi_new, adj_new)
    gram_upper(phi_new, k_new)
    jump = (phi_new[i, j] - phi[i, j]) ** 2 / (2.0 * sigma_g * sigma_g)
    dim = math.log(sigma_g) + 0.5 * math.log(2.0 * math.pi) + math.log(phi[i, i])
    common = log_norm_cur - log_norm_new - 0.5 * trace_diff(k_new, k, dplus)
    if adding:
        return dim + common + jump
    return -dim + common - jump


def log_graph_ratio(phi, adj, dplus, i, j, log_norm_cur, log_norm_new, sigma_g, new_value=0.0):
    """Log acceptance ratio for toggling the 0-based pair ``(i, j)``, i < j.

    For an addition ``new_value`` is the proposed free entry; for a deletion
    it is ignored. Returns ``(log_ratio, phi_new, k_new)``.
    """
    phi = np.ascontiguousarray(phi, dtype=float)
    k = np.empty_like(phi)
    gram_upper(phi, k)
    phi_new = np.empty_like(phi)
    k_new = np.empty_like(phi)
    lr = _graph_move(phi, k, np.ascontiguousarray(adj, dtype=np.uint8), dplus, i, j,
                     float(new_value), float(log_norm_cur), float(log_norm_new),
                     float(sigma_g), phi_new, k_new)
    return lr, phi_new, k_new


_PAIRS_CACHE = {}


def _pairs(p):
    if p not in _PAIRS_CACHE:
        _PAIRS_CACHE[p] = pair_list(p)
    return _PAIRS_CACHE[p]


def step3_resample_graph(state, config, nc_cache, stats=None, _buf=None):
    """Propose toggling one uniformly chosen pair; accept by the RJ ratio."""
    p = state.p
    if p < 2:
        return state
    rng = state.rng
    idx = int(rng.integers(len(state.graph_bits)))
    i, j = (int(x) for x in _pairs(p)[idx])
    bits = state.graph_bits.copy()
    bits[idx] = not bits[idx]
    log_norm_new = nc_cache.log_norm(UndirectedGraph(p, bits))
    adding = not state.graph_bits[idx]
    new_value = state.phi[i, j] + config.sigma_g * rng.standard_normal() if adding else 0.0
    phi_new = np.empty_like(state.phi)
    k_new = np.empty_like(state.phi)
    lr = _graph_move(state.phi, state.K, state.adj, state.dplus(), i, j, new_value,
                     state.log_norm, log_norm_new, config.sigma_g, phi_new, k_new)
    if stats is not None:
        if adding:
            stats.add_proposed += 1
        else:
            stats.delete_proposed += 1
    if not math.isfinite(lr):
        if stats is not None:
            stats.numerical_rejects += 1
        return state
    if math.log(rng.random()) < lr:
        state.phi[:, :] = phi_new
        state.K[:, :] = k_new
        state.graph_bits = bits
        state.adj[i, j] = state.adj[j, i] = 1 if adding else 0
        state.log_norm = log_norm_new
        if stats is not None:
            if adding:
                stats.add_accepted += 1
            else:
                stats.delete_accepted += 1
    return state


# ------------------------------------------------------ copula-full step

@numba.njit(cache=True)
def _wishart_factor(scale_chol_inv_t, df, rng, phi):
    """Upper factor ``phi`` of a Wishart(df, (D+U)^{-1}) draw via Bartlett."""
    p = phi.shape[0]
    a = np.zeros((p, p))
    for i in range(p):
        a[i, i] = math.sqrt(2.0 * standard_gamma_mt((df - i) / 2.0, rng))
        for j in range(i):
            a[i, j] = rng.standard_normal()
    # lower factor of the scale times Bartlett matrix, transposed to upper
    la = scale_chol_inv_t @ a
    for i in range(p):
        for j in range(p):
            phi[i, j] = la[j, i] if j >= i else 0.0


def sample_wishart_precision(dplus, delta, n, rng):
    """Direct draw of ``K`` from the full-graph posterior ``W_p(delta+n, D+U)``.

    In this parameterization the density is proportional to
    ``det(K)^((delta+n-2)/2) exp(-<K, D+U>/2)``, i.e. a standard Wishart with
    ``delta + n + p - 1`` degrees of freedom and scale ``inv(D+U)``.
    Returns the upper factor ``phi`` with ``K = phi.T @ phi``.
    """
    p = dplus.shape[0]
    lower = np.linalg.cholesky(np.linalg.inv(dplus))
    phi = np.empty((p, p))
    _wishart_factor(np.ascontiguousarray(lower), float(delta + n + p - 1), rng, phi)
    return phi


# ------------------------------------------------------------- chain run

@numba.njit(cache=True)
def _accumulate(phi, adj, epsilon, ups, edge_counts, ups_sum, exceed):
    correlation_from_factor(phi, ups)
    p = phi.shape[0]
    ne = 0
    for a in range(p):
        for b in range(p):
            ups_sum[a, b] += ups[a, b]
            if a != b:
                if adj[a, b]:
                    edge_counts[a, b] += 1
                    if a < b:
                        ne += 1
                if abs(ups[a, b]) >= epsilon:
                    exceed[a, b] += 1
    return ne


def chain_seed(master_seed, chain_index):
    return np.random.SeedSequence([int(master_seed), int(chain_index)])


def initial_state(data, config, chain_index, nc_cache=None, graph=None):
    """Random Erdos-Renyi(1/2) graph, ``K = I``, midpoint normal-score latents."""
    rng = np.random.default_rng(chain_seed(config.master_seed, chain_index))
    p = data.p
    if graph is None:
        bits = rng.random(p * (p - 1) // 2) < 0.5
        graph = UndirectedGraph(p, bits)
    z = init_latents(data)
    ranks = RankStructure(data)
    ranks.refresh(z)
    state = ChainState(
        graph_bits=graph.bits.copy(), adj=graph.adjacency(), phi=np.eye(p), K=np.eye(p),
        z=z, scatter=z.T @ z, ranks=ranks, rng=rng,
    )
    if nc_cache is not None:
        state.log_norm = nc_cache.log_norm(graph)
    return state


@dataclass
class ChainResult:
    chain: int
    summary: PosteriorSummary
    trace: np.ndarray
    stats: MoveStats
    seconds: float
    final_state: ChainState = field(default=None, repr=False)

    @property
    def mean_edge_count(self):
        return self.summary.mean_edge_count


def run_chain(config, data, chain_index=0, nc_cache=None, check_every=0, full_graph=False,
              callback=None):
    """Run one chain; returns a :class:`ChainResult`.

    ``check_every > 0`` asserts all state invariants every that many
    iterations. ``full_graph=True`` runs the complete-graph baseline.
    ``callback(iteration, state)`` is called after every iteration.
    """
    t0 = time.perf_counter()
    p = data.p
    if nc_cache is None and not full_graph:
        nc_cache = NormConstCache(config.delta, config.nc_samples, config.master_seed)
    state = initial_state(data, config, chain_index, nc_cache,
                          UndirectedGraph.complete(p) if full_graph else None)
    summary = PosteriorSummary.empty(p, config.epsilon, names=data.names)
    stats = MoveStats()
    trace = np.zeros(config.iterations, dtype=np.int64)
    ups = np.empty((p, p))
    thinned_u, thinned_g = [], []
    n = data.n
    for it in range(config.iterations):
        if n:
            resample_latents(state.z, state.scatter, state.ranks.gid, state.ranks.rows,
                             state.ranks.row_ptr, state.ranks.prev, state.ranks.next,
                             state.ranks.lvl_min, state.ranks.lvl_max, state.K, state.adj,
                             state.rng)
        if full_graph:
            state.phi = sample_wishart_precision(state.dplus(), config.delta, n, state.rng)
            gram_upper(state.phi, state.K)
        else:
            step2_resample_precision(state, config, stats)
            step3_resample_graph(state, config, nc_cache, stats)
        state.iteration = it + 1
        if check_every and (it + 1) % check_every == 0:
            state.check(data)
        if it >= config.burn_in:
            ne = _accumulate(state.phi, state.adj, config.epsilon, ups, summary.edge_counts,
                             summary.upsilon_sum, summary.exceed_counts)
            summary.S += 1
            if (it - config.burn_in) % config.thin == 0:
                thinned_u.append(ups.copy())
                thinned_g.append(state.graph_bits.copy())
        else:
            ne = int(state.graph_bits.sum())
        trace[it] = ne
        if callback is not None:
            callback(it, state)
    summary.set_thinned(thinned_u, thinned_g)
    summary.edge_count_sum = float(trace[config.burn_in:].sum())
    summary.chain_mean_edges = [float(trace[config.burn_in:].mean()) if summary.S else float("nan")]
    summary.acceptance = stats.rates()
    return ChainResult(chain_index, summary, trace, stats, time.perf_counter() - t0, state)


def _run_one(args):
    config, data, chain_index, full_graph = args
    return run_chain(config, data, chain_index, full_graph=full_graph)


@dataclass
class MultiChainResult:
    summary: PosteriorSummary
    chains: list

    @property
    def traces(self):
        return [c.trace for c in self.chains]

    @property
    def stats(self):
        out = MoveStats()
        for c in self.chains:
            out = out.merge(c.stats)
        return out


def run_chains(config, data, nc_cache=None, full_graph=False):
    """Run ``config.chains`` independent chains and pool their summaries.

    Chains share one normalizing-constant cache when run in-process; with
    ``config.workers > 1`` they run in separate processes. Both give the
    same numbers, since every constant is seeded from its graph.
    """
    if nc_cache is None and not full_graph:
        nc_cache = NormConstCache(config.delta, config.nc_samples, config.master_seed)
    if config.workers > 1 and config.chains > 1:
        jobs = [(config, data, c, full_graph) for c in range(config.chains)]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = []
        for c in range(config.chains):
            res = run_chain(config, data, c, nc_cache, full_graph=full_graph)
            log.info("chain %d: %.1fs, mean edges %.2f, acceptance %s", c, res.seconds,
                     res.mean_edge_count, res.stats.rates())
            results.append(res)
    summary = PosteriorSummary.merge_all([r.summary for r in results])
    stats = MoveStats()
    for r in results:
        stats = stats.merge(r.stats)
    summary.acceptance = stats.rates()
    return MultiChainResult(summary, results)


def copula_full_baseline(config, data):
    """Complete-graph copula sampler with direct Wishart precision draws."""
    return run_chains(config, data, full_graph=True)


__all__ = [
    "SamplerConfig", "ChainState", "MoveStats", "run_chain", "run_chains",
    "copula_full_baseline", "step2_resample_precision", "step3_resample_graph",
    "log_graph_ratio", "log_precision_ratio", "sample_wishart_precision", "initial_state",
]
