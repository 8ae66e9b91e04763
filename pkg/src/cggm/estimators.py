"""Model-averaged posterior summaries.

Everything here works off a :class:`PosteriorSummary`: streaming tallies over
all post-burn-in iterations (edge inclusion, correlation sums, exceedances of
``|Upsilon| >= epsilon``) plus thinned correlation-matrix samples for the
cell-probability and Cramér's V estimators.
"""

import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .mvn import bivariate_normal_cdf_vec, gaussian_copula, std_normal_quantile


@dataclass
class PosteriorSummary:
    p: int
    epsilon: float = 0.1
    names: list = None
    S: int = 0
    edge_counts: np.ndarray = None
    upsilon_sum: np.ndarray = None
    exceed_counts: np.ndarray = None
    thinned_upsilons: np.ndarray = None
    thinned_graphs: np.ndarray = None
    edge_count_sum: float = 0.0
    chain_mean_edges: list = field(default_factory=list)
    acceptance: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, p, epsilon=0.1, names=None):
        return cls(
            p=p, epsilon=epsilon, names=names or [f"V{v + 1}" for v in range(p)],
            edge_counts=np.zeros((p, p), dtype=np.int64),
            upsilon_sum=np.zeros((p, p)),
            exceed_counts=np.zeros((p, p), dtype=np.int64),
            thinned_upsilons=np.zeros((0, p, p)),
            thinned_graphs=np.zeros((0, p * (p - 1) // 2), dtype=bool),
        )

    @classmethod
    def from_samples(cls, upsilons, graphs=None, epsilon=0.1, names=None):
        """Summary built from explicit samples (all of them also thinned)."""
        ups = np.asarray(upsilons, dtype=float)
        s, p, _ = ups.shape
        out = cls.empty(p, epsilon, names)
        out.S = s
        out.upsilon_sum = ups.sum(axis=0)
        off = ~np.eye(p, dtype=bool)
        out.exceed_counts = ((np.abs(ups) >= epsilon) & off).sum(axis=0)
        if graphs is not None:
            graphs = np.asarray(graphs, dtype=bool)
            iu, ju = np.triu_indices(p, 1)
            counts = np.zeros((p, p), dtype=np.int64)
            counts[iu, ju] = graphs.sum(axis=0)
            out.edge_counts = counts + counts.T
            out.edge_count_sum = float(graphs.sum())
            out.thinned_graphs = graphs
        out.thinned_upsilons = ups
        return out

    def set_thinned(self, upsilons, graphs):
        p = self.p
        self.thinned_upsilons = (np.array(upsilons) if len(upsilons)
                                 else np.zeros((0, p, p)))
        self.thinned_graphs = (np.array(graphs, dtype=bool) if len(graphs)
                               else np.zeros((0, p * (p - 1) // 2), dtype=bool))

    @property
    def mean_edge_count(self):
        return self.edge_count_sum / self.S if self.S else float("nan")

    @classmethod
    def merge_all(cls, summaries):
        """Pool accumulators; associative and commutative up to sample order."""
        first = summaries[0]
        out = cls.empty(first.p, first.epsilon, first.names)
        for s in summaries:
            if s.p != first.p or s.epsilon != first.epsilon:
                raise ValueError("cannot merge summaries with different p or epsilon")
            out.S += s.S
            out.edge_counts += s.edge_counts
            out.upsilon_sum += s.upsilon_sum
            out.exceed_counts += s.exceed_counts
            out.edge_count_sum += s.edge_count_sum
            out.chain_mean_edges.extend(s.chain_mean_edges)
        out.thinned_upsilons = np.concatenate([s.thinned_upsilons for s in summaries])
        out.thinned_graphs = np.concatenate([s.thinned_graphs for s in summaries])
        return out


def _require_samples(summary):
    if summary.S < 1:
        raise ValueError("posterior summary holds no samples")


def edge_inclusion_probs(summary):
    _require_samples(summary)
    out = summary.edge_counts / summary.S
    np.fill_diagonal(out, 0.0)
    return out


def mean_correlation(summary):
    _require_samples(summary)
    out = summary.upsilon_sum / summary.S
    np.fill_diagonal(out, 1.0)
    return out


@dataclass
class BayesFactor:
    """Tally-based Bayes factor; ``value`` is ``inf`` when no sample is below."""

    above: int
    below: int

    @property
    def value(self):
        return self.above / self.below if self.below else math.inf

    @property
    def posterior_prob(self):
        total = self.above + self.below
        return self.above / total if total else float("nan")


def bayes_factor_upsilon(summary, pair, epsilon=None):
    """Test of ``|Upsilon_{v1,v2}| >= epsilon`` (0-based ``pair``)."""
    eps = summary.epsilon if epsilon is None else epsilon
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    _require_samples(summary)
    i, j = pair
    if eps == summary.epsilon:
        above = int(summary.exceed_counts[i, j])
        return BayesFactor(above, summary.S - above)
    vals = np.abs(summary.thinned_upsilons[:, i, j])
    if len(vals) == 0:
        raise ValueError("a non-default epsilon needs stored thinned samples")
    above = int((vals >= eps).sum())
    return BayesFactor(above, len(vals) - above)


# ------------------------------------------------------ cell probabilities

class EmpiricalMarginal:
    """Empirical CDFs of discrete variables over their level codes."""

    def __init__(self, cdfs):
        self.cdfs = [np.asarray(c, dtype=float) for c in cdfs]
        for c in self.cdfs:
            if np.any(np.diff(c) < -1e-15) or abs(c[-1] - 1.0) > 1e-12:
                raise ValueError("empirical CDF must be nondecreasing and end at 1")
        self.thresholds = [np.array([std_normal_quantile(u) for u in c[:-1]]) for c in self.cdfs]

    @classmethod
    def from_data(cls, data):
        from .rank import empirical_cdf

        if not data.discrete:
            raise ValueError("cell probabilities need discrete variables only")
        return cls([empirical_cdf(data, v) for v in range(data.p)])

    @property
    def p(self):
        return len(self.cdfs)

    @property
    def levels(self):
        return tuple(len(c) for c in self.cdfs)

    def probs(self, v):
        return np.diff(np.concatenate([[0.0], self.cdfs[v]]))

    def u0(self, v, x):
        return float(self.cdfs[v][x])

    def u1(self, v, x):
        return 0.0 if x == 0 else float(self.cdfs[v][x - 1])


def cell_probability_exact(cell, upsilon, marginals, tol=1e-5, rng=None, clamp=True):
    """Inclusion-exclusion over the ``2^p`` copula corners of a cell."""
    p = marginals.p
    if p > 12:
        raise ValueError("exact cell probabilities are limited to p <= 12")
    rng = np.random.default_rng(rng)
    total = 0.0
    for corner in itertools.product((0, 1), repeat=p):
        u = [marginals.u1(v, cell[v]) if c else marginals.u0(v, cell[v])
             for v, c in enumerate(corner)]
        if min(u) == 0.0:
            continue
        val = gaussian_copula(u, upsilon, tol=tol, rng=rng).probability
        total += -val if sum(corner) % 2 else val
    if clamp and total < 0.0:
        total = 0.0
    return total


def table_probabilities_exact(upsilon, marginals, tol=1e-5, rng=None):
    rng = np.random.default_rng(rng)
    cells = list(itertools.product(*[range(d) for d in marginals.levels]))
    return np.array([cell_probability_exact(c, upsilon, marginals, tol, rng) for c in cells])


def _chol_psd(upsilon):
    try:
        return np.linalg.cholesky(upsilon)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(upsilon)
        return np.linalg.cholesky((v * np.maximum(w, 1e-12)) @ v.T)


def cell_index(levels_matrix, levels):
    """Flat index with the last variable varying fastest."""
    return np.ravel_multi_index(tuple(np.asarray(levels_matrix).T), levels)


@numba.njit(cache=True)
def _mc_cell_counts(chol, thr, thr_ptr, strides, draws, rng, counts):
    p = chol.shape[0]
    e = np.empty(p)
    for _ in range(draws):
        idx = 0
        for v in range(p):
            e[v] = rng.standard_normal()
            z = 0.0
            for u in range(v + 1):
                z += chol[v, u] * e[u]
            lv = 0
            for t in range(thr_ptr[v], thr_ptr[v + 1]):
                if thr[t] < z:
                    lv += 1
            idx += lv * strides[v]
        counts[idx] += 1


def table_probabilities_mc(upsilon, marginals, draws, rng=None):
    """Forward-simulated cell probabilities (flat, last variable fastest)."""
    if draws < 1:
        raise ValueError("draws must be at least 1")
    rng = np.random.default_rng(rng)
    chol = _chol_psd(np.asarray(upsilon, dtype=float))
    levels = marginals.levels
    thr = np.concatenate(marginals.thresholds)
    thr_ptr = np.concatenate([[0], np.cumsum([len(t) for t in marginals.thresholds])])
    strides = np.array([int(np.prod(levels[v + 1:])) for v in range(len(levels))],
                       dtype=np.int64)
    counts = np.zeros(int(np.prod(levels)), dtype=np.int64)
    _mc_cell_counts(chol, thr, thr_ptr.astype(np.int64), strides, int(draws), rng, counts)
    return counts / draws


def expected_cell_counts(summary, data, draws=10_000, rng=None, method="mc", stride=1, tol=1e-5):
    """``n`` times the posterior mean cell probabilities over thinned samples."""
    ups = summary.thinned_upsilons[::stride]
    if len(ups) == 0:
        raise ValueError("no thinned correlation samples stored")
    marg = EmpiricalMarginal.from_data(data)
    rng = np.random.default_rng(rng)
    acc = np.zeros(int(np.prod(marg.levels)))
    for u in ups:
        if method == "mc":
            acc += table_probabilities_mc(u, marg, draws, rng)
        elif method == "exact":
            acc += table_probabilities_exact(u, marg, tol, rng)
        else:
            raise ValueError(f"unknown method {method!r}")
    return data.n * acc / len(ups)


def observed_cell_counts(data):
    levels = tuple(int(d) for d in data.n_codes)
    codes = data.codes[(data.codes >= 0).all(axis=1)]
    return np.bincount(cell_index(codes, levels), minlength=int(np.prod(levels)))


# ------------------------------------------------------------- Cramér's V

def bivariate_table(rho, cdf1, cdf2):
    """Joint cell probabilities of two discrete variables under correlation ``rho``."""
    t1 = np.array([std_normal_quantile(u) for u in cdf1])
    t2 = np.array([std_normal_quantile(u) for u in cdf2])
    grid = bivariate_normal_cdf_vec(t1[:, None], t2[None, :], rho)
    grid = np.pad(grid, ((1, 0), (1, 0)))
    return np.maximum(np.diff(np.diff(grid, axis=0), axis=1), 0.0)


def cramers_v(table):
    """Mean-square contingency normalized by ``min(levels) - 1`` (no square root)."""
    t = np.asarray(table, dtype=float)
    r, c = t.sum(axis=1), t.sum(axis=0)
    if np.any(r <= 0) or np.any(c <= 0):
        raise ValueError("every marginal category needs positive probability")
    k = min(t.shape)
    if k < 2:
        raise ValueError("Cramér's V needs at least two categories per variable")
    return float(((t * t) / np.outer(r, c)).sum() - 1.0) / (k - 1)


def cramers_v_samples(upsilons, marginals):
    """``rho^s`` for every pair and thinned sample; shape ``(S, p, p)``.

    Categories with zero empirical mass are dropped before the computation.
    """
    ups = np.asarray(upsilons, dtype=float)
    s, p, _ = ups.shape
    out = np.zeros((s, p, p))
    keep = [marginals.probs(v) > 0 for v in range(p)]
    for a in range(p):
        ta = np.array([std_normal_quantile(u) for u in marginals.cdfs[a][keep[a]]])
        pa = marginals.probs(a)[keep[a]]
        for b in range(a + 1, p):
            tb = np.array([std_normal_quantile(u) for u in marginals.cdfs[b][keep[b]]])
            pb = marginals.probs(b)[keep[b]]
            k = min(len(pa), len(pb))
            if k < 2:
                continue
            rho = ups[:, a, b][:, None, None]
            grid = bivariate_normal_cdf_vec(ta[None, :, None], tb[None, None, :], rho)
            grid = np.pad(grid, ((0, 0), (1, 0), (1, 0)))
            cells = np.maximum(np.diff(np.diff(grid, axis=1), axis=2), 0.0)
            v = ((cells * cells) / np.outer(pa, pb)).sum(axis=(1, 2)) - 1.0
            out[:, a, b] = out[:, b, a] = v / (k - 1)
    return out


def bayes_factor_rho(rho_samples, pair, epsilon=0.1):
    """Test of ``rho_{v1,v2} >= epsilon`` from per-sample Cramér's V values."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    vals = np.asarray(rho_samples)[:, pair[0], pair[1]]
    above = int((vals >= epsilon).sum())
    return BayesFactor(above, len(vals) - above)


@dataclass
class CramerSummary:
    mean: np.ndarray
    prob_h1: np.ndarray
    bayes_factor: np.ndarray
    above: np.ndarray
    below: np.ndarray


def cramers_v_summary(summary, marginals, epsilon=None):
    eps = summary.epsilon if epsilon is None else epsilon
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    if len(summary.thinned_upsilons) == 0:
        raise ValueError("no thinned correlation samples stored")
    rho = cramers_v_samples(summary.thinned_upsilons, marginals)
    above = (rho >= eps).sum(axis=0)
    below = len(rho) - above
    with np.errstate(divide="ignore", invalid="ignore"):
        bf = np.where(below > 0, above / np.maximum(below, 1), np.inf)
    np.fill_diagonal(bf, np.nan)
    prob = above / len(rho)
    np.fill_diagonal(prob, np.nan)
    return CramerSummary(rho.mean(axis=0), prob, bf, above, below)


def degree_and_association_summary(edge_probs, rho_mean, rho_bf, bf_threshold=100.0):
    """Expected degree and cumulative Cramér's V (weak pairs zeroed) per variable."""
    edge_probs = np.asarray(edge_probs, dtype=float).copy()
    np.fill_diagonal(edge_probs, 0.0)
    assoc = np.where(np.asarray(rho_bf) >= bf_threshold, rho_mean, 0.0)
    np.fill_diagonal(assoc, 0.0)
    return edge_probs.sum(axis=1), assoc.sum(axis=1)
