import numpy as np
import pytest
from scipy import stats

from cggm.graph import UndirectedGraph
from cggm.gwishart import NormConstCache
from cggm.rank import ObservedData, step1_resample_latents
from cggm.sampler import (
    SamplerConfig, initial_state, log_graph_ratio, log_precision_ratio, run_chain, run_chains,
    sample_wishart_precision, step2_resample_precision,
)
from cggm.estimators import edge_inclusion_probs


def _factor(p, rng, adj=None):
    phi = np.triu(rng.normal(size=(p, p)), 1) + np.diag(rng.uniform(0.5, 2.0, p))
    if adj is not None:
        from cggm.cholesky import complete_inplace
        complete_inplace(phi, adj)
    return phi


def test_config_validation():
    for bad in [dict(sigma_p=0), dict(delta=2), dict(burn_in=20, iterations=10), dict(thin=0),
                dict(chains=0), dict(nc_samples=0), dict(epsilon=0)]:
        with pytest.raises(ValueError):
            SamplerConfig(**bad)


def test_identity_proposal_is_neutral(rng):
    adj = UndirectedGraph.complete(4).adjacency()
    phi = _factor(4, rng)
    dplus = np.eye(4) + np.cov(rng.normal(size=(4, 30))) * 30
    for v in range(4):
        lr, phi_new, _ = log_precision_ratio(phi, adj, dplus, (v, v), phi[v, v], n=30)
        assert lr == 0.0 and np.array_equal(phi_new, phi)
    lr, _, _ = log_precision_ratio(phi, adj, dplus, (1, 3), phi[1, 3], n=30)
    assert lr == 0.0


def test_trace_preserving_offdiag_move(rng):
    # flipping the sign of phi_13 on a complete graph keeps every K_vv
    adj = UndirectedGraph.complete(3).adjacency()
    phi = _factor(3, rng)
    lr, _, k_new = log_precision_ratio(phi, adj, np.diag([1.0, 2.0, 3.0]), (0, 2), -phi[0, 2])
    assert lr == pytest.approx(0.0, abs=1e-12)
    assert not np.allclose(k_new, phi.T @ phi)


def test_offdiag_requires_edge(rng):
    with pytest.raises(ValueError):
        log_precision_ratio(np.eye(3), UndirectedGraph.empty(3).adjacency(), np.eye(3),
                            (0, 1), 0.5)


@pytest.mark.parametrize("seed", range(10))
def test_add_delete_reciprocity(seed):
    rng = np.random.default_rng(seed)
    p = 5
    g = UndirectedGraph(p, rng.random(10) < 0.5)
    i, j = sorted(rng.choice(p, 2, replace=False))
    if g.has_edge(i, j):
        g = g.toggle(i, j)
    adj = g.adjacency()
    phi = _factor(p, rng, adj)
    dplus = np.eye(p) + 5 * np.diag(rng.uniform(1, 2, p))
    ln_g, ln_h = rng.normal(size=2) * 3
    x = rng.normal()
    lr_add, phi_add, _ = log_graph_ratio(phi, adj, dplus, i, j, ln_g, ln_h, 0.1, x)
    adj2 = g.toggle(i, j).adjacency()
    lr_del, phi_back, _ = log_graph_ratio(phi_add, adj2, dplus, i, j, ln_h, ln_g, 0.1)
    assert lr_add + lr_del == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(phi_back, phi, atol=1e-12)


def test_wishart_mean_identity():
    rng = np.random.default_rng(0)
    p, n, delta = 3, 12, 3.0
    z = rng.normal(size=(n, p))
    dplus = np.eye(p) + z.T @ z
    draws = np.array([(lambda f: f.T @ f)(sample_wishart_precision(dplus, delta, n, rng))
                      for _ in range(100_000)])
    df = delta + n + p - 1
    target = df * np.linalg.inv(dplus)
    assert np.allclose(draws.mean(axis=0), target, rtol=0.01, atol=0.01 * np.abs(target).max())
    ref = stats.wishart(df=df, scale=np.linalg.inv(dplus))
    assert np.allclose(draws.var(axis=0), ref.var(), rtol=0.05)


def test_wishart_p1_is_gamma():
    rng = np.random.default_rng(1)
    k = np.array([sample_wishart_precision(np.array([[2.5]]), 3.0, 4, rng)[0, 0] ** 2
                  for _ in range(20_000)])
    assert stats.kstest(k, stats.gamma(a=3.5, scale=2 / 2.5).cdf).pvalue > 1e-3


def test_precision_step_prior_moments():
    # n = 0 on a complete p=2 graph: K ~ Wishart(delta + p - 1 = 4, I), E[K] = 4 I
    data = ObservedData(np.zeros((0, 2)), ["binary", "binary"])
    cfg = SamplerConfig(sigma_p=0.8)
    state = initial_state(data, cfg, 0, graph=UndirectedGraph.complete(2))
    acc = np.zeros((2, 2))
    m = 200_000
    for _ in range(m):
        step2_resample_precision(state, cfg)
        acc += state.K
    mean = acc / m
    assert mean[0, 0] == pytest.approx(4.0, rel=0.05)
    assert mean[1, 1] == pytest.approx(4.0, rel=0.05)
    assert abs(mean[0, 1]) < 0.2


def test_chain_is_deterministic_and_checks_invariants():
    data = ObservedData(np.random.default_rng(3).integers(0, 2, (60, 4)).astype(float),
                        ["binary"] * 4)
    cfg = SamplerConfig(iterations=300, burn_in=50, thin=10, master_seed=8)
    a = run_chain(cfg, data, 1, check_every=1)
    b = run_chain(cfg, data, 1)
    assert np.array_equal(a.trace, b.trace)
    assert np.array_equal(a.summary.upsilon_sum, b.summary.upsilon_sum)
    assert len(a.summary.thinned_upsilons) == 25
    c = run_chain(cfg, data, 2)
    assert not np.array_equal(a.trace, c.trace)


def test_no_retained_samples():
    data = ObservedData(np.array([[0.0, 1.0], [1.0, 0.0]]), ["binary"] * 2)
    r = run_chain(SamplerConfig(iterations=20, burn_in=20), data)
    assert r.summary.S == 0 and len(r.summary.thinned_upsilons) == 0
    with pytest.raises(ValueError):
        edge_inclusion_probs(r.summary)


def test_prior_graph_frequencies_short():
    data = ObservedData(np.zeros((0, 3)), ["binary"] * 3)
    cfg = SamplerConfig(iterations=42_000, burn_in=2_000, thin=1, master_seed=3, nc_samples=4000)
    r = run_chain(cfg, data)
    keys = np.array([int(g[0]) + 2 * int(g[1]) + 4 * int(g[2]) for g in r.summary.thinned_graphs])
    freq = np.bincount(keys, minlength=8) / len(keys)
    assert np.abs(freq - 0.125).max() < 0.03


def test_strong_signal_edge_found():
    rng = np.random.default_rng(4)
    k = np.eye(4)
    k[0, 1] = k[1, 0] = 0.6
    x = rng.multivariate_normal(np.zeros(4), np.linalg.inv(k), size=500)
    data = ObservedData(x, ["continuous"] * 4)
    r = run_chain(SamplerConfig(iterations=3000, burn_in=500, master_seed=1), data)
    probs = edge_inclusion_probs(r.summary)
    assert probs[0, 1] > 0.95
    assert r.summary.upsilon_sum[0, 1] / r.summary.S < -0.3


def test_correlated_binaries_latent_correlation():
    x = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0]]), 100, axis=0)
    data = ObservedData(x, ["binary", "binary"])
    cfg = SamplerConfig(sigma_p=0.3)
    state = initial_state(data, cfg, 0, graph=UndirectedGraph.complete(2))
    rng = state.rng
    cors = []
    for it in range(3000):
        step1_resample_latents(state, rng)
        step2_resample_precision(state, cfg)
        if it >= 1000:
            cors.append(np.corrcoef(state.z.T)[0, 1])
    assert np.mean(cors) > 0.8


def test_pooling_is_between_chains():
    data = ObservedData(np.random.default_rng(5).integers(0, 2, (80, 4)).astype(float),
                        ["binary"] * 4)
    cfg = SamplerConfig(iterations=600, burn_in=100, chains=2, master_seed=2)
    res = run_chains(cfg, data)
    pooled = edge_inclusion_probs(res.summary)
    per = [edge_inclusion_probs(c.summary) for c in res.chains]
    lo, hi = np.minimum(*per), np.maximum(*per)
    assert np.all(pooled >= lo - 1e-12) and np.all(pooled <= hi + 1e-12)
    assert res.summary.S == 1000
    one = run_chains(SamplerConfig(iterations=600, burn_in=100, master_seed=2), data)
    single = run_chain(SamplerConfig(iterations=600, burn_in=100, master_seed=2), data, 0,
                       nc_cache=NormConstCache(3.0, 2000, 2))
    assert np.array_equal(one.chains[0].trace, single.trace)
    assert np.array_equal(res.chains[0].trace, single.trace)


def test_full_graph_baseline_stays_complete():
    data = ObservedData(np.random.default_rng(6).integers(0, 3, (50, 3)).astype(float),
                        ["ordinal"] * 3)
    r = run_chain(SamplerConfig(iterations=200, burn_in=50), data, full_graph=True,
                  check_every=1)
    assert np.all(r.trace == 3)
    assert np.all(edge_inclusion_probs(r.summary)[np.triu_indices(3, 1)] == 1)
