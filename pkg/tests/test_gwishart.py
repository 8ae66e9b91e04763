import math

import numpy as np
import pytest

from cggm.graph import UndirectedGraph, make_graph
from cggm.gwishart import (
    GWishartParams, NormConstCache, log_density_unnorm, log_norm_cached, log_norm_complete,
    log_norm_mc, log_posterior_kernel,
)

from oracles import (
    decomposable_log_norm_path, quad_log_norm_p2_complete, quad_log_norm_p2_empty,
    quad_log_norm_p3_path_middle_first,
)

# quadrature values, computed once by oracles.py
LOG_I_P2_EMPTY = 1.8378770664093254
LOG_I_P2_COMPLETE = 3.22417142752511
LOG_I_P3_PATH = 5.529404321842341


def test_density():
    for p in (1, 3, 5):
        assert log_density_unnorm(np.eye(p), GWishartParams(), UndirectedGraph.empty(p)) == \
            pytest.approx(-p / 2)
    val = log_density_unnorm(2 * np.eye(2), GWishartParams(), UndirectedGraph.empty(2))
    assert val == pytest.approx(math.log(2) - 2)
    with pytest.raises(ValueError):
        log_density_unnorm(np.array([[1, .3], [.3, 1]]), GWishartParams(), UndirectedGraph.empty(2))
    with pytest.raises(ValueError):
        GWishartParams(delta=2.0)


def test_posterior_kernel_is_substitution():
    k = np.array([[2.0, 0.3], [0.3, 1.0]])
    s = np.array([[4.0, 1.0], [1.0, 3.0]])
    g = UndirectedGraph.complete(2)
    direct = 0.5 * (3 + 10 - 2) * np.linalg.slogdet(k)[1] - 0.5 * np.sum(k * (np.eye(2) + s))
    assert log_posterior_kernel(k, g, 3.0, np.eye(2), s, 10) == pytest.approx(direct)


def test_complete_closed_form():
    assert log_norm_complete(2) == pytest.approx(math.log(8 * math.pi))
    # one variable: int k^(1/2) exp(-k/2) dk = sqrt(2 pi)
    assert log_norm_complete(1) == pytest.approx(0.5 * math.log(2 * math.pi))
    for c in (0.5, 3.0):
        shift = log_norm_complete(3, D=c * np.eye(3)) - log_norm_complete(3)
        assert shift == pytest.approx(-(3 + 3 - 1) * 3 / 2 * math.log(c))


def test_quadrature_oracles_frozen():
    assert quad_log_norm_p2_empty() == pytest.approx(LOG_I_P2_EMPTY, abs=1e-9)
    assert LOG_I_P2_COMPLETE == pytest.approx(log_norm_complete(2), abs=1e-9)
    assert LOG_I_P3_PATH == pytest.approx(decomposable_log_norm_path(), abs=1e-9)


def test_frozen_quadrature_constants_recompute():
    assert quad_log_norm_p2_complete() == pytest.approx(LOG_I_P2_COMPLETE, abs=1e-8)
    assert quad_log_norm_p3_path_middle_first() == pytest.approx(LOG_I_P3_PATH, abs=1e-8)


@pytest.mark.parametrize("p", range(2, 7))
def test_mc_complete_graph_is_exact(p):
    est = log_norm_mc(UndirectedGraph.complete(p), mc_samples=500, rng=p)
    assert est.log_value == pytest.approx(log_norm_complete(p), rel=1e-12)
    assert est.std_error == 0.0


@pytest.mark.parametrize("p", [1, 3, 6])
def test_mc_empty_graph(p):
    est = log_norm_mc(UndirectedGraph.empty(p), mc_samples=10, rng=0)
    assert est.log_value == pytest.approx(p * 0.5 * math.log(2 * math.pi))


def test_mc_p3_path_against_quadrature():
    g = make_graph(3, [(1, 2), (1, 3)])
    est = log_norm_mc(g, mc_samples=100_000, rng=7)
    assert abs(est.log_value - LOG_I_P3_PATH) < 3 * est.std_error + 1e-3
    assert abs(est.log_value / LOG_I_P3_PATH - 1) < 0.01


def test_mc_standard_error_scales():
    g = make_graph(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    se = [log_norm_mc(g, mc_samples=m, rng=1).std_error for m in (2_000, 32_000)]
    assert se[0] / se[1] == pytest.approx(4.0, rel=0.25)


def test_mc_rejects_general_scale():
    with pytest.raises(NotImplementedError):
        log_norm_mc(UndirectedGraph.empty(2), D=2 * np.eye(2))


def test_cache():
    g = make_graph(5, [(1, 2), (2, 3), (3, 4), (4, 5), (1, 5)])
    h = make_graph(5, [(1, 3), (2, 3), (3, 4), (4, 5), (1, 5)])
    cache = NormConstCache(3.0, 500, master_seed=4)
    a = log_norm_cached(g, 3.0, cache)
    assert log_norm_cached(g, 3.0, cache) == a and len(cache) == 1
    off = NormConstCache(3.0, 500, master_seed=4, enabled=False)
    assert off.log_norm(g) == a and len(off) == 0
    assert cache.log_norm(h) != a
    assert NormConstCache(3.0, 500, master_seed=5).log_norm(g) != a
    with pytest.raises(ValueError):
        log_norm_cached(g, 4.0, cache)


@pytest.mark.parametrize("shape", [0.4, 1.0, 1.5, 4.5, 40.0])
def test_gamma_sampler_distribution(shape):
    import numba
    from scipy import stats
    from cggm.gwishart import standard_gamma_mt

    @numba.njit
    def draw(shape, n, rng):
        out = np.empty(n)
        for i in range(n):
            out[i] = standard_gamma_mt(shape, rng)
        return out

    x = draw(shape, 50_000, np.random.default_rng(1))
    assert stats.kstest(x, stats.gamma(shape).cdf).pvalue > 1e-3
