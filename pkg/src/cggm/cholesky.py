"""Cholesky parameterization of the cone of precision matrices with zeros at
the non-edges of a graph.

A matrix ``K`` in that cone factors as ``K = phi.T @ phi`` with ``phi`` upper
triangular. Only the diagonal of ``phi`` and the entries at edges are free;
the rest are fixed by the completion recursion. Kernels take the graph as a
dense 0/1 adjacency matrix so they can be called from compiled code.
"""

import math
from dataclasses import dataclass

import numba
import numpy as np

from .graph import UndirectedGraph


@numba.njit(cache=True)
def complete_inplace(phi, adj):
    """Overwrite the non-free entries of ``phi`` by completion w.r.t. ``adj``.

    Columns are finalized left to right; each non-free entry only reads
    entries from rows above it, which are final by then.
    """
    p = phi.shape[0]
    for j in range(p):
        for i in range(j):
            if adj[i, j]:
                continue
            if i == 0:
                phi[i, j] = 0.0
            else:
                s = 0.0
                for v in range(i):
                    s += phi[v, i] * phi[v, j]
                phi[i, j] = -s / phi[i, i]
        for i in range(j + 1, p):
            phi[i, j] = 0.0


@numba.njit(cache=True)
def gram_upper(phi, out):
    """``out = phi.T @ phi`` for upper-triangular ``phi``."""
    p = phi.shape[0]
    for a in range(p):
        for b in range(a, p):
            s = 0.0
            for v in range(a + 1):
                s += phi[v, a] * phi[v, b]
            out[a, b] = s
            out[b, a] = s


@numba.njit(cache=True)
def trace_diff(k_new, k_old, scatter):
    """``<k_new - k_old, scatter>`` for symmetric matrices."""
    p = k_new.shape[0]
    s = 0.0
    for a in range(p):
        for b in range(p):
            s += (k_new[a, b] - k_old[a, b]) * scatter[a, b]
    return s


@numba.njit(cache=True)
def correlation_from_factor(phi, out):
    """Correlation matrix of ``(phi.T phi)^{-1}`` written into ``out``."""
    p = phi.shape[0]
    # inverse of an upper-triangular matrix by back substitution
    inv = np.zeros((p, p))
    for j in range(p):
        inv[j, j] = 1.0 / phi[j, j]
        for i in range(j - 1, -1, -1):
            s = 0.0
            for v in range(i + 1, j + 1):
                s += phi[i, v] * inv[v, j]
            inv[i, j] = -s / phi[i, i]
    # covariance = inv @ inv.T
    cov = np.zeros((p, p))
    for a in range(p):
        for b in range(a, p):
            s = 0.0
            for v in range(b, p):
                s += inv[a, v] * inv[b, v]
            cov[a, b] = s
            cov[b, a] = s
    for a in range(p):
        out[a, a] = 1.0
        for b in range(a + 1, p):
            r = cov[a, b] / math.sqrt(cov[a, a] * cov[b, b])
            out[a, b] = r
            out[b, a] = r


@dataclass(frozen=True)
class CholeskyFactor:
    """Completed upper-triangular factor together with its graph."""

    phi: np.ndarray
    graph: UndirectedGraph

    @property
    def p(self):
        return self.phi.shape[0]

    @property
    def free_set(self):
        return free_elements(self.graph)


def free_elements(graph):
    """Free positions of ``phi`` as 0-based pairs: diagonal first, then edges."""
    diag = [(v, v) for v in range(graph.p)]
    return diag + graph.edges()


def _check_diag(phi):
    d = np.diag(phi)
    if np.any(~(d > 0)):
        raise ValueError("Cholesky diagonal entries must be positive")


def complete(phi_free, graph):
    """Complete a factor from its free values.

    ``phi_free`` is either a sequence aligned with :func:`free_elements`, or a
    ``p x p`` array whose free positions are read (other entries ignored).
    """
    p = graph.p
    phi_free = np.asarray(phi_free, dtype=float)
    if phi_free.ndim == 2:
        phi = np.triu(phi_free).copy()
    else:
        free = free_elements(graph)
        if len(phi_free) != len(free):
            raise ValueError(f"expected {len(free)} free values, got {len(phi_free)}")
        phi = np.zeros((p, p))
        for (i, j), val in zip(free, phi_free):
            phi[i, j] = val
    _check_diag(phi)
    complete_inplace(phi, graph.adjacency())
    return CholeskyFactor(phi, graph)


def assemble_precision(factor):
    phi = factor.phi if isinstance(factor, CholeskyFactor) else np.asarray(factor, float)
    k = np.empty_like(phi)
    gram_upper(phi, k)
    return k


def log_det_precision(factor):
    phi = factor.phi if isinstance(factor, CholeskyFactor) else factor
    return 2.0 * float(np.log(np.diag(phi)).sum())


def log_jacobian(factor, graph=None):
    """Log Jacobian of the map from the cone to the free entries of ``phi``:
    ``p log 2 + sum_v (d_v + 1) log phi_vv``."""
    if isinstance(factor, CholeskyFactor):
        phi, graph = factor.phi, graph or factor.graph
    else:
        phi = np.asarray(factor, dtype=float)
    _check_diag(phi)
    d = graph.later_degrees()
    return graph.p * math.log(2.0) + float(((d + 1) * np.log(np.diag(phi))).sum())


def correlation_from_precision(k):
    """Correlation matrix of ``inv(k)``; raises ``LinAlgError`` if not PD."""
    k = np.asarray(k, dtype=float)
    chol = np.linalg.cholesky(k)  # lower, k = L L^T
    out = np.empty_like(k)
    correlation_from_factor(np.ascontiguousarray(chol.T), out)
    return out


@dataclass
class ConeCheck:
    ok: bool
    reason: str = ""

    def __bool__(self):
        return self.ok


def in_cone(k, graph, tol=1e-10):
    """Whether ``k`` is symmetric PD with zeros at the non-edges of ``graph``."""
    k = np.asarray(k, dtype=float)
    p = graph.p
    if k.shape != (p, p):
        return ConeCheck(False, f"shape {k.shape} does not match p={p}")
    asym = np.abs(k - k.T).max()
    if asym > tol:
        return ConeCheck(False, f"not symmetric (max asymmetry {asym:.3g})")
    try:
        np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return ConeCheck(False, "not positive definite")
    off = ~graph.adjacency().astype(bool)
    np.fill_diagonal(off, False)
    if off.any():
        worst = np.abs(k[off]).max()
        if worst > tol:
            return ConeCheck(False, f"non-edge entry of size {worst:.3g}")
    return ConeCheck(True)
