"""Undirected graphs on ``p`` labeled vertices.

Vertices are 0-based internally and 1-based in every user-facing input and
output (edge lists, CSV files). Edges are stored as a flat boolean bitset over
the ``p(p-1)/2`` unordered pairs in row-major order: (0,1), (0,2), ...,
(0,p-1), (1,2), ...
"""

import io

import numpy as np


def n_pairs(p):
    return p * (p - 1) // 2


def pair_index(p, i, j):
    """Position of the 0-based pair ``{i, j}`` in the row-major bitset."""
    if i == j:
        raise ValueError(f"self-loop ({i + 1},{j + 1}) is not allowed")
    if i > j:
        i, j = j, i
    return i * (2 * p - i - 1) // 2 + (j - i - 1)


def pair_list(p):
    """All 0-based pairs ``(i, j)``, ``i < j``, in bitset order."""
    iu, ju = np.triu_indices(p, k=1)
    return np.column_stack([iu, ju])


class UndirectedGraph:
    """Immutable undirected graph without self-loops."""

    __slots__ = ("p", "bits")

    def __init__(self, p, bits=None):
        if p < 1:
            raise ValueError("a graph needs at least one vertex")
        if bits is None:
            bits = np.zeros(n_pairs(p), dtype=bool)
        bits = np.asarray(bits, dtype=bool).copy()
        if bits.shape != (n_pairs(p),):
            raise ValueError(f"expected {n_pairs(p)} edge bits, got {bits.shape}")
        bits.setflags(write=False)
        self.p = int(p)
        self.bits = bits

    @classmethod
    def empty(cls, p):
        return cls(p)

    @classmethod
    def complete(cls, p):
        return cls(p, np.ones(n_pairs(p), dtype=bool))

    @classmethod
    def from_adjacency(cls, adj):
        adj = np.asarray(adj, dtype=bool)
        p = adj.shape[0]
        if adj.shape != (p, p) or not np.array_equal(adj, adj.T):
            raise ValueError("adjacency matrix must be square and symmetric")
        if adj.diagonal().any():
            raise ValueError("adjacency matrix has self-loops")
        iu, ju = np.triu_indices(p, k=1)
        return cls(p, adj[iu, ju])

    @property
    def edge_count(self):
        return int(self.bits.sum())

    def has_edge(self, i, j):
        return bool(self.bits[pair_index(self.p, i, j)])

    def edges(self):
        """0-based ``(i, j)`` pairs with ``i < j``."""
        return [tuple(int(v) for v in e) for e in pair_list(self.p)[self.bits]]

    def adjacency(self):
        adj = np.zeros((self.p, self.p), dtype=np.uint8)
        iu, ju = np.triu_indices(self.p, k=1)
        adj[iu, ju] = self.bits
        adj[ju, iu] = self.bits
        return adj

    def neighbors(self, v):
        return [int(u) for u in np.flatnonzero(self.adjacency()[v])]

    def later_degree(self, v):
        """Number of neighbours of ``v`` with a larger index."""
        if not 0 <= v < self.p:
            raise IndexError(f"vertex {v} out of range for p={self.p}")
        return int(self.adjacency()[v, v + 1:].sum())

    def later_degrees(self):
        return np.triu(self.adjacency(), 1).sum(axis=1)

    def toggle(self, i, j):
        bits = self.bits.copy()
        k = pair_index(self.p, i, j)
        bits[k] = not bits[k]
        return UndirectedGraph(self.p, bits)

    def key(self):
        """Canonical byte string; injective among graphs with the same ``p``."""
        return np.packbits(self.bits).tobytes()

    def __eq__(self, other):
        return (isinstance(other, UndirectedGraph) and self.p == other.p
                and np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.p, self.key()))

    def __repr__(self):
        edges = [(i + 1, j + 1) for i, j in self.edges()]
        return f"UndirectedGraph(p={self.p}, edges={edges})"


def make_graph(p, edge_list):
    """Build a graph from 1-based vertex pairs; duplicates collapse."""
    bits = np.zeros(n_pairs(p), dtype=bool)
    for v1, v2 in edge_list:
        if not (1 <= v1 <= p and 1 <= v2 <= p):
            raise ValueError(f"edge ({v1},{v2}) has a vertex outside 1..{p}")
        if v1 == v2:
            raise ValueError(f"self-loop ({v1},{v2}) is not allowed")
        bits[pair_index(p, v1 - 1, v2 - 1)] = True
    return UndirectedGraph(p, bits)


def toggle_edge(graph, pair):
    """Return ``graph`` with the 1-based ``pair`` added or removed."""
    v1, v2 = pair
    if v1 == v2:
        raise ValueError(f"self-loop ({v1},{v2}) is not allowed")
    if not (1 <= v1 <= graph.p and 1 <= v2 <= graph.p):
        raise ValueError(f"pair ({v1},{v2}) out of range")
    return graph.toggle(v1 - 1, v2 - 1)


def later_degree(graph, v):
    """``d_v``: neighbours of the 1-based vertex ``v`` with larger labels."""
    if not 1 <= v <= graph.p:
        raise IndexError(f"vertex {v} out of range 1..{graph.p}")
    return graph.later_degree(v - 1)


def graph_key(graph):
    return graph.key()


def write_edge_csv(graph, path_or_buf=None):
    """Write the edge list as ``v1,v2`` rows with 1-based labels."""
    lines = ["v1,v2"] + [f"{i + 1},{j + 1}" for i, j in graph.edges()]
    text = "\n".join(lines) + "\n"
    if path_or_buf is None:
        return text
    if isinstance(path_or_buf, io.TextIOBase):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)
    return text


def read_edge_csv(path, p):
    with open(path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if rows and rows[0].replace(" ", "") == "v1,v2":
        rows = rows[1:]
    return make_graph(p, [tuple(int(x) for x in r.split(",")) for r in rows])
