"""Independent reference implementations used only by the test suite.

Everything here is deliberately written with plain dict/queue code and
brute-force enumeration, sharing nothing with the package internals, so
the tests cross two genuinely different routes to the same numbers.
"""

from __future__ import annotations

import itertools
from collections import deque


def bfs_distances(n_nodes: int, edges, root: int, directed: bool = False) -> dict[int, int]:
    """Plain queue BFS; for directed graphs follows edges backwards
    (distance counts hops along in-edges, matching staged in-neighbours)."""
    adj: dict[int, set[int]] = {i: set() for i in range(n_nodes)}
    for a, b in edges:
        if directed:
            adj[b].add(a)  # walk from dst back to src
        else:
            adj[a].add(b)
            adj[b].add(a)
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def stage_set(n_nodes: int, edges, root: int, stage: int, directed: bool = False) -> set[int]:
    dist = bfs_distances(n_nodes, edges, root, directed)
    return {v for v, d in dist.items() if d == stage}


def all_graphs(n_nodes: int):
    """Yield (edges, n_edges) over every labelled graph on n_nodes nodes."""
    pairs = list(itertools.combinations(range(n_nodes), 2))
    for mask in range(2 ** len(pairs)):
        edges = [pairs[k] for k in range(len(pairs)) if mask >> k & 1]
        yield edges, len(edges)


def enumerate_stage_pmf(n_nodes: int, edge_prob: float, stage: int) -> dict[int, float]:
    """Exact stage-size pmf by summing over every labelled graph."""
    n_pairs = n_nodes * (n_nodes - 1) // 2
    pmf: dict[int, float] = {}
    for edges, m in all_graphs(n_nodes):
        prob = edge_prob**m * (1.0 - edge_prob) ** (n_pairs - m)
        size = len(stage_set(n_nodes, edges, 0, stage))
        pmf[size] = pmf.get(size, 0.0) + prob
    return pmf


def enumerate_membership(n_nodes: int, edge_prob: float, stage: int) -> float:
    """Exact P(node 1 lies in the stage-`stage` set of node 0) by enumeration."""
    n_pairs = n_nodes * (n_nodes - 1) // 2
    total = 0.0
    for edges, m in all_graphs(n_nodes):
        prob = edge_prob**m * (1.0 - edge_prob) ** (n_pairs - m)
        if 1 in stage_set(n_nodes, edges, 0, stage):
            total += prob
    return total
