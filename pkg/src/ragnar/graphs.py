"""Random graph ensembles and staged neighbour sets.

Graphs are sampled from the classic Gilbert model G(n, pi): every
unordered pair of distinct nodes receives an edge independently with
probability pi.  Pairs are always visited in canonical row-major order
(0,1), (0,2), ..., (n-2,n-1) so that a seed pins down the graph exactly.

A node's stage-r neighbour set is the set of nodes at shortest-path
distance exactly r from it.  These staged sets are what the network
autoregressive models average over.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Graph",
    "StagedNeighbourhood",
    "StageWeights",
    "generate_graph",
    "generate_ensemble",
    "neighbour_sets",
    "stage_weights",
    "stage_mean_operators",
    "build_directed_graph",
    "write_graphs",
    "read_graphs",
    "canonical_pairs",
]

# Sentinel recorded in Graph.seed for graphs that were constructed rather
# than sampled (e.g. the directed graph assembled from per-node rankings).
NO_SEED = -1


@dataclass(frozen=True, eq=False)
class Graph:
    """An unweighted graph on nodes 0..n_nodes-1.

    Undirected edges are stored once as (i, j) with i < j.  Directed
    edges are stored as (src, dst) meaning src feeds into dst.
    """

    n_nodes: int
    edge_index: np.ndarray  # (n_edges, 2) int32
    directed: bool = False
    seed: int = NO_SEED

    def __post_init__(self) -> None:
        idx = np.asarray(self.edge_index, dtype=np.int32).reshape(-1, 2)
        object.__setattr__(self, "edge_index", idx)
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range")
            if (idx[:, 0] == idx[:, 1]).any():
                raise ValueError("self loops are not allowed")
            if not self.directed and (idx[:, 0] >= idx[:, 1]).any():
                raise ValueError("undirected edges must be stored as (i, j) with i < j")

    @property
    def n_edges(self) -> int:
        return int(self.edge_index.shape[0])

    @cached_property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((int(a), int(b)) for a, b in self.edge_index)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Boolean adjacency matrix; adj[src, dst] for directed graphs."""
        adj = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        if self.n_edges:
            a, b = self.edge_index[:, 0], self.edge_index[:, 1]
            adj[a, b] = True
            if not self.directed:
                adj[b, a] = True
        adj.setflags(write=False)
        return adj

    def same_edges(self, other: "Graph") -> bool:
        return (
            self.n_nodes == other.n_nodes
            and self.directed == other.directed
            and self.edges == other.edges
        )


@dataclass(frozen=True)
class StagedNeighbourhood:
    """Stage-1..stage-r neighbour sets of one root node."""

    root: int
    stages: tuple[frozenset[int], ...]

    def stage(self, r: int) -> frozenset[int]:
        if not 1 <= r <= len(self.stages):
            raise ValueError(f"stage {r} not computed (have 1..{len(self.stages)})")
        return self.stages[r - 1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.stages)


@dataclass(frozen=True)
class StageWeights:
    """Equal connection weights 1/|stage set| for one root node."""

    root: int
    stages: tuple[Mapping[int, float], ...]

    def stage(self, r: int) -> Mapping[int, float]:
        if not 1 <= r <= len(self.stages):
            raise ValueError(f"stage {r} not computed (have 1..{len(self.stages)})")
        return self.stages[r - 1]


def canonical_pairs(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major upper-triangle pair arrays: (0,1), (0,2), ..., (n-2,n-1)."""
    i, j = np.triu_indices(n_nodes, k=1)
    return i.astype(np.int32), j.astype(np.int32)


_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pairs(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if n_nodes not in _PAIR_CACHE:
        _PAIR_CACHE[n_nodes] = canonical_pairs(n_nodes)
    return _PAIR_CACHE[n_nodes]


def _rng_for(seed: int, index: int | None) -> np.random.Generator:
    # Keying by (seed, index) makes batch generation order-independent.
    if index is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(ss))


def generate_graph(
    n_nodes: int,
    edge_prob: float,
    seed: int,
    index: int | None = None,
) -> Graph:
    """Sample one G(n_nodes, edge_prob) graph.

    Each of the C(n_nodes, 2) unordered pairs receives an edge
    independently with probability edge_prob, visited in canonical
    row-major order.  `index` selects an independent stream within the
    same master seed and is used for ensemble members.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    rng = _rng_for(seed, index)
    i, j = _pairs(n_nodes)
    u = rng.random(i.shape[0])
    keep = u < edge_prob
    edge_index = np.stack([i[keep], j[keep]], axis=1)
    return Graph(n_nodes=n_nodes, edge_index=edge_index, directed=False, seed=seed)


def generate_ensemble(
    n_nodes: int,
    edge_prob: float,
    n_graphs: int,
    seed: int,
    workers: int = 1,
) -> list[Graph]:
    """Sample n_graphs independent G(n_nodes, edge_prob) graphs.

    Member k is keyed by (seed, k), so the result is identical whatever
    the worker count or completion order.
    """
    if n_graphs < 1:
        raise ValueError(f"n_graphs must be >= 1, got {n_graphs}")

    def make(k: int) -> Graph:
        return generate_graph(n_nodes, edge_prob, seed, index=k)

    if workers <= 1 or n_graphs < 4:
        return [make(k) for k in range(n_graphs)]
    from concurrent.futures import ThreadPoolExecutor

    out: list[Graph | None] = [None] * n_graphs
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for k, g in zip(range(n_graphs), pool.map(make, range(n_graphs))):
            out[k] = g
    return out  # type: ignore[return-value]


def _stage_masks(adj: np.ndarray, root: int, max_stage: int, directed: bool) -> list[np.ndarray]:
    """Breadth-first shortest-path layers around `root` as boolean masks.

    For directed graphs the layers follow in-edges: stage 1 holds the
    nodes feeding directly into the root, stage 2 the nodes feeding into
    stage 1 that are not already closer, and so on.
    """
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    frontier = adj[:, root].copy() if directed else adj[root].copy()
    frontier &= ~seen
    masks = []
    for _ in range(max_stage):
        masks.append(frontier)
        seen |= frontier
        if not frontier.any():
            frontier = np.zeros(n, dtype=bool)
            continue
        if directed:
            nxt = adj[:, frontier].any(axis=1)
        else:
            nxt = adj[frontier].any(axis=0)
        frontier = nxt & ~seen
    return masks


def neighbour_sets(graph: Graph, root: int, max_stage: int) -> StagedNeighbourhood:
    """Stage-1..max_stage neighbour sets of `root` (shortest-path layers)."""
    if not 0 <= root < graph.n_nodes:
        raise IndexError(f"root {root} out of range for {graph.n_nodes} nodes")
    if max_stage < 1:
        raise ValueError(f"max_stage must be >= 1, got {max_stage}")
    masks = _stage_masks(graph.adjacency, root, max_stage, graph.directed)
    stages = tuple(frozenset(int(k) for k in np.nonzero(m)[0]) for m in masks)
    return StagedNeighbourhood(root=root, stages=stages)


def stage_weights(nbhd: StagedNeighbourhood) -> StageWeights:
    """Equal weights over each stage set: every member gets 1/|set|."""
    stages = []
    for members in nbhd.stages:
        if members:
            w = 1.0 / len(members)
            stages.append({node: w for node in sorted(members)})
        else:
            stages.append({})
    return StageWeights(root=nbhd.root, stages=tuple(stages))


def stage_mean_operators(graph: Graph, max_stage: int) -> list[np.ndarray]:
    """Row-normalised stage membership matrices W_1..W_max_stage.

    W_r[i, k] = 1/|stage-r set of i| if k belongs to that set, else 0,
    so W_r @ x gives every node's stage-r neighbourhood average of x.
    Rows of nodes with an empty stage-r set are all zero.
    """
    if max_stage < 0:
        raise ValueError("max_stage must be >= 0")
    adj = graph.adjacency
    n = graph.n_nodes
    ops = [np.zeros((n, n)) for _ in range(max_stage)]
    for i in range(n):
        masks = _stage_masks(adj, i, max_stage, graph.directed)
        for r, mask in enumerate(masks):
            size = int(mask.sum())
            if size:
                ops[r][i, mask] = 1.0 / size
    return ops


def build_directed_graph(graphs_by_node: Mapping[int, Graph] | Sequence[Graph]) -> Graph:
    """Assemble one directed graph from per-node best undirected graphs.

    Node i receives an incoming edge from j exactly when j lies in the
    stage-1 neighbour set of i inside i's own graph.  The result is used
    with in-neighbour averaging, so each node keeps the neighbourhood it
    was ranked with.
    """
    if isinstance(graphs_by_node, Mapping):
        items = dict(graphs_by_node)
    else:
        items = {i: g for i, g in enumerate(graphs_by_node)}
    if not items:
        raise ValueError("graphs_by_node is empty")
    n_nodes = next(iter(items.values())).n_nodes
    edges = []
    for i, g in sorted(items.items()):
        if g.n_nodes != n_nodes:
            raise ValueError("all per-node graphs must share n_nodes")
        if g.directed:
            raise ValueError("per-node graphs must be undirected")
        if not 0 <= i < n_nodes:
            raise IndexError(f"node {i} out of range for {n_nodes} nodes")
        for j in sorted(neighbour_sets(g, i, 1).stage(1)):
            edges.append((j, i))
    edge_index = np.array(edges, dtype=np.int32).reshape(-1, 2)
    return Graph(n_nodes=n_nodes, edge_index=edge_index, directed=True, seed=NO_SEED)


def write_graphs(graphs: Iterable[Graph], path) -> None:
    """Write graphs as edge-list text blocks.

    Each block starts with a header `nodes=N directed=0|1 seed=S`
    followed by one `i j` pair per line in canonical order.
    """
    with open(path, "w", encoding="ascii") as fh:
        for g in graphs:
            fh.write(f"nodes={g.n_nodes} directed={int(g.directed)} seed={g.seed}\n")
            idx = g.edge_index
            order = np.lexsort((idx[:, 1], idx[:, 0])) if idx.size else []
            for k in order:
                fh.write(f"{int(idx[k, 0])} {int(idx[k, 1])}\n")


def read_graphs(path) -> list[Graph]:
    """Read graphs written by write_graphs."""
    graphs: list[Graph] = []
    header: dict[str, int] | None = None
    pairs: list[tuple[int, int]] = []

    def flush() -> None:
        if header is None:
            return
        edge_index = np.array(pairs, dtype=np.int32).reshape(-1, 2)
        graphs.append(
            Graph(
                n_nodes=header["nodes"],
                edge_index=edge_index,
                directed=bool(header["directed"]),
                seed=header["seed"],
            )
        )

    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("nodes="):
                flush()
                fields = dict(part.split("=", 1) for part in line.split())
                header = {k: int(v) for k, v in fields.items()}
                pairs = []
            else:
                a, b = line.split()
                pairs.append((int(a), int(b)))
    flush()
    return graphs
