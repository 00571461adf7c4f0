"""Cluster deployment, shared-key discovery and the q-composite logical graph.

Physical adjacency is co-membership of a cluster: every node in a cluster is
in radio range of every other node of that cluster, and of nobody else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .keyspace import KeyRing, ParameterError, SchemeParams
from .seeding import DEPLOY, rng_for


@dataclass(frozen=True)
class Deployment:
    cluster_of: Mapping[int, int]
    clusters: tuple  # tuple of sorted LID tuples, indexed by cluster id

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)

    @property
    def avg_density(self) -> float:
        return len(self.cluster_of) / len(self.clusters)

    def members(self, lid: int) -> tuple:
        return self.clusters[self.cluster_of[lid]]

    def adjacent(self, i: int, j: int) -> bool:
        return i != j and self.cluster_of[i] == self.cluster_of[j]


def deployment_from_clusters(clusters: Iterable[Iterable[int]]) -> Deployment:
    """Build a deployment from explicit member lists (useful for fixtures)."""
    groups = tuple(tuple(sorted(c)) for c in clusters)
    cluster_of = {}
    for cid, members in enumerate(groups):
        for lid in members:
            if lid in cluster_of:
                raise ParameterError(f"LID {lid} assigned to two clusters")
            cluster_of[lid] = cid
    return Deployment(cluster_of=cluster_of, clusters=groups)


def deploy_nodes(N: int, M: int, rng: np.random.Generator) -> Deployment:
    if not 1 <= M <= N:
        raise ParameterError(f"need 1 <= M <= N, got M={M}, N={N}")
    order = rng.permutation(N) + 1
    groups = [order[s : s + M].tolist() for s in range(0, N, M)]
    return deployment_from_clusters(groups)


def deploy(params: SchemeParams, density: int, seed: int) -> Deployment:
    """Scatter LIDs uniformly at random into ceil(N/M) clusters of size M.

    The last cluster is smaller when M does not divide N.
    """
    return deploy_nodes(params.N, int(density), rng_for(seed, DEPLOY))


Edge = tuple  # (i, j) with i < j


def _edge(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class LogicalGraph:
    q: int
    edges: frozenset
    shared_keys: Mapping[Edge, frozenset]
    rings: Mapping[int, frozenset] = field(repr=False)
    adjacency: Mapping[int, frozenset] = field(repr=False)

    def has_edge(self, i: int, j: int) -> bool:
        return _edge(i, j) in self.edges

    def keys_of(self, i: int, j: int) -> frozenset:
        return self.shared_keys[_edge(i, j)]


def _ring_map(rings) -> dict:
    if isinstance(rings, Mapping):
        return {int(lid): frozenset(keys) for lid, keys in rings.items()}
    return {ring.lid: frozenset(ring.keys) for ring in rings}


def discover(
    rings: Iterable[KeyRing],
    dep: Deployment,
    q: int,
    min_lid_gap: int = 0,
) -> LogicalGraph:
    """Shared-key discovery inside each cluster.

    An edge joins two co-cluster nodes holding at least ``q`` common keys and
    carries their full intersection. With ``min_lid_gap > 0`` pairs whose LIDs
    differ by less than that are skipped.
    """
    if q < 1:
        raise ParameterError(f"q must be >= 1, got {q}")
    ring_of = _ring_map(rings)
    if set(ring_of) != set(dep.cluster_of):
        raise ParameterError("rings and deployment cover different LIDs")
    shared = {}
    adj = {lid: set() for lid in ring_of}
    for members in dep.clusters:
        for a_pos, i in enumerate(members):
            ri = ring_of[i]
            for j in members[a_pos + 1 :]:
                if min_lid_gap and abs(j - i) < min_lid_gap:
                    continue
                common = ri & ring_of[j]
                if len(common) >= q:
                    shared[(i, j)] = common
                    adj[i].add(j)
                    adj[j].add(i)
    return LogicalGraph(
        q=q,
        edges=frozenset(shared),
        shared_keys=shared,
        rings=ring_of,
        adjacency={lid: frozenset(n) for lid, n in adj.items()},
    )


def q_composite_degree(g: LogicalGraph, lid: int) -> int:
    try:
        return len(g.adjacency[lid])
    except KeyError:
        raise LookupError(f"LID {lid} is not in the graph") from None


def mean_degree(g: LogicalGraph) -> float:
    return 2.0 * len(g.edges) / len(g.adjacency) if g.adjacency else 0.0


def other_holders(
    g: LogicalGraph, dep: Deployment, edge: Edge, key: int, neighborhood: str = "cluster"
) -> set:
    """Nodes other than the endpoints that hold ``key``.

    ``neighborhood="cluster"`` searches the union of both endpoints' clusters;
    ``"network"`` searches every node.
    """
    i, j = edge
    if neighborhood == "cluster":
        pool = set(dep.members(i)) | set(dep.members(j))
    elif neighborhood == "network":
        pool = set(g.rings)
    else:
        raise ValueError(f"unknown neighborhood {neighborhood!r}")
    pool.discard(i)
    pool.discard(j)
    return {lid for lid in pool if key in g.rings[lid]}


def eligibility(
    g: LogicalGraph, dep: Deployment, edge: Edge, key: int, neighborhood: str = "cluster"
) -> float:
    """1 when no other neighbour holds ``key``, else 1/(number of other holders)."""
    edge = _edge(*edge)
    if edge not in g.edges or key not in g.shared_keys[edge]:
        raise ValueError(f"key {key} is not shared on edge {edge}")
    holders = len(other_holders(g, dep, edge, key, neighborhood))
    return 1.0 if holders == 0 else 1.0 / holders


def sorted_key_lists(g: LogicalGraph, dep: Deployment, neighborhood: str = "cluster") -> dict:
    """Per edge, ``[(key, eligibility), ...]`` best first, ties by key id."""
    out = {}
    for edge in sorted(g.edges):
        scored = [(key, eligibility(g, dep, edge, key, neighborhood)) for key in g.shared_keys[edge]]
        scored.sort(key=lambda kv: (-kv[1], kv[0]))
        out[edge] = scored
    return out


def format_graph(g: LogicalGraph) -> str:
    """One ``i,j,q,key0;key1;...`` line per edge, edges and keys ascending."""
    lines = [
        f"{i},{j},{g.q}," + ";".join(map(str, sorted(g.shared_keys[(i, j)])))
        for i, j in sorted(g.edges)
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_graph(text: str) -> tuple:
    """Inverse of :func:`format_graph`; returns ``(q, {edge: keys})``."""
    q: Optional[int] = None
    shared = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        i, j, qq, keys = line.split(",", 3)
        q = int(qq)
        shared[(int(i), int(j))] = frozenset(int(k) for k in keys.split(";") if k)
    return q, shared


def cluster_count_for(N: int, M: int) -> int:
    return math.ceil(N / M)
