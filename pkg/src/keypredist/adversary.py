"""Node capture, link compromise and key exclusivity, plus Monte Carlo estimators.

Two adversaries are modelled. A *network-wide* adversary may use every key it
has extracted against any link. A *localized* adversary only uses a captured
node's keys against links inside that node's cluster.

The estimators regenerate rings (and, where relevant, the deployment and the
captured set) for every trial from streams derived from ``(seed, trial)``;
see :mod:`keypredist.seeding`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .estimate import Estimate, proportion, sample_mean
from .keyspace import SchemeParams, draw_ring_matrix
from .network import Deployment, LogicalGraph, deploy_nodes, discover, _edge
from .seeding import CAPTURE, DEPLOY, RINGS, TRIAL, rng_for


class Scope(str, enum.Enum):
    NETWORK = "network"
    LOCALIZED = "localized"

    @classmethod
    def parse(cls, value) -> "Scope":
        if isinstance(value, Scope):
            return value
        key = str(value).strip().lower().replace("_", "-")
        if key in ("network", "network-wide", "networkwide", "global"):
            return cls.NETWORK
        if key in ("localized", "local", "cluster"):
            return cls.LOCALIZED
        raise ValueError(f"unknown scope {value!r}")


@dataclass(frozen=True)
class CaptureScenario:
    captured: frozenset
    scope: Scope
    captured_keys: frozenset


def capture(g: LogicalGraph, captured: Iterable[int], scope=Scope.NETWORK) -> CaptureScenario:
    """Scenario in which the adversary holds every key of ``captured``."""
    captured = frozenset(int(c) for c in captured)
    missing = captured - set(g.rings)
    if missing:
        raise LookupError(f"unknown LIDs {sorted(missing)}")
    keys = frozenset().union(*(g.rings[c] for c in captured)) if captured else frozenset()
    return CaptureScenario(captured=captured, scope=Scope.parse(scope), captured_keys=keys)


@dataclass(frozen=True)
class CompromiseReport:
    """Link counts after a capture.

    On a concrete logical graph every link carries at least one key, so the
    vacuous (``raw``) and link-exists (``conditioned``) readings coincide and
    both fields hold the same count. ``compromised_external`` excludes links
    with a captured endpoint.
    """

    total_links: int
    compromised_raw: int
    compromised_conditioned: int
    compromised_external: int
    per_cluster: Mapping[int, int] = field(default_factory=dict)
    compromised: frozenset = field(default=frozenset(), repr=False)


def _cluster_keys(g: LogicalGraph, dep: Deployment, sc: CaptureScenario) -> dict:
    keys = {}
    for lid in sc.captured:
        cid = dep.cluster_of[lid]
        keys[cid] = keys.get(cid, frozenset()) | g.rings[lid]
    return keys


def compromised_links(g: LogicalGraph, dep: Deployment, sc: CaptureScenario) -> CompromiseReport:
    """Links whose whole shared-key set the adversary can reproduce.

    A link is also lost when one of its endpoints is captured.
    """
    local = _cluster_keys(g, dep, sc) if sc.scope is Scope.LOCALIZED else None
    lost = set()
    external = 0
    per_cluster = {}
    for edge in g.edges:
        i, j = edge
        shared = g.shared_keys[edge]
        if i in sc.captured or j in sc.captured:
            hit = True
            ext = False
        else:
            if local is None:
                avail = sc.captured_keys
            else:
                avail = local.get(dep.cluster_of[i], frozenset())
                cj = dep.cluster_of[j]
                if cj != dep.cluster_of[i]:
                    avail = avail | local.get(cj, frozenset())
            hit = shared <= avail
            ext = hit
        if hit:
            lost.add(edge)
            external += ext
            cid = dep.cluster_of[i]
            per_cluster[cid] = per_cluster.get(cid, 0) + 1
    n = len(lost)
    return CompromiseReport(
        total_links=len(g.edges),
        compromised_raw=n,
        compromised_conditioned=n,
        compromised_external=external,
        per_cluster=dict(sorted(per_cluster.items())),
        compromised=frozenset(lost),
    )


def exclusive_keys(g: LogicalGraph, dep: Deployment, edge, scope=Scope.NETWORK) -> frozenset:
    i, j = _edge(*edge)
    scope = Scope.parse(scope)
    if scope is Scope.NETWORK:
        others = [lid for lid in g.rings if lid not in (i, j)]
    else:
        others = [lid for lid in set(dep.members(i)) | set(dep.members(j)) if lid not in (i, j)]
    seen = frozenset().union(*(g.rings[o] for o in others)) if others else frozenset()
    return g.shared_keys[(i, j)] - seen


def exclusive_key_count(g: LogicalGraph, dep: Deployment, edge, scope=Scope.NETWORK) -> int:
    """Keys of link ``edge`` that no other in-scope node holds."""
    return len(exclusive_keys(g, dep, edge, scope))


# --- Monte Carlo estimators -------------------------------------------------


def _trial_rings(params: SchemeParams, seed: int, t: int, count: Optional[int] = None) -> np.ndarray:
    return draw_ring_matrix(params, rng_for(seed, TRIAL, t, RINGS), count)


def _common(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.intersect1d(a, b, assume_unique=True)


def estimate_shared_keys(
    params: SchemeParams, pairs: Sequence[tuple], trials: int, seed: int
) -> dict:
    """Mean number of shared keys for each LID pair, one network per trial."""
    top = max(max(p) for p in pairs)
    values = {pair: [] for pair in pairs}
    for t in range(trials):
        mat = _trial_rings(params, seed, t, top)
        for a, b in pairs:
            values[(a, b)].append(_common(mat[a - 1], mat[b - 1]).size)
    return {pair: sample_mean(v) for pair, v in values.items()}


@dataclass(frozen=True)
class PCREstimate:
    raw: Estimate
    conditioned: Optional[Estimate]


def estimate_pcr_many(
    params: SchemeParams, i: int, j: int, ls: Iterable[int], trials: int, seed: int
) -> dict:
    """Capture probability of link (i, j) for several captured LIDs at once.

    ``raw`` counts a trial as compromised when ``ring_l`` contains
    ``ring_i & ring_j`` (true vacuously when that set is empty);
    ``conditioned`` only looks at trials where the set is non-empty.
    """
    ls = list(ls)
    if trials < 1:
        raise ValueError("need at least one trial")
    for l in ls:
        if l in (i, j):
            raise ValueError("captured node must differ from the endpoints")
    top = max(i, j, *ls)
    rows = np.asarray(ls) - 1
    raw = np.zeros(len(ls), dtype=np.int64)
    cond = np.zeros(len(ls), dtype=np.int64)
    linked = 0
    for t in range(trials):
        mat = _trial_rings(params, seed, t, top)
        shared = _common(mat[i - 1], mat[j - 1])
        if shared.size == 0:
            raw += 1
            continue
        linked += 1
        # covered[r] <=> every shared key appears in ring rows[r]
        hits = np.zeros(len(ls), dtype=np.int64)
        for key in shared:
            hits += (mat[rows] == key).any(axis=1)
        covered = hits == shared.size
        raw += covered
        cond += covered
    return {
        l: PCREstimate(
            raw=proportion(int(raw[n]), trials),
            conditioned=proportion(int(cond[n]), linked) if linked else None,
        )
        for n, l in enumerate(ls)
    }


def estimate_pcr(
    params: SchemeParams, i: int, j: int, l: int, trials: int, seed: int, semantics: str = "raw"
) -> Estimate:
    """Frequency with which ``ring_l`` covers every key shared by i and j."""
    est = estimate_pcr_many(params, i, j, [l], trials, seed)[l]
    if semantics == "raw":
        return est.raw
    if semantics == "conditioned":
        if est.conditioned is None:
            raise ValueError("no trial produced a shared key; conditioned estimate undefined")
        return est.conditioned
    raise ValueError(f"semantics must be 'raw' or 'conditioned', got {semantics!r}")


@dataclass(frozen=True)
class ExclusivityEstimate:
    """Exclusivity of the pair (i, j) over repeated networks.

    ``per_key`` estimates the probability that one given pool key is held by
    i and j and by no other in-scope node (mean fraction of the pool that is
    exclusive to the pair); ``at_least_one``/``exactly_one`` are the pair-level
    frequencies; ``mean_count`` is the mean number of exclusive keys.
    """

    at_least_one: Estimate
    exactly_one: Estimate
    per_key: Estimate
    mean_count: Estimate


def estimate_exclusivity(
    params: SchemeParams,
    i: int,
    j: int,
    trials: int,
    seed: int,
    scope=Scope.NETWORK,
    density: Optional[int] = None,
) -> ExclusivityEstimate:
    """Monte Carlo exclusivity of the LID pair (i, j).

    Localized scope needs ``density``: each trial also redeploys the nodes and
    only the union of i's and j's clusters counts as competing holders.
    """
    scope = Scope.parse(scope)
    if scope is Scope.LOCALIZED and density is None:
        raise ValueError("localized scope needs a cluster density")
    L = params.L
    counts = []
    for t in range(trials):
        mat = _trial_rings(params, seed, t)
        shared = _common(mat[i - 1], mat[j - 1])
        if shared.size == 0:
            counts.append(0)
            continue
        if scope is Scope.NETWORK:
            rows = mat
        else:
            dep = deploy_nodes(params.N, density, rng_for(seed, TRIAL, t, DEPLOY))
            members = sorted(set(dep.members(i)) | set(dep.members(j)))
            rows = mat[[m - 1 for m in members]]
        holders = np.bincount(rows.ravel(), minlength=L)
        counts.append(int(np.count_nonzero(holders[shared] == 2)))
    arr = np.asarray(counts)
    return ExclusivityEstimate(
        at_least_one=proportion(int(np.count_nonzero(arr >= 1)), trials),
        exactly_one=proportion(int(np.count_nonzero(arr == 1)), trials),
        per_key=sample_mean(arr / L),
        mean_count=sample_mean(arr),
    )


@dataclass(frozen=True)
class NetworkTrial:
    rings: np.ndarray
    dep: Deployment
    graph: LogicalGraph


def network_trial(params: SchemeParams, density: int, q: int, seed: int, t: int) -> NetworkTrial:
    """Rings, deployment and logical graph of trial ``t``."""
    mat = _trial_rings(params, seed, t)
    dep = deploy_nodes(params.N, density, rng_for(seed, TRIAL, t, DEPLOY))
    rings = {r + 1: frozenset(mat[r].tolist()) for r in range(mat.shape[0])}
    return NetworkTrial(mat, dep, discover(rings, dep, q))


def pick_captures(N: int, m: int, rng: np.random.Generator, exclude: Iterable[int] = ()) -> list:
    """``m`` distinct LIDs drawn uniformly from ``1..N`` minus ``exclude``."""
    pool = np.setdiff1d(np.arange(1, N + 1), np.asarray(list(exclude), dtype=np.int64))
    if m > pool.size:
        raise ValueError(f"cannot capture {m} of {pool.size} eligible nodes")
    return sorted(int(v) for v in rng.choice(pool, size=m, replace=False))


@dataclass(frozen=True)
class CaptureResult:
    """Per-capture-count estimates of compromised links.

    ``links`` counts, per network, links with no captured endpoint whose keys
    are all exposed. ``per_cluster`` divides that by the number of clusters;
    ``per_captured_cluster`` by the number of clusters holding a captured node.
    """

    m: int
    links: Estimate
    per_cluster: Estimate
    per_captured_cluster: Estimate
    links_with_endpoints: Estimate


def capture_experiment(
    params: SchemeParams,
    density: int,
    q: int,
    capture_counts,
    scope,
    trials: int,
    seed: int,
) -> dict:
    """Compromised links after ``m`` random captures, for each ``m`` given.

    Deployments and captured LIDs come from streams that ignore the scheme,
    so two schemes run with the same seed see the same clusters and captures.
    """
    scope = Scope.parse(scope)
    if isinstance(capture_counts, int):
        capture_counts = [capture_counts]
    capture_counts = [int(m) for m in capture_counts]
    if any(m < 0 for m in capture_counts) or trials < 1:
        raise ValueError("capture counts must be >= 0 and trials >= 1")
    acc = {m: ([], [], [], []) for m in capture_counts}
    for t in range(trials):
        net = network_trial(params, density, q, seed, t)
        for m in capture_counts:
            if m == 0:
                rep_ext = rep_all = 0
                hit_clusters = 0
            else:
                chosen = pick_captures(params.N, m, rng_for(seed, TRIAL, t, CAPTURE, m))
                rep = compromised_links(net.graph, net.dep, capture(net.graph, chosen, scope))
                rep_ext, rep_all = rep.compromised_external, rep.compromised_conditioned
                hit_clusters = len({net.dep.cluster_of[c] for c in chosen})
            links, per_c, per_hit, with_end = acc[m]
            links.append(rep_ext)
            per_c.append(rep_ext / net.dep.cluster_count)
            per_hit.append(rep_ext / hit_clusters if hit_clusters else 0.0)
            with_end.append(rep_all)
    return {
        m: CaptureResult(
            m=m,
            links=sample_mean(v[0]),
            per_cluster=sample_mean(v[1]),
            per_captured_cluster=sample_mean(v[2]),
            links_with_endpoints=sample_mean(v[3]),
        )
        for m, v in acc.items()
    }


def _incidence(rows: np.ndarray, L: int) -> np.ndarray:
    inc = np.zeros((rows.shape[0], L), dtype=np.float32)
    np.put_along_axis(inc, rows, 1.0, axis=1)
    return inc


def pair_statistics(params: SchemeParams, density: int, q: int, trials: int, seed: int) -> dict:
    """Per-network averages over co-cluster pairs: degree and exclusive keys.

    Returns estimates (one value per network) of the mean q-composite degree,
    the mean number of exclusive keys per co-cluster pair under both scopes,
    and the fraction of co-cluster pairs with at least one exclusive key.
    """
    degree, ex_local, ex_net, any_local, any_net = [], [], [], [], []
    for t in range(trials):
        mat = _trial_rings(params, seed, t)
        dep = deploy_nodes(params.N, density, rng_for(seed, TRIAL, t, DEPLOY))
        net_twice = np.bincount(mat.ravel(), minlength=params.L) == 2
        edges = pairs = 0
        s_loc = s_net = a_loc = a_net = 0
        for members in dep.clusters:
            n = len(members)
            if n < 2:
                continue
            inc = _incidence(mat[[m - 1 for m in members]], params.L)
            upper = np.triu_indices(n, 1)
            overlap = (inc @ inc.T)[upper]
            # a key shared by a and b is exclusive iff it has exactly 2 holders in scope
            loc = inc[:, inc.sum(axis=0) == 2]
            net = inc[:, net_twice]
            excl_loc = (loc @ loc.T)[upper]
            excl_net = (net @ net.T)[upper]
            pairs += overlap.size
            edges += int(np.count_nonzero(overlap >= q))
            s_loc += int(excl_loc.sum())
            s_net += int(excl_net.sum())
            a_loc += int(np.count_nonzero(excl_loc))
            a_net += int(np.count_nonzero(excl_net))
        degree.append(2.0 * edges / params.N)
        denom = max(pairs, 1)
        ex_local.append(s_loc / denom)
        ex_net.append(s_net / denom)
        any_local.append(a_loc / denom)
        any_net.append(a_net / denom)
    return {
        "degree": sample_mean(degree),
        "exclusive_localized": sample_mean(ex_local),
        "exclusive_network": sample_mean(ex_net),
        "has_exclusive_localized": sample_mean(any_local),
        "has_exclusive_network": sample_mean(any_net),
    }


def mean_degrees(params: SchemeParams, density: int, qs: Sequence[int], trials: int, seed: int) -> dict:
    """Mean q-composite degree per network for several thresholds at once."""
    per_q = {q: [] for q in qs}
    for t in range(trials):
        mat = _trial_rings(params, seed, t)
        dep = deploy_nodes(params.N, density, rng_for(seed, TRIAL, t, DEPLOY))
        tallies = dict.fromkeys(qs, 0)
        for members in dep.clusters:
            inc = _incidence(mat[[m - 1 for m in members]], params.L)
            overlap = inc @ inc.T
            upper = overlap[np.triu_indices(len(members), 1)]
            for q in qs:
                tallies[q] += int(np.count_nonzero(upper >= q))
        for q in qs:
            per_q[q].append(2.0 * tallies[q] / params.N)
    return {q: sample_mean(v) for q, v in per_q.items()}
