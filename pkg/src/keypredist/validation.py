"""Oracle suite: one check per acceptance criterion.

Each check compares the library against an independent route to the same
number: Monte Carlo frequencies for closed forms, grid searches for the
optimisers, and naive reimplementations for the graph and capture logic.
``scale`` multiplies every trial count so the suite can run quickly.
"""

from __future__ import annotations

import itertools
import math
import os
import tempfile
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import analytics
from .adversary import (
    Scope,
    capture,
    capture_experiment,
    compromised_links,
    estimate_exclusivity,
    estimate_pcr_many,
    estimate_shared_keys,
    exclusive_key_count,
    mean_degrees,
    pair_statistics,
)
from .estimate import Estimate, difference
from .keyspace import ParameterError, Scheme, SchemeParams, assign
from .network import deploy_nodes, deployment_from_clusters, discover, sorted_key_lists
from .seeding import rng_for

# Criteria whose failure is analysed in the decisions ledger.
KNOWN_DISCREPANCIES = {
    3: "f = k/L = 0.04 is not a valid inheritance ratio at k=20 (f*k = 0.8)",
    4: "the printed capture bound drops the pool shrinkage from keys already in ring j-1",
    9: "a captured node exposes most links of its LID neighbours, so 2-Phase loses more links",
}


@dataclass
class CheckResult:
    criterion: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    @property
    def known(self) -> Optional[str]:
        return None if self.passed else KNOWN_DISCREPANCIES.get(self.criterion)

    @property
    def status(self) -> str:
        if self.passed:
            return "PASS"
        return "XFAIL" if self.known else "FAIL"

    def line(self) -> str:
        text = f"[{self.status}] criterion {self.criterion}: {self.title} ({self.seconds:.1f}s) {self.detail}"
        if self.known:
            text += f" | known: {self.known}"
        return text


def _trials(base: int, scale: float, floor: int = 20) -> int:
    return max(floor, int(round(base * scale)))


def _p(N, L, k, f=None, scheme=Scheme.TWO_PHASE) -> SchemeParams:
    return SchemeParams(N, L, k, None if scheme is Scheme.RANDOM else f, scheme)


def _z(est: Estimate, value: float) -> float:
    return abs(est.mean - value) / est.stderr if est.stderr > 0 else (0.0 if est.agrees(value) else math.inf)


# --- criteria 1-2: expected shared keys ---------------------------------------


def check_shared_keys(scale: float = 1.0, seed: int = 1) -> CheckResult:
    trials = _trials(10_000, scale)
    i = 50
    ds = (1, 2, 5, 10)
    pairs = [(i, i + d) for d in ds]
    tp = _p(200, 1000, 30, 0.2)
    rnd = _p(200, 1000, 30, scheme=Scheme.RANDOM)
    ok = True
    parts = []
    est = estimate_shared_keys(tp, pairs, trials, seed)
    for d, pair in zip(ds, pairs):
        val = float(analytics.expected_shared_keys(tp, d))
        good = est[pair].agrees(val)
        ok &= good
        parts.append(f"2P d={d}: {est[pair].mean:.4f} vs {val:.4f} z={_z(est[pair], val):.2f}")
    est = estimate_shared_keys(rnd, pairs, trials, seed + 1)
    for d, pair in zip(ds, pairs):
        good = est[pair].agrees(0.9)
        ok &= good
        parts.append(f"R d={d}: {est[pair].mean:.4f} z={_z(est[pair], 0.9):.2f}")
    return CheckResult(1, "shared-key means match the 2-Phase and random formulas", ok, "; ".join(parts))


def check_f_equals_x(scale: float = 1.0, seed: int = 2) -> CheckResult:
    ok = True
    parts = []
    for N, L, k in ((60, 1000, 100), (60, 400, 40)):
        p = _p(N, L, k, k / L)
        target = k * k / L
        worst = max(abs(float(analytics.expected_shared_keys(p, d)) - target) for d in range(1, 200))
        ok &= worst <= 1e-12
        parts.append(f"L={L} k={k}: max analytic gap {worst:.1e}")
        trials = _trials(5_000, scale)
        pairs = [(10, 10 + d) for d in (1, 2, 5)]
        est = estimate_shared_keys(p, pairs, trials, seed + L)
        for pair in pairs:
            ok &= est[pair].agrees(target)
            parts.append(f"d={pair[1] - pair[0]}: {est[pair].mean:.3f} z={_z(est[pair], target):.2f}")
    return CheckResult(2, "f = k/L makes 2-Phase overlap equal k^2/L", ok, "; ".join(parts))


# --- criterion 3: exclusivity -------------------------------------------------


def check_exclusivity(scale: float = 1.0, seed: int = 3) -> CheckResult:
    trials = _trials(50_000, scale)
    N, L, k = 50, 500, 20
    i, j = 10, 20
    ok = True
    parts = []

    def compare(label, params, a, b, value):
        nonlocal ok
        est = estimate_exclusivity(params, a, b, trials, seed + a * 100 + b).per_key
        good = est.agrees(value)
        ok &= good
        parts.append(f"{label}: {est.mean:.3e} vs {float(value):.3e} z={_z(est, value):.2f}")

    rnd = _p(N, L, k, scheme=Scheme.RANDOM)
    compare("prop2-eq1", rnd, i, j, analytics.exclusivity_random(rnd))
    for f_label, f in (("1/k", 1 / k), ("k/L", k / L)):
        try:
            tp = _p(N, L, k, f)
        except ParameterError as exc:
            ok = False
            parts.append(f"f={f_label}={f:g}: cannot build 2-Phase params ({exc})")
            continue
        compare(f"prop2-eq2 f={f_label}", tp, i, j, analytics.exclusivity_two_phase(tp))
        compare(f"prop2-eq3 f={f_label}", tp, i, i + 1, analytics.exclusivity_two_phase(tp, adjacent=True))
    return CheckResult(3, "exclusive-key frequency matches the closed forms", ok, "; ".join(parts))


# --- criteria 4-5: single-node capture -----------------------------------------


def check_capture_bound(scale: float = 1.0, seed: int = 4) -> CheckResult:
    trials = _trials(50_000, scale)
    N, L, k, f = 60, 600, 20, 0.1
    i, j = 20, 26
    ls = [l for l in range(1, N + 1) if l not in (i, j)]
    tp = _p(N, L, k, f)
    est = estimate_pcr_many(tp, i, j, ls, trials, seed)
    violations = []
    for l in ls:
        bound = float(analytics.pcr_two_phase_bound(tp, i, j, l))
        if not est[l].raw.at_most(bound):
            violations.append((l, est[l].raw.mean, bound))
    ok = not violations
    parts = [f"2P bound violated at {len(violations)}/{len(ls)} positions"]
    for l, mean, bound in violations[:3]:
        parts.append(f"l={l}: {mean:.4f} > {bound:.4f}")
    exact = analytics.pcr_two_phase_exact(tp, i, j, 1)
    parts.append(f"exact l=1: {float(exact):.4f}")

    rnd = _p(N, L, k, scheme=Scheme.RANDOM)
    eq10 = float(analytics.pcr_random(rnd))
    r_trials = _trials(10_000, scale)
    r_est = estimate_pcr_many(rnd, i, j, [1, 23, 60], r_trials, seed + 1)
    for l, e in r_est.items():
        ok &= e.raw.agrees(eq10)
        parts.append(f"R l={l}: {e.raw.mean:.4f} vs prop4-eq10 {eq10:.4f} z={_z(e.raw, eq10):.2f}")

    # the reduced random form, inside the pool used above and at full scale
    for LL, kk in [(600, kk) for kk in range(5, 13)] + [(10_000, 100)]:
        p = _p(1000, LL, kk, scheme=Scheme.RANDOM)
        a, b = float(analytics.pcr_random(p)), float(analytics.pcr_random(p, approximate=True))
        rel = abs(b - a) / a
        ok &= rel <= 0.01
        if kk in (12, 100):
            parts.append(f"reduced prop4-eq10 L={LL} k={kk}: rel err {rel:.2%}")
    return CheckResult(4, "capture bound dominates Monte Carlo; random form exact", ok, "; ".join(parts))


def check_symmetry(scale: float = 1.0, seed: int = 5) -> CheckResult:
    trials = _trials(20_000, scale)
    tp = _p(60, 600, 20, 0.1)
    i, j = 20, 26
    ok = True
    parts = []
    for t in (1, 3):
        left = estimate_pcr_many(tp, i, j, [i - t], trials, seed + 10 * t)[i - t].raw
        right = estimate_pcr_many(tp, i, j, [j + t], trials, seed + 10 * t + 1)[j + t].raw
        diff = difference(left, right)
        ok &= diff.agrees(0.0)
        parts.append(f"t={t}: {left.mean:.4f} vs {right.mean:.4f} z={_z(diff, 0.0):.2f}")
    c = 30
    for x in (1, 2, 5):
        lo = estimate_shared_keys(tp, [(c - x, c)], trials, seed + 100 + x)[(c - x, c)]
        hi = estimate_shared_keys(tp, [(c, c + x)], trials, seed + 200 + x)[(c, c + x)]
        diff = difference(lo, hi)
        ok &= diff.agrees(0.0)
        parts.append(f"overlap x={x}: {lo.mean:.3f} vs {hi.mean:.3f}")
    return CheckResult(5, "mirror positions give equal capture and overlap statistics", ok, "; ".join(parts))


# --- criteria 6-7: optimal inheritance ratios ---------------------------------


def _reduced_bound(k: int, L: int, f: float, y: int, side: str, t: int) -> float:
    """The fully reduced 2-Phase capture bound, written out independently."""
    x = k / L
    B = (f * L - k) / (L - k)
    p_il = x + B**t * (1 - x)
    if side == "outside":
        inner = x * (1 - B**t) * (1 - x * (2 * f - f * f)) + f * (1 - B**t) * B**y * (1 + f * x - 2 * x) * (1 - x)
    else:
        inner = x * (1 - B**t) * (1 - x * (2 * f - f * f)) - f * B ** (y - t) * (1 + f * x - 2 * x)
    return p_il**k + max(1 - inner, 0.0) ** k


def grid_optimal_f_two_phase(k: int, L: int, y: int, step: float = 1e-3) -> float:
    """f minimising the worst-case reduced bound over every capture position."""
    positions = [("inside", t) for t in range(1, math.ceil(y / 2) + 1)]
    positions += [("outside", t) for t in range(1, 4 * y + 1)]
    best_f, best_v = None, math.inf
    for f in np.arange(1 / k, 1.0, step):
        v = max(_reduced_bound(k, L, float(f), y, s, t) for s, t in positions)
        if v < best_v - 1e-15:
            best_f, best_v = float(f), v
    return best_f


def check_prop5(scale: float = 1.0, seed: int = 6) -> CheckResult:
    k, L = 100, 10_000
    params = _p(1000, L, k, 0.5)
    ok = True
    parts = []
    for y in (5, 10, 20):
        for side in ("worst", "inside"):
            f_star = float(analytics.optimal_f_two_phase(params, 1, y, side))
            ok &= abs(f_star - 1 / k) <= 0.005
            parts.append(f"y={y} {side}: f*={f_star:.4f}")
        g = grid_optimal_f_two_phase(k, L, y)
        ok &= abs(g - 1 / k) <= 0.005
        parts.append(f"grid={g:.4f}")
    return CheckResult(6, "capture-optimal f sits at 1/k", ok, "; ".join(parts))


def grid_optimal_f_2pwr(N: int, k: int, L: int, step: float = 1e-3) -> float:
    x = k / L
    fs = np.arange(1 / k, 1.0, step)
    vals = x * x * (1 - x) ** (N - 2) * (1 - fs) ** 4 / (1 - fs * x) ** (N - 1)
    return float(fs[int(np.argmax(vals))])


def check_prop3(scale: float = 1.0, seed: int = 7) -> CheckResult:
    N, k, L = 200, 40, 1000
    formula = float(analytics.optimal_f_2pwr(_p(N, L, k, 0.5, Scheme.TWO_PHASE_WR)))
    grid = grid_optimal_f_2pwr(N, k, L)
    ok = abs(formula - grid) <= 1e-3
    return CheckResult(7, "2PWR optimal f matches grid search", ok, f"formula {formula:.6f} grid {grid:.6f}")


# --- criteria 8-9: full-scale directional checks -------------------------------


def _full_scale(scheme: Scheme, k: int = 100, L: int = 10_000) -> SchemeParams:
    return _p(1000, L, k, 0.5, scheme)


def check_degree(scale: float = 1.0, seed: int = 8) -> CheckResult:
    trials = _trials(20, scale, floor=20)
    r = mean_degrees(_full_scale(Scheme.RANDOM), 50, [2, 3], trials, seed)
    t = mean_degrees(_full_scale(Scheme.TWO_PHASE), 50, [2, 3], trials, seed)
    gain = {q: t[q].mean / r[q].mean for q in (2, 3)}
    ok = all(t[q].mean > r[q].mean for q in (2, 3)) and gain[3] > gain[2]
    detail = "; ".join(f"q={q}: 2P {t[q].mean:.3f} R {r[q].mean:.3f} ratio {gain[q]:.3f}" for q in (2, 3))
    return CheckResult(8, "2-Phase degree advantage grows with q", ok, detail)


def check_security_directions(scale: float = 1.0, seed: int = 9) -> CheckResult:
    trials = _trials(20, scale, floor=20)
    parts = []
    r = pair_statistics(_full_scale(Scheme.RANDOM), 50, 1, trials, seed)
    t = pair_statistics(_full_scale(Scheme.TWO_PHASE), 50, 1, trials, seed)
    a = t["exclusive_localized"].mean > r["exclusive_localized"].mean
    parts.append(f"(a) exclusive/pair 2P {t['exclusive_localized'].mean:.4f} R {r['exclusive_localized'].mean:.4f}")
    probs = [
        pair_statistics(_full_scale(Scheme.TWO_PHASE, k), 50, 1, trials, seed)["has_exclusive_localized"].mean
        for k in (40, 70, 100, 150)
    ]
    b = all(x < y for x, y in zip(probs, probs[1:]))
    parts.append("(b) P[>=1 exclusive] by k " + " ".join(f"{v:.3f}" for v in probs))
    c = True
    for q in (1, 2):
        rr = capture_experiment(_full_scale(Scheme.RANDOM), 50, q, [1, 3, 5], "localized", trials, seed)
        tt = capture_experiment(_full_scale(Scheme.TWO_PHASE), 50, q, [1, 3, 5], "localized", trials, seed)
        for m in (1, 3, 5):
            c &= tt[m].links.mean < rr[m].links.mean
            parts.append(f"(c) q={q} m={m}: 2P {tt[m].links.mean:.2f} R {rr[m].links.mean:.2f}")
    return CheckResult(9, "exclusive keys and compromised links favour 2-Phase", a and b and c, "; ".join(parts))


# --- criterion 10: brute force on tiny networks ---------------------------------


def naive_graph(rings: dict, clusters: list, q: int) -> dict:
    cluster_of = {lid: c for c, members in enumerate(clusters) for lid in members}
    out = {}
    for a, b in itertools.combinations(sorted(rings), 2):
        if cluster_of[a] == cluster_of[b]:
            common = rings[a] & rings[b]
            if len(common) >= q:
                out[(a, b)] = common
    return out


def naive_compromised(rings: dict, clusters: list, links: dict, captured: set, scope: str) -> set:
    cluster_of = {lid: c for c, members in enumerate(clusters) for lid in members}
    lost = set()
    for (a, b), keys in links.items():
        if a in captured or b in captured:
            lost.add((a, b))
            continue
        if scope == "network":
            usable = [c for c in captured]
        else:
            usable = [c for c in captured if cluster_of[c] in (cluster_of[a], cluster_of[b])]
        exposed = set()
        for c in usable:
            exposed |= rings[c]
        if keys <= exposed:
            lost.add((a, b))
    return lost


def naive_exclusive(rings: dict, clusters: list, a: int, b: int, scope: str) -> int:
    cluster_of = {lid: c for c, members in enumerate(clusters) for lid in members}
    count = 0
    for key in rings[a] & rings[b]:
        holders = [
            n
            for n in rings
            if n not in (a, b)
            and key in rings[n]
            and (scope == "network" or cluster_of[n] in (cluster_of[a], cluster_of[b]))
        ]
        count += not holders
    return count


def _tiny_params(rng: np.random.Generator) -> SchemeParams:
    while True:
        N = int(rng.integers(2, 7))
        k = int(rng.integers(1, 4))
        L = int(rng.integers(k, 13))
        scheme = [Scheme.RANDOM, Scheme.TWO_PHASE, Scheme.TWO_PHASE_WR][int(rng.integers(3))]
        f = None
        if scheme is not Scheme.RANDOM:
            if k < 2:
                continue
            f = int(rng.integers(1, k)) / k
        try:
            return SchemeParams(N, L, k, f, scheme)
        except ParameterError:
            continue


def check_micro_oracle(scale: float = 1.0, seed: int = 10) -> CheckResult:
    instances = _trials(1000, scale, floor=200)
    rng = rng_for(seed)
    mismatches = []
    checked = 0
    for n in range(instances):
        p = _tiny_params(rng)
        rings = {r.lid: r.keys for r in assign(p, int(rng.integers(2**31)))}
        dep = deploy_nodes(p.N, int(rng.integers(1, p.N + 1)), rng)
        q = int(rng.integers(1, 4))
        g = discover(rings, dep, q)
        clusters = [list(c) for c in dep.clusters]
        expect = naive_graph(rings, clusters, q)
        if dict(g.shared_keys) != expect:
            mismatches.append(f"instance {n}: discover")
            continue
        for edge in expect:
            for scope in ("network", "localized"):
                if exclusive_key_count(g, dep, edge, scope) != naive_exclusive(rings, clusters, *edge, scope):
                    mismatches.append(f"instance {n}: exclusive {edge} {scope}")
        for size in range(p.N + 1):
            for captured in itertools.combinations(range(1, p.N + 1), size):
                for scope in ("network", "localized"):
                    rep = compromised_links(g, dep, capture(g, captured, scope))
                    want = naive_compromised(rings, clusters, expect, set(captured), scope)
                    checked += 1
                    if set(rep.compromised) != want or rep.compromised_raw != len(want):
                        mismatches.append(f"instance {n}: capture {captured} {scope}")
    ok = not mismatches
    detail = f"{instances} instances, {checked} capture scenarios, {len(mismatches)} mismatches"
    if mismatches:
        detail += ": " + ", ".join(mismatches[:3])
    return CheckResult(10, "tiny networks agree with brute force", ok, detail)


# --- criterion 11: key eligibility -----------------------------------------------

# (rings, clusters, q, neighborhood, expected sorted lists)
ELIGIBILITY_FIXTURES = [
    (
        {1: {1, 2, 3, 4}, 2: {1, 2, 3, 5}, 3: {2, 3, 6}, 4: {3, 7, 8}},
        [[1, 2, 3, 4]],
        2,
        "cluster",
        {(1, 2): [(1, 1.0), (2, 1.0), (3, 0.5)], (1, 3): [(2, 1.0), (3, 0.5)], (2, 3): [(2, 1.0), (3, 0.5)]},
    ),
    (
        {1: {10, 11, 12}, 2: {10, 11, 12}, 3: {11, 12}, 4: {12}},
        [[1, 2, 3], [4]],
        2,
        "network",
        {(1, 2): [(10, 1.0), (11, 1.0), (12, 0.5)], (1, 3): [(11, 1.0), (12, 0.5)], (2, 3): [(11, 1.0), (12, 0.5)]},
    ),
    (
        {1: {1, 2, 3}, 2: {1, 2, 3}, 3: {1, 2, 3}, 4: {1, 2}, 5: {1}, 6: {1}},
        [[1, 2, 3, 4, 5, 6]],
        3,
        "cluster",
        {(1, 2): [(3, 1.0), (2, 0.5), (1, 0.25)], (1, 3): [(3, 1.0), (2, 0.5), (1, 0.25)], (2, 3): [(3, 1.0), (2, 0.5), (1, 0.25)]},
    ),
]


def check_eligibility(scale: float = 1.0, seed: int = 11) -> CheckResult:
    bad = []
    for n, (rings, clusters, q, hood, expected) in enumerate(ELIGIBILITY_FIXTURES):
        dep = deployment_from_clusters(clusters)
        g = discover({lid: frozenset(r) for lid, r in rings.items()}, dep, q)
        got = sorted_key_lists(g, dep, hood)
        if got != expected:
            bad.append(f"fixture {n}: {got}")
    values_ok = [float(analytics.eligibility_value(h)) for h in (0, 1, 2, 4)] == [1.0, 1.0, 0.5, 0.25]
    ok = not bad and values_ok
    return CheckResult(11, "key eligibility ordering", ok, "; ".join(bad) or "3 fixtures match")


# --- criterion 12: determinism ---------------------------------------------------

DETERMINISM_CONFIG = """{
  "params": {"N": 120, "L": 1200, "k": [20, 30], "f": 0.5, "scheme": ["random", "two-phase"]},
  "density": 15,
  "q": [1, 2],
  "capture_counts": [1, 3],
  "scope": "localized",
  "trials": 4,
  "seed": 99,
  "metrics": ["degree", "exclusive-pair", "compromised", "prop1", "prop2-eq1", "prop4-eq10", "prop6-bound"],
  "positions": {"d": [1, 4], "i": 3, "j": 9}
}
"""


def check_determinism(scale: float = 1.0, seed: int = 12) -> CheckResult:
    from .cli import main

    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "config.json")
        with open(cfg, "w") as fh:
            fh.write(DETERMINISM_CONFIG)
        for n, workers in enumerate((1, 1, 4)):
            out = os.path.join(tmp, f"run{n}.csv")
            code = main(["simulate", "--config", cfg, "--out", out, "--workers", str(workers)])
            if code != 0:
                return CheckResult(12, "simulate output is reproducible", False, f"exit code {code}")
            with open(out, "rb") as fh:
                outputs.append(fh.read())
    ok = outputs[0] == outputs[1] == outputs[2]
    detail = f"{len(outputs[0])} bytes; identical across repeat and 1 vs 4 workers: {ok}"
    return CheckResult(12, "simulate output is reproducible", ok, detail)


CHECKS: dict = {
    1: check_shared_keys,
    2: check_f_equals_x,
    3: check_exclusivity,
    4: check_capture_bound,
    5: check_symmetry,
    6: check_prop5,
    7: check_prop3,
    8: check_degree,
    9: check_security_directions,
    10: check_micro_oracle,
    11: check_eligibility,
    12: check_determinism,
}


def run_check(n: int, scale: float = 1.0, seed: Optional[int] = None) -> CheckResult:
    fn: Callable = CHECKS[n]
    start = time.perf_counter()
    result = fn(scale) if seed is None else fn(scale, seed + n)
    result.seconds = time.perf_counter() - start
    return result


def run_checks(scale: float = 1.0, seed: Optional[int] = None, only=None) -> list:
    return [run_check(n, scale, seed) for n in sorted(CHECKS) if only is None or n in only]
