"""Closed-form connectivity and capture-resilience metrics.

All evaluators are pure functions of :class:`~keypredist.keyspace.SchemeParams`
and position arguments. Scalar results are :class:`Evaluation` objects: plain
floats that additionally carry the formula id, whether the expression is exact
or an approximation, and whether the raw value had to be clamped into [0, 1].

Notation: ``x = k/L`` and ``B = (fL - k)/(L - k)``; LIDs ``i < j`` are the
endpoints of a link and ``l`` the captured node; ``y = j - i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .keyspace import ParameterError, Scheme, SchemeParams

_CLAMP_SLACK = 1e-12


class DomainError(ValueError):
    """Arguments fall outside the range where a formula is defined."""


class UnsupportedFormula(DomainError):
    """No closed form exists for the requested scheme."""


class Evaluation(float):
    """A float tagged with provenance metadata."""

    formula: str
    exact: bool
    clamped: bool
    flags: tuple
    extra: dict

    def __new__(cls, value, formula, exact=True, clamped=False, flags=(), extra=None):
        obj = super().__new__(cls, value)
        obj.formula = formula
        obj.exact = exact
        obj.clamped = clamped
        obj.flags = tuple(flags)
        obj.extra = dict(extra or {})
        return obj

    def __repr__(self):
        tags = [self.formula, "exact" if self.exact else "approx"]
        if self.clamped:
            tags.append("clamped")
        tags.extend(self.flags)
        return f"Evaluation({float(self)!r}, {', '.join(tags)})"


def _prob(value: float, formula: str, exact: bool = True, flags=(), extra=None) -> Evaluation:
    v = float(value)
    clamped = False
    if v < 0.0 or v > 1.0:
        clamped = abs(v - min(max(v, 0.0), 1.0)) > _CLAMP_SLACK
        v = min(max(v, 0.0), 1.0)
    return Evaluation(v, formula, exact, clamped, flags, extra)


def _scheme(params: SchemeParams, scheme) -> Scheme:
    return params.scheme if scheme is None else Scheme.parse(scheme)


def _need_f(params: SchemeParams) -> float:
    if params.f is None:
        raise ParameterError("this formula needs an inheritance ratio f")
    return params.f


def _decay(params: SchemeParams) -> float:
    f = _need_f(params)
    return (f * params.L - params.k) / (params.L - params.k)


# --- expected overlap -------------------------------------------------------


def expected_shared_keys(params: SchemeParams, d: int, scheme=None) -> Evaluation:
    """Mean number of keys shared by two nodes ``d`` LIDs apart."""
    scheme = _scheme(params, scheme)
    k, x = params.k, params.x
    if d < 0:
        raise DomainError(f"LID distance must be >= 0, got {d}")
    if scheme is Scheme.RANDOM:
        return Evaluation(k * k / params.L, "prop1")
    if scheme is Scheme.TWO_PHASE_WR:
        raise UnsupportedFormula("no closed-form overlap for 2PWR; estimate it by simulation")
    B = _decay(params)
    return Evaluation(k * (x + B**d * (1 - x)), "prop1")


def expected_shared_keys_recurrence(params: SchemeParams, d: int) -> float:
    """Iterate X_{r+1} = B X_r + k^2 (1-f)/(L-k) from X_0 = k."""
    f = _need_f(params)
    k, L = params.k, params.L
    B = _decay(params)
    X = float(k)
    for _ in range(d):
        X = X * B + k * (k - f * k) / (L - k)
    return X


@dataclass(frozen=True)
class ShareCountDistribution:
    scheme: Scheme
    d: int
    pmf: np.ndarray = field(repr=False)
    approximate: bool = False

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def at_least(self, q: int) -> float:
        return float(self.pmf[q:].sum())


def share_probability(params: SchemeParams, d: int) -> float:
    """Per-key probability ``x + B^d (1 - x)`` of a 2-Phase pair ``d`` apart."""
    x = params.x
    return x + _decay(params) ** d * (1 - x)


def share_count_pmf(params: SchemeParams, d: int, scheme=None) -> ShareCountDistribution:
    """Distribution of the number of keys two nodes share.

    Random: exact hypergeometric over a pool of L with two k-draws.
    2-Phase: Binomial(k, x + B^d (1-x)) approximation.
    """
    scheme = _scheme(params, scheme)
    k, L = params.k, params.L
    support = np.arange(k + 1)
    if scheme is Scheme.RANDOM:
        pmf = stats.hypergeom.pmf(support, L, k, k)
        return ShareCountDistribution(scheme, d, pmf, approximate=False)
    if scheme is Scheme.TWO_PHASE_WR:
        raise UnsupportedFormula("no closed-form overlap distribution for 2PWR")
    if d < 0:
        raise DomainError(f"LID distance must be >= 0, got {d}")
    p = min(max(share_probability(params, d), 0.0), 1.0)
    pmf = stats.binom.pmf(support, k, p)
    return ShareCountDistribution(scheme, d, pmf, approximate=True)


def prob_share_at_least(params: SchemeParams, d: int, q: int, scheme=None) -> float:
    return share_count_pmf(params, d, scheme).at_least(q)


def overlap_step(params: SchemeParams, size: int, dist: np.ndarray, scheme=None) -> np.ndarray:
    """Advance the law of ``|A & ring_r|`` one LID, for a fixed key set ``A``.

    ``A`` has ``size`` keys, all inside the predecessor's ring at the start of
    the chain; the next ring inherits ``f*k`` keys (hypergeometric over the
    predecessor's ring) and draws the rest from the remaining pool.
    """
    scheme = _scheme(params, scheme)
    k, L, fk, fresh = params.k, params.L, params.inherited, params.fresh
    out = np.zeros(size + 1)
    for c, w in enumerate(dist):
        if w == 0.0:
            continue
        h = np.arange(min(c, fk) + 1)
        p_h = stats.hypergeom.pmf(h, k, c, fk)
        for hv, ph in zip(h, p_h):
            if ph == 0.0:
                continue
            if scheme is Scheme.TWO_PHASE:
                avail, pool = size - c, L - k
            else:
                avail, pool = size - hv, L - fk
            g = np.arange(min(avail, fresh) + 1)
            p_g = stats.hypergeom.pmf(g, pool, avail, fresh)
            np.add.at(out, hv + g, w * ph * p_g)
    return out


def share_count_exact(params: SchemeParams, d: int, scheme=None) -> ShareCountDistribution:
    """Exact law of the overlap of two 2-Phase or 2PWR rings ``d`` LIDs apart."""
    scheme = _scheme(params, scheme)
    if scheme is Scheme.RANDOM:
        return share_count_pmf(params, d, scheme)
    k = params.k
    dist = np.zeros(k + 1)
    dist[k] = 1.0
    for _ in range(d):
        dist = overlap_step(params, k, dist, scheme)
    return ShareCountDistribution(scheme, d, dist, approximate=False)


def pcr_two_phase_exact(params: SchemeParams, i: int, j: int, l: int) -> Evaluation:
    """Exact capture probability of link (i, j) for a captured LID outside [i, j].

    The overlap ``S`` of i and j has the law of :func:`share_count_exact`; the
    number of S-keys carried ``t`` LIDs further is again a hypergeometric
    chain, and capture succeeds when all of them survive. The inheritance
    kernel is symmetric in LID order, so ``l = i - t`` and ``l = j + t`` agree.
    """
    side, t = capture_position(i, j, l)
    if side != "outside":
        raise DomainError("exact evaluation is only available for l < i or l > j")
    scheme = params.scheme if params.scheme is not Scheme.RANDOM else Scheme.TWO_PHASE
    overlap = share_count_exact(params, j - i, scheme).pmf
    total = 0.0
    for size, w in enumerate(overlap):
        if w == 0.0:
            continue
        dist = np.zeros(size + 1)
        dist[size] = 1.0
        for _ in range(t):
            dist = overlap_step(params, size, dist, scheme)
        total += w * dist[size]
    return _prob(total, "pcr-exact-outside")


# --- key exclusivity under any number of captures ---------------------------


def exclusivity_random(params: SchemeParams, N: Optional[int] = None) -> Evaluation:
    """Probability that a given pool key is held by i and j and nobody else."""
    N = params.N if N is None else N
    if N < 2:
        raise DomainError(f"need N >= 2, got {N}")
    x = params.x
    return _prob(x * x * (1 - x) ** (N - 2), "prop2-eq1")


def exclusivity_two_phase(
    params: SchemeParams, N: Optional[int] = None, adjacent: bool = False
) -> Evaluation:
    """2-Phase counterpart of :func:`exclusivity_random` for interior LIDs.

    ``adjacent`` selects the ``j = i + 1`` case.
    """
    N = params.N if N is None else N
    f = _need_f(params)
    x = params.x
    enter = x * (1 - f) / (1 - x)
    if adjacent:
        if N < 4:
            raise DomainError(f"adjacent-pair form needs N >= 4, got {N}")
        return _prob((1 - f) ** 2 * f * x * (1 - enter) ** (N - 4), "prop2-eq3")
    if N < 5:
        raise DomainError(f"non-adjacent form needs N >= 5, got {N}")
    return _prob((1 - f) ** 4 / (1 - x) * x * x * (1 - enter) ** (N - 5), "prop2-eq2")


def exclusivity_2pwr(params: SchemeParams, N: Optional[int] = None) -> Evaluation:
    """Exclusivity under 2PWR as the scaled random-scheme value."""
    N = params.N if N is None else N
    f = _need_f(params)
    x = params.x
    base = exclusivity_random(params, N)
    return _prob(base * (1 - f) ** 4 / (1 - f * x) ** (N - 1), "prop3-eq4", exact=False)


def exclusivity_2pwr_expanded(params: SchemeParams, N: Optional[int] = None) -> Evaluation:
    """The expanded product form printed alongside the 2PWR result."""
    N = params.N if N is None else N
    f = _need_f(params)
    x = params.x
    v = (1 - f) ** 4 / (1 - f * x) ** (N - 1) * x * x * (1 - f * x) ** (N - 2)
    return _prob(v, "prop3-eq4-expanded", exact=False)


def _holding_chain(params: SchemeParams, scheme: Scheme) -> tuple:
    """(P[node 1 holds a], P[hold | pred holds], P[hold | pred lacks]) for one key."""
    k, L, x = params.k, params.L, params.x
    if scheme is Scheme.RANDOM:
        return x, x, x
    f = _need_f(params)
    fk = f * k
    if scheme is Scheme.TWO_PHASE:
        enter = (k - fk) / (L - k)
        return x, f, enter
    enter = (k - fk) / (L - fk)
    return x, f + (1 - f) * enter, enter


def exclusivity_exact(params: SchemeParams, i: int, j: int, scheme=None) -> Evaluation:
    """Exact probability that a given key is held by exactly LIDs i and j.

    Key membership along the LID order is a two-state Markov chain under all
    three schemes, so the probability is a product of transition terms. This
    covers boundary LIDs and 2PWR, which the closed forms above do not.
    """
    scheme = _scheme(params, scheme)
    N = params.N
    if not (1 <= i <= N and 1 <= j <= N and i != j):
        raise DomainError(f"need distinct LIDs in [1, {N}], got {i}, {j}")
    start, stay, enter = _holding_chain(params, scheme)
    want = {i, j}
    prob = start if 1 in want else 1 - start
    for lid in range(2, N + 1):
        prev_holds = (lid - 1) in want
        p_hold = stay if prev_holds else enter
        prob *= p_hold if lid in want else 1 - p_hold
    return _prob(prob, "exclusivity-chain")


def optimal_f_2pwr(params: SchemeParams, N: Optional[int] = None) -> Evaluation:
    """Inheritance ratio maximising 2PWR exclusivity: ((N-1)x - 4)/((N-5)x).

    Values outside [1/k, 1) are clamped and flagged ``infeasible``/``clamped``.
    """
    N = params.N if N is None else N
    x = params.x
    denom = (N - 5) * x
    if denom <= 0:
        raise DomainError(f"optimum undefined for N={N} (needs N > 5)")
    raw = ((N - 1) * x - 4) / denom
    lo, hi = 1.0 / params.k, 1.0
    flags = []
    value = raw
    if raw <= 0:
        flags.append("infeasible")
    if raw < lo:
        value = lo
    elif raw >= hi:
        value = math.nextafter(hi, 0.0)
    return Evaluation(
        value, "prop3-fopt", exact=True, clamped=value != raw, flags=flags, extra={"raw": raw}
    )


# --- single-node capture ----------------------------------------------------


def e_z_expected(params: SchemeParams, beta: int, i: int, j: int, l: int) -> Evaluation:
    """Expected number of i's keys not shared with l that node j holds."""
    k, x = params.k, params.x
    if not 0 <= beta < k:
        raise DomainError(f"need 0 <= beta < k, got beta={beta}")
    if j <= i:
        raise DomainError(f"need j > i, got i={i}, j={j}")
    B = _decay(params)
    if l < i:
        return Evaluation((k - beta) * (x + B ** (j - i) * (1 - x)), "lemma2")
    if i < l <= i + math.ceil((j - i) / 2):
        return Evaluation((k - beta) * x * (1 - B ** (j - l)), "lemma2")
    raise DomainError(f"l={l} outside the range l < i or i < l <= i + ceil((j-i)/2)")


def log_comb_ratio(a: int, b: int, r: int) -> float:
    """log(C(a, r) / C(b, r)); ``-inf`` when C(a, r) vanishes."""
    if r < 0 or r > b:
        raise DomainError(f"C({b}, {r}) is zero")
    if r > a or a < 0:
        return -math.inf
    return math.lgamma(a + 1) - math.lgamma(a - r + 1) - math.lgamma(b + 1) + math.lgamma(b - r + 1)


def capture_position(i: int, j: int, l: int) -> tuple:
    """Map captured LID ``l`` to ``(side, t)`` using the mirror symmetry.

    ``side`` is ``"outside"`` for ``l < i`` or ``l > j`` and ``"inside"`` for
    ``i < l < j``; ``t`` is the LID offset to the nearer endpoint.
    """
    if not i < j:
        raise DomainError(f"need i < j, got i={i}, j={j}")
    if l in (i, j):
        raise DomainError("the captured node must differ from both endpoints")
    if l < i:
        return "outside", i - l
    if l > j:
        return "outside", l - j
    t = min(l - i, j - l)
    return "inside", t


def pcr_random(params: SchemeParams, approximate: bool = False) -> Evaluation:
    """Probability that one random capture exposes every key of a link, random scheme.

    The exact form sums the hypergeometric overlap against the chance that j
    misses all of i's keys outside the captured ring; ``approximate=True``
    gives the reduced ``x^k + (1 - x + x^2)^k`` form.
    """
    k, L, x = params.k, params.L, params.x
    if approximate:
        return _prob(x**k + (1 - x + x * x) ** k, "prop6-eq12", exact=False)
    pmf = share_count_pmf(params, 1, Scheme.RANDOM).pmf
    miss = np.array([math.exp(log_comb_ratio(L - k + b, L, k)) for b in range(k + 1)])
    return _prob(pmf[k] + float(np.dot(pmf, miss)), "prop4-eq10")


def _pcr_terms(params: SchemeParams, y: int, side: str, t: int) -> tuple:
    """Per-key success probabilities used by the 2-Phase capture bound."""
    x = params.x
    B = _decay(params)
    p_il = x + B**t * (1 - x)
    if side == "outside":
        p_j = x + B**y * (1 - x)
    else:
        p_j = (1 - B ** (y - t)) * x
    return p_il, p_j


def pcr_two_phase_bound(
    params: SchemeParams, i: int, j: int, l: int, reduced: bool = False
) -> Evaluation:
    """Bound on the probability that capturing ``l`` exposes link (i, j), 2-Phase.

    With ``reduced=True`` the fully simplified closed form is returned instead
    of the binomial-weighted sum.
    """
    k, L = params.k, params.L
    f = _need_f(params)
    fk = params.inherited
    side, t = capture_position(i, j, l)
    y = j - i
    p_il, p_j = _pcr_terms(params, y, side, t)
    if reduced:
        x = params.x
        B = _decay(params)
        shrink = 1 - x * (2 * f - f * f)
        if side == "outside":
            inner = x * (1 - B**t) * shrink + f * (1 - B**t) * B**y * (1 + f * x - 2 * x) * (1 - x)
            base = 1 - inner
        else:
            base = 1 - x * (1 - B**t) * shrink - f * B ** (y - t) * (1 + f * x - 2 * x)
        value = p_il**k + max(base, 0.0) ** k
        return _prob(value, "prop5-eq11", exact=False, extra={"side": side, "t": t})
    pmf = stats.binom.pmf(np.arange(k + 1), k, min(max(p_il, 0.0), 1.0))
    total = pmf[k]
    for beta in range(k + 1):
        ratio = math.exp(log_comb_ratio(L - 2 * k + beta, L - k, k - fk))
        total += pmf[beta] * ratio * (1 - f * p_j) ** (k - beta)
    return _prob(total, "prop4-eq9", exact=False, extra={"side": side, "t": t})


def link_vulnerability_objective(params: SchemeParams, f: float, t: int, y: int, side: str) -> float:
    """Quantity whose maximisation over f minimises the 2-Phase capture bound."""
    k, L = params.k, params.L
    x = k / L
    B = (f * L - k) / (L - k)
    shrink = 1 - x * (2 * f - f * f)
    if side == "outside":
        return x * (1 - B**t) * shrink + f * (1 - B**t) * B**y * (1 + f * x - 2 * x) * (1 - x)
    if side == "inside":
        return x * (1 - B**t) * shrink - f * B ** (y - t) * (1 + f * x - 2 * x)
    raise ValueError(f"side must be 'outside' or 'inside', got {side!r}")


_INV_PHI = (math.sqrt(5) - 1) / 2


def golden_section_max(fn: Callable[[float], float], a: float, b: float, tol: float = 1e-6) -> float:
    """Maximiser of a unimodal ``fn`` on ``[a, b]`` to within ``tol``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    return (a + b) / 2


def worst_case_objective(params: SchemeParams, f: float, y: int, t_max: Optional[int] = None) -> float:
    """Smallest objective over every capture position around a link of span ``y``.

    Inside positions run over ``1 <= t <= ceil(y/2)``, outside positions over
    ``1 <= t <= t_max`` (default ``4*y``).
    """
    t_max = 4 * y if t_max is None else t_max
    inside = (link_vulnerability_objective(params, f, t, y, "inside") for t in range(1, math.ceil(y / 2) + 1))
    outside = (link_vulnerability_objective(params, f, t, y, "outside") for t in range(1, t_max + 1))
    return min(itertools.chain(inside, outside))


def optimal_f_two_phase(
    params: SchemeParams, t: int, y: int, side: str = "worst", grid: int = 400, tol: float = 1e-6
) -> Evaluation:
    """Inheritance ratio in [1/k, 1) minimising the capture bound.

    ``side`` is ``"outside"`` (captured LID i-t or j+t), ``"inside"`` (i+t or
    j-t) or ``"worst"``, which maximises the minimum over all positions and
    ignores ``t``. A coarse grid locates the best bracket, then golden-section
    search refines it; the grid optimum and the lower end stay candidates so
    boundary optima are kept.
    """
    if t < 1 or y < 1:
        raise DomainError(f"need t >= 1 and y >= 1, got t={t}, y={y}")
    lo = 1.0 / params.k
    hi = math.nextafter(1.0, 0.0)

    if side == "worst":

        def objective(f: float) -> float:
            return worst_case_objective(params, f, y)

    else:

        def objective(f: float) -> float:
            return link_vulnerability_objective(params, f, t, y, side)

    pts = np.linspace(lo, hi, grid + 1)
    vals = [objective(float(p)) for p in pts]
    best = int(np.argmax(vals))
    a = float(pts[max(best - 1, 0)])
    b = float(pts[min(best + 1, grid)])
    refined = golden_section_max(objective, a, b, tol)
    candidates = [refined, float(pts[best]), lo]
    f_star = max(candidates, key=lambda v: (objective(v), -v))
    return Evaluation(
        f_star, "prop5-fopt", exact=False, extra={"objective": objective(f_star), "side": side}
    )


def comparative_f_upper_bound(params: SchemeParams) -> Evaluation:
    """Largest f for which 2-Phase capture vulnerability stays below Random."""
    x = params.x
    value = x * (2 - x) / (1 + 2 * x)
    flags = () if value >= 1.0 / params.k else ("empty-range",)
    return Evaluation(value, "prop6-bound", flags=flags)


def cluster_single_capture(
    params: SchemeParams,
    N: Optional[int] = None,
    M: Optional[int] = None,
    y_gap: Optional[int] = None,
    pcr: Optional[float] = None,
) -> Evaluation:
    """``1 - (1 - PCR)^M`` with PCR taken at LID offset ceil(N/M), as printed.

    ``extra["complement"]`` holds one minus the value. ``pcr`` overrides the
    capture probability (the bound is used otherwise).
    """
    N = params.N if N is None else N
    if M is None or M < 2:
        raise DomainError(f"cluster density M must be >= 2, got {M}")
    offset = math.ceil(N / M)
    if pcr is None:
        y = offset if y_gap is None else int(y_gap)
        i = offset + 1
        pcr = float(pcr_two_phase_bound(params, i, i + y, i - offset))
    value = 1 - (1 - pcr) ** M
    ev = _prob(value, "prop7", exact=False)
    ev.extra.update(complement=1 - float(ev), pcr=pcr, offset=offset)
    return ev


def vc_metric(params: SchemeParams, N: Optional[int], i: int, j: int, scheme=None) -> Evaluation:
    """Expected capture probability of link (i, j) under one uniform capture."""
    scheme = _scheme(params, scheme)
    N = params.N if N is None else N
    if N < 3:
        raise DomainError(f"need N >= 3, got {N}")
    if scheme is Scheme.RANDOM:
        v = pcr_random(params)
        return _prob(float(v), "prop8-vc", exact=v.exact)
    if scheme is Scheme.TWO_PHASE_WR:
        raise UnsupportedFormula("capture bound is only available for 2-Phase")
    lo, hi = min(i, j), max(i, j)
    terms = [float(pcr_two_phase_bound(params, lo, hi, l)) for l in range(1, N + 1) if l not in (lo, hi)]
    return _prob(math.fsum(terms) / (N - 2), "prop8-vc", exact=False)


def eligibility_value(other_holders: int) -> Evaluation:
    if other_holders < 0:
        raise DomainError("holder count cannot be negative")
    return Evaluation(1.0 if other_holders == 0 else 1.0 / other_holders, "eq14")
