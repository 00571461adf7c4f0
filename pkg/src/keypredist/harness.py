"""Experiment configs, the metric registry and CSV/JSON reports.

A config is a JSON object::

    {
      "params": {"N": 1000, "L": 10000, "k": [40, 100], "f": 0.5,
                 "scheme": ["random", "two-phase"]},
      "density": 50,
      "q": [2, 3],
      "capture_counts": [1, 3, 5],
      "scope": "localized",
      "trials": 20,
      "seed": 7,
      "metrics": ["degree", "compromised"],
      "positions": {"d": [1, 2]},
      "output": "results.csv"
    }

List-valued entries of ``params`` span a grid. ``N``, ``L``, ``k``, ``f``,
``trials`` and ``seed`` have no defaults (``f`` may be null for the random
scheme). Every grid point draws its random streams from a hash of the point
itself, so results do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Optional

from . import adversary, analytics
from .analytics import DomainError, Evaluation
from .estimate import Estimate
from .keyspace import ParameterError, Scheme, SchemeParams
from .seeding import POINT, child_seed, stable_hash

COLUMNS = (
    "metric", "scheme", "N", "L", "k", "f", "q", "M", "m", "scope",
    "analytic", "empirical", "stderr", "trials", "flags",
)  # fmt: skip

SIGMAS = 3.0


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def fmt_float(v: Optional[float]) -> str:
    """Nine significant digits, always recognisably a float."""
    if v is None:
        return ""
    text = format(float(v), ".9g")
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


@dataclass
class Row:
    metric: str
    scheme: str
    N: Optional[int] = None
    L: Optional[int] = None
    k: Optional[int] = None
    f: Optional[float] = None
    q: Optional[int] = None
    M: Optional[int] = None
    m: Optional[int] = None
    scope: str = ""
    analytic: Optional[float] = None
    empirical: Optional[float] = None
    stderr: Optional[float] = None
    trials: Optional[int] = None
    flags: list = field(default_factory=list)

    def cells(self) -> dict:
        out = {}
        for name in COLUMNS:
            v = getattr(self, name)
            if name == "flags":
                out[name] = ";".join(v)
            elif v is None:
                out[name] = ""
            elif name in ("f", "analytic", "empirical", "stderr"):
                out[name] = fmt_float(v)
            else:
                out[name] = str(v)
        return out

    @classmethod
    def from_cells(cls, cells: dict) -> "Row":
        kw: dict[str, Any] = {}
        for f_ in fields(cls):
            raw = cells.get(f_.name, "")
            if f_.name == "flags":
                kw["flags"] = [t for t in raw.split(";") if t]
            elif f_.name in ("metric", "scheme", "scope"):
                kw[f_.name] = raw
            elif raw == "":
                kw[f_.name] = None
            elif f_.name in ("f", "analytic", "empirical", "stderr"):
                kw[f_.name] = float(raw)
            else:
                kw[f_.name] = int(raw)
        return cls(**kw)


@dataclass
class MetricsReport:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row.cells())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([row.cells() for row in self.rows], indent=2) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError("unexpected report header")
        return cls([Row.from_cells(r) for r in reader])

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls([Row.from_cells(r) for r in json.loads(text)])

    def select(self, metric_prefix: str, **match) -> list:
        return [
            r
            for r in self.rows
            if r.metric.startswith(metric_prefix)
            and all(getattr(r, key) == value for key, value in match.items())
        ]


# --- config -----------------------------------------------------------------

EMPIRICAL_METRICS = ("degree", "exclusive-pair", "has-exclusive", "compromised")
FORMULAS = (
    "prop1", "prop2-eq1", "prop2-eq2", "prop2-eq3", "prop3-eq4", "prop3-fopt",
    "prop4-eq9", "prop4-eq10", "prop5-fopt", "prop6-bound", "prop7", "prop8-vc",
    "lemma2", "eq14",
)  # fmt: skip
METRICS = EMPIRICAL_METRICS + FORMULAS
_GRID_KEYS = ("N", "L", "k", "f", "scheme")


@dataclass(frozen=True)
class ExperimentConfig:
    points: tuple  # tuple of SchemeParams
    density: Optional[int]
    q: tuple
    capture_counts: tuple
    scope: str
    trials: int
    seed: int
    metrics: tuple
    positions: dict
    output: Optional[str] = None
    workers: int = 1


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}{key}", "required field is missing")
    return obj[key]


def _int(v, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {v}")
    return v


def parse_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("$", "config must be a JSON object")
    params = _need(obj, "params", "")
    if not isinstance(params, dict):
        raise ConfigError("params", "must be an object")
    grid = {}
    for key in _GRID_KEYS:
        if key == "scheme":
            values = _as_list(params.get("scheme", "random"))
            try:
                grid[key] = [Scheme.parse(v) for v in values]
            except ValueError as exc:
                raise ConfigError("params.scheme", str(exc)) from None
            continue
        values = _as_list(_need(params, key, "params."))
        for n, v in enumerate(values):
            path = f"params.{key}" + (f"[{n}]" if len(values) > 1 else "")
            if key == "f":
                if v is not None and not isinstance(v, (int, float)):
                    raise ConfigError(path, f"expected a number or null, got {v!r}")
            else:
                _int(v, path, 1)
        grid[key] = values
    points = []
    seen = set()
    for N, L, k, f, scheme in itertools.product(*(grid[key] for key in _GRID_KEYS)):
        if scheme is Scheme.RANDOM:
            f = None
        sig = (N, L, k, f, scheme)
        if sig in seen:
            continue
        seen.add(sig)
        try:
            points.append(SchemeParams(N, L, k, f, scheme))
        except ParameterError as exc:
            raise ConfigError("params", f"(N={N}, L={L}, k={k}, f={f}, {scheme.value}): {exc}") from None

    metrics = _as_list(obj.get("metrics", ["degree"]))
    for n, name in enumerate(metrics):
        if name not in METRICS:
            raise ConfigError(f"metrics[{n}]", f"unknown metric {name!r}; known: {', '.join(METRICS)}")
    density = obj.get("density")
    if density is None and "cluster_count" in obj:
        cc = _int(obj["cluster_count"], "cluster_count", 1)
        density = math.ceil(points[0].N / cc)
    if density is not None:
        density = _int(density, "density", 1)
    qs = tuple(_int(v, f"q[{n}]", 1) for n, v in enumerate(_as_list(obj.get("q", [1]))))
    caps = tuple(
        _int(v, f"capture_counts[{n}]", 0) for n, v in enumerate(_as_list(obj.get("capture_counts", [1])))
    )
    try:
        scope = adversary.Scope.parse(obj.get("scope", "network")).value
    except ValueError as exc:
        raise ConfigError("scope", str(exc)) from None
    trials = _int(_need(obj, "trials", ""), "trials", 1)
    seed = _int(_need(obj, "seed", ""), "seed", 0)
    positions = obj.get("positions", {})
    if not isinstance(positions, dict):
        raise ConfigError("positions", "must be an object")
    needs_density = {"degree", "exclusive-pair", "has-exclusive", "compromised", "prop7"}
    if density is None and needs_density & set(metrics):
        raise ConfigError("density", "required by the selected metrics")
    if density is not None:
        for p in points:
            if density > p.N:
                raise ConfigError("density", f"must be <= N={p.N}, got {density}")
    workers = _int(obj.get("workers", 1), "workers", 1)
    return ExperimentConfig(
        points=tuple(points),
        density=density,
        q=qs,
        capture_counts=caps,
        scope=scope,
        trials=trials,
        seed=seed,
        metrics=tuple(metrics),
        positions=dict(positions),
        output=obj.get("output"),
        workers=workers,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"not valid JSON: {exc}") from None
    return parse_config(obj)


# --- evaluation -------------------------------------------------------------


def _base(p: SchemeParams, metric: str, cfg: ExperimentConfig, **kw) -> Row:
    return Row(metric=metric, scheme=p.scheme.value, N=p.N, L=p.L, k=p.k, f=p.f, **kw)


def _point_seed(cfg: ExperimentConfig, p: SchemeParams, family: str) -> int:
    # scheme and f are left out so schemes at one point share deployments and captures
    key = {"N": p.N, "L": p.L, "k": p.k, "M": cfg.density, "family": family}
    return child_seed(cfg.seed, POINT, stable_hash(key))


def _verdict(row: Row, analytic: Optional[float], est: Optional[Estimate]) -> Row:
    if isinstance(analytic, Evaluation):
        if not analytic.exact:
            row.flags.append("approx")
        if analytic.clamped:
            row.flags.append("clamped")
        row.flags.extend(analytic.flags)
    if analytic is not None:
        row.analytic = float(analytic)
    if est is not None:
        row.empirical, row.stderr, row.trials = est.mean, est.stderr, est.trials
    if analytic is not None and est is not None:
        row.flags.append("agree" if est.agrees(analytic, SIGMAS) else "disagree")
    return row


def _pos(cfg: ExperimentConfig, key: str, default):
    return cfg.positions.get(key, default)


def _expected_partners(N: int, M: int) -> float:
    sizes = [min(M, N - s) for s in range(0, N, M)]
    return sum(n * (n - 1) for n in sizes) / N


def _analytic_degree(p: SchemeParams, M: int, q: int) -> Evaluation:
    partners = _expected_partners(p.N, M)
    if p.scheme is Scheme.RANDOM:
        link = analytics.prob_share_at_least(p, 1, q)
        return Evaluation(partners * link, "degree", exact=True)
    if p.scheme is Scheme.TWO_PHASE_WR:
        raise analytics.UnsupportedFormula("no analytic degree for 2PWR")
    # co-cluster pairs are uniform over all pairs; weight each LID distance
    N = p.N
    total = math.fsum(
        2 * (N - d) * analytics.prob_share_at_least(p, d, q) for d in range(1, N)
    ) / (N * (N - 1))
    return Evaluation(partners * total, "degree", exact=False)


def _metric_rows(cfg: ExperimentConfig, p: SchemeParams, metric: str) -> list:
    seed = _point_seed(cfg, p, metric)
    trials = cfg.trials
    M = cfg.density
    rows = []

    def guard(build: Callable[[], Row], template: Row) -> Row:
        try:
            return build()
        except (DomainError, ParameterError, ValueError) as exc:
            template.flags.append("error=" + str(exc).replace(",", " ").replace(";", " "))
            return template

    if metric == "degree":
        est = adversary.mean_degrees(p, M, cfg.q, trials, seed)
        for q in cfg.q:
            row = _base(p, "degree", cfg, q=q, M=M)
            try:
                analytic = _analytic_degree(p, M, q)
            except DomainError:
                analytic = None
            rows.append(_verdict(row, analytic, est[q]))
        return rows

    if metric in ("exclusive-pair", "has-exclusive"):
        stats = adversary.pair_statistics(p, M, cfg.q[0], trials, seed)
        prefix = "exclusive" if metric == "exclusive-pair" else "has_exclusive"
        key = f"{prefix}_{cfg.scope}"
        row = _base(p, metric, cfg, q=cfg.q[0], M=M, scope=cfg.scope)
        return [_verdict(row, None, stats[key])]

    if metric == "compromised":
        for q in cfg.q:
            res = adversary.capture_experiment(p, M, q, cfg.capture_counts, cfg.scope, trials, seed)
            for m in cfg.capture_counts:
                r = res[m]
                for label, est in (
                    ("compromised", r.links),
                    ("compromised-per-cluster", r.per_cluster),
                    ("compromised-per-captured-cluster", r.per_captured_cluster),
                ):
                    row = _base(p, label, cfg, q=q, M=M, m=m, scope=cfg.scope)
                    rows.append(_verdict(row, None, est))
        return rows

    if metric == "prop1":
        ds = _as_list(_pos(cfg, "d", [1]))
        i0 = _pos(cfg, "i", 1)
        pairs = [(i0, i0 + d) for d in ds]
        est = None
        if p.N >= max(b for _, b in pairs):
            est = adversary.estimate_shared_keys(p, pairs, trials, seed)
        for d, pair in zip(ds, pairs):
            row = _base(p, f"prop1:d={d}", cfg)
            e = est[pair] if est else None
            rows.append(guard(lambda: _verdict(row, analytics.expected_shared_keys(p, d), e), row))
        return rows

    if metric in ("prop2-eq1", "prop2-eq2", "prop2-eq3", "prop3-eq4"):
        i = _pos(cfg, "i", 2)
        j = _pos(cfg, "j", i + 1 if metric == "prop2-eq3" else i + 2)
        row = _base(p, f"{metric}:i={i};j={j}", cfg, scope="network")

        def build():
            if metric == "prop2-eq1":
                val = analytics.exclusivity_random(p)
            elif metric == "prop3-eq4":
                val = analytics.exclusivity_2pwr(p)
            else:
                val = analytics.exclusivity_two_phase(p, adjacent=metric == "prop2-eq3")
            est = adversary.estimate_exclusivity(p, i, j, trials, seed).per_key
            return _verdict(row, val, est)

        return [guard(build, row)]

    if metric in ("prop4-eq9", "prop4-eq10"):
        i = _pos(cfg, "i", 2)
        j = _pos(cfg, "j", i + 1)
        ls = _as_list(_pos(cfg, "l", [j + 1]))
        try:
            est = adversary.estimate_pcr_many(p, i, j, ls, trials, seed)
        except ValueError as exc:
            row = _base(p, metric, cfg)
            row.flags.append("error=" + str(exc).replace(",", " ").replace(";", " "))
            return [row]
        for l in ls:
            row = _base(p, f"{metric}:i={i};j={j};l={l}", cfg, scope="network")

            def build(l=l, row=row):
                if metric == "prop4-eq10":
                    val = analytics.pcr_random(p)
                    return _verdict(row, val, est[l].raw)
                val = analytics.pcr_two_phase_bound(p, i, j, l)
                r = _verdict(row, val, est[l].raw)
                r.flags.append("bound-holds" if est[l].raw.at_most(val, SIGMAS) else "bound-violated")
                return r

            rows.append(guard(build, row))
        return rows

    # analytic-only formulas
    row = _base(p, metric, cfg)

    def analytic_only():
        if metric == "prop3-fopt":
            val = analytics.optimal_f_2pwr(p)
        elif metric == "prop5-fopt":
            t, y = _pos(cfg, "t", 1), _pos(cfg, "y", 5)
            side = _pos(cfg, "side", "worst")
            row.metric = f"prop5-fopt:t={t};y={y};side={side}"
            val = analytics.optimal_f_two_phase(p, t, y, side)
        elif metric == "prop6-bound":
            val = analytics.comparative_f_upper_bound(p)
        elif metric == "prop7":
            row.M = M
            val = analytics.cluster_single_capture(p, M=M)
        elif metric == "prop8-vc":
            i, j = _pos(cfg, "i", 2), _pos(cfg, "j", 3)
            row.metric = f"prop8-vc:i={i};j={j}"
            val = analytics.vc_metric(p, None, i, j)
        elif metric == "lemma2":
            b, i, j, l = (_pos(cfg, key, dv) for key, dv in (("beta", 0), ("i", 2), ("j", 3), ("l", 1)))
            l = _as_list(l)[0]
            row.metric = f"lemma2:beta={b};i={i};j={j};l={l}"
            val = analytics.e_z_expected(p, b, i, j, l)
        elif metric == "eq14":
            h = _pos(cfg, "holders", 0)
            row.metric = f"eq14:holders={h}"
            val = analytics.eligibility_value(h)
        else:  # pragma: no cover - guarded by parse_config
            raise ValueError(metric)
        return _verdict(row, val, None)

    return [guard(analytic_only, row)]


def run(cfg: ExperimentConfig, workers: Optional[int] = None) -> MetricsReport:
    """Evaluate every (grid point, metric) task and collect rows in grid order."""
    tasks = [(p, metric) for p in cfg.points for metric in cfg.metrics]
    n = cfg.workers if workers is None else workers
    if n <= 1:
        chunks = [_metric_rows(cfg, p, metric) for p, metric in tasks]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            chunks = list(pool.map(lambda task: _metric_rows(cfg, *task), tasks))
    return MetricsReport([row for chunk in chunks for row in chunk])


def write_report(report: MetricsReport, path: str) -> None:
    """Write ``path`` as CSV, or JSON when it ends in ``.json``."""
    text = report.to_json() if path.endswith(".json") else report.to_csv()
    with open(path, "w", newline="") as fh:
        fh.write(text)
