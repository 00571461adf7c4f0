"""Scheme parameters and key-ring generation.

Three predistribution schemes are supported:

* ``Random``: every node draws ``k`` distinct keys uniformly from the pool.
* ``TwoPhase``: node 1 draws at random; node ``i > 1`` inherits ``f*k`` keys
  uniformly from node ``i-1`` and draws the remaining ``(1-f)*k`` keys from the
  pool with *all* ``k`` keys of node ``i-1`` removed.
* ``TwoPhaseWR``: as ``TwoPhase`` but only the inherited ``f*k`` keys are
  removed from the pool before the second draw.

Rings are produced as an ``(N, k)`` integer matrix with each row sorted
ascending (:func:`draw_ring_matrix`); the list-of-:class:`KeyRing` API wraps
the same routine, so estimators and user-facing code share one sampler.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .seeding import RINGS, rng_for

_FK_TOL = 1e-9


class Scheme(str, enum.Enum):
    RANDOM = "random"
    TWO_PHASE = "two-phase"
    TWO_PHASE_WR = "2pwr"

    @classmethod
    def parse(cls, value: "Scheme | str") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "random": cls.RANDOM,
            "rand": cls.RANDOM,
            "two-phase": cls.TWO_PHASE,
            "twophase": cls.TWO_PHASE,
            "2p": cls.TWO_PHASE,
            "2-phase": cls.TWO_PHASE,
            "2pwr": cls.TWO_PHASE_WR,
            "two-phase-wr": cls.TWO_PHASE_WR,
            "twophasewr": cls.TWO_PHASE_WR,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown scheme {value!r}") from None


class ParameterError(ValueError):
    """Raised when a parameter combination violates its invariants."""


@dataclass(frozen=True)
class SchemeParams:
    """Network size ``N``, pool size ``L``, ring size ``k``, inheritance ratio ``f``."""

    N: int
    L: int
    k: int
    f: Optional[float] = None
    scheme: Scheme = Scheme.RANDOM

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        self.validate()

    def validate(self) -> None:
        N, L, k, f = self.N, self.L, self.k, self.f
        if self.scheme is Scheme.RANDOM:
            # k == L and N == 1 are admitted for the degenerate full-pool case.
            if N < 1:
                raise ParameterError(f"N must be >= 1, got {N}")
            if not 1 <= k <= L:
                raise ParameterError(f"need 1 <= k <= L, got k={k}, L={L}")
            return
        if N < 2:
            raise ParameterError(f"N must be >= 2, got {N}")
        if not 1 <= k < L:
            raise ParameterError(f"need 1 <= k < L, got k={k}, L={L}")
        if f is None:
            raise ParameterError(f"{self.scheme.value} requires an inheritance ratio f")
        if not (1.0 / k - _FK_TOL <= f < 1.0):
            raise ParameterError(f"need 1/k <= f < 1, got f={f} with k={k}")
        fk = f * k
        if abs(fk - round(fk)) > _FK_TOL:
            raise ParameterError(f"f*k must be an integer, got f*k={fk:g}")
        fk = round(fk)
        fresh = k - fk
        if self.scheme is Scheme.TWO_PHASE:
            if fresh > L - 2 * k + fk:
                raise ParameterError(
                    f"pool too small: (1-f)k={fresh} exceeds L-2k+fk={L - 2 * k + fk}"
                )
        elif fresh > L - fk:
            raise ParameterError(f"pool too small: (1-f)k={fresh} exceeds L-fk={L - fk}")

    @property
    def x(self) -> float:
        """Ring-to-pool ratio k/L."""
        return self.k / self.L

    @property
    def B(self) -> float:
        """Per-step decay (fL-k)/(L-k) of the excess overlap between LIDs."""
        if self.f is None:
            raise ParameterError("B is undefined without f")
        return (self.f * self.L - self.k) / (self.L - self.k)

    @property
    def inherited(self) -> int:
        """Number of keys copied from the predecessor, f*k."""
        if self.f is None:
            return 0
        return int(round(self.f * self.k))

    @property
    def fresh(self) -> int:
        return self.k - self.inherited

    def replace(self, **changes) -> "SchemeParams":
        fields = dict(N=self.N, L=self.L, k=self.k, f=self.f, scheme=self.scheme)
        fields.update(changes)
        return SchemeParams(**fields)


@dataclass(frozen=True)
class KeyRing:
    lid: int
    keys: frozenset

    def sorted_keys(self) -> list:
        return sorted(self.keys)


_DENSE_LIMIT = 4096


def _subset(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """Uniform ``m``-subset of ``range(n)`` (unordered)."""
    if m <= 0:
        return np.empty(0, dtype=np.int64)
    if m >= n:
        return np.arange(n, dtype=np.int64)
    if n <= _DENSE_LIMIT:
        # the m smallest of n iid uniforms index a uniform m-subset
        return rng.random(n).argpartition(m - 1)[:m]
    return rng.choice(n, size=m, replace=False, shuffle=False)


def _sample_excluding(rng: np.random.Generator, L: int, excluded: np.ndarray, m: int) -> np.ndarray:
    """Uniform ``m``-subset of ``[0, L)`` minus ``excluded`` (sorted, distinct)."""
    idx = _subset(rng, L - excluded.size, m)
    shift = excluded - np.arange(excluded.size)
    return idx + np.searchsorted(shift, idx, side="right")


def draw_ring_matrix(
    params: SchemeParams, rng: np.random.Generator, count: Optional[int] = None
) -> np.ndarray:
    """Draw the rings of LIDs ``1..count`` (default all ``N``) as sorted rows.

    Row ``r`` holds the ring of LID ``r + 1``. Because the inheritance schemes
    are sequential in LID, the first ``count`` rows have the same law whatever
    ``N`` is, which lets estimators stop early.
    """
    N, L, k = params.N, params.L, params.k
    n = N if count is None else min(int(count), N)
    out = np.empty((n, k), dtype=np.int64)
    if n == 0:
        return out
    if params.scheme is Scheme.RANDOM:
        for r in range(n):
            out[r] = np.sort(_subset(rng, L, k))
        return out

    fk, fresh = params.inherited, params.fresh
    wr = params.scheme is Scheme.TWO_PHASE_WR
    out[0] = np.sort(_subset(rng, L, k))
    for r in range(1, n):
        prev = out[r - 1]
        kept = np.sort(prev[_subset(rng, k, fk)])
        new = _sample_excluding(rng, L, kept if wr else prev, fresh)
        ring = np.concatenate((kept, new))
        ring.sort()
        out[r] = ring
    return out


def rings_from_matrix(mat: np.ndarray) -> list:
    return [KeyRing(lid=r + 1, keys=frozenset(int(v) for v in row)) for r, row in enumerate(mat)]


def _assign(params: SchemeParams, seed: int, expected: Scheme) -> list:
    if params.scheme is not expected:
        raise ParameterError(f"expected scheme {expected.value}, got {params.scheme.value}")
    return rings_from_matrix(draw_ring_matrix(params, rng_for(seed, RINGS)))


def assign_random(params: SchemeParams, seed: int) -> list:
    """Independent uniform k-subsets of the pool, one per node."""
    return _assign(params, seed, Scheme.RANDOM)


def assign_two_phase(params: SchemeParams, seed: int) -> list:
    return _assign(params, seed, Scheme.TWO_PHASE)


def assign_two_phase_wr(params: SchemeParams, seed: int) -> list:
    return _assign(params, seed, Scheme.TWO_PHASE_WR)


def assign(params: SchemeParams, seed: int) -> list:
    """Generate rings for whichever scheme ``params`` names."""
    return _assign(params, seed, params.scheme)


def check_rings(rings: Iterable[KeyRing], params: SchemeParams) -> None:
    """Raise :class:`ParameterError` if any ring breaks the KeyRing invariants."""
    seen = set()
    for ring in rings:
        if not 1 <= ring.lid <= params.N or ring.lid in seen:
            raise ParameterError(f"bad or duplicate LID {ring.lid}")
        seen.add(ring.lid)
        if len(ring.keys) != params.k:
            raise ParameterError(f"LID {ring.lid} holds {len(ring.keys)} keys, expected {params.k}")
        if any(not 0 <= key < params.L for key in ring.keys):
            raise ParameterError(f"LID {ring.lid} holds a key outside [0, {params.L})")
    if len(seen) != params.N:
        raise ParameterError(f"expected {params.N} rings, got {len(seen)}")


def format_rings(rings: Iterable[KeyRing]) -> str:
    """One ``lid,key0,key1,...`` line per node, keys ascending."""
    lines = [",".join(map(str, [ring.lid, *ring.sorted_keys()])) for ring in rings]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_rings(text: str) -> list:
    rings = []
    for line in text.splitlines():
        if not line.strip():
            continue
        lid, *keys = (int(tok) for tok in line.split(","))
        rings.append(KeyRing(lid=lid, keys=frozenset(keys)))
    return rings


def shared_count(a: np.ndarray, b: np.ndarray) -> int:
    """Size of the intersection of two sorted rings."""
    return int(np.intersect1d(a, b, assume_unique=True).size)

