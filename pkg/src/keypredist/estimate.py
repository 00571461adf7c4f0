"""Monte Carlo estimates with standard errors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable


def _slack(value: float) -> float:
    return 1e-9 * max(1.0, abs(float(value)))


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    trials: int

    def agrees(self, value: float, sigmas: float = 3.0) -> bool:
        """True when ``value`` lies within ``sigmas`` standard errors.

        A relative slack of ``1e-9`` absorbs rounding when the estimate has
        zero variance (deterministic quantities).
        """
        return abs(self.mean - float(value)) <= sigmas * self.stderr + _slack(value)

    def at_most(self, bound: float, sigmas: float = 3.0) -> bool:
        return self.mean <= float(bound) + sigmas * self.stderr + _slack(bound)

    def __str__(self):
        return f"{self.mean:.6g} ± {self.stderr:.2g} (n={self.trials})"


def proportion(successes: int, trials: int) -> Estimate:
    """Frequency estimate with the binomial standard error."""
    if trials < 1:
        raise ValueError("need at least one trial")
    p = successes / trials
    return Estimate(p, math.sqrt(p * (1 - p) / trials), trials)


def sample_mean(values: Iterable[float]) -> Estimate:
    """Mean of i.i.d. per-trial values with the sample standard error.

    Sums are compensated (``math.fsum``) so the result does not depend on
    the order in which trials finished.
    """
    vals = [float(v) for v in values]
    n = len(vals)
    if n < 1:
        raise ValueError("need at least one trial")
    mean = math.fsum(vals) / n
    if n < 2:
        return Estimate(mean, 0.0, n)
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return Estimate(mean, math.sqrt(var / n), n)


def difference(a: Estimate, b: Estimate) -> Estimate:
    """``a - b`` for independent estimates."""
    return Estimate(a.mean - b.mean, math.hypot(a.stderr, b.stderr), min(a.trials, b.trials))
