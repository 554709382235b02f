"""Skellam law of the net node-count change over a churn horizon.

Joins and leaves per epoch are independent Poisson counts, so the net change
after gamma epochs is the difference of Poisson(gamma * lambda_join) and
Poisson(gamma * lambda_leave) variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_REL_TOL_LOG = math.log(1e-18)


@dataclass(frozen=True)
class SkellamParams:
    lambda_leave: float
    lambda_join: float
    gamma: float

    def __post_init__(self):
        if self.lambda_leave < 0 or self.lambda_join < 0:
            raise ValueError("churn rates must be non-negative")
        if self.gamma < 0:
            raise ValueError("horizon must be non-negative")


def _log_poisson(count: int, mean: float) -> float:
    if count < 0:
        return -math.inf
    return -mean + count * math.log(mean) - math.lgamma(count + 1)


def skellam_pmf(s: int, params: SkellamParams) -> float:
    """Pr(joins - leaves == s) over the horizon.

    Evaluated as the log-space series over the hidden leave count, truncated
    once terms fall below 1e-18 relative to the running maximum.
    """
    mu_join = params.gamma * params.lambda_join
    mu_leave = params.gamma * params.lambda_leave
    if mu_join == 0.0 and mu_leave == 0.0:
        return 1.0 if s == 0 else 0.0
    if mu_join == 0.0:
        return math.exp(_log_poisson(-s, mu_leave)) if s <= 0 else 0.0
    if mu_leave == 0.0:
        return math.exp(_log_poisson(s, mu_join)) if s >= 0 else 0.0

    x = max(0, -s)
    log_terms = []
    best = -math.inf
    prev = -math.inf
    while True:
        term = _log_poisson(x + s, mu_join) + _log_poisson(x, mu_leave)
        log_terms.append(term)
        best = max(best, term)
        # terms are unimodal in x: stop only on the falling side
        if term < prev and term < best + _REL_TOL_LOG:
            break
        prev = term
        x += 1
        if x > max(0, -s) + 10_000_000:  # safety net; unreachable in practice
            break
    return math.exp(best) * math.fsum(math.exp(t - best) for t in log_terms)
