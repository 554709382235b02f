"""Degree distributions for the rateless layer.

Holds the robust soliton law, the encoding law with no degree-1 mass (new
blocks must always mix at least two intermediates), and the shifted law that
describes what joining nodes actually store once some intermediate holders
have departed.
"""

from __future__ import annotations

import math

import numpy as np


class DegreeDistribution:
    """Probability law over degrees 1..support.

    The pmf is stored as an array of length support+1 with pmf[0] == 0, so
    pmf[d] is the probability of drawing degree d.
    """

    def __init__(self, pmf):
        arr = np.asarray(pmf, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise ValueError("pmf must be a 1-d array with support >= 1")
        if arr[0] != 0.0:
            raise ValueError("pmf[0] must be zero (degrees start at 1)")
        if (arr < 0).any():
            raise ValueError("pmf entries must be non-negative")
        total = arr.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pmf must sum to 1, got {total!r}")
        arr = arr.copy()
        arr.setflags(write=False)
        self.pmf = arr
        self._cdf = np.cumsum(arr)

    @property
    def support(self) -> int:
        return self.pmf.shape[0] - 1

    def prob(self, d: int) -> float:
        if not 1 <= d <= self.support:
            return 0.0
        return float(self.pmf[d])

    def sample(self, rng: np.random.Generator) -> int:
        d = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return min(max(d, 1), self.support)

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        d = np.searchsorted(self._cdf, rng.random(count), side="right")
        return np.clip(d, 1, self.support)

    def mean(self) -> float:
        return float(np.arange(self.pmf.shape[0]) @ self.pmf)


def spike_scale(k: int, c: float, delta: float) -> float:
    """The soliton scale S = c * ln(k/delta) * sqrt(k)."""
    return c * math.log(k / delta) * math.sqrt(k)


def soliton_components(k: int, c: float, delta: float):
    """Unnormalised (tau, rho) arrays of the robust soliton construction."""
    if k < 2:
        raise ValueError(f"support must be at least 2, got {k}")
    if c <= 0:
        raise ValueError("c must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    s_scale = spike_scale(k, c, delta)
    spike = int(round(k / s_scale))
    if spike < 2:
        raise ValueError(
            f"degenerate spike: round(k/S) = {spike} < 2 for k={k}, c={c}, delta={delta}"
        )
    spike = min(spike, k)

    tau = np.zeros(k + 1)
    d = np.arange(1, spike)
    tau[1:spike] = s_scale / (d * k)
    # ln(S/delta) can go negative for very small k; clamp so the pmf stays valid
    tau[spike] = max(s_scale * math.log(s_scale / delta) / k, 0.0)

    rho = np.zeros(k + 1)
    rho[1] = 1.0 / k
    d = np.arange(2, k + 1)
    rho[2:] = 1.0 / (d * (d - 1.0))
    return tau, rho


def robust_soliton(k: int, c: float, delta: float) -> DegreeDistribution:
    """Normalised robust soliton law mu over degrees 1..k."""
    tau, rho = soliton_components(k, c, delta)
    mix = tau + rho
    return DegreeDistribution(mix / mix.sum())


def encoding_distribution(k: int, c: float, delta: float) -> DegreeDistribution:
    """Robust soliton with the degree-1 mass redistributed evenly to d >= 2."""
    mu = robust_soliton(k, c, delta).pmf
    omega = np.zeros_like(mu)
    omega[2:] = mu[2:] + mu[1] / (k - 1)
    return DegreeDistribution(omega)


def _log_binom_cumulative(n: int, dmax: int) -> np.ndarray:
    """log C(n, d) for d = 0..dmax via a cumulative sum of log ratios."""
    d = np.arange(1, dmax + 1, dtype=np.float64)
    steps = np.log(n - d + 1.0) - np.log(d)
    out = np.zeros(dmax + 1)
    out[1:] = np.cumsum(steps)
    return out


def shifted_distribution(
    omega: DegreeDistribution, n: int, n_star: int
) -> DegreeDistribution:
    """The stored-degree law once only n_star of n intermediates survive.

    g(n_star, d) = C(n_star, d) / C(n, d) is the chance that all d drawn
    neighbors are still held; draws that miss collapse to a repaired
    degree-1 block, which is where the extra mass at d = 1 comes from.
    """
    if omega.support != n:
        raise ValueError(f"distribution support {omega.support} != n = {n}")
    if omega.pmf[1] != 0.0:
        raise ValueError("encoding distribution must have zero degree-1 mass")
    if not 0 <= n_star <= n:
        raise ValueError(f"need 0 <= n_star <= n, got n_star={n_star}, n={n}")

    g = np.zeros(n + 1)
    if n_star >= 1:
        dmax = n_star
        log_top = _log_binom_cumulative(n_star, dmax)
        log_bot = _log_binom_cumulative(n, dmax)
        g[: dmax + 1] = np.exp(log_top - log_bot[: dmax + 1])
    g[0] = 0.0

    shifted = np.zeros(n + 1)
    shifted[2:] = omega.pmf[2:] * g[2:]
    shifted[1] = float(np.sum(omega.pmf[2:] * (1.0 - g[2:])))
    return DegreeDistribution(shifted)
