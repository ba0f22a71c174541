"""Closed-form optimal classical attacks on CHSH under the max-probability measure.

For per-run MD ``P`` and a block of ``N`` runs every conditional probability
is capped at ``P**N``. The optimum fills settings classes greedily from the
all-correct class downwards; its score is piecewise linear in ``P**N`` with
``N + 1`` breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .model import StrategyProfile

P_MIN = 0.25
P_MAX = 1.0 / 3.0
MAX_N = 10**4
EXACT_MAX_N = 64
_EDGE_TOL = 1e-12
BISECT_TOL = 1e-12


@dataclass(frozen=True)
class CurvePoint:
    """An (MD value, score) pair. ``N is None`` marks the N -> infinity limit."""

    md: float
    S: float
    N: int | None = None
    lprime: int | None = None
    status: str | None = None


@dataclass(frozen=True)
class BreakpointCurve:
    N: int
    points: tuple[CurvePoint, ...]

    @property
    def P(self) -> np.ndarray:
        return np.array([p.md for p in self.points])

    @property
    def S(self) -> np.ndarray:
        return np.array([p.S for p in self.points])


def _check_N(N: int) -> None:
    if not isinstance(N, (int, np.integer)) or not 1 <= N <= MAX_N:
        raise ValueError(f"N must be an integer in [1, {MAX_N}], got {N!r}")


def _check_P(P: float, upper: float = 1.0) -> float:
    if not (P_MIN - _EDGE_TOL <= P <= upper + _EDGE_TOL):
        raise ValueError(f"P={P!r} outside [1/4, {upper:.6g}]")
    return min(max(P, P_MIN), upper)


def _log_sizes(N: int) -> np.ndarray:
    k = np.arange(N + 1)
    return gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1) + k * math.log(3.0)


@lru_cache(maxsize=256)
def _suffix_stats(N: int) -> tuple[np.ndarray, np.ndarray]:
    """log T_l and K_l / T_l for l = 0..N, where T_l = sum_{k>=l} n_k and
    K_l = sum_{k>=l} k n_k.

    The mean K_l / T_l comes from a backward recurrence on n_l / T_{l+1},
    which keeps the top classes exact at large N.
    """
    logn = _log_sizes(N)
    logT = np.logaddexp.accumulate(logn[::-1])[::-1]
    mean = np.empty(N + 1)
    mean[N] = N
    for l in range(N - 1, -1, -1):
        rho = math.exp(logn[l] - logT[l + 1])
        mean[l] = (l * rho + mean[l + 1]) / (rho + 1.0)
    logT.flags.writeable = False
    mean.flags.writeable = False
    return logT, mean


def breakpoints(N: int, exact: bool = False) -> BreakpointCurve:
    """The N + 1 vertices of the optimal (P, S) curve, ordered by increasing P.

    ``exact`` evaluates the class sums with integer arithmetic (N <= 64).
    """
    _check_N(N)
    if exact:
        if N > EXACT_MAX_N:
            raise ValueError(f"exact mode supports N <= {EXACT_MAX_N}")
        sizes = [math.comb(N, k) * 3**k for k in range(N + 1)]
        pts = []
        for lp in range(N + 1):
            T = sum(sizes[lp:])
            K = sum(k * sizes[k] for k in range(lp, N + 1))
            P = math.exp(-math.log(T) / N)
            S = float(Fraction(8 * K, N * T)) - 4.0
            pts.append(CurvePoint(P, S, N, lp))
        return BreakpointCurve(N, tuple(pts))

    logT, mean = _suffix_stats(N)
    P = np.exp(-logT / N)
    S = 8.0 / N * mean - 4.0
    pts = tuple(CurvePoint(float(P[l]), float(S[l]), N, l) for l in range(N + 1))
    return BreakpointCurve(N, pts)


def _threshold(logPN: float, logT: np.ndarray) -> int:
    """Smallest l' whose saturated classes fit inside unit mass."""
    fits = logPN + logT <= _EDGE_TOL
    return int(np.argmax(fits)) if fits.any() else len(logT) - 1


def optimal_profile(N: int, P: float) -> StrategyProfile:
    """Greedy profile: p_k = P^N for k >= l', residual mass in class l' - 1.

    For P above 1/3 the P = 1/3 profile is returned (already S = 4).
    """
    _check_N(N)
    P = min(_check_P(P), P_MAX)
    logn = _log_sizes(N)
    logT, _ = _suffix_stats(N)
    logPN = N * math.log(P)
    lp = _threshold(logPN, logT)
    PN = math.exp(logPN)
    p = [0.0] * (N + 1)
    for k in range(lp, N + 1):
        p[k] = PN
    if lp > 0:
        residual = max(0.0, -math.expm1(logPN + logT[lp]))
        p[lp - 1] = min(PN, residual * math.exp(-logn[lp - 1]))
    return StrategyProfile.chsh(p)


def max_score(N: int, P: float) -> float:
    """Largest CHSH score at per-run MD ``P`` over blocks of N runs.

    Evaluated in the log domain; saturates at 4 for P >= 1/3.
    """
    _check_N(N)
    P = _check_P(P)
    if P >= P_MAX:
        return 4.0
    logT, mean = _suffix_stats(N)
    logPN = N * math.log(P)
    lp = _threshold(logPN, logT)
    top = math.exp(logPN + logT[lp]) * mean[lp]
    if lp == 0:
        return 8.0 / N * top - 4.0
    residual = max(0.0, -math.expm1(logPN + logT[lp]))
    return 8.0 / N * (top + (lp - 1) * residual) - 4.0


def single_shot_score(P: float) -> float:
    P = _check_P(P)
    return 4.0 if P >= P_MAX else 24.0 * P - 4.0


def single_shot_P(S: float) -> float:
    """Inverse of :func:`single_shot_score` on [2, 4]."""
    _check_S(S)
    return (S + 4.0) / 24.0


def _xlogx(a: float, b: float) -> float:
    """a * log(b) with 0 * log(0) = 0."""
    return 0.0 if a == 0.0 else a * math.log(b)


def _check_S(S: float) -> None:
    if not 2.0 - _EDGE_TOL <= S <= 4.0 + _EDGE_TOL:
        raise ValueError(f"S={S!r} outside [2, 4]")


def asymptotic_bound_P(S: float) -> float:
    """Minimum per-run MD that lets correlated blocks reach score S as N grows."""
    _check_S(S)
    S = min(max(S, 2.0), 4.0)
    hi, lo = (4.0 + S) / 8.0, (4.0 - S) / 8.0
    return math.exp(_xlogx(hi, hi / 3.0) + _xlogx(lo, lo))


def asymptotic_parametric(l: float) -> CurvePoint:
    """Point of the limit curve at fraction ``l`` of correct runs, l in [3/4, 1]."""
    if not 0.75 - _EDGE_TOL <= l <= 1.0 + _EDGE_TOL:
        raise ValueError(f"l={l!r} outside [3/4, 1]")
    l = min(max(l, 0.75), 1.0)
    P = math.exp(_xlogx(l, l / 3.0) + _xlogx(1.0 - l, 1.0 - l))
    return CurvePoint(P, 8.0 * l - 4.0, None, None)


def asymptotic_score(P: float) -> float:
    """Largest S with asymptotic_bound_P(S) <= P, by bisection."""
    P = _check_P(P)
    if P >= P_MAX:
        return 4.0
    lo, hi = 2.0, 4.0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if asymptotic_bound_P(mid) <= P:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def win_probability(S: float) -> float:
    return (1.0 + S / 4.0) / 2.0


def bound_pwin(p_win: float) -> float:
    if not 0.75 - _EDGE_TOL <= p_win <= 1.0 + _EDGE_TOL:
        raise ValueError(f"p_win={p_win!r} outside [3/4, 1]")
    p_win = min(max(p_win, 0.75), 1.0)
    return math.exp(_xlogx(p_win, p_win / 3.0) + _xlogx(1.0 - p_win, 1.0 - p_win))


def crossing_P(N: int, S: float) -> float:
    """Smallest P at which the N-run optimum reaches score S (bisection)."""
    _check_S(S)
    lo, hi = P_MIN, P_MAX
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if max_score(N, mid) >= S:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def interpolated_curve(N: int, P_grid) -> list[CurvePoint]:
    return [CurvePoint(float(P), max_score(N, float(P)), N, None) for P in P_grid]

