"""Quantum ceiling for CHSH when the settings distribution is biased.

A symmetric CHSH profile leaves each run with marginal weight ``R`` on the
three settings pairs answered correctly and ``1 - 3R`` on the remaining one.
The best quantum score at that bias has a closed form below R = 3/10; beyond
it the classical strategy already matches it.
"""

from __future__ import annotations

import math

from .analytic import max_score
from .model import StrategyProfile

R_MIN = 0.25
R_MAX = 1.0 / 3.0
R_SWITCH = 0.3
SC_SWITCH = 16.0 / 5.0
_TOL = 1e-12


def bias_from_profile(profile: StrategyProfile) -> float:
    """Marginal weight R of each correctly-answered settings pair per run."""
    if profile.game != "chsh":
        raise ValueError("bias is defined for CHSH profiles")
    profile.check_normalized()
    N = profile.N
    totals = profile.class_totals()
    # 3^(k-1) (k/N) C(N,k) p_k = (k / 3N) * class total
    R = math.fsum(k * q for (k, _), q in totals.items()) / (3.0 * N)
    if not R_MIN - 1e-9 <= R <= R_MAX + 1e-9:
        raise ValueError(f"R={R} outside [1/4, 1/3]")
    return R


def classical_from_bias(R: float) -> float:
    return 4.0 * (6.0 * R - 1.0)


def quantum_max(R: float) -> float:
    if not R_MIN - _TOL <= R <= R_MAX + _TOL:
        raise ValueError(f"R={R!r} outside [1/4, 1/3]")
    R = min(max(R, R_MIN), R_MAX)
    if R >= R_SWITCH:
        return classical_from_bias(R)
    return 4.0 * (1.0 - 2.0 * R) ** 1.5 / math.sqrt(1.0 - 3.0 * R)


def sq_from_sc(S_C: float) -> float:
    """Best quantum score at the bias where the classical optimum scores S_C."""
    if not 2.0 - _TOL <= S_C <= 4.0 + _TOL:
        raise ValueError(f"S_C={S_C!r} outside [2, 4]")
    S_C = min(max(S_C, 2.0), 4.0)
    if S_C >= SC_SWITCH:
        return S_C
    return 2.0 * (8.0 - S_C) ** 1.5 / (3.0 * math.sqrt(6.0 * (4.0 - S_C)))


def quantum_score(N: int, P: float) -> float:
    """Quantum ceiling over N-run blocks at per-run MD P."""
    return sq_from_sc(max_score(N, P))
