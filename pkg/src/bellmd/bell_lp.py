"""Linear programs for correlated attacks under the L1 measure M1.

Reduced programs work with class totals ``q = count * member mass`` instead of
the member masses themselves, so every coefficient stays O(1) even at
N = 100 where raw class sizes reach 1e77. Variable blocks follow the
(p, w, a, b) layout: class masses, L1 deviations, and the two slack blocks
that linearise ``w >= |p - uniform|``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import parallel_map
from .analytic import CurvePoint
from .model import (
    GameSpec,
    MdMeasure,
    MeasureKind,
    OutcomeTable,
    StrategyProfile,
    class_counts,
    class_size,
    hidden_string_weights,
    reduction_table,
    settings_strings,
)
from .simplex import LinearProgram, LpSolution, LpStatus, solve

log = logging.getLogger(__name__)

MAX_CHSH_N = 1000
MAX_IMM22_N = 100
RAW_MAX_N = 8
ORACLE_LIMIT = 10**6


class SolverFailure(RuntimeError):
    pass


def m_max(game: GameSpec | str, N: int) -> float:
    """Smallest M1 budget reaching the maximum score: 2(1 - ((good + unused)/m^2)^N)."""
    game = GameSpec.from_name(game) if isinstance(game, str) else game
    g, _, u = reduction_table(game).per_run_counts
    return 2.0 * -math.expm1(N * math.log((g + u) / game.n_settings))


def _block(n: int, i: int) -> slice:
    return slice(i * n, (i + 1) * n)


@dataclass(frozen=True)
class ChshM1Program:
    N: int
    M1: float
    lp: LinearProgram
    class_sizes: tuple[int, ...]
    scaled: bool = True

    @property
    def saturated(self) -> bool:
        return self.M1 > m_max("chsh", self.N) + 1e-12

    def solve(self) -> LpSolution:
        return solve(self.lp)

    def score(self, sol: LpSolution) -> float:
        return -4.0 - 8.0 * sol.objective

    def class_totals(self, sol: LpSolution) -> np.ndarray:
        q = sol.z[_block(self.N + 1, 0)]
        if not self.scaled:
            q = q * np.array([float(n) for n in self.class_sizes])
        return q

    def profile(self, sol: LpSolution) -> StrategyProfile:
        q = np.maximum(self.class_totals(sol), 0.0)
        p = [
            math.exp(math.log(qk) - math.log(n)) if qk > 0 else 0.0
            for qk, n in zip(q, self.class_sizes)
        ]
        return StrategyProfile.chsh(p)


def build_chsh_m1(N: int, M1: float, scaled: bool = True) -> ChshM1Program:
    """CHSH correlated attack as ``minimize c.z, B z = v, z >= 0``.

    With ``scaled=False`` the matrix is assembled verbatim from raw class
    sizes n_k = C(N,k) 3^k (only sensible for small N).
    """
    if not 1 <= N <= MAX_CHSH_N:
        raise ValueError(f"N must be in [1, {MAX_CHSH_N}]")
    if M1 < 0:
        raise ValueError("M1 must be non-negative")
    if not scaled and N > RAW_MAX_N:
        raise ValueError(f"raw class sizes are only supported for N <= {RAW_MAX_N}")
    top = m_max("chsh", N)
    if M1 > top + 1e-12:
        log.warning("M1=%g exceeds M_max(%d)=%g; score saturates at 4", M1, N, top)

    K = N + 1
    sizes = tuple(class_size(N, k) for k in range(K))
    k = np.arange(K)
    I, Z = np.eye(K), np.zeros((K, K))
    zrow = np.zeros(K)
    if scaled:
        n_row = np.ones(K)
        # binomial(N, 3/4) pmf = n_k 4^-N, evaluated in logs
        uniform = np.exp([math.log(n) - N * math.log(4.0) for n in sizes])
        s = k / N
    else:
        n_row = np.array([float(n) for n in sizes])
        uniform = np.full(K, 4.0**-N)
        s = np.array([float(3**kk * math.comb(N - 1, kk - 1)) if kk else 0.0 for kk in k])
    B = np.block([
        [n_row[None, :], zrow[None, :], zrow[None, :], zrow[None, :]],
        [I, -I, I, Z],
        [-I, -I, Z, I],
        [zrow[None, :], n_row[None, :], zrow[None, :], zrow[None, :]],
    ])
    v = np.concatenate([[1.0], uniform, -uniform, [M1]])
    c = np.concatenate([-s, np.zeros(3 * K)])
    return ChshM1Program(N, float(M1), LinearProgram(c, B, v), sizes, scaled)


@dataclass(frozen=True)
class Imm22Program:
    m: int
    N: int
    M1: float
    classes: tuple[tuple[int, int], ...]
    counts: tuple[int, ...]
    lp: LinearProgram
    table: OutcomeTable

    @property
    def game(self) -> GameSpec:
        return GameSpec(self.m)

    @property
    def saturated(self) -> bool:
        return self.M1 > m_max(self.game, self.N) + 1e-12

    def solve(self) -> LpSolution:
        return solve(self.lp)

    def score(self, sol: LpSolution) -> float:
        return -sol.objective

    def profile(self, sol: LpSolution) -> StrategyProfile:
        q = np.maximum(sol.z[: len(self.classes)], 0.0)
        masses = {
            key: (math.exp(math.log(qk) - math.log(n)) if qk > 0 else 0.0)
            for key, qk, n in zip(self.classes, q, self.counts)
        }
        return StrategyProfile(self.game.name, self.N, masses)


def build_imm22(m: int, N: int, M1: float) -> Imm22Program:
    """I_mm22 correlated attack over (k, l) classes.

    The hidden variable ranges over a reweighted optimal row set on which
    every used settings pair is answered correctly equally often; the Bayes
    constraints then collapse to one per unused-run count l.
    """
    game = GameSpec(m)
    if not 1 <= N <= MAX_IMM22_N:
        raise ValueError(f"N must be in [1, {MAX_IMM22_N}]")
    if M1 < 0:
        raise ValueError("M1 must be non-negative")
    table = reduction_table(game)
    g, bad, u = table.per_run_counts
    counts_map = class_counts(N, (g, bad, u))
    classes = tuple(sorted(counts_map, key=lambda kl: (kl[1], kl[0])))
    counts = tuple(counts_map[c] for c in classes)
    C = len(classes)
    log_norm = N * math.log(game.n_settings)
    uniform = np.exp([math.log(n) - log_norm for n in counts])

    ls = sorted({l for _, l in classes})
    bayes = np.zeros((len(ls), C))
    bayes_rhs = np.zeros(len(ls))
    for r, l in enumerate(ls):
        for i, (_, li) in enumerate(classes):
            if li == l:
                bayes[r, i] = 1.0
        # p(l unused runs) is binomial(N, u / m^2)
        log_b = math.log(math.comb(N, l)) + (N - l) * math.log(g + bad)
        if l:
            log_b += l * math.log(u)
        bayes_rhs[r] = math.exp(log_b - log_norm)

    I, Z = np.eye(C), np.zeros((C, C))
    zb = np.zeros((len(ls), C))
    zrow = np.zeros((1, C))
    B = np.block([
        [bayes, zb, zb, zb],
        [I, -I, I, Z],
        [-I, -I, Z, I],
        [zrow, np.ones((1, C)), zrow, zrow],
    ])
    v = np.concatenate([bayes_rhs, uniform, -uniform, [M1]])
    weight = game.n_settings / N
    c = np.concatenate([
        [-weight * (2 * k - N + l) for k, l in classes],
        np.zeros(3 * C),
    ])
    return Imm22Program(m, N, float(M1), classes, counts, LinearProgram(c, B, v), table)


def _checked(sol: LpSolution, what: str) -> LpSolution:
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverFailure(f"{what}: solver returned {sol.status.value}")
    return sol


def solve_chsh_m1(N: int, M1: float) -> float:
    prog = build_chsh_m1(N, M1)
    return prog.score(_checked(prog.solve(), f"chsh N={N} M1={M1}"))


def solve_imm22(m: int, N: int, M1: float) -> float:
    prog = build_imm22(m, N, M1)
    return prog.score(_checked(prog.solve(), f"m={m} N={N} M1={M1}"))


def _curve(builder, N: int, grid) -> list[CurvePoint]:
    def point(M1):
        prog = builder(float(M1))
        sol = prog.solve()
        S = prog.score(sol) if sol.status is LpStatus.OPTIMAL else math.nan
        return CurvePoint(float(M1), S, N, None, sol.status.value)

    return parallel_map(point, grid)


def solve_chsh_m1_curve(N: int, grid) -> list[CurvePoint]:
    return _curve(lambda M1: build_chsh_m1(N, M1), N, grid)


def solve_imm22_curve(m: int, N: int, grid) -> list[CurvePoint]:
    return _curve(lambda M1: build_imm22(m, N, M1), N, grid)


def solve_chsh_maxprob(N: int, P: float) -> float:
    """Small LP over raw member masses p_k: normalisation and p_k <= P^N."""
    K = N + 1
    n = np.array([float(class_size(N, k)) for k in range(K)])
    s = np.array([8.0 * k * n[k] / N for k in range(K)])
    B = np.block([[n[None, :], np.zeros((1, K))], [np.eye(K), np.eye(K)]])
    v = np.concatenate([[1.0], np.full(K, P**N)])
    sol = _checked(solve(LinearProgram(np.concatenate([-s, np.zeros(K)]), B, v)), "maxprob")
    return -sol.objective - 4.0


# --- repeated single-shot comparison -------------------------------------------------

def _one_shot_masses(game: GameSpec, mu: float) -> dict[tuple[int, int], float]:
    if game.m == 2:
        prog = build_chsh_m1(1, mu)
    else:
        prog = build_imm22(game.m, 1, mu)
    sol = _checked(prog.solve(), f"one-shot {game.name} M1={mu}")
    return dict(prog.profile(sol).masses)


def _product_m1(game: GameSpec, N: int, one: dict[tuple[int, int], float]) -> float:
    """Raw M1 of N independent repetitions of a single-run profile."""
    g, bad, u = reduction_table(game).per_run_counts
    logs = {key: (math.log(v) if v > 0 else -math.inf) for key, v in one.items()}
    lc, lw, lu = logs.get((1, 0), -math.inf), logs.get((0, 0), -math.inf), logs.get((0, 1), -math.inf)
    log_unif = -N * math.log(game.n_settings)
    total = []
    for (k, l), n in class_counts(N, (g, bad, u)).items():
        terms = [(k, lc), (N - l - k, lw), (l, lu)]
        log_mass = sum(e * lv for e, lv in terms if e)
        ln = math.log(n)
        total.append(abs(math.exp(ln + log_mass) - math.exp(ln + log_unif)))
    return math.fsum(total)


def repeated_one_shot(game: GameSpec | str, N: int, M1: float, tol: float = 1e-12) -> CurvePoint:
    """Score of N independent single-run optimal attacks whose combined
    N-run M1 equals the budget. The per-run budget is found by bisection.
    """
    game = GameSpec.from_name(game) if isinstance(game, str) else game
    hi_mu = m_max(game, 1)

    def score(mu):
        prog = build_chsh_m1(1, mu) if game.m == 2 else build_imm22(game.m, 1, mu)
        return prog.score(_checked(prog.solve(), "one-shot"))

    if M1 >= m_max(game, N):
        return CurvePoint(float(M1), score(hi_mu), N, None, "optimal")
    lo, hi = 0.0, hi_mu
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _product_m1(game, N, _one_shot_masses(game, mid)) <= M1:
            lo = mid
        else:
            hi = mid
    return CurvePoint(float(M1), score(lo), N, None, "optimal")


# --- full-dimensional oracle ----------------------------------------------------------

@dataclass
class OracleResult:
    game: str
    N: int
    measure: MdMeasure
    status: str
    score: float
    attained: float
    hidden: np.ndarray
    conditional: np.ndarray | None = field(repr=False, default=None)

    def to_json(self) -> str:
        return json.dumps({
            "game": self.game,
            "N": self.N,
            "measure": {"kind": self.measure.kind.value, "value": self.measure.value},
            "status": self.status,
            "score": self.score,
            "measure_value": self.attained,
            "hidden_distribution": self.hidden.tolist(),
            "conditional": None if self.conditional is None else self.conditional.tolist(),
        })


def oracle_solve(game: GameSpec | str, N: int, measure: MdMeasure, table: OutcomeTable | None = None) -> OracleResult:
    """Un-reduced LP over every conditional p(y|x) with fixed p(x).

    Uses the same hidden-variable rows and weights as the reduced programs,
    the Bayes condition for every settings string, and the raw measure
    definition (max over x).
    """
    game = GameSpec.from_name(game) if isinstance(game, str) else game
    table = table or reduction_table(game)
    T, Sn = len(table), game.n_settings
    X, Y = T**N, Sn**N
    if X * Y > ORACLE_LIMIT:
        raise ValueError(f"oracle size {X}x{Y} exceeds {ORACLE_LIMIT}")
    px = hidden_string_weights(table, N)
    xs, ys = settings_strings(T, N), settings_strings(Sn, N)
    vals = table.value_matrix[xs[:, None, :], ys[None, :, :]].sum(axis=2)
    gain = (Sn / N) * (px[:, None] * vals).reshape(-1)
    uniform = float(Sn) ** -N
    XY = X * Y

    norm = np.kron(np.eye(X), np.ones((1, Y)))
    bayes = np.kron(px[None, :], np.eye(Y))
    if measure.kind is MeasureKind.MAX_PROB:
        cap = measure.value**N
        B = np.block([
            [np.eye(XY), np.eye(XY)],
            [norm, np.zeros((X, XY))],
            [bayes, np.zeros((Y, XY))],
        ])
        v = np.concatenate([np.full(XY, cap), np.ones(X), np.full(Y, uniform)])
        c = np.concatenate([-gain, np.zeros(XY)])
    else:
        # w = a + p - uniform >= |p - uniform| via a >= 0 and b = a + 2p - 2 uniform >= 0
        B = np.block([
            [2 * np.eye(XY), np.eye(XY), -np.eye(XY), np.zeros((XY, X))],
            [norm, np.zeros((X, 2 * XY)), np.zeros((X, X))],
            [bayes, np.zeros((Y, 2 * XY)), np.zeros((Y, X))],
            [np.zeros((X, XY)), norm, np.zeros((X, XY)), np.eye(X)],
        ])
        v = np.concatenate([np.full(XY, 2 * uniform), np.ones(X), np.full(Y, uniform), np.full(X, measure.value)])
        c = np.concatenate([-gain, np.zeros(2 * XY + X)])
    sol = solve(LinearProgram(c, B, v))
    if sol.status is not LpStatus.OPTIMAL:
        return OracleResult(game.name, N, measure, sol.status.value, math.nan, math.nan, px)
    cond = sol.z[:XY].reshape(X, Y)
    if measure.kind is MeasureKind.MAX_PROB:
        attained = float(cond.max()) ** (1.0 / N)
    else:
        attained = float(np.abs(cond - uniform).sum(axis=1).max())
    return OracleResult(game.name, N, measure, sol.status.value, -sol.objective, attained, px, cond)


def brute_force_oracle(game: GameSpec | str, N: int, measure: MdMeasure) -> float:
    res = oracle_solve(game, N, measure)
    if res.status != LpStatus.OPTIMAL.value:
        raise SolverFailure(f"oracle returned {res.status}")
    return res.score
