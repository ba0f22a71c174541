"""Bell games, deterministic outcome tables, symmetry-reduced strategy profiles.

Settings pairs ``(j, k)`` are flattened to a single index ``y = j*m + k``; for
CHSH this is ``y = 2j + k``. Hidden-variable rows are stored without their
conjugates (all outputs negated), which leave every correlator unchanged.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Mapping, Sequence

import numpy as np

GAME_SETTINGS = {"chsh": 2, "i3322": 3}
MAX_ENUMERATION_M = 4
EXPAND_LIMIT = 10**7
NORM_TOL = 1e-9


class EnumerationRefused(ValueError):
    pass


class RowHomogeneityError(ValueError):
    """No weighting of the outcome rows covers every used pair equally."""


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class GameSpec:
    """Two-party, m-setting, two-outcome Bell functional.

    ``alpha[j][k]`` is +1 below the anti-diagonal, -1 on it and 0 beyond it.
    """

    m: int

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or self.m < 2:
            raise ValueError(f"m must be an integer >= 2, got {self.m!r}")

    @classmethod
    def from_name(cls, name: str) -> "GameSpec":
        try:
            return cls(GAME_SETTINGS[name])
        except KeyError:
            raise ValueError(f"unknown game {name!r}") from None

    @property
    def name(self) -> str:
        for k, v in GAME_SETTINGS.items():
            if v == self.m:
                return k
        return f"i{self.m}{self.m}22"

    @property
    def weight(self) -> int:
        return self.m * self.m

    @cached_property
    def alpha(self) -> tuple[tuple[int, ...], ...]:
        m = self.m
        return tuple(
            tuple(1 if j + k < m else (-1 if j + k == m else 0) for k in range(m))
            for j in range(m)
        )

    @property
    def n_settings(self) -> int:
        return self.m * self.m

    @cached_property
    def used_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((j, k) for j in range(self.m) for k in range(self.m) if self.alpha[j][k])

    @cached_property
    def unused_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (j, k) for j in range(self.m) for k in range(self.m) if not self.alpha[j][k]
        )

    def setting_index(self, j: int, k: int) -> int:
        return j * self.m + k

    def pair(self, y) -> tuple[int, int]:
        if isinstance(y, tuple):
            j, k = y
        else:
            j, k = divmod(int(y), self.m)
        if not (0 <= j < self.m and 0 <= k < self.m):
            raise ValueError(f"settings {y!r} out of range for m={self.m}")
        return j, k


CHSH = GameSpec(2)
I3322 = GameSpec(3)


@dataclass(frozen=True)
class OutcomeTable:
    """Deterministic outputs per hidden variable, plus the distribution over rows.

    ``rows[x] = (a, b)`` with ``a[j]``, ``b[k]`` in {+1, -1}. ``weights`` is
    p(x); ``None`` means uniform.
    """

    game: GameSpec
    rows: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        m = self.game.m
        for a, b in self.rows:
            if len(a) != m or len(b) != m or any(s not in (1, -1) for s in (*a, *b)):
                raise ValueError(f"malformed outcome row {(a, b)!r}")
        if self.weights is not None:
            if len(self.weights) != len(self.rows):
                raise ValueError("weights must match rows")
            if abs(sum(self.weights) - 1.0) > NORM_TOL or min(self.weights) < 0:
                raise ValueError("weights must be a probability vector")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def hidden_distribution(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.rows), 1.0 / len(self.rows))
        return np.asarray(self.weights, dtype=float)

    def run_value(self, x: int, y) -> int:
        """alpha_jk * a_j * b_k: +1 correct, -1 wrong, 0 for an unused pair."""
        j, k = self.game.pair(y)
        a, b = self.rows[x]
        return self.game.alpha[j][k] * a[j] * b[k]

    @cached_property
    def value_matrix(self) -> np.ndarray:
        """``(rows, m*m)`` array of :meth:`run_value`."""
        n = self.game.n_settings
        return np.array(
            [[self.run_value(x, y) for y in range(n)] for x in range(len(self.rows))],
            dtype=int,
        )

    @cached_property
    def correct_mask(self) -> tuple[frozenset, ...]:
        return tuple(
            frozenset(p for p in self.game.used_pairs if self.run_value(x, p) == 1)
            for x in range(len(self.rows))
        )

    @cached_property
    def per_run_counts(self) -> tuple[int, int, int]:
        """(correct used, wrong used, unused) pairs per row; identical across rows."""
        n_used = len(self.game.used_pairs)
        u = len(self.game.unused_pairs)
        goods = {len(mask) for mask in self.correct_mask}
        if len(goods) != 1:
            raise ValueError(f"rows answer different numbers of pairs correctly: {goods}")
        g = goods.pop()
        return g, n_used - g, u

    def pair_coverage(self) -> np.ndarray:
        """Weighted fraction of hidden variables answering each used pair correctly."""
        w = self.hidden_distribution
        return np.array(
            [sum(w[x] for x, mask in enumerate(self.correct_mask) if p in mask)
             for p in self.game.used_pairs]
        )

    def is_homogeneous(self, tol: float = 1e-12) -> bool:
        cov = self.pair_coverage()
        return bool(cov.max() - cov.min() <= tol)

    def with_weights(self, weights: Sequence[float], drop_zero: bool = True) -> "OutcomeTable":
        keep = [i for i, w in enumerate(weights) if w > 1e-12 or not drop_zero]
        total = sum(weights[i] for i in keep)
        return OutcomeTable(
            self.game,
            tuple(self.rows[i] for i in keep),
            tuple(float(weights[i] / total) for i in keep),
        )


def chsh_outcome_table() -> OutcomeTable:
    rows = (
        ((1, 1), (1, 1)),
        ((1, -1), (1, 1)),
        ((1, 1), (1, -1)),
        ((1, -1), (-1, 1)),
    )
    return OutcomeTable(CHSH, rows)


def _row_order(row):
    a, b = row
    return tuple(-s for s in (*b, *a))


def derive_outcome_table(game: GameSpec) -> OutcomeTable:
    """All outcome rows (with a_0 = +1) maximising correctly answered used pairs."""
    m = game.m
    if m > MAX_ENUMERATION_M:
        raise EnumerationRefused(
            f"m={m}: enumeration of 2^{2 * m - 1} assignments refused (limit m <= {MAX_ENUMERATION_M})"
        )
    best, rows = -1, []
    for bits in itertools.product((1, -1), repeat=2 * m - 1):
        a, b = (1, *bits[: m - 1]), tuple(bits[m - 1:])
        score = sum(1 for j, k in game.used_pairs if a[j] * b[k] == game.alpha[j][k])
        if score > best:
            best, rows = score, []
        if score == best:
            rows.append((a, b))
    # outputs sorted (b, a) descending, +1 first: reproduces the CHSH table order
    rows.sort(key=_row_order)
    return OutcomeTable(game, tuple(rows))


def homogeneous_support(table: OutcomeTable) -> OutcomeTable:
    """Reweight ``table`` so every used pair is answered correctly by the same
    weighted fraction of hidden variables.

    The uniform weighting is kept when it already works. Otherwise a basic
    feasible weighting is found by linear programming and zero-weight rows are
    dropped. Raises :class:`RowHomogeneityError` if no weighting exists.
    """
    if table.is_homogeneous():
        return table
    from .simplex import LinearProgram, LpStatus, solve

    g, bad, _ = table.per_run_counts
    rho = g / (g + bad)
    pairs = table.game.used_pairs
    cover = np.array([[1.0 if p in mask else 0.0 for mask in table.correct_mask] for p in pairs])
    B = np.vstack([cover, np.ones(len(table))])
    v = np.concatenate([np.full(len(pairs), rho), [1.0]])
    sol = solve(LinearProgram(np.zeros(len(table)), B, v))
    if sol.status is not LpStatus.OPTIMAL:
        raise RowHomogeneityError(
            f"{table.game.name}: no hidden-variable weighting gives equal pair coverage "
            f"(uniform coverage {table.pair_coverage().round(6).tolist()})"
        )
    out = table.with_weights(sol.z)
    assert out.is_homogeneous(1e-9)
    return out


@lru_cache(maxsize=None)
def reduction_table(game: GameSpec) -> OutcomeTable:
    """Outcome table and p(x) used by the class reduction for ``game``."""
    if game.m == 2:
        return chsh_outcome_table()
    return homogeneous_support(derive_outcome_table(game))


def correct_count(x: Sequence[int], y: Sequence, table: OutcomeTable, game: GameSpec | None = None) -> tuple[int, int]:
    """(k, l): runs answered correctly on a used pair, runs on an unused pair."""
    game = game or table.game
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} hidden variables, {len(y)} settings")
    k = l = 0
    for xn, yn in zip(x, y):
        if not 0 <= xn < len(table.rows):
            raise ValueError(f"hidden variable {xn} out of range")
        value = table.run_value(xn, game.pair(yn))
        if value == 0:
            l += 1
        elif value == 1:
            k += 1
    return k, l


def class_size(N: int, k: int) -> int:
    """Number of CHSH settings strings with exactly k correct runs: C(N,k) 3^k."""
    if not 0 <= k <= N:
        raise ValueError(f"k={k} outside 0..{N}")
    return math.comb(N, k) * 3**k


def class_counts(N: int, per_run: tuple[int, int, int]) -> dict[tuple[int, int], int]:
    """Member count of each (k, l) class for one hidden string.

    ``per_run`` is (correct used, wrong used, unused) pairs per row. Classes
    with no members are omitted.
    """
    g, bad, u = per_run
    out = {}
    for l in range(N + 1):
        ul = math.comb(N, l) * u**l
        if ul == 0:
            continue
        for k in range(N - l + 1):
            n = ul * math.comb(N - l, k) * g**k * bad ** (N - l - k)
            if n:
                out[(k, l)] = n
    return out


def game_counts(game: str | GameSpec) -> tuple[int, int, int]:
    if isinstance(game, str):
        game = GameSpec.from_name(game)
    return reduction_table(game).per_run_counts


@dataclass(frozen=True)
class StrategyProfile:
    """Member mass per (k, l) class. CHSH profiles only use l = 0."""

    game: str
    N: int
    masses: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        GameSpec.from_name(self.game)
        counts = self.class_counts
        clean = {}
        for key, mass in self.masses.items():
            key = (int(key[0]), int(key[1]))
            if key not in counts:
                raise ValueError(f"class {key} does not exist for {self.game}, N={self.N}")
            if mass < 0:
                raise ValueError(f"negative mass {mass} for class {key}")
            clean[key] = float(mass)
        object.__setattr__(self, "masses", clean)

    @classmethod
    def chsh(cls, p: Sequence[float]) -> "StrategyProfile":
        """Build from ``p[k]``, k = 0..N."""
        return cls("chsh", len(p) - 1, {(k, 0): float(pk) for k, pk in enumerate(p)})

    @classmethod
    def uniform(cls, game: str, N: int) -> "StrategyProfile":
        n = GAME_SETTINGS[game] ** 2
        mass = float(n) ** -N
        counts = class_counts(N, game_counts(game))
        return cls(game, N, {key: mass for key in counts})

    @cached_property
    def class_counts(self) -> dict[tuple[int, int], int]:
        return class_counts(self.N, game_counts(self.game))

    def p(self, k: int, l: int = 0) -> float:
        return self.masses.get((k, l), 0.0)

    def class_totals(self) -> dict[tuple[int, int], float]:
        """Class size times member mass, evaluated without overflow."""
        out = {}
        for key, n in self.class_counts.items():
            mass = self.masses.get(key, 0.0)
            out[key] = math.exp(math.log(n) + math.log(mass)) if mass > 0 else 0.0
        return out

    def total_mass(self) -> float:
        return math.fsum(self.class_totals().values())

    def check_normalized(self, tol: float = NORM_TOL) -> None:
        total = self.total_mass()
        if abs(total - 1.0) > tol:
            raise NormalizationError(f"profile mass sums to {total!r}, not 1")

    def to_json(self) -> str:
        classes = [
            {"k": k, "l": l, "mass": self.masses.get((k, l), 0.0)}
            for (k, l) in sorted(self.class_counts)
        ]
        return json.dumps({"game": self.game, "N": self.N, "classes": classes})

    @classmethod
    def from_json(cls, text: str) -> "StrategyProfile":
        d = json.loads(text)
        masses = {(c["k"], c.get("l", 0)): c["mass"] for c in d["classes"]}
        return cls(d["game"], int(d["N"]), masses)


def score_from_profile(profile: StrategyProfile) -> float:
    """Expected Bell score, averaged over the N runs of a block."""
    profile.check_normalized()
    m = GAME_SETTINGS[profile.game]
    N = profile.N
    acc = math.fsum(
        (2 * k - N + l) * q for (k, l), q in profile.class_totals().items()
    )
    return m * m * acc / N


class MeasureKind(str, enum.Enum):
    MAX_PROB = "P"
    L1 = "M1"


@dataclass(frozen=True)
class MdMeasure:
    """A measurement-dependence constraint. MaxProb values are per run."""

    kind: MeasureKind
    value: float

    def __post_init__(self):
        object.__setattr__(self, "kind", MeasureKind(self.kind))
        if self.kind is MeasureKind.MAX_PROB and not 0 < self.value <= 1:
            raise ValueError(f"P must lie in (0, 1], got {self.value}")
        if self.kind is MeasureKind.L1 and not 0 <= self.value <= 2:
            raise ValueError(f"M1 must lie in [0, 2], got {self.value}")

    @classmethod
    def max_prob(cls, P: float) -> "MdMeasure":
        return cls(MeasureKind.MAX_PROB, P)

    @classmethod
    def l1(cls, M1: float) -> "MdMeasure":
        return cls(MeasureKind.L1, M1)


def md_from_profile(profile: StrategyProfile, kind: MeasureKind | str, raw: bool = False) -> float:
    """Measurement dependence of a profile.

    MaxProb: the largest member mass P_(N); returned as the per-run value
    ``P_(N)**(1/N)`` unless ``raw``. L1: sum over classes of
    count * |mass - (m^2)^-N|.
    """
    kind = MeasureKind(kind)
    N = profile.N
    if kind is MeasureKind.MAX_PROB:
        top = max(profile.masses.values(), default=0.0)
        return top if raw else top ** (1.0 / N)
    m = GAME_SETTINGS[profile.game]
    log_unif = -N * math.log(m * m)
    totals = profile.class_totals()
    return math.fsum(
        abs(totals[key] - math.exp(math.log(n) + log_unif))
        for key, n in profile.class_counts.items()
    )


def settings_strings(T: int, N: int) -> np.ndarray:
    """All length-N strings over range(T), lexicographic, as rows."""
    return np.array(list(itertools.product(range(T), repeat=N)), dtype=int).reshape(-1, N)


def expand_profile(profile: StrategyProfile, table: OutcomeTable | None = None) -> np.ndarray:
    """Full conditional table ``p[x, y]`` over hidden strings and settings strings.

    Strings are enumerated lexicographically (run 0 most significant).
    """
    game = GameSpec.from_name(profile.game)
    table = table or reduction_table(game)
    T, S, N = len(table), game.n_settings, profile.N
    if T**N * S**N > EXPAND_LIMIT:
        raise ValueError(f"expansion of {T}^{N} x {S}^{N} entries exceeds {EXPAND_LIMIT}")
    k, l = class_index_arrays(table, N)
    masses = np.zeros((N + 1, N + 1))
    for (kk, ll), mass in profile.masses.items():
        masses[kk, ll] = mass
    return masses[k, l]


def class_index_arrays(table: OutcomeTable, N: int) -> tuple[np.ndarray, np.ndarray]:
    """(k, l) for every pair of hidden string x and settings string y."""
    T, S = len(table), table.game.n_settings
    vals = table.value_matrix
    xs, ys = settings_strings(T, N), settings_strings(S, N)
    per_run = vals[xs[:, None, :], ys[None, :, :]]
    return (per_run == 1).sum(axis=2), (per_run == 0).sum(axis=2)


def hidden_string_weights(table: OutcomeTable, N: int) -> np.ndarray:
    w = table.hidden_distribution
    out = np.ones(1)
    for _ in range(N):
        out = np.outer(out, w).reshape(-1)
    return out
