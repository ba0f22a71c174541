"""Monte-Carlo replay of a CHSH strategy profile as a pre-programmed attack.

Each block draws a hidden string, a correctness class with probability
``count * mass``, and a settings string uniformly inside that class; outputs
come from the outcome table with a fair global sign flip per block. Trials
are split into fixed-size chunks, each on its own Philox stream, so results
do not depend on how many threads run them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import parallel_map
from .model import GameSpec, OutcomeTable, StrategyProfile, chsh_outcome_table, score_from_profile, md_from_profile

CHUNK = 1 << 17
SIGMAS = 4.0
FP_FLOOR = 1e-12


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream)``."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def _setting_lists(table: OutcomeTable) -> tuple[np.ndarray, np.ndarray]:
    vals = table.value_matrix
    correct = [np.flatnonzero(r == 1) for r in vals]
    wrong = [np.flatnonzero(r == -1) for r in vals]
    if len({len(c) for c in correct}) != 1 or len({len(w) for w in wrong}) != 1:
        raise ValueError("rows must have equal numbers of correct and wrong settings")
    return np.array(correct), np.array(wrong)


def sample_blocks(profile: StrategyProfile, table: OutcomeTable, rng: np.random.Generator, size: int) -> dict[str, np.ndarray]:
    """Draw ``size`` blocks. Returns arrays x, y, a, b (size x N), sign and k (size)."""
    if profile.game != "chsh":
        raise NotImplementedError("simulation covers CHSH profiles only")
    N, game = profile.N, table.game
    T = len(table)
    correct, wrong = _setting_lists(table)
    totals = profile.class_totals()
    q = np.array([totals.get((k, 0), 0.0) for k in range(N + 1)])
    q /= q.sum()

    x = rng.integers(0, T, size=(size, N))
    k = rng.choice(N + 1, size=size, p=q)
    # a uniformly random k-subset of runs answers correctly
    rank = np.argsort(np.argsort(rng.random((size, N)), axis=1), axis=1)
    is_correct = rank < k[:, None]
    pick_c = rng.integers(0, correct.shape[1], size=(size, N))
    pick_w = rng.integers(0, wrong.shape[1], size=(size, N))
    y = np.where(is_correct, correct[x, pick_c], wrong[x, pick_w])

    sign = np.where(rng.random(size) < 0.5, 1, -1)
    rows_a = np.array([r[0] for r in table.rows])
    rows_b = np.array([r[1] for r in table.rows])
    j, kk = np.divmod(y, game.m)
    a = rows_a[x, j] * sign[:, None]
    b = rows_b[x, kk] * sign[:, None]
    return {"x": x, "y": y, "a": a, "b": b, "sign": sign, "k": k}


def sample_block(profile: StrategyProfile, table: OutcomeTable, rng: np.random.Generator):
    """One block: (x, y, (a, b), sign)."""
    d = sample_blocks(profile, table, rng, 1)
    return (
        tuple(int(v) for v in d["x"][0]),
        tuple(int(v) for v in d["y"][0]),
        (tuple(int(v) for v in d["a"][0]), tuple(int(v) for v in d["b"][0])),
        int(d["sign"][0]),
    )


@dataclass
class _Partial:
    n: int
    s: float
    s2: float
    settings: np.ndarray
    a: np.ndarray
    b: np.ndarray
    classes: np.ndarray

    def __add__(self, other: "_Partial") -> "_Partial":
        return _Partial(
            self.n + other.n, self.s + other.s, self.s2 + other.s2,
            self.settings + other.settings, self.a + other.a, self.b + other.b,
            self.classes + other.classes,
        )


@dataclass
class SimReport:
    trials: int
    seed: int
    N: int
    empirical_S: float
    stderr: float
    analytic_S: float
    empirical_md: float
    marginals: np.ndarray = field(repr=False)
    outcome_means: np.ndarray = field(repr=False)
    class_fractions: np.ndarray = field(repr=False)

    def checks(self, sigmas: float = SIGMAS) -> dict[str, bool]:
        n = self.trials
        sd_freq = math.sqrt(0.25 * 0.75 / n)
        sd_out = 1.0 / math.sqrt(n)
        out = {"score": bool(abs(self.empirical_S - self.analytic_S) <= sigmas * self.stderr + FP_FLOOR)}
        for pos in range(self.N):
            for y, f in enumerate(self.marginals[pos]):
                out[f"marginal[run={pos},setting={y}]"] = bool(abs(f - 0.25) <= sigmas * sd_freq)
            for party, mean in zip("ab", self.outcome_means[pos]):
                out[f"outcome_{party}[run={pos}]"] = bool(abs(mean) <= sigmas * sd_out)
        return out

    def failed(self, sigmas: float = SIGMAS) -> list[str]:
        return [name for name, ok in self.checks(sigmas).items() if not ok]

    @property
    def passed(self) -> bool:
        return not self.failed()

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "N": self.N,
            "empirical_S": self.empirical_S,
            "stderr": self.stderr,
            "analytic_S": self.analytic_S,
            "empirical_md": self.empirical_md,
            "marginals": self.marginals.tolist(),
            "outcome_means": self.outcome_means.tolist(),
            "class_fractions": self.class_fractions.tolist(),
            "checks": self.checks(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary(self) -> str:
        lines = [
            f"trials        {self.trials}",
            f"seed          {self.seed}",
            f"N             {self.N}",
            f"S (empirical) {self.empirical_S:.6f} +/- {self.stderr:.2e}",
            f"S (analytic)  {self.analytic_S:.6f}",
            f"P_(N)         {self.empirical_md:.6g}",
            "run  " + "  ".join(f"y={y:<6d}" for y in range(self.marginals.shape[1])) + "  <a>      <b>",
        ]
        for pos in range(self.N):
            freqs = "  ".join(f"{f:.6f}" for f in self.marginals[pos])
            a, b = self.outcome_means[pos]
            lines.append(f"{pos:<4d} {freqs}  {a:+.5f} {b:+.5f}")
        failed = self.failed()
        lines.append("checks        " + ("all passed" if not failed else "FAILED: " + ", ".join(failed)))
        return "\n".join(lines)


def _run_chunk(profile, table, seed, stream, size) -> _Partial:
    rng = make_rng(seed, stream)
    d = sample_blocks(profile, table, rng, size)
    game = table.game
    N = profile.N
    alpha = np.array([game.alpha[j][k] for j in range(game.m) for k in range(game.m)])
    per_block = game.n_settings / N * (alpha[d["y"]] * d["a"] * d["b"]).sum(axis=1)
    settings = np.stack([np.bincount(d["y"][:, n], minlength=game.n_settings) for n in range(N)])
    return _Partial(
        size, float(per_block.sum()), float((per_block**2).sum()), settings,
        d["a"].sum(axis=0), d["b"].sum(axis=0), np.bincount(d["k"], minlength=N + 1),
    )


def estimate(profile: StrategyProfile, table: OutcomeTable | None = None, game: GameSpec | None = None,
             trials: int = 10**6, seed: int = 0) -> SimReport:
    """Empirical CHSH score and honesty statistics of ``profile``."""
    table = table or chsh_outcome_table()
    if game is not None and game != table.game:
        raise ValueError("game does not match outcome table")
    if trials < 2:
        raise ValueError("need at least two trials")
    profile.check_normalized()
    sizes = [CHUNK] * (trials // CHUNK)
    if trials % CHUNK:
        sizes.append(trials % CHUNK)
    parts = parallel_map(lambda item: _run_chunk(profile, table, seed, item[0], item[1]), enumerate(sizes))
    tot = parts[0]
    for p in parts[1:]:
        tot = tot + p
    mean = tot.s / tot.n
    var = max(tot.s2 - tot.n * mean * mean, 0.0) / (tot.n - 1)
    return SimReport(
        trials=tot.n,
        seed=seed,
        N=profile.N,
        empirical_S=mean,
        stderr=math.sqrt(var / tot.n),
        analytic_S=score_from_profile(profile),
        empirical_md=md_from_profile(profile, "P", raw=True),
        marginals=tot.settings / tot.n,
        outcome_means=np.stack([tot.a, tot.b], axis=1) / tot.n,
        class_fractions=tot.classes / tot.n,
    )
