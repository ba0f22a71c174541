"""Dense two-phase simplex for equality standard form.

Solves ``minimize c.z  subject to  B z = v,  z >= 0`` with Bland's rule
throughout, so the pivot sequence is fully determined by the input.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_ITERATIONS = 200_000


class LpError(Exception):
    """Base class for solver failures."""


class DimensionError(LpError, ValueError):
    pass


class SingularBasisError(LpError):
    """The final basis does not reproduce the constraints to tolerance."""


class IterationLimitError(LpError):
    pass


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    B: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if B.shape != (v.size, c.size):
            raise DimensionError(
                f"B has shape {B.shape}, expected ({v.size}, {c.size})"
            )
        if not (np.isfinite(c).all() and np.isfinite(B).all() and np.isfinite(v).all()):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.B.shape

    def dump(self, fh: TextIO) -> None:
        """Write ``rows cols``, then B row-major, then c, then v."""
        rows, cols = self.B.shape
        fh.write(f"{rows} {cols}\n")
        for r in self.B:
            fh.write(" ".join(repr(float(x)) for x in r) + "\n")
        fh.write(" ".join(repr(float(x)) for x in self.c) + "\n")
        fh.write(" ".join(repr(float(x)) for x in self.v) + "\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh: TextIO) -> "LinearProgram":
        rows, cols = (int(t) for t in fh.readline().split())
        B = np.array([[float(t) for t in fh.readline().split()] for _ in range(rows)])
        c = np.array([float(t) for t in fh.readline().split()])
        v = np.array([float(t) for t in fh.readline().split()])
        return cls(c=c, B=B.reshape(rows, cols), v=v)


@dataclass
class LpSolution:
    status: LpStatus
    z: np.ndarray | None
    objective: float
    iterations: int
    dropped_rows: tuple[int, ...] = field(default=())


class _Tableau:
    """Row-reduced tableau ``[A | rhs]`` with an objective row appended last."""

    def __init__(self, A: np.ndarray, rhs: np.ndarray, basis: list[int]):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = rhs
        self.basis = basis
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def set_costs(self, cost: np.ndarray) -> None:
        n = self.T.shape[1] - 1
        row = np.zeros(n + 1)
        row[: cost.size] = cost
        # reduced costs: c - c_B B^{-1} A; objective value lands negated in the corner
        for i, j in enumerate(self.basis):
            if row[j] != 0.0:
                row -= row[j] * self.T[i]
        self.T[-1] = row

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.nonzero(col)[0]
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.iterations += 1

    def run(self, allowed: int) -> bool:
        """Bland iterations over the first ``allowed`` columns. False if unbounded."""
        T = self.T
        while True:
            if self.iterations > MAX_ITERATIONS:
                raise IterationLimitError(f"exceeded {MAX_ITERATIONS} pivots")
            red = T[-1, :allowed]
            entering = np.flatnonzero(red < -PIVOT_TOL)
            if entering.size == 0:
                return True
            j = int(entering[0])
            col = T[:-1, j]
            cand = np.flatnonzero(col > PIVOT_TOL)
            if cand.size == 0:
                return False
            ratios = T[cand, -1] / col[cand]
            best = ratios.min()
            ties = cand[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
            # Bland: among tied rows leave the smallest basic variable index
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j)


def solve(lp: LinearProgram) -> LpSolution:
    """Two-phase simplex. Redundant equality rows are detected and dropped."""
    B, v, c = lp.B, lp.v, lp.c
    m, n = B.shape
    if m == 0:
        if np.any(c < -PIVOT_TOL):
            return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, 0)
        return LpSolution(LpStatus.OPTIMAL, np.zeros(n), 0.0, 0)

    sign = np.where(v < 0, -1.0, 1.0)
    A = np.hstack([B * sign[:, None], np.eye(m)])
    rhs = v * sign
    tab = _Tableau(A, rhs, basis=list(range(n, n + m)))

    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab.set_costs(phase1)
    tab.run(allowed=n + m)
    infeas = -tab.T[-1, -1]
    if infeas > FEAS_TOL * (1.0 + np.abs(v).max()):
        return LpSolution(LpStatus.INFEASIBLE, None, np.nan, tab.iterations)

    # drive zero-level artificials out of the basis; rows that cannot pivot are redundant
    dropped = []
    for r in range(tab.m):
        if tab.basis[r] < n:
            continue
        row = tab.T[r, :n]
        cand = np.flatnonzero(np.abs(row) > PIVOT_TOL)
        if cand.size:
            tab.pivot(r, int(cand[0]))
        else:
            dropped.append(r)
    if dropped:
        keep = [i for i in range(tab.m) if i not in dropped]
        tab.T = np.vstack([tab.T[keep], tab.T[-1:]])
        tab.basis = [tab.basis[i] for i in keep]
    # artificial columns stay in the tableau but are never allowed to re-enter
    tab.set_costs(c)
    if not tab.run(allowed=n):
        return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, tab.iterations, tuple(dropped))

    z = np.zeros(n)
    for i, j in enumerate(tab.basis):
        z[j] = tab.T[i, -1]
    resid = np.abs(B @ z - v).max()
    if resid > FEAS_TOL * (1.0 + np.abs(v).max()) or z.min() < -FEAS_TOL:
        raise SingularBasisError(
            f"final basis residual {resid:.3e}, min(z) {z.min():.3e}"
        )
    return LpSolution(LpStatus.OPTIMAL, z, float(c @ z), tab.iterations, tuple(dropped))
