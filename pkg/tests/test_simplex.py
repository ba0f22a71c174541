import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from bellmd.simplex import DimensionError, LinearProgram, LpStatus, solve


def vertex_enumeration(lp: LinearProgram):
    """Best basic feasible solution by trying every column basis."""
    B, v, c = lp.B, lp.v, lp.c
    rank = np.linalg.matrix_rank(B)
    # keep a maximal independent row subset
    rows = []
    for i in range(B.shape[0]):
        if np.linalg.matrix_rank(B[rows + [i]]) > len(rows):
            rows.append(i)
    Br, vr = B[rows], v[rows]
    best = None
    for cols in itertools.combinations(range(B.shape[1]), rank):
        M = Br[:, cols]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        zb = np.linalg.solve(M, vr)
        if zb.min() < -1e-9:
            continue
        z = np.zeros(B.shape[1])
        z[list(cols)] = zb
        if np.abs(B @ z - v).max() > 1e-7:
            continue
        val = float(c @ z)
        best = val if best is None else min(best, val)
    return best


def random_bounded_lp(rng, m, n):
    """Rational data, a known feasible point, and a bounding sum row."""
    B = rng.integers(-4, 5, size=(m - 1, n)).astype(float)
    z0 = rng.integers(0, 4, size=n).astype(float)
    B = np.vstack([B, np.ones(n)])
    v = B @ z0
    c = rng.integers(-5, 6, size=n).astype(float)
    return LinearProgram(c, B, v)


def test_trivial_example():
    sol = solve(LinearProgram([-1.0, 0.0], [[1.0, 1.0]], [1.0]))
    assert sol.status is LpStatus.OPTIMAL
    np.testing.assert_allclose(sol.z, [1.0, 0.0])
    assert sol.objective == pytest.approx(-1.0)


def test_infeasible_example():
    assert solve(LinearProgram([1.0], [[1.0]], [-1.0])).status is LpStatus.INFEASIBLE


def test_unbounded():
    sol = solve(LinearProgram([-1.0, 0.0], [[1.0, -1.0]], [0.0]))
    assert sol.status is LpStatus.UNBOUNDED


def test_redundant_rows_are_tolerated():
    B = [[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]]
    sol = solve(LinearProgram([1.0, 2.0, 3.0], B, [1.0, 2.0, 1.0]))
    assert sol.status is LpStatus.OPTIMAL
    # z2 = t gives objective 4 - 2t on 0 <= t <= 1
    assert sol.objective == pytest.approx(2.0)
    np.testing.assert_allclose(sol.z, [0.0, 1.0, 0.0], atol=1e-12)
    assert sol.dropped_rows


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        LinearProgram([1.0, 2.0], [[1.0, 2.0, 3.0]], [1.0])
    with pytest.raises(DimensionError):
        LinearProgram([1.0], [[1.0]], [1.0, 2.0])


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        LinearProgram([np.nan], [[1.0]], [1.0])


def test_dump_round_trip():
    lp = random_bounded_lp(np.random.default_rng(3), 3, 5)
    text = lp.dumps()
    assert text.splitlines()[0] == "3 5"
    back = LinearProgram.load(io.StringIO(text))
    np.testing.assert_array_equal(back.B, lp.B)
    np.testing.assert_array_equal(back.c, lp.c)
    np.testing.assert_array_equal(back.v, lp.v)


@pytest.mark.parametrize("seed", range(40))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 6))
    n = int(rng.integers(m + 1, 10))
    lp = random_bounded_lp(rng, m, n)
    sol = solve(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(vertex_enumeration(lp), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(0, 4))
def test_matches_highs(seed, m, extra):
    rng = np.random.default_rng(seed)
    n = min(12, m + 1 + extra)
    lp = random_bounded_lp(rng, m, n)
    sol = solve(lp)
    ref = linprog(lp.c, A_eq=lp.B, b_eq=lp.v, bounds=(0, None), method="highs")
    assert ref.status == 0
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(ref.fun, abs=1e-8)
    assert np.abs(lp.B @ sol.z - lp.v).max() <= 1e-9 * (1 + np.abs(lp.v).max())
    assert sol.z.min() >= -1e-9


@pytest.mark.parametrize("seed", range(10))
def test_weak_duality_perturbations(seed):
    rng = np.random.default_rng(100 + seed)
    lp = random_bounded_lp(rng, 4, 9)
    sol = solve(lp)
    assert sol.status is LpStatus.OPTIMAL
    # directions inside the affine feasible set
    _, s, vt = np.linalg.svd(lp.B)
    null = vt[np.sum(s > 1e-10):]
    for _ in range(100):
        d = null.T @ rng.normal(size=null.shape[0])
        neg = d < -1e-15
        tmax = np.min(-sol.z[neg] / d[neg]) if neg.any() else 1.0
        z = sol.z + rng.uniform(0, min(tmax, 1.0)) * d
        assert z.min() >= -1e-12
        assert lp.c @ z >= sol.objective - 1e-9


def test_deterministic():
    lp = random_bounded_lp(np.random.default_rng(9), 6, 11)
    a, b = solve(lp), solve(lp)
    assert a.z.tobytes() == b.z.tobytes()
    assert a.objective == b.objective and a.iterations == b.iterations


def test_degenerate_problem_terminates():
    # Beale's cycling example in equality form; Bland's rule must terminate
    c = np.array([-0.75, 150.0, -0.02, 6.0, 0, 0, 0])
    B = np.array([
        [0.25, -60.0, -0.04, 9.0, 1, 0, 0],
        [0.5, -90.0, -0.02, 3.0, 0, 1, 0],
        [0.0, 0.0, 1.0, 0.0, 0, 0, 1],
    ])
    sol = solve(LinearProgram(c, B, [0.0, 0.0, 1.0]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(-0.05)


def test_chsh_n1_program_against_grid_search():
    from bellmd.bell_lp import build_chsh_m1

    prog = build_chsh_m1(1, 0.5)
    S = prog.score(prog.solve())
    # grid over the simplex 3 p1 + p0 = 1 with the L1 budget |p0-1/4| + 3|p1-1/4| <= 1/2
    best = -np.inf
    for p1 in np.linspace(0.0, 1.0 / 3.0, 30001):
        p0 = 1.0 - 3.0 * p1
        if abs(p0 - 0.25) + 3 * abs(p1 - 0.25) <= 0.5 + 1e-12:
            best = max(best, 8 * 3 * p1 - 4)
    assert S == pytest.approx(4.0, abs=1e-9)
    assert S == pytest.approx(best, abs=1e-9)
