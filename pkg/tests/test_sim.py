import json
import math

import numpy as np
import pytest

from bellmd import analytic as an
from bellmd import sim
from bellmd.model import StrategyProfile, chsh_outcome_table, expand_profile

R15 = 15**-0.5
TABLE = chsh_outcome_table()


def draw(profile, n, seed=0):
    return sim.sample_blocks(profile, TABLE, sim.make_rng(seed), n)


def string_index(arr, base):
    idx = np.zeros(arr.shape[0], dtype=int)
    for col in range(arr.shape[1]):
        idx = idx * base + arr[:, col]
    return idx


def test_single_shot_optimum_never_loses():
    d = draw(an.optimal_profile(1, 1 / 3), 50_000)
    assert not np.any(d["x"][:, 0] + d["y"][:, 0] == 3)


def test_uniform_profile_settings_uniform():
    d = draw(StrategyProfile.uniform("chsh", 3), 200_000)
    n = d["y"].shape[0]
    for pos in range(3):
        freq = np.bincount(d["y"][:, pos], minlength=4) / n
        assert np.all(np.abs(freq - 0.25) <= 4 * math.sqrt(0.1875 / n))


def test_class_fraction_two_runs():
    n = 400_000
    d = draw(an.optimal_profile(2, R15), n)
    frac = np.mean(d["k"] == 2)
    assert abs(frac - 9 / 15) <= 4 * math.sqrt(0.6 * 0.4 / n)


def test_recorded_class_matches_outputs():
    d = draw(an.optimal_profile(3, 0.29), 20_000)
    alpha = np.array([1, 1, 1, -1])
    correct = (alpha[d["y"]] * d["a"] * d["b"] == 1).sum(axis=1)
    np.testing.assert_array_equal(correct, d["k"])


@pytest.mark.parametrize("N,P", [(1, 0.3), (2, R15), (2, 0.27), (3, 0.29)])
def test_joint_frequencies_match_expansion(N, P):
    prof = an.optimal_profile(N, P)
    expected = expand_profile(prof, TABLE) / 4**N  # p(x) p(y|x)
    n = 400_000
    d = draw(prof, n, seed=11)
    cell = string_index(d["x"], 4) * 4**N + string_index(d["y"], 4)
    freq = np.bincount(cell, minlength=16**N).reshape(4**N, 4**N) / n
    sd = np.sqrt(expected * (1 - expected) / n)
    assert np.all(freq[expected == 0] == 0)
    z = np.abs(freq - expected)[expected > 0] / sd[expected > 0]
    assert z.max() < 5.5


def test_sign_flip_hides_rows():
    d = draw(StrategyProfile.uniform("chsh", 1), 100_000)
    assert set(np.unique(d["sign"])) == {-1, 1}
    assert abs(d["a"].mean()) < 4 / math.sqrt(100_000)


def test_sample_block_shape():
    x, y, (a, b), sign = sim.sample_block(an.optimal_profile(2, 0.3), TABLE, sim.make_rng(5))
    assert len(x) == len(y) == len(a) == len(b) == 2
    assert sign in (1, -1)


@pytest.mark.parametrize("N,P,target", [(1, 0.25, 2.0), (2, R15, 2.4), (1, 1 / 3, 4.0)])
def test_estimate_examples(N, P, target):
    rep = sim.estimate(an.optimal_profile(N, P), trials=10**6, seed=1)
    assert rep.analytic_S == pytest.approx(target, abs=1e-12)
    assert abs(rep.empirical_S - target) <= 4 * rep.stderr + sim.FP_FLOOR
    assert rep.passed, rep.failed()


def test_stderr_definition():
    rep = sim.estimate(StrategyProfile.uniform("chsh", 1), trials=20_000, seed=2)
    # per-block scores are 4X with X = +-1, and var(X) = 4 p (1 - p)
    p_plus = (rep.empirical_S / 4 + 1) / 2
    sd = 4 * math.sqrt(4 * p_plus * (1 - p_plus) * 20_000 / 19_999)
    assert rep.stderr == pytest.approx(sd / math.sqrt(20_000), rel=1e-9)


def test_replay_is_deterministic():
    prof = an.optimal_profile(2, 0.27)
    a = sim.estimate(prof, trials=300_000, seed=42)
    b = sim.estimate(prof, trials=300_000, seed=42)
    assert a.to_json() == b.to_json()
    c = sim.estimate(prof, trials=300_000, seed=43)
    assert c.empirical_S != a.empirical_S


def test_thread_count_does_not_change_results(monkeypatch):
    prof = an.optimal_profile(3, 0.28)
    monkeypatch.setenv("BELLMD_THREADS", "1")
    one = sim.estimate(prof, trials=3 * sim.CHUNK + 17, seed=9)
    monkeypatch.setenv("BELLMD_THREADS", "4")
    four = sim.estimate(prof, trials=3 * sim.CHUNK + 17, seed=9)
    assert one.to_json() == four.to_json()


def test_report_json():
    rep = sim.estimate(an.optimal_profile(1, 0.3), trials=5_000, seed=3)
    d = json.loads(rep.to_json())
    assert d["trials"] == 5_000 and d["seed"] == 3 and d["N"] == 1
    assert len(d["marginals"]) == 1 and len(d["marginals"][0]) == 4
    assert d["empirical_md"] == pytest.approx(0.3)
    assert "score" in d["checks"]
    assert "S (empirical)" in rep.summary()


def test_failed_check_is_named():
    rep = sim.estimate(an.optimal_profile(1, 0.3), trials=5_000, seed=3)
    rep.analytic_S += 1.0
    assert rep.failed() == ["score"]
    assert not rep.passed


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        sim.estimate(StrategyProfile.uniform("chsh", 1), trials=1)
    with pytest.raises(NotImplementedError):
        sim.estimate(StrategyProfile.uniform("i3322", 1))
