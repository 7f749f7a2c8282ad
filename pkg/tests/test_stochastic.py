import math

import numpy as np
import pytest

from bal.model import EventKind, FockConfig, PumpSpec, SystemParams, jump_rate_table
from bal.stochastic import (Absorbed, EnsembleSpec, EventBudgetExceeded, TruncationTooSmall,
                            detector_ensemble, detector_histogram, detector_params, detector_run,
                            ensemble_moments, gillespie_step, histogram_overlap, replay_samples,
                            run_ensemble, simulate_fixed_dt, simulate_trajectory,
                            trajectory_seed, truncated_master_integrate)

P2 = SystemParams.make(2, 1.0, 1.0, 1.0, 1.0)


def _spec(T=2.0, K=1, seed=0, params=None, init=None):
    p = params or SystemParams.make(4, 1.0, 3.0, 2.0, 2.0, kappa_0=0.2)
    return EnsembleSpec(p, init or FockConfig.empty(p.N), T, K, seed)


def test_seed_is_pure_function():
    assert trajectory_seed(5, 3) == trajectory_seed(5, 3)
    assert trajectory_seed(5, 3) != trajectory_seed(5, 4)
    assert trajectory_seed(5, 3) != trajectory_seed(6, 3)
    assert 0 <= trajectory_seed(2 ** 64 - 1, 10 ** 6) < 2 ** 32


def test_same_seed_same_trajectory():
    s = _spec()
    a = simulate_trajectory(s, 42)
    b = simulate_trajectory(s, 42)
    c = simulate_trajectory(s, 43)
    assert a.events.tobytes() == b.events.tobytes()
    assert a.events.tobytes() != c.events.tobytes()


def test_replay_reproduces_samples_and_emission_count():
    tr = simulate_trajectory(_spec(T=3.0), 7, dt_sample=0.01)
    assert np.array_equal(replay_samples(tr), tr.samples)
    assert tr.emitted_count == int(np.sum(tr.events["kind"] == EventKind.LOSS_CAVITY))
    assert tr.n_events == tr.events.size
    assert tr.samples.min() >= 0
    assert np.all(np.diff(tr.events["t"]) >= 0) and tr.events["t"][-1] <= 3.0


def test_cavity_only_sampling_matches_full():
    s = _spec()
    a = simulate_trajectory(s, 3, dt_sample=0.05)
    b = simulate_trajectory(s, 3, dt_sample=0.05, record_events=False, sample="cavity")
    assert np.array_equal(a.samples[:, :1], b.samples)
    assert a.final == b.final


def test_event_budget():
    with pytest.raises(EventBudgetExceeded):
        simulate_trajectory(_spec(T=50.0), 1, event_cap=10)


def test_gillespie_step_statistics():
    cfg = FockConfig(1, (2, 1, 0, 3))
    p = _spec().params
    table = jump_rate_table(cfg, p)
    total = sum(r for _, r in table)
    rng = np.random.default_rng(0)
    n = 40000
    waits = np.empty(n)
    counts = {}
    for i in range(n):
        dt, ev, rng = gillespie_step(cfg, p, rng)
        waits[i] = dt
        counts[ev] = counts.get(ev, 0) + 1
    assert waits.mean() == pytest.approx(1 / total, rel=0.03)
    for ev, r in table:
        q = r / total
        se = math.sqrt(q * (1 - q) / n)
        assert abs(counts.get(ev, 0) / n - q) < 5 * se


def test_gillespie_step_absorbed():
    p = SystemParams(2, 1.0, PumpSpec(0.0, 0.0), 1.0, 1.0)
    with pytest.raises(Absorbed):
        gillespie_step(FockConfig.empty(2), p, np.random.default_rng(0))


def test_ensemble_independent_of_workers():
    s = _spec(K=12, seed=9)
    a = run_ensemble(s, 1, dt_sample=0.1)
    b = run_ensemble(s, 4, dt_sample=0.1)
    assert all(x.samples.tobytes() == y.samples.tobytes() for x, y in zip(a, b))
    assert [x.seed for x in a] == [s.seed(i) for i in range(12)]


def test_master_matches_dense_oracle(oracles):
    o = oracles["master_N2"]
    res = truncated_master_integrate(P2, FockConfig.empty(2), o["T"], o["n_max"],
                                     times=o["times"])
    assert np.allclose(res.mean, o["mean"], rtol=1e-9, atol=1e-12)
    assert np.allclose(res.norm, 1.0, atol=1e-12)
    assert np.all(res.var >= 0)


def test_master_truncation_guard():
    with pytest.raises(TruncationTooSmall):
        truncated_master_integrate(P2, FockConfig.empty(2), 5.0, 3)


def test_gillespie_agrees_with_master_at_larger_box():
    T = 1.0
    res = truncated_master_integrate(P2, FockConfig.empty(2), T, 15, n_times=11)
    spec = EnsembleSpec(P2, FockConfig.empty(2), T, 4000, 123)
    mean, _ = ensemble_moments(run_ensemble(spec, dt_sample=T / 10))
    se = np.sqrt(res.var / spec.K)
    z = np.abs(mean - res.mean)[1:] / se[1:]
    assert z.max() < 5


def test_fixed_dt_scheme_close_to_master():
    T = 1.0
    res = truncated_master_integrate(P2, FockConfig.empty(2), T, 15, times=[T])
    spec = EnsembleSpec(P2, FockConfig.empty(2), T)
    finals = np.array([simulate_fixed_dt(spec, trajectory_seed(1, i), 5e-4)[1][-1]
                       for i in range(3000)])
    se = np.sqrt(res.var[-1] / 3000)
    # O(dt) bias is far below the Monte-Carlo error here
    assert np.all(np.abs(finals.mean(axis=0) - res.mean[-1]) < 5 * se + 0.02)


def test_fixed_dt_rejects_coarse_step():
    with pytest.raises(ValueError):
        simulate_fixed_dt(_spec(), 1, 0.5)


def test_detector_basics():
    p = detector_params()
    assert detector_run(p, 0, seed=3) == 0
    out = detector_ensemble(p, [0, 2], runs=50, master_seed=1)
    assert np.all(out[0] == 0)
    assert np.all(out[2] <= 2 * (p.N - 1))
    again = detector_ensemble(p, [0, 2], runs=50, master_seed=1, workers=3)
    assert np.array_equal(out[2], again[2])
    with pytest.raises(ValueError):
        detector_run(SystemParams.make(10), 1)


def test_histogram_helpers():
    edges, counts = detector_histogram([0, 1, 1, 3])
    assert counts.tolist() == [1, 2, 0, 1] and edges[0] == -0.5
    assert histogram_overlap([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert histogram_overlap([1, 1], [2, 2]) == 0.0
    assert histogram_overlap([1, 2], [2, 3]) == pytest.approx(0.5)
