import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bal.model import (EventKind, FockConfig, JumpEvent, MeanFieldState, PumpSpec, SystemParams,
                       apply_event, bond_current, cumulative_current, drift_vector, jump_rate_table,
                       make_pump, meanfield_drift, staggered_population)


def test_pump_presets():
    assert PumpSpec.infinite_temperature(3.0) == PumpSpec(3.0, 3.0)
    assert PumpSpec.pure_gain(3.0) == PumpSpec(3.0, 0.0)
    assert PumpSpec.lindblad(4.0, 0.25) == PumpSpec(1.0, 3.0)
    assert make_pump("pure_gain", 2.0) == PumpSpec(2.0, 0.0)
    with pytest.raises(ValueError):
        make_pump("lindblad", 1.0)
    with pytest.raises(ValueError):
        PumpSpec.lindblad(1.0, 1.5)


@pytest.mark.parametrize("kw", [dict(N=1), dict(hop=0.0), dict(kappa_c=-1.0), dict(N=2.5)])
def test_params_reject_invalid(kw):
    base = dict(N=3, hop=1.0, gamma_g=1.0, kappa_c=1.0, kappa_l=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        SystemParams.make(**base)


def test_params_scaled_and_max_rate():
    p = SystemParams.make(4, 2.0, 6.0, 8.0, 4.0, 1.0)
    q = p.scaled(2.0)
    assert q.hop == 1.0 and q.pump == PumpSpec(3.0, 3.0) and q.kappa_c == 4.0
    assert p.max_rate == 8.0


def test_fock_config_rejects_negative():
    with pytest.raises(ValueError):
        FockConfig(0, (1, -1))
    assert FockConfig.empty(3).as_array().tolist() == [0, 0, 0, 0]


def test_bond_current_and_cumulative():
    assert bond_current(2.0, 3.0, 0.5) == 4.0
    s = MeanFieldState(0.0, [1.0, 2.0, 0.0])
    p = SystemParams.make(3)
    assert cumulative_current(s, p) == pytest.approx(1 * 3 + 2 * 1)


def test_staggered_population_examples():
    assert staggered_population([1, 1, 1, 1]) == 0.0
    # p=2 and p=4 carry +, p=3 carries -
    assert staggered_population([0, 2, 0, 2]) == 4.0
    assert staggered_population([3, 0, 3, 0]) == -6.0


def test_drift_zero_at_empty_unpumped():
    p = SystemParams(3, 1.0, PumpSpec(0.0, 0.0), 1.0, 1.0)
    d = meanfield_drift(MeanFieldState(0.0, np.zeros(3)), p)
    assert d.a_c == 0.0 and np.all(d.n == 0.0)


def test_drift_conserves_ladder_population_without_sources():
    p = SystemParams(5, 1.3, PumpSpec(0.0, 0.0), 2.0, 0.0)
    y = np.array([0.7, 1.0, 2.0, 0.5, 3.0, 0.1])
    assert drift_vector(y, p)[1:].sum() == pytest.approx(0.0, abs=1e-12)


def test_event_deltas():
    N = 3
    assert JumpEvent(EventKind.HOP, 2).delta(N).tolist() == [1, 0, -1, 1]
    assert JumpEvent(EventKind.GAIN1).delta(N).tolist() == [0, 1, 0, 0]
    assert JumpEvent(EventKind.LOSSN).delta(N).tolist() == [0, 0, 0, -1]
    assert JumpEvent(EventKind.LOSS_CAVITY).delta(N).tolist() == [-1, 0, 0, 0]
    assert JumpEvent(EventKind.LOSS0, 1).delta(N).tolist() == [0, -1, 0, 0]
    with pytest.raises(ValueError):
        apply_event(FockConfig.empty(3), JumpEvent(EventKind.LOSS1))


def test_rate_table_omits_zero_channels_and_orders():
    p = SystemParams.make(3, 1.0, 2.0, 1.0, 1.0, kappa_0=0.5)
    tab = jump_rate_table(FockConfig(1, (2, 0, 1)), p)
    kinds = [(e.kind, e.site) for e, _ in tab]
    assert kinds == [(EventKind.HOP, 1), (EventKind.GAIN1, 0), (EventKind.LOSS1, 0),
                     (EventKind.LOSSN, 0), (EventKind.LOSS_CAVITY, 0),
                     (EventKind.LOSS0, 1), (EventKind.LOSS0, 3)]
    rates = dict(((e.kind, e.site), r) for e, r in tab)
    assert rates[(EventKind.HOP, 1)] == 1.0 * 2 * 2 * 1  # (1+n_c) n_1 (1+n_2)
    assert rates[(EventKind.GAIN1, 0)] == 2.0 * 3


occ = st.lists(st.integers(0, 6), min_size=3, max_size=6)


@settings(max_examples=60, deadline=None)
@given(occ, st.integers(0, 5), st.floats(0.1, 5), st.floats(0, 5), st.floats(0, 5))
def test_ladder_drift_is_expected_jump_increment(n, nc, hop, g, kl):
    """The ladder part of the drift equals the mean jump increment with a_c^2 = n_c."""
    p = SystemParams.make(len(n), hop, g, 1.0, kl)
    cfg = FockConfig(nc, tuple(n))
    expected = np.zeros(len(n) + 1)
    for e, r in jump_rate_table(cfg, p):
        expected += r * e.delta(len(n))
    y = np.concatenate(([math.sqrt(nc)], np.asarray(n, float)))
    assert np.allclose(drift_vector(y, p)[1:], expected[1:], rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(occ, st.integers(0, 5))
def test_rates_non_negative(n, nc):
    p = SystemParams.make(len(n), 1.0, 1.0, 1.0, 1.0, kappa_0=0.3)
    assert all(r > 0 for _, r in jump_rate_table(FockConfig(nc, tuple(n)), p))
