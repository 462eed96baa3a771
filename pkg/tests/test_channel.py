import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lora_p2p.channel import (
    NO_NOISE,
    LinkBudget,
    PathLossModel,
    SnrThresholdTable,
    apply_awgn,
    calibrated_ser,
    path_loss_db,
    received_power_dbm,
    sensitivity_dbm,
    ser_theory,
    snr_db,
    theory_threshold,
)
from lora_p2p.errors import ConfigError, DomainError
from lora_p2p.phy import IqBuffer, RadioConfig, SymbolBlock, modulate
from lora_p2p.scenarios import DEFAULT_SNR_THRESHOLDS
from lora_p2p.sim import monte_carlo_ser

from oracles import log_distance_loss


def test_path_loss_hand_value():
    model = PathLossModel(pl0_db=40.0, d0_m=1.0, exponent_n=1.97)
    assert path_loss_db(model, 100.0) == pytest.approx(79.4, abs=1e-9)


def test_received_power_hand_value():
    assert received_power_dbm(LinkBudget(tx_power_dbm=17.0), 79.4) == pytest.approx(-62.4, abs=1e-9)
    assert received_power_dbm(LinkBudget(17.0, 2.0, 3.0), 79.4) == pytest.approx(-57.4, abs=1e-9)


def test_noise_floor_hand_value():
    assert LinkBudget(noise_figure_db=6.0).noise_floor_dbm(125_000) == pytest.approx(-117.03, abs=0.01)


def test_snr_and_sensitivity():
    budget = LinkBudget()
    table = SnrThresholdTable(DEFAULT_SNR_THRESHOLDS)
    floor = budget.noise_floor_dbm(125_000)
    assert snr_db(-100.0, budget, 125_000) == pytest.approx(-100.0 - floor)
    sens = sensitivity_dbm(RadioConfig(), budget, table)
    assert sens == pytest.approx(floor + DEFAULT_SNR_THRESHOLDS[12])
    assert -142 < sens < -136


@given(
    pl0=st.floats(20, 120),
    n=st.floats(1.0, 6.0),
    d1=st.floats(1.0, 1e4),
    d2=st.floats(1.0, 1e4),
)
def test_path_loss_monotone_and_matches_oracle(pl0, n, d1, d2):
    model = PathLossModel(pl0, 1.0, n)
    lo, hi = sorted((d1, d2))
    assert path_loss_db(model, lo) <= path_loss_db(model, hi)
    assert path_loss_db(model, d1) == pytest.approx(log_distance_loss(pl0, 1.0, n, d1), abs=1e-9)


def test_lower_exponent_means_lower_loss():
    free = PathLossModel(40.0, 1.0, 2.0)
    mine = PathLossModel(40.0, 1.0, 1.97)
    assert path_loss_db(mine, 100.0) < path_loss_db(free, 100.0)
    assert path_loss_db(mine, 1.0) == path_loss_db(free, 1.0)


def test_path_loss_domain_checks():
    with pytest.raises(DomainError):
        path_loss_db(PathLossModel(40.0, d0_m=1.0), 0.5)
    with pytest.raises(ConfigError):
        PathLossModel(40.0, exponent_n=0)
    with pytest.raises(ConfigError):
        PathLossModel(40.0, shadowing_sigma_db=-1)


def test_shadowing_statistics_and_determinism():
    model = PathLossModel(40.0, 1.0, 2.0, shadowing_sigma_db=3.0)
    draws = np.array([path_loss_db(model, 10.0, np.random.default_rng(i)) for i in range(4000)])
    assert draws.mean() == pytest.approx(60.0, abs=0.2)
    assert draws.std() == pytest.approx(3.0, rel=0.05)
    a = path_loss_db(model, 10.0, np.random.default_rng(5))
    assert a == path_loss_db(model, 10.0, np.random.default_rng(5))
    assert path_loss_db(model, 10.0) == 60.0  # no rng, no shadowing


def test_threshold_table_validation():
    with pytest.raises(ConfigError):
        SnrThresholdTable({7: -10.0, 8: -9.0})
    table = SnrThresholdTable({8: -13.0, 7: -10.0})
    assert list(table.thresholds) == [7, 8]
    assert 7 in table and 9 not in table
    with pytest.raises(ConfigError):
        table[9]


@pytest.mark.parametrize("snr", [-10.0, 0.0, 10.0])
def test_awgn_noise_power(snr):
    rng = np.random.default_rng(11)
    clean = IqBuffer(np.zeros(200_000, complex), 125_000)
    noisy = apply_awgn(clean, snr, rng)
    power = np.mean(np.abs(noisy.samples) ** 2)
    assert power == pytest.approx(10 ** (-snr / 10), rel=0.02)
    assert abs(np.mean(noisy.samples.real**2) - np.mean(noisy.samples.imag**2)) < 0.02 * power


def test_awgn_is_deterministic_and_pure():
    iq = modulate(SymbolBlock((1, 2, 3), 7), RadioConfig(sf=7))
    original = iq.samples.copy()
    a = apply_awgn(iq, -5.0, np.random.default_rng(1))
    b = apply_awgn(iq, -5.0, np.random.default_rng(1))
    c = apply_awgn(iq, -5.0, np.random.default_rng(2))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert np.array_equal(iq.samples, original)


def test_no_noise_sentinel_copies():
    iq = modulate(SymbolBlock((9,), 7), RadioConfig(sf=7))
    out = apply_awgn(iq, NO_NOISE, np.random.default_rng(0))
    assert np.array_equal(out.samples, iq.samples)
    assert out.samples is not iq.samples


def test_ser_theory_shape():
    assert ser_theory(7, NO_NOISE) == 0.0
    assert ser_theory(7, -40.0) == pytest.approx(127 / 128, abs=2e-3)
    curve = [ser_theory(7, s) for s in np.arange(-25, 0, 0.5)]
    assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))
    # each SF step buys roughly 2.5-3 dB
    steps = np.diff([theory_threshold(sf) for sf in range(7, 13)])
    assert np.all((steps < -2.3) & (steps > -3.2))


@pytest.mark.parametrize("sf,snr", [(7, -10.0), (7, -12.0), (8, -13.0)])
def test_ser_theory_agrees_with_sample_level_monte_carlo(sf, snr):
    est = monte_carlo_ser(sf, snr, trials=4000, seed=99, fidelity="sample")
    theory = ser_theory(sf, snr)
    assert est.ci_low - 0.01 <= theory <= est.ci_high + 0.01


def test_calibrated_ser_hits_ten_percent_at_threshold():
    table = SnrThresholdTable(DEFAULT_SNR_THRESHOLDS)
    for sf in range(7, 13):
        assert calibrated_ser(sf, table[sf], table) == pytest.approx(0.1, abs=1e-4)
    assert calibrated_ser(7, -10.0) == ser_theory(7, -10.0)
    assert calibrated_ser(7, NO_NOISE, table) == 0.0


def test_frozen_thresholds_are_near_theory():
    for sf, value in DEFAULT_SNR_THRESHOLDS.items():
        assert math.isclose(value, theory_threshold(sf), abs_tol=0.3)
