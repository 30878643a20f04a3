import math

import numpy as np
import pytest
from scipy import stats

from nctest.errors import CannotEstimateError
from nctest.photon_sim import (
    DetectionChainConfig,
    McaHistogram,
    MeasurementSettings,
    SourceModel,
    background_subtract,
    characterize_source,
    detect,
    polarizer_pass,
    run_measurement,
    sample_photon_number,
    split_photons,
    substream,
)

ALPHA = 11 * math.pi / 36
COS2_ALPHA = 0.3289899283371657


def test_source_model_validation():
    with pytest.raises(ValueError):
        SourceModel("laser")
    with pytest.raises(ValueError):
        SourceModel("poissonian", mu=-1.0)
    with pytest.raises(ValueError):
        SourceModel("ideal_single", background_prob=0.1)
    SourceModel("single_with_background", background_prob=0.1)  # allowed


def test_sample_photon_number_fixed_cases():
    rng = substream(1)
    src = SourceModel("ideal_single")
    assert all(sample_photon_number(src, rng) == 1 for _ in range(200))
    src0 = SourceModel("poissonian", mu=0.0)
    assert all(sample_photon_number(src0, rng) == 0 for _ in range(200))


def test_sample_photon_number_poisson_mean():
    rng = substream(2)
    src = SourceModel("poissonian", mu=0.1)
    n = src._sample_base(rng, 1_000_000) + src._sample_background(rng, 1_000_000)
    se = math.sqrt(0.1 / 1_000_000)
    assert abs(n.mean() - 0.1) < 4 * se
    # scalar op draws from the same distribution
    draws = np.array([sample_photon_number(src, rng) for _ in range(20_000)])
    assert abs(draws.mean() - 0.1) < 4 * math.sqrt(0.1 / 20_000)


def test_background_channel_adds_photon():
    rng = substream(3)
    src = SourceModel("single_with_background", background_prob=0.25)
    draws = np.array([sample_photon_number(src, rng) for _ in range(40_000)])
    assert set(np.unique(draws)) == {1, 2}
    assert abs((draws == 2).mean() - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 40_000)


def test_split_photons():
    rng = substream(4)
    assert split_photons(0, 0.3, rng) == (0, 0)
    assert split_photons(5, 1.0, rng) == (5, 0)
    assert split_photons(5, 0.0, rng) == (0, 5)
    with pytest.raises(ValueError):
        split_photons(1, 1.5, rng)
    # n=2, p=0.5: both photons land on the same side half the time
    m1 = rng.binomial(2, 0.5, size=1_000_000)
    same = ((m1 == 0) | (m1 == 2)).mean()
    assert abs(same - 0.5) < 4 * math.sqrt(0.25 / 1_000_000)
    scalar = np.array([split_photons(2, 0.5, rng)[0] for _ in range(20_000)])
    assert abs(((scalar == 0) | (scalar == 2)).mean() - 0.5) < 4 * math.sqrt(0.25 / 20_000)


def test_detect():
    rng = substream(5)
    assert not any(detect(0, 0.9, rng) for _ in range(200))
    assert all(detect(3, 1.0, rng) for _ in range(200))
    fires = np.array([detect(1, 0.3, rng) for _ in range(100_000)])
    assert abs(fires.mean() - 0.3) < 4 * math.sqrt(0.3 * 0.7 / 100_000)
    with pytest.raises(ValueError):
        detect(1, 1.5, rng)


def test_polarizer_pass():
    rng = substream(6)
    assert all(polarizer_pass(0.3, 0.3, rng) for _ in range(200))
    assert not any(polarizer_pass(0.0, math.pi / 2, rng) for _ in range(200))
    delta = math.radians(55.0)
    passes = np.array([polarizer_pass(0.0, delta, rng) for _ in range(100_000)])
    rate = math.cos(delta) ** 2
    assert abs(passes.mean() - rate) < 4 * math.sqrt(rate * (1 - rate) / 100_000)


def _clean_chain(**kw):
    kw.setdefault("source", SourceModel("ideal_single"))
    kw.setdefault("tau", 1.0)
    kw.setdefault("misalignment_sigma", 0.0)
    kw.setdefault("accidental_rate_per_ns", 0.0)
    return DetectionChainConfig(**kw)


def test_run_measurement_malus_oracle():
    # all photons to arm 1, polarizer at alpha: N/M = cos^2(alpha)
    chain = _clean_chain()
    settings = MeasurementSettings((ALPHA, ALPHA + math.pi / 2), 1.0)
    record, _ = run_measurement(chain, 1_000_000, settings, seed=10)
    rate = record.counts_total[0] / record.gates_total
    se = math.sqrt(COS2_ALPHA * (1 - COS2_ALPHA) / 1_000_000)
    assert abs(rate - COS2_ALPHA) < 4 * se
    assert record.counts_total[1] == 0  # nothing routed to arm 2


def test_run_measurement_preconditions():
    chain = _clean_chain()
    with pytest.raises(ValueError):
        run_measurement(chain, 0, seed=1)
    with pytest.raises(ValueError):
        run_measurement(chain, 10, seed=1, n_blocks=11)
    with pytest.raises(ValueError):
        run_measurement(chain, 10, seed=None)


def test_run_measurement_determinism():
    chain = _clean_chain(tau=0.4, misalignment_sigma=math.radians(2.5), switch_bias_sigma=0.01)
    settings = MeasurementSettings((0.2, 0.2 + math.pi / 2), 0.7)
    r1, h1 = run_measurement(chain, 20_000, settings, seed=42, n_blocks=7)
    r2, h2 = run_measurement(chain, 20_000, settings, seed=42, n_blocks=7)
    assert r1 == r2
    assert np.array_equal(h1.bins, h2.bins)
    r3, _ = run_measurement(chain, 20_000, settings, seed=43, n_blocks=7)
    assert r1 != r3


def test_block_structure_and_counts_bounds():
    chain = _clean_chain(tau=0.5)
    settings = MeasurementSettings((0.0, math.pi / 2), 0.5)
    record, _ = run_measurement(chain, 10_001, settings, seed=3, n_blocks=4)
    sizes = [b.gates for b in record.blocks]
    assert sum(sizes) == 10_001 and max(sizes) - min(sizes) <= 1
    for blk in record.blocks:
        assert 0 <= blk.counts[0] <= blk.gates
        assert 0 <= blk.counts[1] <= blk.gates
        assert blk.double_coincidences <= min(blk.counts)


def test_accidental_only_histogram_is_flat():
    # no photons at all (mu = 0), only ambient accidentals: uniform delays
    chain = DetectionChainConfig(
        source=SourceModel("poissonian", mu=0.0),
        tau=0.5,
        misalignment_sigma=0.0,
        accidental_rate_per_ns=0.005,
    )
    settings = MeasurementSettings((0.1, 0.1 + math.pi / 2), 0.5)
    record, hist = run_measurement(chain, 300_000, settings, seed=8)
    assert hist.total_counts > 10_000
    expected = hist.total_counts / hist.bins.size
    chi2, pvalue = stats.chisquare(hist.bins)
    assert pvalue > 0.01
    # peak window is not elevated
    in_window = hist.bins[hist.window_mask()].mean()
    assert abs(in_window - expected) < 5 * math.sqrt(expected)


def test_true_coincidences_land_in_peak_window():
    chain = _clean_chain(tau=0.8)
    settings = MeasurementSettings((0.0, math.pi / 2), 1.0)
    record, hist = run_measurement(chain, 50_000, settings, seed=12)
    outside = hist.bins[~hist.window_mask()].sum()
    assert outside == 0
    assert hist.total_counts == sum(rec.counts[0] + rec.counts[1] for rec in record.blocks)


def test_characterize_source_ideal():
    chain = DetectionChainConfig(source=SourceModel("ideal_single"), tau=0.5, switch_ratio=0.5)
    char, record, _ = characterize_source(chain, 1_000_000, seed=21)
    assert char.q2 == 0.0  # one photon cannot fire both detectors
    se = math.sqrt(0.25 * 0.75 / 1_000_000)
    assert abs(char.q1_arm1 - 0.25) < 4 * se
    assert abs(char.q1_arm2 - 0.25) < 4 * se
    assert char.q0 == pytest.approx(1.0 - char.q1_arm1 - char.q1_arm2, abs=1e-12)


def test_characterize_source_tau_zero():
    chain = DetectionChainConfig(source=SourceModel("ideal_single"), tau=0.0, switch_ratio=0.5)
    char, _, _ = characterize_source(chain, 10_000, seed=22)
    assert char.q0 == 1.0 and char.q2 == 0.0


def test_characterize_requires_removed_polarizers():
    chain = DetectionChainConfig(
        source=SourceModel("ideal_single"), tau=0.5, pol_angles=(0.0, math.pi / 2)
    )
    with pytest.raises(ValueError):
        characterize_source(chain, 1000, seed=1)


def test_arm_assignment_matches_switch_ratio():
    chain = _clean_chain(tau=1.0)
    settings = MeasurementSettings(None, 0.8)
    record, _ = run_measurement(chain, 200_000, settings, seed=30)
    frac = record.counts_total[0] / record.gates_total
    assert abs(frac - 0.8) < 4 * math.sqrt(0.8 * 0.2 / 200_000)


def _hist(bins, bin_width=0.1, window=(9.0, 11.0)):
    return McaHistogram(bin_width_ns=bin_width, bins=np.asarray(bins, dtype=np.int64), peak_window=window)


def test_background_subtract_flat():
    rng = substream(40)
    hist = _hist(rng.poisson(5.0, size=200))
    sub = background_subtract(hist)
    assert abs(sub.true_count) < 4 * sub.true_sigma


def test_background_subtract_pure_peak():
    bins = np.zeros(200, dtype=np.int64)
    bins[90:110] = 50
    sub = background_subtract(_hist(bins))
    assert sub.true_count == pytest.approx(1000.0)
    assert sub.background_count == 0.0


def test_background_subtract_errors():
    bins = np.ones(100, dtype=np.int64)
    with pytest.raises(CannotEstimateError):
        background_subtract(_hist(bins, bin_width=0.1, window=(0.0, 10.0)))  # no sideband
    with pytest.raises(CannotEstimateError):
        background_subtract(_hist(bins, bin_width=0.1, window=(-1.0, 2.0)))  # outside range


def test_background_subtract_synthetic_recovery():
    rng = substream(41)
    recovered = []
    for _ in range(50):
        bins = rng.poisson(5.0, size=200)
        bins[90:110] += rng.poisson(50.0, size=20)
        recovered.append(background_subtract(_hist(bins)).true_count)
    mean = np.mean(recovered)
    assert abs(mean - 1000.0) < 0.02 * 1000.0


def test_histogram_csv():
    hist = _hist(np.arange(200))
    text = hist.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "bin_start_ns,count"
    assert lines[1] == "0,0"
    assert len(lines) == 201
