import math

import pytest

from nctest.analysis import (
    EstimateWithUncertainty,
    ProjectorEstimates,
    analytic_Q,
    assemble_test_quantities,
    characterization_metrics,
    estimate_projector,
    estimate_splitting,
    eta,
    ratio_with_uncertainty,
    significance,
)
from nctest.errors import NoDataError, UndefinedSignificanceError
from nctest.photon_sim import (
    BlockCounts,
    CountsRecord,
    DetectionChainConfig,
    SourceCharacterization,
    SourceModel,
    characterize_source,
)
from nctest.pipeline import simulate_test_run
from nctest.test_core import REFERENCE_PARAMETERS, predict, pure_state_H

P = REFERENCE_PARAMETERS

# Fixture inputs for the published Table-I arithmetic: projector values that
# reproduce the printed differences exactly, obtained by inverting the
# assembly formulas at the printed (0.0581, -0.0403) with the alpha projector
# held at its quantum value.
X_ALPHA = 0.3289899283371657
X_BETA_FIRST = 0.05365948893701737
X_BETA_SECOND = 0.07153354502142087


def E(value, stat=0.0, total=None):
    return EstimateWithUncertainty(value, stat, stat if total is None else total)


def _record(theta_pair, p, counts_pairs, gates=1000, doubles=0):
    blocks = tuple(
        BlockCounts(gates=gates, counts=pair, double_coincidences=doubles)
        for pair in counts_pairs
    )
    return CountsRecord(pol_angles=theta_pair, switch_p=p, actual_p=p, blocks=blocks)


def test_eta():
    assert eta(0, 100) == 0.0
    assert eta(100, 100) == 1.0
    assert eta(329, 1000) == pytest.approx(0.329)
    with pytest.raises(NoDataError):
        eta(0, 0)
    with pytest.raises(ValueError):
        eta(5, 4)


def test_estimate_projector_trivial_cases():
    rec = _record((0.3, 0.3 + math.pi / 2), 0.5, [(50, 0), (70, 0)])
    assert estimate_projector([rec], 0.3, 0.5).value == 1.0
    rec = _record((0.3, 0.3 + math.pi / 2), 0.5, [(60, 60), (40, 40)])
    assert estimate_projector([rec], 0.3, 0.5).value == 0.5
    with pytest.raises(NoDataError):
        estimate_projector([rec], 1.1, 0.5)
    with pytest.raises(NoDataError):
        estimate_projector([rec], 0.3, 0.9)


def test_estimate_projector_angle_matching_mod_pi():
    rec = _record((0.3, 0.3 + math.pi / 2), 0.5, [(60, 20)])
    est1 = estimate_projector([rec], 0.3 + math.pi, 0.5)
    est2 = estimate_projector([rec], 0.3, 0.5)
    assert est1.value == est2.value == 0.75


def test_estimate_projector_rescaling_invariance():
    rec1 = _record((0.0, math.pi / 2), 0.5, [(60, 20), (30, 50)], gates=1000)
    rec2 = _record((0.0, math.pi / 2), 0.5, [(600, 200), (300, 500)], gates=10_000)
    v1 = estimate_projector([rec1], 0.0, 0.5).value
    v2 = estimate_projector([rec2], 0.0, 0.5).value
    assert v1 == pytest.approx(v2, abs=1e-15)


def test_estimate_projector_poisson_sigma():
    # single block, known counts: delta-method variance has a closed form
    n_a, n_b, gates = 3600, 6400, 10_000
    rec = _record((0.0, math.pi / 2), 0.5, [(n_a, n_b)], gates=gates)
    est = estimate_projector([rec], 0.0, 0.5)
    total = n_a + n_b
    var = (n_b**2 * n_a + n_a**2 * n_b) / total**4
    assert est.value == pytest.approx(0.36)
    assert est.sigma_stat == pytest.approx(math.sqrt(var), rel=1e-12)
    assert est.sigma_total == est.sigma_stat


def test_estimate_projector_misalignment_term():
    rec = _record((0.0, math.pi / 2), 0.5, [(3600, 6400)], gates=10_000)
    base = estimate_projector([rec], 0.0, 0.5)
    with_mis = estimate_projector([rec], 0.0, 0.5, misalignment_sigma=math.radians(2.5))
    assert with_mis.sigma_stat > base.sigma_stat
    # linearized scale for one block: |sin(2*delta)| * hypot(x, 1-x) * sigma
    x = 0.36
    delta = math.acos(math.sqrt(x))
    expected = abs(math.sin(2 * delta)) * math.hypot(x, 1 - x) * math.radians(2.5)
    mis_term = math.sqrt(with_mis.sigma_stat**2 - base.sigma_stat**2)
    assert mis_term == pytest.approx(expected, rel=0.1)


def test_estimate_splitting():
    recs = [
        _record((0.0, math.pi / 2), 0.8, [(400, 80)]),
        _record((math.pi / 2, 0.0), 0.8, [(320, 100)]),
    ]
    est = estimate_splitting(recs, 0.0, 0.8)
    s_p = (400 + 320) / 1000
    s_q = (80 + 100) / 1000
    assert est.value == pytest.approx(s_p / (s_p + s_q))
    with pytest.raises(NoDataError):
        estimate_splitting([recs[0]], 0.0, 0.8)  # missing the swapped routing


def test_assemble_exact_probabilities_match_prediction():
    pred = predict(P, pure_state_H())
    exact = ProjectorEstimates(
        p_alpha=E(math.cos(P.alpha) ** 2),
        p_beta_first=E(math.cos(P.beta) ** 2),
        p_beta_second=E(math.cos(P.beta) ** 2),
        splitting_first=E(P.p1),
        splitting_second=E(P.p2),
    )
    asm = assemble_test_quantities(exact, P)
    assert asm.mean_A.value == pytest.approx(pred.mean_A, abs=1e-12)
    assert asm.mean_A2.value == pytest.approx(pred.mean_A2, abs=1e-12)
    assert asm.mean_B.value == pytest.approx(pred.mean_B, abs=1e-12)
    assert asm.mean_B2.value == pytest.approx(pred.mean_B2, abs=1e-12)
    assert asm.diff_first.value == pytest.approx(pred.diff_first, abs=1e-12)
    assert asm.diff_second.value == pytest.approx(pred.diff_second, abs=1e-12)
    assert asm.d_minus_indirect.value == pytest.approx(pred.d_minus, abs=1e-12)


def test_assemble_table1_fixture():
    fixture = ProjectorEstimates(
        p_alpha=E(X_ALPHA, 0.002),
        p_beta_first=E(X_BETA_FIRST, 0.003),
        p_beta_second=E(X_BETA_SECOND, 0.003),
    )
    asm = assemble_test_quantities(fixture, P, switch_bias_sigma=0.01)
    assert asm.diff_first.value == pytest.approx(0.0581, abs=1e-12)
    assert asm.diff_second.value == pytest.approx(-0.0403, abs=1e-12)
    assert asm.diff_first.sigma_total > asm.diff_first.sigma_stat > 0
    assert asm.diff_second.sigma_total > asm.diff_second.sigma_stat > 0


def test_assemble_systematic_shift_magnitude():
    # the displaced-coefficient shift on <B> at the reference point:
    # |d<B>/dp1| * 0.01 = b0*|2x-1|*0.01 with x = cos^2(beta)
    x = math.cos(P.beta) ** 2
    exact = ProjectorEstimates(p_alpha=E(0.3), p_beta_first=E(x), p_beta_second=E(x))
    asm = assemble_test_quantities(exact, P, switch_bias_sigma=0.01)
    sys_b = math.sqrt(asm.mean_B.sigma_total**2 - asm.mean_B.sigma_stat**2)
    assert sys_b == pytest.approx(P.b0 * abs(2 * x - 1) * 0.01, rel=1e-9)


def test_significance():
    assert significance(E(-0.0403, 0.0043, 0.0066)) == pytest.approx(6.1, abs=0.01)
    assert significance(E(0.01, 0.001)) == 0.0
    assert significance(E(-0.02, 0.01)) == pytest.approx(2.0)
    with pytest.raises(UndefinedSignificanceError):
        significance(E(-0.01, 0.0))
    # monotone decreasing in sigma_total
    sigmas = [0.005, 0.01, 0.02]
    values = [significance(E(-0.02, s)) for s in sigmas]
    assert values == sorted(values, reverse=True)


def test_analytic_q_ideal_closed_forms():
    src = SourceModel("ideal_single")
    for tau in (0.1, 0.5, 0.9):
        q = analytic_Q(src, tau, 0.5)
        assert abs(q.q1 - tau / 2) < 1e-12
        assert abs(q.q2) < 1e-12
        assert abs(q.gamma1 - tau / (2 * (1 - tau / 2))) < 1e-12
        assert abs(q.gamma2) < 1e-12


def test_analytic_q_poisson_closed_forms():
    for tau in (0.1, 0.5, 0.9):
        for mu in (0.01, 0.1, 1.0):
            q = analytic_Q(SourceModel("poissonian", mu=mu), tau, 0.5)
            assert abs(q.q1 - (1 - math.exp(-tau * mu / 2))) < 1e-12
            assert abs(q.q2 - (1 - math.exp(-tau * mu / 2)) ** 2) < 1e-12
            assert abs(q.gamma1 - (math.exp(tau * mu / 2) - 1)) < 1e-12
            assert abs(q.gamma2 - (1 - math.exp(-tau * mu / 2))) < 1e-12
            # alpha = q2/(q1*q1') suffers cancellation at tiny tau*mu; 1e-9
            # relative is the double-precision limit there
            assert q.grangier_alpha == pytest.approx(1.0, rel=1e-9)


def test_analytic_q_n1_coincidence_is_zero():
    # Q(2|1) = 1 - (1-p*tau) - (1-(1-p)*tau) + (1-tau) cancels identically
    for p in (0.2, 0.5, 0.8):
        for tau in (0.1, 0.6, 1.0):
            q21 = 1 - (1 - p * tau) - (1 - (1 - p) * tau) + (1 - tau)
            assert abs(q21) < 1e-15


def test_analytic_q_background_source_series_oracle():
    # brute-force sum over n of Q(1|n) P(n) for a Poissonian + background pulse
    src = SourceModel("poissonian", mu=0.3, background_prob=0.2)
    tau, p = 0.4, 0.7
    q = analytic_Q(src, tau, p)
    total = 0.0
    for n in range(60):
        p_poisson = math.exp(-0.3) * 0.3**n / math.factorial(n)
        for extra, w in ((0, 0.8), (1, 0.2)):
            total += p_poisson * w * (1 - (1 - p * tau) ** (n + extra))
    assert q.q1 == pytest.approx(total, abs=1e-12)


def test_characterization_metrics_table2_fixture():
    gamma1 = E(4.14e-3, 0.06e-3)
    gamma2 = E(0.66e-3, 0.06e-3)
    ratio = ratio_with_uncertainty(gamma2, gamma1)
    assert round(ratio.value, 2) == 0.16
    assert round(ratio.sigma_stat, 2) == 0.01


def test_characterization_metrics_ideal_simulation():
    chain = DetectionChainConfig(source=SourceModel("ideal_single"), tau=0.5, switch_ratio=0.5)
    char, _, _ = characterize_source(chain, 500_000, seed=17)
    metrics = characterization_metrics(char)
    assert metrics.grangier_alpha.value == 0.0
    assert metrics.gamma2.value == 0.0
    assert metrics.gamma1.value == pytest.approx(
        0.5 * (char.q1_arm1 + char.q1_arm2) / char.q0, rel=1e-12
    )


def test_characterization_metrics_poisson_simulation():
    tau, mu = 0.5, 0.2
    chain = DetectionChainConfig(
        source=SourceModel("poissonian", mu=mu), tau=tau, switch_ratio=0.5
    )
    char, _, _ = characterize_source(chain, 2_000_000, seed=18)
    metrics = characterization_metrics(char)
    assert abs(metrics.grangier_alpha.value - 1.0) < 4 * metrics.grangier_alpha.sigma_stat
    # with the neither-fires normalization the ratio tends to exp(-tau*mu),
    # which is what "approximately 1 when tau*mu << 1" looks like exactly
    expected_ratio = math.exp(-tau * mu)
    assert abs(metrics.gamma_ratio.value - expected_ratio) < 4 * metrics.gamma_ratio.sigma_stat


def test_characterization_metrics_no_data():
    with pytest.raises(NoDataError):
        characterization_metrics(
            SourceCharacterization(n_gates=100, count_arm1=0, count_arm2=0, count_both=0)
        )


def test_perfect_chain_estimator_consistency():
    chain = DetectionChainConfig(
        source=SourceModel("ideal_single"), tau=0.2, misalignment_sigma=0.0
    )
    result = simulate_test_run(P, chain, n_gates=400_000, seed=23, n_blocks=8)
    pred = predict(P, pure_state_H())
    for name in ("diff_first", "diff_second"):
        est = getattr(result.assembled, name)
        assert abs(est.value - getattr(pred, name)) < 4 * est.sigma_stat
    d = result.assembled.d_minus_indirect
    assert abs(d.value - pred.d_minus) < 4 * d.sigma_stat
    sp = result.estimates.splitting_first
    assert abs(sp.value - P.p1) < 4 * sp.sigma_stat
    sp2 = result.estimates.splitting_second
    assert abs(sp2.value - P.p2) < 4 * sp2.sigma_stat


def test_estimate_uncertainty_invariants():
    with pytest.raises(ValueError):
        EstimateWithUncertainty(1.0, -0.1, 0.1)
    with pytest.raises(ValueError):
        EstimateWithUncertainty(1.0, 0.2, 0.1)
