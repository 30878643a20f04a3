"""End-to-end simulated experiment: five configurations, estimators, assembly.

A full run measures <P_alpha> with both arms at p = 1/2 (one configuration;
the splitting cancels in the ratio estimator) and <P_beta> twice, once at the
first-moment splitting p1 and once at the second-moment splitting p2.  Each
splitting needs a swapped-polarizer partner configuration so that both angles
are observed on both routings, which is also what makes the splitting
estimator possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analysis import (
    AssembledQuantities,
    ProjectorEstimates,
    assemble_test_quantities,
    estimate_projector,
    estimate_splitting,
    significance,
)
from .photon_sim import (
    CountsRecord,
    DetectionChainConfig,
    McaHistogram,
    MeasurementSettings,
    derive_seed,
    run_measurement,
)
from .test_core import TestParameters


@dataclass(frozen=True)
class TestRunResult:
    records: dict[str, CountsRecord]
    histograms: dict[str, McaHistogram]
    estimates: ProjectorEstimates
    assembled: AssembledQuantities

    @property
    def violation_significance(self) -> float:
        return significance(self.assembled.diff_second)


def measurement_plan(params: TestParameters) -> dict[str, MeasurementSettings]:
    """The five configurations of a full run, keyed by a short label."""
    a, b = params.alpha, params.beta
    b_perp = b + math.pi / 2
    return {
        "alpha": MeasurementSettings((a, a + math.pi / 2), 0.5),
        "beta_p1": MeasurementSettings((b, b_perp), params.p1),
        "beta_p1_swapped": MeasurementSettings((b_perp, b), params.p1),
        "beta_p2": MeasurementSettings((b, b_perp), params.p2),
        "beta_p2_swapped": MeasurementSettings((b_perp, b), params.p2),
    }


def simulate_test_run(
    params: TestParameters,
    chain: DetectionChainConfig,
    n_gates: int,
    seed: int,
    n_blocks: int = 1,
) -> TestRunResult:
    """Simulate every configuration and reduce to the assembled quantities.

    Each configuration runs n_gates gates on its own derived seed, so the
    whole result is reproducible from (params, chain, n_gates, seed,
    n_blocks) alone.
    """
    plan = measurement_plan(params)
    records: dict[str, CountsRecord] = {}
    histograms: dict[str, McaHistogram] = {}
    for i, (label, settings) in enumerate(plan.items()):
        rec, hist = run_measurement(
            chain, n_gates, settings, seed=derive_seed(seed, 100 + i), n_blocks=n_blocks
        )
        records[label] = rec
        histograms[label] = hist

    recs = list(records.values())
    sig_mis = chain.misalignment_sigma
    estimates = ProjectorEstimates(
        p_alpha=estimate_projector(recs, params.alpha, 0.5, sig_mis),
        p_beta_first=estimate_projector(recs, params.beta, params.p1, sig_mis),
        p_beta_second=estimate_projector(recs, params.beta, params.p2, sig_mis),
        splitting_first=estimate_splitting(recs, params.beta, params.p1),
        splitting_second=estimate_splitting(recs, params.beta, params.p2),
    )
    assembled = assemble_test_quantities(estimates, params, chain.switch_bias_sigma)
    return TestRunResult(
        records=records, histograms=histograms, estimates=estimates, assembled=assembled
    )
