"""Estimators and uncertainty propagation for the coincidence-count records.

The per-gate probability eta = N/M_g feeds two ratio estimators: the
projector estimate sum_i eta_i(theta,p) / sum_i [eta_i(theta,p) +
eta_i(theta+pi/2,p)], whose normalization cancels the splitting ratio and the
detector efficiency, and the splitting estimate that compares the p and 1-p
routings of the same polarizer pair.  Test quantities are then assembled with
the nominal coefficients (p1, p2); measured splittings serve as a consistency
check and enter only the indirect minimum-eigenvalue evaluation.

Uncertainty policy (implementation policy, stated because no single recipe is
canonical): statistical = Poisson counting through the delta method, plus a
polarizer-misalignment term obtained by re-evaluating the estimator over
Monte Carlo draws of per-block angle errors, added in quadrature; total =
statistical plus, in quadrature, the shift of each assembled quantity when
the relevant splitting-ratio coefficient is displaced by switch_bias_sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoDataError, UndefinedSignificanceError
from .photon_sim import SourceCharacterization, SourceModel, substream
from .test_core import TestParameters, b2_splitting_prefactor, d_minus_closed_form

_MISALIGNMENT_MC_DRAWS = 1000
_MISALIGNMENT_MC_SEED = 0x51A3  # fixed so repeated analyses are bit-identical


@dataclass(frozen=True)
class EstimateWithUncertainty:
    value: float
    sigma_stat: float
    sigma_total: float

    def __post_init__(self):
        if self.sigma_stat < 0:
            raise ValueError("sigma_stat must be nonnegative")
        if self.sigma_total < self.sigma_stat - 1e-15:
            raise ValueError("sigma_total cannot be smaller than sigma_stat")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.value, self.sigma_stat, self.sigma_total)


def eta(N: int, M_g: int) -> float:
    """Per-gate coincidence probability N/M_g for one block."""
    if M_g < 1:
        raise NoDataError("M_g must be at least 1")
    if not (0 <= N <= M_g):
        raise ValueError("need 0 <= N <= M_g")
    return N / M_g


def _angles_match(a: float, b: float) -> bool:
    # projectors have period pi
    return abs((a - b + math.pi / 2) % math.pi - math.pi / 2) < 1e-9


def _collect_eta(records, theta: float, p: float):
    """Per-block (eta, Poisson variance of eta) for arms at (theta, p)."""
    etas, variances = [], []
    for rec in records:
        if rec.pol_angles is None:
            continue
        for arm in range(2):
            if _angles_match(rec.pol_angles[arm], theta) and abs(rec.arm_splitting(arm) - p) < 1e-9:
                for blk in rec.blocks:
                    etas.append(blk.counts[arm] / blk.gates)
                    variances.append(blk.counts[arm] / blk.gates**2)
    return etas, variances


def _misalignment_sigma_projector(value: float, n_blocks_a: int, n_blocks_b: int, sigma: float) -> float:
    """Spread of the projector estimate under per-block polarizer errors.

    Uses the measured value as the truth proxy: the effective relative angle
    is arccos(sqrt(value)); each Monte Carlo replicate redraws one angle error
    per block and per arm and re-forms the estimator from the perturbed Malus
    probabilities.
    """
    if sigma <= 0.0:
        return 0.0
    delta = math.acos(math.sqrt(min(max(value, 0.0), 1.0)))
    rng = substream(_MISALIGNMENT_MC_SEED)
    err_a = rng.normal(0.0, sigma, size=(_MISALIGNMENT_MC_DRAWS, n_blocks_a))
    err_b = rng.normal(0.0, sigma, size=(_MISALIGNMENT_MC_DRAWS, n_blocks_b))
    num = np.mean(np.cos(delta + err_a) ** 2, axis=1)
    den = num + np.mean(np.sin(delta + err_b) ** 2, axis=1)
    return float(np.std(num / den))


def estimate_projector(
    records,
    theta: float,
    p: float,
    misalignment_sigma: float = 0.0,
) -> EstimateWithUncertainty:
    """Projector expectation from the (theta, theta+pi/2) arm pair at splitting p."""
    eta_a, var_a = _collect_eta(records, theta, p)
    eta_b, var_b = _collect_eta(records, theta + math.pi / 2, p)
    if not eta_a or not eta_b:
        raise NoDataError(f"no blocks for both arms at theta={theta}, p={p}")
    s_a, s_b = sum(eta_a), sum(eta_b)
    total = s_a + s_b
    if total == 0.0:
        raise NoDataError("all counts are zero; the estimator is undefined")
    value = s_a / total
    v_a, v_b = sum(var_a), sum(var_b)
    var_poisson = (s_b**2 * v_a + s_a**2 * v_b) / total**4
    sig_mis = _misalignment_sigma_projector(value, len(eta_a), len(eta_b), misalignment_sigma)
    sigma = math.sqrt(var_poisson + sig_mis**2)
    return EstimateWithUncertainty(value=value, sigma_stat=sigma, sigma_total=sigma)


def estimate_splitting(records, theta: float, p: float) -> EstimateWithUncertainty:
    """Realized routing probability from the p vs 1-p configurations."""
    parts = []
    for angle in (theta, theta + math.pi / 2):
        for prob in (p, 1.0 - p):
            etas, variances = _collect_eta(records, angle, prob)
            if not etas:
                raise NoDataError(f"missing eta terms at theta={angle}, p={prob}")
            parts.append((sum(etas), sum(variances)))
    s_num = parts[0][0] + parts[2][0]
    v_num = parts[0][1] + parts[2][1]
    s_den = parts[1][0] + parts[3][0]
    v_den = parts[1][1] + parts[3][1]
    total = s_num + s_den
    if total == 0.0:
        raise NoDataError("all counts are zero; the estimator is undefined")
    value = s_num / total
    var = (s_den**2 * v_num + s_num**2 * v_den) / total**4
    sigma = math.sqrt(var)
    return EstimateWithUncertainty(value=value, sigma_stat=sigma, sigma_total=sigma)


@dataclass(frozen=True)
class ProjectorEstimates:
    """Measured inputs to the assembly step."""

    p_alpha: EstimateWithUncertainty
    p_beta_first: EstimateWithUncertainty
    p_beta_second: EstimateWithUncertainty
    splitting_first: EstimateWithUncertainty | None = None
    splitting_second: EstimateWithUncertainty | None = None


@dataclass(frozen=True)
class AssembledQuantities:
    mean_A: EstimateWithUncertainty
    mean_A2: EstimateWithUncertainty
    mean_B: EstimateWithUncertainty
    mean_B2: EstimateWithUncertainty
    diff_first: EstimateWithUncertainty
    diff_second: EstimateWithUncertainty
    d_minus_indirect: EstimateWithUncertainty


def _scaled(est: EstimateWithUncertainty, factor: float) -> EstimateWithUncertainty:
    f = abs(factor)
    return EstimateWithUncertainty(factor * est.value, f * est.sigma_stat, f * est.sigma_total)


def _first_moment_B(b0: float, p1: float, x: float) -> float:
    return b0 * (p1 * x + (1.0 - p1) * (1.0 - x))


def _second_moment_B(b0: float, p2: float, x: float) -> float:
    pref = b2_splitting_prefactor(b0, p2)
    return pref * (p2 * x + (1.0 - p2) * (1.0 - x))


def _shifted_splitting(p: float, sigma: float) -> float:
    """Displaced coefficient for the systematic shift, kept inside (0, 1)."""
    up = p + sigma
    if up <= 1.0 and abs(1.0 - 2.0 * up) > 1e-9:
        return up
    return p - sigma


def assemble_test_quantities(
    estimates: ProjectorEstimates,
    params: TestParameters,
    switch_bias_sigma: float = 0.0,
) -> AssembledQuantities:
    """Test quantities with statistical and total uncertainties.

    Nominal coefficients (a0, b0, p1, p2) scale the measured projector
    expectations; the systematic part of each total uncertainty is the shift
    produced by displacing the splitting coefficient by switch_bias_sigma.
    The indirect minimum eigenvalue re-evaluates the closed form at the
    effective angles arccos(sqrt(.)) of the measured projectors and at the
    measured first splitting, with delta-method propagation.
    """
    a0, b0, p1 = params.a0, params.b0, params.p1
    p2 = params.p2
    x_a = estimates.p_alpha
    x_b1 = estimates.p_beta_first
    x_b2 = estimates.p_beta_second

    mean_A = _scaled(x_a, a0)
    mean_A2 = _scaled(x_a, a0 * a0)

    val_B = _first_moment_B(b0, p1, x_b1.value)
    stat_B = abs(b0 * (2.0 * p1 - 1.0)) * x_b1.sigma_stat
    sys_B = 0.0
    if switch_bias_sigma > 0.0:
        p1s = _shifted_splitting(p1, switch_bias_sigma)
        sys_B = abs(_first_moment_B(b0, p1s, x_b1.value) - val_B)
    mean_B = EstimateWithUncertainty(val_B, stat_B, math.hypot(stat_B, sys_B))

    val_B2 = params.b0**2 * (p1 * p1 * x_b2.value + (1.0 - p1) ** 2 * (1.0 - x_b2.value))
    stat_B2 = abs(b0 * b0 * (2.0 * p1 - 1.0)) * x_b2.sigma_stat
    sys_B2 = 0.0
    if switch_bias_sigma > 0.0:
        p2s = _shifted_splitting(p2, switch_bias_sigma)
        sys_B2 = abs(_second_moment_B(b0, p2s, x_b2.value) - val_B2)
    mean_B2 = EstimateWithUncertainty(val_B2, stat_B2, math.hypot(stat_B2, sys_B2))

    diff_first = EstimateWithUncertainty(
        mean_B.value - mean_A.value,
        math.hypot(mean_B.sigma_stat, mean_A.sigma_stat),
        math.hypot(math.hypot(mean_B.sigma_stat, mean_A.sigma_stat), sys_B),
    )
    diff_second = EstimateWithUncertainty(
        mean_B2.value - mean_A2.value,
        math.hypot(mean_B2.sigma_stat, mean_A2.sigma_stat),
        math.hypot(math.hypot(mean_B2.sigma_stat, mean_A2.sigma_stat), sys_B2),
    )

    d_minus_indirect = _indirect_d_minus(estimates, params, switch_bias_sigma)
    return AssembledQuantities(
        mean_A=mean_A,
        mean_A2=mean_A2,
        mean_B=mean_B,
        mean_B2=mean_B2,
        diff_first=diff_first,
        diff_second=diff_second,
        d_minus_indirect=d_minus_indirect,
    )


def _effective_angle(x: float) -> float:
    return math.acos(math.sqrt(min(max(x, 0.0), 1.0)))


def _indirect_d_minus(
    estimates: ProjectorEstimates, params: TestParameters, switch_bias_sigma: float
) -> EstimateWithUncertainty:
    p1_est = estimates.splitting_first
    p1_hat = p1_est.value if p1_est is not None else params.p1
    sig_p1 = p1_est.sigma_stat if p1_est is not None else 0.0

    def evaluate(x_a: float, x_b: float, p1v: float) -> float:
        trial = TestParameters(
            a0=params.a0,
            b0=params.b0,
            p1=min(max(p1v, 0.0), 1.0),
            alpha=_effective_angle(x_a),
            beta=_effective_angle(x_b),
        )
        return d_minus_closed_form(trial)

    x_a, x_b = estimates.p_alpha.value, estimates.p_beta_first.value
    value = evaluate(x_a, x_b, p1_hat)
    h = 1e-6
    grads = [
        (evaluate(x_a + h, x_b, p1_hat) - evaluate(x_a - h, x_b, p1_hat)) / (2 * h),
        (evaluate(x_a, x_b + h, p1_hat) - evaluate(x_a, x_b - h, p1_hat)) / (2 * h),
        (evaluate(x_a, x_b, p1_hat + h) - evaluate(x_a, x_b, p1_hat - h)) / (2 * h),
    ]
    sigmas = [estimates.p_alpha.sigma_stat, estimates.p_beta_first.sigma_stat, sig_p1]
    var_stat = sum((g * s) ** 2 for g, s in zip(grads, sigmas))
    sys = 0.0
    if switch_bias_sigma > 0.0:
        sys = abs(evaluate(x_a, x_b, p1_hat + switch_bias_sigma) - value)
    sigma_stat = math.sqrt(var_stat)
    return EstimateWithUncertainty(value, sigma_stat, math.hypot(sigma_stat, sys))


def significance(diff_second: EstimateWithUncertainty) -> float:
    """Violation significance |value| / sigma_total; zero unless value < 0."""
    if diff_second.sigma_total <= 0.0:
        raise UndefinedSignificanceError("sigma_total must be positive")
    if diff_second.value >= 0.0:
        return 0.0
    return abs(diff_second.value) / diff_second.sigma_total


# --- source characterization -------------------------------------------------


@dataclass(frozen=True)
class AnalyticQ:
    """Closed-form per-herald outcome probabilities for one detector pair.

    q1 is the marginal firing probability of the detector on the p arm; q0 is
    its complement (the detector staying silent whatever the other arm does),
    which is the normalization used by the gamma ratios.
    """

    q1: float
    q2: float
    q0: float
    q1_other: float

    @property
    def gamma1(self) -> float:
        return self.q1 / self.q0

    @property
    def gamma2(self) -> float:
        return self.q2 / self.q1 if self.q1 > 0.0 else 0.0

    @property
    def grangier_alpha(self) -> float:
        return self.q2 / (self.q1 * self.q1_other) if self.q1 * self.q1_other > 0.0 else 0.0


def analytic_Q(source: SourceModel, tau: float, p: float) -> AnalyticQ:
    """Exact Q probabilities from the source generating function.

    A pulse of n photons fires a specific detector with probability
    1-(1-p*tau)^n after binomial routing, so every term is an evaluation of
    E[z^n] at z in {1-p*tau, 1-(1-p)*tau, 1-tau}.
    """
    if not (0.0 <= tau <= 1.0 and 0.0 <= p <= 1.0):
        raise ValueError("tau and p must lie in [0, 1]")
    g_p = float(source.pgf(1.0 - p * tau))
    g_q = float(source.pgf(1.0 - (1.0 - p) * tau))
    g_t = float(source.pgf(1.0 - tau))
    q1 = 1.0 - g_p
    q1_other = 1.0 - g_q
    q2 = 1.0 - g_p - g_q + g_t
    return AnalyticQ(q1=q1, q2=q2, q0=g_p, q1_other=q1_other)


@dataclass(frozen=True)
class CharacterizationMetrics:
    gamma1: EstimateWithUncertainty
    gamma2: EstimateWithUncertainty
    gamma_ratio: EstimateWithUncertainty
    grangier_alpha: EstimateWithUncertainty


def _poisson_sigma(count: int) -> float:
    # zero observed counts still carry one count's worth of uncertainty
    return math.sqrt(count) if count > 0 else 1.0


def ratio_with_uncertainty(
    num: EstimateWithUncertainty, den: EstimateWithUncertainty
) -> EstimateWithUncertainty:
    """num/den with relative uncertainties added in quadrature."""
    if den.value == 0.0:
        raise NoDataError("ratio denominator is zero")
    value = num.value / den.value
    rel_stat = math.hypot(
        num.sigma_stat / num.value if num.value else 0.0, den.sigma_stat / den.value
    )
    rel_total = math.hypot(
        num.sigma_total / num.value if num.value else 0.0, den.sigma_total / den.value
    )
    sig_stat = abs(value) * rel_stat if value else num.sigma_stat / abs(den.value)
    sig_total = abs(value) * rel_total if value else num.sigma_total / abs(den.value)
    return EstimateWithUncertainty(value, sig_stat, max(sig_total, sig_stat))


def characterization_metrics(char: SourceCharacterization) -> CharacterizationMetrics:
    """Gamma ratios and the anticorrelation parameter from empirical tallies.

    q1 enters as the two-arm average (the characterization runs at p = 1/2
    where the arms are symmetric); count uncertainties are Poisson and treated
    as uncorrelated across the ratios.
    """
    n = char.n_gates
    c1 = 0.5 * (char.count_arm1 + char.count_arm2)
    c2 = char.count_both
    c0 = n - (char.count_arm1 + char.count_arm2 - char.count_both)
    if c0 <= 0 or c1 <= 0:
        raise NoDataError("need nonzero silent-gate and single-count tallies")
    q1 = EstimateWithUncertainty(c1 / n, _poisson_sigma(round(c1)) / n, _poisson_sigma(round(c1)) / n)
    q2 = EstimateWithUncertainty(c2 / n, _poisson_sigma(c2) / n, _poisson_sigma(c2) / n)
    q0 = EstimateWithUncertainty(c0 / n, _poisson_sigma(c0) / n, _poisson_sigma(c0) / n)
    q1_i = EstimateWithUncertainty(
        char.q1_arm1, _poisson_sigma(char.count_arm1) / n, _poisson_sigma(char.count_arm1) / n
    )
    q1_ii = EstimateWithUncertainty(
        char.q1_arm2, _poisson_sigma(char.count_arm2) / n, _poisson_sigma(char.count_arm2) / n
    )
    gamma1 = ratio_with_uncertainty(q1, q0)
    gamma2 = ratio_with_uncertainty(q2, q1)
    gamma_ratio = ratio_with_uncertainty(gamma2, gamma1)
    alpha = ratio_with_uncertainty(ratio_with_uncertainty(q2, q1_i), q1_ii)
    return CharacterizationMetrics(
        gamma1=gamma1, gamma2=gamma2, gamma_ratio=gamma_ratio, grangier_alpha=alpha
    )
