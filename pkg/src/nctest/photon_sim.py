"""Monte Carlo model of the heralded-photon measurement chain.

Each heralding gate delivers a pulse of n photons (ideal single, Poissonian,
optionally plus one uncorrelated background photon), which an optical switch
splits binomially between two arms.  Each arm holds a polarizer (possibly
removed) and one gated detector with efficiency tau; a detector also fires on
ambient accidentals, modeled as a Bernoulli trial per nanosecond slot of the
gate.  The per-gate record is which detectors fired; delays feed an MCA-style
histogram in which detections caused by heralded photons land inside the peak
window while background and accidental detections spread uniformly.

Stochastic conventions, chosen once and used everywhere:

* heralded photons carry polarization 0 (horizontal); background photons are
  unpolarized and pass a polarizer with probability 1/2;
* polarizer settings are redrawn once per measurement block as
  nominal + N(0, misalignment_sigma), modeling a per-run alignment error;
* the realized switch ratio is nominal + N(0, switch_bias_sigma), drawn once
  per measurement run and reported alongside the counts;
* every block consumes an independent substream derived from
  (master seed, block index), so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CannotEstimateError

SOURCE_KINDS = ("ideal_single", "poissonian", "single_with_background")


@dataclass(frozen=True)
class SourceModel:
    """Photon-number distribution of one heralded pulse."""

    kind: str
    mu: float = 0.0
    background_prob: float = 0.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}, expected one of {SOURCE_KINDS}")
        if self.mu < 0 or not math.isfinite(self.mu):
            raise ValueError("mu must be finite and nonnegative")
        if not (0.0 <= self.background_prob <= 1.0):
            raise ValueError("background_prob must lie in [0, 1]")
        if self.kind == "ideal_single" and self.background_prob != 0.0:
            raise ValueError(
                "ideal_single is exactly one photon per gate; "
                "use single_with_background for a background channel"
            )

    def pgf(self, z) -> float:
        """Probability generating function E[z^n] of the pulse photon number."""
        if self.kind == "poissonian":
            base = np.exp(-self.mu * (1.0 - np.asarray(z, dtype=float)))
        else:
            base = np.asarray(z, dtype=float)
        return base * (1.0 - self.background_prob * (1.0 - z))

    def _sample_base(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "poissonian":
            return rng.poisson(self.mu, size)
        return np.ones(size, dtype=np.int64)

    def _sample_background(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.background_prob == 0.0:
            return np.zeros(size, dtype=np.int64)
        return (rng.random(size) < self.background_prob).astype(np.int64)


def sample_photon_number(source: SourceModel, rng: np.random.Generator) -> int:
    """Photon number of one heralded pulse, background channel included."""
    return int(source._sample_base(rng, 1)[0] + source._sample_background(rng, 1)[0])


def split_photons(n: int, p: float, rng: np.random.Generator) -> tuple[int, int]:
    """Binomial routing of n photons: arm 1 with probability p, rest to arm 2."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("splitting ratio must lie in [0, 1]")
    m1 = int(rng.binomial(n, p))
    return m1, n - m1


def detect(m: int, tau: float, rng: np.random.Generator) -> bool:
    """A detector seeing m photons fires with probability 1 - (1-tau)^m."""
    if not (0.0 <= tau <= 1.0):
        raise ValueError("tau must lie in [0, 1]")
    return bool(rng.random() < _fire_prob(np.asarray([m]), tau)[0])


def polarizer_pass(photon_polarization: float, pol_setting: float, rng: np.random.Generator) -> bool:
    """Malus law for a single photon: pass probability cos^2(setting - polarization)."""
    if not (math.isfinite(photon_polarization) and math.isfinite(pol_setting)):
        raise ValueError("angles must be finite")
    return bool(rng.random() < math.cos(pol_setting - photon_polarization) ** 2)


def _fire_prob(k: np.ndarray, tau: float) -> np.ndarray:
    if tau >= 1.0:
        return (k > 0).astype(float)
    if tau <= 0.0:
        return np.zeros(k.shape)
    return -np.expm1(k * math.log1p(-tau))


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator addressed by (master seed, key path)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=key))


def derive_seed(master_seed: int, *key: int) -> int:
    """Deterministic child seed for handing a substream to another run."""
    return int(np.random.SeedSequence(entropy=master_seed, spawn_key=key).generate_state(1)[0])


@dataclass(frozen=True)
class DetectionChainConfig:
    """Everything stochastic about the apparatus downstream of the herald."""

    source: SourceModel
    tau: float
    switch_ratio: float = 0.5
    switch_bias_sigma: float = 0.0
    pol_angles: tuple[float, float] | None = None
    misalignment_sigma: float = math.radians(2.5)
    gate_ns: float = 20.0
    accidental_rate_per_ns: float = 0.0

    def __post_init__(self):
        for name in ("tau", "switch_ratio"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.switch_bias_sigma < 0 or self.misalignment_sigma < 0:
            raise ValueError("sigmas must be nonnegative")
        if self.gate_ns <= 0:
            raise ValueError("gate_ns must be positive")
        if self.accidental_rate_per_ns < 0 or self.accidental_rate_per_ns > 1:
            raise ValueError("accidental_rate_per_ns must lie in [0, 1] (per-ns Bernoulli)")
        if self.pol_angles is not None:
            angles = tuple(float(a) for a in self.pol_angles)
            if len(angles) != 2 or any(not math.isfinite(a) for a in angles):
                raise ValueError("pol_angles must be two finite angles or None")
            object.__setattr__(self, "pol_angles", angles)


@dataclass(frozen=True)
class MeasurementSettings:
    """One experimental configuration: polarizer per arm and nominal routing."""

    pol_angles: tuple[float, float] | None
    switch_p: float

    def __post_init__(self):
        if not (0.0 <= self.switch_p <= 1.0):
            raise ValueError("switch_p must lie in [0, 1]")
        if self.pol_angles is not None:
            angles = tuple(float(a) for a in self.pol_angles)
            if len(angles) != 2 or any(not math.isfinite(a) for a in angles):
                raise ValueError("pol_angles must be two finite angles or None")
            object.__setattr__(self, "pol_angles", angles)


@dataclass(frozen=True)
class BlockCounts:
    gates: int
    counts: tuple[int, int]
    double_coincidences: int

    def __post_init__(self):
        if self.gates < 1:
            raise ValueError("a block must contain at least one gate")
        if any(c < 0 or c > self.gates for c in self.counts):
            raise ValueError("arm counts must lie in [0, gates]")
        if not (0 <= self.double_coincidences <= min(self.counts)):
            raise ValueError("double coincidences cannot exceed either arm count")


@dataclass(frozen=True)
class CountsRecord:
    """Per-block tallies of one measurement configuration."""

    pol_angles: tuple[float, float] | None
    switch_p: float
    actual_p: float
    blocks: tuple[BlockCounts, ...]

    @property
    def gates_total(self) -> int:
        return sum(b.gates for b in self.blocks)

    @property
    def counts_total(self) -> tuple[int, int]:
        return (
            sum(b.counts[0] for b in self.blocks),
            sum(b.counts[1] for b in self.blocks),
        )

    @property
    def doubles_total(self) -> int:
        return sum(b.double_coincidences for b in self.blocks)

    def arm_splitting(self, arm: int) -> float:
        """Nominal probability that a photon is routed to the given arm."""
        return self.switch_p if arm == 0 else 1.0 - self.switch_p

    def to_dict(self) -> dict:
        return {
            "pol_angles": list(self.pol_angles) if self.pol_angles is not None else None,
            "switch_p": self.switch_p,
            "actual_p": self.actual_p,
            "blocks": {
                "gates": [b.gates for b in self.blocks],
                "counts_arm1": [b.counts[0] for b in self.blocks],
                "counts_arm2": [b.counts[1] for b in self.blocks],
                "double_coincidences": [b.double_coincidences for b in self.blocks],
            },
        }


@dataclass(frozen=True)
class McaHistogram:
    """Delay histogram of detector firings relative to the herald."""

    bin_width_ns: float
    bins: np.ndarray
    peak_window: tuple[float, float]

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        if bins.ndim != 1 or bins.size < 2:
            raise ValueError("need a 1-d histogram with at least two bins")
        if np.any(bins < 0):
            raise ValueError("bin counts must be nonnegative")
        if self.bin_width_ns <= 0:
            raise ValueError("bin_width_ns must be positive")
        lo, hi = self.peak_window
        if not lo < hi:
            raise ValueError("peak_window must be a nonempty interval")
        bins = bins.copy()
        bins.flags.writeable = False
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "peak_window", (float(lo), float(hi)))

    @property
    def total_counts(self) -> int:
        return int(self.bins.sum())

    @property
    def range_ns(self) -> float:
        return self.bin_width_ns * self.bins.size

    def bin_starts(self) -> np.ndarray:
        return np.arange(self.bins.size) * self.bin_width_ns

    def window_mask(self) -> np.ndarray:
        centers = self.bin_starts() + 0.5 * self.bin_width_ns
        lo, hi = self.peak_window
        return (centers >= lo) & (centers < hi)

    def to_csv(self) -> str:
        lines = ["bin_start_ns,count"]
        lines += [f"{s:.6g},{c}" for s, c in zip(self.bin_starts(), self.bins)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BackgroundSubtraction:
    true_count: float
    true_sigma: float
    background_count: float
    background_sigma: float


def _pass_prob(pol_setting: float | None) -> float:
    """Malus factor for a horizontally polarized heralded photon."""
    return 1.0 if pol_setting is None else math.cos(pol_setting) ** 2


def _simulate_block(
    config: DetectionChainConfig,
    settings: MeasurementSettings,
    n_gates: int,
    actual_p: float,
    rng: np.random.Generator,
    n_slots: int,
    peak_window: tuple[float, float],
):
    """One measurement block; returns counts and per-arm delay arrays."""
    if settings.pol_angles is None:
        pol = (None, None)
    else:
        pol = tuple(
            settings.pol_angles[i] + rng.normal(0.0, config.misalignment_sigma)
            for i in range(2)
        )

    n_src = config.source._sample_base(rng, n_gates)
    n_bg = config.source._sample_background(rng, n_gates)
    m1_src = rng.binomial(n_src, actual_p)
    m2_src = n_src - m1_src
    m1_bg = rng.binomial(n_bg, actual_p)
    m2_bg = n_bg - m1_bg

    fired = []
    fired_src = []
    fired_bg = []
    acc_counts = []
    for arm, (m_src, m_bg) in enumerate(((m1_src, m1_bg), (m2_src, m2_bg))):
        q = _pass_prob(pol[arm])
        k_src = rng.binomial(m_src, q)
        k_bg = m_bg if pol[arm] is None else rng.binomial(m_bg, 0.5)
        f_src = rng.random(n_gates) < _fire_prob(k_src, config.tau)
        f_bg = rng.random(n_gates) < _fire_prob(k_bg, config.tau)
        if config.accidental_rate_per_ns > 0.0:
            k_acc = rng.binomial(n_slots, config.accidental_rate_per_ns, size=n_gates)
        else:
            k_acc = np.zeros(n_gates, dtype=np.int64)
        fired_src.append(f_src)
        fired_bg.append(f_bg & ~f_src)
        acc_counts.append(k_acc)
        fired.append(f_src | f_bg | (k_acc > 0))

    delays = []
    slot_width = config.gate_ns / n_slots
    peak_lo, peak_hi = peak_window
    for arm in range(2):
        only_acc = (acc_counts[arm] > 0) & ~fired_src[arm] & ~fired_bg[arm]
        d_src = rng.uniform(peak_lo, peak_hi, size=int(fired_src[arm].sum()))
        d_bg = rng.uniform(0.0, config.gate_ns, size=int(fired_bg[arm].sum()))
        n_acc = int(only_acc.sum())
        # a uniformly chosen hit slot is uniform over slots by exchangeability
        d_acc = (rng.integers(0, n_slots, size=n_acc) + rng.random(n_acc)) * slot_width
        delays.append(np.concatenate([d_src, d_bg, d_acc]))

    counts = BlockCounts(
        gates=n_gates,
        counts=(int(fired[0].sum()), int(fired[1].sum())),
        double_coincidences=int((fired[0] & fired[1]).sum()),
    )
    return counts, delays


def _default_peak_window(gate_ns: float) -> tuple[float, float]:
    return (0.45 * gate_ns, 0.55 * gate_ns)


def _block_sizes(n_gates: int, n_blocks: int) -> list[int]:
    base, extra = divmod(n_gates, n_blocks)
    return [base + (1 if i < extra else 0) for i in range(n_blocks)]


def run_measurement(
    config: DetectionChainConfig,
    n_gates: int,
    settings: MeasurementSettings | None = None,
    seed: int | None = None,
    n_blocks: int = 1,
    bin_width_ns: float = 0.1,
    peak_window: tuple[float, float] | None = None,
) -> tuple[CountsRecord, McaHistogram]:
    """Simulate one measurement configuration over n_gates heralding gates.

    The gates are divided as evenly as possible into n_blocks blocks, each on
    its own random substream with its own polarizer misalignment draw.  For a
    fixed (config, settings, n_gates, seed, n_blocks) the returned record and
    histogram are bit-for-bit reproducible.
    """
    if n_gates < 1:
        raise ValueError("n_gates must be at least 1")
    if n_blocks < 1 or n_blocks > n_gates:
        raise ValueError("n_blocks must lie in [1, n_gates]")
    if seed is None:
        raise ValueError("a master seed is required (no silent time-based seeding)")
    if settings is None:
        settings = MeasurementSettings(config.pol_angles, config.switch_ratio)

    rng_run = substream(seed, 0)
    actual_p = settings.switch_p
    if config.switch_bias_sigma > 0.0:
        actual_p = float(
            np.clip(settings.switch_p + rng_run.normal(0.0, config.switch_bias_sigma), 0.0, 1.0)
        )

    n_slots = max(1, int(round(config.gate_ns)))
    window = _default_peak_window(config.gate_ns) if peak_window is None else peak_window
    n_bins = max(2, int(round(config.gate_ns / bin_width_ns)))
    edges = np.arange(n_bins + 1) * bin_width_ns

    blocks = []
    all_delays = []
    for b, size in enumerate(_block_sizes(n_gates, n_blocks)):
        counts, delays = _simulate_block(
            config, settings, size, actual_p, substream(seed, 1, b), n_slots, window
        )
        blocks.append(counts)
        all_delays.extend(delays)

    delays = np.concatenate(all_delays) if all_delays else np.empty(0)
    hist, _ = np.histogram(delays, bins=edges)
    record = CountsRecord(
        pol_angles=settings.pol_angles,
        switch_p=settings.switch_p,
        actual_p=actual_p,
        blocks=tuple(blocks),
    )
    return record, McaHistogram(bin_width_ns=bin_width_ns, bins=hist, peak_window=window)


@dataclass(frozen=True)
class SourceCharacterization:
    """Per-gate outcome frequencies with the polarizers removed."""

    n_gates: int
    count_arm1: int
    count_arm2: int
    count_both: int

    @property
    def q1_arm1(self) -> float:
        return self.count_arm1 / self.n_gates

    @property
    def q1_arm2(self) -> float:
        return self.count_arm2 / self.n_gates

    @property
    def q2(self) -> float:
        return self.count_both / self.n_gates

    @property
    def q0(self) -> float:
        """Fraction of gates in which neither detector fired."""
        return 1.0 - (self.count_arm1 + self.count_arm2 - self.count_both) / self.n_gates


def characterize_source(
    config: DetectionChainConfig,
    n_gates: int,
    seed: int | None = None,
    n_blocks: int = 1,
) -> tuple[SourceCharacterization, CountsRecord, McaHistogram]:
    """Two-detector characterization run: polarizers removed, switch at config p."""
    if config.pol_angles is not None:
        raise ValueError("characterization requires pol_angles=None (polarizers removed)")
    settings = MeasurementSettings(None, config.switch_ratio)
    record, hist = run_measurement(config, n_gates, settings, seed=seed, n_blocks=n_blocks)
    n1, n2 = record.counts_total
    tallies = SourceCharacterization(
        n_gates=record.gates_total,
        count_arm1=n1,
        count_arm2=n2,
        count_both=record.doubles_total,
    )
    return tallies, record, hist


def background_subtract(hist: McaHistogram) -> BackgroundSubtraction:
    """Estimate true (in-window) counts above a flat sideband background.

    The sideband mean fixes the background level per bin; Poisson variances
    of the window total and the sideband propagate in quadrature.
    """
    mask = hist.window_mask()
    n_win = int(mask.sum())
    n_side = int((~mask).sum())
    if n_win == 0:
        raise CannotEstimateError("peak window covers no bins")
    if n_side == 0:
        raise CannotEstimateError("no sideband bins outside the peak window")
    lo, hi = hist.peak_window
    if lo < 0.0 or hi > hist.range_ns:
        raise CannotEstimateError("peak window must lie strictly inside the histogram range")
    in_total = float(hist.bins[mask].sum())
    side_total = float(hist.bins[~mask].sum())
    level = side_total / n_side
    background = level * n_win
    var_background = n_win * n_win * side_total / n_side**2
    true = in_total - background
    var_true = in_total + var_background
    return BackgroundSubtraction(
        true_count=true,
        true_sigma=math.sqrt(var_true),
        background_count=background,
        background_sigma=math.sqrt(var_background),
    )
