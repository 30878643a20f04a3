"""Run configuration: INI ingestion, angle syntax, strict validation.

Angles in config values (and on the command line) accept three spellings:
degrees ("55 deg"), radians ("0.9599 rad" or a bare number), and rational
multiples of pi ("11/36 pi", "pi/4", "0.5 pi").  Keys whose unit is fixed
carry it in the name (gate_ns, accidental_rate_per_ns).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .photon_sim import DetectionChainConfig, SourceModel
from .test_core import TestParameters


def parse_fraction(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_angle(text: str) -> float:
    """Angle in radians from degree, radian, or pi-multiple syntax."""
    s = str(text).strip().lower().replace(" ", "")
    if not s:
        raise ValueError("empty angle")
    if s.endswith("deg"):
        return math.radians(parse_fraction(s[:-3]))
    if s.endswith("rad"):
        return parse_fraction(s[:-3])
    if "pi" in s:
        left, right = s.split("pi", 1)
        left = left.rstrip("*")
        coeff = 1.0 if left in ("", "+") else -1.0 if left == "-" else parse_fraction(left)
        if right:
            if not right.startswith("/"):
                raise ValueError(f"cannot parse angle {text!r}")
            coeff /= float(right[1:])
        return coeff * math.pi
    return parse_fraction(s)


_SCHEMA: dict[str, dict[str, str]] = {
    "test": {"a0": "frac", "b0": "frac", "p1": "frac", "alpha": "angle", "beta": "angle"},
    "chain": {
        "tau": "frac",
        "switch_bias_sigma": "frac",
        "misalignment_sigma": "angle",
        "gate_ns": "frac",
        "accidental_rate_per_ns": "frac",
    },
    "source": {"kind": "str", "mu": "frac", "background_prob": "frac"},
    "execution": {"n_gates": "int", "blocks": "int", "seed": "int"},
    "output": {"dir": "str"},
    "optimize": {
        "a0_min": "frac", "a0_max": "frac",
        "b0_min": "frac", "b0_max": "frac",
        "p1_min": "frac", "p1_max": "frac",
        "alpha_min": "angle", "alpha_max": "angle",
        "beta_min": "angle", "beta_max": "angle",
        "d_min_floor": "frac", "grid_points": "int",
    },
}

_PARSERS = {"frac": parse_fraction, "angle": parse_angle, "int": lambda s: int(s, 0), "str": str}

#: Optimizer defaults: a wide box that contains the reference parameter point.
DEFAULT_OPTIMIZE_BOUNDS = {
    "a0": (0.1, 2.0),
    "b0": (0.1, 2.0),
    "p1": (0.5, 0.999),
    "alpha": (0.0, math.pi),
    "beta": (0.0, math.pi),
}
DEFAULT_D_MIN_FLOOR = 0.0189


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for one CLI invocation."""

    params: TestParameters
    chain: DetectionChainConfig
    n_gates: int
    n_blocks: int
    seed: int | None
    out_dir: str | None
    optimize_bounds: dict[str, tuple[float, float]]
    d_min_floor: float
    optimize_grid_points: int


def _validated_sections(parser: configparser.ConfigParser) -> dict[str, dict[str, object]]:
    sections: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        keys = _SCHEMA[section]
        values: dict[str, object] = {}
        for key, raw in parser.items(section):
            if key not in keys:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            try:
                values[key] = _PARSERS[keys[key]](raw)
            except (ValueError, ZeroDivisionError) as exc:
                raise ValueError(f"bad value for [{section}] {key} = {raw!r}: {exc}") from exc
        sections[section] = values
    return sections


def load_config(path: str | Path | None, seed_override: int | None = None) -> RunConfig:
    """Parse and validate an INI run configuration.

    A missing path yields the built-in defaults (reference test parameters,
    ideal single-photon chain at tau = 0.1).  Every module-level invariant is
    re-checked here through the dataclass constructors; unknown sections or
    keys are rejected.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    sections = _validated_sections(parser)

    test = sections.get("test", {})
    params = TestParameters(
        a0=test.get("a0", 0.74),
        b0=test.get("b0", 1.2987),
        p1=test.get("p1", 0.8),
        alpha=test.get("alpha", 11 * math.pi / 36),
        beta=test.get("beta", 5 * math.pi / 12),
    )

    source_sec = sections.get("source", {})
    source = SourceModel(
        kind=source_sec.get("kind", "ideal_single"),
        mu=source_sec.get("mu", 0.0),
        background_prob=source_sec.get("background_prob", 0.0),
    )
    chain_sec = sections.get("chain", {})
    chain = DetectionChainConfig(
        source=source,
        tau=chain_sec.get("tau", 0.1),
        switch_bias_sigma=chain_sec.get("switch_bias_sigma", 0.0),
        misalignment_sigma=chain_sec.get("misalignment_sigma", math.radians(2.5)),
        gate_ns=chain_sec.get("gate_ns", 20.0),
        accidental_rate_per_ns=chain_sec.get("accidental_rate_per_ns", 0.0),
    )

    execution = sections.get("execution", {})
    n_gates = int(execution.get("n_gates", 100_000))
    n_blocks = int(execution.get("blocks", 10))
    if n_gates < 1:
        raise ValueError("n_gates must be at least 1")
    if n_blocks < 1 or n_blocks > n_gates:
        raise ValueError("blocks must lie in [1, n_gates]")
    seed = seed_override if seed_override is not None else execution.get("seed")

    opt = sections.get("optimize", {})
    bounds = {}
    for axis, default in DEFAULT_OPTIMIZE_BOUNDS.items():
        lo = opt.get(f"{axis}_min", default[0])
        hi = opt.get(f"{axis}_max", default[1])
        if hi < lo:
            raise ValueError(f"optimize bounds for {axis} must satisfy min <= max")
        bounds[axis] = (float(lo), float(hi))

    return RunConfig(
        params=params,
        chain=chain,
        n_gates=n_gates,
        n_blocks=n_blocks,
        seed=None if seed is None else int(seed),
        out_dir=sections.get("output", {}).get("dir"),
        optimize_bounds=bounds,
        d_min_floor=float(opt.get("d_min_floor", DEFAULT_D_MIN_FLOOR)),
        optimize_grid_points=int(opt.get("grid_points", 20)),
    )
