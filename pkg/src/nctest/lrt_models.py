"""Classical hidden-variable models and the moment inequality they obey.

A model is a triple of piecewise polynomials on a common domain: a probability
density rho(x) and two nonnegative response functions A(x), B(x).  Whenever
0 <= A(x) <= B(x) pointwise, every moment ordering <A> <= <B> and
<A^2> <= <B^2> follows; models violating the pointwise condition can still
reproduce the quantum predictions, and the bundled step-function construction
does exactly that.

Pieces are closed on the right: the value at an interior breakpoint belongs to
the piece ending there, matching the step convention theta(xi) = 1 for xi >= 0
used by the counterexample.  Breakpoint values are measure-zero and never
affect moments; the dominance checker reports open violation intervals, so
they cannot flip its verdict either.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .test_core import TestParameters

MAX_DEGREE = 3
SCHEMA = "hv-model/1"


def _polymul(a: tuple[float, ...], b: tuple[float, ...]) -> np.ndarray:
    return np.convolve(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def _polyint(coeffs, lo: float, hi: float) -> float:
    """Definite integral of a polynomial given ascending coefficients."""
    c = np.asarray(coeffs, dtype=float)
    powers = np.arange(1, c.size + 1)
    anti = c / powers
    return float(anti @ (hi**powers) - anti @ (lo**powers))


def _polyval(coeffs, x):
    c = np.asarray(coeffs, dtype=float)
    y = np.zeros_like(np.asarray(x, dtype=float))
    for ck in c[::-1]:
        y = y * x + ck
    return y


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Polynomial pieces between consecutive breakpoints, coeffs ascending."""

    breakpoints: tuple[float, ...]
    coefficients: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if len(bp) < 2:
            raise ValueError("need at least two breakpoints")
        if any(not math.isfinite(b) for b in bp):
            raise ValueError("breakpoints must be finite")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        coeffs = tuple(tuple(float(c) for c in row) for row in self.coefficients)
        if len(coeffs) != len(bp) - 1:
            raise ValueError("need exactly one coefficient row per piece")
        for row in coeffs:
            if not row or len(row) > MAX_DEGREE + 1:
                raise ValueError(f"piece degree must be 0..{MAX_DEGREE}")
            if any(not math.isfinite(c) for c in row):
                raise ValueError("coefficients must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def domain(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def piece_index(self, x: float) -> int:
        """Index of the piece owning x (right-closed pieces)."""
        lo, hi = self.domain
        if x < lo or x > hi:
            raise ValueError(f"x={x} outside domain [{lo}, {hi}]")
        i = int(np.searchsorted(self.breakpoints, x, side="left")) - 1
        return min(max(i, 0), len(self.coefficients) - 1)

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.breakpoints, xs, side="left") - 1
        idx = np.clip(idx, 0, len(self.coefficients) - 1)
        out = np.empty_like(xs)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = _polyval(self.coefficients[i], xs[sel])
        return out if np.ndim(x) else float(out[0])

    def coeffs_on(self, lo: float, hi: float) -> tuple[float, ...]:
        """Coefficient row valid on [lo, hi]; the interval must not straddle pieces."""
        return self.coefficients[self.piece_index(0.5 * (lo + hi))]


def constant(value: float, lo: float, hi: float) -> PiecewisePolynomial:
    return PiecewisePolynomial((lo, hi), ((value,),))


def step_function(
    low_x_value: float, high_x_value: float, cut: float, lo: float, hi: float
) -> PiecewisePolynomial:
    """Two-level step on [lo, hi]: low_x_value for x <= cut, high_x_value after."""
    if not lo <= cut <= hi:
        raise ValueError("cut must lie inside the domain")
    if cut <= lo:
        return constant(high_x_value, lo, hi)
    if cut >= hi:
        return constant(low_x_value, lo, hi)
    return PiecewisePolynomial((lo, cut, hi), ((low_x_value,), (high_x_value,)))


@dataclass(frozen=True)
class HiddenVariableModel:
    """rho, A, B on a shared interval, with the merged breakpoint list."""

    domain: tuple[float, float]
    density: PiecewisePolynomial
    func_a: PiecewisePolynomial
    func_b: PiecewisePolynomial
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        lo, hi = (float(v) for v in self.domain)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("domain must be a finite nonempty interval")
        for name, f in (("density", self.density), ("func_a", self.func_a), ("func_b", self.func_b)):
            flo, fhi = f.domain
            if abs(flo - lo) > 1e-12 or abs(fhi - hi) > 1e-12:
                raise ValueError(f"{name} must cover exactly the model domain")
        merged = sorted(
            set(self.density.breakpoints)
            | set(self.func_a.breakpoints)
            | set(self.func_b.breakpoints)
        )
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "breakpoints", tuple(merged))
        total = sum(
            _polyint(self.density.coeffs_on(u, v), u, v)
            for u, v in zip(merged, merged[1:])
        )
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"density integrates to {total}, expected 1 within 1e-10")
        for name, f in (("density", self.density), ("func_a", self.func_a), ("func_b", self.func_b)):
            for u, v in zip(merged, merged[1:]):
                xs = np.linspace(u, v, 101)
                if np.min(_polyval(f.coeffs_on(u, v), xs)) < -1e-12:
                    raise ValueError(f"{name} is negative inside ({u}, {v})")


@dataclass(frozen=True)
class DominanceReport:
    holds: bool
    violation_intervals: tuple[tuple[float, float], ...]


def classical_moments(model: HiddenVariableModel) -> tuple[float, float, float, float]:
    """(<A>, <A^2>, <B>, <B^2>) by exact piecewise polynomial integration."""
    m_a = m_a2 = m_b = m_b2 = 0.0
    bp = model.breakpoints
    for u, v in zip(bp, bp[1:]):
        rho = model.density.coeffs_on(u, v)
        ca = model.func_a.coeffs_on(u, v)
        cb = model.func_b.coeffs_on(u, v)
        m_a += _polyint(_polymul(ca, rho), u, v)
        m_a2 += _polyint(_polymul(_polymul(ca, ca), rho), u, v)
        m_b += _polyint(_polymul(cb, rho), u, v)
        m_b2 += _polyint(_polymul(_polymul(cb, cb), rho), u, v)
    return m_a, m_a2, m_b, m_b2


def _real_roots_in(coeffs, lo: float, hi: float) -> list[float]:
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size <= 1:
        return []
    roots = np.roots(c[::-1])
    out = [float(r.real) for r in roots if abs(r.imag) < 1e-9 and lo < r.real < hi]
    return sorted(out)


def check_dominance(model: HiddenVariableModel, tol: float = 0.0) -> DominanceReport:
    """Locate every open interval where A(x) > B(x) + tol.

    Within each piece the difference is a polynomial of degree <= 3, so the
    interval endpoints are either breakpoints or polynomial roots; midpoint
    sign tests decide which subintervals violate.
    """
    if tol < 0.0:
        raise ValueError("tol must be nonnegative")
    intervals: list[list[float]] = []
    bp = model.breakpoints
    for u, v in zip(bp, bp[1:]):
        ca = np.asarray(model.func_a.coeffs_on(u, v), dtype=float)
        cb = np.asarray(model.func_b.coeffs_on(u, v), dtype=float)
        n = max(ca.size, cb.size)
        diff = np.zeros(n)
        diff[: ca.size] += ca
        diff[: cb.size] -= cb
        diff[0] -= tol
        cuts = [u] + _real_roots_in(diff, u, v) + [v]
        for s, e in zip(cuts, cuts[1:]):
            if _polyval(diff, 0.5 * (s + e)) > 0.0:
                if intervals and abs(intervals[-1][1] - s) <= 1e-12:
                    intervals[-1][1] = e
                else:
                    intervals.append([s, e])
    merged = tuple((a, b) for a, b in intervals)
    return DominanceReport(holds=not merged, violation_intervals=merged)


def counterexample_model(params: TestParameters) -> HiddenVariableModel:
    """Step-function model reproducing the quantum predictions on |H>.

    x is uniform on [0, 1]; A(x) = a0 for x <= X_A and 0 after, with
    X_A = cos^2(alpha); B(x) = b0*p1 for x <= X_B and b0*(1-p1) after, with
    X_B = cos^2(beta).  Built so the classical moments coincide with the
    quantum expectations while the pointwise condition A <= B fails between
    X_B and X_A whenever the quantum side violates the moment inequality.
    """
    x_a = math.cos(params.alpha) ** 2
    x_b = math.cos(params.beta) ** 2
    return HiddenVariableModel(
        domain=(0.0, 1.0),
        density=constant(1.0, 0.0, 1.0),
        func_a=step_function(params.a0, 0.0, x_a, 0.0, 1.0),
        func_b=step_function(params.b0 * params.p1, params.b0 * (1.0 - params.p1), x_b, 0.0, 1.0),
    )


def classical_theorem_check(model: HiddenVariableModel) -> bool:
    """True iff dominance (when it holds) implies <A^2> <= <B^2> + 1e-10."""
    if not check_dominance(model).holds:
        return True
    _, m_a2, _, m_b2 = classical_moments(model)
    return m_a2 <= m_b2 + 1e-10


# --- model file format ------------------------------------------------------


def _pieces_to_list(f: PiecewisePolynomial) -> list[dict]:
    return [
        {"interval": [u, v], "coeffs": list(row)}
        for (u, v), row in zip(zip(f.breakpoints, f.breakpoints[1:]), f.coefficients)
    ]


def _pieces_from_list(entries, what: str) -> PiecewisePolynomial:
    if not entries:
        raise ValueError(f"{what}: at least one piece required")
    breaks = [float(entries[0]["interval"][0])]
    coeffs = []
    for entry in entries:
        u, v = (float(x) for x in entry["interval"])
        if abs(u - breaks[-1]) > 1e-12:
            raise ValueError(f"{what}: pieces must be contiguous")
        breaks.append(v)
        coeffs.append(tuple(float(c) for c in entry["coeffs"]))
    return PiecewisePolynomial(tuple(breaks), tuple(coeffs))


def model_to_dict(model: HiddenVariableModel) -> dict:
    return {
        "schema": SCHEMA,
        "domain": list(model.domain),
        "density": _pieces_to_list(model.density),
        "func_a": _pieces_to_list(model.func_a),
        "func_b": _pieces_to_list(model.func_b),
    }


def model_from_dict(data: dict) -> HiddenVariableModel:
    if data.get("schema") != SCHEMA:
        raise ValueError(f"unsupported model schema {data.get('schema')!r}, expected {SCHEMA!r}")
    unknown = set(data) - {"schema", "domain", "density", "func_a", "func_b"}
    if unknown:
        raise ValueError(f"unknown model keys: {sorted(unknown)}")
    lo, hi = (float(x) for x in data["domain"])
    return HiddenVariableModel(
        domain=(lo, hi),
        density=_pieces_from_list(data["density"], "density"),
        func_a=_pieces_from_list(data["func_a"], "func_a"),
        func_b=_pieces_from_list(data["func_b"], "func_b"),
    )


def load_model(path: str | Path) -> HiddenVariableModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(model: HiddenVariableModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")
