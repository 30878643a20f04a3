"""Rendering of results: aligned tables, JSON, CSV, and matplotlib figures.

JSON output is deterministic (sorted keys, no timestamps) so identical runs
produce byte-identical files; figures are rendered to PNG next to the
delimited output whenever an output directory is given.
"""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import AssembledQuantities, CharacterizationMetrics, EstimateWithUncertainty
from .lrt_models import DominanceReport, HiddenVariableModel
from .photon_sim import McaHistogram
from .test_core import QuantumPrediction, TestParameters

TABLE_COLUMNS = ("quantity", "value", "sigma_stat", "sigma_total", "qm_prediction")


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_table(rows: list[dict], columns=TABLE_COLUMNS) -> str:
    cells = [[_fmt(row.get(c)) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(r[i].ljust(w) for i, w in enumerate(widths)).rstrip() for r in cells]
    return "\n".join(lines) + "\n"


def render_csv(rows: list[dict], columns=TABLE_COLUMNS) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")
    return buf.getvalue()


def render_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def estimate_dict(est: EstimateWithUncertainty) -> dict:
    return {"value": est.value, "sigma_stat": est.sigma_stat, "sigma_total": est.sigma_total}


def params_dict(params: TestParameters) -> dict:
    return {
        "a0": params.a0,
        "b0": params.b0,
        "p1": params.p1,
        "p2": params.p2,
        "alpha_rad": params.alpha,
        "beta_rad": params.beta,
    }


def prediction_rows(pred: QuantumPrediction, params: TestParameters) -> list[dict]:
    rows = [
        {"quantity": "<A>", "value": pred.mean_A},
        {"quantity": "<A^2>", "value": pred.mean_A2},
        {"quantity": "<B>", "value": pred.mean_B},
        {"quantity": "<B^2>", "value": pred.mean_B2},
        {"quantity": "<B>-<A>", "value": pred.diff_first},
        {"quantity": "<B^2>-<A^2>", "value": pred.diff_second},
        {"quantity": "d_minus", "value": pred.d_minus},
        {"quantity": "p2", "value": params.p2},
    ]
    return rows


def measurement_rows(
    assembled: AssembledQuantities,
    prediction: QuantumPrediction,
    splitting_first: EstimateWithUncertainty | None,
    splitting_second: EstimateWithUncertainty | None,
    params: TestParameters,
    sig: float,
) -> list[dict]:
    def row(name, est, qm):
        return {
            "quantity": name,
            "value": est.value,
            "sigma_stat": est.sigma_stat,
            "sigma_total": est.sigma_total,
            "qm_prediction": qm,
        }

    rows = [
        row("E[<B>-<A>]", assembled.diff_first, prediction.diff_first),
        row("E[<B^2>-<A^2>]", assembled.diff_second, prediction.diff_second),
        row("E[<A>]", assembled.mean_A, prediction.mean_A),
        row("E[<A^2>]", assembled.mean_A2, prediction.mean_A2),
        row("E[<B>]", assembled.mean_B, prediction.mean_B),
        row("E[<B^2>]", assembled.mean_B2, prediction.mean_B2),
        row("d_minus_indirect", assembled.d_minus_indirect, prediction.d_minus),
    ]
    if splitting_first is not None:
        rows.append(row("E[p1]", splitting_first, params.p1))
    if splitting_second is not None:
        rows.append(row("E[p2]", splitting_second, params.p2))
    rows.append({"quantity": "significance", "value": sig})
    return rows


def characterization_rows(
    metrics: CharacterizationMetrics, ideal: dict[str, float], poisson: dict[str, float]
) -> list[dict]:
    def row(name, est, note):
        return {
            "quantity": name,
            "value": est.value,
            "sigma_stat": est.sigma_stat,
            "sigma_total": est.sigma_total,
            "qm_prediction": note,
        }

    return [
        row("gamma1", metrics.gamma1, ideal["gamma1"]),
        row("gamma2", metrics.gamma2, ideal["gamma2"]),
        row("gamma2/gamma1", metrics.gamma_ratio, poisson["gamma_ratio_smallmu"]),
        row("grangier_alpha", metrics.grangier_alpha, ideal["grangier_alpha"]),
    ]


def lrt_rows(moments: tuple[float, float, float, float], report: DominanceReport) -> list[dict]:
    m_a, m_a2, m_b, m_b2 = moments
    return [
        {"quantity": "<A>_cl", "value": m_a},
        {"quantity": "<A^2>_cl", "value": m_a2},
        {"quantity": "<B>_cl", "value": m_b},
        {"quantity": "<B^2>_cl", "value": m_b2},
        {"quantity": "<B>-<A>_cl", "value": m_b - m_a},
        {"quantity": "<B^2>-<A^2>_cl", "value": m_b2 - m_a2},
        {"quantity": "dominance_holds", "value": str(report.holds)},
        {
            "quantity": "violation_intervals",
            "value": "; ".join(f"({lo:.9f}, {hi:.9f})" for lo, hi in report.violation_intervals),
        },
    ]


# --- figures -----------------------------------------------------------------


def violation_scan_curve(params: TestParameters, resolution: int = 720):
    """(theta, <B^2>-<A^2>) samples over the pure-state circle."""
    thetas = np.arange(resolution) * (math.pi / resolution)
    ca = np.cos(params.alpha - thetas) ** 2
    cb = np.cos(params.beta - thetas) ** 2
    curve = params.b0**2 * (
        params.p1**2 * cb + (1.0 - params.p1) ** 2 * (1.0 - cb)
    ) - params.a0**2 * ca
    return thetas, curve


def violation_scan_figure(params: TestParameters, path: str | Path, resolution: int = 720) -> None:
    """<B^2>-<A^2> over the pure-state circle, violating arcs highlighted."""
    thetas, curve = violation_scan_curve(params, resolution)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(thetas, curve, lw=1.2, color="tab:blue")
    ax.fill_between(thetas, curve, 0.0, where=curve < 0, color="tab:red", alpha=0.3,
                    label="violation (<B^2> < <A^2>)")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("state angle theta (rad)")
    ax.set_ylabel("<B^2> - <A^2>")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mca_histogram_figure(hist: McaHistogram, path: str | Path) -> None:
    """Delay histogram with the coincidence peak window shaded."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.stairs(hist.bins, np.append(hist.bin_starts(), hist.range_ns), color="tab:blue")
    lo, hi = hist.peak_window
    ax.axvspan(lo, hi, color="tab:orange", alpha=0.25, label="peak window")
    ax.set_xlabel("delay (ns)")
    ax.set_ylabel("counts per bin")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def lrt_model_figure(model: HiddenVariableModel, report: DominanceReport, path: str | Path) -> None:
    """A(x), B(x), rho(x) with the dominance-violation intervals shaded."""
    lo, hi = model.domain
    xs = np.linspace(lo, hi, 1201)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(xs, model.func_a(xs), label="A(x)", color="tab:blue")
    ax.plot(xs, model.func_b(xs), label="B(x)", color="tab:green")
    ax.plot(xs, model.density(xs), label="rho(x)", color="0.5", ls="--", lw=0.9)
    for k, (a, b) in enumerate(report.violation_intervals):
        ax.axvspan(a, b, color="tab:red", alpha=0.25, label="A > B" if k == 0 else None)
    ax.set_xlabel("hidden variable x")
    ax.set_ylabel("value")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def measurement_figure(
    assembled: AssembledQuantities, prediction: QuantumPrediction, path: str | Path
) -> None:
    """Measured quantities with total-uncertainty bars against the predictions."""
    names = ["<A>", "<A^2>", "<B>", "<B^2>", "<B>-<A>", "<B^2>-<A^2>", "d_minus"]
    ests = [
        assembled.mean_A,
        assembled.mean_A2,
        assembled.mean_B,
        assembled.mean_B2,
        assembled.diff_first,
        assembled.diff_second,
        assembled.d_minus_indirect,
    ]
    qm = [
        prediction.mean_A,
        prediction.mean_A2,
        prediction.mean_B,
        prediction.mean_B2,
        prediction.diff_first,
        prediction.diff_second,
        prediction.d_minus,
    ]
    xs = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6.8, 3.8))
    ax.errorbar(
        xs - 0.08,
        [e.value for e in ests],
        yerr=[e.sigma_total for e in ests],
        fmt="o",
        ms=4,
        capsize=3,
        label="simulated measurement",
        color="tab:blue",
    )
    ax.scatter(xs + 0.08, qm, marker="x", color="tab:red", label="quantum prediction")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xticks(xs, names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("value")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
