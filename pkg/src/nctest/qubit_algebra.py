"""Exact linear algebra on a single qubit: states, projectors, observables.

Everything here is closed-form 2x2 complex arithmetic; the only numerical
noise is double-precision rounding, so validation tolerances are tight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HERMITICITY_ATOL = 1e-12


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
    return m


def _check_hermitian(m: np.ndarray, what: str) -> None:
    if not np.all(np.abs(m - m.conj().T) <= HERMITICITY_ATOL):
        raise ValueError(f"{what} is not Hermitian within {HERMITICITY_ATOL}")


def _freeze(m: np.ndarray) -> np.ndarray:
    m = m.copy()
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class QubitState:
    """Density matrix of a single qubit (Hermitian, unit trace, PSD)."""

    rho: np.ndarray

    def __post_init__(self):
        rho = _as_matrix(self.rho)
        _check_hermitian(rho, "density matrix")
        if abs(np.trace(rho).real - 1.0) > 1e-12:
            raise ValueError("density matrix trace differs from 1 by more than 1e-12")
        evals = np.linalg.eigvalsh(rho)
        if evals[0] < -1e-12:
            raise ValueError(f"density matrix has negative eigenvalue {evals[0]}")
        object.__setattr__(self, "rho", _freeze(rho))


@dataclass(frozen=True)
class QubitObservable:
    """Hermitian 2x2 observable."""

    m: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.m)
        _check_hermitian(m, "observable")
        object.__setattr__(self, "m", _freeze(m))


def _projection_matrix(theta: float) -> np.ndarray:
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta}")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)


def pure_state(theta: float) -> QubitState:
    """Pure state cos(theta)|H> + sin(theta)|V> as a density matrix."""
    return QubitState(_projection_matrix(theta))


def projector(theta: float) -> QubitObservable:
    """Rank-1 projector onto the linear-polarization state at angle theta."""
    return QubitObservable(_projection_matrix(theta))


def identity() -> QubitObservable:
    return QubitObservable(np.eye(2, dtype=complex))


def expectation(obs: QubitObservable, state: QubitState) -> float:
    """Tr(obs . rho), guaranteed real up to rounding noise."""
    value = np.trace(obs.m @ state.rho)
    if abs(value.imag) > 1e-12:
        raise ValueError(f"expectation has imaginary residue {value.imag}")
    return float(value.real)


def eigenvalues(obs: QubitObservable) -> tuple[float, float]:
    """Exact eigenvalues of a Hermitian 2x2 matrix, ascending.

    Uses the closed form mean +/- sqrt(((a-d)/2)^2 + |b|^2) instead of an
    iterative solver, so the result is reproducible to the last bit.
    """
    m = obs.m
    a, d = m[0, 0].real, m[1, 1].real
    mean = 0.5 * (a + d)
    radius = math.hypot(0.5 * (a - d), abs(m[0, 1]))
    return (mean - radius, mean + radius)


def obs_combine(terms: list[tuple[float, QubitObservable]]) -> QubitObservable:
    """Real linear combination sum_k c_k * O_k."""
    total = np.zeros((2, 2), dtype=complex)
    for coeff, obs in terms:
        if not math.isfinite(coeff):
            raise ValueError(f"coefficient must be finite, got {coeff}")
        total += coeff * obs.m
    return QubitObservable(total)


def obs_multiply(a: QubitObservable, b: QubitObservable) -> np.ndarray:
    """Matrix product a.m @ b.m (not Hermitian in general, hence a raw array)."""
    return a.m @ b.m
