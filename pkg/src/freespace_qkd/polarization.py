"""Jones-vector polarization states and the retarders used by the link.

States are normalized two-component complex vectors in the (H, V) basis.
Right-circular light is ``(1, -i)/sqrt(2)``; with that choice a quarter-wave
retarder whose fast axis sits at 45 degrees maps H to RCP and RCP to V, which
is what both the transmitter's Pockels cell and the receiver's short path do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_NORM_TOL = 1e-12
_SAME_STATE_TOL = 1e-10

# Fast axis shared by the Pockels cell and the short-path retarder.
QUARTER_WAVE_AXIS = math.pi / 4


@dataclass(frozen=True)
class PolarizationState:
    amp_h: complex
    amp_v: complex

    def __post_init__(self) -> None:
        norm = abs(self.amp_h) ** 2 + abs(self.amp_v) ** 2
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"polarization state is not normalized (|a|^2 = {norm!r})")

    @classmethod
    def from_vector(cls, vec) -> "PolarizationState":
        """Build a state from any 2-vector, normalizing it."""
        v = np.asarray(vec, dtype=complex)
        n = np.linalg.norm(v)
        if v.shape != (2,) or n == 0:
            raise ValueError("expected a nonzero 2-component vector")
        v = v / n
        return cls(complex(v[0]), complex(v[1]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_h, self.amp_v], dtype=complex)

    def norm(self) -> float:
        return math.sqrt(abs(self.amp_h) ** 2 + abs(self.amp_v) ** 2)

    def same_as(self, other: "PolarizationState") -> bool:
        """Equality up to a global phase."""
        return projection_probability(self, other) > 1.0 - _SAME_STATE_TOL


_S = 1 / math.sqrt(2)
_STATES = {
    "H": PolarizationState(1 + 0j, 0j),
    "V": PolarizationState(0j, 1 + 0j),
    "RCP": PolarizationState(_S + 0j, -1j * _S),
    "LCP": PolarizationState(_S + 0j, 1j * _S),
}


def state_of(label: str) -> PolarizationState:
    try:
        return _STATES[label.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown polarization label {label!r}; expected one of {sorted(_STATES)}") from None


H = _STATES["H"]
V = _STATES["V"]
RCP = _STATES["RCP"]
LCP = _STATES["LCP"]


@dataclass(frozen=True)
class Retarder:
    """Linear retarder: ``retardance`` in waves, fast axis angle in radians from horizontal."""

    retardance: float
    fast_axis_angle: float = 0.0

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.fast_axis_angle), math.sin(self.fast_axis_angle)
        rot = np.array([[c, s], [-s, c]])
        phase = np.diag([1.0, np.exp(2j * math.pi * self.retardance)])
        return rot.T @ phase @ rot


ZERO_WAVE = Retarder(0.0, 0.0)
QUARTER_WAVE = Retarder(0.25, QUARTER_WAVE_AXIS)
HALF_WAVE = Retarder(0.5, QUARTER_WAVE_AXIS)


def apply_retarder(s: PolarizationState, r: Retarder) -> PolarizationState:
    out = r.matrix() @ s.vector
    # the matrix is unitary; renormalizing only strips float drift
    return PolarizationState.from_vector(out)


def projection_probability(s: PolarizationState, analyzer: PolarizationState) -> float:
    amp = np.vdot(analyzer.vector, s.vector)
    return float(min(1.0, abs(amp) ** 2))


def pbs_probabilities(s: PolarizationState) -> tuple[float, float]:
    """(transmit, reflect) probabilities at a PBS that passes horizontal light."""
    return abs(s.amp_h) ** 2, abs(s.amp_v) ** 2
