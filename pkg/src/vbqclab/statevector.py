"""Dense pure-state simulator for the qubit register of one round.

Qubits are addressed by protocol vertex. Measurements are destructive:
measuring a vertex removes it from the register, matching a protocol in
which every qubit is measured exactly once. Angles arrive as integers k
(meaning k*pi/4) and are converted to phases only here.

Registers up to `_LIST_CAP` amplitudes run on plain Python lists, which is
substantially faster than numpy dispatch at desk scale; larger registers
switch to vectorized numpy transparently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Q_MAX = 20
NORM_TOL = 1e-10
_PROB_CLAMP = 1e-12
_LIST_CAP = 256  # amplitudes; beyond this the numpy path takes over

# phase table for the eight allowed angles
_EXP_POS = tuple(complex(np.exp(1j * k * math.pi / 4)) for k in range(8))
_EXP_NEG = tuple(z.conjugate() for z in _EXP_POS)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

__all__ = [
    "Q_MAX",
    "PAULIS",
    "StateError",
    "CapacityError",
    "PrepSpec",
    "PureState",
    "prepare",
    "apply_cz",
    "apply_pauli",
    "apply_unitary",
    "measure_angle",
]


class StateError(ValueError):
    """Operation on a dead or unknown vertex, or a malformed state."""


class CapacityError(RuntimeError):
    """Register would exceed the configured qubit cap."""


@dataclass(frozen=True)
class PrepSpec:
    """Preparation of one qubit: an equatorial |+_theta> or a dummy |d>."""

    kind: str  # "plus_theta" | "dummy"
    value: int

    def __post_init__(self):
        if self.kind == "plus_theta":
            if not 0 <= self.value < 8:
                raise StateError(f"theta index {self.value} outside 0..7")
        elif self.kind == "dummy":
            if self.value not in (0, 1):
                raise StateError(f"dummy value {self.value} is not a bit")
        else:
            raise StateError(f"unknown preparation kind {self.kind!r}")

    @classmethod
    def plus_theta(cls, k: int) -> "PrepSpec":
        return cls("plus_theta", k)

    @classmethod
    def dummy(cls, d: int) -> "PrepSpec":
        return cls("dummy", d)

    def local_pair(self):
        if self.kind == "dummy":
            return (1.0 + 0j, 0j) if self.value == 0 else (0j, 1.0 + 0j)
        return (_INV_SQRT2 + 0j, _INV_SQRT2 * _EXP_POS[self.value])


class PureState:
    """Statevector over the live qubits, with a vertex -> axis map."""

    __slots__ = ("_amps", "axes")

    def __init__(self, amps, axes: dict):
        self._amps = amps
        self.axes = axes

    @property
    def amplitudes(self) -> np.ndarray:
        return np.asarray(self._amps, dtype=complex)

    @property
    def qubit_count(self) -> int:
        return len(self.axes)

    def live_vertices(self):
        return set(self.axes)

    def norm(self) -> float:
        if isinstance(self._amps, list):
            return math.sqrt(sum((a * a.conjugate()).real for a in self._amps))
        return float(np.linalg.norm(self._amps))

    def assert_normalized(self, tol: float = NORM_TOL) -> None:
        if abs(self.norm() - 1.0) > tol:
            raise StateError(f"state norm {self.norm()} departs from 1 beyond {tol}")

    def _shift(self, vertex: int) -> int:
        try:
            axis = self.axes[vertex]
        except KeyError:
            raise StateError(f"vertex {vertex} is not live") from None
        return len(self.axes) - 1 - axis

    def dump(self) -> str:
        """Text dump of amplitudes, for debugging and fixtures."""
        order = sorted(self.axes, key=self.axes.get)
        lines = ["qubits " + " ".join(str(v) for v in order)]
        for idx, amp in enumerate(self.amplitudes.reshape(-1)):
            bits = format(idx, f"0{self.qubit_count}b")
            lines.append(f"|{bits}> {amp.real:+.12f} {amp.imag:+.12f}")
        return "\n".join(lines)


def prepare(specs, q_max: int = Q_MAX) -> PureState:
    """Build the product state for a list of (vertex, PrepSpec) pairs."""
    specs = list(specs)
    if not specs:
        raise StateError("cannot prepare an empty register")
    if len(specs) > q_max:
        raise CapacityError(f"{len(specs)} qubits exceed the cap of {q_max}")
    amps = [1.0 + 0j]
    axes = {}
    for i, (vertex, spec) in enumerate(specs):
        if vertex in axes:
            raise StateError(f"vertex {vertex} prepared twice")
        lo, hi = spec.local_pair()
        amps = [a * l for a in amps for l in (lo, hi)]
        axes[vertex] = i
    if len(amps) > _LIST_CAP:
        amps = np.asarray(amps, dtype=complex)
    state = PureState(amps, axes)
    state.assert_normalized()
    return state


def apply_cz(state: PureState, edge) -> PureState:
    """Negate the amplitude of every basis state with both qubits set."""
    u, v = edge
    mask = (1 << state._shift(u)) | (1 << state._shift(v))
    amps = state._amps
    if isinstance(amps, list):
        for i in range(len(amps)):
            if i & mask == mask:
                amps[i] = -amps[i]
    else:
        idx = np.arange(amps.size)
        state._amps = np.where((idx & mask) == mask, -amps, amps)
    return state


def apply_unitary(state: PureState, vertex: int, matrix,
                  check: bool = True) -> PureState:
    """Apply a single-qubit unitary to the given vertex."""
    matrix = np.asarray(matrix, dtype=complex)
    if check and not np.allclose(matrix @ matrix.conj().T, np.eye(2), atol=NORM_TOL):
        raise StateError("matrix is not unitary within 1e-10")
    shift = state._shift(vertex)
    step = 1 << shift
    amps = state._amps
    m00, m01 = complex(matrix[0, 0]), complex(matrix[0, 1])
    m10, m11 = complex(matrix[1, 0]), complex(matrix[1, 1])
    if isinstance(amps, list):
        for i in range(len(amps)):
            if i & step:
                continue
            j = i | step
            lo, hi = amps[i], amps[j]
            amps[i] = m00 * lo + m01 * hi
            amps[j] = m10 * lo + m11 * hi
    else:
        idx = np.arange(amps.size)
        low = idx[(idx & step) == 0]
        lo, hi = amps[low], amps[low | step]
        out = amps.copy()
        out[low] = m00 * lo + m01 * hi
        out[low | step] = m10 * lo + m11 * hi
        state._amps = out
    return state


def apply_pauli(state: PureState, vertex: int, pauli: str) -> PureState:
    if pauli == "I":
        return state
    if pauli not in PAULIS:
        raise StateError(f"unknown Pauli {pauli!r}")
    return apply_unitary(state, vertex, PAULIS[pauli], check=False)


def measure_angle(state: PureState, vertex: int, delta: int, rng):
    """Destructively measure `vertex` in the delta-basis (delta = k*pi/4 units).

    Outcome 0 corresponds to the |+_delta> eigenstate. Returns the outcome
    bit and the collapsed, renormalized state over the remaining qubits.
    The Born sample uses a single uniform draw against the outcome-0
    probability.
    """
    shift = state._shift(vertex)
    step = 1 << shift
    phase = _EXP_NEG[delta % 8]
    amps = state._amps
    if isinstance(amps, list):
        branch0 = []
        pairs = []
        for i in range(len(amps)):
            if i & step:
                continue
            lo, hi = amps[i], amps[i | step]
            pairs.append((lo, hi))
            branch0.append((lo + phase * hi) * _INV_SQRT2)
        p0 = sum((a * a.conjugate()).real for a in branch0)
    else:
        idx = np.arange(amps.size)
        low = idx[(idx & step) == 0]
        lo, hi = amps[low], amps[low | step]
        branch0 = (lo + phase * hi) * _INV_SQRT2
        p0 = float(np.vdot(branch0, branch0).real)
    if p0 < _PROB_CLAMP:
        p0 = 0.0
    elif p0 > 1.0 - _PROB_CLAMP:
        p0 = 1.0
    outcome = 0 if rng.random() < p0 else 1
    if outcome == 0:
        branch, p = branch0, p0
    else:
        if isinstance(amps, list):
            branch = [(lo - phase * hi) * _INV_SQRT2 for lo, hi in pairs]
        else:
            branch = (lo - phase * hi) * _INV_SQRT2
        p = 1.0 - p0
    if p <= 0.0:
        raise StateError("collapsed onto a zero-probability branch")
    scale = 1.0 / math.sqrt(p)
    if isinstance(amps, list):
        collapsed_amps = [a * scale for a in branch]
    else:
        collapsed_amps = branch * scale
    axis = state.axes[vertex]
    new_axes = {}
    for w, a in state.axes.items():
        if w == vertex:
            continue
        new_axes[w] = a if a < axis else a - 1
    return outcome, PureState(collapsed_amps, new_axes)
