"""Client-side secrets and angle arithmetic for blind delegation.

Everything here works on integer angle indices mod 8 (units of pi/4) so
that hiding and verification are exact. A half turn is 4 units.

Secret draw order is canonical and documented, because transcripts must be
reproducible from a seed: computation rounds draw all thetas (measurement
order), then all r bits; test rounds draw the trap colour, then thetas and
r bits for the traps, then dummy values, each in measurement order.
"""

from __future__ import annotations

from dataclasses import dataclass

from .pattern import MeasurementPattern, Graph

HALF_TURN = 4  # pi in k-units

__all__ = [
    "HALF_TURN",
    "ProtocolOrderError",
    "RoundSecrets",
    "sample_secrets",
    "corrected_phi",
    "delta_computation",
    "delta_test",
    "decode_outcome",
    "trap_expected",
]


class ProtocolOrderError(RuntimeError):
    """An angle was requested before its dependencies were measured."""


@dataclass(frozen=True)
class RoundSecrets:
    """Secrets of a single round.

    Computation rounds have a theta and an r bit per vertex plus the input
    bits; test rounds split the vertices into the trap colour class (theta
    and r) and dummies (a secret bit each).
    """

    kind: str  # "computation" | "test"
    thetas: dict
    r_bits: dict
    dummies: dict
    trap_color: int | None = None
    input_bits: tuple | None = None

    def is_dummy(self, v: int) -> bool:
        return v in self.dummies


def sample_secrets(round_kind: str, pattern: MeasurementPattern, rng,
                   input_bits=None) -> RoundSecrets:
    """Draw fresh secrets for one round of the given kind."""
    order = pattern.graph.ordering
    if round_kind == "computation":
        if input_bits is None:
            input_bits = (0,) * len(pattern.inputs)
        if len(input_bits) != len(pattern.inputs):
            raise ValueError("input_bits length must match the input set")
        thetas = rng.integers(0, 8, size=len(order))
        rbits = rng.integers(0, 2, size=len(order))
        return RoundSecrets(
            "computation",
            thetas=dict(zip(order, map(int, thetas))),
            r_bits=dict(zip(order, map(int, rbits))),
            dummies={},
            input_bits=tuple(int(b) for b in input_bits),
        )
    if round_kind == "test":
        colour = int(rng.integers(0, pattern.k))
        trap_class = pattern.coloring.classes[colour]
        traps = [v for v in order if v in trap_class]
        dummies = [v for v in order if v not in trap_class]
        thetas = rng.integers(0, 8, size=len(traps))
        rbits = rng.integers(0, 2, size=len(traps))
        dvals = rng.integers(0, 2, size=len(dummies)) if dummies else []
        return RoundSecrets(
            "test",
            thetas=dict(zip(traps, map(int, thetas))),
            r_bits=dict(zip(traps, map(int, rbits))),
            dummies=dict(zip(dummies, map(int, dvals))),
            trap_color=colour,
        )
    raise ValueError(f"unknown round kind {round_kind!r}")


def corrected_phi(v: int, pattern: MeasurementPattern, outcomes: dict) -> int:
    """Flow-corrected base angle of v given the decoded outcomes so far."""
    s_x = 0
    for u in pattern.deps.x_deps[v]:
        if u not in outcomes:
            raise ProtocolOrderError(f"vertex {v} needs the outcome of {u} first")
        s_x ^= outcomes[u]
    s_z = 0
    for u in pattern.deps.z_deps[v]:
        if u not in outcomes:
            raise ProtocolOrderError(f"vertex {v} needs the outcome of {u} first")
        s_z ^= outcomes[u]
    phi = pattern.angles[v]
    return ((-phi if s_x else phi) + s_z * HALF_TURN) % 8


def delta_computation(v: int, secrets: RoundSecrets, pattern: MeasurementPattern,
                      outcomes: dict) -> int:
    """Measurement angle sent for v in a computation round."""
    if secrets.is_dummy(v):
        raise ValueError(f"vertex {v} is a dummy; computation rounds have none")
    phi = corrected_phi(v, pattern, outcomes)
    theta = secrets.thetas[v]
    if v in pattern.inputs:
        x = secrets.input_bits[sorted(pattern.inputs).index(v)]
        theta = (theta + x * HALF_TURN) % 8
    return (phi + theta + secrets.r_bits[v] * HALF_TURN) % 8


def delta_test(v: int, secrets: RoundSecrets, rng) -> int:
    """Measurement angle sent for v in a test round.

    Traps are read out in their own padded basis; dummies get a fresh
    uniform angle drawn at send time (the caller logs it).
    """
    if secrets.is_dummy(v):
        return int(rng.integers(0, 8))
    return (secrets.thetas[v] + secrets.r_bits[v] * HALF_TURN) % 8


def decode_outcome(v: int, b: int, secrets: RoundSecrets) -> int:
    """Remove the one-time pad from a reported outcome."""
    if secrets.is_dummy(v):
        raise ValueError(f"vertex {v} is a dummy and carries no r bit")
    return b ^ secrets.r_bits[v]


def trap_expected(v: int, secrets: RoundSecrets, graph: Graph) -> int:
    """Expected raw outcome of trap v: r_v xor the parity of neighbouring dummies."""
    if secrets.kind != "test" or secrets.is_dummy(v):
        raise ValueError(f"vertex {v} is not a trap")
    parity = secrets.r_bits[v]
    for u in graph.neighbors(v):
        parity ^= secrets.dummies[u]
    return parity
