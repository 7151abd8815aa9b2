"""Adversary scripts and honest-noise models.

Round execution exposes three interception points to the server side:
``after_prep`` (qubits received, nothing entangled yet), ``after_entangle``
and ``before_measure``. Scripted deviations pick a stage; honest noise
always acts at ``after_prep``.

The exact test-round failure computation relies on the physical effect of
Pauli errors, marginalized over the client's uniform secret angles:

- Z on a trap flips its measured outcome deterministically,
- X or Y on a trap flips it with probability exactly 1/2,
- X or Y on a dummy before entangling flips the parity seen by every
  neighbouring trap; applied later (or Z at any time) it does nothing.

A deviation whose only effect is flipping a reported outcome (the
single-qubit attack family used by the failure-probability analysis) is a
physical Z just before that measurement, or equivalently a classical lie.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .pattern import MeasurementPattern

STAGES = ("after_prep", "after_entangle", "before_measure")
ACTIONS = ("pauli", "unitary", "measure_wrong_angle", "lie_outcome")

__all__ = [
    "STAGES",
    "ACTIONS",
    "ScriptError",
    "UnsupportedModelError",
    "Directive",
    "AttackScript",
    "NoiseModel",
    "EmAttack",
    "Adversary",
    "instantiate_noise",
    "trap_failure_probability",
    "trap_failure_by_colour",
    "em_attack_build",
    "parse_noise",
    "format_noise",
    "parse_attack",
    "format_attack",
]


class ScriptError(ValueError):
    """Malformed attack script or directive that cannot be executed."""


class UnsupportedModelError(ValueError):
    """Noise model outside the Pauli-channel family."""


@dataclass(frozen=True)
class Directive:
    """One scripted deviation: what to do, where, and when.

    `param` is a Pauli letter, a 2x2 unitary, or an angle offset depending
    on the action. `when` optionally conditions the action on outcomes
    already produced in the same round (vertex -> bit).
    """

    vertex: int
    action: str
    param: object = None
    stage: str = "before_measure"
    when: tuple = ()

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ScriptError(f"unknown action {self.action!r}")
        if self.stage not in STAGES:
            raise ScriptError(f"unknown stage {self.stage!r}")
        if self.action == "pauli" and self.param not in ("I", "X", "Y", "Z"):
            raise ScriptError(f"bad Pauli {self.param!r}")
        if self.action == "measure_wrong_angle" and self.param not in range(8):
            raise ScriptError("angle offset must be an integer in 0..7")
        if self.action == "unitary":
            matrix = np.asarray(self.param, dtype=complex)
            if matrix.shape != (2, 2) or not np.allclose(
                    matrix @ matrix.conj().T, np.eye(2), atol=1e-10):
                raise ScriptError("unitary actions need a 2x2 unitary matrix")
        if self.action in ("measure_wrong_angle", "lie_outcome") \
                and self.stage != "before_measure":
            raise ScriptError(f"{self.action} only makes sense before a measurement")

    def applies(self, outcomes: dict) -> bool:
        return all(outcomes.get(v) == b for v, b in self.when)


@dataclass(frozen=True)
class AttackScript:
    """Per-round deviation directives.

    With selection_mode "uniformly_random_vertex" the directive vertices
    are redrawn uniformly at execution time, one per directive.
    """

    directives: dict  # round index -> tuple of Directive
    selection_mode: str = "fixed"

    def __post_init__(self):
        if self.selection_mode not in ("fixed", "uniformly_random_vertex"):
            raise ScriptError(f"unknown selection mode {self.selection_mode!r}")

    def for_round(self, j: int) -> tuple:
        return self.directives.get(j, ())


@dataclass(frozen=True)
class NoiseModel:
    """Pauli noise on the qubits of each round, applied before entangling.

    kind "none": noiseless. kind "per_qubit_pauli": independent
    (px, py, pz) on every qubit. kind "per_round_channel": per-vertex
    probabilities, optionally overridden per round (a schedule).
    """

    kind: str = "none"
    px: float = 0.0
    py: float = 0.0
    pz: float = 0.0
    per_vertex: dict = field(default_factory=dict)   # vertex -> (px, py, pz)
    schedule: dict = field(default_factory=dict)     # round -> {vertex: (px, py, pz)}

    def __post_init__(self):
        if self.kind not in ("none", "per_qubit_pauli", "per_round_channel"):
            raise UnsupportedModelError(f"unknown noise kind {self.kind!r}")
        probs = [(self.px, self.py, self.pz)]
        probs += list(self.per_vertex.values())
        for sched in self.schedule.values():
            probs += list(sched.values())
        for px, py, pz in probs:
            if min(px, py, pz) < 0 or px + py + pz > 1 + 1e-12:
                raise UnsupportedModelError("Pauli probabilities must be in [0,1] "
                                            "and sum to at most 1 per qubit")

    @property
    def round_dependence(self) -> str:
        return "schedule" if self.schedule else "fixed"

    def probs_for(self, round_index: int, vertex: int) -> tuple:
        if self.kind == "none":
            return (0.0, 0.0, 0.0)
        if self.kind == "per_qubit_pauli":
            return (self.px, self.py, self.pz)
        if round_index in self.schedule and vertex in self.schedule[round_index]:
            return self.schedule[round_index][vertex]
        return self.per_vertex.get(vertex, (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class EmAttack:
    """Attack family with one single-qubit deviation in each of m distinct rounds."""

    m: int
    pauli: str = "Z"


@dataclass(frozen=True)
class Adversary:
    """Everything injected server-side: noise, scripted deviations, redo policy.

    `redo_policy(round_index, attempt)` is consulted once per attempt after
    entangling; returning True makes the server request a restart of the
    round. Cross-round entangled deviations are out of scope: every
    directive acts within its own round (classical correlations across
    rounds are allowed through the script itself).
    """

    noise: NoiseModel | None = None
    script: AttackScript | None = None
    redo_policy: object = None

    @classmethod
    def honest(cls) -> "Adversary":
        return cls()


def redo_first_attempts(count: int = 1):
    """Redo policy restarting the first `count` attempts of every round.

    Policies are called at each server decision point as
    ``policy(round_index, attempt, stage, measured)`` with stage
    "entangle" (before acknowledging) or "measure" (before answering an
    instruction, `measured` outcomes already returned); returning True
    sends a restart request.
    """
    def policy(round_index, attempt, stage, measured):
        return stage == "entangle" and attempt < count
    return policy


def instantiate_noise(model: NoiseModel, round_index: int, rng, vertices=None):
    """Sample the Pauli fault pattern of one round: a list of (vertex, pauli).

    Sampling is independent per qubit and per round; identity draws are
    omitted from the result.
    """
    if model is None or model.kind == "none":
        return []
    if model.kind == "per_round_channel" and vertices is None:
        vertices = sorted(model.per_vertex)
    if vertices is None:
        raise UnsupportedModelError("per_qubit_pauli needs the vertex list")
    vertices = list(vertices)
    draws = rng.random(size=len(vertices))
    faults = []
    for u, v in zip(draws, vertices):
        px, py, pz = model.probs_for(round_index, v)
        if u < px:
            faults.append((v, "X"))
        elif u < px + py:
            faults.append((v, "Y"))
        elif u < px + py + pz:
            faults.append((v, "Z"))
    return faults


_SUBSET_CAP = 2 ** 16


def _colour_failure(model: NoiseModel, pattern: MeasurementPattern,
                    colour: int, round_index: int) -> float:
    nbrs = pattern.graph.neighbor_map()
    traps = sorted(pattern.coloring.classes[colour])
    dummies = [v for v in range(pattern.graph.vertex_count)
               if v not in pattern.coloring.classes[colour]]
    flip = {}
    for u in dummies:
        px, py, _ = model.probs_for(round_index, u)
        f = px + py
        if f > 0.0 and any(t in nbrs[u] for t in traps):
            flip[u] = f
    relevant = sorted(flip)
    if 2 ** len(relevant) > _SUBSET_CAP:
        raise UnsupportedModelError(
            f"{len(relevant)} noisy dummies exceed the exact-enumeration cap")
    ok_total = 0.0
    for size in range(len(relevant) + 1):
        for subset in combinations(relevant, size):
            weight = 1.0
            chosen = set(subset)
            for u in relevant:
                weight *= flip[u] if u in chosen else 1.0 - flip[u]
            ok = weight
            for t in traps:
                px, py, pz = model.probs_for(round_index, t)
                xy, ident = px + py, 1.0 - px - py - pz
                parity = sum(1 for u in chosen if u in nbrs[t]) & 1
                ok *= xy * 0.5 + (pz if parity else ident)
            ok_total += ok
    return 1.0 - ok_total


def trap_failure_by_colour(model: NoiseModel, pattern: MeasurementPattern,
                           round_index: int = 0) -> dict:
    """Exact per-colour probability that a test round fails under the model."""
    if model is None or model.kind == "none":
        return {i: 0.0 for i in range(pattern.k)}
    if model.kind not in ("per_qubit_pauli", "per_round_channel"):
        raise UnsupportedModelError(f"cannot compute exactly for kind {model.kind!r}")
    return {i: _colour_failure(model, pattern, i, round_index)
            for i in range(pattern.k)}


def trap_failure_probability(model: NoiseModel, pattern: MeasurementPattern,
                             colour: int | None = None, round_index: int = 0):
    """Exact test-round failure probability.

    For a given colour this is the probability that at least one trap of
    that class misses its expected outcome. With colour unspecified the
    (min, max) over colours is returned; the uniform-colour marginal is
    their average when all classes agree and lies between them otherwise.
    """
    by_colour = trap_failure_by_colour(model, pattern, round_index)
    if colour is not None:
        if colour not in by_colour:
            raise ScriptError(f"colour {colour} out of range")
        return by_colour[colour]
    values = list(by_colour.values())
    return (min(values), max(values))


def trap_failure_mean(model: NoiseModel, pattern: MeasurementPattern,
                      round_index: int = 0) -> float:
    """Failure probability of a test round with the colour drawn uniformly."""
    by_colour = trap_failure_by_colour(model, pattern, round_index)
    return sum(by_colour.values()) / len(by_colour)


def em_attack_build(m: int, params, pattern: MeasurementPattern,
                    pauli: str = "Z", rng=None) -> AttackScript:
    """Build the m-round single-deviation script.

    The first m rounds are attacked (the failure bound is invariant under
    permuting rounds, and the round partition is secret anyway); each gets
    one uniformly drawn vertex carrying a fixed Pauli right before its
    measurement.
    """
    n = params.n if hasattr(params, "n") else int(params)
    if not 0 <= m <= n:
        raise ScriptError(f"m={m} outside 0..{n}")
    if rng is None:
        raise ScriptError("em_attack_build needs an rng for the vertex draws")
    count = pattern.graph.vertex_count
    verts = rng.integers(0, count, size=m) if m else []
    directives = {
        j: (Directive(int(verts[j]), "pauli", pauli, "before_measure"),)
        for j in range(m)
    }
    return AttackScript(directives)


# --- spec files ----------------------------------------------------------------

def parse_noise(text: str) -> NoiseModel:
    """Parse the versioned noise file format.

    ::

        version 1
        kind pauli            # none | pauli | channel
        px 0.05
        py 0.0
        pz 0.1
        vertex 0 0.1 0.0 0.0  # channel kind: per-vertex probabilities
        round 3 0 0.2 0.0 0.0 # optional schedule override: round vertex px py pz
    """
    version = None
    kind = None
    px = py = pz = 0.0
    per_vertex = {}
    schedule = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        key, args = fields[0], fields[1:]
        try:
            if key == "version":
                version = int(args[0])
            elif key == "kind":
                kind = args[0]
            elif key in ("px", "py", "pz"):
                value = float(args[0])
                if key == "px":
                    px = value
                elif key == "py":
                    py = value
                else:
                    pz = value
            elif key == "vertex":
                per_vertex[int(args[0])] = (float(args[1]), float(args[2]), float(args[3]))
            elif key == "round":
                j, v = int(args[0]), int(args[1])
                schedule.setdefault(j, {})[v] = (float(args[2]), float(args[3]),
                                                 float(args[4]))
            else:
                raise UnsupportedModelError(f"line {lineno}: unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, UnsupportedModelError):
                raise
            raise UnsupportedModelError(f"line {lineno}: malformed {key!r} line") from exc
    if version != 1:
        raise UnsupportedModelError("missing or unsupported noise file version")
    if kind in (None, "none"):
        return NoiseModel("none")
    if kind == "pauli":
        return NoiseModel("per_qubit_pauli", px=px, py=py, pz=pz)
    if kind == "channel":
        return NoiseModel("per_round_channel", per_vertex=per_vertex, schedule=schedule)
    raise UnsupportedModelError(f"unknown noise kind {kind!r}")


def format_noise(model: NoiseModel) -> str:
    lines = ["version 1"]
    if model.kind == "none":
        lines.append("kind none")
    elif model.kind == "per_qubit_pauli":
        lines += ["kind pauli", f"px {model.px!r}", f"py {model.py!r}", f"pz {model.pz!r}"]
    else:
        lines.append("kind channel")
        for v in sorted(model.per_vertex):
            px, py, pz = model.per_vertex[v]
            lines.append(f"vertex {v} {px!r} {py!r} {pz!r}")
        for j in sorted(model.schedule):
            for v in sorted(model.schedule[j]):
                px, py, pz = model.schedule[j][v]
                lines.append(f"round {j} {v} {px!r} {py!r} {pz!r}")
    return "\n".join(lines) + "\n"


def parse_attack(text: str) -> AttackScript:
    """Parse the versioned attack file format.

    ::

        version 1
        selection fixed
        attack 2 0 pauli Z before_measure
        attack 3 1 lie_outcome
        attack 4 0 measure_wrong_angle 4
    """
    version = None
    selection = "fixed"
    directives = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        key, args = fields[0], fields[1:]
        try:
            if key == "version":
                version = int(args[0])
            elif key == "selection":
                selection = args[0]
            elif key == "attack":
                j, v, action = int(args[0]), int(args[1]), args[2]
                param = None
                stage = "before_measure"
                rest = args[3:]
                if action == "pauli":
                    param = rest[0]
                    rest = rest[1:]
                elif action == "measure_wrong_angle":
                    param = int(rest[0])
                    rest = rest[1:]
                if rest:
                    stage = rest[0]
                directives.setdefault(j, []).append(Directive(v, action, param, stage))
            else:
                raise ScriptError(f"line {lineno}: unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ScriptError):
                raise
            raise ScriptError(f"line {lineno}: malformed {key!r} line") from exc
    if version != 1:
        raise ScriptError("missing or unsupported attack file version")
    return AttackScript({j: tuple(ds) for j, ds in directives.items()}, selection)


def format_attack(script: AttackScript) -> str:
    lines = ["version 1", f"selection {script.selection_mode}"]
    for j in sorted(script.directives):
        for d in script.directives[j]:
            if d.action == "pauli":
                lines.append(f"attack {j} {d.vertex} pauli {d.param} {d.stage}")
            elif d.action == "measure_wrong_angle":
                lines.append(f"attack {j} {d.vertex} measure_wrong_angle {d.param} {d.stage}")
            elif d.action == "lie_outcome":
                lines.append(f"attack {j} {d.vertex} lie_outcome {d.stage}")
            else:
                raise ScriptError("unitary actions are in-process only")
    return "\n".join(lines) + "\n"
