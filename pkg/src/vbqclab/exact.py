"""Exact arithmetic and exact enumeration oracles for tiny instances.

All amplitudes that appear in rounds built from eighth-turn angles live in
the field generated by zeta = exp(i*pi/4) over the rationals (note that
sqrt(2) = zeta - zeta^3). Working in that field makes blindness and trap
identities checkable with *exact* equality: a total-variation distance is
zero, not merely small.

States are kept unnormalized through measurement branches; the probability
of a full outcome path is the squared magnitude of the final scalar, which
is again an exact field element of the form a + b*sqrt(2).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .pattern import MeasurementPattern
from .ubqc import HALF_TURN

__all__ = [
    "EnumerationCapacityError",
    "Cyc8",
    "ExactState",
    "enumerate_round",
    "ExactRoundDistribution",
    "trap_check_exact",
    "TrapCheck",
]

_ZERO = Fraction(0)
_ONE = Fraction(1)


class EnumerationCapacityError(RuntimeError):
    """The requested enumeration exceeds the configured size cap."""


class Cyc8:
    """Element a0 + a1*z + a2*z^2 + a3*z^3 with z = exp(i*pi/4), z^4 = -1."""

    __slots__ = ("c",)

    def __init__(self, a0=0, a1=0, a2=0, a3=0):
        self.c = (Fraction(a0), Fraction(a1), Fraction(a2), Fraction(a3))

    @classmethod
    def _raw(cls, coeffs) -> "Cyc8":
        obj = object.__new__(cls)
        obj.c = coeffs
        return obj

    @classmethod
    def zeta_power(cls, k: int) -> "Cyc8":
        k %= 8
        sign = _ONE if k < 4 else -_ONE
        coeffs = [_ZERO] * 4
        coeffs[k % 4] = sign
        return cls._raw(tuple(coeffs))

    def __add__(self, other: "Cyc8") -> "Cyc8":
        a, b = self.c, other.c
        return Cyc8._raw((a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]))

    def __sub__(self, other: "Cyc8") -> "Cyc8":
        a, b = self.c, other.c
        return Cyc8._raw((a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]))

    def __neg__(self) -> "Cyc8":
        a = self.c
        return Cyc8._raw((-a[0], -a[1], -a[2], -a[3]))

    def __mul__(self, other) -> "Cyc8":
        if isinstance(other, (int, Fraction)):
            f = Fraction(other)
            a = self.c
            return Cyc8._raw((a[0] * f, a[1] * f, a[2] * f, a[3] * f))
        a, b = self.c, other.c
        out = [_ZERO] * 4
        for i in range(4):
            if not a[i]:
                continue
            for j in range(4):
                if not b[j]:
                    continue
                m = i + j
                if m < 4:
                    out[m] += a[i] * b[j]
                else:
                    out[m - 4] -= a[i] * b[j]
        return Cyc8._raw(tuple(out))

    __rmul__ = __mul__

    def conj(self) -> "Cyc8":
        a = self.c
        return Cyc8._raw((a[0], -a[3], -a[2], -a[1]))

    def abs2(self) -> "Cyc8":
        return self * self.conj()

    def is_zero(self) -> bool:
        return not any(self.c)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Cyc8(other)
        return self.c == other.c

    def __hash__(self):
        return hash(self.c)

    def real_pair(self):
        """Return (a, b) with value a + b*sqrt(2); raises if not real."""
        a0, a1, a2, a3 = self.c
        if a2 != 0 or a3 != -a1:
            raise ValueError(f"{self!r} is not a real field element")
        return (a0, a1)

    def to_float(self) -> float:
        from math import sqrt
        a, b = self.real_pair()
        return float(a) + float(b) * sqrt(2.0)

    def to_complex(self) -> complex:
        import cmath
        z = cmath.exp(1j * cmath.pi / 4)
        return complex(sum(complex(c) * z ** i for i, c in enumerate(self.c)))

    def __repr__(self):
        return f"Cyc8{self.c}"


_SQRT2 = Cyc8(0, 1, 0, -1)
_INV_SQRT2 = _SQRT2 * Fraction(1, 2)
_I = Cyc8.zeta_power(2)


def _plus_theta_amps(k: int):
    return (_INV_SQRT2, _INV_SQRT2 * Cyc8.zeta_power(k))


class ExactState:
    """Unnormalized exact statevector over named qubits."""

    __slots__ = ("amps", "axes")

    def __init__(self, amps, axes):
        self.amps = amps
        self.axes = axes

    @classmethod
    def prepare(cls, specs) -> "ExactState":
        amps = [Cyc8(1)]
        axes = {}
        for i, (vertex, kind, value) in enumerate(specs):
            axes[vertex] = i
            if kind == "dummy":
                local = (Cyc8(1 - value), Cyc8(value))
            else:
                local = _plus_theta_amps(value)
            amps = [a * l for a in amps for l in local]
        return cls(amps, axes)

    def _bit(self, index: int, vertex: int) -> int:
        shift = len(self.axes) - 1 - self.axes[vertex]
        return (index >> shift) & 1

    def apply_cz(self, u: int, v: int) -> None:
        for i, amp in enumerate(self.amps):
            if self._bit(i, u) and self._bit(i, v):
                self.amps[i] = -amp

    def apply_pauli(self, vertex: int, pauli: str) -> None:
        if pauli == "I":
            return
        q = len(self.axes)
        shift = q - 1 - self.axes[vertex]
        mask = 1 << shift
        new = list(self.amps)
        for i in range(len(self.amps)):
            bit = (i >> shift) & 1
            if pauli == "X":
                new[i ^ mask] = self.amps[i]
            elif pauli == "Z":
                new[i] = -self.amps[i] if bit else self.amps[i]
            else:  # Y = i X Z
                factor = _I if not bit else -_I
                new[i ^ mask] = factor * self.amps[i]
        self.amps = new

    def project(self, vertex: int, delta: int, outcome: int) -> "ExactState":
        """Unnormalized branch after reading `vertex` in the delta-basis."""
        q = len(self.axes)
        shift = q - 1 - self.axes[vertex]
        phase = Cyc8.zeta_power(-delta)
        out = []
        for i in range(len(self.amps)):
            if (i >> shift) & 1:
                continue
            lo = self.amps[i]
            hi = self.amps[i | (1 << shift)]
            term = phase * hi
            amp = (lo + term) if outcome == 0 else (lo - term)
            out.append(amp * _INV_SQRT2)
        axes = {w: a if a < self.axes[vertex] else a - 1
                for w, a in self.axes.items() if w != vertex}
        return ExactState(out, axes)

    def weight(self) -> Cyc8:
        total = Cyc8()
        for amp in self.amps:
            total = total + amp.abs2()
        return total


@dataclass
class ExactRoundDistribution:
    """Exact joint law of the wire view of one round, plus verdict masses."""

    kind: str
    message_probs: dict        # (deltas tuple, outcomes tuple) -> Cyc8
    fail_probability: Cyc8 | None = None   # test rounds
    output_probs: dict | None = None       # computation rounds: y -> Cyc8

    def total(self) -> Cyc8:
        total = Cyc8()
        for prob in self.message_probs.values():
            total = total + prob
        return total

    def delta_marginal(self, position: int) -> dict:
        marginal = {}
        for (deltas, _), prob in self.message_probs.items():
            key = deltas[position]
            marginal[key] = marginal.get(key, Cyc8()) + prob
        return marginal

    def same_messages(self, other: "ExactRoundDistribution") -> bool:
        """Exact equality of the two wire-view distributions (TV distance 0)."""
        keys = set(self.message_probs) | set(other.message_probs)
        zero = Cyc8()
        return all(self.message_probs.get(k, zero) == other.message_probs.get(k, zero)
                   for k in keys)


def _deviation_buckets(deviations):
    buckets = {"after_prep": [], "after_entangle": [], "before_measure": {}}
    for d in deviations or ():
        if d.action == "unitary":
            raise EnumerationCapacityError("exact enumeration supports Pauli, "
                                           "wrong-angle and lie deviations only")
        if d.stage == "before_measure":
            buckets["before_measure"].setdefault(d.vertex, []).append(d)
        else:
            buckets[d.stage].append(d)
    return buckets


def enumerate_round(pattern: MeasurementPattern, kind: str, deviations=(),
                    input_bits=None, max_space: int = 2 ** 24) -> ExactRoundDistribution:
    """Full exact enumeration of one round.

    Sums over every secret assignment and every Born branch, weighted
    exactly. The space bound counts secret configurations times branches.
    """
    order = pattern.graph.ordering
    n_v = len(order)
    if kind == "computation":
        space = (8 ** n_v) * (2 ** n_v) * (2 ** n_v)
    else:
        space = 0
        for classes in pattern.coloring.classes:
            traps = len(classes)
            dummies = n_v - traps
            space += (16 ** traps) * (2 ** dummies) * (8 ** dummies) * (2 ** n_v)
    if space > max_space:
        raise EnumerationCapacityError(f"enumeration space {space} exceeds {max_space}")
    if kind == "computation":
        return _enumerate_computation(pattern, deviations, input_bits)
    if kind == "test":
        return _enumerate_test(pattern, deviations)
    raise ValueError(f"unknown round kind {kind!r}")


def _walk_branches(state, pattern, delta_fn, buckets, weight, sink):
    """Depth-first walk over measurement outcomes, exact weights."""
    order = pattern.graph.ordering

    def recurse(state, index, deltas, outcomes, decoded):
        if index == len(order):
            prob = weight * state.weight()
            if not prob.is_zero():
                sink(tuple(deltas), tuple(outcomes), prob, decoded)
            return
        vertex = order[index]
        delta = delta_fn(vertex, decoded)
        measured_delta = delta
        lie = False
        for d in buckets["before_measure"].get(vertex, ()):
            if not d.applies(dict(zip(order, outcomes))):
                continue
            if d.action == "pauli":
                state = _copied(state)
                state.apply_pauli(vertex, d.param)
            elif d.action == "measure_wrong_angle":
                measured_delta = (measured_delta + d.param) % 8
            elif d.action == "lie_outcome":
                lie = True
        for raw in (0, 1):
            branch = state.project(vertex, measured_delta, raw)
            if all(a.is_zero() for a in branch.amps):
                continue
            reported = raw ^ 1 if lie else raw
            recurse(branch, index + 1, deltas + [delta], outcomes + [reported],
                    {**decoded, vertex: reported})

    recurse(state, 0, [], [], {})


def _copied(state: ExactState) -> ExactState:
    return ExactState(list(state.amps), dict(state.axes))


def _apply_pre_measure_stages(state, pattern, buckets):
    for d in buckets["after_prep"]:
        state.apply_pauli(d.vertex, d.param)
    for u, v in sorted(pattern.graph.edges):
        state.apply_cz(u, v)
    for d in buckets["after_entangle"]:
        state.apply_pauli(d.vertex, d.param)


def _enumerate_computation(pattern, deviations, input_bits):
    from .ubqc import RoundSecrets, delta_computation, decode_outcome

    order = pattern.graph.ordering
    n_v = len(order)
    if input_bits is None:
        input_bits = (0,) * len(pattern.inputs)
    buckets = _deviation_buckets(deviations)
    base_weight = Fraction(1, (8 ** n_v) * (2 ** n_v))
    message_probs = {}
    output_probs = {}
    outputs = sorted(pattern.outputs)
    for thetas in product(range(8), repeat=n_v):
        for rbits in product(range(2), repeat=n_v):
            secrets = RoundSecrets(
                "computation",
                thetas=dict(zip(order, thetas)),
                r_bits=dict(zip(order, rbits)),
                dummies={},
                input_bits=tuple(input_bits),
            )
            state = ExactState.prepare(
                [(v, "plus_theta", secrets.thetas[v]) for v in order])
            _apply_pre_measure_stages(state, pattern, buckets)

            def sink(deltas, outcomes, prob, decoded, secrets=secrets):
                key = (deltas, outcomes)
                message_probs[key] = message_probs.get(key, Cyc8()) + prob
                s = {v: decode_outcome(v, b, secrets)
                     for v, b in zip(order, outcomes)}
                y = "".join(str(s[o]) for o in outputs)
                output_probs[y] = output_probs.get(y, Cyc8()) + prob

            def decoding_delta(vertex, decoded, secrets=secrets):
                decoded_bits = {v: decode_outcome(v, b, secrets)
                                for v, b in decoded.items()}
                return delta_computation(vertex, secrets, pattern, decoded_bits)

            _walk_branches(state, pattern, decoding_delta, buckets,
                           base_weight, sink)
    return ExactRoundDistribution("computation", message_probs,
                                  output_probs=output_probs)


def _enumerate_test(pattern, deviations):
    from .ubqc import RoundSecrets, trap_expected

    order = pattern.graph.ordering
    buckets = _deviation_buckets(deviations)
    k = pattern.k
    message_probs = {}
    fail_probability = Cyc8()
    for colour in range(k):
        traps = [v for v in order if v in pattern.coloring.classes[colour]]
        dummies = [v for v in order if v not in pattern.coloring.classes[colour]]
        weight = Fraction(1, k * (16 ** len(traps))
                          * ((16 ** len(dummies)) if dummies else 1))
        for trap_thetas in product(range(8), repeat=len(traps)):
            for trap_r in product(range(2), repeat=len(traps)):
                for dvals in product(range(2), repeat=len(dummies)):
                    for dummy_deltas in product(range(8), repeat=len(dummies)):
                        secrets = RoundSecrets(
                            "test",
                            thetas=dict(zip(traps, trap_thetas)),
                            r_bits=dict(zip(traps, trap_r)),
                            dummies=dict(zip(dummies, dvals)),
                            trap_color=colour,
                        )
                        dummy_delta_of = dict(zip(dummies, dummy_deltas))
                        specs = []
                        for v in order:
                            if v in secrets.dummies:
                                specs.append((v, "dummy", secrets.dummies[v]))
                            else:
                                specs.append((v, "plus_theta", secrets.thetas[v]))
                        state = ExactState.prepare(specs)
                        _apply_pre_measure_stages(state, pattern, buckets)

                        def delta_fn(vertex, decoded, secrets=secrets,
                                     dummy_delta_of=dummy_delta_of):
                            if vertex in dummy_delta_of:
                                return dummy_delta_of[vertex]
                            return (secrets.thetas[vertex]
                                    + secrets.r_bits[vertex] * HALF_TURN) % 8

                        def sink(deltas, outcomes, prob, decoded,
                                 secrets=secrets):
                            nonlocal fail_probability
                            key = (deltas, outcomes)
                            message_probs[key] = message_probs.get(key, Cyc8()) + prob
                            by_vertex = dict(zip(order, outcomes))
                            ok = all(by_vertex[v] == trap_expected(
                                v, secrets, pattern.graph) for v in secrets.thetas)
                            if not ok:
                                fail_probability = fail_probability + prob

                        _walk_branches(state, pattern, delta_fn, buckets,
                                       weight, sink)
    return ExactRoundDistribution("test", message_probs,
                                  fail_probability=fail_probability)


@dataclass(frozen=True)
class TrapCheck:
    """Exact per-colour trap statistics for a test-round layout."""

    fail_probability: Cyc8        # averaged over this colour's secrets
    worst_config_fail: Cyc8       # max over (theta, r, d) assignments


def trap_check_exact(pattern: MeasurementPattern, colour: int,
                     deviations=()) -> TrapCheck:
    """Exact failure probability of the traps of one colour class.

    Enumerates the trap secrets and dummy values; dummy measurement angles
    and outcomes never influence the trap marginals, so they are traced out
    rather than enumerated. Deviations on dummies at or after entangling
    therefore (correctly) do not register here.
    """
    order = pattern.graph.ordering
    traps = [v for v in order if v in pattern.coloring.classes[colour]]
    dummies = [v for v in order if v not in pattern.coloring.classes[colour]]
    buckets = _deviation_buckets(deviations)
    from .ubqc import RoundSecrets, trap_expected

    total_fail = Cyc8()
    worst = Cyc8()
    configs = 0
    for trap_thetas in product(range(8), repeat=len(traps)):
        for trap_r in product(range(2), repeat=len(traps)):
            for dvals in product(range(2), repeat=len(dummies)):
                configs += 1
                secrets = RoundSecrets(
                    "test",
                    thetas=dict(zip(traps, trap_thetas)),
                    r_bits=dict(zip(traps, trap_r)),
                    dummies=dict(zip(dummies, dvals)),
                    trap_color=colour,
                )
                specs = []
                for v in order:
                    if v in secrets.dummies:
                        specs.append((v, "dummy", secrets.dummies[v]))
                    else:
                        specs.append((v, "plus_theta", secrets.thetas[v]))
                state = ExactState.prepare(specs)
                _apply_pre_measure_stages(state, pattern, buckets)
                # project the traps one by one onto their expected outcomes
                ok_state = state
                for v in traps:
                    for d in buckets["before_measure"].get(v, ()):
                        if d.action == "pauli":
                            ok_state = _copied(ok_state)
                            ok_state.apply_pauli(v, d.param)
                delta_of = {v: (secrets.thetas[v] + secrets.r_bits[v] * HALF_TURN) % 8
                            for v in traps}
                lies = {v: any(d.action == "lie_outcome"
                               for d in buckets["before_measure"].get(v, ()))
                        for v in traps}
                offsets = {v: sum(d.param for d in buckets["before_measure"].get(v, ())
                                  if d.action == "measure_wrong_angle") % 8
                           for v in traps}
                for v in traps:
                    expected = trap_expected(v, secrets, pattern.graph) ^ lies[v]
                    ok_state = ok_state.project(
                        v, (delta_of[v] + offsets[v]) % 8, expected)
                fail = Cyc8(1) - ok_state.weight()
                total_fail = total_fail + fail
                if fail.to_float() > worst.to_float():
                    worst = fail
    return TrapCheck(total_fail * Fraction(1, configs), worst)
