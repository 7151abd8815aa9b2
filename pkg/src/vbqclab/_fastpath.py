"""Fused in-process protocol engine for high-throughput experiments.

Same protocol, same physics and same random-stream consumption as
`rounds.run_protocol`, but with the message layer and per-op dispatch
flattened into one loop, so large Monte Carlo sweeps stay affordable on a
single core. Seed-exact transcript equality against the reference engine
is pinned by tests across honest, noisy and attacked configurations.
Anything the fused loop cannot express (redo policies, conditional or
unitary deviations, random-vertex scripts) raises FastPathUnsupported and
the caller falls back to the reference implementation.
"""

from __future__ import annotations

import math

from .pattern import MeasurementPattern
from .rng import buffered_stream
from .rounds import RoundPlan, RoundTranscript, partition_rounds, verify_and_vote
from .threat import Adversary, instantiate_noise
from .ubqc import sample_secrets, trap_expected

__all__ = ["FastPathUnsupported", "CompiledPattern", "run_protocol_fast"]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_EXP_POS = tuple(complex(math.cos(k * math.pi / 4), math.sin(k * math.pi / 4))
                 for k in range(8))
_EXP_NEG = tuple(z.conjugate() for z in _EXP_POS)
_PLUS_PAIRS = tuple((_INV_SQRT2 + 0j, _INV_SQRT2 * _EXP_POS[k]) for k in range(8))
_DUMMY_PAIRS = ((1.0 + 0j, 0j), (0j, 1.0 + 0j))
_PROB_CLAMP = 1e-12
_QUBIT_CAP = 12  # full-size lists get slow beyond this; fall back instead


class FastPathUnsupported(Exception):
    """Configuration needs the reference engine."""


class CompiledPattern:
    """Pattern unrolled into index tables for the fused round loop."""

    def __init__(self, pattern: MeasurementPattern):
        graph = pattern.graph
        order = graph.ordering
        nv = len(order)
        if nv > _QUBIT_CAP:
            raise FastPathUnsupported(f"{nv} qubits exceed the fused-loop cap")
        self.pattern = pattern
        self.order = order
        self.nv = nv
        self.size = 1 << nv
        shift = {v: nv - 1 - i for i, v in enumerate(order)}
        self.shift = shift
        size = self.size
        # per-vertex (low, high) index pairs and per-edge hit lists, so the
        # round loop walks plain tuples instead of doing bit tests
        self.pairs = {v: tuple((i, i | (1 << shift[v]))
                               for i in range(size) if not i & (1 << shift[v]))
                      for v in order}
        self.cz_hits = tuple(
            tuple(i for i in range(size)
                  if i & ((1 << shift[u]) | (1 << shift[v]))
                  == ((1 << shift[u]) | (1 << shift[v])))
            for u, v in sorted(graph.edges))
        self.x_deps = {v: tuple(pattern.deps.x_deps[v]) for v in order}
        self.z_deps = {v: tuple(pattern.deps.z_deps[v]) for v in order}
        self.angles = pattern.angles
        inputs = sorted(pattern.inputs)
        self.input_pos = {v: i for i, v in enumerate(inputs)}
        self.outputs = tuple(sorted(pattern.outputs))


def _compile_adversary(adversary: Adversary | None):
    if adversary is None:
        return {}, None
    if adversary.redo_policy is not None:
        raise FastPathUnsupported("redo policies need the reference engine")
    table = {}
    if adversary.script is not None:
        script = adversary.script
        if script.selection_mode != "fixed":
            raise FastPathUnsupported("random-vertex scripts need the reference engine")
        for j, directives in script.directives.items():
            for d in directives:
                if d.when or d.action == "unitary":
                    raise FastPathUnsupported(
                        "conditional or unitary deviations need the reference engine")
            table[j] = directives
    return table, adversary.noise


def _apply_pauli(amps, pairs, pauli):
    if pauli == "Z":
        for _, j in pairs:
            amps[j] = -amps[j]
    elif pauli == "X":
        for i, j in pairs:
            amps[i], amps[j] = amps[j], amps[i]
    elif pauli == "Y":
        for i, j in pairs:
            lo, hi = amps[i], amps[j]
            amps[i] = complex(hi.imag, -hi.real)   # -i * hi
            amps[j] = complex(-lo.imag, lo.real)   # +i * lo
    # "I": nothing


def _measure(amps, pairs, delta, u):
    phase = _EXP_NEG[delta & 7]
    vals = []
    p0 = 0.0
    for i, j in pairs:
        x = (amps[i] + phase * amps[j]) * _INV_SQRT2
        vals.append(x)
        p0 += x.real * x.real + x.imag * x.imag
    if p0 < _PROB_CLAMP:
        p0 = 0.0
    elif p0 > 1.0 - _PROB_CLAMP:
        p0 = 1.0
    if u < p0:
        bit, norm = 0, p0
    else:
        bit, norm = 1, 1.0 - p0
        vals = [(amps[i] - phase * amps[j]) * _INV_SQRT2 for i, j in pairs]
    scale = 1.0 / math.sqrt(norm)
    for (i, j), val in zip(pairs, vals):
        amps[i] = val * scale
        amps[j] = 0j
    return bit


def run_protocol_fast(params, pattern: MeasurementPattern, compiled: CompiledPattern,
                      input_bits=None, adversary: Adversary | None = None,
                      seed: int = 0, session: int = 0):
    """Drop-in replacement for the in-process `run_protocol` (verdict, transcripts)."""
    cp = compiled
    directive_table, noise = _compile_adversary(adversary)
    noisy = noise is not None and noise.kind != "none"
    crng = buffered_stream(seed, session, "client")
    srng = buffered_stream(seed, session, "server")
    comp_set, _ = partition_rounds(params, crng)
    order = cp.order
    shift = cp.shift
    transcripts = []
    for j in range(params.n):
        computing = j in comp_set
        kind = "computation" if computing else "test"
        secrets = sample_secrets(kind, pattern, crng,
                                 input_bits if computing else None)
        thetas = secrets.thetas
        r_bits = secrets.r_bits
        dummies = secrets.dummies
        amps = [1.0 + 0j]
        for v in order:
            pair = _DUMMY_PAIRS[dummies[v]] if v in dummies \
                else _PLUS_PAIRS[thetas[v]]
            amps = [a * l for a in amps for l in pair]
        if noisy:
            for v, pauli in instantiate_noise(noise, j, srng, order):
                _apply_pauli(amps, cp.pairs[v], pauli)
        directives = directive_table.get(j, ())
        bm = None
        if directives:
            bm = {}
            for d in directives:
                if d.stage == "after_prep" and d.action == "pauli":
                    _apply_pauli(amps, cp.pairs[d.vertex], d.param)
                elif d.stage == "before_measure":
                    bm.setdefault(d.vertex, []).append(d)
        for hits in cp.cz_hits:
            for i in hits:
                amps[i] = -amps[i]
        if directives:
            for d in directives:
                if d.stage == "after_entangle" and d.action == "pauli":
                    _apply_pauli(amps, cp.pairs[d.vertex], d.param)
        born = srng.random(size=cp.nv)
        outcomes = {}
        deltas = {}
        decoded = {}
        for idx, v in enumerate(order):
            if computing:
                s_x = 0
                for u in cp.x_deps[v]:
                    s_x ^= decoded[u]
                s_z = 0
                for u in cp.z_deps[v]:
                    s_z ^= decoded[u]
                phi = cp.angles[v]
                if s_x:
                    phi = -phi
                theta = thetas[v]
                pos = cp.input_pos.get(v)
                if pos is not None:
                    theta += 4 * input_bits[pos] if input_bits else 0
                delta = (phi + 4 * s_z + theta + 4 * r_bits[v]) % 8
            elif v in dummies:
                delta = crng.integers(0, 8)
            else:
                delta = (thetas[v] + 4 * r_bits[v]) % 8
            measured = delta
            lie = False
            if bm is not None:
                for d in bm.get(v, ()):
                    if d.action == "pauli":
                        _apply_pauli(amps, cp.pairs[v], d.param)
                    elif d.action == "measure_wrong_angle":
                        measured = (measured + d.param) % 8
                    else:
                        lie = True
            bit = _measure(amps, cp.pairs[v], measured, born[idx])
            if lie:
                bit ^= 1
            deltas[v] = delta
            outcomes[v] = bit
            if computing:
                decoded[v] = bit ^ r_bits[v]
        transcript = RoundTranscript(RoundPlan(j, kind, secrets))
        transcript.sent_deltas = deltas
        transcript.outcomes = outcomes
        if computing:
            transcript.result = "".join(str(decoded[o]) for o in cp.outputs)
        else:
            graph = pattern.graph
            transcript.result = all(
                outcomes[v] == trap_expected(v, secrets, graph) for v in thetas)
        transcripts.append(transcript)
    verdict = verify_and_vote(transcripts, params)
    return verdict, transcripts
