"""Protocol orchestration: interleaved computation and test rounds.

The client drives n rounds against a message-driven server. Each round
sends the prepared qubits, waits for the entangling acknowledgement, then
streams measurement instructions one at a time (the next angle depends on
the previous outcome, so there is no pipelining). Either party may request
a restart of the current round: the client only while it still has qubits
to send, the server at any time before the round's last outcome. Restarted
attempts are archived and never counted by verification.

After the last round the client checks every trap of every test round,
aborts if at least w test rounds failed, otherwise takes a strict majority
vote over the computation outputs and announces Ok or Abort on the wire.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field

from . import wire
from .pattern import MeasurementPattern
from .rng import buffered_stream
from .statevector import Q_MAX, PrepSpec, apply_cz, apply_pauli, \
    apply_unitary, measure_angle, prepare
from .threat import Adversary, instantiate_noise
from .ubqc import RoundSecrets, decode_outcome, delta_computation, delta_test, \
    sample_secrets, trap_expected

__all__ = [
    "SessionError",
    "RedoWindowError",
    "ProtocolParams",
    "RoundPlan",
    "RoundTranscript",
    "Verdict",
    "partition_rounds",
    "handle_redo",
    "verify_and_vote",
    "run_round",
    "run_protocol",
    "ServerSession",
    "serve_session",
    "write_client_log",
    "write_server_log",
    "read_jsonl",
    "server_view_from_frames",
]

CLIENT_SCHEMA = "vbqclab-client-transcript/1"
SERVER_SCHEMA = "vbqclab-server-view/1"


class SessionError(RuntimeError):
    """Transport failure or protocol-order violation during a session."""


class RedoWindowError(RuntimeError):
    """Redo requested outside the requester's allowed window."""


@dataclass(frozen=True)
class ProtocolParams:
    """Round counts and thresholds for one protocol instance."""

    n: int
    d: int
    t: int
    w: int
    k: int
    p: float = 0.0
    p_min: float | None = None
    p_max: float | None = None

    def __post_init__(self):
        if self.n != self.d + self.t:
            raise ValueError(f"n={self.n} must equal d+t={self.d + self.t}")
        if self.d < 1 or self.t < 1:
            raise ValueError("need at least one computation and one test round")
        if not 0 <= self.w <= self.t:
            raise ValueError(f"w={self.w} outside 0..t")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0.0 <= self.p < 0.5:
            raise ValueError("inherent error probability must lie in [0, 1/2)")

    @property
    def delta(self) -> float:
        return self.d / self.n

    @property
    def tau(self) -> float:
        return self.t / self.n

    @property
    def omega(self) -> float:
        return self.w / self.t

    @property
    def theorem_compliant(self) -> bool:
        # admissible threshold ratio: 0 < omega < (1/k) * (2p-1)/(2p-2)
        ceiling = (2 * self.p - 1) / (2 * self.p - 2) / self.k
        return 0.0 < self.omega < ceiling


@dataclass(frozen=True)
class RoundPlan:
    index: int
    kind: str  # "computation" | "test"
    secrets: RoundSecrets

    def __post_init__(self):
        if self.kind != self.secrets.kind:
            raise ValueError("plan kind and secrets kind disagree")


@dataclass
class RoundTranscript:
    plan: RoundPlan
    sent_deltas: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)
    redo_count: int = 0
    archived: list = field(default_factory=list)
    result: object = None  # output string for computation, bool pass for test

    def to_json(self) -> dict:
        secrets = self.plan.secrets
        return {
            "round": self.plan.index,
            "kind": self.plan.kind,
            "secrets": {
                "thetas": {str(v): k for v, k in sorted(secrets.thetas.items())},
                "r_bits": {str(v): b for v, b in sorted(secrets.r_bits.items())},
                "dummies": {str(v): b for v, b in sorted(secrets.dummies.items())},
                "trap_color": secrets.trap_color,
                "input_bits": list(secrets.input_bits) if secrets.input_bits else None,
            },
            "deltas": {str(v): k for v, k in sorted(self.sent_deltas.items())},
            "outcomes": {str(v): b for v, b in sorted(self.outcomes.items())},
            "redo_count": self.redo_count,
            "archived": self.archived,
            "result": self.result,
        }


@dataclass(frozen=True)
class Verdict:
    status: str  # "ok" | "abort"
    y: str | None = None
    reason: str | None = None  # "too_many_failed_tests" | "no_majority"
    c_fail: int = 0
    tallies: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"status": self.status, "y": self.y, "reason": self.reason,
                "c_fail": self.c_fail, "tallies": dict(self.tallies)}


def partition_rounds(params: ProtocolParams, rng):
    """Uniformly choose which round indices compute and which test."""
    chosen = rng.choice(params.n, size=params.d, replace=False)
    comp = frozenset(int(j) for j in chosen)
    test = frozenset(range(params.n)) - comp
    return comp, test


def handle_redo(plan: RoundPlan, requester: str, stage: str,
                pattern: MeasurementPattern, rng, input_bits=None) -> RoundPlan:
    """Restart a round: same index and kind, entirely fresh secrets.

    The client may only ask while it is still sending qubits; the server
    any time before the round ends.
    """
    if requester == "client" and stage != "prep":
        raise RedoWindowError("client redo window closed once its last qubit is sent")
    if requester not in ("client", "server"):
        raise ValueError(f"unknown requester {requester!r}")
    secrets = sample_secrets(plan.kind, pattern, rng, input_bits)
    return RoundPlan(plan.index, plan.kind, secrets)


def verify_and_vote(transcripts, params: ProtocolParams) -> Verdict:
    """Count failed test rounds, then majority-vote the computation outputs."""
    if len(transcripts) != params.n:
        raise ValueError(f"expected {params.n} transcripts, got {len(transcripts)}")
    c_fail = sum(1 for tr in transcripts if tr.plan.kind == "test" and tr.result is False)
    if c_fail >= params.w:
        return Verdict("abort", reason="too_many_failed_tests", c_fail=c_fail)
    tallies = Counter(tr.result for tr in transcripts if tr.plan.kind == "computation")
    best, count = tallies.most_common(1)[0]
    if count > params.d / 2:
        return Verdict("ok", y=best, c_fail=c_fail, tallies=dict(tallies))
    return Verdict("abort", reason="no_majority", c_fail=c_fail, tallies=dict(tallies))


class _DrawQueue:
    """Feeds pre-drawn uniforms to the Born sampler, one per measurement."""

    __slots__ = ("values", "index")

    def __init__(self, values):
        self.values = values
        self.index = 0

    def random(self):
        value = self.values[self.index]
        self.index += 1
        return value


class ServerSession:
    """Message-driven server: honest device plus injected adversary hooks."""

    def __init__(self, pattern: MeasurementPattern, rng, adversary: Adversary | None = None,
                 q_max: int = Q_MAX, record_view: bool = False):
        self.pattern = pattern
        self.rng = rng
        self.adversary = adversary or Adversary.honest()
        self.q_max = q_max
        self.view = [] if record_view else None
        self.verdict_seen = None
        self._edges = sorted(pattern.graph.edges)
        self._order = pattern.graph.ordering
        self._reset_round_state()
        self._attempts = {}

    def _reset_round_state(self):
        self._round = None
        self._specs = []
        self._state = None
        self._draws = None
        self._outcomes = {}
        self._measured = 0
        self._bm = {}
        self._round_directives = ()
        self._view_entry = None

    def _resolve_directives(self, j):
        """Fix this attempt's directives; random-vertex picks happen here, once."""
        script = self.adversary.script
        if script is None:
            return ()
        ds = script.for_round(j)
        if ds and script.selection_mode == "uniformly_random_vertex":
            count = self.pattern.graph.vertex_count
            ds = tuple(
                type(d)(int(self.rng.integers(0, count)), d.action, d.param,
                        d.stage, d.when)
                for d in ds)
        return ds

    def _directives(self, stage):
        return tuple(d for d in self._round_directives if d.stage == stage)

    def _apply_state_action(self, directive):
        if directive.action == "pauli":
            apply_pauli(self._state, directive.vertex, directive.param)
        elif directive.action == "unitary":
            apply_unitary(self._state, directive.vertex, directive.param)
        else:
            raise SessionError(f"{directive.action} cannot run at stage {directive.stage}")

    def on_message(self, msg):
        if isinstance(msg, wire.PrepQubit):
            return self._on_prep(msg)
        if isinstance(msg, wire.MeasureInstruction):
            return self._on_measure(msg)
        if isinstance(msg, wire.Redo):
            # client-requested restart: drop the partial round
            self._attempts[msg.round_index] = self._attempts.get(msg.round_index, 0) + 1
            self._reset_round_state()
            return []
        if isinstance(msg, (wire.Ok, wire.Abort)):
            self.verdict_seen = "ok" if isinstance(msg, wire.Ok) else "abort"
            if self.view is not None:
                self.view.append({"verdict": self.verdict_seen})
            return []
        raise SessionError(f"server cannot handle {msg!r}")

    def _on_prep(self, msg):
        j = msg.round_index
        if self._round is None:
            self._round = j
            self._attempts.setdefault(j, 0)
        elif self._round != j:
            raise SessionError(f"prep for round {j} while round {self._round} is open")
        vertex = msg.vertex
        expected = self._order[len(self._specs)]
        if vertex != expected:
            raise SessionError(f"prep for vertex {vertex}, expected {expected}")
        self._specs.append((vertex, msg.qubit.reveal_to_simulator()))
        if len(self._specs) < len(self._order):
            return []
        return self._entangle(j)

    def _entangle(self, j):
        attempt = self._attempts[j]
        state = prepare(self._specs, q_max=self.q_max)
        if self.adversary.noise is not None and self.adversary.noise.kind != "none":
            for vertex, pauli in instantiate_noise(
                    self.adversary.noise, j, self.rng, vertices=self._order):
                apply_pauli(state, vertex, pauli)
        self._state = state
        self._outcomes = {}
        self._round_directives = self._resolve_directives(j)
        for directive in self._directives("after_prep"):
            if directive.applies(self._outcomes):
                self._apply_state_action(directive)
        for edge in self._edges:
            apply_cz(state, edge)
        for directive in self._directives("after_entangle"):
            if directive.applies(self._outcomes):
                self._apply_state_action(directive)
        policy = self.adversary.redo_policy
        if policy is not None and policy(j, attempt, "entangle", 0):
            self._attempts[j] = attempt + 1
            self._reset_round_state()
            return [wire.Redo(j)]
        if self.view is not None:
            self._view_entry = {"round": j, "attempt": attempt,
                                "preps": len(self._specs), "deltas": [],
                                "outcomes": [], "completed": False}
            self.view.append(self._view_entry)
        self._draws = _DrawQueue(self.rng.random(size=len(self._order)))
        self._bm = self._bucket_before_measure()
        return [wire.EntangleDone(j)]

    def _bucket_before_measure(self):
        buckets = {}
        for directive in self._directives("before_measure"):
            buckets.setdefault(directive.vertex, []).append(directive)
        return buckets

    def _on_measure(self, msg):
        if self._round != msg.round_index or self._state is None:
            raise SessionError(f"measure instruction outside round {msg.round_index}")
        vertex, delta = msg.vertex, msg.delta
        if self._view_entry is not None:
            self._view_entry["deltas"].append([vertex, delta])
        policy = self.adversary.redo_policy
        if policy is not None:
            j = self._round
            attempt = self._attempts[j]
            if policy(j, attempt, "measure", self._measured):
                self._attempts[j] = attempt + 1
                self._reset_round_state()
                return [wire.Redo(j)]
        lie = False
        for directive in self._bm.get(vertex, ()):
            if not directive.applies(self._outcomes):
                continue
            if directive.action == "measure_wrong_angle":
                delta = (delta + directive.param) % 8
            elif directive.action == "lie_outcome":
                lie = True
            else:
                self._apply_state_action(directive)
        bit, self._state = measure_angle(self._state, vertex, delta, self._draws)
        self._outcomes[vertex] = bit
        if lie:
            bit ^= 1
        self._measured += 1
        if self._view_entry is not None:
            self._view_entry["outcomes"].append([vertex, bit])
        reply = [wire.Outcome(msg.round_index, vertex, bit)]
        if self._measured == len(self._order):
            if self._view_entry is not None:
                self._view_entry["completed"] = True
            j = self._round
            self._reset_round_state()
            self._attempts.pop(j, None)
        return reply


class _LocalChannel:
    """Client endpoint whose peer is an in-process ServerSession."""

    def __init__(self, server: ServerSession, capture: list | None = None):
        self.server = server
        self.capture = capture
        self._to_client = deque()

    def send(self, msg):
        if self.capture is not None:
            self.capture.append(("c>s", wire.encode(msg)))
        for reply in self.server.on_message(msg):
            if self.capture is not None:
                self.capture.append(("s>c", wire.encode(reply)))
            self._to_client.append(reply)

    def recv(self):
        if not self._to_client:
            raise SessionError("no pending server message")
        return self._to_client.popleft()


def run_round(plan: RoundPlan, pattern: MeasurementPattern, transport,
              client_rng, input_bits=None, client_redo=None) -> RoundTranscript:
    """Execute one round against the given transport.

    `client_redo(plan, prep_index)` may trigger a client-side restart while
    qubits are still being sent. Returns the completed transcript with any
    archived attempts.
    """
    transcript = RoundTranscript(plan)
    while True:
        status = _attempt_round(transcript, plan, pattern, transport, client_rng,
                                client_redo)
        if status is None:
            return transcript
        transcript.archived.append({
            "deltas": {str(v): k for v, k in sorted(transcript.sent_deltas.items())},
            "outcomes": {str(v): b for v, b in sorted(transcript.outcomes.items())},
        })
        transcript.redo_count += 1
        transcript.sent_deltas = {}
        transcript.outcomes = {}
        stage = "prep" if status == "client" else "any"
        plan = handle_redo(plan, status, stage, pattern, client_rng, input_bits)
        transcript.plan = plan


def _attempt_round(transcript, plan, pattern, transport, client_rng, client_redo):
    j = plan.index
    secrets = plan.secrets
    order = pattern.graph.ordering
    for index, vertex in enumerate(order):
        if client_redo is not None and client_redo(plan, index):
            # window: at least this qubit still unsent
            transport.send(wire.Redo(j))
            return "client"
        # inputs are hidden by padding the angle, so every non-dummy qubit
        # travels as a plain |+_theta>
        if secrets.is_dummy(vertex):
            spec = PrepSpec.dummy(secrets.dummies[vertex])
        else:
            spec = PrepSpec.plus_theta(secrets.thetas[vertex])
        transport.send(wire.PrepQubit(j, vertex, wire.QubitHandle(spec)))
    msg = transport.recv()
    if isinstance(msg, wire.Redo):
        return "server"
    if not isinstance(msg, wire.EntangleDone) or msg.round_index != j:
        raise SessionError(f"expected EntangleDone({j}), got {msg!r}")
    decoded = {}
    for vertex in order:
        if secrets.kind == "computation":
            delta = delta_computation(vertex, secrets, pattern, decoded)
        else:
            delta = delta_test(vertex, secrets, client_rng)
        transcript.sent_deltas[vertex] = delta
        transport.send(wire.MeasureInstruction(j, vertex, delta))
        msg = transport.recv()
        if isinstance(msg, wire.Redo):
            return "server"
        if not isinstance(msg, wire.Outcome) or msg.vertex != vertex:
            raise SessionError(f"expected Outcome for vertex {vertex}, got {msg!r}")
        transcript.outcomes[vertex] = msg.bit
        if secrets.kind == "computation":
            decoded[vertex] = decode_outcome(vertex, msg.bit, secrets)
    if secrets.kind == "computation":
        transcript.result = "".join(
            str(decoded[o]) for o in sorted(pattern.outputs))
    else:
        transcript.result = all(
            transcript.outcomes[v] == trap_expected(v, secrets, pattern.graph)
            for v in secrets.thetas)
    return None


def run_protocol(params: ProtocolParams, pattern: MeasurementPattern,
                 input_bits=None, adversary: Adversary | None = None,
                 transport=None, seed: int = 0, session: int = 0,
                 capture_wire: bool = False,
                 record_server_view: bool = False, client_redo=None):
    """Run all n rounds and the final verification.

    With transport=None the server runs in-process; otherwise `transport`
    must be a connected client endpoint whose remote side runs
    `serve_session` with the same pattern. Fully deterministic given
    (seed, session); distinct session keys give independent trials.

    Returns (verdict, transcripts, info) where info exposes the server
    view and captured wire frames when requested.
    """
    client_rng = buffered_stream(seed, session, "client")
    info = {"frames": None, "server_view": None}
    server = None
    if transport is None:
        server = ServerSession(pattern, buffered_stream(seed, session, "server"),
                               adversary, record_view=record_server_view)
        transport = _LocalChannel(server, capture=[] if capture_wire else None)
        info["frames"] = transport.capture
    comp, test = partition_rounds(params, client_rng)
    transcripts = []
    for j in range(params.n):
        kind = "computation" if j in comp else "test"
        secrets = sample_secrets(kind, pattern, client_rng, input_bits)
        plan = RoundPlan(j, kind, secrets)
        transcripts.append(run_round(plan, pattern, transport, client_rng,
                                     input_bits=input_bits, client_redo=client_redo))
    verdict = verify_and_vote(transcripts, params)
    transport.send(wire.Ok() if verdict.status == "ok" else wire.Abort())
    if server is not None:
        info["server_view"] = server.view
    return verdict, transcripts, info


def serve_session(transport, pattern: MeasurementPattern, rng,
                  adversary: Adversary | None = None,
                  record_view: bool = False):
    """Run the server side of one session over a real transport."""
    server = ServerSession(pattern, rng, adversary, record_view=record_view)
    while server.verdict_seen is None:
        msg = transport.recv()
        for reply in server.on_message(msg):
            transport.send(reply)
    return server


# --- transcript persistence ------------------------------------------------------

def write_client_log(path, params: ProtocolParams, transcripts, verdict: Verdict):
    with open(path, "w", encoding="utf-8") as fh:
        header = {"schema": CLIENT_SCHEMA, "n": params.n, "d": params.d,
                  "t": params.t, "w": params.w, "k": params.k, "p": params.p}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for tr in transcripts:
            fh.write(json.dumps(tr.to_json(), sort_keys=True) + "\n")
        fh.write(json.dumps({"verdict": verdict.to_json()}, sort_keys=True) + "\n")


def write_server_log(path, server_view, verdict_status: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": SERVER_SCHEMA}, sort_keys=True) + "\n")
        for entry in server_view or []:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        if not any("verdict" in e for e in (server_view or [])):
            fh.write(json.dumps({"verdict": verdict_status}, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def transcripts_from_client_log(records):
    """Rebuild (params, transcripts, recorded verdict) from a client log."""
    header = records[0]
    if header.get("schema") != CLIENT_SCHEMA:
        raise SessionError(f"not a client transcript log: {header.get('schema')!r}")
    params = ProtocolParams(n=header["n"], d=header["d"], t=header["t"],
                            w=header["w"], k=header["k"], p=header["p"])
    transcripts = []
    verdict = None
    for record in records[1:]:
        if "verdict" in record:
            verdict = record["verdict"]
            continue
        sec = record["secrets"]
        secrets = RoundSecrets(
            kind=record["kind"],
            thetas={int(v): k for v, k in sec["thetas"].items()},
            r_bits={int(v): b for v, b in sec["r_bits"].items()},
            dummies={int(v): b for v, b in sec["dummies"].items()},
            trap_color=sec["trap_color"],
            input_bits=tuple(sec["input_bits"]) if sec["input_bits"] else None,
        )
        transcript = RoundTranscript(RoundPlan(record["round"], record["kind"], secrets))
        transcript.sent_deltas = {int(v): k for v, k in record["deltas"].items()}
        transcript.outcomes = {int(v): b for v, b in record["outcomes"].items()}
        transcript.redo_count = record["redo_count"]
        transcript.archived = record["archived"]
        transcript.result = record["result"]
        transcripts.append(transcript)
    return params, transcripts, verdict


def server_view_from_frames(frames):
    """Rebuild the server view from a captured, direction-tagged frame log.

    Preparation payloads are deliberately dropped: the reconstructed view
    carries only what an honest-but-curious server would retain.
    """
    view = []
    entry = None
    preps = 0
    attempts = {}
    for direction, frame in frames:
        msg = wire.decode(frame)
        if isinstance(msg, wire.PrepQubit):
            preps += 1
        elif isinstance(msg, wire.Redo):
            attempts[msg.round_index] = attempts.get(msg.round_index, 0) + 1
            preps = 0
            entry = None
        elif isinstance(msg, wire.EntangleDone):
            entry = {"round": msg.round_index,
                     "attempt": attempts.get(msg.round_index, 0),
                     "preps": preps, "deltas": [], "outcomes": [],
                     "completed": False}
            view.append(entry)
            preps = 0
        elif isinstance(msg, wire.MeasureInstruction):
            entry["deltas"].append([msg.vertex, msg.delta])
        elif isinstance(msg, wire.Outcome):
            entry["outcomes"].append([msg.vertex, msg.bit])
            if len(entry["outcomes"]) == entry["preps"]:
                entry["completed"] = True
                attempts.pop(msg.round_index, None)
        elif isinstance(msg, (wire.Ok, wire.Abort)):
            view.append({"verdict": "ok" if isinstance(msg, wire.Ok) else "abort"})
    return view
