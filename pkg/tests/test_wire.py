import socket
import threading

import pytest
from hypothesis import given, settings, strategies as st

from vbqclab.statevector import PrepSpec
from vbqclab.wire import (Abort, EntangleDone, FramingError, InProcessPair,
                          MeasureInstruction, Ok, Outcome, PrepQubit, QubitHandle,
                          Redo, SocketTransport, VersionError, decode, encode)


def test_ok_frame_is_tag_only():
    frame = encode(Ok())
    assert frame == bytes.fromhex("0000000106")
    assert decode(frame) == Ok()


def test_abort_frame():
    assert decode(encode(Abort())) == Abort()


def test_measure_instruction_pinned_hex():
    frame = encode(MeasureInstruction(0, 1, 5))
    assert frame.hex() == "0000000a03000000000000000105"
    assert len(frame) - 4 == 10


def test_prep_qubit_round_trip_and_length():
    msg = PrepQubit(3, 2, QubitHandle(PrepSpec.plus_theta(7)))
    frame = encode(msg)
    assert len(frame) - 4 == 11
    back = decode(frame)
    assert back == msg
    msg = PrepQubit(0, 0, QubitHandle(PrepSpec.dummy(1)))
    assert decode(encode(msg)) == msg


def test_handle_does_not_leak_in_repr():
    handle = QubitHandle(PrepSpec.plus_theta(5))
    assert "5" not in repr(handle)


def test_decode_rejects_empty_and_truncated():
    with pytest.raises(FramingError):
        decode(b"")
    frame = encode(MeasureInstruction(1, 2, 3))
    with pytest.raises(FramingError):
        decode(frame[:-1])


def test_decode_rejects_trailing_bytes():
    with pytest.raises(FramingError):
        decode(encode(Ok()) + b"\x00")


def test_decode_rejects_unknown_tag():
    with pytest.raises(VersionError):
        decode(bytes.fromhex("00000001ff"))


def test_decode_rejects_bad_fields():
    # delta outside 0..7 and outcome outside 0..1
    with pytest.raises(FramingError):
        decode(bytes.fromhex("0000000a03000000000000000109"))
    with pytest.raises(FramingError):
        decode(bytes.fromhex("0000000a04000000000000000102"))
    # Ok with payload
    with pytest.raises(FramingError):
        decode(bytes.fromhex("000000020600"))


_uint = st.integers(min_value=0, max_value=2 ** 32 - 1)
_vertex = st.integers(min_value=0, max_value=2 ** 32 - 1)


@st.composite
def messages(draw):
    which = draw(st.integers(min_value=0, max_value=6))
    if which == 0:
        kind = draw(st.sampled_from(["plus_theta", "dummy"]))
        value = draw(st.integers(0, 7)) if kind == "plus_theta" else draw(st.integers(0, 1))
        return PrepQubit(draw(_uint), draw(_vertex), QubitHandle(PrepSpec(kind, value)))
    if which == 1:
        return EntangleDone(draw(_uint))
    if which == 2:
        return MeasureInstruction(draw(_uint), draw(_vertex), draw(st.integers(0, 7)))
    if which == 3:
        return Outcome(draw(_uint), draw(_vertex), draw(st.integers(0, 1)))
    if which == 4:
        return Redo(draw(_uint))
    return Ok() if which == 5 else Abort()


@settings(max_examples=300, deadline=None)
@given(messages())
def test_round_trip_property(msg):
    assert decode(encode(msg)) == msg


def test_in_process_pair_orders_messages():
    pair = InProcessPair()
    pair.client.send(EntangleDone(1))
    pair.client.send(Redo(2))
    assert pair.server.recv() == EntangleDone(1)
    assert pair.server.recv() == Redo(2)
    with pytest.raises(FramingError):
        pair.server.recv()


def test_in_process_capture_records_frames():
    pair = InProcessPair(capture_client=True)
    pair.client.send(Ok())
    assert pair.client.capture == [encode(Ok())]


def test_socket_transport_round_trip():
    left, right = socket.socketpair()
    a, b = SocketTransport(left), SocketTransport(right)
    sent = [MeasureInstruction(1, 0, 7), Outcome(1, 0, 1), Ok()]

    def pump():
        for msg in sent:
            a.send(msg)

    thread = threading.Thread(target=pump)
    thread.start()
    received = [b.recv() for _ in range(3)]
    thread.join()
    assert received == sent
    a.close()
    b.close()


def test_socket_transport_detects_close():
    left, right = socket.socketpair()
    a, b = SocketTransport(left), SocketTransport(right)
    a.close()
    with pytest.raises(FramingError):
        b.recv()
    b.close()
