import itertools
import math

import numpy as np
import pytest

from vbqclab.rng import stream
from vbqclab.statevector import (CapacityError, PrepSpec, StateError,
                                 apply_cz, apply_pauli, apply_unitary,
                                 measure_angle, prepare)

INV = 1 / math.sqrt(2)


class FakeRng:
    """Feeds scripted uniforms to the Born sampler."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_prepare_plus_zero():
    state = prepare([(0, PrepSpec.plus_theta(0))])
    assert np.allclose(state.amplitudes, [INV, INV])


def test_prepare_dummy_one():
    state = prepare([(0, PrepSpec.dummy(1))])
    assert np.allclose(state.amplitudes, [0, 1])


def test_prepare_plus_quarter():
    state = prepare([(0, PrepSpec.plus_theta(2))])
    assert np.allclose(state.amplitudes, [INV, 1j * INV])


def test_prepare_rejects_empty_and_overflow():
    with pytest.raises(StateError):
        prepare([])
    with pytest.raises(CapacityError):
        prepare([(i, PrepSpec.dummy(0)) for i in range(4)], q_max=3)


def test_prepare_rejects_duplicate_vertex():
    with pytest.raises(StateError):
        prepare([(0, PrepSpec.dummy(0)), (0, PrepSpec.dummy(1))])


def test_prep_spec_validation():
    with pytest.raises(StateError):
        PrepSpec.plus_theta(8)
    with pytest.raises(StateError):
        PrepSpec.dummy(2)
    with pytest.raises(StateError):
        PrepSpec("weird", 0)


def test_cz_flips_one_one_only():
    state = prepare([(0, PrepSpec.dummy(1)), (1, PrepSpec.dummy(1))])
    apply_cz(state, (0, 1))
    assert np.allclose(state.amplitudes, [0, 0, 0, -1])
    state = prepare([(0, PrepSpec.dummy(1)), (1, PrepSpec.dummy(0))])
    apply_cz(state, (0, 1))
    assert np.allclose(state.amplitudes, [0, 0, 1, 0])


def test_cz_on_plus_one():
    state = prepare([(0, PrepSpec.plus_theta(0)), (1, PrepSpec.dummy(1))])
    apply_cz(state, (0, 1))
    assert np.allclose(state.amplitudes, [0, INV, 0, -INV])


def test_cz_dead_vertex():
    state = prepare([(0, PrepSpec.plus_theta(0))])
    with pytest.raises(StateError):
        apply_cz(state, (0, 1))


def test_pauli_x_flips_dummy():
    state = prepare([(0, PrepSpec.dummy(0))])
    apply_pauli(state, 0, "X")
    assert np.allclose(state.amplitudes, [0, 1])


def test_pauli_z_shifts_theta_half_turn():
    for k in range(8):
        state = prepare([(0, PrepSpec.plus_theta(k))])
        apply_pauli(state, 0, "Z")
        target = prepare([(0, PrepSpec.plus_theta((k + 4) % 8))]).amplitudes
        overlap = abs(np.vdot(target, state.amplitudes))
        assert overlap == pytest.approx(1.0, abs=1e-12)


def test_pauli_identity_noop():
    state = prepare([(0, PrepSpec.plus_theta(3))])
    before = state.amplitudes.copy()
    apply_pauli(state, 0, "I")
    assert np.allclose(state.amplitudes, before)


def test_pauli_unknown():
    state = prepare([(0, PrepSpec.plus_theta(0))])
    with pytest.raises(StateError):
        apply_pauli(state, 0, "Q")


def test_unitary_must_be_unitary():
    state = prepare([(0, PrepSpec.plus_theta(0))])
    with pytest.raises(StateError):
        apply_unitary(state, 0, [[1, 0], [0, 2]])


def test_measure_same_basis_deterministic_zero():
    for k in range(8):
        state = prepare([(0, PrepSpec.plus_theta(k))])
        outcome, _ = measure_angle(state, 0, k, FakeRng([0.999999]))
        assert outcome == 0


def test_measure_opposite_basis_deterministic_one():
    for k in range(8):
        state = prepare([(0, PrepSpec.plus_theta(k))])
        outcome, _ = measure_angle(state, 0, (k + 4) % 8, FakeRng([1e-9]))
        assert outcome == 1


def test_measure_dummy_fifty_fifty():
    # |0> measured in any equatorial basis: outcome decided by u <> 1/2
    for delta in range(8):
        state = prepare([(0, PrepSpec.dummy(0))])
        outcome, _ = measure_angle(state, 0, delta, FakeRng([0.4999]))
        assert outcome == 0
        state = prepare([(0, PrepSpec.dummy(0))])
        outcome, _ = measure_angle(state, 0, delta, FakeRng([0.5001]))
        assert outcome == 1


def test_measure_removes_qubit():
    state = prepare([(0, PrepSpec.plus_theta(0)), (1, PrepSpec.dummy(0))])
    _, state = measure_angle(state, 0, 0, FakeRng([0.3]))
    assert state.live_vertices() == {1}
    with pytest.raises(StateError):
        measure_angle(state, 0, 0, FakeRng([0.3]))


def test_measure_collapse_matches_analytic():
    # CZ(|+>|+>) measured at angle 0 on qubit 0 collapses qubit 1 to |0> or |1>
    for u in (0.2, 0.9):
        state = prepare([(0, PrepSpec.plus_theta(0)), (1, PrepSpec.plus_theta(0))])
        apply_cz(state, (0, 1))
        outcome, rest = measure_angle(state, 0, 0, FakeRng([u]))
        target = np.array([1, 0] if outcome == 0 else [0, 1])
        assert abs(np.vdot(target, rest.amplitudes)) == pytest.approx(1.0, abs=1e-12)


def test_norm_preserved_through_circuit():
    rng = stream(11, "norm")
    for trial in range(25):
        q = int(rng.integers(1, 6))
        specs = []
        for v in range(q):
            if rng.integers(0, 2):
                specs.append((v, PrepSpec.plus_theta(int(rng.integers(0, 8)))))
            else:
                specs.append((v, PrepSpec.dummy(int(rng.integers(0, 2)))))
        state = prepare(specs)
        for _ in range(4):
            a, b = rng.integers(0, q, size=2)
            if a != b:
                apply_cz(state, (int(a), int(b)))
            apply_pauli(state, int(rng.integers(0, q)), "XYZI"[rng.integers(0, 4)])
        state.assert_normalized()
        while state.qubit_count:
            v = sorted(state.live_vertices())[0]
            _, state = measure_angle(state, v, int(rng.integers(0, 8)), rng)
            if state.qubit_count:
                state.assert_normalized()


def test_trap_identity_star_graphs():
    # trap |+_theta> with dummy leaves: after CZ, reading at theta + r*pi
    # gives r xor parity(d) whatever the dummies and the measurement order
    for leaves in range(1, 5):
        for theta, r in itertools.product(range(8), range(2)):
            for dbits in itertools.product(range(2), repeat=leaves):
                state = prepare([(0, PrepSpec.plus_theta(theta))] +
                                [(i + 1, PrepSpec.dummy(d)) for i, d in enumerate(dbits)])
                for i in range(leaves):
                    apply_cz(state, (0, i + 1))
                outcome, _ = measure_angle(state, 0, (theta + 4 * r) % 8,
                                           FakeRng([0.5]))
                assert outcome == r ^ (sum(dbits) & 1)


def test_seed_determinism():
    def run(seed):
        rng = stream(seed, "det")
        bits = []
        for _ in range(50):
            state = prepare([(0, PrepSpec.plus_theta(1)), (1, PrepSpec.plus_theta(5))])
            apply_cz(state, (0, 1))
            b0, state = measure_angle(state, 0, 3, rng)
            b1, _ = measure_angle(state, 1, 6, rng)
            bits.append((b0, b1))
        return bits

    assert run(123) == run(123)
    assert run(123) != run(124)


def test_numpy_path_matches_list_path():
    # pad a 2-qubit circuit with idle dummies to push it onto the array path
    def run(pad):
        specs = [(0, PrepSpec.plus_theta(3)), (1, PrepSpec.plus_theta(6))]
        specs += [(2 + i, PrepSpec.dummy(0)) for i in range(pad)]
        state = prepare(specs)
        apply_cz(state, (0, 1))
        apply_pauli(state, 1, "Y")
        b0, state = measure_angle(state, 0, 2, FakeRng([0.37]))
        b1, state = measure_angle(state, 1, 5, FakeRng([0.81]))
        return b0, b1

    assert run(0) == run(9)  # 2^11 amplitudes forces the numpy branch


def test_dump_contains_amplitudes():
    state = prepare([(0, PrepSpec.dummy(1))])
    text = state.dump()
    assert "|1>" in text and "+1.000000000000" in text
