import itertools
from fractions import Fraction

import numpy as np
import pytest

from vbqclab.exact import (Cyc8, EnumerationCapacityError, ExactState,
                           enumerate_round, trap_check_exact)
from vbqclab.pattern import builtin_pattern
from vbqclab.statevector import PrepSpec, apply_cz, prepare
from vbqclab.threat import Directive


def test_cyc8_roots_of_unity():
    z = Cyc8.zeta_power(1)
    acc = Cyc8(1)
    values = []
    for _ in range(8):
        acc = acc * z
        values.append(acc)
    assert values[3] == Cyc8.zeta_power(4) == Cyc8(-1)
    assert values[7] == Cyc8(1)


def test_cyc8_conjugation_and_abs2():
    z = Cyc8.zeta_power(1)
    assert z * z.conj() == Cyc8(1)
    inv_sqrt2 = Cyc8(0, Fraction(1, 2), 0, Fraction(-1, 2))
    amp = inv_sqrt2 * (Cyc8(1) + Cyc8.zeta_power(2))  # (|0>+i|1>)/sqrt2 entry sum
    assert amp.abs2().real_pair() == (Fraction(1), Fraction(0))


def test_cyc8_sqrt2():
    sqrt2 = Cyc8(0, 1, 0, -1)
    assert sqrt2 * sqrt2 == Cyc8(2)
    assert sqrt2.real_pair() == (Fraction(0), Fraction(1))
    assert sqrt2.to_float() == pytest.approx(np.sqrt(2.0))


def test_cyc8_complex_evaluation():
    for k in range(8):
        assert Cyc8.zeta_power(k).to_complex() == pytest.approx(
            np.exp(1j * k * np.pi / 4))


def test_cyc8_not_real_raises():
    with pytest.raises(ValueError):
        Cyc8.zeta_power(2).real_pair()


def test_exact_state_matches_float_engine():
    specs = [(0, "plus_theta", 3), (1, "dummy", 1), (2, "plus_theta", 6)]
    exact_state = ExactState.prepare(specs)
    float_state = prepare([(0, PrepSpec.plus_theta(3)), (1, PrepSpec.dummy(1)),
                           (2, PrepSpec.plus_theta(6))])
    exact_state.apply_cz(0, 1)
    exact_state.apply_cz(1, 2)
    apply_cz(float_state, (0, 1))
    apply_cz(float_state, (1, 2))
    exact_amps = np.array([a.to_complex() for a in exact_state.amps])
    assert np.allclose(exact_amps, float_state.amplitudes, atol=1e-12)


def test_exact_pauli_matches_float():
    from vbqclab.statevector import apply_pauli
    for pauli in ("X", "Y", "Z"):
        exact_state = ExactState.prepare([(0, "plus_theta", 5)])
        float_state = prepare([(0, PrepSpec.plus_theta(5))])
        exact_state.apply_pauli(0, pauli)
        apply_pauli(float_state, 0, pauli)
        exact_amps = np.array([a.to_complex() for a in exact_state.amps])
        assert np.allclose(exact_amps, float_state.amplitudes, atol=1e-12)


def test_exact_projection_weights_sum_to_one():
    state = ExactState.prepare([(0, "plus_theta", 2), (1, "plus_theta", 7)])
    state.apply_cz(0, 1)
    total = Cyc8()
    for b0, b1 in itertools.product((0, 1), repeat=2):
        branch = state.project(0, 3, b0).project(1, 6, b1)
        total = total + branch.weight()
    assert total == Cyc8(1)


def test_enumerate_round_total_probability_one():
    pattern = builtin_pattern("identity2")
    for kind in ("computation", "test"):
        dist = enumerate_round(pattern, kind)
        assert dist.total() == Cyc8(1)


def test_enumerate_computation_outputs_deterministic():
    pattern = builtin_pattern("identity2")
    for x in (0, 1):
        dist = enumerate_round(pattern, "computation", input_bits=(x,))
        assert dist.output_probs == {str(x): Cyc8(1)}
    pattern3 = builtin_pattern("identity3")
    dist = enumerate_round(pattern3, "computation", input_bits=(1,))
    assert dist.output_probs == {"1": Cyc8(1)}


def test_enumerate_not_gate():
    dist = enumerate_round(builtin_pattern("not2"), "computation", input_bits=(0,))
    assert dist.output_probs == {"1": Cyc8(1)}


def test_enumerate_coin_bias_exact():
    # single vertex read one step off its basis: P(1) = sin^2(pi/8) = (2-sqrt2)/4
    dist = enumerate_round(builtin_pattern("coin1"), "computation", input_bits=(0,))
    expected = Cyc8(Fraction(1, 2)) - Cyc8(0, Fraction(1, 4), 0, Fraction(-1, 4))
    assert dist.output_probs["1"] == expected
    assert dist.output_probs["1"].to_float() == pytest.approx(np.sin(np.pi / 8) ** 2)


def test_enumerate_test_round_honest_never_fails():
    for name in ("identity1", "identity2"):
        dist = enumerate_round(builtin_pattern(name), "test")
        assert dist.fail_probability == Cyc8(0)


def test_enumerate_outcome_flip_fail_half():
    dist = enumerate_round(builtin_pattern("identity2"), "test",
                           deviations=(Directive(0, "pauli", "Z"),))
    assert dist.fail_probability == Cyc8(Fraction(1, 2))


def test_enumerate_lie_equals_physical_z():
    pattern = builtin_pattern("identity2")
    lie = enumerate_round(pattern, "test",
                          deviations=(Directive(0, "lie_outcome"),))
    phys = enumerate_round(pattern, "test",
                           deviations=(Directive(0, "pauli", "Z"),))
    assert lie.fail_probability == phys.fail_probability
    assert lie.same_messages(phys)


def test_enumerate_capacity_guard():
    with pytest.raises(EnumerationCapacityError):
        enumerate_round(builtin_pattern("identity2"), "computation",
                        max_space=10)


def test_enumerate_rejects_unitary_deviation():
    hadamard = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    with pytest.raises(EnumerationCapacityError):
        enumerate_round(builtin_pattern("identity1"), "test",
                        deviations=(Directive(0, "unitary", hadamard),))


def test_trap_check_exact_honest_zero():
    for name, colours in (("identity2", (0, 1)), ("star4", (0,))):
        pattern = builtin_pattern(name)
        for colour in colours:
            check = trap_check_exact(pattern, colour)
            assert check.fail_probability == Cyc8(0)
            assert check.worst_config_fail == Cyc8(0)


def test_trap_check_wrong_angle_offset():
    # offsetting the trap readout by a half turn flips it deterministically
    pattern = builtin_pattern("identity1")
    check = trap_check_exact(pattern, 0,
                             (Directive(0, "measure_wrong_angle", 4),))
    assert check.fail_probability == Cyc8(1)
