import itertools
from collections import Counter

import pytest
from scipy.stats import chi2

from vbqclab.pattern import Graph, MeasurementPattern, builtin_pattern
from vbqclab.rng import stream
from vbqclab.ubqc import (ProtocolOrderError, RoundSecrets, corrected_phi,
                          decode_outcome, delta_computation, delta_test,
                          sample_secrets, trap_expected)


def pattern_with_deps(angle, x_deps, z_deps):
    # 3 vertices, enough structure to exercise both dependency kinds
    graph = Graph.make(3, [(0, 1), (1, 2)])
    from vbqclab.pattern import DependencyStructure
    deps = DependencyStructure(
        {0: frozenset(), 1: frozenset(), 2: frozenset(x_deps)},
        {0: frozenset(), 1: frozenset(), 2: frozenset(z_deps)})
    return MeasurementPattern.build(graph, (), (2,), [0, 0, angle], deps=deps)


def comp_secrets(thetas, rbits, inputs=()):
    return RoundSecrets("computation", thetas=dict(thetas), r_bits=dict(rbits),
                        dummies={}, input_bits=tuple(inputs))


def test_corrected_phi_no_corrections():
    pattern = pattern_with_deps(1, (), ())
    assert corrected_phi(2, pattern, {}) == 1


def test_corrected_phi_x_flip():
    pattern = pattern_with_deps(1, (0,), ())
    assert corrected_phi(2, pattern, {0: 1}) == 7
    assert corrected_phi(2, pattern, {0: 0}) == 1


def test_corrected_phi_x_and_z():
    pattern = pattern_with_deps(1, (0,), (1,))
    assert corrected_phi(2, pattern, {0: 1, 1: 1}) == 3


def test_corrected_phi_missing_dependency():
    pattern = pattern_with_deps(1, (0,), ())
    with pytest.raises(ProtocolOrderError):
        corrected_phi(2, pattern, {})


def test_delta_computation_basic():
    pattern = pattern_with_deps(3, (), ())
    secrets = comp_secrets({2: 2}, {2: 0})
    assert delta_computation(2, secrets, pattern, {}) == 5


def test_delta_computation_r_half_turn():
    pattern = pattern_with_deps(0, (), ())
    secrets = comp_secrets({2: 0}, {2: 1})
    assert delta_computation(2, secrets, pattern, {}) == 4


def test_delta_computation_input_pad():
    graph = Graph.make(1, [])
    pattern = MeasurementPattern.build(graph, (0,), (0,), [0])
    secrets = comp_secrets({0: 1}, {0: 0}, inputs=(1,))
    assert delta_computation(0, secrets, pattern, {}) == 5


def test_delta_computation_rejects_dummy():
    pattern = builtin_pattern("identity2")
    secrets = RoundSecrets("test", thetas={0: 0}, r_bits={0: 0}, dummies={1: 0},
                           trap_color=0)
    with pytest.raises(ValueError):
        delta_computation(1, secrets, pattern, {})


def test_delta_test_trap():
    secrets = RoundSecrets("test", thetas={0: 1}, r_bits={0: 1}, dummies={},
                           trap_color=0)
    assert delta_test(0, secrets, None) == 5
    secrets = RoundSecrets("test", thetas={0: 0}, r_bits={0: 0}, dummies={},
                           trap_color=0)
    assert delta_test(0, secrets, None) == 0


def test_delta_test_dummy_uniform():
    secrets = RoundSecrets("test", thetas={}, r_bits={}, dummies={0: 1},
                           trap_color=0)
    rng = stream(5, "dummy")
    counts = Counter(delta_test(0, secrets, rng) for _ in range(80000))
    # chi-square against uniform over 8 values, 5-sigma-ish quantile
    expected = 80000 / 8
    statistic = sum((counts[k] - expected) ** 2 / expected for k in range(8))
    assert statistic < chi2.ppf(1 - 5.7e-7, df=7)


def test_sample_secrets_computation_shape():
    pattern = builtin_pattern("identity2")
    secrets = sample_secrets("computation", pattern, stream(1), input_bits=(1,))
    assert set(secrets.thetas) == {0, 1}
    assert set(secrets.r_bits) == {0, 1}
    assert secrets.dummies == {}
    assert secrets.input_bits == (1,)


def test_sample_secrets_test_roles():
    pattern = builtin_pattern("identity2")
    for seed in range(20):
        secrets = sample_secrets("test", pattern, stream(seed, "roles"))
        trap = 0 if secrets.trap_color == 0 else 1
        dummy = 1 - trap
        assert set(secrets.thetas) == {trap}
        assert set(secrets.r_bits) == {trap}
        assert set(secrets.dummies) == {dummy}


def test_sample_secrets_input_length_check():
    pattern = builtin_pattern("identity2")
    with pytest.raises(ValueError):
        sample_secrets("computation", pattern, stream(1), input_bits=(0, 1))


def test_sample_secrets_unknown_kind():
    with pytest.raises(ValueError):
        sample_secrets("weird", builtin_pattern("identity1"), stream(1))


def test_theta_distribution_uniform():
    pattern = builtin_pattern("identity1")
    rng = stream(17, "theta")
    counts = Counter()
    for _ in range(80000):
        secrets = sample_secrets("computation", pattern, rng)
        counts[secrets.thetas[0]] += 1
    expected = 80000 / 8
    statistic = sum((counts[k] - expected) ** 2 / expected for k in range(8))
    assert statistic < chi2.ppf(1 - 5.7e-7, df=7)


def test_decode_outcome():
    secrets = comp_secrets({0: 0}, {0: 1})
    assert decode_outcome(0, 1, secrets) == 0
    assert decode_outcome(0, 0, secrets) == 1
    secrets = comp_secrets({0: 0}, {0: 0})
    assert decode_outcome(0, 1, secrets) == 1


def test_decode_outcome_rejects_dummy():
    secrets = RoundSecrets("test", thetas={}, r_bits={}, dummies={0: 0},
                           trap_color=0)
    with pytest.raises(ValueError):
        decode_outcome(0, 1, secrets)


def test_trap_expected_isolated():
    graph = Graph.make(1, [])
    secrets = RoundSecrets("test", thetas={0: 3}, r_bits={0: 0}, dummies={},
                           trap_color=0)
    assert trap_expected(0, secrets, graph) == 0


def test_trap_expected_with_dummies():
    graph = Graph.make(2, [(0, 1)])
    secrets = RoundSecrets("test", thetas={0: 0}, r_bits={0: 1}, dummies={1: 1},
                           trap_color=0)
    assert trap_expected(0, secrets, graph) == 0
    graph3 = Graph.make(3, [(0, 1), (0, 2)])
    secrets = RoundSecrets("test", thetas={0: 0}, r_bits={0: 0},
                           dummies={1: 1, 2: 1}, trap_color=0)
    assert trap_expected(0, secrets, graph3) == 0


def test_trap_expected_rejects_non_trap():
    graph = Graph.make(2, [(0, 1)])
    secrets = RoundSecrets("test", thetas={0: 0}, r_bits={0: 0}, dummies={1: 0},
                           trap_color=0)
    with pytest.raises(ValueError):
        trap_expected(1, secrets, graph)


def test_delta_multiset_uniform_for_every_angle_and_input():
    # one-vertex blindness at the message level: over all (theta, r), the
    # multiset of deltas is uniform whatever the angle or the input bit
    graph = Graph.make(1, [])
    for angle in range(8):
        pattern = MeasurementPattern.build(graph, (0,), (0,), [angle])
        for x in (0, 1):
            deltas = Counter()
            for theta, r in itertools.product(range(8), range(2)):
                secrets = comp_secrets({0: theta}, {0: r}, inputs=(x,))
                deltas[delta_computation(0, secrets, pattern, {})] += 1
            assert all(deltas[k] == 2 for k in range(8))
