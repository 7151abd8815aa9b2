import math

import pytest

from vbqclab.bounds import binomial_exact_cdf
from vbqclab.harness import (ConfigError, ExperimentConfig,
                             compare_bound_vs_empirical, enumerate_exact,
                             format_config, load_config, parse_config,
                             resolve_pattern, run_experiment, wilson_interval)
from vbqclab.pattern import builtin_pattern
from vbqclab.threat import EmAttack, NoiseModel


def test_wilson_interval_basics():
    lo, hi = wilson_interval(0, 100)
    assert lo == pytest.approx(0.0, abs=1e-12) and 0.0 < hi < 0.05
    lo, hi = wilson_interval(100, 100)
    assert 0.95 < lo < 1.0 and hi == pytest.approx(1.0, abs=1e-12)
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_config_round_trip():
    config = ExperimentConfig(pattern="identity2", n=8, d=5, t=3, w=2, p=0.0,
                              trials=123, seed=9, input_bits=(1,), expect="1",
                              noise=NoiseModel("per_qubit_pauli", pz=0.125),
                              em=EmAttack(4, "Z"), flip_p=0.25, redo_first=1)
    assert parse_config(format_config(config)) == config


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config("pattern identity2\n")  # missing version
    with pytest.raises(ConfigError):
        parse_config("version 1\nwibble 3\n")
    with pytest.raises(ConfigError):
        parse_config("version 1\nnoise gaussian 0.1\n")
    with pytest.raises(ConfigError):
        parse_config("version 1\ntrials 0\n")


def test_config_file_and_pattern_resolution(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(format_config(ExperimentConfig(pattern="identity1", n=2,
                                                   d=1, t=1, w=1, trials=5)))
    config = load_config(path)
    assert resolve_pattern(config).graph.vertex_count == 1


def test_honest_experiment_accepts_everything():
    config = ExperimentConfig(pattern="identity2", n=6, d=3, t=3, w=1,
                              trials=1000, seed=3, input_bits=(0,), expect="0")
    report = run_experiment(config, analytic=False)
    assert report.accept_count == 1000
    assert report.fail_count == 0
    assert report.cfail_hist[0] == 1000
    assert report.rates["accept"]["rate"] == 1.0


def test_report_reproducible_byte_for_byte():
    config = ExperimentConfig(pattern="identity2", n=6, d=3, t=3, w=1,
                              trials=400, seed=11,
                              noise=NoiseModel("per_qubit_pauli", pz=0.2))
    assert run_experiment(config).dumps() == run_experiment(config).dumps()


def test_experiment_analytic_block():
    config = ExperimentConfig(pattern="identity2", n=20, d=10, t=10, w=2,
                              trials=200, seed=1,
                              noise=NoiseModel("per_qubit_pauli", pz=0.05))
    report = run_experiment(config)
    assert report.analytic["q_mean"] == pytest.approx(0.05)
    assert "epsilon_rej" in report.analytic  # omega 0.2 > q 0.05
    assert "epsilon_ver" in report.analytic  # theorem compliant


def test_flip_injection_changes_tallies():
    config = ExperimentConfig(pattern="identity2", n=6, d=3, t=3, w=1,
                              trials=2000, seed=8, input_bits=(0,), expect="0",
                              flip_p=1.0)
    report = run_experiment(config, analytic=False)
    # every output flipped: the majority is always the wrong answer
    assert report.fail_count == report.accept_count == 2000


def test_majority_vote_robustness_bound():
    # flip each computation output independently with q < 1/2: the wrong
    # majority rate obeys the binomial tail bound
    q = 0.2
    for d in (5, 11, 21):
        config = ExperimentConfig(pattern="identity2", n=d + 1, d=d, t=1, w=1,
                                  trials=10000, seed=d, input_bits=(0,),
                                  expect="0", flip_p=q)
        report = run_experiment(config, analytic=False)
        wrong = report.fail_count + report.abort_counts["no_majority"]
        lo, _ = wilson_interval(wrong, report.trials)
        bound = math.exp(-2 * (0.5 - q) ** 2 * d)
        assert lo <= bound


def test_x_flood_aborts_with_high_probability():
    # physical X on every qubit of every round: each test round fails with
    # probability 1/2 (the trap coin), so w=1 aborts almost surely
    from vbqclab.threat import AttackScript, Directive
    n, t = 10, 5
    script = AttackScript({j: (Directive(0, "pauli", "X"),
                               Directive(1, "pauli", "X")) for j in range(n)})
    config = ExperimentConfig(pattern="identity2", n=n, d=n - t, t=t, w=1,
                              trials=2000, seed=55, input_bits=(0,),
                              attack=script)
    report = run_experiment(config, analytic=False)
    abort_rate = 1 - report.accept_count / report.trials
    # per-round failure exactly 1/2 -> abort rate 1 - 2^-5 ~ 0.97
    assert abort_rate > 0.9


def test_em_attack_full_rate_matches_binomial_oracle():
    # every round attacked, w = 1: accept iff no test round catches it,
    # which is exactly Binomial(t, 1/2) = 0
    t = 10
    config = ExperimentConfig(pattern="identity2", n=20, d=10, t=t, w=1,
                              trials=10000, seed=21, input_bits=(0,),
                              expect="0", em=EmAttack(20, "Z"))
    report = run_experiment(config, analytic=False)
    exact = binomial_exact_cdf(t, 0.5, 0)
    lo, hi = wilson_interval(report.accept_count, report.trials)
    assert lo <= exact <= hi


def test_compare_bound_vs_empirical_rows():
    report = run_experiment(ExperimentConfig(
        pattern="identity2", n=20, d=10, t=10, w=2, trials=500, seed=2,
        noise=NoiseModel("per_qubit_pauli", pz=0.05)))
    rows = compare_bound_vs_empirical(report)
    by_name = {row["quantity"]: row for row in rows}
    assert not by_name["abort"]["violation"]
    # a fabricated too-small bound must flag
    rows = compare_bound_vs_empirical(report, bound_values={"epsilon_rej": 1e-9})
    assert any(r["violation"] for r in rows if r["quantity"] == "abort") or \
        report.rates["abort"]["wilson_lo"] == 0.0


def test_compare_examples_from_table():
    class Dummy:
        rates = {"abort": {"rate": 0.01, "wilson_lo": 0.005, "wilson_hi": 0.02}}
        analytic = {"epsilon_rej": 0.05}
    rows = compare_bound_vs_empirical(Dummy())
    assert rows == [{"quantity": "abort", "empirical": 0.01, "wilson_lo": 0.005,
                     "wilson_hi": 0.02, "bound": 0.05, "violation": False}]

    class Dummy2:
        rates = {"abort": {"rate": 0.10, "wilson_lo": 0.08, "wilson_hi": 0.12}}
        analytic = {"epsilon_rej": 0.05}
    rows = compare_bound_vs_empirical(Dummy2())
    assert rows[0]["violation"]


def test_enumerate_exact_wrapper_capacity():
    from vbqclab.exact import EnumerationCapacityError
    with pytest.raises(EnumerationCapacityError):
        enumerate_exact(builtin_pattern("identity2"), "computation", max_space=4)


def test_enumerate_exact_wrapper_works():
    dist = enumerate_exact(builtin_pattern("identity1"), "test")
    from vbqclab.exact import Cyc8
    assert dist.fail_probability == Cyc8(0)
