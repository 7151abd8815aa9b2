"""Monte Carlo experiment runner and empirical-vs-analytic comparison.

Inherent algorithmic error can be simulated two ways: analytically, by
running a pattern whose honest output is a biased coin (builtin "coin1"),
or by flipping honest computation-round outputs after the fact with a
configured probability. The post-hoc flip is the default for speed; both
feed the same verification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from . import bounds as bounds_mod
from . import exact
from ._fastpath import CompiledPattern, FastPathUnsupported, run_protocol_fast
from .pattern import MeasurementPattern, builtin_pattern, load_pattern
from .rng import stream
from .rounds import ProtocolParams, run_protocol, verify_and_vote
from .threat import (Adversary, AttackScript, EmAttack, NoiseModel,
                     UnsupportedModelError, em_attack_build, parse_attack,
                     parse_noise, redo_first_attempts, trap_failure_by_colour)

__all__ = [
    "ConfigError",
    "wilson_interval",
    "ExperimentConfig",
    "ExperimentReport",
    "parse_config",
    "format_config",
    "load_config",
    "resolve_pattern",
    "run_experiment",
    "enumerate_exact",
    "compare_bound_vs_empirical",
]

_Z95 = 1.959963984540054


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def wilson_interval(successes: int, trials: int, z: float = _Z95):
    """Wilson score interval; well behaved for rates at the extremes."""
    if trials <= 0:
        return (0.0, 1.0)
    phat = successes / trials
    zz = z * z
    denom = 1.0 + zz / trials
    centre = (phat + zz / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + zz / (4 * trials * trials)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass(frozen=True)
class ExperimentConfig:
    pattern: str = "identity2"
    n: int = 6
    d: int = 3
    t: int = 3
    w: int = 1
    p: float = 0.0
    trials: int = 1000
    seed: int = 0
    input_bits: tuple = (0,)
    expect: str | None = None
    noise: NoiseModel | None = None
    attack: AttackScript | None = None
    em: EmAttack | None = None
    flip_p: float = 0.0
    redo_first: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")


def parse_config(text: str) -> ExperimentConfig:
    """Parse the versioned key-value experiment format.

    ::

        version 1
        pattern identity2       # builtin name or a .pat file path
        n 6
        d 3
        t 3
        w 1
        p 0.0
        trials 1000
        seed 42
        input 0
        expect 0
        noise pauli 0.0 0.0 0.1 # none | pauli px py pz | file <path>
        attack em 3 Z           # none | em <m> <pauli> | file <path>
        flip_p 0.0
        redo_first 0
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        key, args = fields[0], fields[1:]
        try:
            if key == "version":
                values["version"] = int(args[0])
            elif key in ("n", "d", "t", "w", "trials", "seed", "redo_first"):
                values[key] = int(args[0])
            elif key in ("p", "flip_p"):
                values[key] = float(args[0])
            elif key == "pattern":
                values["pattern"] = args[0]
            elif key == "expect":
                values["expect"] = args[0]
            elif key == "input":
                values["input_bits"] = tuple(int(a) for a in args)
            elif key == "noise":
                if args[0] == "none":
                    values["noise"] = None
                elif args[0] == "pauli":
                    values["noise"] = NoiseModel("per_qubit_pauli",
                                                 px=float(args[1]),
                                                 py=float(args[2]),
                                                 pz=float(args[3]))
                elif args[0] == "file":
                    with open(args[1], "r", encoding="utf-8") as fh:
                        values["noise"] = parse_noise(fh.read())
                else:
                    raise ConfigError(f"line {lineno}: unknown noise form {args[0]!r}")
            elif key == "attack":
                if args[0] == "none":
                    pass
                elif args[0] == "em":
                    values["em"] = EmAttack(int(args[1]),
                                            args[2] if len(args) > 2 else "Z")
                elif args[0] == "file":
                    with open(args[1], "r", encoding="utf-8") as fh:
                        values["attack"] = parse_attack(fh.read())
                else:
                    raise ConfigError(f"line {lineno}: unknown attack form {args[0]!r}")
            else:
                raise ConfigError(f"line {lineno}: unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: malformed {key!r} line") from exc
    if values.pop("version", None) != 1:
        raise ConfigError("missing or unsupported config version")
    return ExperimentConfig(**values)


def format_config(config: ExperimentConfig) -> str:
    lines = ["version 1", f"pattern {config.pattern}",
             f"n {config.n}", f"d {config.d}", f"t {config.t}", f"w {config.w}",
             f"p {config.p!r}", f"trials {config.trials}", f"seed {config.seed}",
             "input " + " ".join(str(b) for b in config.input_bits)]
    if config.expect is not None:
        lines.append(f"expect {config.expect}")
    if config.noise is not None and config.noise.kind == "per_qubit_pauli":
        lines.append(f"noise pauli {config.noise.px!r} {config.noise.py!r} "
                     f"{config.noise.pz!r}")
    if config.em is not None:
        lines.append(f"attack em {config.em.m} {config.em.pauli}")
    if config.flip_p:
        lines.append(f"flip_p {config.flip_p!r}")
    if config.redo_first:
        lines.append(f"redo_first {config.redo_first}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def resolve_pattern(config: ExperimentConfig) -> MeasurementPattern:
    name = config.pattern
    if name.endswith(".pat") or "/" in name:
        return load_pattern(name)
    return builtin_pattern(name)


def params_from_config(config: ExperimentConfig,
                       pattern: MeasurementPattern) -> ProtocolParams:
    return ProtocolParams(n=config.n, d=config.d, t=config.t, w=config.w,
                          k=pattern.k, p=config.p)


def adversary_for_trial(config: ExperimentConfig, params: ProtocolParams,
                        pattern: MeasurementPattern, trial: int) -> Adversary:
    """The adversary instance a given trial runs against (fresh vertex draws
    per trial for the single-deviation family)."""
    if config.em is not None:
        script = em_attack_build(config.em.m, params, pattern, config.em.pauli,
                                 stream(config.seed, trial, "attack"))
    else:
        script = config.attack
    redo_policy = redo_first_attempts(config.redo_first) if config.redo_first else None
    return Adversary(noise=config.noise, script=script, redo_policy=redo_policy)


@dataclass
class ExperimentReport:
    config_text: str
    trials: int
    accept_count: int
    abort_counts: dict
    fail_count: int | None
    cfail_hist: list
    rates: dict
    analytic: dict

    def to_json(self) -> dict:
        return {
            "schema": "vbqclab-experiment-report/1",
            "config": self.config_text,
            "trials": self.trials,
            "accept_count": self.accept_count,
            "abort_counts": dict(sorted(self.abort_counts.items())),
            "fail_count": self.fail_count,
            "cfail_hist": list(self.cfail_hist),
            "rates": {k: self.rates[k] for k in sorted(self.rates)},
            "analytic": {k: self.analytic[k] for k in sorted(self.analytic)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def to_csv(self) -> str:
        lines = ["quantity,count,rate,wilson_lo,wilson_hi"]
        for name in sorted(self.rates):
            entry = self.rates[name]
            lines.append(f"{name},{entry['count']},{entry['rate']!r},"
                         f"{entry['wilson_lo']!r},{entry['wilson_hi']!r}")
        return "\n".join(lines) + "\n"


def _rate_entry(count: int, trials: int) -> dict:
    lo, hi = wilson_interval(count, trials)
    return {"count": count, "rate": count / trials, "wilson_lo": lo, "wilson_hi": hi}


def _analytic_block(config, pattern, params) -> dict:
    analytic = {}
    if config.noise is not None:
        try:
            by_colour = trap_failure_by_colour(config.noise, pattern)
            values = list(by_colour.values())
            q_min, q_max = min(values), max(values)
            q_mean = sum(values) / len(values)
            analytic["q_by_colour"] = {str(c): q for c, q in sorted(by_colour.items())}
            analytic["q_mean"] = q_mean
            if params.omega > q_max:
                analytic["epsilon_rej"] = bounds_mod.epsilon_rej(
                    params.omega, q_max, params.tau, params.n)
            if params.omega < q_min:
                analytic["epsilon_accept_excess"] = \
                    bounds_mod.epsilon_accept_under_excess_noise(
                        params.omega, q_min, params.tau, params.n)
        except UnsupportedModelError:
            pass
    if params.theorem_compliant:
        try:
            report = bounds_mod.minimize_epsilon_ver(params, grid_axis=14)
            analytic["epsilon_ver"] = report.epsilon_ver
            analytic["epsilon_sec"] = report.epsilon_sec
        except bounds_mod.InfeasibleError:
            pass
    return analytic


def run_experiment(config: ExperimentConfig,
                   pattern: MeasurementPattern | None = None,
                   analytic: bool = True, engine: str = "auto") -> ExperimentReport:
    """Run `trials` independent protocol executions and aggregate.

    Deterministic given the config seed: trial i draws from the (seed, i)
    streams, so the summary is byte-for-byte reproducible and the loop is
    embarrassingly parallel in principle (counters commute). The fused
    engine handles the common configurations and produces transcripts
    identical to the reference engine for the same seed; anything it
    cannot express falls back automatically.
    """
    if engine not in ("auto", "fast", "reference"):
        raise ConfigError(f"unknown engine {engine!r}")
    if pattern is None:
        pattern = resolve_pattern(config)
    params = params_from_config(config, pattern)
    compiled = None
    if engine in ("auto", "fast"):
        try:
            compiled = CompiledPattern(pattern)
        except FastPathUnsupported:
            if engine == "fast":
                raise
    accept = 0
    aborts = {"too_many_failed_tests": 0, "no_majority": 0}
    fail = 0 if config.expect is not None else None
    cfail_hist = [0] * (params.t + 1)
    for trial in range(config.trials):
        adversary = adversary_for_trial(config, params, pattern, trial)
        if compiled is not None:
            try:
                verdict, transcripts = run_protocol_fast(
                    params, pattern, compiled, input_bits=config.input_bits,
                    adversary=adversary, seed=config.seed, session=trial)
            except FastPathUnsupported:
                if engine == "fast":
                    raise
                compiled = None
                verdict, transcripts, _ = run_protocol(
                    params, pattern, input_bits=config.input_bits,
                    adversary=adversary, seed=config.seed, session=trial)
        else:
            verdict, transcripts, _ = run_protocol(
                params, pattern, input_bits=config.input_bits, adversary=adversary,
                seed=config.seed, session=trial)
        if config.flip_p > 0.0:
            flips = stream(config.seed, trial, "flip").random(size=params.n)
            for tr, u in zip(transcripts, flips):
                if tr.plan.kind == "computation" and u < config.flip_p:
                    tr.result = "".join("1" if c == "0" else "0" for c in tr.result)
            verdict = verify_and_vote(transcripts, params)
        cfail_hist[min(verdict.c_fail, params.t)] += 1
        if verdict.status == "ok":
            accept += 1
            if fail is not None and verdict.y != config.expect:
                fail += 1
        else:
            aborts[verdict.reason] += 1
    trials = config.trials
    rates = {
        "accept": _rate_entry(accept, trials),
        "abort": _rate_entry(trials - accept, trials),
        "abort_tests": _rate_entry(aborts["too_many_failed_tests"], trials),
        "abort_majority": _rate_entry(aborts["no_majority"], trials),
    }
    if fail is not None:
        rates["accepted_wrong"] = _rate_entry(fail, trials)
    report = ExperimentReport(
        config_text=format_config(config),
        trials=trials,
        accept_count=accept,
        abort_counts=aborts,
        fail_count=fail,
        cfail_hist=cfail_hist,
        rates=rates,
        analytic=_analytic_block(config, pattern, params) if analytic else {},
    )
    return report


def enumerate_exact(pattern: MeasurementPattern, round_kind: str, deviation=(),
                    input_bits=None, max_space: int = 2 ** 24):
    """Exact outcome distribution of one round; see `exact.enumerate_round`."""
    return exact.enumerate_round(pattern, round_kind, deviations=deviation,
                                 input_bits=input_bits, max_space=max_space)


def compare_bound_vs_empirical(report: ExperimentReport,
                               bound_values: dict | None = None) -> list:
    """Per-quantity verdict rows; a VIOLATION means the Wilson interval's
    lower edge exceeds the analytic bound."""
    values = dict(report.analytic)
    if bound_values:
        values.update(bound_values)
    rows = []
    pairs = [
        ("abort", "epsilon_rej"),
        ("accept", "epsilon_accept_excess"),
        ("accepted_wrong", "epsilon_ver"),
    ]
    for rate_name, bound_name in pairs:
        if rate_name not in report.rates or bound_name not in values:
            continue
        entry = report.rates[rate_name]
        bound = values[bound_name]
        rows.append({
            "quantity": rate_name,
            "empirical": entry["rate"],
            "wilson_lo": entry["wilson_lo"],
            "wilson_hi": entry["wilson_hi"],
            "bound": bound,
            "violation": entry["wilson_lo"] > bound,
        })
    return rows
