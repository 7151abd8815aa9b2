"""Command-line entry point.

Every subcommand is a thin adapter over the library modules; no protocol
or numeric logic lives here. Exit codes: 0 on success, 1 when a bound
violation or verification anomaly is detected, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import bounds as bounds_mod
from . import harness, rounds, wire
from .pattern import builtin_pattern, greedy_coloring, load_pattern, validate_coloring
from .rng import stream
from .threat import Directive

__all__ = ["main"]


def _load_any_pattern(name: str):
    if name.endswith(".pat") or "/" in name:
        return load_pattern(name)
    return builtin_pattern(name)


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.trials is not None:
        config = dataclasses.replace(config, trials=args.trials)
    pattern = harness.resolve_pattern(config)

    if args.transport == "tcp":
        return _run_split(args, config, pattern)

    report = harness.run_experiment(config, pattern)
    rows = harness.compare_bound_vs_empirical(report)
    print(f"trials {report.trials}  accept {report.accept_count}  "
          f"aborts {report.abort_counts}  accepted-but-wrong {report.fail_count}")
    for row in rows:
        flag = "VIOLATION" if row["violation"] else "OK"
        print(f"  {row['quantity']:>16}: rate {row['empirical']:.6g} "
              f"[{row['wilson_lo']:.6g}, {row['wilson_hi']:.6g}] "
              f"vs bound {row['bound']:.6g}  {flag}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.dumps() + "\n")
        print(f"report written to {args.out}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(f"rates written to {args.csv}")
    if args.client_log or args.server_log:
        params = harness.params_from_config(config, pattern)
        verdict, transcripts, info = rounds.run_protocol(
            params, pattern, input_bits=config.input_bits,
            adversary=harness.adversary_for_trial(config, params, pattern, 0),
            seed=config.seed, capture_wire=True, record_server_view=True)
        if args.client_log:
            rounds.write_client_log(args.client_log, params, transcripts, verdict)
            print(f"client log written to {args.client_log}")
        if args.server_log:
            rounds.write_server_log(args.server_log, info["server_view"],
                                    verdict.status)
            print(f"server log written to {args.server_log}")
    return 1 if any(row["violation"] for row in rows) else 0


def _run_split(args, config, pattern) -> int:
    params = harness.params_from_config(config, pattern)
    endpoint = args.listen or args.connect
    if not endpoint:
        print("tcp transport needs --listen or --connect", file=sys.stderr)
        return 2
    host, _, port = endpoint.rpartition(":")
    session = wire.SessionConfig(session_id=f"{config.pattern}-{config.seed}",
                                 transport="socket",
                                 address=host or "127.0.0.1", port=int(port))
    if args.listen:
        listener = wire.Listener(session.address, session.port)
        print(f"listening on port {listener.port}")
        transport = listener.accept()
        rounds.serve_session(transport, pattern, stream(config.seed, 0, "server"),
                             harness.adversary_for_trial(config, params, pattern, 0))
        transport.close()
        listener.close()
        print(f"session {session.session_id} served")
        return 0
    transport = wire.connect(session.address, session.port)
    verdict, _, _ = rounds.run_protocol(
        params, pattern, input_bits=config.input_bits, transport=transport,
        seed=config.seed)
    transport.close()
    print(json.dumps(verdict.to_json(), sort_keys=True))
    return 0 if verdict.status == "ok" else 1


def _cmd_bounds(args) -> int:
    if args.regions:
        lo, hi = bounds_mod.threshold_region(args.k, args.p)
        print(f"admissible omega region: ({lo}, {hi:.10g})")
        return 0
    ns = [int(x) for x in args.sweep_n.split(",")] if args.sweep_n else [args.n]
    rows = []
    for n in ns:
        params = bounds_mod.RatioTemplate(args.delta, args.tau, args.omega,
                                          args.k, args.p, args.p_max).at(n)
        report = bounds_mod.minimize_epsilon_ver(params, target_omega=args.omega,
                                                 grid_axis=args.grid)
        rows.append(report)
        print(f"n={n}: eps_ver={report.epsilon_ver:.6g} "
              f"eps_rej={report.epsilon_rej:.6g} eps_cor={report.epsilon_cor:.6g} "
              f"eps_sec={report.epsilon_sec:.6g}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(bounds_mod.report_csv_header() + "\n")
            for report in rows:
                fh.write(bounds_mod.report_csv_row(report) + "\n")
        print(f"sweep written to {args.csv}")
    return 0


def _cmd_tune(args) -> int:
    template = bounds_mod.RatioTemplate(args.delta, args.tau, args.omega,
                                        args.k, args.p, args.p_max)
    result = bounds_mod.tune_n(template, args.target_sec, args.target_cor,
                               n_cap=args.n_cap)
    if not result.achieved:
        print(f"targets unachievable for any n <= {args.n_cap}")
        return 1
    print(f"minimal n = {result.n}")
    print(json.dumps(result.report.to_json(), sort_keys=True, indent=2))
    return 0


def _cmd_color(args) -> int:
    pattern = _load_any_pattern(args.pattern)
    coloring = greedy_coloring(pattern.graph)
    check = validate_coloring(pattern.graph, coloring.classes)
    print(f"K = {coloring.k}")
    for i, cls in enumerate(coloring.classes):
        print(f"  class {i}: {sorted(cls)}")
    print(f"valid: {check.valid}")
    return 0 if check.valid else 1


def _parse_deviation(text: str) -> Directive:
    # forms: "pauli:Z@0", "pauli:Z@0:after_prep", "lie@1", "wrong:3@0"
    action, _, rest = text.partition("@")
    vertex, _, stage = rest.partition(":")
    stage = stage or "before_measure"
    if action.startswith("pauli:"):
        return Directive(int(vertex), "pauli", action.split(":")[1], stage)
    if action == "lie":
        return Directive(int(vertex), "lie_outcome", None, stage)
    if action.startswith("wrong:"):
        return Directive(int(vertex), "measure_wrong_angle",
                         int(action.split(":")[1]), stage)
    raise argparse.ArgumentTypeError(f"cannot parse deviation {text!r}")


def _cmd_enumerate(args) -> int:
    pattern = _load_any_pattern(args.pattern)
    deviations = tuple(_parse_deviation(d) for d in args.deviation or ())
    input_bits = tuple(int(b) for b in args.input) if args.input else None
    dist = harness.enumerate_exact(pattern, args.kind, deviation=deviations,
                                   input_bits=input_bits)
    total = dist.total()
    print(f"kind: {dist.kind}; total probability {total.to_float():.12f}")
    if dist.fail_probability is not None:
        print(f"fail probability: {dist.fail_probability.to_float():.12f} "
              f"(exact {dist.fail_probability.real_pair()})")
    if dist.output_probs is not None:
        for y in sorted(dist.output_probs):
            print(f"output {y}: {dist.output_probs[y].to_float():.12f}")
    if args.marginals:
        for position in range(len(pattern.graph.ordering)):
            marginal = dist.delta_marginal(position)
            pretty = {k: f"{v.to_float():.6f}" for k, v in sorted(marginal.items())}
            print(f"delta marginal at position {position}: {pretty}")
    return 0


def _cmd_replay(args) -> int:
    records = rounds.read_jsonl(args.log)
    if not records or records[0].get("schema") != rounds.SERVER_SCHEMA:
        print("not a server-view log", file=sys.stderr)
        return 1
    body = records[1:]
    verdicts = [r["verdict"] for r in body if "verdict" in r]
    completed = [r for r in body if r.get("completed")]
    shapes = {(r["preps"], len(r["deltas"]), len(r["outcomes"])) for r in completed}
    if len(verdicts) != 1 or len(shapes) > 1:
        print("inconsistent server view", file=sys.stderr)
        return 1
    if args.client_log:
        params, transcripts, recorded = rounds.transcripts_from_client_log(
            rounds.read_jsonl(args.client_log))
        verdict = rounds.verify_and_vote(transcripts, params)
        if verdict.to_json() != recorded:
            print("client log verdict mismatch", file=sys.stderr)
            return 1
        if (verdict.status == "ok") != (verdicts[0] == "ok"):
            print("client/server verdict mismatch", file=sys.stderr)
            return 1
    print(json.dumps({"verdict": verdicts[0]}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vbqclab",
        description="Delegated-computation verification lab: protocol "
                    "simulation and analytic bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte Carlo experiment from a config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--trials", type=int)
    p_run.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    p_run.add_argument("--listen", help="host:port to serve one session on")
    p_run.add_argument("--connect", help="host:port of a remote server")
    p_run.add_argument("--out", help="write the JSON report here")
    p_run.add_argument("--csv", help="write the rate table here")
    p_run.add_argument("--client-log", help="write a client-view transcript log")
    p_run.add_argument("--server-log", help="write a server-view transcript log")
    p_run.set_defaults(func=_cmd_run)

    p_bounds = sub.add_parser("bounds", help="evaluate or sweep the closed-form bounds")
    p_bounds.add_argument("--n", type=int, default=1000)
    p_bounds.add_argument("--delta", type=float, default=0.5)
    p_bounds.add_argument("--tau", type=float, default=0.5)
    p_bounds.add_argument("--omega", type=float, default=0.05)
    p_bounds.add_argument("--k", type=int, default=2)
    p_bounds.add_argument("--p", type=float, default=0.0)
    p_bounds.add_argument("--p-max", type=float, default=0.0)
    p_bounds.add_argument("--grid", type=int, default=22)
    p_bounds.add_argument("--regions", action="store_true",
                          help="print the admissible omega region and exit")
    p_bounds.add_argument("--sweep-n", help="comma-separated n values")
    p_bounds.add_argument("--csv", help="write sweep rows here")
    p_bounds.set_defaults(func=_cmd_bounds)

    p_tune = sub.add_parser("tune", help="find the smallest n meeting targets")
    p_tune.add_argument("--delta", type=float, default=0.5)
    p_tune.add_argument("--tau", type=float, default=0.5)
    p_tune.add_argument("--omega", type=float, required=True)
    p_tune.add_argument("--k", type=int, default=2)
    p_tune.add_argument("--p", type=float, default=0.0)
    p_tune.add_argument("--p-max", type=float, default=0.0)
    p_tune.add_argument("--target-sec", type=float, required=True)
    p_tune.add_argument("--target-cor", type=float, required=True)
    p_tune.add_argument("--n-cap", type=int, default=2 ** 22)
    p_tune.set_defaults(func=_cmd_tune)

    p_color = sub.add_parser("color", help="colour a pattern graph and validate")
    p_color.add_argument("pattern")
    p_color.set_defaults(func=_cmd_color)

    p_enum = sub.add_parser("enumerate", help="exact round enumeration oracle")
    p_enum.add_argument("--pattern", required=True)
    p_enum.add_argument("--kind", choices=("computation", "test"), required=True)
    p_enum.add_argument("--input", help="input bits, e.g. 01")
    p_enum.add_argument("--deviation", action="append",
                        help="e.g. pauli:Z@0, lie@1, wrong:4@0:before_measure")
    p_enum.add_argument("--marginals", action="store_true")
    p_enum.set_defaults(func=_cmd_enumerate)

    p_replay = sub.add_parser("replay", help="re-verify a captured server-view log")
    p_replay.add_argument("log")
    p_replay.add_argument("--client-log")
    p_replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
