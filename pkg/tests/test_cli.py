import json
import threading

import pytest

from vbqclab import wire
from vbqclab.cli import main
from vbqclab.harness import ExperimentConfig, format_config


def write_config(tmp_path, **kw):
    base = dict(pattern="identity2", n=4, d=2, t=2, w=1, trials=50, seed=3,
                input_bits=(0,), expect="0")
    base.update(kw)
    path = tmp_path / "exp.cfg"
    path.write_text(format_config(ExperimentConfig(**base)))
    return path


def test_color_builtin(capsys):
    assert main(["color", "identity2"]) == 0
    out = capsys.readouterr().out
    assert "K = 2" in out and "valid: True" in out


def test_color_pattern_file(tmp_path, capsys):
    from vbqclab.pattern import builtin_pattern, save_pattern
    path = tmp_path / "line.pat"
    save_pattern(path, builtin_pattern("identity3"))
    assert main(["color", str(path)]) == 0
    assert "K = 2" in capsys.readouterr().out


def test_bounds_regions(capsys):
    assert main(["bounds", "--k", "2", "--p", "0.3333333333333333",
                 "--regions"]) == 0
    out = capsys.readouterr().out
    assert "0.125" in out


def test_bounds_sweep_csv(tmp_path, capsys):
    csv_path = tmp_path / "sweep.csv"
    code = main(["bounds", "--omega", "0.05", "--sweep-n", "100,1000",
                 "--grid", "6", "--csv", str(csv_path)])
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("n,delta,tau,omega")
    assert len(lines) == 3


def test_tune_command(capsys):
    assert main(["tune", "--omega", "0.1", "--p-max", "0.02",
                 "--target-sec", "0.9", "--target-cor", "0.9"]) == 0
    out = capsys.readouterr().out
    assert "minimal n" in out


def test_run_honest_exit_zero(tmp_path, capsys):
    config = write_config(tmp_path)
    report_path = tmp_path / "report.json"
    assert main(["run", str(config), "--out", str(report_path)]) == 0
    blob = json.loads(report_path.read_text())
    assert blob["accept_count"] == 50
    out = capsys.readouterr().out
    assert "accept 50" in out


def test_run_writes_logs_and_replay_round_trips(tmp_path, capsys):
    config = write_config(tmp_path, trials=5)
    client_log = tmp_path / "client.jsonl"
    server_log = tmp_path / "server.jsonl"
    assert main(["run", str(config), "--client-log", str(client_log),
                 "--server-log", str(server_log)]) == 0
    capsys.readouterr()
    assert main(["replay", str(server_log), "--client-log", str(client_log)]) == 0
    out = capsys.readouterr().out.strip()
    assert json.loads(out)["verdict"] == "ok"


def test_replay_rejects_wrong_file(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"schema": "nonsense/9"}\n')
    assert main(["replay", str(bad)]) == 1


def test_enumerate_command(capsys):
    assert main(["enumerate", "--pattern", "identity2", "--kind", "test",
                 "--deviation", "pauli:Z@0", "--marginals"]) == 0
    out = capsys.readouterr().out
    assert "fail probability: 0.5" in out


def test_enumerate_computation(capsys):
    assert main(["enumerate", "--pattern", "identity1", "--kind", "computation",
                 "--input", "1"]) == 0
    out = capsys.readouterr().out
    assert "output 1: 1.0" in out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["bogus-subcommand"])
    assert err.value.code == 2


def test_run_tcp_split_process(tmp_path, capsys):
    config = write_config(tmp_path, trials=1)
    listener = wire.Listener("127.0.0.1", 0)
    port = listener.port
    listener.close()  # free it for the CLI to rebind

    server_result = {}

    def serve():
        server_result["code"] = main(["run", str(config), "--transport", "tcp",
                                      "--listen", f"127.0.0.1:{port}"])

    thread = threading.Thread(target=serve)
    thread.start()
    import time
    deadline = time.time() + 5
    code = None
    while time.time() < deadline:
        try:
            code = main(["run", str(config), "--transport", "tcp",
                         "--connect", f"127.0.0.1:{port}"])
            break
        except (ConnectionRefusedError, OSError):
            time.sleep(0.05)
    thread.join(timeout=5)
    assert code == 0
    assert server_result["code"] == 0
    out = capsys.readouterr().out
    assert '"status": "ok"' in out
