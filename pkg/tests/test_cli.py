import json

import pytest

from eqmorph.cli import (
    EXIT_BUGS, EXIT_CLEAN, EXIT_OPERATIONAL, load_config_file, main,
)


def run_cli(*argv):
    return main(list(argv))


class TestRun:
    def test_clean_target_exits_zero(self, tmp_path, capsys):
        rc = run_cli("run", "--target", "builtin", "--iterations", "1",
                     "--queries", "60", "--seed", "cli-clean",
                     "--out", str(tmp_path))
        assert rc == EXIT_CLEAN
        assert (tmp_path / "stats.jsonl").exists()
        assert not list(tmp_path.glob("report-*.json"))

    def test_faulty_target_exits_ten_and_persists(self, tmp_path, capsys):
        rc = run_cli("run", "--target", "builtin:drop-distinct",
                     "--iterations", "2", "--queries", "200",
                     "--seed", "cli-fault", "--out", str(tmp_path))
        assert rc == EXIT_BUGS
        reports = list(tmp_path.glob("report-*.json"))
        assert reports
        data = json.loads(reports[0].read_text())
        assert data["targetId"] == "builtin:drop-distinct"
        out = capsys.readouterr().out
        assert "report" in out.lower() or "mismatch" in out.lower()

    def test_unknown_target_is_operational_error(self, tmp_path, capsys):
        rc = run_cli("run", "--target", "wat://", "--iterations", "1",
                     "--queries", "5", "--out", str(tmp_path))
        assert rc == EXIT_OPERATIONAL

    def test_unknown_fault_is_operational_error(self, tmp_path, capsys):
        rc = run_cli("run", "--target", "builtin:nope", "--iterations", "1",
                     "--queries", "5", "--out", str(tmp_path))
        assert rc == EXIT_OPERATIONAL

    def test_parallel_workers_match_serial(self, tmp_path, capsys):
        a, b = tmp_path / "serial", tmp_path / "par"
        for out, workers in ((a, "1"), (b, "2")):
            rc = run_cli("run", "--target", "builtin:null-where-true",
                         "--iterations", "2", "--queries", "150",
                         "--seed", "cli-par", "--workers", workers,
                         "--out", str(out))
            assert rc == EXIT_BUGS
        names = lambda d: sorted(p.name for p in d.glob("report-*.json"))
        assert names(a) == names(b)


class TestReplay:
    def test_replay_reproduces_then_clears(self, tmp_path, capsys):
        rc = run_cli("run", "--target", "builtin:drop-distinct",
                     "--iterations", "2", "--queries", "200",
                     "--seed", "cli-replay", "--out", str(tmp_path))
        assert rc == EXIT_BUGS
        report = sorted(tmp_path.glob("report-*.json"))[0]
        assert run_cli("replay", str(report), "--target",
                       "builtin:drop-distinct") == EXIT_BUGS
        assert run_cli("replay", str(report),
                       "--target", "builtin") == EXIT_CLEAN

    def test_missing_report_is_operational_error(self, capsys):
        assert run_cli("replay", "/nonexistent.json",
                       "--target", "builtin") == EXIT_OPERATIONAL


class TestGen:
    def test_gen_prints_deterministic_queries(self, capsys):
        assert run_cli("gen", "--queries", "25", "--seed", "g") == EXIT_CLEAN
        first = capsys.readouterr().out
        assert run_cli("gen", "--queries", "25", "--seed", "g") == EXIT_CLEAN
        assert capsys.readouterr().out == first
        lines = first.strip().splitlines()
        assert len(lines) == 25
        assert all(l.startswith("SELECT") for l in lines)


class TestConfigFile:
    def test_load_and_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "campaign.conf"
        cfg.write_text(
            "# campaign settings\n"
            "target = builtin:drop-distinct\n"
            "iterations = 2\n"
            "queries = 200\n"
            f"out = {tmp_path / 'reports'}\n"
            "seed = cli-conf\n")
        parsed = load_config_file(str(cfg))
        assert parsed["target"] == "builtin:drop-distinct"
        assert parsed["iterations"] == "2"
        # flags win over the file: overriding the target to clean
        rc = run_cli("run", "--config", str(cfg), "--target", "builtin")
        assert rc == EXIT_CLEAN
        rc = run_cli("run", "--config", str(cfg))
        assert rc == EXIT_BUGS

    def test_malformed_config_is_operational_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.conf"
        cfg.write_text("this is not a key value line\n")
        assert run_cli("run", "--config", str(cfg)) == EXIT_OPERATIONAL


def test_console_script_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "eqmorph.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "run" in out.stdout and "replay" in out.stdout


def test_missing_subcommand_errors():
    with pytest.raises(SystemExit):
        main([])
