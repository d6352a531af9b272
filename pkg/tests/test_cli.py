import json
from importlib import resources

import pytest

from allconcur import cli
from allconcur.units import parse_duration, parse_target


class TestUnits:
    def test_durations(self):
        assert parse_duration("50us") == pytest.approx(50e-6)
        assert parse_duration("10ms") == pytest.approx(0.01)
        assert parse_duration("3s") == 3.0
        assert parse_duration("24h") == 86400.0
        assert parse_duration("2y") == 2 * 365 * 86400.0
        assert parse_duration("0.5") == 0.5

    def test_targets(self):
        assert parse_target("6nines") == pytest.approx(1 - 1e-6)
        assert parse_target("0.99") == 0.99
        with pytest.raises(ValueError):
            parse_target("1.5")


class TestGraphCommands:
    def test_gen_complete_dot(self, capsys):
        assert cli.main(["graph", "gen", "--kind", "complete", "--n", "2"]) == 0
        out = capsys.readouterr().out
        assert out.count("->") == 2

    def test_gen_adjacency_file(self, tmp_path):
        path = tmp_path / "g.adj"
        rc = cli.main(
            ["graph", "gen", "--kind", "gs", "--n", "8", "--d", "3",
             "--format", "adj", "--out", str(path)]
        )
        assert rc == 0
        assert path.read_text().splitlines()[0] == "8 3"

    def test_analyze_gs(self, capsys):
        assert cli.main(["graph", "analyze", "--kind", "gs", "--n", "6", "--d", "3"]) == 0
        out = capsys.readouterr().out
        assert "D=2" in out and "DL=2" in out

    def test_analyze_binomial_fault_diameter(self, capsys):
        rc = cli.main(["graph", "analyze", "--kind", "binomial", "--n", "12", "--f", "5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "delta_hat=4" in out and "k=6" in out


class TestSimCommands:
    def test_run_deterministic(self, tmp_path, capsys):
        args = ["sim", "run", "--kind", "gs", "--n", "8", "--d", "3", "--seed", "7"]
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        assert cli.main(args + ["--trace", str(a)]) == 0
        assert cli.main(args + ["--trace", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_run_bundled_scenario(self, tmp_path, capsys):
        sc = resources.files("allconcur") / "scenarios" / "chained_crash_tracking.json"
        out = tmp_path / "t.jsonl"
        rc = cli.main(["sim", "run", "--scenario", str(sc), "--trace", str(out)])
        assert rc == 0
        summary = json.loads(out.read_text().strip().splitlines()[-1])["summary"]
        batch = summary["deliveries"]["2"]["1"]
        assert [o for o, _ in batch] == [1, 2, 3, 4, 5, 6, 7, 8]

    def test_verify_saved_trace(self, tmp_path, capsys):
        trace = tmp_path / "t.jsonl"
        cli.main(["sim", "run", "--kind", "complete", "--n", "4", "--seed", "3",
                  "--trace", str(trace)])
        assert cli.main(["sim", "verify", "--trace", str(trace)]) == 0
        doc = json.loads(trace.read_text().strip().splitlines()[-1])
        doc["summary"]["deliveries"]["0"]["1"][0][1] = "tampered"
        lines = trace.read_text().strip().splitlines()[:-1] + [json.dumps(doc)]
        trace.write_text("\n".join(lines) + "\n")
        assert cli.main(["sim", "verify", "--trace", str(trace)]) == 1

    def test_explore(self, capsys):
        rc = cli.main(["sim", "explore", "--kind", "complete", "--n", "3", "--f", "1"])
        assert rc == 0
        assert "all pass" in capsys.readouterr().out

    def test_sweep(self, capsys):
        rc = cli.main(["sim", "sweep", "--kind", "gs", "--n", "8", "--d", "3",
                       "--count", "20", "--seed", "11", "--jobs", "2"])
        assert rc == 0
        assert "failures=0" in capsys.readouterr().out

    def test_crash_flag_parsing(self, tmp_path):
        rc = cli.main(["sim", "run", "--kind", "gs", "--n", "8", "--d", "3",
                       "--crash", "5@send:1:5:0,2", "--crash", "3@40ms",
                       "--trace", str(tmp_path / "t.jsonl")])
        assert rc == 0


class TestModelCommands:
    def test_table2(self, capsys):
        assert cli.main(["model", "table2"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "n,d,D,DL"
        assert "256,7,4,3" in out

    def test_reliability_choose_degree(self, capsys):
        rc = cli.main(["model", "reliability", "--n", "256", "--mttf", "2y",
                       "--delta", "24h", "--target", "6nines"])
        assert rc == 0
        assert "d=7" in capsys.readouterr().out

    def test_accuracy_in_unit_interval(self, capsys):
        rc = cli.main(["model", "accuracy", "--hb", "10ms", "--to", "100ms",
                       "--n", "32", "--d", "4", "--dist", "exp:10ms"])
        assert rc == 0
        value = float(capsys.readouterr().out.split("accuracy>=")[1])
        assert 0.0 <= value <= 1.0

    def test_latency_csv(self, capsys):
        assert cli.main(["model", "latency", "--n", "8"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "n,d,D,model_latency,work_bound"
        assert out[1].startswith("8,3,2,")

    def test_depth(self, capsys):
        rc = cli.main(["model", "depth", "--n", "256", "--d", "7", "--rounds", "1000000"])
        assert rc == 0
        assert float(capsys.readouterr().out.split("p=")[1]) > 0.9999
