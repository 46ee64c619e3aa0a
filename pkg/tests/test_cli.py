import json
from pathlib import Path

import pytest

from scorelab.cli import SUBCOMMANDS, build_parser, help_text, main
from scorelab.harness import EvalConfig, SynthConfig, default_bma_truth, load_cases, rolling_evaluate, synth_generate

GOLDEN = Path(__file__).parent / "golden" / "cli_help.txt"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--format", "json")
    assert code == 0, err
    return json.loads(out)


class TestExamples:
    def test_score(self, capsys):
        assert run_json(capsys, "score", "--rule", "hs", "--density", "normal:0:1", "--x", "1")["values"] == [-1.0]
        code, out, _ = run(capsys, "score", "--rule", "hs", "--density", "normal:0:1", "--x", "1")
        assert code == 0 and out.split()[-1] == "-1"

    def test_score_many(self, capsys):
        vals = run_json(capsys, "score", "--rule", "ls", "--density", "mix:0.5:normal:-1:1:0.5:normal:1:1", "--x=-1,0,2")["values"]
        assert len(vals) == 3

    def test_diverge(self, capsys):
        d = run_json(capsys, "diverge", "--rule", "ls", "--p", "normal:0:2", "--q", "normal:0:1")["divergence"]
        assert d == pytest.approx(0.80685, abs=1e-5)
        code, out, _ = run(capsys, "diverge", "--rule", "ls", "--p", "normal:0:2", "--q", "normal:0:1")
        assert out.strip() == "0.8068528194"

    def test_diverge_direct(self, capsys):
        d = run_json(capsys, "diverge", "--rule", "fisher", "--p", "huber:0.3", "--q", "huber:0.7")["divergence"]
        assert abs(d) <= 1e-8

    def test_odd_power(self, capsys):
        code, _, err = run(capsys, "check", "--rule", "power:3:0")
        assert code == 2
        assert "n must be even" in err
        assert len(err.strip().splitlines()) == 1

    def test_check(self, capsys):
        r = run_json(capsys, "check", "--rule", "hs", "--family", "standard", "--threads", "2")
        assert r["proper_on_family"] and r["strictly_proper_on_family"]
        assert len(r["pairs"]) == 36

    def test_check_custom_family_with_class_p(self, capsys):
        r = run_json(capsys, "check", "--rule", "lcs", "--family", "normal:0:1;logistic:0:1", "--class-p")
        assert len(r["pairs"]) == 4
        assert all(v["passed"] for v in r["class_p"].values())

    def test_construct(self, capsys):
        r = run_json(capsys, "construct", "--kernel", "power:4:-1", "--at", "0,1,1,0")
        assert r["points"][0]["score"] == 2.0
        assert r["concavity"]["verdict"] == "concave-on-grid"

    def test_recover(self, capsys):
        r = run_json(capsys, "recover", "--rule", "hs", "--at", "0,2")
        assert r["c"] == pytest.approx(0.0, abs=1e-8)
        assert r["points"][0]["K0"] == pytest.approx(-4.0, abs=1e-8)

    def test_recover_rejects_nonlocal(self, capsys):
        assert run(capsys, "recover", "--rule", "qs")[0] == 2

    def test_euler(self, capsys):
        r = run_json(capsys, "euler", "--rule", "ls", "--density", "logistic:0:1", "--grid=-3:3:7")
        assert r["values"] == pytest.approx([-1.0] * 7, abs=1e-6)


class TestErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["frobnicate"],
            ["score", "--rule", "hs"],
            ["score", "--rule", "hs", "--density", "normal:0:1", "--x", "1", "--bogus"],
            ["score", "--rule", "crps", "--density", "normal:0:1", "--x", "1"],
            ["score", "--rule", "hs", "--density", "normal:0", "--x", "1"],
            ["score", "--rule", "hs", "--density", "normal:0:1", "--x", "one"],
            ["euler", "--rule", "hs", "--density", "normal:0:1", "--grid", "0:1"],
            ["evaluate", "--input", "/nonexistent/cases.csv"],
        ],
    )
    def test_usage_errors_exit_2(self, capsys, argv):
        assert run(capsys, *argv)[0] == 2

    def test_numerical_failure_exits_3(self, capsys):
        code, _, err = run(capsys, "score", "--rule", "hs", "--density", "huber:0.3", "--x", "0")
        assert code == 3
        assert "numerical failure" in err

    def test_parse_error_reports_line(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("case_id,valid_time,station,obs,f1,f2\nc1,2008-01-01,S1,1,1,\n")
        code, _, err = run(capsys, "evaluate", "--input", str(p))
        assert code == 2 and "line 2" in err


class TestHelp:
    def test_golden(self):
        assert help_text() == GOLDEN.read_text()

    def test_lists_everything(self):
        text = help_text()
        for name in SUBCOMMANDS:
            assert name in text
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        for name, p in sub.choices.items():
            for action in p._actions:
                for flag in action.option_strings:
                    assert flag in text, (name, flag)

    def test_help_exits_zero(self, capsys):
        assert run(capsys, "--help")[0] == 0
        assert run(capsys, "evaluate", "--help")[0] == 0


@pytest.fixture(scope="module")
def synth_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    out, params = d / "cases.csv", d / "truth.json"
    assert main(["synth", "--days", "50", "--stations", "4", "--k", "4", "--seed", "11", "--output", str(out), "--params-out", str(params)]) == 0
    return out, params


class TestPipeline:
    def test_synth_matches_library(self, synth_file):
        out, _ = synth_file
        assert load_cases(out) == synth_generate(SynthConfig(50, 4, 4, default_bma_truth(4), seed=11))

    def test_roundtrip_matches_in_process(self, capsys, synth_file):
        out, params = synth_file
        cli = run_json(capsys, "evaluate", "--input", str(out), "--train-bma", "10", "--train-emos", "15", "--truth-params", str(params), "--records")
        cases = synth_generate(SynthConfig(50, 4, 4, default_bma_truth(4), seed=11))
        lib = rolling_evaluate(cases, EvalConfig(10, 15), truth=default_bma_truth(4))
        assert cli == json.loads(lib.to_json(include_records=True))
        assert cli["rows"]["Truth"]

    def test_skip_log(self, capsys, synth_file, tmp_path):
        out, _ = synth_file
        log = tmp_path / "skips.csv"
        code, _, _ = run(capsys, "evaluate", "--input", str(out), "--train-bma", "1", "--train-emos", "1", "--scores", "ls", "--skip-log", str(log))
        assert code == 0
        assert len(log.read_text().splitlines()) > 1

    def test_table(self, capsys, synth_file):
        out, _ = synth_file
        code, text, _ = run(capsys, "evaluate", "--input", str(out), "--train-bma", "10", "--train-emos", "15", "--scores", "ls,hs")
        assert code == 0
        assert text.splitlines()[0].split() == ["method", "LS", "HS"]


BATTERY = [
    ["score", "--rule", "lcs", "--density", "mix:0.3:normal:0:1:0.7:normal:3:2", "--x=-1,0.5,4"],
    ["diverge", "--rule", "sphs", "--p", "logistic:0:1", "--q", "normal:0:1.5"],
    ["check", "--rule", "power:4:-1", "--threads", "3"],
    ["construct", "--kernel", "logcosh", "--at", "1,2,3,4"],
    ["recover", "--rule", "lcs", "--z2", "2", "--at", "0.5,1.5"],
    ["euler", "--rule", "hs", "--density", "normal:1:2"],
]


def test_battery_is_deterministic(capsys, synth_file):
    out, params = synth_file
    battery = BATTERY + [["evaluate", "--input", str(out), "--train-bma", "8", "--train-emos", "12", "--threads", "2", "--records", "--truth-params", str(params)]]

    def once():
        outputs = []
        for argv in battery:
            code, text, err = run(capsys, *argv, "--format", "json")
            assert code == 0, err
            outputs.append(text)
        return outputs

    assert once() == once()
