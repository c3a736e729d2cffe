"""End-to-end tests of the command line through main.run."""

import json

import pytest

import main
from main import EXIT_ERROR, EXIT_SAT, EXIT_UNKNOWN, EXIT_UNSAT, ConfigError, build_parser, resolve_config


@pytest.fixture
def path_of(problems_dir):
    return lambda stem: str(problems_dir / f"{stem}.ltlfmt")


@pytest.fixture
def write_problem(tmp_path):
    def write(text, name="problem.ltlfmt"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


# ======================== solve ========================

class TestSolve:
    def test_example_1_unsat(self, path_of, capsys):
        assert main.run(["solve", path_of("example1")]) == EXIT_UNSAT
        assert capsys.readouterr().out.strip() == "UNSAT"

    def test_without_prune_hits_step_bound(self, path_of, capsys):
        code = main.run(["solve", path_of("example1"), "--no-prune", "--max-steps", "20"])
        assert code == EXIT_UNKNOWN
        assert capsys.readouterr().out.strip() == "UNKNOWN (step bound)"

    def test_problem_file_options(self, write_problem, capsys):
        path = write_problem(
            "theory LRA\nvars x:Real, y:Real\noptions prune=off max_steps=20\n"
            "formula (x < 0) & (y = 1) & (((next(y) > y) & (next(x) <= x)) U (x = y))\n"
        )
        assert main.run(["solve", path]) == EXIT_UNKNOWN
        assert "step bound" in capsys.readouterr().out

    def test_json_output(self, path_of, capsys):
        assert main.run(["solve", path_of("until_meet"), "--json"]) == EXIT_SAT
        data = json.loads(capsys.readouterr().out)
        assert data["verdict"] == "SAT"
        assert set(data["witness"][0]) == {"x", "y"}
        assert data["stats"]["nodes"] >= 1
        assert not any(k.endswith("_seconds") for k in data["stats"])

    def test_dump_tableau(self, path_of, tmp_path):
        target = tmp_path / "t.gv"
        main.run(["solve", path_of("example3"), "--dump-tableau", str(target)])
        assert target.read_text().startswith("digraph tableau")

    @pytest.mark.parametrize("text", [
        "theory LRA\nvars x:Real, y:Real\nformula (y >= x) U (x = y)\n",
        "theory EUF\nsort S\nvars x:S, y:S\npred p(S)\nfunc f(S): S\n"
        "formula p(x) & X (!p(x)) & f(x) = y\n",
    ], ids=["lra", "euf"])
    def test_printed_witness_is_a_trace(self, write_problem, tmp_path, capsys, text):
        path = write_problem(text)
        assert main.run(["solve", path, "--witness"]) == EXIT_SAT
        verdict, trace_text = capsys.readouterr().out.split("\n", 1)
        assert verdict == "SAT"
        trace = tmp_path / "witness.trace"
        trace.write_text(trace_text)
        assert main.run(["check-trace", path, str(trace)]) == EXIT_SAT
        assert capsys.readouterr().out.strip() == "HOLDS"

    def test_json_carries_the_trace(self, path_of, capsys):
        assert main.run(["solve", path_of("until_meet"), "--json"]) == EXIT_SAT
        data = json.loads(capsys.readouterr().out)
        assert data["trace"].splitlines()[0].startswith("x=")
        assert len(data["trace"].splitlines()) == len(data["witness"])


# ======================== other subcommands ========================

class TestClassify:
    def test_example_1(self, path_of, capsys):
        assert main.run(["classify", path_of("example1"), "--json"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["quasi_mc"] is True
        assert data["bl"] == "not_checked"

    def test_check_bl(self, path_of, capsys):
        assert main.run(["classify", path_of("dependency1"), "--check-bl", "3"]) == 0
        assert "3-bounded lookback holds" in capsys.readouterr().out


class TestBmc:
    def test_unsat_up_to_bound(self, path_of, capsys):
        assert main.run(["bmc", path_of("example1"), "3"]) == EXIT_UNSAT
        assert "UNSAT (no model up to length 3)" in capsys.readouterr().out

    def test_sat(self, path_of, capsys):
        assert main.run(["bmc", path_of("until_meet"), "2"]) == EXIT_SAT
        assert "SAT (length 1)" in capsys.readouterr().out


class TestCheckTrace:
    def test_holds(self, path_of, problems_dir, capsys):
        trace = str(problems_dir / "example_run.trace")
        assert main.run(["check-trace", path_of("until_meet"), trace]) == EXIT_SAT
        assert capsys.readouterr().out.strip() == "HOLDS"

    def test_does_not_hold(self, write_problem, problems_dir, capsys):
        path = write_problem("theory LRA\nvars x:Real, y:Real\nformula G (x < y)\n")
        trace = str(problems_dir / "example_run.trace")
        assert main.run(["check-trace", path, trace]) == EXIT_UNSAT
        assert capsys.readouterr().out.strip() == "DOES NOT HOLD"


# ======================== errors and configuration ========================

class TestErrors:
    def test_parse_error(self, write_problem, capsys):
        path = write_problem("theory LRA\nvars x:Real\nformula x >\n")
        assert main.run(["solve", path]) == EXIT_ERROR
        err = capsys.readouterr().err
        assert err.startswith(f"error: {path}:")

    def test_missing_file(self, tmp_path, capsys):
        assert main.run(["solve", str(tmp_path / "absent.ltlfmt")]) == EXIT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_bad_arguments(self, capsys):
        assert main.run(["solve"]) == EXIT_ERROR

    def test_unknown_option(self, write_problem, capsys):
        path = write_problem("vars x:Real\noptions colour=red\nformula x > 0\n")
        assert main.run(["solve", path]) == EXIT_ERROR
        assert "unknown option 'colour'" in capsys.readouterr().err


class TestConfigPrecedence:
    def args(self, *extra):
        return build_parser().parse_args(["solve", "p.ltlfmt", *extra])

    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("LTLFMT_TIMEOUT_MS", raising=False)
        monkeypatch.delenv("LTLFMT_SOLVER", raising=False)
        config = resolve_config(self.args(), {})
        assert config.prune is True
        assert config.max_steps == 64
        assert config.solver_cmd is None

    def test_env_then_file_then_cli(self, monkeypatch):
        monkeypatch.setenv("LTLFMT_TIMEOUT_MS", "700")
        monkeypatch.setenv("LTLFMT_SOLVER", "cvc5 --lang smt2")
        assert resolve_config(self.args(), {}).timeout_ms == 700
        assert resolve_config(self.args(), {"timeout_ms": "900"}).timeout_ms == 900
        config = resolve_config(self.args("--timeout", "1100"), {"timeout_ms": "900"})
        assert config.timeout_ms == 1100
        assert config.solver_cmd == "cvc5 --lang smt2"

    def test_invalid_values(self, monkeypatch):
        monkeypatch.delenv("LTLFMT_TIMEOUT_MS", raising=False)
        with pytest.raises(ConfigError):
            resolve_config(self.args(), {"prune": "maybe"})
        with pytest.raises(ConfigError):
            resolve_config(self.args("--max-steps", "0"), {})
        monkeypatch.setenv("LTLFMT_TIMEOUT_MS", "soon")
        with pytest.raises(ConfigError):
            resolve_config(self.args(), {})
