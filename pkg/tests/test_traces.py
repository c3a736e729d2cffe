"""Tests for analysis.traces: reading and writing trace files."""

from fractions import Fraction

import pytest

from analysis.semantics import Run, holds
from analysis.traces import TraceFormatError, read_trace, write_trace
from logic.parser import parse_formula
from smt.session import Interpretation, Structure

from conftest import make_signature


class TestReadTrace:
    def test_example_run(self, lra, problems_dir):
        run = read_trace((problems_dir / "example_run.trace").read_text(), lra)
        assert len(run) == 3
        assert [run.value("x", i) for i in range(3)] == [-1, 0, 2]
        assert holds(run, 0, parse_formula("(y >= x) U (x = y)", lra))

    def test_rationals(self, lra):
        run = read_trace("x=1/2 y=-3/4\n", lra)
        assert run.value("y", 0) == Fraction(-3, 4)

    def test_unknown_variable(self, lra):
        with pytest.raises(TraceFormatError, match="line 2"):
            read_trace("x=0 y=0\nx=0 z=1\n", lra)

    def test_missing_variable(self, lra):
        with pytest.raises(TraceFormatError, match="no value for 'y'"):
            read_trace("x=0\n", lra)

    def test_integer_sort_checked(self, lia):
        with pytest.raises(TraceFormatError, match="not an integer"):
            read_trace("x=1/2 y=0 z=0\n", lia)

    def test_empty_trace(self, lra):
        with pytest.raises(TraceFormatError, match="no states"):
            read_trace("# nothing here\n", lra)

    def test_domain_and_interpretation(self, euf):
        text = "domain S: a b\ninterp p(a)=true\nx=a\nx=b\n"
        run = read_trace(text, euf)
        assert run.structure.domains == {"S": ("a", "b")}
        assert holds(run, 0, parse_formula("p(x) & X !p(x)", euf))

    def test_element_outside_domain(self, euf):
        with pytest.raises(TraceFormatError, match="not an element"):
            read_trace("domain S: a\nx=c\n", euf)


class TestWriteTrace:
    def test_states(self, example_run):
        assert write_trace(example_run) == "x=-1 y=0\nx=0 y=1\nx=2 y=2\n"

    def test_read_back(self, example_run):
        again = read_trace(write_trace(example_run), example_run.signature)
        assert again.states == example_run.states

    def test_structure_read_back(self):
        sig = make_signature("EUF", variables=("x",), sorts=("S",),
                             functions={"f": (("S",), "S")}, predicates={"p": ("S",)})
        structure = Structure(
            {"S": ("e0", "e1")},
            {"p": Interpretation({("e1",): True}, False), "f": Interpretation({("e0",): "e1"}, "e0")},
        )
        run = Run(sig, [{"x": "e0"}, {"x": "e1"}], structure)
        text = write_trace(run)
        assert "interp f(*)=e0" in text
        again = read_trace(text, sig)
        phi = parse_formula("p(f(x)) & X (f(x) = x)", sig)
        assert holds(again, 0, phi) == holds(run, 0, phi)
