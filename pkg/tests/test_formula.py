"""Parsers, normal forms, and the brute-force oracles they are checked by."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nesycirc.errors import DimacsError, FormulaError
from nesycirc.formula import (CNF, FALSE, TRUE, And, Iff, Implies, Not, Or,
                              Var, brute_force_models, brute_force_wmc,
                              cnf_to_formula, eval_assignment, formula_names,
                              formula_vars, is_nnf, make_name_table,
                              parse_dimacs, parse_formula, serialize_dimacs,
                              to_cnf, to_nnf)

EX1 = "c two-clause constraint\np cnf 3 2\n-1 2 0\n2 -3 0\n"


# ---------------------------------------------------------------------------
# DIMACS


def test_parse_dimacs_basic():
    cnf = parse_dimacs(EX1)
    assert cnf.num_vars == 3
    assert cnf.clauses == ((-1, 2), (2, -3))
    assert not cnf.unsat
    assert cnf.n_inputs == 3


def test_parse_dimacs_trailing_comment_after_zero():
    cnf = parse_dimacs("p cnf 2 1\n1 -2 0 this is ignored\n")
    assert cnf.clauses == ((1, -2),)


def test_parse_dimacs_multiline_clause():
    cnf = parse_dimacs("p cnf 3 1\n1\n2 3\n0\n")
    assert cnf.clauses == ((1, 2, 3),)


def test_parse_dimacs_drops_tautologies_but_counts_them():
    cnf = parse_dimacs("p cnf 2 2\n1 -1 0\n2 0\n")
    assert cnf.clauses == ((2,),)


def test_parse_dimacs_dedupes_repeated_literals():
    cnf = parse_dimacs("p cnf 2 1\n1 1 2 0\n")
    assert cnf.clauses == ((1, 2),)


@pytest.mark.parametrize("text, line", [
    ("p cnf 2 1\n0\n", 2),
    ("p cnf 2 1\n1 x 0\n", 2),
    ("p cnf 2 1\n3 0\n", 2),
    ("1 2 0\n", 1),
    ("p cnf 2 1\np cnf 2 1\n1 0\n", 2),
    ("p dnf 2 1\n1 0\n", 1),
    ("p cnf 2 1\n1 2\n", 2),
])
def test_parse_dimacs_errors_carry_line_numbers(text, line):
    with pytest.raises(DimacsError) as exc:
        parse_dimacs(text)
    assert exc.value.line == line


def test_parse_dimacs_count_mismatch():
    with pytest.raises(DimacsError, match="declared 2, found 1"):
        parse_dimacs("p cnf 2 2\n1 0\n")


def test_parse_dimacs_missing_problem_line():
    with pytest.raises(DimacsError, match="problem line"):
        parse_dimacs("c only a comment\n")


def test_serialize_unsat_as_contradiction():
    text = serialize_dimacs(CNF(2, (), unsat=True))
    back = parse_dimacs(text)
    assert brute_force_models(back) == []


@st.composite
def cnfs(draw, max_vars=6, max_clauses=8):
    n = draw(st.integers(1, max_vars))
    n_clauses = draw(st.integers(0, max_clauses))
    clauses = []
    for _ in range(n_clauses):
        width = draw(st.integers(1, min(4, n)))
        vs = draw(st.lists(st.integers(1, n), min_size=width, max_size=width,
                           unique=True))
        signs = draw(st.lists(st.booleans(), min_size=width, max_size=width))
        clauses.append(tuple(v if s else -v for v, s in zip(vs, signs)))
    return CNF(n, tuple(clauses))


@given(cnfs())
def test_dimacs_round_trip(cnf):
    assert parse_dimacs(serialize_dimacs(cnf)) == cnf


def test_cnf_rejects_empty_clause_and_bad_literals():
    with pytest.raises(ValueError, match="empty clause"):
        CNF(2, ((),))
    with pytest.raises(ValueError, match="out of range"):
        CNF(2, ((3,),))
    with pytest.raises(ValueError, match="tautological"):
        CNF(2, ((1, -1),))
    with pytest.raises(ValueError, match="top of the id range"):
        CNF(3, ((1,),), aux_vars={2})


# ---------------------------------------------------------------------------
# Formula parsing


def _parse(text, names=("a", "b", "c", "d")):
    return parse_formula(text, make_name_table(names))


def test_parse_precedence():
    a, b, c = Var(1, "a"), Var(2, "b"), Var(3, "c")
    assert _parse("a & b | c") == Or(And(a, b), c)
    assert _parse("~a & b") == And(Not(a), b)
    assert _parse("a -> b -> c") == Implies(a, Implies(b, c))
    assert _parse("a <-> b") == Iff(a, b)
    assert _parse("(a | b) & c") == And(Or(a, b), c)
    assert _parse("true & ~false") == And(TRUE, Not(FALSE))


def test_parse_reports_position():
    with pytest.raises(FormulaError) as exc:
        _parse("a & & b")
    assert exc.value.position == 4


def test_parse_unknown_name():
    with pytest.raises(FormulaError, match="unknown identifier"):
        _parse("a & zz")


def test_parse_rejects_trailing_junk():
    with pytest.raises(FormulaError):
        _parse("a b")


def test_make_name_table_rejects_duplicates():
    with pytest.raises(FormulaError, match="duplicate"):
        make_name_table(["x", "x"])


def test_formula_names_and_vars():
    f = _parse("(a -> b) & (c -> b)")
    assert formula_vars(f) == [1, 2, 3]
    assert formula_names(f) == {1: "a", 2: "b", 3: "c"}


# ---------------------------------------------------------------------------
# Normal forms


@st.composite
def formulas(draw, max_vars=4, max_depth=4):
    n = draw(st.integers(1, max_vars))
    leaf = st.builds(Var, st.integers(1, n))
    return draw(st.recursive(
        leaf,
        lambda sub: st.one_of(
            st.builds(Not, sub),
            st.builds(And, sub, sub),
            st.builds(Or, sub, sub),
            st.builds(Implies, sub, sub),
            st.builds(Iff, sub, sub),
        ),
        max_leaves=2 ** max_depth))


def _corners(n):
    for bits in range(1 << n):
        yield {v: bool((bits >> (v - 1)) & 1) for v in range(1, n + 1)}


@given(formulas())
def test_to_nnf_preserves_truth(f):
    nnf = to_nnf(f)
    assert is_nnf(nnf)
    n = max(formula_vars(f), default=0)
    for a in _corners(n):
        assert eval_assignment(nnf, a) == eval_assignment(f, a)


def test_to_nnf_pushes_negations():
    f = _parse("~(a & (b -> c))")
    nnf = to_nnf(f)
    assert is_nnf(nnf)
    assert not is_nnf(f)


@given(formulas(max_vars=4, max_depth=3))
def test_to_cnf_models_extend_uniquely(f):
    """Every model of f lifts to exactly one model of its clause encoding."""
    n = max(formula_vars(f), default=0)
    cnf = to_cnf(to_nnf(f), num_vars=n)
    assert cnf.n_inputs == n
    direct = {tuple(sorted(m.items())) for m in brute_force_models(f, num_vars=n)}
    lifted = {tuple(sorted(m.items())) for m in brute_force_models(cnf)}
    assert direct == lifted


@given(formulas(max_vars=4, max_depth=3),
       st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_to_cnf_preserves_weighted_count(f, probs):
    n = 4
    cnf = to_cnf(to_nnf(f), num_vars=n)
    direct = 0.0
    for a in _corners(n):
        if eval_assignment(f, a):
            w = 1.0
            for v, val in a.items():
                w *= probs[v - 1] if val else 1.0 - probs[v - 1]
            direct += w
    assert brute_force_wmc(cnf, probs) == pytest.approx(direct, abs=1e-12)


@given(cnfs(max_vars=5, max_clauses=6))
def test_cnf_to_formula_round_trip(cnf):
    f = cnf_to_formula(cnf)
    for a in _corners(cnf.num_vars):
        assert eval_assignment(f, a) == eval_assignment(cnf, a)


# ---------------------------------------------------------------------------
# Oracles


def test_brute_force_wmc_example():
    cnf = parse_dimacs(EX1)
    assert brute_force_wmc(cnf, [0.5, 0.5, 0.5]) == pytest.approx(0.625)
    assert brute_force_wmc(cnf, [0.9, 0.2, 0.1]) == pytest.approx(0.272)
    assert len(brute_force_models(cnf)) == 5


def test_brute_force_wmc_guard():
    with pytest.raises(ValueError, match="guard"):
        brute_force_wmc(CNF(27, ()), [0.5] * 27)


def test_eval_assignment_checks_tseitin_extension():
    f = _parse("(a | b) <-> c")
    cnf = to_cnf(to_nnf(f), num_vars=3)
    assert cnf.aux_vars
    for a in _corners(3):
        assert eval_assignment(cnf, a) == eval_assignment(f, a)


def test_eval_assignment_requires_full_assignment():
    cnf = parse_dimacs(EX1)
    with pytest.raises(ValueError, match="missing assignment"):
        eval_assignment(cnf, {1: True})
