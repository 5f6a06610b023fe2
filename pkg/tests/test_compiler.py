"""Compilation into decomposable, deterministic, smooth circuits."""

import pytest
from hypothesis import given, strategies as st

from nesycirc.compiler import (Circuit, CircuitNode, check_properties,
                               circuit_from_text, circuit_to_text, compile_cnf,
                               load_circuit, model_count, save_circuit, smooth)
from nesycirc.errors import CircuitError
from nesycirc.formula import CNF, brute_force_models, parse_dimacs

from test_formula import EX1, cnfs


@pytest.fixture()
def ex1():
    return parse_dimacs(EX1)


def test_compile_example(ex1):
    c = smooth(compile_cnf(ex1))
    report = check_properties(c)
    assert report.ok
    assert model_count(c) == 5


def test_compile_unsat():
    c = compile_cnf(CNF(2, ((1,), (-1,))))
    assert c.nodes[c.root].kind == "FALSE"
    assert model_count(smooth(c)) == 0


def test_compile_empty_clause_set():
    c = smooth(compile_cnf(CNF(3, ())))
    assert model_count(c) == 8


def test_compile_single_unit():
    c = smooth(compile_cnf(CNF(1, ((1,),))))
    assert model_count(c) == 1


@given(cnfs())
def test_compile_counts_models(cnf):
    c = smooth(compile_cnf(cnf))
    assert check_properties(c).ok
    assert model_count(c) == len(brute_force_models(cnf))


@given(cnfs())
def test_cache_does_not_change_the_count(cnf):
    with_cache = model_count(smooth(compile_cnf(cnf, use_cache=True)))
    without = model_count(smooth(compile_cnf(cnf, use_cache=False)))
    assert with_cache == without


def test_compile_is_deterministic(ex1):
    a = smooth(compile_cnf(ex1))
    b = smooth(compile_cnf(ex1))
    assert a.nodes == b.nodes and a.root == b.root


def test_independent_blocks_multiply():
    """Disjoint variable blocks decompose; their counts multiply."""
    left = CNF(2, ((1, 2),))
    both = CNF(4, ((1, 2), (3, 4)))
    c_left = model_count(smooth(compile_cnf(left)))
    c_both = model_count(smooth(compile_cnf(both)))
    assert c_both == c_left * c_left


def test_smooth_is_idempotent(ex1):
    once = smooth(compile_cnf(ex1))
    twice = smooth(once)
    assert once.nodes == twice.nodes and once.root == twice.root


def test_smooth_extends_root_to_all_declared_vars():
    cnf = CNF(4, ((1,),))  # variables 2..4 unconstrained
    c = smooth(compile_cnf(cnf))
    assert model_count(c) == 8
    assert check_properties(c).smooth


def test_aux_vars_survive_compilation(ex1):
    cnf = CNF(ex1.num_vars + 1, ex1.clauses + ((-4, 2), (4, -2)),
              aux_vars={4})
    c = smooth(compile_cnf(cnf))
    assert c.aux_vars == frozenset({4})


# ---------------------------------------------------------------------------
# Structural checks on hand-built circuits


def _lit(v):
    return CircuitNode("LIT", literal=v)


def test_check_properties_flags_overlap():
    nodes = (_lit(1), _lit(-1), CircuitNode("AND", children=(0, 1)))
    report = check_properties(Circuit(1, nodes, root=2))
    assert not report.decomposable
    assert report.violations["decomposable"] == [2]


def test_check_properties_flags_nondeterministic_or():
    nodes = (_lit(1), _lit(2), CircuitNode("OR", children=(0, 1), decision_var=1))
    report = check_properties(Circuit(2, nodes, root=2))
    assert not report.deterministic


def test_check_properties_flags_unsmooth_or():
    nodes = (_lit(1), _lit(-1), _lit(2),
             CircuitNode("AND", children=(0, 2)),
             CircuitNode("OR", children=(3, 1), decision_var=1))
    report = check_properties(Circuit(2, nodes, root=4))
    assert report.decomposable and report.deterministic
    assert not report.smooth
    assert report.violations["smooth"] == [4]


def test_model_count_requires_properties():
    nodes = (_lit(1), _lit(2), CircuitNode("OR", children=(0, 1), decision_var=1))
    with pytest.raises(CircuitError, match="deterministic"):
        model_count(Circuit(2, nodes, root=2))


def test_circuit_validates_child_order():
    with pytest.raises(CircuitError, match="topologically earlier"):
        Circuit(1, (CircuitNode("AND", children=(1,)), _lit(1)), root=0)


# ---------------------------------------------------------------------------
# Serialization


def test_text_round_trip(ex1):
    c = smooth(compile_cnf(ex1))
    back = circuit_from_text(circuit_to_text(c))
    assert back.nodes == c.nodes
    assert back.root == c.root
    assert back.num_vars == c.num_vars
    assert back.aux_vars == c.aux_vars


@given(cnfs())
def test_text_round_trip_random(cnf):
    c = smooth(compile_cnf(cnf))
    back = circuit_from_text(circuit_to_text(c))
    assert back.nodes == c.nodes and back.root == c.root


def test_file_round_trip_ignores_comments(tmp_path, ex1):
    c = smooth(compile_cnf(ex1))
    path = tmp_path / "c.nnfc"
    save_circuit(c, path, comments=["layer summary here", "another line"])
    assert "c layer summary here" in path.read_text()
    back = load_circuit(path)
    assert back.nodes == c.nodes


@pytest.mark.parametrize("text, match", [
    ("nnf 2\n", "header"),
    ("nnfc 1\nnvars 1\naux\nnnodes 1\nroot 0\nnode 0 XOR 1", "kind"),
    ("nnfc 1\nnvars 1\naux\nnnodes 2\nroot 1\nnode 0 LIT 1\nnode 1 AND 5", "child"),
    ("nnfc 1\nnvars 1\naux\nnnodes 1\nroot 0\nnode 0 LIT 4", "literal"),
    ("nnfc 1\nnvars 1\naux\nnnodes 3\nroot 2\nnode 0 LIT 1\nnode 1 LIT 1\n"
     "node 2 AND 0 1", "decomposab"),
    ("nnfc 1\nnvars 2\naux\nnnodes 3\nroot 2\nnode 0 LIT 1\nnode 1 LIT 2\n"
     "node 2 OR 1 0 1", "determin"),
])
def test_bad_circuit_text_is_rejected(text, match):
    with pytest.raises(CircuitError, match=match):
        circuit_from_text(text)
