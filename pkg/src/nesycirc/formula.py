"""Propositional input formats, normal forms, and brute-force oracles.

Two front-end formats are supported: DIMACS CNF files and a small infix
formula language. Both reduce to the :class:`CNF` clause representation,
which downstream compilation consumes.

The DIMACS dialect is the standard one with one amendment: anything on a
line after a clause's terminating ``0`` is skipped as a trailing comment,
so ``-1 2 0   c A -> B`` is legal. A clause may still span several lines
when no ``0`` has been seen yet. Tautological clauses are dropped during
parsing; the declared clause count refers to the list before removal.

The formula grammar:

    formula := iff
    iff     := impl ('<->' impl)*            (right associative)
    impl    := or ('->' impl)?               (right associative)
    or      := and ('|' and)*
    and     := unary ('&' unary)*
    unary   := '~' unary | atom
    atom    := NAME | 'true' | 'false' | '(' formula ')'

Precedence from tightest to loosest: ``~  &  |  ->  <->``.
"""

from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DimacsError, FormulaError

__all__ = [
    "Variable", "CNF", "Formula", "Var", "Not", "And", "Or", "Implies", "Iff",
    "TrueF", "FalseF", "TRUE", "FALSE", "parse_dimacs", "serialize_dimacs",
    "make_name_table", "parse_formula", "to_nnf", "is_nnf", "to_cnf",
    "cnf_to_formula", "formula_vars", "eval_assignment", "brute_force_wmc",
    "brute_force_models",
]

ENUMERATION_GUARD = 26


@dataclass(frozen=True)
class Variable:
    """A propositional variable: a dense 1-based id plus an optional name."""

    id: int
    name: str | None = None

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"variable ids are 1-based, got {self.id}")


@dataclass(frozen=True)
class CNF:
    """A clause set over variables ``1..num_vars``.

    Clauses are tuples of nonzero signed literals. The empty clause is never
    stored; an unsatisfiable formula is marked with ``unsat=True`` instead.
    Auxiliary variables introduced by :func:`to_cnf` occupy the top of the
    variable range and are listed in ``aux_vars``; they carry weight one on
    both polarities in weighted model counting, which leaves the count over
    the original variables unchanged.
    """

    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    unsat: bool = False
    aux_vars: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(c) for c in self.clauses))
        object.__setattr__(self, "aux_vars", frozenset(self.aux_vars))
        if self.num_vars < 0:
            raise ValueError("num_vars must be nonnegative")
        for clause in self.clauses:
            if not clause:
                raise ValueError("empty clause; use the unsat marker instead")
            seen = set()
            for lit in clause:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} out of range for {self.num_vars} variables")
                if -lit in seen:
                    raise ValueError(f"tautological clause {clause}")
                seen.add(lit)
        if self.aux_vars:
            lo = min(self.aux_vars)
            if self.aux_vars != frozenset(range(lo, self.num_vars + 1)):
                raise ValueError("auxiliary variables must occupy the top of the id range")

    @property
    def n_inputs(self) -> int:
        """Number of non-auxiliary variables."""
        return self.num_vars - len(self.aux_vars)


def parse_dimacs(text: str) -> CNF:
    """Parse DIMACS CNF text.

    Raises :class:`DimacsError` (with a line number) for a malformed problem
    line, a ``0`` where a literal was expected, a literal outside the declared
    range, a clause count mismatch, or an unterminated final clause.
    """
    num_vars: int | None = None
    declared_clauses = 0
    clauses: list[tuple[int, ...]] = []
    parsed_count = 0
    pending: list[int] = []
    pending_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] == "c":
            continue
        if line[0] == "p":
            if num_vars is not None:
                raise DimacsError("duplicate problem line", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[0] != "p" or parts[1] != "cnf":
                raise DimacsError(f"malformed problem line {line!r}", lineno)
            try:
                nv, nc = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"malformed problem line {line!r}", lineno) from None
            if nv < 0 or nc < 0:
                raise DimacsError(f"malformed problem line {line!r}", lineno)
            num_vars, declared_clauses = nv, nc
            continue
        if num_vars is None:
            raise DimacsError("clause data before the problem line", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"expected an integer literal, got {tok!r}", lineno) from None
            if lit == 0:
                if not pending:
                    raise DimacsError("literal 0 where a clause body was expected (empty clause)", lineno)
                clause = _normalize_clause(pending)
                parsed_count += 1
                if clause is not None:
                    clauses.append(clause)
                pending = []
                break  # rest of the line is a trailing comment
            if abs(lit) > num_vars:
                raise DimacsError(f"literal {lit} exceeds the declared {num_vars} variables", lineno)
            if not pending:
                pending_line = lineno
            pending.append(lit)

    if num_vars is None:
        raise DimacsError("missing problem line")
    if pending:
        raise DimacsError("unterminated final clause (missing 0)", pending_line)
    if parsed_count != declared_clauses:
        raise DimacsError(f"clause count mismatch: declared {declared_clauses}, found {parsed_count}")
    return CNF(num_vars, tuple(clauses))


def _normalize_clause(lits: list[int]) -> tuple[int, ...] | None:
    """Deduplicate literals; return None for a tautological clause."""
    out: list[int] = []
    seen: set[int] = set()
    for lit in lits:
        if -lit in seen:
            return None
        if lit not in seen:
            seen.add(lit)
            out.append(lit)
    return tuple(out)


def serialize_dimacs(cnf: CNF) -> str:
    """Render a CNF as DIMACS text.

    Parsing the result yields an identical CNF. The unsat marker, which has
    no direct DIMACS spelling, is rendered as a contradictory pair of unit
    clauses over variable 1.
    """
    if cnf.unsat:
        nv = max(1, cnf.num_vars)
        body = [(1,), (-1,)]
    else:
        nv = cnf.num_vars
        body = list(cnf.clauses)
    lines = [f"p cnf {nv} {len(body)}"]
    for clause in body:
        lines.append(" ".join(str(l) for l in clause) + " 0")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Formula ASTs


class Formula:
    """Base class for formula AST nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Var(Formula):
    id: int
    name: str | None = None

    def __str__(self):
        return self.name or f"v{self.id}"


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


TRUE = TrueF()
FALSE = FalseF()

_BINARY = (And, Or, Implies, Iff)


def make_name_table(names: Sequence[str]) -> dict[str, Variable]:
    """Build a name table assigning dense ids in the order given."""
    table: dict[str, Variable] = {}
    for i, name in enumerate(names, start=1):
        if name in table:
            raise FormulaError(f"duplicate variable name {name!r}")
        table[name] = Variable(i, name)
    return table


_TOKEN_RE = re.compile(r"<->|->|[~&|()]|[A-Za-z_][A-Za-z0-9_]*")
_WS_RE = re.compile(r"\s*")


class _Parser:
    def __init__(self, text: str, table: Mapping[str, Variable]):
        self.text = text
        self.table = table
        self.pos = 0
        self.tok: str | None = None
        self.tok_pos = 0
        self._advance()

    def _advance(self):
        self.pos = _WS_RE.match(self.text, self.pos).end()
        if self.pos >= len(self.text):
            self.tok = None
            self.tok_pos = self.pos
            return
        m = _TOKEN_RE.match(self.text, self.pos)
        if not m:
            raise FormulaError(f"unexpected character {self.text[self.pos]!r}", self.pos)
        self.tok = m.group()
        self.tok_pos = self.pos
        self.pos = m.end()

    def _expect(self, tok: str):
        if self.tok != tok:
            raise FormulaError(f"expected {tok!r}, got {self.tok!r}", self.tok_pos)
        self._advance()

    def parse(self) -> Formula:
        f = self.iff()
        if self.tok is not None:
            raise FormulaError(f"unexpected token {self.tok!r}", self.tok_pos)
        return f

    def iff(self) -> Formula:
        left = self.impl()
        if self.tok == "<->":
            self._advance()
            return Iff(left, self.iff())
        return left

    def impl(self) -> Formula:
        left = self.disj()
        if self.tok == "->":
            self._advance()
            return Implies(left, self.impl())
        return left

    def disj(self) -> Formula:
        out = self.conj()
        while self.tok == "|":
            self._advance()
            out = Or(out, self.conj())
        return out

    def conj(self) -> Formula:
        out = self.unary()
        while self.tok == "&":
            self._advance()
            out = And(out, self.unary())
        return out

    def unary(self) -> Formula:
        if self.tok == "~":
            self._advance()
            return Not(self.unary())
        return self.atom()

    def atom(self) -> Formula:
        tok, pos = self.tok, self.tok_pos
        if tok == "(":
            self._advance()
            f = self.iff()
            self._expect(")")
            return f
        if tok is None:
            raise FormulaError("unexpected end of input", pos)
        if tok == "true":
            self._advance()
            return TRUE
        if tok == "false":
            self._advance()
            return FALSE
        if tok[0].isalpha() or tok[0] == "_":
            var = self.table.get(tok)
            if var is None:
                raise FormulaError(f"unknown identifier {tok!r}", pos)
            self._advance()
            return Var(var.id, var.name or tok)
        raise FormulaError(f"unexpected token {tok!r}", pos)


def parse_formula(text: str, name_table: Mapping[str, Variable]) -> Formula:
    """Parse formula text against a pre-declared name table."""
    return _Parser(text, name_table).parse()


def to_nnf(f: Formula) -> Formula:
    """Negation normal form: negations on variables only, no -> or <->.

    ``Iff(a, b)`` expands to ``Or(And(a, b), And(~a, ~b))`` before the
    negations are pushed, so nested equivalences grow the tree.
    """
    return _nnf(f, False)


def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Var):
        return Not(f) if neg else f
    if isinstance(f, Not):
        return _nnf(f.child, not neg)
    if isinstance(f, And):
        if neg:
            return Or(_nnf(f.left, True), _nnf(f.right, True))
        return And(_nnf(f.left, False), _nnf(f.right, False))
    if isinstance(f, Or):
        if neg:
            return And(_nnf(f.left, True), _nnf(f.right, True))
        return Or(_nnf(f.left, False), _nnf(f.right, False))
    if isinstance(f, Implies):
        return _nnf(Or(Not(f.left), f.right), neg)
    if isinstance(f, Iff):
        return _nnf(Or(And(f.left, f.right), And(Not(f.left), Not(f.right))), neg)
    if isinstance(f, TrueF):
        return FALSE if neg else TRUE
    if isinstance(f, FalseF):
        return TRUE if neg else FALSE
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def is_nnf(f: Formula) -> bool:
    if isinstance(f, (Var, TrueF, FalseF)):
        return True
    if isinstance(f, Not):
        return isinstance(f.child, Var)
    if isinstance(f, (And, Or)):
        return is_nnf(f.left) and is_nnf(f.right)
    return False


def _fold_constants(f: Formula) -> Formula:
    if isinstance(f, And):
        a, b = _fold_constants(f.left), _fold_constants(f.right)
        if isinstance(a, FalseF) or isinstance(b, FalseF):
            return FALSE
        if isinstance(a, TrueF):
            return b
        if isinstance(b, TrueF):
            return a
        return And(a, b)
    if isinstance(f, Or):
        a, b = _fold_constants(f.left), _fold_constants(f.right)
        if isinstance(a, TrueF) or isinstance(b, TrueF):
            return TRUE
        if isinstance(a, FalseF):
            return b
        if isinstance(b, FalseF):
            return a
        return Or(a, b)
    return f


def formula_vars(f: Formula) -> list[int]:
    """Sorted ids of the variables occurring in f."""
    out: set[int] = set()
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.id)
        elif isinstance(node, Not):
            stack.append(node.child)
        elif isinstance(node, _BINARY):
            stack.append(node.left)
            stack.append(node.right)
    return sorted(out)


def formula_names(f: Formula) -> dict[int, str]:
    """Variable names recorded on the leaves of f, keyed by id."""
    out: dict[int, str] = {}
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            if node.name:
                out[node.id] = node.name
        elif isinstance(node, Not):
            stack.append(node.child)
        elif isinstance(node, _BINARY):
            stack.append(node.left)
            stack.append(node.right)
    return out


def to_cnf(f: Formula, num_vars: int | None = None) -> CNF:
    """Tseitin-encode an NNF formula as a CNF.

    Conjuncts that are already disjunctions of literals become plain clauses;
    every other subformula gets a fresh auxiliary variable defined by a full
    biconditional, so each model of f extends uniquely to the auxiliaries.
    Pass ``num_vars`` to declare more variables than f mentions.
    """
    if not is_nnf(f):
        raise FormulaError("to_cnf expects negation normal form; apply to_nnf first")
    base = max(formula_vars(f), default=0)
    if num_vars is not None:
        if num_vars < base:
            raise ValueError(f"num_vars={num_vars} is below the highest variable id {base}")
        base = num_vars

    folded = _fold_constants(f)
    if isinstance(folded, TrueF):
        return CNF(base, ())
    if isinstance(folded, FalseF):
        return CNF(base, (), unsat=True)

    clauses: list[tuple[int, ...]] = []
    aux_of: dict[Formula, int] = {}
    next_aux = [base]

    def emit(lits: list[int]) -> None:
        # degenerate subformulas (x & ~x, x | x) yield tautological or
        # duplicated definition clauses; normalizing keeps the auxiliary
        # forced while satisfying the clause-type invariants
        clause = _normalize_clause(lits)
        if clause is not None:
            clauses.append(clause)

    def literal_of(node: Formula) -> int:
        if isinstance(node, Var):
            return node.id
        if isinstance(node, Not):
            return -node.child.id
        return define_aux(node)

    def define_aux(node: Formula) -> int:
        hit = aux_of.get(node)
        if hit is not None:
            return hit
        a = literal_of(node.left)
        b = literal_of(node.right)
        next_aux[0] += 1
        z = next_aux[0]
        aux_of[node] = z
        if isinstance(node, And):
            emit([-z, a])
            emit([-z, b])
            emit([z, -a, -b])
        else:
            emit([z, -a])
            emit([z, -b])
            emit([-z, a, b])
        return z

    for conjunct in _conjuncts(folded):
        emit([literal_of(disjunct) for disjunct in _disjuncts(conjunct)])

    n_aux = next_aux[0] - base
    aux = frozenset(range(base + 1, base + n_aux + 1))
    return CNF(base + n_aux, tuple(clauses), aux_vars=aux)


def _conjuncts(f: Formula) -> list[Formula]:
    out: list[Formula] = []
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, And):
            stack.append(node.right)
            stack.append(node.left)
        else:
            out.append(node)
    return out


def _disjuncts(f: Formula) -> list[Formula]:
    out: list[Formula] = []
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Or):
            stack.append(node.right)
            stack.append(node.left)
        else:
            out.append(node)
    return out


def cnf_to_formula(cnf: CNF) -> Formula:
    """Rebuild a formula AST (left-nested conjunction of disjunctions)."""
    if cnf.unsat:
        return FALSE
    if not cnf.clauses:
        return TRUE

    def lit_node(lit: int) -> Formula:
        return Var(lit) if lit > 0 else Not(Var(-lit))

    def clause_node(clause: tuple[int, ...]) -> Formula:
        node = lit_node(clause[0])
        for lit in clause[1:]:
            node = Or(node, lit_node(lit))
        return node

    out = clause_node(cnf.clauses[0])
    for clause in cnf.clauses[1:]:
        out = And(out, clause_node(clause))
    return out


# ---------------------------------------------------------------------------
# Oracles


def _norm_assignment(assignment) -> dict[int, bool]:
    if isinstance(assignment, Mapping):
        return {int(v): bool(x) for v, x in assignment.items()}
    return {i + 1: bool(x) for i, x in enumerate(assignment)}


def eval_assignment(f: CNF | Formula, assignment) -> bool:
    """Evaluate under a total assignment of the non-auxiliary variables.

    For a CNF with Tseitin auxiliaries the auxiliaries are checked
    existentially: the result is True when some (necessarily unique)
    extension satisfies every clause. ``assignment`` is either a mapping
    from variable id to bool or a sequence indexed by id minus one.
    """
    a = _norm_assignment(assignment)
    if isinstance(f, CNF):
        if f.unsat:
            return False
        for v in range(1, f.num_vars + 1):
            if v not in a and v not in f.aux_vars:
                raise ValueError(f"missing assignment for variable {v}")
        residual: list[tuple[int, ...]] = []
        for clause in f.clauses:
            keep: list[int] = []
            satisfied = False
            for lit in clause:
                val = a.get(abs(lit))
                if val is None:
                    keep.append(lit)
                elif (lit > 0) == val:
                    satisfied = True
                    break
            if satisfied:
                continue
            if not keep:
                return False
            residual.append(tuple(keep))
        return _mini_sat(residual)
    return _eval_formula(f, a)


def _eval_formula(f: Formula, a: dict[int, bool]) -> bool:
    if isinstance(f, Var):
        if f.id not in a:
            raise ValueError(f"missing assignment for variable {f.id}")
        return a[f.id]
    if isinstance(f, Not):
        return not _eval_formula(f.child, a)
    if isinstance(f, And):
        return _eval_formula(f.left, a) and _eval_formula(f.right, a)
    if isinstance(f, Or):
        return _eval_formula(f.left, a) or _eval_formula(f.right, a)
    if isinstance(f, Implies):
        return (not _eval_formula(f.left, a)) or _eval_formula(f.right, a)
    if isinstance(f, Iff):
        return _eval_formula(f.left, a) == _eval_formula(f.right, a)
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def _mini_sat(clauses: list[tuple[int, ...]]) -> bool:
    """Tiny DPLL satisfiability check for small residual clause sets."""
    if not clauses:
        return True
    while True:
        unit = next((c[0] for c in clauses if len(c) == 1), None)
        if unit is None:
            break
        nxt: list[tuple[int, ...]] = []
        for c in clauses:
            if unit in c:
                continue
            if -unit in c:
                c = tuple(l for l in c if l != -unit)
                if not c:
                    return False
            nxt.append(c)
        clauses = nxt
        if not clauses:
            return True
    lit = clauses[0][0]
    for branch in (lit, -lit):
        reduced: list[tuple[int, ...]] = []
        ok = True
        for c in clauses:
            if branch in c:
                continue
            if -branch in c:
                c = tuple(l for l in c if l != -branch)
                if not c:
                    ok = False
                    break
            reduced.append(c)
        if ok and _mini_sat(reduced):
            return True
    return False


def _assignment_matrix(n: int) -> np.ndarray:
    return ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def _sat_mask(cnf: CNF, X: np.ndarray) -> np.ndarray:
    sat = np.ones(X.shape[0], dtype=bool)
    for clause in cnf.clauses:
        csat = np.zeros(X.shape[0], dtype=bool)
        for lit in clause:
            csat |= X[:, abs(lit) - 1] == (1 if lit > 0 else 0)
        sat &= csat
    return sat


def brute_force_wmc(cnf: CNF, var_probs) -> float:
    """Weighted model count by exhaustive enumeration.

    ``var_probs`` gives the positive-literal weight per non-auxiliary
    variable (the negative literal gets one minus that); auxiliaries weigh
    one on both polarities. Guarded to ``num_vars <= 26``.
    """
    if cnf.num_vars > ENUMERATION_GUARD:
        raise ValueError(f"enumeration guard: {cnf.num_vars} variables exceeds {ENUMERATION_GUARD}")
    if cnf.unsat:
        return 0.0
    p = np.asarray(var_probs, dtype=float).reshape(-1)
    if p.shape[0] != cnf.n_inputs:
        raise ValueError(f"expected {cnf.n_inputs} probabilities, got {p.shape[0]}")
    n = cnf.num_vars
    X = _assignment_matrix(n)
    sat = _sat_mask(cnf, X)
    w = np.ones(X.shape[0], dtype=float)
    for v in range(1, n + 1):
        if v in cnf.aux_vars:
            continue
        col = X[:, v - 1]
        pv = p[v - 1]
        w *= np.where(col == 1, pv, 1.0 - pv)
    return float(w[sat].sum())


def brute_force_models(f: CNF | Formula, num_vars: int | None = None) -> list[dict[int, bool]]:
    """Enumerate all models over the non-auxiliary variables."""
    if isinstance(f, CNF):
        n = f.num_vars
        inputs = [v for v in range(1, n + 1) if v not in f.aux_vars]
    else:
        ids = formula_vars(f)
        n = num_vars if num_vars is not None else (ids[-1] if ids else 0)
        inputs = list(range(1, n + 1))
    if len(inputs) > ENUMERATION_GUARD:
        raise ValueError("enumeration guard exceeded")
    models = []
    for bits in range(1 << len(inputs)):
        a = {v: bool((bits >> i) & 1) for i, v in enumerate(inputs)}
        if eval_assignment(f, a):
            models.append(a)
    return models
