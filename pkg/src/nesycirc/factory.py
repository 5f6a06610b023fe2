"""A configurable factory assembling logic modules from interchangeable parts.

The factory bundles three registries: structures (semantics tags, possibly
user fuzzy connective tables), aggregators (soft quantifiers over a score
axis), and predicates (scoring functions over entity embeddings). From
those it builds AnnotatedModules for connective application and for whole
formulas, so a fuzzy-logic system and a probabilistic one differ only in
the structure tag handed to :meth:`ModuleFactory.build_formula_module`.

The built-in quantifiers are generalized means: ``exists`` is
p_mean(x, p) = (mean(x^p))^(1/p) and ``forall`` its De Morgan dual
1 - p_mean(1 - x, p), both with p = 6 by default. The disjunction op name
``'pr'`` (probabilistic sum) is accepted as an alias of ``'or'``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .compiler import Circuit, compile_cnf, smooth
from .compose import AnnotatedModule, Manifest, SymTensor, fresh_symbol
from .errors import CompositionError, IncompatibleStructures, StructureError
from .formula import CNF, cnf_to_formula, formula_names, formula_vars, parse_dimacs, to_cnf, to_nnf
from .layered import LayeredCircuit, LeafBatch, evaluate, layerize
from .semantics import Structure, builtin_structures, evaluate_fuzzy, fuzzy_structure_from_ops, get_structure

__all__ = [
    "Aggregator", "Predicate", "EqualityPredicate", "ModuleFactory",
    "CircuitBackend", "p_mean", "builtin_aggregators", "load_factory_config",
]


@dataclass(frozen=True)
class CircuitBackend:
    """Compiled artifacts behind a circuit-backed module.

    Kept on ``AnnotatedModule.backend`` so gradient and loss code can reuse
    the layered circuit instead of re-deriving it from the CNF.
    """

    cnf: CNF
    circuit: Circuit = field(repr=False)
    layered: LayeredCircuit = field(repr=False)
    structure: str = "probability"


def p_mean(x, p: float = 6.0, axis: int = -1) -> np.ndarray:
    """Generalized power mean (mean(x^p))^(1/p); a soft existential for p >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[axis] == 0:
        raise ValueError("p_mean needs a nonempty score axis")
    return np.mean(arr ** p, axis=axis) ** (1.0 / p)


@dataclass(frozen=True)
class Aggregator:
    """A reduction over the last score axis, with its parameters on record."""

    name: str
    op: Callable = field(repr=False)
    params: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class Predicate:
    functor: str
    arity: int
    structure: str
    score: Callable = field(repr=False)


def _eq_score(x, y):
    return np.exp(-np.linalg.norm(np.asarray(x, np.float64) - np.asarray(y, np.float64),
                                  axis=-1))


EqualityPredicate = Predicate("eq", 2, "fuzzy_product", _eq_score)


def builtin_aggregators(p: float = 6.0) -> dict[str, Aggregator]:
    return {
        "exists": Aggregator("exists", lambda x, _p=p: p_mean(x, _p), (("p", p),)),
        "forall": Aggregator("forall", lambda x, _p=p: 1.0 - p_mean(1.0 - np.asarray(x, np.float64), _p),
                             (("p", p),)),
    }


class ModuleFactory:
    """Immutable bundle of structures, aggregators, and predicates.

    ``structures`` maps extra tags to Structure objects or to plain
    connective dicts with 'not'/'and' (and optionally 'or'); built-in tags
    are always available. ``aggregators`` maps names to Aggregator objects
    or bare callables reducing over the last axis. ``predicates`` is an
    iterable of Predicate definitions.
    """

    def __init__(self, structures=None, aggregators=None, predicates=()):
        merged = builtin_structures()
        for tag, value in (structures or {}).items():
            if isinstance(value, Structure):
                merged[tag] = value
            elif isinstance(value, dict):
                merged[tag] = fuzzy_structure_from_ops(tag, value)
            else:
                raise StructureError(
                    f"structure {tag!r} must be a Structure or a connective dict")
        aggs = builtin_aggregators()
        for name, value in (aggregators or {}).items():
            aggs[name] = value if isinstance(value, Aggregator) else Aggregator(name, value)
        preds: dict[str, Predicate] = {}
        for pred in predicates:
            if not isinstance(pred, Predicate):
                raise CompositionError(f"predicates must be Predicate instances, got {pred!r}")
            if pred.functor in preds:
                raise CompositionError(f"duplicate predicate {pred.functor!r}")
            if pred.structure not in merged:
                raise StructureError(f"predicate {pred.functor!r} references "
                                     f"unregistered structure {pred.structure!r}")
            preds[pred.functor] = pred
        self._structures = merged
        self._aggregators = aggs
        self._predicates = preds

    @property
    def structures(self) -> dict[str, Structure]:
        return dict(self._structures)

    @property
    def aggregators(self) -> dict[str, Aggregator]:
        return dict(self._aggregators)

    @property
    def predicates(self) -> dict[str, Predicate]:
        return dict(self._predicates)

    def resolve_structure(self, tag) -> Structure:
        if isinstance(tag, Structure):
            return tag
        s = self._structures.get("log_probability" if tag == "log" else tag)
        if s is None:
            raise StructureError(f"unknown structure tag {tag!r}")
        return s

    # -- connective nodes ---------------------------------------------------

    def _connectives(self, tag: str):
        s = self.resolve_structure(tag)
        if s.fuzzy is None:
            raise StructureError(f"structure {s.name!r} has no connective table; "
                                 f"connective nodes need a fuzzy family")
        return s.fuzzy

    def unary_node(self, op_name: str, x: AnnotatedModule) -> AnnotatedModule:
        """Apply a unary connective elementwise to x's single output."""
        spec = _single_output(x)
        conn = self._connectives(spec.structure)
        if op_name != "not":
            raise StructureError(f"unknown unary connective {op_name!r}")

        def compute(*values):
            return conn.neg(x(*values, check=False))

        name = f"{op_name}({x.name})"
        records = (("module", x.name, _spec_syms(x.input_spec), _spec_syms(x.output_spec)),
                   ("connective", op_name, ",".join(spec.symbols)))
        return AnnotatedModule(name, x.input_spec, (spec,), compute,
                               Manifest(name, records))

    def binary_node(self, op_name: str, x: AnnotatedModule, y: AnnotatedModule) -> AnnotatedModule:
        """Combine two single-output modules elementwise under a connective.

        The output positions get fresh derived symbol names, recorded in the
        manifest; the operands' input specs are concatenated.
        """
        sx, sy = _single_output(x), _single_output(y)
        if sx.structure != sy.structure:
            raise IncompatibleStructures(sx.structure, sy.structure)
        if sx.shape != sy.shape:
            raise CompositionError(f"operand shapes differ: {sx.shape} vs {sy.shape}")
        conn = self._connectives(sx.structure)
        ops = {"and": conn.conj, "or": conn.disj, "pr": conn.disj,
               "implies": conn.implies}
        fn = ops.get(op_name)
        if fn is None:
            raise StructureError(f"unknown binary connective {op_name!r}")
        seen = set()
        for spec in x.input_spec + y.input_spec:
            for s in spec.symbols:
                if s in seen:
                    raise CompositionError(f"operands share input symbol {s!r}; "
                                           f"wire shared inputs with wire_dag")
                seen.add(s)
        fresh = [fresh_symbol(op_name) for _ in range(max(sx.size, 1))]
        out_spec = SymTensor(fresh[0] if sx.shape == () else fresh,
                             structure=sx.structure, shape=None if sx.shape == () else sx.shape)
        nx = len(x.input_spec)

        def compute(*values):
            a = x(*values[:nx], check=False)
            b = y(*values[nx:], check=False)
            return fn(a, b)

        name = f"{op_name}({x.name},{y.name})"
        records = (("module", x.name, _spec_syms(x.input_spec), _spec_syms(x.output_spec)),
                   ("module", y.name, _spec_syms(y.input_spec), _spec_syms(y.output_spec)),
                   ("connective", op_name, ",".join(out_spec.symbols)))
        return AnnotatedModule(name, x.input_spec + y.input_spec, (out_spec,),
                               compute, Manifest(name, records))

    # -- aggregation and predicates -----------------------------------------

    def aggregate(self, name: str, scores, axis: int = -1):
        """Reduce a score axis with a registered aggregator."""
        agg = self._aggregators.get(name)
        if agg is None:
            raise CompositionError(f"unknown aggregator {name!r}")
        arr = np.asarray(scores, dtype=np.float64)
        if arr.ndim == 0 or arr.shape[axis] == 0:
            raise ValueError("aggregation needs a nonempty score axis")
        return agg.op(np.moveaxis(arr, axis, -1))

    def apply_predicate(self, functor: str, *entities) -> AnnotatedModule:
        """Score entity embeddings; returns a constant module holding the scores."""
        pred = self._predicates.get(functor)
        if pred is None:
            raise CompositionError(f"unknown predicate {functor!r}")
        if len(entities) != pred.arity:
            raise CompositionError(f"predicate {functor!r} has arity {pred.arity}, "
                                   f"got {len(entities)} arguments")
        scores = np.asarray(pred.score(*entities), dtype=np.float64)
        out = SymTensor(fresh_symbol(functor), structure=pred.structure)
        return AnnotatedModule(fresh_symbol(functor), (), (out,),
                               lambda _s=scores: _s)

    # -- formula-backed modules ---------------------------------------------

    def build_formula_module(self, f, structure_tag, name: str = "phi") -> AnnotatedModule:
        """Compile a formula into a module under any registered structure.

        Circuit-safe structures go through compile/smooth/layerize; fuzzy
        ones evaluate the NNF directly. Either way the module maps one value
        per formula variable (ids 1..max, symbols from leaf names or v<i>)
        to a single scalar, so swapping the structure tag never changes the
        interface.
        """
        s = self.resolve_structure(structure_tag)
        nnf = to_nnf(f)
        n = max(formula_vars(nnf), default=0)
        names = formula_names(f)
        symbols = [names.get(i, f"v{i}") for i in range(1, n + 1)]
        in_spec = SymTensor(symbols, structure=s.name, shape=(n,))
        out_spec = SymTensor("score", structure=s.name)
        if s.circuit_safe:
            cnf = to_cnf(nnf, num_vars=n)
            compute, back = _circuit_compute(cnf, s)
        else:
            compute, back = _fuzzy_compute(nnf, s, n), None
        return AnnotatedModule(name, (in_spec,), (out_spec,), compute, backend=back)

    def module_from_dimacs(self, source, structure_tag="probability",
                           name: str = "phi") -> AnnotatedModule:
        """Like build_formula_module, but from DIMACS text or a CNF.

        Input symbols default to v1..vn over the non-auxiliary variables.
        Fuzzy structures are only accepted for auxiliary-free CNFs: fuzzy
        values of a Tseitin encoding would not match the original formula.
        """
        cnf = source if isinstance(source, CNF) else parse_dimacs(source)
        s = self.resolve_structure(structure_tag)
        symbols = [f"v{i}" for i in range(1, cnf.n_inputs + 1)]
        in_spec = SymTensor(symbols, structure=s.name, shape=(cnf.n_inputs,))
        out_spec = SymTensor("score", structure=s.name)
        if s.circuit_safe:
            compute, back = _circuit_compute(cnf, s)
        else:
            if cnf.aux_vars:
                raise StructureError("fuzzy structures evaluate the original formula; "
                                     "this CNF contains Tseitin auxiliaries")
            compute, back = _fuzzy_compute(cnf_to_formula(cnf), s, cnf.num_vars), None
        return AnnotatedModule(name, (in_spec,), (out_spec,), compute, backend=back)


def _single_output(m: AnnotatedModule) -> SymTensor:
    if len(m.output_spec) != 1:
        raise CompositionError(f"{m.name} must have exactly one output tensor")
    return m.output_spec[0]


def _spec_syms(specs) -> str:
    return ";".join(",".join(st.symbols) for st in specs)


def _circuit_compute(cnf: CNF, s: Structure):
    sc = smooth(compile_cnf(cnf))
    lc = layerize(sc)
    back = CircuitBackend(cnf, sc, lc, s.name)

    def compute(values):
        arr = np.asarray(values, dtype=np.float64)
        unbatched = arr.ndim == 1
        rows = arr[None, :] if unbatched else arr
        if s.name == "log_probability":
            rows = np.exp(rows)
        batch = LeafBatch.from_probabilities(rows, num_vars=cnf.num_vars,
                                             aux_vars=cnf.aux_vars)
        out = evaluate(lc, batch, s)
        return out[0] if unbatched else out

    return compute, back


def _fuzzy_compute(nnf, s: Structure, n: int):
    def compute(values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape[-1] != n:
            raise ValueError(f"expected {n} scores on the last axis, got {arr.shape}")
        return evaluate_fuzzy(nnf, s, arr)

    return compute


# ---------------------------------------------------------------------------
# Config files


def load_factory_config(path) -> ModuleFactory:
    """Build a factory from an INI file.

    Sections: ``[structures]`` with ``tags = tag, tag, ...`` (built-in tags,
    validated); ``[aggregators]`` with ``name = kind, p`` entries where kind
    is exists or forall; ``[predicates]`` with ``names = eq`` (built-ins by
    name). All sections are optional.
    """
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise CompositionError(f"bad factory config: {exc}") from None

    if cp.has_option("structures", "tags"):
        for tag in _csv(cp.get("structures", "tags")):
            get_structure(tag)  # unknown tags must fail loudly

    aggregators: dict[str, Aggregator] = {}
    if cp.has_section("aggregators"):
        for name, raw in cp.items("aggregators"):
            parts = _csv(raw)
            if len(parts) != 2 or parts[0] not in ("exists", "forall"):
                raise CompositionError(
                    f"aggregator {name!r} must be 'exists, <p>' or 'forall, <p>', got {raw!r}")
            kind, p = parts[0], float(parts[1])
            base = builtin_aggregators(p)[kind]
            aggregators[name] = Aggregator(name, base.op, (("p", p),))

    predicates: list[Predicate] = []
    if cp.has_option("predicates", "names"):
        for pname in _csv(cp.get("predicates", "names")):
            if pname != "eq":
                raise CompositionError(f"unknown built-in predicate {pname!r}")
            predicates.append(EqualityPredicate)

    return ModuleFactory(aggregators=aggregators, predicates=predicates)


def _csv(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]
