"""Pluggable algebraic structures giving meaning to formulas and circuits.

A structure fixes the carrier set and the combination rules for sum nodes,
product nodes, and weighted leaves. Boolean, probability, and log-probability
structures are circuit safe: evaluating a compiled circuit under them agrees
with the formula semantics. The fuzzy families are not; decision splits and
smoothing gadgets are WMC-preserving rewrites, not fuzzy-value-preserving
ones, so fuzzy evaluation works on the NNF formula tree only.

Structure-to-structure value conversions live in an explicit closed table
(:func:`transform`); any pair not listed raises, including identity pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import FormulaError, IncompatibleStructures, StructureError
from .formula import And, FalseF, Not, Or, TrueF, Var, is_nnf

__all__ = [
    "FuzzyConnectives", "Structure", "builtin_structures", "get_structure",
    "fuzzy_structure_from_ops", "evaluate_fuzzy", "fuzzy_value_and_grad",
    "transform", "transform_pairs",
]


@dataclass(frozen=True)
class FuzzyConnectives:
    """Connective algebra on [0, 1]. Implication is derived, not stored.

    The grad callables return subgradients; at min/max ties they take the
    first-argument branch so gradients are deterministic. They are None for
    user-supplied algebras registered without gradient rules.
    """

    neg: Callable
    conj: Callable
    disj: Callable
    neg_grad: Callable | None = None
    conj_grad: Callable | None = None
    disj_grad: Callable | None = None

    def implies(self, x, y):
        return self.disj(self.neg(x), y)


@dataclass(frozen=True)
class Structure:
    """A semantics tag plus its evaluation rules.

    ``sum_rule``/``product_rule``/``leaf_rule`` are short human-readable
    descriptions surfaced by the CLI; the evaluators dispatch on ``name``.
    """

    name: str
    carrier: str
    differentiable: bool
    circuit_safe: bool
    sum_rule: str
    product_rule: str
    leaf_rule: str
    fuzzy: FuzzyConnectives | None = None


def _f(x):
    return np.asarray(x, dtype=np.float64)


_PRODUCT = FuzzyConnectives(
    neg=lambda x: 1.0 - _f(x),
    conj=lambda x, y: _f(x) * _f(y),
    disj=lambda x, y: _f(x) + _f(y) - _f(x) * _f(y),
    neg_grad=lambda x: -np.ones_like(_f(x)),
    conj_grad=lambda x, y: (_f(y), _f(x)),
    disj_grad=lambda x, y: (1.0 - _f(y), 1.0 - _f(x)),
)

_GODEL = FuzzyConnectives(
    neg=lambda x: 1.0 - _f(x),
    conj=lambda x, y: np.minimum(_f(x), _f(y)),
    disj=lambda x, y: np.maximum(_f(x), _f(y)),
    neg_grad=lambda x: -np.ones_like(_f(x)),
    conj_grad=lambda x, y: ((_f(x) <= _f(y)).astype(np.float64),
                            (_f(x) > _f(y)).astype(np.float64)),
    disj_grad=lambda x, y: ((_f(x) >= _f(y)).astype(np.float64),
                            (_f(x) < _f(y)).astype(np.float64)),
)

def _luk_conj_grad(x, y):
    # max(0, t): at the tie t == 0 the first argument (the constant) wins,
    # so the subgradient is zero there; dually for disj's min(1, t).
    active = (_f(x) + _f(y) - 1.0 > 0.0).astype(np.float64)
    return active, active


def _luk_disj_grad(x, y):
    active = (_f(x) + _f(y) < 1.0).astype(np.float64)
    return active, active


_LUKASIEWICZ = FuzzyConnectives(
    neg=lambda x: 1.0 - _f(x),
    conj=lambda x, y: np.maximum(0.0, _f(x) + _f(y) - 1.0),
    disj=lambda x, y: np.minimum(1.0, _f(x) + _f(y)),
    neg_grad=lambda x: -np.ones_like(_f(x)),
    conj_grad=_luk_conj_grad,
    disj_grad=_luk_disj_grad,
)


def _make_fuzzy(name: str, conn: FuzzyConnectives) -> Structure:
    return Structure(
        name=name, carrier="[0, 1]", differentiable=True, circuit_safe=False,
        sum_rule="disj", product_rule="conj", leaf_rule="score / neg(score)",
        fuzzy=conn,
    )


_BUILTINS: dict[str, Structure] = {
    "boolean": Structure(
        name="boolean", carrier="{0, 1}", differentiable=False, circuit_safe=True,
        sum_rule="x + y (exclusive)", product_rule="x * y", leaf_rule="w+ = x, w- = 1 - x",
    ),
    "probability": Structure(
        name="probability", carrier="[0, 1]", differentiable=True, circuit_safe=True,
        sum_rule="x + y", product_rule="x * y", leaf_rule="w+ = p, w- = 1 - p",
    ),
    "log_probability": Structure(
        name="log_probability", carrier="[-inf, 0]", differentiable=True, circuit_safe=True,
        sum_rule="logsumexp", product_rule="x + y", leaf_rule="w+ = log p, w- = log(1 - p)",
    ),
    "fuzzy_product": _make_fuzzy("fuzzy_product", _PRODUCT),
    "fuzzy_godel": _make_fuzzy("fuzzy_godel", _GODEL),
    "fuzzy_lukasiewicz": _make_fuzzy("fuzzy_lukasiewicz", _LUKASIEWICZ),
}

_ALIASES = {"log": "log_probability"}


def builtin_structures() -> dict[str, Structure]:
    return dict(_BUILTINS)


def get_structure(name) -> Structure:
    """Resolve a structure tag (or pass a Structure through unchanged)."""
    if isinstance(name, Structure):
        return name
    key = _ALIASES.get(name, name)
    try:
        return _BUILTINS[key]
    except KeyError:
        raise StructureError(f"unknown structure tag {name!r}") from None


def fuzzy_structure_from_ops(name: str, ops: dict) -> Structure:
    """Build a fuzzy structure from user connectives.

    ``ops`` maps 'not' and 'and' (required) and optionally 'or' to
    callables; a missing 'or' is completed by De Morgan duality from the
    supplied negation and conjunction. No gradient rules are attached, so
    the result supports evaluation but not fuzzy_value_and_grad.
    """
    try:
        neg = ops["not"]
        conj = ops["and"]
    except KeyError as exc:
        raise StructureError(f"fuzzy connective table needs {exc.args[0]!r}") from None
    disj = ops.get("or")
    if disj is None:
        def disj(x, y, _n=neg, _c=conj):
            return _n(_c(_n(x), _n(y)))
    return _make_fuzzy(name, FuzzyConnectives(neg=neg, conj=conj, disj=disj))


# ---------------------------------------------------------------------------
# Fuzzy evaluation on NNF trees


def _check_fuzzy_inputs(f, s: Structure):
    if s.fuzzy is None:
        raise StructureError(f"structure {s.name!r} is not a fuzzy family")
    if not is_nnf(f):
        raise FormulaError("fuzzy evaluation needs NNF input; apply to_nnf first")


def evaluate_fuzzy(f, s, var_scores) -> np.ndarray:
    """Evaluate an NNF formula under a fuzzy structure.

    ``var_scores`` has variable id i at index i-1 along the last axis;
    leading axes are batch dimensions and broadcast through the connectives.
    """
    s = get_structure(s)
    _check_fuzzy_inputs(f, s)
    scores = np.asarray(var_scores, dtype=np.float64)
    conn = s.fuzzy

    def rec(node):
        if isinstance(node, Var):
            return scores[..., node.id - 1]
        if isinstance(node, Not):
            return conn.neg(scores[..., node.child.id - 1])
        if isinstance(node, And):
            return conn.conj(rec(node.left), rec(node.right))
        if isinstance(node, Or):
            return conn.disj(rec(node.left), rec(node.right))
        if isinstance(node, TrueF):
            return np.ones(scores.shape[:-1])
        if isinstance(node, FalseF):
            return np.zeros(scores.shape[:-1])
        raise FormulaError(f"unexpected node {type(node).__name__} in NNF")

    return rec(f)


def fuzzy_value_and_grad(f, s, var_scores):
    """Evaluate and differentiate an NNF formula under a fuzzy structure.

    Returns (value, grad) with grad shaped like ``var_scores``. Requires the
    structure to carry gradient rules (all built-in families do).
    """
    s = get_structure(s)
    _check_fuzzy_inputs(f, s)
    conn = s.fuzzy
    if conn.conj_grad is None or conn.disj_grad is None or conn.neg_grad is None:
        raise StructureError(
            f"structure {s.name!r} has no gradient rules; register them or use a built-in family")
    scores = np.asarray(var_scores, dtype=np.float64)

    def one_hot(i):
        g = np.zeros(scores.shape)
        g[..., i] = 1.0
        return g

    def rec(node):
        if isinstance(node, Var):
            return scores[..., node.id - 1], one_hot(node.id - 1)
        if isinstance(node, Not):
            x = scores[..., node.child.id - 1]
            return conn.neg(x), conn.neg_grad(x)[..., None] * one_hot(node.child.id - 1)
        if isinstance(node, (And, Or)):
            va, ga = rec(node.left)
            vb, gb = rec(node.right)
            if isinstance(node, And):
                val, (da, db) = conn.conj(va, vb), conn.conj_grad(va, vb)
            else:
                val, (da, db) = conn.disj(va, vb), conn.disj_grad(va, vb)
            return val, np.asarray(da)[..., None] * ga + np.asarray(db)[..., None] * gb
        if isinstance(node, TrueF):
            return np.ones(scores.shape[:-1]), np.zeros(scores.shape)
        if isinstance(node, FalseF):
            return np.zeros(scores.shape[:-1]), np.zeros(scores.shape)
        raise FormulaError(f"unexpected node {type(node).__name__} in NNF")

    return rec(f)


# ---------------------------------------------------------------------------
# Structure-to-structure transformations


def _prob_to_log(values):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(values, dtype=np.float64))


def _bool_embed(values):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise StructureError("boolean values must be exactly 0 or 1")
    return arr


_TRANSFORMS: dict[tuple[str, str], Callable] = {
    ("probability", "log_probability"): _prob_to_log,
    ("log_probability", "probability"): lambda v: np.exp(np.asarray(v, dtype=np.float64)),
    ("boolean", "probability"): _bool_embed,
    ("boolean", "fuzzy_product"): _bool_embed,
    ("boolean", "fuzzy_godel"): _bool_embed,
    ("boolean", "fuzzy_lukasiewicz"): _bool_embed,
}


def transform_pairs() -> frozenset[tuple[str, str]]:
    """The closed set of (from, to) tags transform accepts."""
    return frozenset(_TRANSFORMS)


def transform(values, frm, to):
    """Convert values between structures, or raise IncompatibleStructures.

    The table is deliberately closed: identity pairs and every fuzzy-to-
    anything direction are rejected rather than coerced.
    """
    frm = get_structure(frm)
    to = get_structure(to)
    fn = _TRANSFORMS.get((frm.name, to.name))
    if fn is None:
        raise IncompatibleStructures(frm.name, to.name)
    return fn(values)
