"""Depth-stratified circuit evaluation over batches of leaf weights.

A circuit is layerized once: nodes are grouped by topological depth, with
product nodes preceding sum nodes at equal depth, so children always sit in
strictly earlier layers. Evaluation then runs one gather + segmented reduce
per layer over a ``(n_slots, batch)`` buffer; batching across weight rows is
what numpy vectorizes, which is the whole performance story compared to a
per-query tree walk (:func:`evaluate_recursive`).

Supported structures are the circuit-safe ones: ``probability`` (weighted
model counting), ``boolean`` (satisfaction indicator on 0/1 weights), and
``log_probability`` (log-WMC; sum layers use max-shifted log-sum-exp and an
all-minus-infinity segment stays minus infinity rather than going NaN).
Fuzzy structures are refused here; see :mod:`nesycirc.semantics`.

The reverse pass returns d(value)/d(p_v) per batch row for the non-auxiliary
variables. Under the log structure the gradient is still taken with respect
to raw probabilities, d log WMC / d p_v, and is computed entirely in log
space before the final exponentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compiler import Circuit, check_properties
from .errors import CarrierError, CircuitError, StructureError
from .semantics import get_structure

__all__ = [
    "Layer", "LayeredCircuit", "LeafBatch", "layerize", "evaluate",
    "backward", "evaluate_recursive", "layer_summary",
]


@dataclass(frozen=True, eq=False)
class Layer:
    kind: str  # "LEAF" | "PROD" | "SUM"
    size: int
    slot_base: int
    child_index: np.ndarray  # flat child slot ids, concatenated per node
    child_offsets: np.ndarray  # start of each node's segment in child_index
    seg_lengths: np.ndarray


@dataclass(frozen=True, eq=False)
class LayeredCircuit:
    num_vars: int
    aux_vars: frozenset[int]
    n_slots: int
    root_slot: int
    layers: tuple[Layer, ...]
    # parallel arrays over the leaf layer's slots
    leaf_var: np.ndarray  # variable id, 0 for constants
    leaf_sign: np.ndarray  # +1 / -1 / 0
    leaf_const: np.ndarray  # constant value where leaf_var == 0
    node_slot: tuple[int, ...]  # circuit node id -> slot

    @property
    def n_inputs(self) -> int:
        return self.num_vars - len(self.aux_vars)

    @property
    def n_leaves(self) -> int:
        return self.layers[0].size


def layerize(c: Circuit) -> LayeredCircuit:
    """Stratify a smooth deterministic decomposable circuit into layers."""
    rep = check_properties(c)
    if not rep.ok:
        broken = [k for k in ("decomposable", "deterministic", "smooth") if not getattr(rep, k)]
        raise CircuitError(f"layerize requires a smooth deterministic decomposable "
                           f"circuit; violated: {', '.join(broken)} at {rep.violations}")
    n = len(c.nodes)
    depth = [0] * n
    for i, node in enumerate(c.nodes):
        if node.kind in ("AND", "OR"):
            if not node.children:
                raise CircuitError(f"node {i}: {node.kind} without children")
            depth[i] = 1 + max(depth[ch] for ch in node.children)

    buckets: dict[tuple[int, str], list[int]] = {}
    for i, node in enumerate(c.nodes):
        kind = "LEAF" if node.kind in ("LIT", "TRUE", "FALSE") else \
            ("PROD" if node.kind == "AND" else "SUM")
        buckets.setdefault((depth[i], kind), []).append(i)

    node_slot = [0] * n
    next_slot = 0
    groups: list[tuple[str, list[int]]] = []
    for d in range(max(depth) + 1):
        for kind in ("LEAF", "PROD", "SUM"):
            ids = buckets.get((d, kind))
            if not ids:
                continue
            groups.append((kind, ids))
            for i in ids:
                node_slot[i] = next_slot
                next_slot += 1

    layers: list[Layer] = []
    leaf_var: list[int] = []
    leaf_sign: list[int] = []
    leaf_const: list[float] = []
    for kind, ids in groups:
        base = node_slot[ids[0]]
        if kind == "LEAF":
            for i in ids:
                node = c.nodes[i]
                if node.kind == "LIT":
                    leaf_var.append(abs(node.literal))
                    leaf_sign.append(1 if node.literal > 0 else -1)
                    leaf_const.append(0.0)
                else:
                    leaf_var.append(0)
                    leaf_sign.append(0)
                    leaf_const.append(1.0 if node.kind == "TRUE" else 0.0)
            layers.append(Layer("LEAF", len(ids), base, np.empty(0, np.int64),
                                np.zeros(len(ids), np.int64), np.zeros(len(ids), np.int64)))
            continue
        child_index: list[int] = []
        offsets: list[int] = []
        for i in ids:
            offsets.append(len(child_index))
            child_index.extend(node_slot[ch] for ch in c.nodes[i].children)
        off = np.asarray(offsets, np.int64)
        idx = np.asarray(child_index, np.int64)
        lens = np.diff(np.append(off, len(idx)))
        layers.append(Layer(kind, len(ids), base, idx, off, lens))

    return LayeredCircuit(
        num_vars=c.num_vars, aux_vars=c.aux_vars, n_slots=n,
        root_slot=node_slot[c.root], layers=tuple(layers),
        leaf_var=np.asarray(leaf_var, np.int64),
        leaf_sign=np.asarray(leaf_sign, np.int64),
        leaf_const=np.asarray(leaf_const, np.float64),
        node_slot=tuple(node_slot),
    )


def layer_summary(lc: LayeredCircuit) -> str:
    lines = [f"slots {lc.n_slots} layers {len(lc.layers)} root_slot {lc.root_slot}"]
    for k, layer in enumerate(lc.layers):
        lines.append(f"layer {k} {layer.kind} size {layer.size}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Leaf weights


@dataclass(frozen=True, eq=False)
class LeafBatch:
    """Per-literal weights for a batch of evaluations.

    ``pos``/``neg`` give the weight of the positive and negative literal of
    each variable, shape (batch, num_vars). A batch built from probabilities
    keeps the raw rows in ``probs`` (shape (batch, n_inputs)), which is what
    :func:`backward` differentiates with respect to; explicit-weight batches
    (e.g. indicator encodings where the negative literal weighs 1) have
    ``probs = None`` and support evaluation only.
    """

    num_vars: int
    aux_vars: frozenset[int]
    pos: np.ndarray
    neg: np.ndarray
    probs: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return self.pos.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.num_vars - len(self.aux_vars)

    @classmethod
    def from_probabilities(cls, probs, num_vars: int | None = None,
                           aux_vars=frozenset()) -> "LeafBatch":
        """Weight positive literals by p and negative ones by 1 - p.

        ``probs`` covers the non-auxiliary variables only; auxiliaries get
        weight one on both polarities. A 1-D row is treated as batch size 1.
        """
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim == 1:
            p = p[None, :]
        if p.ndim != 2:
            raise ValueError(f"probability rows must be 1-D or 2-D, got shape {p.shape}")
        bad = ~((p >= 0.0) & (p <= 1.0))
        if bad.any():
            b, j = map(int, np.argwhere(bad)[0])
            raise CarrierError(
                f"batch row {b}, variable {j + 1}: value {p[b, j]!r} outside [0, 1]")
        aux = frozenset(aux_vars)
        n_inputs = p.shape[1]
        if num_vars is None:
            num_vars = n_inputs + len(aux)
        if num_vars != n_inputs + len(aux):
            raise ValueError(f"{n_inputs} probability columns plus {len(aux)} auxiliaries "
                             f"do not cover {num_vars} variables")
        if aux and aux != frozenset(range(n_inputs + 1, num_vars + 1)):
            raise ValueError("auxiliary variables must occupy the top of the id range")
        ones = np.ones((p.shape[0], len(aux)))
        return cls(num_vars=num_vars, aux_vars=aux,
                   pos=np.hstack([p, ones]), neg=np.hstack([1.0 - p, ones]), probs=p)

    @classmethod
    def from_weights(cls, pos, neg, aux_vars=frozenset()) -> "LeafBatch":
        """Explicit per-literal weights, one column per variable (aux included)."""
        wp = np.asarray(pos, dtype=np.float64)
        wn = np.asarray(neg, dtype=np.float64)
        if wp.ndim == 1:
            wp = wp[None, :]
        if wn.ndim == 1:
            wn = wn[None, :]
        if wp.shape != wn.shape or wp.ndim != 2:
            raise ValueError(f"weight arrays must share a 2-D shape, got {wp.shape} and {wn.shape}")
        for name, w in (("positive", wp), ("negative", wn)):
            bad = ~(w >= 0.0)  # catches negatives and NaN
            if bad.any():
                b, j = map(int, np.argwhere(bad)[0])
                raise CarrierError(
                    f"batch row {b}, variable {j + 1}: {name} weight {w[b, j]!r} is not >= 0")
        return cls(num_vars=wp.shape[1], aux_vars=frozenset(aux_vars), pos=wp, neg=wn)


def _check_compatible(lc: LayeredCircuit, batch: LeafBatch, s) -> None:
    if not s.circuit_safe:
        raise StructureError(
            f"structure {s.name!r} evaluates on the formula tree, not compiled circuits")
    if batch.num_vars != lc.num_vars:
        raise ValueError(f"batch covers {batch.num_vars} variables, "
                         f"circuit declares {lc.num_vars}")
    if s.name == "boolean":
        for name, w in (("positive", batch.pos), ("negative", batch.neg)):
            bad = (w != 0.0) & (w != 1.0)
            if bad.any():
                b, j = map(int, np.argwhere(bad)[0])
                raise CarrierError(f"batch row {b}, variable {j + 1}: {name} weight "
                                   f"{w[b, j]!r} is not a boolean 0/1")


def _leaf_values(lc: LayeredCircuit, batch: LeafBatch, log: bool) -> np.ndarray:
    pos, neg = batch.pos, batch.neg
    if log:
        with np.errstate(divide="ignore"):
            pos, neg = np.log(pos), np.log(neg)
    vals = np.empty((lc.n_leaves, batch.batch_size))
    ip = np.nonzero(lc.leaf_sign == 1)[0]
    im = np.nonzero(lc.leaf_sign == -1)[0]
    ic = np.nonzero(lc.leaf_sign == 0)[0]
    if ip.size:
        vals[ip] = pos[:, lc.leaf_var[ip] - 1].T
    if im.size:
        vals[im] = neg[:, lc.leaf_var[im] - 1].T
    if ic.size:
        const = lc.leaf_const[ic]
        if log:
            with np.errstate(divide="ignore"):
                const = np.log(const)
        vals[ic] = const[:, None]
    return vals


def _segmented_logsumexp(g: np.ndarray, off: np.ndarray, lens: np.ndarray) -> np.ndarray:
    mx = np.maximum.reduceat(g, off, axis=0)
    finite = ~np.isneginf(mx)
    shift = np.where(finite, mx, 0.0)
    total = np.add.reduceat(np.exp(g - np.repeat(shift, lens, axis=0)), off, axis=0)
    with np.errstate(divide="ignore"):
        out = shift + np.log(total)
    return np.where(finite, out, -np.inf)


def _forward(lc: LayeredCircuit, batch: LeafBatch, log: bool) -> np.ndarray:
    buf = np.empty((lc.n_slots, batch.batch_size))
    buf[:lc.n_leaves] = _leaf_values(lc, batch, log)
    for layer in lc.layers[1:]:
        g = buf[layer.child_index]
        off = layer.child_offsets
        if layer.kind == "PROD":
            out = np.add.reduceat(g, off, axis=0) if log \
                else np.multiply.reduceat(g, off, axis=0)
        elif log:
            out = _segmented_logsumexp(g, off, layer.seg_lengths)
        else:
            out = np.add.reduceat(g, off, axis=0)
        buf[layer.slot_base:layer.slot_base + layer.size] = out
    return buf


def evaluate(lc: LayeredCircuit, batch: LeafBatch, structure="probability") -> np.ndarray:
    """One value per batch row: WMC, log-WMC, or a 0/1 satisfaction flag."""
    s = get_structure(structure)
    _check_compatible(lc, batch, s)
    buf = _forward(lc, batch, s.name == "log_probability")
    return buf[lc.root_slot].copy()


# ---------------------------------------------------------------------------
# Reverse mode


def _sibling_products(g: np.ndarray, off: np.ndarray, lens: np.ndarray) -> np.ndarray:
    """For each child value, the product of its siblings within the segment.

    Zeros are handled by counting: with no zero sibling the product is
    total/child; with exactly one, only the zero child sees the nonzero
    product; with two or more, everything is zero.
    """
    zero = g == 0.0
    g1 = np.where(zero, 1.0, g)
    prod_nz = np.repeat(np.multiply.reduceat(g1, off, axis=0), lens, axis=0)
    n_zero = np.repeat(np.add.reduceat(zero.astype(np.float64), off, axis=0), lens, axis=0)
    return np.where(n_zero == 0.0, prod_nz / g1,
                    np.where((n_zero == 1.0) & zero, prod_nz, 0.0))


def _sibling_logsums(g: np.ndarray, off: np.ndarray, lens: np.ndarray) -> np.ndarray:
    """Log-space analogue of :func:`_sibling_products` (-inf plays zero)."""
    ninf = np.isneginf(g)
    g0 = np.where(ninf, 0.0, g)
    sum_f = np.repeat(np.add.reduceat(g0, off, axis=0), lens, axis=0)
    n_inf = np.repeat(np.add.reduceat(ninf.astype(np.float64), off, axis=0), lens, axis=0)
    return np.where(n_inf == 0.0, sum_f - g0,
                    np.where((n_inf == 1.0) & ninf, sum_f, -np.inf))


def _leaf_grad(lc: LayeredCircuit, leaf_adj: np.ndarray, batch_size: int) -> np.ndarray:
    """Fold leaf adjoints into d/dp per input variable: positive minus negative."""
    n_inputs = lc.n_inputs
    grad = np.zeros((batch_size, n_inputs))
    for slot in range(lc.n_leaves):
        v = int(lc.leaf_var[slot])
        if v == 0 or v > n_inputs:
            continue
        grad[:, v - 1] += int(lc.leaf_sign[slot]) * leaf_adj[slot]
    return grad


def backward(lc: LayeredCircuit, batch: LeafBatch, structure="probability") -> np.ndarray:
    """Gradient of evaluate's output w.r.t. each input-variable probability.

    Shape (batch, n_inputs). Requires a probability-parameterized batch (the
    ``from_probabilities`` constructor); the probability structure returns
    dWMC/dp, the log structure d log WMC / dp. Rows with zero weighted count
    have no finite log-gradient and come back non-finite.
    """
    s = get_structure(structure)
    if not s.differentiable:
        raise StructureError(f"structure {s.name!r} is not differentiable")
    _check_compatible(lc, batch, s)
    if batch.probs is None:
        raise ValueError("gradients are taken w.r.t. probabilities; "
                         "build the batch with LeafBatch.from_probabilities")
    B = batch.batch_size
    log = s.name == "log_probability"
    buf = _forward(lc, batch, log)

    if not log:
        adj = np.zeros((lc.n_slots, B))
        adj[lc.root_slot] = 1.0
        for layer in reversed(lc.layers[1:]):
            a = np.repeat(adj[layer.slot_base:layer.slot_base + layer.size],
                          layer.seg_lengths, axis=0)
            if layer.kind == "PROD":
                g = buf[layer.child_index]
                a = a * _sibling_products(g, layer.child_offsets, layer.seg_lengths)
            np.add.at(adj, layer.child_index, a)
        return _leaf_grad(lc, adj[:lc.n_leaves], B)

    ladj = np.full((lc.n_slots, B), -np.inf)
    ladj[lc.root_slot] = 0.0
    for layer in reversed(lc.layers[1:]):
        a = np.repeat(ladj[layer.slot_base:layer.slot_base + layer.size],
                      layer.seg_lengths, axis=0)
        if layer.kind == "PROD":
            g = buf[layer.child_index]
            a = a + _sibling_logsums(g, layer.child_offsets, layer.seg_lengths)
        np.logaddexp.at(ladj, layer.child_index, a)
    # ladj holds log of the WMC-space adjoints; normalize by log WMC and
    # exponentiate to get the probability-ratio contributions.
    log_z = buf[lc.root_slot]
    with np.errstate(over="ignore", invalid="ignore"):
        ratios = np.exp(ladj[:lc.n_leaves] - log_z[None, :])
    return _leaf_grad(lc, ratios, B)


# ---------------------------------------------------------------------------
# Per-query reference evaluation


def evaluate_recursive(c: Circuit, batch: LeafBatch, structure="probability") -> np.ndarray:
    """Reference implementation: one memoized tree walk per batch row.

    Matches :func:`evaluate` node for node (children reduced left to right)
    and serves as the unbatched timing baseline.
    """
    s = get_structure(structure)
    if not s.circuit_safe:
        raise StructureError(
            f"structure {s.name!r} evaluates on the formula tree, not compiled circuits")
    if batch.num_vars != c.num_vars:
        raise ValueError(f"batch covers {batch.num_vars} variables, "
                         f"circuit declares {c.num_vars}")
    log = s.name == "log_probability"
    neg_inf = float("-inf")
    out = np.empty(batch.batch_size)
    nodes = c.nodes
    for b in range(batch.batch_size):
        pos = batch.pos[b]
        neg = batch.neg[b]
        vals: list[float] = [0.0] * len(nodes)
        for i, node in enumerate(nodes):
            kind = node.kind
            if kind == "LIT":
                w = pos[abs(node.literal) - 1] if node.literal > 0 \
                    else neg[abs(node.literal) - 1]
                vals[i] = (math.log(w) if w > 0.0 else neg_inf) if log else w
            elif kind == "AND":
                acc = vals[node.children[0]]
                if log:
                    for ch in node.children[1:]:
                        acc += vals[ch]
                else:
                    for ch in node.children[1:]:
                        acc *= vals[ch]
                vals[i] = acc
            elif kind == "OR":
                if log:
                    cv = [vals[ch] for ch in node.children]
                    m = max(cv)
                    vals[i] = neg_inf if m == neg_inf \
                        else m + math.log(sum(math.exp(v - m) for v in cv))
                else:
                    acc = vals[node.children[0]]
                    for ch in node.children[1:]:
                        acc += vals[ch]
                    vals[i] = acc
            elif kind == "TRUE":
                vals[i] = 0.0 if log else 1.0
            else:
                vals[i] = neg_inf if log else 0.0
        out[b] = vals[c.root]
    return out
