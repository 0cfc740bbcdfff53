"""Dataflow graph IR and a deterministic topological interpreter.

The interpreter exposes one seam: after every injectable node computes its
output, an optional interceptor may hand back a replacement tensor that is
used downstream. Without an interceptor a run is the golden run.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, NamedTuple, Optional

import numpy as np

from .ops import OPS, OpKind, ShapeError
from .tensor import DType, Tensor

__all__ = [
    "ContractViolation", "ExecutionTrace", "Graph", "GraphError", "Node", "OpKind",
    "TraceEntry", "count_instances", "execute", "infer_shapes", "validate",
]


class GraphError(ValueError):
    """Structural or shape problem in a graph; ``node`` names the offender."""

    def __init__(self, message: str, node: str | None = None):
        super().__init__(f"{node}: {message}" if node else message)
        self.node = node


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    kind: OpKind
    inputs: tuple[str, ...] = ()
    attrs: Mapping = field(default_factory=dict)
    injectable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", OpKind(self.kind))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "attrs", MappingProxyType(dict(self.attrs)))
        if self.kind in (OpKind.Const, OpKind.Placeholder) or self.attrs.get("preprocessing"):
            object.__setattr__(self, "injectable", False)


class Graph:
    """An immutable dataflow graph.

    ``constants`` holds the tensor of every Const node. Nodes are kept in
    document order; ``topo_order`` is a stable topological sort of them.
    """

    def __init__(self, nodes: Iterable[Node], outputs: Iterable[str],
                 constants: Mapping[str, Tensor] | None = None, name: str = "graph"):
        self.name = name
        self.nodes: dict[str, Node] = {}
        for n in nodes:
            if n.id in self.nodes:
                raise GraphError("duplicate node id", n.id)
            self.nodes[n.id] = n
        self.outputs = tuple(outputs)
        self.constants = dict(constants or {})
        self.topo_order, self.structure_errors = _toposort(self.nodes)
        self.placeholders = tuple(i for i in self.topo_order if self.nodes[i].kind is OpKind.Placeholder)

    def __repr__(self):
        return f"Graph({self.name!r}, {len(self.nodes)} nodes, outputs={list(self.outputs)})"

    def kinds(self) -> Counter:
        return Counter(n.kind for n in self.nodes.values())


def _toposort(nodes: dict[str, Node]) -> tuple[tuple[str, ...], list[str]]:
    """Stable DFS topological sort; problems are returned, not raised."""
    errors = [f"{n.id}: input {i!r} does not exist"
              for n in nodes.values() for i in n.inputs if i not in nodes]
    if errors:
        return (), errors
    order: list[str] = []
    state: dict[str, int] = {}  # 1 = on stack, 2 = done

    for root in nodes:
        if state.get(root):
            continue
        stack = [(root, iter(nodes[root].inputs))]
        state[root] = 1
        while stack:
            nid, it = stack[-1]
            for dep in it:
                s = state.get(dep)
                if s == 1:
                    return (), [f"{nid}: cycle through {dep!r}"]
                if s is None:
                    state[dep] = 1
                    stack.append((dep, iter(nodes[dep].inputs)))
                    break
            else:
                stack.pop()
                state[nid] = 2
                order.append(nid)
    return tuple(order), []


# ------------------------------------------------------------------ analysis


def _placeholder_sig(node: Node) -> tuple[tuple, DType]:
    return tuple(int(s) for s in node.attrs["shape"]), DType(node.attrs.get("dtype", "f32"))


def infer_shapes(g: Graph, feed_shapes: Mapping[str, tuple] | None = None) -> dict[str, tuple]:
    """Static output shape of every node. Raises GraphError naming the node."""
    return {k: v[0] for k, v in _infer(g, feed_shapes).items()}


def _infer(g: Graph, feed_shapes=None) -> dict[str, tuple[tuple, DType]]:
    sig: dict[str, tuple[tuple, DType]] = {}
    for nid in g.topo_order:
        node = g.nodes[nid]
        spec = OPS[node.kind]
        if node.kind is OpKind.Const:
            if nid not in g.constants:
                raise GraphError("Const node has no value", nid)
            c = g.constants[nid]
            sig[nid] = (c.shape, c.dtype)
            continue
        if node.kind is OpKind.Placeholder:
            shape, dt = _placeholder_sig(node)
            if feed_shapes and nid in feed_shapes:
                shape = tuple(feed_shapes[nid])
            sig[nid] = (shape, dt)
            continue
        try:
            sig[nid] = spec.infer([sig[i] for i in node.inputs], node.attrs)
        except (ShapeError, KeyError, TypeError, ValueError) as e:
            raise GraphError(f"shape mismatch: {e}", nid) from e
    return sig


def validate(g: Graph) -> list[str]:
    """Return diagnostics; an empty list means the graph is well formed.

    Checks dangling inputs, cycles, arity, attribute schemas, outputs and
    shape inference.
    """
    if g.structure_errors:
        return list(g.structure_errors)
    diags = []
    for nid in g.topo_order:
        node = g.nodes[nid]
        spec = OPS[node.kind]
        if len(node.inputs) != spec.arity:
            diags.append(f"{nid}: {node.kind.value} expects {spec.arity} inputs, got {len(node.inputs)}")
        for a, required in spec.attrs.items():
            if required and a not in node.attrs:
                diags.append(f"{nid}: missing attribute {a!r}")
        if node.kind is OpKind.Placeholder and "dtype" in node.attrs:
            try:
                DType(node.attrs["dtype"])
            except ValueError:
                diags.append(f"{nid}: unknown dtype {node.attrs['dtype']!r}")
    for o in g.outputs:
        if o not in g.nodes:
            diags.append(f"output {o!r} does not exist")
    for c in g.constants:
        if c not in g.nodes or g.nodes[c].kind is not OpKind.Const:
            diags.append(f"{c}: constant value without a Const node")
    if diags:
        return diags
    try:
        _infer(g)
    except GraphError as e:
        diags.append(str(e))
    return diags


def check(g: Graph) -> Graph:
    diags = validate(g)
    if diags:
        raise GraphError("; ".join(diags))
    return g


# ----------------------------------------------------------------- execution


class TraceEntry(NamedTuple):
    node: str
    kind: OpKind
    instance: int
    shape: tuple
    injectable: bool


@dataclass
class ExecutionTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    # every node's output, populated only when execute(keep_values=True)
    values: Optional[dict[str, Tensor]] = None

    def __len__(self):
        return len(self.entries)


# (node, instance index among injectable nodes of its kind, output) -> replacement or None
Interceptor = Callable[[Node, int, Tensor], Optional[Tensor]]


def execute(g: Graph, feeds: Mapping[str, Tensor], interceptor: Interceptor | None = None,
            keep_values: bool = False) -> tuple[list[Tensor], ExecutionTrace]:
    """Evaluate ``g`` in topological order.

    Instance indices count dynamic invocations per op kind, separately for
    injectable and non-injectable nodes, each from 0.
    """
    env: dict[str, Tensor] = {}
    trace = ExecutionTrace()
    counters: dict[tuple[OpKind, bool], int] = {}
    nodes = g.nodes
    with np.errstate(all="ignore"):
        for nid in g.topo_order:
            node = nodes[nid]
            kind = node.kind
            if kind is OpKind.Const:
                out = g.constants[nid]
            elif kind is OpKind.Placeholder:
                out = _take_feed(node, feeds)
            else:
                arr = OPS[kind].compute([env[i].array for i in node.inputs], node.attrs)
                out = Tensor.wrap(np.asarray(arr))
            key = (kind, node.injectable)
            inst = counters.get(key, 0)
            counters[key] = inst + 1
            if interceptor is not None and node.injectable:
                rep = interceptor(node, inst, out)
                if rep is not None:
                    if rep.dtype is not out.dtype or rep.shape != out.shape:
                        raise ContractViolation(
                            f"{nid}: interceptor returned {rep.dtype.name}{list(rep.shape)}, "
                            f"expected {out.dtype.name}{list(out.shape)}")
                    out = rep
            env[nid] = out
            trace.entries.append(TraceEntry(nid, kind, inst, out.shape, node.injectable))
    if keep_values:
        trace.values = env
    return [env[o] for o in g.outputs], trace


def _take_feed(node: Node, feeds: Mapping[str, Tensor]) -> Tensor:
    if node.id not in feeds:
        raise KeyError(f"missing feed for placeholder {node.id!r}")
    t = feeds[node.id]
    if not isinstance(t, Tensor):
        t = Tensor(t, DType(node.attrs.get("dtype", "f32")))
    shape, dt = _placeholder_sig(node)
    if t.shape != shape or t.dtype is not dt:
        raise ValueError(f"feed for {node.id!r} is {t.dtype.name}{list(t.shape)}, "
                         f"expected {dt.name}{list(shape)}")
    return t


def count_instances(trace: ExecutionTrace) -> dict[OpKind, int]:
    """Dynamic invocation counts per op kind, injectable nodes only."""
    c = Counter(e.kind for e in trace.entries if e.injectable)
    return dict(c)
