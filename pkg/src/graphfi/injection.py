"""Fault planning and operator-output corruption.

A run is instrumented by attaching an interceptor to the interpreter. With
injection disabled the interceptor answers "no replacement" for every node,
so outputs are bit-identical to the golden run; the only cost is the check.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from . import tensor as T
from .config import FaultType, FIConfig, InjectMode, effective_probability
from .graph import ExecutionTrace, Graph, Node, OpKind, count_instances, execute
from .tensor import Tensor

log = logging.getLogger(__name__)


class InjectionError(RuntimeError):
    """A fault could not be applied (e.g. random values requested for an integer output)."""


class PlanError(ValueError):
    pass


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Independent stream for one run, derived from (root seed, run index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run_index,))))


# ----------------------------------------------------------------- profiling


@dataclass(frozen=True)
class InstanceProfile:
    counts: Mapping[OpKind, int]  # in first-execution order

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def profile(g: Graph, feeds: Mapping[str, Tensor]) -> InstanceProfile:
    _, trace = execute(g, feeds)
    return InstanceProfile(count_instances(trace))


# ------------------------------------------------------------------ planning


@dataclass(frozen=True)
class InjectionPlan:
    mode: InjectMode
    probabilities: Mapping[OpKind, float] = field(default_factory=dict)  # ErrorRate
    chosen: Mapping[OpKind, int] = field(default_factory=dict)  # DynamicInstance
    target: Optional[tuple[OpKind, int]] = None  # OneFaultPerRun


def plan(cfg: FIConfig, prof: InstanceProfile, rng: np.random.Generator) -> InjectionPlan:
    if cfg.mode is InjectMode.ErrorRate:
        return InjectionPlan(cfg.mode, probabilities={k: effective_probability(cfg, k) for k in prof.counts})
    kinds = [(k, n) for k, n in prof.counts.items() if n > 0 and cfg.selects(k)]
    if not kinds:
        raise PlanError(f"{cfg.mode.value} needs at least one injectable operator instance")
    if cfg.mode is InjectMode.DynamicInstance:
        return InjectionPlan(cfg.mode, chosen={k: int(rng.integers(n)) for k, n in kinds})
    j = int(rng.integers(sum(n for _, n in kinds)))
    for k, n in kinds:
        if j < n:
            return InjectionPlan(cfg.mode, target=(k, j))
        j -= n
    raise AssertionError("unreachable")


@dataclass
class InjectionState:
    rng: np.random.Generator
    invocations: dict[str, int] = field(default_factory=dict)
    faults_applied: int = 0


def should_inject(state: InjectionState, p: InjectionPlan, cfg: FIConfig, node: Node,
                  instance: int, rng: np.random.Generator | None = None) -> bool:
    rng = rng or state.rng
    seen = state.invocations.get(node.id, 0)
    state.invocations[node.id] = seen + 1
    if seen < cfg.skip_count or not cfg.selects(node.kind):
        return False
    if p.mode is InjectMode.ErrorRate:
        prob = p.probabilities.get(node.kind, 0.0)
        if prob <= 0.0:
            return False
        return prob >= 1.0 or rng.random() < prob
    if p.mode is InjectMode.DynamicInstance:
        return p.chosen.get(node.kind) == instance
    return state.faults_applied == 0 and p.target == (node.kind, instance)


# -------------------------------------------------------------- corruption


@dataclass(frozen=True)
class FaultRecord:
    node: str
    kind: str
    instance: int
    fault_type: str
    element: Optional[int] = None
    bits: Optional[list[int]] = None
    original: list = field(default_factory=list)
    corrupted: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "FaultRecord":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def apply_fault(t: Tensor, cfg: FIConfig, rng: np.random.Generator) -> tuple[Tensor, Optional[FaultRecord]]:
    """Corrupt ``t`` with the fault type configured for its rank.

    The returned record has no node information; the caller fills it in.
    FaultType None (and empty tensors) leave ``t`` untouched with no record.
    """
    ft = cfg.fault_type_for(t.rank)
    if ft is FaultType.None_ or t.size == 0:
        return t, None
    try:
        if ft is FaultType.Zero:
            out = T.zero_like(t)
            return out, FaultRecord("", "", -1, ft.value, original=t.tolist_flat(), corrupted=out.tolist_flat())
        if ft is FaultType.Rand:
            out = T.rand_like(t, rng)
            return out, FaultRecord("", "", -1, ft.value, original=t.tolist_flat(), corrupted=out.tolist_flat())
        if ft is FaultType.BitFlipTensor:
            out, bits = T.bit_flip_all(t, rng)
            return out, FaultRecord("", "", -1, ft.value, bits=bits,
                                    original=t.tolist_flat(), corrupted=out.tolist_flat())
        elem = int(rng.integers(t.size))
        if ft is FaultType.RandElement:
            out = T.rand_element(t, elem, rng)
            return out, FaultRecord("", "", -1, ft.value, element=elem,
                                    original=[t.item(elem)], corrupted=[out.item(elem)])
        bit = int(rng.integers(t.dtype.bits))
        out = T.bit_flip_element(t, elem, bit)
        return out, FaultRecord("", "", -1, ft.value, element=elem, bits=[bit],
                                original=[t.item(elem)], corrupted=[out.item(elem)])
    except TypeError as e:
        raise InjectionError(str(e)) from e


def replay_fault(t: Tensor, rec: FaultRecord) -> Tensor:
    """Re-apply a recorded corruption to ``t`` bit-exactly."""
    ft = FaultType.parse(rec.fault_type)
    if ft is FaultType.Zero:
        return T.zero_like(t)
    if ft is FaultType.Rand:
        return Tensor(rec.corrupted, t.dtype, t.shape)
    if ft is FaultType.RandElement:
        flat = t.flat().copy()
        flat[rec.element] = rec.corrupted[0]
        return Tensor.wrap(flat.reshape(t.shape))
    if ft is FaultType.BitFlipElement:
        return T.bit_flip_element(t, rec.element, rec.bits[0])
    if ft is FaultType.BitFlipTensor:
        return T.bit_flip_all(t, rec.bits)[0]
    return t


# --------------------------------------------------------------- execution


class Injector:
    """Instrumentation for one graph and config.

    Instance profiles are computed once per feed signature and reused; the
    graph, config and cached profiles are shared read-only, while all
    per-run state lives in the ``run`` call.
    """

    def __init__(self, g: Graph, cfg: FIConfig):
        self.graph = g
        self.cfg = cfg
        self._profiles: dict[tuple, InstanceProfile] = {}

    def profile(self, feeds: Mapping[str, Tensor]) -> InstanceProfile:
        key = tuple(sorted((k, v.shape, v.dtype.value) for k, v in feeds.items()))
        prof = self._profiles.get(key)
        if prof is None:
            prof = self._profiles.setdefault(key, profile(self.graph, feeds))
        return prof

    def run(self, feeds: Mapping[str, Tensor], rng: np.random.Generator | None, enabled: bool = True,
            keep_values: bool = False) -> tuple[list[Tensor], list[FaultRecord], ExecutionTrace]:
        cfg = self.cfg
        records: list[FaultRecord] = []
        if not enabled or not cfg.injects:
            outs, trace = execute(self.graph, feeds, _disabled, keep_values=keep_values)
            return outs, records, trace

        p = plan(cfg, self.profile(feeds), rng)
        state = InjectionState(rng)

        def intercept(node: Node, instance: int, out: Tensor):
            if not should_inject(state, p, cfg, node, instance):
                return None
            new, rec = apply_fault(out, cfg, rng)
            if rec is None:
                return None
            state.faults_applied += 1
            records.append(replace(rec, node=node.id, kind=node.kind.value, instance=instance))
            return new

        outs, trace = execute(self.graph, feeds, intercept, keep_values=keep_values)
        return outs, records, trace


def _disabled(node, instance, out):
    return None


def instrumented_execute(g: Graph, feeds: Mapping[str, Tensor], cfg: FIConfig, rng: np.random.Generator,
                         enabled: bool = True, injector: Injector | None = None):
    """Run ``g`` with fault injection; returns (outputs, records, trace)."""
    injector = injector or Injector(g, cfg)
    return injector.run(feeds, rng, enabled=enabled)


def replay_execute(g: Graph, feeds: Mapping[str, Tensor], records: list[FaultRecord],
                   keep_values: bool = False):
    """Force exactly the corruptions in ``records`` (the plan is the log)."""
    by_site = {(r.node, r.instance): r for r in records}

    def intercept(node: Node, instance: int, out: Tensor):
        rec = by_site.get((node.id, instance))
        return None if rec is None else replay_fault(out, rec)

    return execute(g, feeds, intercept, keep_values=keep_values)
