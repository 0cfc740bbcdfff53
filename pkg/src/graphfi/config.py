"""Campaign configuration: YAML documents with the keys

Seed, ScalarFaultType, TensorFaultType, InjectMode, Ops, SkipCount.

``Ops`` entries are ``"<Kind|ALL> = <probability>"`` strings (or one-key
mappings). A bare selector means probability 1.0.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .ops import OpKind

log = logging.getLogger(__name__)

ALL = "ALL"
KEYS = ("Seed", "ScalarFaultType", "TensorFaultType", "InjectMode", "Ops", "SkipCount")


def _norm(s: str) -> str:
    return re.sub(r"[\s_\-]", "", str(s)).lower()


class FaultType(enum.Enum):
    None_ = "None"
    Zero = "Zero"
    Rand = "Rand"
    RandElement = "Rand-element"
    BitFlipElement = "bitFlip-element"
    BitFlipTensor = "bitFlip-tensor"

    @classmethod
    def parse(cls, s) -> "FaultType":
        if s is None:
            return cls.None_
        key = _norm(s)
        for ft in cls:
            if _norm(ft.value) == key:
                return ft
        raise ValueError(f"unknown fault type {s!r}; allowed: {[f.value for f in cls]}")

    @property
    def elementwise(self) -> bool:
        return self in (FaultType.RandElement, FaultType.BitFlipElement)


class InjectMode(enum.Enum):
    ErrorRate = "errorRate"
    DynamicInstance = "dynamicInstance"
    OneFaultPerRun = "oneFaultPerRun"

    @classmethod
    def parse(cls, s) -> "InjectMode":
        key = _norm(s)
        for m in cls:
            if _norm(m.value) == key:
                return m
        raise ValueError(f"unknown inject mode {s!r}; allowed: {[m.value for m in cls]}")


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FIConfig:
    mode: InjectMode
    scalar_fault_type: FaultType = FaultType.None_
    tensor_fault_type: FaultType = FaultType.None_
    ops: tuple[tuple[str, float], ...] = ()  # (OpKind value or "ALL", probability)
    skip_count: int = 0
    seed: Optional[int] = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def fault_type_for(self, rank: int) -> FaultType:
        """Rank-0 outputs take the scalar fault type, everything else the tensor one."""
        return self.scalar_fault_type if rank == 0 else self.tensor_fault_type

    @property
    def injects(self) -> bool:
        return FaultType.None_ is not self.scalar_fault_type or FaultType.None_ is not self.tensor_fault_type

    def selects(self, kind: OpKind) -> bool:
        """Whether ``kind`` is eligible; an empty Ops list selects every kind."""
        if not self.ops:
            return True
        return any(sel in (ALL, kind.value) for sel, _ in self.ops)

    def with_(self, **kw) -> "FIConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return FIConfig(**d)


_OP_ENTRY = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*(?:=\s*(\S+))?\s*$")


def _parse_ops(raw, diags: list[str]) -> tuple[tuple[str, float], ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        diags.append("Ops must be a list")
        return ()
    out: list[tuple[str, float]] = []
    for item in raw:
        if isinstance(item, dict) and len(item) == 1:
            (name, prob), = item.items()
        elif isinstance(item, str) and (m := _OP_ENTRY.match(item)):
            name, prob = m.group(1), m.group(2)
        else:
            diags.append(f"Ops entry {item!r} is not of the form 'Kind = probability'")
            continue
        if str(name).upper() == ALL:
            sel = ALL
        else:
            try:
                sel = OpKind.parse(str(name)).value
            except ValueError as e:
                diags.append(f"Ops entry {item!r}: {e}")
                continue
        try:
            p = 1.0 if prob is None else float(prob)
        except (TypeError, ValueError):
            diags.append(f"Ops entry {item!r}: probability {prob!r} is not a number")
            continue
        if not 0.0 <= p <= 1.0:
            diags.append(f"Ops entry {item!r}: probability {p} outside [0, 1]")
            continue
        if any(s == sel for s, _ in out):
            diags.append(f"duplicate Ops selector {sel}")
            continue
        out.append((sel, p))
    sels = [s for s, _ in out]
    if ALL in sels and len(sels) > 1:
        diags.append("ALL cannot be combined with per-operator Ops entries")
    return tuple(out)


def parse_config(text: str) -> FIConfig:
    """Parse and validate a YAML config. Raises ConfigError listing every problem."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"YAML parse error: {e}"]) from e
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a mapping"])
    diags: list[str] = []
    warnings: list[str] = []
    for k in doc:
        if k not in KEYS:
            diags.append(f"unknown key {k!r}")

    mode = None
    if doc.get("InjectMode") is None:
        diags.append("InjectMode missing")
    else:
        try:
            mode = InjectMode.parse(doc["InjectMode"])
        except ValueError as e:
            diags.append(str(e))

    fts = {}
    for key in ("ScalarFaultType", "TensorFaultType"):
        try:
            fts[key] = FaultType.parse(doc.get(key))
        except ValueError as e:
            diags.append(f"{key}: {e}")

    ops = _parse_ops(doc.get("Ops"), diags)

    skip = doc.get("SkipCount", 0)
    if skip is None:
        skip = 0
    if isinstance(skip, bool) or not isinstance(skip, int) or skip < 0:
        diags.append(f"SkipCount must be a non-negative integer, got {skip!r}")

    seed = doc.get("Seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        diags.append(f"Seed must be a non-negative integer, got {seed!r}")

    if diags:
        raise ConfigError(diags)

    if mode is not InjectMode.ErrorRate and any(p != 1.0 for _, p in ops):
        warnings.append(f"Ops probabilities are ignored in {mode.value} mode")
    for w in warnings:
        log.warning(w)
    return FIConfig(mode=mode, scalar_fault_type=fts["ScalarFaultType"],
                    tensor_fault_type=fts["TensorFaultType"], ops=ops, skip_count=skip,
                    seed=seed, warnings=tuple(warnings))


def load_config(path) -> FIConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt_prob(p: float) -> str:
    return repr(float(p))


def dump_config(cfg: FIConfig) -> str:
    doc: dict = {}
    if cfg.seed is not None:
        doc["Seed"] = cfg.seed
    doc["ScalarFaultType"] = cfg.scalar_fault_type.value
    doc["TensorFaultType"] = cfg.tensor_fault_type.value
    doc["InjectMode"] = cfg.mode.value
    if cfg.ops:
        doc["Ops"] = [f"{s} = {_fmt_prob(p)}" for s, p in cfg.ops]
    doc["SkipCount"] = cfg.skip_count
    return yaml.safe_dump(doc, sort_keys=False)


def effective_probability(cfg: FIConfig, kind: OpKind) -> float:
    if cfg.mode is not InjectMode.ErrorRate:
        raise ValueError(f"injection probabilities only apply in errorRate mode, not {cfg.mode.value}")
    table = dict(cfg.ops)
    if kind.value in table:
        return table[kind.value]
    return table.get(ALL, 0.0)


def resolve_seed(cfg: FIConfig, override: int | None = None) -> int:
    """The root seed for a campaign: ``override``, else Seed, else fresh entropy (logged)."""
    if override is not None:
        return int(override)
    if cfg.seed is not None:
        return cfg.seed
    seed = int(np.random.SeedSequence().entropy % (2**63))
    log.info("no Seed configured; using entropy seed %d", seed)
    return seed
