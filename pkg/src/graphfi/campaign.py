"""Golden runs, injection campaigns and SDC statistics."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import ALL, FIConfig, InjectMode, load_config, resolve_seed
from .graph import ContractViolation, Graph, execute
from .injection import FaultRecord, Injector, run_rng
from .modelio import load_bundle, load_model
from .tensor import Tensor

log = logging.getLogger(__name__)

Z95 = 1.96
BENIGN, SDC, CRASH = "Benign", "SDC", "Crash"


# ---------------------------------------------------------------- criteria


@dataclass(frozen=True)
class SDCCriterion:
    """``ClassMismatch`` when ``threshold`` is None, else regression deviation > threshold."""

    threshold: Optional[float] = None

    def __post_init__(self):
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError(f"regression threshold must be > 0, got {self.threshold}")

    @classmethod
    def class_mismatch(cls) -> "SDCCriterion":
        return cls(None)

    @classmethod
    def regression(cls, delta: float) -> "SDCCriterion":
        return cls(float(delta))

    @property
    def name(self) -> str:
        return "class" if self.threshold is None else f"regression>{self.threshold:g}"


def labels(t: Tensor) -> tuple:
    """Predicted labels: integer/boolean outputs as-is, float outputs by argmax over the last axis."""
    if t.dtype.is_float:
        return tuple(np.argmax(t.array, axis=-1).reshape(-1).tolist()) if t.rank else (0,)
    return tuple(t.flat().tolist())


def summarize(t: Tensor, criterion: SDCCriterion):
    if criterion.threshold is None:
        return list(labels(t))
    with np.errstate(invalid="ignore"):  # signalling NaNs from bit flips
        vals = t.flat().astype(np.float64).tolist()
    return vals[0] if len(vals) == 1 else vals


def classify(golden: Sequence[Tensor], faulty: Sequence[Tensor], criterion: SDCCriterion) -> str:
    """Compare the first output of a faulty run against its golden run."""
    g, f = golden[0], faulty[0]
    if g.shape != f.shape or g.dtype is not f.dtype:
        raise ContractViolation(f"golden {g.dtype.name}{list(g.shape)} vs faulty {f.dtype.name}{list(f.shape)}")
    if g.bit_equal(f):
        return BENIGN
    if criterion.threshold is None:
        return SDC if labels(g) != labels(f) else BENIGN
    with np.errstate(invalid="ignore"):
        dev = np.abs(f.array.astype(np.float64) - g.array.astype(np.float64))
    # a NaN/Inf output is never within tolerance
    if not np.all(np.isfinite(dev)):
        return SDC
    return SDC if float(dev.max(initial=0.0)) > criterion.threshold else BENIGN


# --------------------------------------------------------------- statistics


def ci95_half_width(successes: int, n: int) -> float:
    """Wald 95% half-width, clamped so p-hat +/- hw stays inside [0, 1]."""
    if n <= 0:
        return 0.0
    p = successes / n
    hw = Z95 * math.sqrt(p * (1.0 - p) / n)
    return min(hw, p, 1.0 - p)


@dataclass(frozen=True)
class FIStat:
    total: int = 0  # runs that produced an output (benign + SDC)
    sdc: int = 0
    crashes: int = 0

    @property
    def sdc_rate(self) -> float:
        return self.sdc / self.total if self.total else 0.0

    @property
    def ci95_half_width(self) -> float:
        return ci95_half_width(self.sdc, self.total)

    @property
    def runs(self) -> int:
        return self.total + self.crashes

    def interval(self) -> tuple[float, float]:
        return self.sdc_rate - self.ci95_half_width, self.sdc_rate + self.ci95_half_width

    def to_dict(self) -> dict:
        d = {"runs": self.runs, "total": self.total, "sdc": self.sdc, "crashes": self.crashes,
             "sdc_rate": self.sdc_rate, "ci95_half_width": self.ci95_half_width}
        if self.total and self.sdc in (0, self.total):
            d["note"] = "p-hat at boundary; normal-approximation interval has zero width"
        return d

    @classmethod
    def from_outcomes(cls, outcomes) -> "FIStat":
        sdc = sum(o.outcome == SDC for o in outcomes)
        crash = sum(o.outcome == CRASH for o in outcomes)
        return cls(total=len(outcomes) - crash, sdc=sdc, crashes=crash)


def collate(stats: Sequence[FIStat]) -> FIStat:
    return FIStat(total=sum(s.total for s in stats), sdc=sum(s.sdc for s in stats),
                  crashes=sum(s.crashes for s in stats))


# ------------------------------------------------------------------- runs


class GoldenCache:
    """Per-input golden outputs, computed on first use."""

    def __init__(self, g: Graph):
        self.graph = g
        self.executions = 0
        self._cache: dict[int, list[Tensor]] = {}
        self._lock = threading.Lock()

    def get(self, index: int, feeds: Mapping[str, Tensor]) -> list[Tensor]:
        with self._lock:
            hit = self._cache.get(index)
            if hit is None:
                hit, _ = execute(self.graph, feeds)
                self.executions += 1
                self._cache[index] = hit
            return hit


def golden_run(g: Graph, feeds: Mapping[str, Tensor]) -> list[Tensor]:
    return execute(g, feeds)[0]


@dataclass
class RunOutcome:
    run: int
    input: int
    outcome: str
    records: list[FaultRecord] = field(default_factory=list)
    output: object = None
    error: Optional[str] = None
    wall_time: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        d = {"run": self.run, "input": self.input, "outcome": self.outcome,
             "records": [r.to_dict() for r in self.records], "output": self.output}
        if self.error is not None:
            d["error"] = self.error
        if timing:
            d["wall_time"] = self.wall_time
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True)


@dataclass
class CampaignResult:
    stat: FIStat
    outcomes: list[RunOutcome]
    seed: int
    cfg: FIConfig
    criterion: SDCCriterion
    per_input: list[FIStat]

    def summary(self) -> dict:
        return {"seed": self.seed, "mode": self.cfg.mode.value, "fault_type": fault_label(self.cfg),
                "error_rate": error_rate_label(self.cfg), "criterion": self.criterion.name,
                "inputs": len(self.per_input), **self.stat.to_dict()}

    def csv(self) -> str:
        return stats_csv([(self.cfg, self.stat)])


def fault_label(cfg: FIConfig) -> str:
    s, t = cfg.scalar_fault_type.value, cfg.tensor_fault_type.value
    return t if s == t else f"{s}/{t}"


def error_rate_label(cfg: FIConfig) -> str:
    if cfg.mode is not InjectMode.ErrorRate:
        return ""
    if len(cfg.ops) == 1 and cfg.ops[0][0] == ALL:
        return f"{cfg.ops[0][1]:g}"
    return ";".join(f"{s}={p:g}" for s, p in cfg.ops)


CSV_COLUMNS = ("mode", "fault_type", "error_rate", "n", "sdc_rate", "ci95")


def stats_csv(rows: Sequence[tuple[FIConfig, FIStat]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for cfg, st in rows:
        w.writerow([cfg.mode.value, fault_label(cfg), error_rate_label(cfg), st.total,
                    f"{st.sdc_rate:.6f}", f"{st.ci95_half_width:.6f}"])
    return buf.getvalue()


def run_campaign_on(g: Graph, cfg: FIConfig, inputs: Sequence[Mapping[str, Tensor]],
                    injections_per_input: int, workers: int = 1,
                    criterion: SDCCriterion = SDCCriterion(), seed: int | None = None,
                    log_path=None, log_timing: bool = False) -> CampaignResult:
    """Run ``injections_per_input`` injected runs for every input.

    Run ``k`` of input ``i`` has global index ``i * injections_per_input + k``
    and draws all randomness from ``run_rng(seed, index)``, so the result
    does not depend on ``workers`` or scheduling.
    """
    if injections_per_input < 1:
        raise ValueError("injections must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    seed = resolve_seed(cfg, seed)
    injector = Injector(g, cfg)
    goldens = GoldenCache(g)
    for i, feeds in enumerate(inputs):
        goldens.get(i, feeds)  # a failing golden run aborts before any injection
        injector.profile(feeds)

    def work(item: tuple[int, int]) -> RunOutcome:
        i, k = item
        idx = i * injections_per_input + k
        t0 = time.perf_counter()
        try:
            outs, recs, _ = injector.run(inputs[i], run_rng(seed, idx))
            res = classify(goldens.get(i, inputs[i]), outs, criterion)
            return RunOutcome(idx, i, res, recs, summarize(outs[0], criterion),
                              wall_time=time.perf_counter() - t0)
        except Exception as e:  # noqa: BLE001 - any failure of an injected run is a Crash
            return RunOutcome(idx, i, CRASH, [], None, f"{type(e).__name__}: {e}",
                              wall_time=time.perf_counter() - t0)

    items = [(i, k) for i in range(len(inputs)) for k in range(injections_per_input)]
    if workers == 1:
        outcomes = [work(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, items, chunksize=16))
    outcomes.sort(key=lambda o: o.run)

    if log_path is not None:
        write_run_log(outcomes, log_path, timing=log_timing)
    per_input = [FIStat.from_outcomes([o for o in outcomes if o.input == i]) for i in range(len(inputs))]
    result = CampaignResult(collate(per_input), outcomes, seed, cfg, criterion, per_input)
    log.info("campaign done: %s", result.summary())
    return result


def write_run_log(outcomes: Sequence[RunOutcome], path, timing: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(o.to_json(timing) + "\n")


def read_run_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class CampaignSpec:
    graph_path: Path
    weights_path: Path
    config_path: Path
    inputs: list[Path]
    injections_per_input: int
    workers: int = 1
    criterion: SDCCriterion = field(default_factory=SDCCriterion)
    log_path: Optional[Path] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.injections_per_input < 1:
            raise ValueError("injections must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.inputs:
            raise ValueError("at least one input bundle is required")


def run_campaign(spec: CampaignSpec) -> CampaignResult:
    g = load_model(spec.graph_path, spec.weights_path)
    cfg = load_config(spec.config_path)
    inputs = [load_bundle(p) for p in spec.inputs]
    return run_campaign_on(g, cfg, inputs, spec.injections_per_input, spec.workers,
                           spec.criterion, spec.seed, spec.log_path)
