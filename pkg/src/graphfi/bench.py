"""Instrumentation and injection overhead, measured over a fixed number of predictions."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping

from .config import FaultType, FIConfig, InjectMode
from .graph import Graph, execute
from .injection import Injector, run_rng
from .tensor import Tensor

PREDICTIONS = 50

# one single-bit flip per run, as in the enabled-injection column
DEFAULT_FI = FIConfig(InjectMode.OneFaultPerRun, FaultType.BitFlipElement, FaultType.BitFlipElement)


@dataclass
class BenchResult:
    baseline: float
    disabled: float
    enabled: float
    predictions: int
    executions: dict

    @property
    def inst_overhead(self) -> float:
        return (self.disabled - self.baseline) / self.baseline

    @property
    def fi_overhead(self) -> float:
        return (self.enabled - self.disabled) / self.disabled

    def to_dict(self) -> dict:
        return {"baseline_s": self.baseline, "disable_fi_s": self.disabled, "enable_fi_s": self.enabled,
                "inst_overhead": self.inst_overhead, "fi_overhead": self.fi_overhead,
                "predictions": self.predictions, "executions": self.executions}

    def table(self) -> str:
        head = f"{'Baseline':>10} {'DisableFI':>10} {'EnableFI':>10} {'Inst.':>8} {'FI':>8}"
        row = (f"{self.baseline:>10.4f} {self.disabled:>10.4f} {self.enabled:>10.4f} "
               f"{self.inst_overhead:>7.2f}x {self.fi_overhead:>7.2f}x")
        return head + "\n" + row


def bench(g: Graph, feeds: Mapping[str, Tensor], cfg: FIConfig = DEFAULT_FI,
          predictions: int = PREDICTIONS, repeats: int = 5, seed: int = 0) -> BenchResult:
    """Time ``predictions`` runs three ways; each column is the best of ``repeats``.

    The baseline is the bare interpreter, "disabled" goes through the
    instrumented path with injection switched off, and "enabled" injects
    per ``cfg``.
    """
    injector = Injector(g, cfg)
    injector.profile(feeds)  # instrumentation happens once, outside the timed loops
    counts = {"baseline": 0, "disabled": 0, "enabled": 0}

    def baseline():
        for _ in range(predictions):
            execute(g, feeds)
            counts["baseline"] += 1

    def disabled():
        for i in range(predictions):
            injector.run(feeds, None, enabled=False)
            counts["disabled"] += 1

    def enabled():
        for i in range(predictions):
            injector.run(feeds, run_rng(seed, i), enabled=True)
            counts["enabled"] += 1

    best = {}
    for _ in range(repeats):
        for name, fn in (("baseline", baseline), ("disabled", disabled), ("enabled", enabled)):
            t0 = time.perf_counter()
            fn()
            dt = time.perf_counter() - t0
            best[name] = min(best.get(name, dt), dt)
    return BenchResult(best["baseline"], best["disabled"], best["enabled"], predictions,
                       {k: v // repeats for k, v in counts.items()})
