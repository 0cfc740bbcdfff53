"""The library workflows behind each CLI command and HTTP endpoint."""

from __future__ import annotations

from pathlib import Path

import yaml

from . import schemas as S
from .bench import bench
from .campaign import SDCCriterion, labels, run_campaign_on
from .config import ConfigError, dump_config, load_config, parse_config
from .graph import count_instances, execute, infer_shapes
from .modelio import load_bundle, load_model


def _jsonable(t):
    return t.tolist()


def _labels(t) -> list[int]:
    if t.dtype.is_float and (t.rank == 0 or t.shape[-1] == 1):
        return []  # a regression output has no label
    return [int(v) for v in labels(t)]


def golden(req: S.GoldenRequest) -> S.GoldenResponse:
    g = load_model(req.graph, req.weights)
    results = []
    for path in req.inputs:
        outs, trace = execute(g, load_bundle(path))
        results.append(S.GoldenOutput(
            input=str(path), outputs=[_jsonable(o) for o in outs], labels=_labels(outs[0]),
            trace=S.TraceSummary(executed_nodes=len(trace),
                                 injectable_instances={k.value: v for k, v in count_instances(trace).items()})))
    return S.GoldenResponse(results=results)


def inspect(req: S.InspectRequest) -> S.InspectResponse:
    g = load_model(req.graph, req.weights)
    feeds = load_bundle(req.input) if req.input else None
    shapes = infer_shapes(g, {k: v.shape for k, v in feeds.items()} if feeds else None)
    if feeds is not None:
        prof = count_instances(execute(g, feeds)[1])
    else:
        prof = {}
        for nid in g.topo_order:
            n = g.nodes[nid]
            if n.injectable:
                prof[n.kind] = prof.get(n.kind, 0) + 1
    nodes = [S.NodeInfo(id=n.id, op=n.kind.value, inputs=list(n.inputs), injectable=n.injectable,
                        shape=list(shapes[n.id])) for n in (g.nodes[i] for i in g.topo_order)]
    return S.InspectResponse(name=g.name, nodes=nodes, outputs=list(g.outputs), placeholders=list(g.placeholders),
                             profile={k.value: v for k, v in prof.items()}, total_instances=sum(prof.values()))


def validate_config(req: S.ConfigRequest) -> S.ConfigResponse:
    try:
        cfg = parse_config(req.text)
    except ConfigError as e:
        return S.ConfigResponse(valid=False, diagnostics=e.diagnostics)
    return S.ConfigResponse(valid=True, warnings=list(cfg.warnings), config=yaml.safe_load(dump_config(cfg)))


def campaign(req: S.CampaignRequest):
    """Run a campaign; returns (response, full CampaignResult)."""
    cfg = load_config(req.config) if req.config else parse_config(req.config_text)
    crit = SDCCriterion.regression(req.threshold) if req.criterion == "regression" else SDCCriterion()
    g = load_model(req.graph, req.weights)
    inputs = [load_bundle(p) for p in req.inputs]
    res = run_campaign_on(g, cfg, inputs, req.n, req.workers, crit, req.seed,
                          Path(req.log) if req.log else None)
    return S.CampaignResponse(stats=S.CampaignStats(**res.summary()), csv=res.csv()), res


def run_bench(req: S.BenchRequest) -> S.BenchResponse:
    g = load_model(req.graph, req.weights)
    r = bench(g, load_bundle(req.input), predictions=req.predictions, repeats=req.repeats, seed=req.seed)
    return S.BenchResponse(**r.to_dict(), table=r.table())
