"""HTTP front end: long campaigns run as background jobs, everything else is synchronous.

Run with ``graphfi serve`` or ``uvicorn graphfi.service:app``.
"""

from __future__ import annotations

import logging
import threading
import uuid

from fastapi import BackgroundTasks, FastAPI, HTTPException

from . import __version__, workflows
from . import schemas as S
from .config import ConfigError
from .graph import GraphError
from .modelio import ModelFormatError

log = logging.getLogger(__name__)

app = FastAPI(title="graphfi", version=__version__)

_jobs: dict[str, S.JobStatus] = {}
_jobs_lock = threading.Lock()


def _call(fn, req):
    try:
        return fn(req)
    except FileNotFoundError as e:
        raise HTTPException(404, f"not found: {e.filename}") from e
    except (ConfigError, GraphError, ModelFormatError, KeyError, ValueError) as e:
        raise HTTPException(422, str(e)) from e


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/golden", response_model=S.GoldenResponse)
def golden(req: S.GoldenRequest):
    return _call(workflows.golden, req)


@app.post("/inspect", response_model=S.InspectResponse)
def inspect(req: S.InspectRequest):
    return _call(workflows.inspect, req)


@app.post("/config/validate", response_model=S.ConfigResponse)
def validate_config(req: S.ConfigRequest):
    return workflows.validate_config(req)


@app.post("/bench", response_model=S.BenchResponse)
def bench(req: S.BenchRequest):
    return _call(workflows.run_bench, req)


@app.post("/campaigns/run", response_model=S.CampaignResponse)
def run_campaign(req: S.CampaignRequest):
    """Run a campaign and wait for the result."""
    return _call(lambda r: workflows.campaign(r)[0], req)


def _set(job_id: str, **kw):
    with _jobs_lock:
        _jobs[job_id] = _jobs[job_id].model_copy(update=kw)


def _run_job(job_id: str, req: S.CampaignRequest):
    _set(job_id, state="running")
    try:
        resp, _ = workflows.campaign(req)
    except Exception as e:  # noqa: BLE001 - reported through the job status
        log.exception("campaign %s failed", job_id)
        _set(job_id, state="failed", error=f"{type(e).__name__}: {e}")
    else:
        _set(job_id, state="done", result=resp)


@app.post("/campaigns", response_model=S.JobStatus, status_code=202)
def submit_campaign(req: S.CampaignRequest, background: BackgroundTasks):
    job = S.JobStatus(id=uuid.uuid4().hex, state="queued")
    with _jobs_lock:
        _jobs[job.id] = job
    background.add_task(_run_job, job.id, req)
    return job


@app.get("/campaigns/{job_id}", response_model=S.JobStatus)
def campaign_status(job_id: str):
    with _jobs_lock:
        job = _jobs.get(job_id)
    if job is None:
        raise HTTPException(404, f"no campaign {job_id}")
    return job
