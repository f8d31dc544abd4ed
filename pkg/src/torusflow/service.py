"""HTTP service wrapping the harness.

Sweeps and single-replica runs can take minutes, so they run as background
jobs: POST returns a job id immediately and GET /jobs/{id} reports state
and, when finished, the result payload.  Cheap operations (diagnostics,
config echo, basis info) answer synchronously.  The CLI is a thin client
of these endpoints; it can also mount the app in process, so no separate
server is needed for local work.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import asdict

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, field_validator

from . import __version__
from .harness import (
    CSV_HEADER,
    DiagnosticsReport,
    ExperimentConfig,
    run_diagnostics,
    run_single,
    run_sweep,
    write_diagnostics_output,
    write_sweep_outputs,
)


class ConfigModel(BaseModel):
    """Request-side mirror of ExperimentConfig; all fields optional."""

    n: int = 64
    m: int = 64
    eps_list: list[float] = Field(default=[0.4, 0.3, 0.2, 0.15, 0.1])
    rho: float = 1.75
    dt_max: float = 1e-3
    T: float = 0.5
    k_max: int = 3
    delta: float = 1.0
    amplitude: float = 0.9
    replicas: int = 8
    master_seed: int = 7041
    system: str = "both"
    ic: str = "shear-two-mode"
    matched_seeds: bool = True
    eta0_stationary: bool = True
    n_checkpoints: int = 8
    workers: int = 1
    diag_tolerance_scale: float = 1.0
    diag_samples_scale: float = 1.0
    out_dir: str = "out"

    @field_validator("rho")
    @classmethod
    def _rho_regime(cls, v):
        if not 1.5 < v < 2.0:
            raise ValueError("rho must lie in (1.5, 2)")
        return v

    @field_validator("system")
    @classmethod
    def _system_known(cls, v):
        if v not in ("se", "e", "both"):
            raise ValueError("system must be one of se, e, both")
        return v

    def to_config(self) -> ExperimentConfig:
        d = self.model_dump()
        d["eps_list"] = tuple(d["eps_list"])
        return ExperimentConfig(**d)


class SweepRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    per_replica: bool = False
    write_files: bool = True


class SingleRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    eps: float = 0.2
    replica: int = 0


class DiagnosticsRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    write_files: bool = False


class SweepRow(BaseModel):
    eps: float
    metric: str
    mean: float
    stderr: float
    n_replicas: int


class MonotonicityEntry(BaseModel):
    metric: str
    eps: list[float]
    means: list[float]
    stderrs: list[float]
    inversions: int
    max_violation_stderr: float


class SweepResponse(BaseModel):
    rows: list[SweepRow]
    monotonicity: list[MonotonicityEntry]
    csv_text: str
    replica_csv_text: str | None = None
    files: list[str] = []
    n_failed: int = 0


class DiagnosticLine(BaseModel):
    name: str
    passed: bool
    measured: float
    bound: float


class DiagnosticsResponse(BaseModel):
    all_pass: bool
    entries: list[DiagnosticLine]
    text: str
    files: list[str] = []


class SingleResponse(BaseModel):
    files: list[str]


class JobStatus(BaseModel):
    job_id: str
    kind: str
    state: str  # queued | running | done | failed
    error: str | None = None
    sweep: SweepResponse | None = None
    single: SingleResponse | None = None


class _Job:
    def __init__(self, kind: str):
        self.id = uuid.uuid4().hex[:12]
        self.kind = kind
        self.state = "queued"
        self.error: str | None = None
        self.result = None


class JobStore:
    def __init__(self):
        self._jobs: dict[str, _Job] = {}
        self._lock = threading.Lock()

    def submit(self, kind: str, fn) -> _Job:
        job = _Job(kind)
        with self._lock:
            self._jobs[job.id] = job

        def runner():
            job.state = "running"
            try:
                job.result = fn()
                job.state = "done"
            except Exception as exc:
                job.error = repr(exc)
                job.state = "failed"

        threading.Thread(target=runner, daemon=True).start()
        return job

    def get(self, job_id: str) -> _Job | None:
        with self._lock:
            return self._jobs.get(job_id)


def _sweep_response(cfg: ExperimentConfig, req: SweepRequest) -> SweepResponse:
    result = run_sweep(cfg)
    files = write_sweep_outputs(cfg, result, per_replica=req.per_replica) if req.write_files else []
    rows = [SweepRow(**dict(zip(CSV_HEADER, r))) for r in result.rows]
    mono = [
        MonotonicityEntry(metric=k, **v) for k, v in result.monotonicity.items()
    ]
    return SweepResponse(
        rows=rows,
        monotonicity=mono,
        csv_text=result.to_csv(),
        replica_csv_text=result.replica_csv() if req.per_replica else None,
        files=files,
        n_failed=sum(1 for r in result.records if r.failed),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="torusflow", version=__version__)
    jobs = JobStore()

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/config/validate")
    def validate_config(config: ConfigModel):
        cfg = config.to_config()
        return {"valid": True, "text": cfg.to_text()}

    @app.post("/diagnostics", response_model=DiagnosticsResponse)
    def diagnostics(req: DiagnosticsRequest):
        cfg = req.config.to_config()
        report = run_diagnostics(cfg)
        files = [write_diagnostics_output(cfg, report)] if req.write_files else []
        return DiagnosticsResponse(
            all_pass=report.all_pass,
            entries=[DiagnosticLine(**asdict(e)) for e in report.entries],
            text=report.to_text(),
            files=files,
        )

    @app.post("/sweep", response_model=JobStatus)
    def sweep(req: SweepRequest):
        cfg = req.config.to_config()
        job = jobs.submit("sweep", lambda: _sweep_response(cfg, req))
        return JobStatus(job_id=job.id, kind=job.kind, state=job.state)

    @app.post("/single", response_model=JobStatus)
    def single(req: SingleRequest):
        cfg = req.config.to_config()
        job = jobs.submit(
            "single", lambda: SingleResponse(files=run_single(cfg, req.eps, req.replica))
        )
        return JobStatus(job_id=job.id, kind=job.kind, state=job.state)

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="no such job")
        status = JobStatus(job_id=job.id, kind=job.kind, state=job.state, error=job.error)
        if job.state == "done":
            if job.kind == "sweep":
                status.sweep = job.result
            else:
                status.single = job.result
        return status

    return app


app = create_app()
