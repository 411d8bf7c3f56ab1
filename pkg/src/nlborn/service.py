"""HTTP facade over the experiment pipeline.

Assembled grids, operators and factorized linear maps are cached inside the
process (see experiments module), so a long-running service amortizes the
expensive dense Green's matrices and SVDs across forward runs,
reconstructions and rcond/g0 sweeps on the same configuration.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from . import experiments as exp
from .errors import ConfigHashMismatchError, DegenerateRegularizerError

OUTPUT_ROOT_ENV = "NLBORN_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "nlborn_runs"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


class HealthResponse(BaseModel):
    status: str
    version: str
    output_root: str


class GridRequest(BaseModel):
    target_h: float
    name: str = "grid"
    config: exp.ExperimentConfig | None = None


class GridResponse(BaseModel):
    path: str
    n_nodes: int
    grid_hash: str


class PhantomRequest(BaseModel):
    config: exp.ExperimentConfig


class PhantomResponse(BaseModel):
    path: str
    kind: str
    contrast: float | None
    sup_norm: float
    config_hash: str


class ForwardRequest(BaseModel):
    config: exp.ExperimentConfig


class ForwardResponse(BaseModel):
    run_dir: str
    data_path: str
    failures: list[tuple[int, str]]
    bounds: dict
    status: int


class ReconstructRequest(BaseModel):
    config: exp.ExperimentConfig
    data_dir: str


class ReconstructResponse(BaseModel):
    run_dir: str
    orders_computed: int
    correction_norms: list[float]
    projection_distance: float
    diverged_at: int | None
    bounds: dict
    status: int


class BoundsRequest(BaseModel):
    config: exp.ExperimentConfig
    data_dir: str | None = None


class BoundsResponse(BaseModel):
    report: dict
    table: str
    data_check: dict | None
    status: int


class SweepRequest(BaseModel):
    config: exp.ExperimentConfig
    g0_values: list[float]


class SweepResponse(BaseModel):
    rows: list[dict]
    status: int


def create_app() -> FastAPI:
    app = FastAPI(title="nlborn", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__,
                              output_root=str(output_root()))

    @app.post("/grid", response_model=GridResponse)
    def grid(req: GridRequest):
        try:
            path = exp.run_grid_export(req.target_h, output_root(), req.name, req.config)
        except ValueError as err:
            raise HTTPException(status_code=422, detail=str(err))
        doc = exp.read_json(path)
        return GridResponse(path=str(path),
                            n_nodes=len(doc["nodes"]),
                            grid_hash=doc["grid_hash"])

    @app.post("/phantom", response_model=PhantomResponse)
    def phantom(req: PhantomRequest):
        try:
            info = exp.run_phantom_export(req.config, output_root())
        except ValueError as err:
            raise HTTPException(status_code=422, detail=str(err))
        return PhantomResponse(
            path=str(Path(output_root()) / req.config.name / info["file"]),
            kind=info["kind"], contrast=info["contrast"],
            sup_norm=info["sup_norm"], config_hash=info["config_hash"])

    @app.post("/forward", response_model=ForwardResponse)
    def forward(req: ForwardRequest):
        result = exp.run_forward(req.config, output_root())
        return ForwardResponse(
            run_dir=str(result.run_dir), data_path=str(result.data_path),
            failures=list(result.failures), bounds=result.bounds.to_json(),
            status=result.status)

    @app.post("/reconstruct", response_model=ReconstructResponse)
    def reconstruct(req: ReconstructRequest):
        try:
            result = exp.run_reconstruct(req.config, Path(req.data_dir))
        except (ConfigHashMismatchError, FileNotFoundError) as err:
            raise HTTPException(status_code=409, detail=str(err))
        except DegenerateRegularizerError as err:
            raise HTTPException(status_code=422, detail=str(err))
        return ReconstructResponse(
            run_dir=str(result.run_dir),
            orders_computed=result.reconstruction.order,
            correction_norms=result.reconstruction.correction_norms.tolist(),
            projection_distance=result.projection_distance,
            diverged_at=result.reconstruction.diverged_at,
            bounds=result.bounds.to_json(),
            status=result.status)

    @app.post("/bounds", response_model=BoundsResponse)
    def bounds(req: BoundsRequest):
        try:
            report, doc = exp.run_bounds(req.config, output_root(),
                                         Path(req.data_dir) if req.data_dir else None)
        except (ConfigHashMismatchError, FileNotFoundError) as err:
            raise HTTPException(status_code=409, detail=str(err))
        return BoundsResponse(report=report.to_json(), table=report.table(),
                              data_check=doc.get("data_check"), status=0)

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(req: SweepRequest):
        rows = exp.run_sweep(req.config, req.g0_values, output_root())
        return SweepResponse(rows=rows, status=0)

    return app


app = create_app()
