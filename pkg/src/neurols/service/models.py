"""Request/response models for the workbench service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class GenerateRequest(BaseModel):
    kind: Literal["nk", "qubo"]
    n: int = Field(gt=0)
    count: int = Field(gt=0)
    seed: int = 0
    out_dir: str
    role: str = "test"
    restarts: int = Field(default=1, gt=0)
    # nk parameters
    k: Optional[int] = None
    # qubo parameters
    m_frac: Optional[float] = None
    m: Optional[int] = None
    family: Optional[Literal["uni", "imp", "ic"]] = None
    d: Optional[float] = None
    alpha: Optional[float] = None
    important_frac: float = 0.2


class GenerateResponse(BaseModel):
    manifest_path: str
    count: int
    manifest_hash: str


class TrainRequest(BaseModel):
    n: int = Field(gt=0)
    k: int = Field(ge=0)
    observation_kind: Literal["o1", "o2", "o3", "o4"] = "o4"
    q: int = Field(default=10, gt=0)
    r: int = Field(default=10, gt=0)
    generations: int = Field(default=100, gt=0)
    runs: int = Field(default=10, gt=0)
    horizon: Optional[int] = None
    sigma_init: float = 0.2
    pop_size: Optional[int] = None
    hidden: list[int] = [10, 5]
    val_instances: int = 10
    val_restarts: int = 10
    master_seed: int = 0
    workers: int = 1
    final_generation_only: bool = False
    out_dir: str


class JobCreated(BaseModel):
    job_id: str


class TrainResult(BaseModel):
    champion_path: str
    report_csv_path: str
    checkpoint_path: str
    champion_valid_score: float
    champion_run: int
    champion_generation: int
    bhc_valid_reference: float
    manifest_hash: str


class JobStatus(BaseModel):
    job_id: str
    state: Literal["pending", "running", "done", "failed"]
    log_lines: list[str]
    log_cursor: int
    error: Optional[str] = None
    result: Optional[TrainResult] = None


class EvaluateRequest(BaseModel):
    manifest_path: str
    policy_paths: list[str] = []
    baselines: list[Literal["bhc", "fhc", "es"]] = ["bhc", "fhc", "es"]
    es_lambda: Optional[int] = None
    horizon: Optional[int] = None  # defaults to 2n
    master_seed: Optional[int] = None  # defaults to the manifest's seed
    out_dir: str


class StrategyComparison(BaseModel):
    baseline: str
    t: float
    df: float
    p: float


class StrategySummary(BaseModel):
    name: str
    mean: float
    is_baseline: bool
    is_best: bool
    significant: bool
    comparisons: list[StrategyComparison] = []


class EvaluateResponse(BaseModel):
    report_csv_path: str
    scores_csv_path: str
    table: str
    strategies: list[StrategySummary]
    manifest_hash: str


class AnalyzeRequest(BaseModel):
    policy_path: str
    manifest_path: str
    trajectories: int = Field(default=10, gt=0)
    horizon: Optional[int] = None
    out_dir: str


class AnalyzeResponse(BaseModel):
    trace_csv_paths: list[str]
    response_csv_path: str
    points: int
    manifest_hash: str


class CalibrateRequest(BaseModel):
    n: int = Field(gt=0)
    k: int = Field(ge=0)
    grid: Optional[list[int]] = None
    q: int = 10
    r: int = 10
    horizon: Optional[int] = None
    master_seed: int = 0


class CalibrateResponse(BaseModel):
    best_lambda: int
    scores: dict[int, float]
