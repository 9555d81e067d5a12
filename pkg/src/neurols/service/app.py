"""HTTP service exposing the workbench pipelines.

Artifact-producing endpoints write their outputs under the request's
``out_dir`` (the service and its clients are assumed to share a
filesystem) and stamp every artifact with a hash of the originating
request for provenance.  Training runs as a polled background job; all
other pipelines respond synchronously.
"""

from __future__ import annotations

import hashlib
import json
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query

from ..evaluation import evaluate_testset, export_response, replay_with_diagnostics
from ..instances import (InstanceFormatError, NkInstance, generate_nk_set,
                         generate_puboi_set, load_instance_set, puboi_m,
                         save_instance_set)
from ..policies import BhcPlusPolicy, baseline_policy, load_policy, save_policy
from ..training import TrainConfig, calibrate_lambda, train, validation_reference
from .jobs import JobRegistry
from .models import (AnalyzeRequest, AnalyzeResponse, CalibrateRequest,
                     CalibrateResponse, EvaluateRequest, EvaluateResponse,
                     GenerateRequest, GenerateResponse, JobCreated, JobStatus,
                     StrategyComparison, StrategySummary, TrainRequest,
                     TrainResult)

QUBO_FAMILY_PARAMS = {"uni": (1.0, 1.0), "imp": (10.0, 1.0), "ic": (10.0, 1.09)}


def request_hash(command: str, req) -> str:
    """Provenance hash over the request, excluding where outputs land."""
    doc = req.model_dump()
    doc.pop("out_dir", None)
    blob = command + "\x1f" + json.dumps(doc, sort_keys=True, default=str)
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


def create_app() -> FastAPI:
    registry = JobRegistry()

    @asynccontextmanager
    async def lifespan(_app):
        yield
        registry.shutdown()

    app = FastAPI(title="neurols workbench", version="0.1.0", lifespan=lifespan)
    app.state.jobs = registry

    @app.get("/health")
    def health():
        return {"status": "ok", "service": "neurols"}

    @app.post("/instances/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        prov = request_hash("generate", req)
        if req.kind == "nk":
            if req.k is None:
                raise HTTPException(400, "nk generation requires k")
            if not 0 <= req.k < req.n:
                raise HTTPException(400, f"k must satisfy 0 <= k < n, got k={req.k}")
            iset = generate_nk_set(req.role, req.n, req.k, req.count,
                                   req.restarts, req.seed)
        else:
            if req.m is None and req.m_frac is None:
                raise HTTPException(400, "qubo generation requires m or m_frac")
            if req.family is not None:
                d, alpha = QUBO_FAMILY_PARAMS[req.family]
            elif req.d is not None:
                d, alpha = req.d, req.alpha if req.alpha is not None else 1.0
            else:
                d, alpha = 1.0, 1.0
            m = req.m if req.m is not None else puboi_m(req.n, req.m_frac)
            try:
                iset = generate_puboi_set(req.role, req.n, m, d, alpha, req.count,
                                          req.restarts, req.seed,
                                          important_frac=req.important_frac)
            except ValueError as exc:
                raise HTTPException(400, str(exc))
        manifest = save_instance_set(iset, req.out_dir, provenance=prov)
        return GenerateResponse(manifest_path=str(manifest), count=req.count,
                                manifest_hash=prov)

    @app.post("/train/jobs", response_model=JobCreated)
    def submit_train(req: TrainRequest):
        prov = request_hash("train", req)
        cfg_fields = req.model_dump()
        out_dir = Path(cfg_fields.pop("out_dir"))
        try:
            cfg = TrainConfig.from_dict(cfg_fields)
        except ValueError as exc:
            raise HTTPException(400, str(exc))

        def job(log):
            out_dir.mkdir(parents=True, exist_ok=True)
            bhc_ref = validation_reference(cfg, BhcPlusPolicy())
            log(f"bhc validation reference {bhc_ref:.6f}")
            ckpt = out_dir / "checkpoint.json"

            def progress(run, gen, train_f, valid_f):
                log(f"run {run} generation {gen} train {train_f:.6f} valid {valid_f:.6f}")

            report = train(cfg, checkpoint_path=ckpt, progress=progress)
            champion_path = out_dir / "champion_policy.json"
            save_policy(report.champion_policy(), champion_path, provenance=prov)
            csv_path = out_dir / "train_report.csv"
            csv_path.write_text(report.to_csv(provenance=prov))
            log(f"champion valid {report.champion_valid:.6f} "
                f"(run {report.champion_run}, generation {report.champion_generation})")
            return TrainResult(
                champion_path=str(champion_path),
                report_csv_path=str(csv_path),
                checkpoint_path=str(ckpt),
                champion_valid_score=report.champion_valid,
                champion_run=report.champion_run,
                champion_generation=report.champion_generation,
                bhc_valid_reference=bhc_ref,
                manifest_hash=prov,
            ).model_dump()

        return JobCreated(job_id=registry.submit(job))

    @app.get("/train/jobs/{job_id}", response_model=JobStatus)
    def train_status(job_id: str, since: int = Query(default=0, ge=0)):
        doc = registry.status(job_id, since=since)
        if doc is None:
            raise HTTPException(404, f"unknown job {job_id}")
        return JobStatus(**doc)

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: EvaluateRequest):
        prov = request_hash("evaluate", req)
        try:
            iset = load_instance_set(req.manifest_path)
        except (FileNotFoundError, InstanceFormatError) as exc:
            raise HTTPException(400, str(exc))
        strategies = {}
        for name in req.baselines:
            if name == "es":
                if req.es_lambda is None:
                    raise HTTPException(400, "es baseline requires es_lambda")
                strategies["es"] = baseline_policy("es", req.es_lambda)
            else:
                strategies[name] = baseline_policy(name)
        for p in req.policy_paths:
            try:
                pol = load_policy(p)
            except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
                raise HTTPException(400, f"cannot load policy {p}: {exc}")
            strategies[Path(p).stem] = pol
        if not strategies:
            raise HTTPException(400, "no strategies selected")
        n = iset.instances[0].n
        horizon = req.horizon if req.horizon else 2 * n
        report = evaluate_testset(strategies, iset, horizon,
                                  baseline_names=list(req.baselines),
                                  master_seed=req.master_seed)
        out_dir = Path(req.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report_path = out_dir / "eval_report.csv"
        report_path.write_text(report.to_csv(provenance=prov))
        scores_path = out_dir / "eval_scores.csv"
        scores_path.write_text(report.scores_csv(provenance=prov))
        decimals = 3 if isinstance(iset.instances[0], NkInstance) else 1
        means, best = report.means, report.best_name
        summaries = [
            StrategySummary(
                name=name, mean=means[name],
                is_baseline=name in report.baseline_names,
                is_best=name == best,
                significant=report.significant(name),
                comparisons=[
                    StrategyComparison(baseline=b, t=c.t, df=c.df, p=c.p)
                    for (s, b), c in report.comparisons.items() if s == name
                ],
            )
            for name in report.strategy_names
        ]
        return EvaluateResponse(report_csv_path=str(report_path),
                                scores_csv_path=str(scores_path),
                                table=report.format_table(decimals=decimals),
                                strategies=summaries, manifest_hash=prov)

    @app.post("/analyze", response_model=AnalyzeResponse)
    def analyze(req: AnalyzeRequest):
        prov = request_hash("analyze", req)
        try:
            iset = load_instance_set(req.manifest_path)
            policy = load_policy(req.policy_path)
        except (FileNotFoundError, InstanceFormatError, json.JSONDecodeError,
                KeyError) as exc:
            raise HTTPException(400, str(exc))
        n = iset.instances[0].n
        horizon = req.horizon if req.horizon else 2 * n
        replays = min(req.trajectories, len(iset.instances))
        out_dir = Path(req.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        trace_paths = []
        for i in range(replays):
            rec = replay_with_diagnostics(policy, iset.instances[i],
                                          iset.start_points(i)[0], horizon,
                                          iset.master_seed)
            path = out_dir / f"trace_{i:02d}.csv"
            path.write_text(f"# provenance {prov}\n" + rec.to_csv())
            trace_paths.append(str(path))
        curve = export_response(policy, iset, horizon, replays=replays)
        response_path = out_dir / "response_curve.csv"
        response_path.write_text(curve.to_csv(provenance=prov))
        return AnalyzeResponse(trace_csv_paths=trace_paths,
                               response_csv_path=str(response_path),
                               points=len(curve.outputs), manifest_hash=prov)

    @app.post("/calibrate-lambda", response_model=CalibrateResponse)
    def calibrate(req: CalibrateRequest):
        try:
            best, scores = calibrate_lambda(req.n, req.k, grid=req.grid,
                                            master_seed=req.master_seed,
                                            q=req.q, r=req.r, horizon=req.horizon)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return CalibrateResponse(best_lambda=best, scores=scores)

    return app


app = create_app()
