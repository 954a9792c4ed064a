"""FastAPI application exposing the toolkit's workflows.

Toolkit exceptions are mapped to structured HTTP errors carrying the
exception class name as `kind` so clients (the CLI included) can translate
them back into exit codes: input-shaped errors become 422, backend/runtime
failures become 502.
"""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, workflows
from ..dataio import SynthConfig, synth_generate
from ..errors import InputError, RefTrackError, RuntimeFailure
from ..geometry import ImageDims
from ..gspo import DemoConfig, GspoConfig, run_demo
from ..kalman import NoiseConfig
from ..perception import PerturbationConfig
from ..rewards import RewardConfig
from ..tracker import TrackerConfig
from . import schemas as s


def _error_response(exc: RefTrackError, status: int) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"detail": {"kind": type(exc).__name__, "message": str(exc)}},
    )


def _metric_row(report) -> s.MetricRow:
    return s.MetricRow(**{k: v for k, v in report.as_row().items()})


def create_app() -> FastAPI:
    app = FastAPI(title="reftrack", version=__version__)

    @app.exception_handler(InputError)
    async def _input_error(request: Request, exc: InputError):
        return _error_response(exc, 422)

    @app.exception_handler(RuntimeFailure)
    async def _runtime_error(request: Request, exc: RuntimeFailure):
        return _error_response(exc, 502)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=422,
            content={"detail": {"kind": "ValueError", "message": str(exc)}},
        )

    @app.get("/health", response_model=s.HealthResponse)
    def health() -> s.HealthResponse:
        return s.HealthResponse(name="reftrack", version=__version__)

    @app.post("/parse", response_model=s.ParseResponse)
    def parse(req: s.ParseRequest) -> s.ParseResponse:
        return s.ParseResponse(
            records=[s.ParseDiagnostics(**d) for d in workflows.run_parse(req.texts)])

    @app.post("/reward", response_model=s.RewardResponse)
    def reward(req: s.RewardRequest) -> s.RewardResponse:
        cfg = RewardConfig(**req.config.model_dump())
        det_dims = None
        if req.det_width is not None and req.det_height is not None:
            det_dims = ImageDims(req.det_width, req.det_height)
        records = [
            workflows.RewardRecord(r.sequence, r.frame, r.completion, r.length)
            for r in req.records
        ]
        rows = workflows.run_reward(
            records, Path(req.dataset_root), req.phase, cfg,
            expression_index=req.expression_index, det_dims=det_dims,
        )
        return s.RewardResponse(records=[s.RewardBreakdownRecord(**r) for r in rows])

    @app.post("/gspo-demo", response_model=s.GspoDemoResponse)
    def gspo_demo(req: s.GspoDemoRequest) -> s.GspoDemoResponse:
        cfg = DemoConfig(
            steps=req.steps,
            vocab=req.vocab,
            max_len=req.max_len,
            learning_rate=req.learning_rate,
            seed=req.seed,
            use_cas=req.use_cas,
            gspo=GspoConfig(
                epsilon=req.epsilon,
                beta_kl=req.beta_kl,
                scale_max=req.scale_max,
                group_size=req.group_size,
            ),
        )
        report = run_demo(cfg)
        return s.GspoDemoResponse(
            steps=[s.GspoDemoStep(**vars(st)) for st in report.steps],
            gradient_check=s.GspoGradientCheck(**vars(report.gradient_check)),
            stability=s.GspoStability(**vars(report.stability)),
            use_cas=report.use_cas,
        )

    @app.post("/synth", response_model=s.SynthResponse)
    def synth(req: s.SynthRequest) -> s.SynthResponse:
        cfg = SynthConfig(
            n_targets=req.n_targets,
            n_frames=req.n_frames,
            dims=ImageDims(req.width, req.height),
            velocity_range=(req.velocity_min, req.velocity_max),
            size_range=(req.size_min, req.size_max),
            seed=req.seed,
        )
        root = synth_generate(cfg, Path(req.output_dir) / req.name)
        return s.SynthResponse(root=str(root), frames=req.n_frames, targets=req.n_targets)

    @app.post("/track", response_model=s.TrackResponse)
    def track(req: s.TrackRequest) -> s.TrackResponse:
        summary = workflows.run_track(
            Path(req.dataset_root),
            Path(req.output_dir),
            backend=req.backend,
            expression_filter=req.expression_filter,
            tracker_cfg=TrackerConfig(
                tau_iou=req.tau_iou,
                delta_max=req.delta_max,
                emit_temporary=req.emit_temporary,
                min_hits=req.min_hits,
            ),
            noise=NoiseConfig(),
            perturb=PerturbationConfig(
                jitter_sigma=req.jitter_sigma,
                scale_sigma=req.scale_sigma,
                p_miss=req.p_miss,
                fp_rate=req.fp_rate,
                seed=req.seed,
            ),
            seed=req.seed,
            cache_root=Path(req.cache_root) if req.cache_root else None,
            endpoint=req.endpoint,
            timeout_ms=req.timeout_ms,
            retries=req.retries,
        )
        return s.TrackResponse(
            rows=[s.TrackRow(**vars(r)) for r in summary.rows],
            total_backend_failures=summary.total_backend_failures,
            warnings=list(summary.warnings),
        )

    @app.post("/eval", response_model=s.EvalResponse)
    def evaluate(req: s.EvalRequest) -> s.EvalResponse:
        outcome = workflows.run_eval(Path(req.predictions_dir), Path(req.dataset_root))
        per_expression = []
        if req.per_expression:
            per_expression = [
                s.ExpressionMetricRow(
                    sequence=e.sequence,
                    expression_index=e.expression_index,
                    expression=e.expression,
                    metrics=_metric_row(e.report),
                )
                for e in outcome.per_expression
            ]
        return s.EvalResponse(
            combined=_metric_row(outcome.combined),
            macro=_metric_row(outcome.macro),
            per_alpha=[
                s.AlphaRow(
                    alpha=c.alpha, hota=c.hota, det_a=c.det_a, det_re=c.det_re,
                    det_pr=c.det_pr, ass_a=c.ass_a, ass_re=c.ass_re, ass_pr=c.ass_pr,
                    loc_a=c.loc_a, tp=c.tp, fn=c.fn, fp=c.fp,
                )
                for c in outcome.combined.per_alpha
            ],
            per_expression=per_expression,
            warnings=list(outcome.warnings),
        )

    return app
