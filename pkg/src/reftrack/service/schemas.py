"""Pydantic request/response models for the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    name: str
    version: str


class ParseRequest(BaseModel):
    texts: list[str]


class ParseDiagnostics(BaseModel):
    has_think: bool
    has_answer: bool
    answer_is_pure: bool
    boxes: list[list[float]]
    dropped_boxes: int
    format_reward: int


class ParseResponse(BaseModel):
    records: list[ParseDiagnostics]


class RewardParams(BaseModel):
    alpha: float = 0.5
    beta: float = 1.0
    gamma: float = 0.5
    lam: float = 2.0
    l_min: int = 80
    l_low: int = 140
    l_high: int = 200
    l_max: int = 600
    w_format: float = 0.5
    w_length: float = 0.5
    w_str: float = 1.0
    w_ctr: float = 1.0
    tau_match: float = 0.5
    phase_switch: float = 0.5


class CompletionRecord(BaseModel):
    sequence: str
    frame: int = Field(ge=1)
    completion: str
    length: int | None = None


class RewardRequest(BaseModel):
    dataset_root: str
    records: list[CompletionRecord]
    phase: float = Field(default=0.0, ge=0.0, le=1.0)
    expression_index: int | None = None
    det_width: int | None = None
    det_height: int | None = None
    config: RewardParams = RewardParams()


class RewardBreakdownRecord(BaseModel):
    sequence: str
    frame: int
    R_format: int
    R_len: float
    R_str: float
    R_oer: float
    R_pdr: float
    R_ctr: float
    R_total: float
    mode: str
    length: int
    matched_gt: int
    iou_score: float
    n_det: int
    n_gt: int
    dropped_boxes: int


class RewardResponse(BaseModel):
    records: list[RewardBreakdownRecord]


class GspoDemoRequest(BaseModel):
    steps: int = Field(default=30, ge=1, le=10_000)
    group_size: int = Field(default=4, ge=2)
    epsilon: float = Field(default=1e-3, gt=0)
    beta_kl: float = Field(default=0.001, ge=0)
    scale_max: float = Field(default=3.0, gt=0)
    seed: int = 0
    use_cas: bool = True
    vocab: int = Field(default=8, ge=2)
    max_len: int = Field(default=6, ge=1)
    learning_rate: float = Field(default=0.8, gt=0)


class GspoDemoStep(BaseModel):
    step: int
    mean_reward: float
    objective: float
    max_abs_advantage: float
    min_ratio: float
    max_ratio: float
    clipped_fraction: float


class GspoStability(BaseModel):
    injected_sigma: float
    max_abs_deviation: float
    raw_max_abs: float
    cas_max_abs: float
    cas_bound: float


class GspoGradientCheck(BaseModel):
    instances: int
    max_rel_error: float


class GspoDemoResponse(BaseModel):
    steps: list[GspoDemoStep]
    gradient_check: GspoGradientCheck
    stability: GspoStability
    use_cas: bool


class SynthRequest(BaseModel):
    output_dir: str
    name: str = "synth"
    n_targets: int = Field(default=3, ge=1)
    n_frames: int = Field(default=100, ge=1)
    width: int = Field(default=512, ge=1)
    height: int = Field(default=512, ge=1)
    velocity_min: float = 1.0
    velocity_max: float = 4.0
    size_min: float = 20.0
    size_max: float = 60.0
    seed: int = 0


class SynthResponse(BaseModel):
    root: str
    frames: int
    targets: int


class TrackRequest(BaseModel):
    dataset_root: str
    output_dir: str
    backend: str = Field(default="oracle", pattern="^(oracle|cache|remote)$")
    expression_filter: str | None = None
    tau_iou: float = Field(default=0.3, ge=0.0, le=1.0)
    delta_max: int = Field(default=30, ge=1)
    emit_temporary: bool = False
    min_hits: int = Field(default=1, ge=1)
    jitter_sigma: float = Field(default=0.0, ge=0.0)
    scale_sigma: float = Field(default=0.0, ge=0.0)
    p_miss: float = Field(default=0.0, ge=0.0, le=1.0)
    fp_rate: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    cache_root: str | None = None
    endpoint: str | None = None
    timeout_ms: int | None = None
    retries: int = Field(default=2, ge=0)


class TrackRow(BaseModel):
    sequence: str
    expression_index: int
    expression: str
    tracks: int
    boxes: int
    frames: int
    result_file: str
    backend_failures: int


class TrackResponse(BaseModel):
    rows: list[TrackRow]
    total_backend_failures: int
    warnings: list[str]


class EvalRequest(BaseModel):
    predictions_dir: str
    dataset_root: str
    per_expression: bool = False


class MetricRow(BaseModel):
    HOTA: float
    DetA: float
    AssA: float
    DetRe: float
    DetPr: float
    AssRe: float
    AssPr: float
    LocA: float


class AlphaRow(BaseModel):
    alpha: float
    hota: float
    det_a: float
    det_re: float
    det_pr: float
    ass_a: float
    ass_re: float
    ass_pr: float
    loc_a: float
    tp: int
    fn: int
    fp: int


class ExpressionMetricRow(BaseModel):
    sequence: str
    expression_index: int
    expression: str
    metrics: MetricRow


class EvalResponse(BaseModel):
    combined: MetricRow
    macro: MetricRow
    per_alpha: list[AlphaRow]
    per_expression: list[ExpressionMetricRow] = []
    warnings: list[str] = []
