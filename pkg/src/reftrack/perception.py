"""Detector backends behind one interface: oracle, cached text, remote service.

The tracker only ever sees `detect(frame, query) -> [Detection]`. The oracle
replays ground truth under a controlled perturbation model (dropout, jitter,
false positives); the cache backend parses previously saved completions; the
remote backend speaks the POST /detect wire protocol to an inference bridge
and re-parses the returned raw text locally, so box extraction has a single
source of truth.
"""
from __future__ import annotations

import base64
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

from .dataio import ExpressionAnnotation, SequenceManifest, TrackingResult, frame_stem
from .errors import BackendError, EmptyQuery, ProtocolError, RemoteError
from .geometry import BBox, ImageDims, clamp_to_image, rescale
from .rewards import parse_answer

ENDPOINT_ENV = "REFTRACK_ENDPOINT"
TIMEOUT_ENV = "REFTRACK_TIMEOUT_MS"

_PROMPT_PREFIX = (
    "You are a Visual Language Model specifically designed for paired and perfectly "
    "aligned RGB + thermal images. Please utilize the information from both modes "
    "simultaneously and detect all targets that match: "
)
_PROMPT_SUFFIX = (
    "in the image and output their coordinates with [x1,y1,x2,y2] format. "
    "First output the thinking process in <think></think> tags and then output "
    "the final answer in <answer></answer> tags. Note that the <answer></answer> "
    "tags should not contain any text, only the coordinates in the [x1,y1,x2,y2] format."
)


def build_prompt(query: str) -> str:
    """Verbatim instruction template with the description interpolated, byte-stable."""
    if not query:
        raise EmptyQuery("query text must be non-empty")
    return _PROMPT_PREFIX + query + _PROMPT_SUFFIX


@dataclass(frozen=True)
class Detection:
    box: BBox
    confidence: float = 1.0
    source: str = ""

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")


@dataclass(frozen=True)
class PerturbationConfig:
    jitter_sigma: float = 0.0   # center noise as a fraction of box size
    scale_sigma: float = 0.0    # log-size noise
    p_miss: float = 0.0         # per-target per-frame dropout probability
    fp_rate: float = 0.0        # expected false positives per frame (Poisson)
    seed: int = 0

    def __post_init__(self):
        if self.jitter_sigma < 0 or self.scale_sigma < 0 or self.fp_rate < 0:
            raise ValueError("noise magnitudes must be >= 0")
        if not 0.0 <= self.p_miss <= 1.0:
            raise ValueError("p_miss must be in [0, 1]")


class DetectorBackend(Protocol):
    def detect(self, frame: int, query: str) -> list[Detection]:
        ...


class OracleBackend:
    """Ground-truth stand-in for the perception model.

    Emits the expression's GT boxes at each frame, independently dropped with
    p_miss, jittered in center and log-size, plus Poisson(fp_rate) uniform
    false boxes; everything is clamped to the image. Deterministic for a
    fixed seed when frames are visited in order.
    """

    def __init__(
        self,
        gt: TrackingResult,
        expr: ExpressionAnnotation,
        dims: ImageDims,
        perturb: PerturbationConfig = PerturbationConfig(),
    ):
        self._gt = gt
        self._expr = expr
        self._dims = dims
        self._cfg = perturb
        self._rng = np.random.default_rng(perturb.seed)

    def detect(self, frame: int, query: str) -> list[Detection]:
        cfg, rng = self._cfg, self._rng
        active = self._expr.active_ids(frame)
        out: list[Detection] = []
        for tid, box in self._gt.at(frame):
            if tid not in active:
                continue
            if cfg.p_miss > 0.0 and rng.random() < cfg.p_miss:
                continue
            if cfg.jitter_sigma > 0.0 or cfg.scale_sigma > 0.0:
                cx, cy = box.center
                w, h = box.width, box.height
                if cfg.jitter_sigma > 0.0:
                    cx += rng.normal(0.0, cfg.jitter_sigma * w)
                    cy += rng.normal(0.0, cfg.jitter_sigma * h)
                if cfg.scale_sigma > 0.0:
                    w = math.exp(math.log(w) + rng.normal(0.0, cfg.scale_sigma))
                    h = math.exp(math.log(h) + rng.normal(0.0, cfg.scale_sigma))
                box = clamp_to_image(
                    BBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0), self._dims)
            out.append(Detection(box, 1.0, "oracle"))
        if cfg.fp_rate > 0.0:
            for _ in range(int(rng.poisson(cfg.fp_rate))):
                fw = rng.uniform(0.02, 0.2) * self._dims.width
                fh = rng.uniform(0.02, 0.2) * self._dims.height
                fx = rng.uniform(0.0, self._dims.width)
                fy = rng.uniform(0.0, self._dims.height)
                fake = clamp_to_image(BBox(fx, fy, fx + fw, fy + fh), self._dims)
                out.append(Detection(fake, 1.0, "oracle"))
        return out


class CachedTextBackend:
    """Parses per-frame completion files (<dir>/NNNNNN.txt) saved from a model run."""

    def __init__(self, cache_dir: Path):
        self._dir = Path(cache_dir)

    def detect(self, frame: int, query: str) -> list[Detection]:
        path = self._dir / f"{frame_stem(frame)}.txt"
        try:
            text = path.read_text()
        except OSError as exc:
            raise BackendError(f"missing completion cache {path}: {exc}") from None
        parsed = parse_answer(text)
        return [Detection(b, 1.0, "cache") for b in parsed.boxes]


def _default_timeout_ms() -> int:
    raw = os.environ.get(TIMEOUT_ENV, "")
    try:
        return int(raw) if raw else 30_000
    except ValueError:
        return 30_000


class RemoteBackend:
    """Client for the POST /detect wire protocol.

    Sends the base64-encoded frame pair plus the instruction prompt, parses
    the returned raw text with the shared answer parser, and rescales boxes
    from the reported model dims back into sequence coordinates.
    """

    def __init__(
        self,
        manifest: SequenceManifest,
        endpoint: str | None = None,
        timeout_ms: int | None = None,
        retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        if not endpoint:
            raise RemoteError(f"no endpoint configured (flag or {ENDPOINT_ENV})")
        self._manifest = manifest
        self._retries = max(0, retries)
        timeout = (timeout_ms if timeout_ms is not None else _default_timeout_ms()) / 1000.0
        self._client = httpx.Client(base_url=endpoint, timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def detect(self, frame: int, query: str) -> list[Detection]:
        rgb_path, thermal_path = self._manifest.frame_pair(frame)
        body = {
            "rgb_image": base64.b64encode(rgb_path.read_bytes()).decode("ascii"),
            "thermal_image": base64.b64encode(thermal_path.read_bytes()).decode("ascii"),
            "prompt": build_prompt(query),
            "image_width": self._manifest.dims.width,
            "image_height": self._manifest.dims.height,
        }
        last_error = "unknown"
        for attempt in range(self._retries + 1):
            try:
                resp = self._client.post("/detect", json=body)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
            else:
                if resp.status_code == 200:
                    return self._parse_response(resp)
                last_error = f"HTTP {resp.status_code}"
            if attempt < self._retries:
                time.sleep(0.05 * (attempt + 1))
        raise RemoteError(f"/detect failed: {last_error}", retries=self._retries)

    def _parse_response(self, resp: httpx.Response) -> list[Detection]:
        try:
            payload = resp.json()
            raw_text = payload["raw_text"]
            model_dims = ImageDims(int(payload["model_width"]), int(payload["model_height"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed /detect response: {exc}") from None
        parsed = parse_answer(raw_text)
        return [
            Detection(rescale(b, model_dims, self._manifest.dims), 1.0, "remote")
            for b in parsed.boxes
        ]
