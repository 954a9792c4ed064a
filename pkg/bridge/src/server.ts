import express, { type Express } from "express";

import { extractAnswerBoxes } from "./parse.js";
import { decodeBase64, DetectRequest, type DetectResponse } from "./protocol.js";

export interface ServeConfig {
  model: string;        // model identifier passed to the upstream API
  upstreamUrl: string;  // OpenAI-compatible endpoint serving the model
  modelWidth: number;   // resolution the model sees; reported back for rescaling
  modelHeight: number;
  timeoutMs?: number;
}

interface ChatCompletion {
  choices?: { message?: { content?: string } }[];
}

/** One multimodal chat call: prompt plus the aligned rgb/thermal pair. */
async function askUpstream(cfg: ServeConfig, prompt: string, rgbB64: string, thermalB64: string): Promise<string> {
  const body = {
    model: cfg.model,
    messages: [
      {
        role: "user",
        content: [
          { type: "text", text: prompt },
          { type: "image_url", image_url: { url: `data:image/jpeg;base64,${rgbB64}` } },
          { type: "image_url", image_url: { url: `data:image/jpeg;base64,${thermalB64}` } },
        ],
      },
    ],
    temperature: 0,
  };
  const resp = await fetch(`${cfg.upstreamUrl}/v1/chat/completions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
    signal: AbortSignal.timeout(cfg.timeoutMs ?? 120_000),
  });
  if (!resp.ok) {
    throw new Error(`upstream returned HTTP ${resp.status}`);
  }
  const payload = (await resp.json()) as ChatCompletion;
  const content = payload.choices?.[0]?.message?.content;
  if (typeof content !== "string") {
    throw new Error("upstream response carried no message content");
  }
  return content;
}

/** Startup probe; the bridge refuses to come up without a reachable model. */
export async function checkUpstream(cfg: ServeConfig): Promise<void> {
  const resp = await fetch(`${cfg.upstreamUrl}/v1/models`, {
    signal: AbortSignal.timeout(cfg.timeoutMs ?? 10_000),
  });
  if (!resp.ok) {
    throw new Error(`upstream model service not available: HTTP ${resp.status}`);
  }
}

export function createServeApp(cfg: ServeConfig): Express {
  const app = express();
  app.use(express.json({ limit: "64mb" }));
  let requests = 0;

  app.get("/health", (_req, res) => {
    res.json({ model: cfg.model, requests });
  });

  app.post("/detect", (req, res) => {
    requests += 1;
    const parsed = DetectRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: "malformed /detect body", issues: parsed.error.issues });
      return;
    }
    if (decodeBase64(parsed.data.rgb_image) === null || decodeBase64(parsed.data.thermal_image) === null) {
      res.status(400).json({ error: "images must be base64" });
      return;
    }
    askUpstream(cfg, parsed.data.prompt, parsed.data.rgb_image, parsed.data.thermal_image)
      .then((rawText) => {
        const body: DetectResponse = {
          raw_text: rawText,
          boxes: extractAnswerBoxes(rawText),
          model_width: cfg.modelWidth,
          model_height: cfg.modelHeight,
        };
        res.json(body);
      })
      .catch((err: unknown) => {
        res.status(500).json({ error: String(err) });
      });
  });

  return app;
}
