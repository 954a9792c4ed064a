import { createHash } from "node:crypto";
import { readdirSync, readFileSync } from "node:fs";
import { join, parse as parsePath } from "node:path";

import express, { type Express } from "express";

import { extractAnswerBoxes } from "./parse.js";
import { decodeBase64, DetectRequest, type DetectResponse } from "./protocol.js";

export interface MockConfig {
  framesDir: string;   // the sequence's frame files; content identifies the frame
  cannedDir: string;   // NNNNNN.txt completion per frame
  modelWidth: number;
  modelHeight: number;
}

/**
 * Replay server: answers /detect from canned completion files without any
 * model. Frames are recognized by the sha256 of the decoded rgb payload
 * (built from framesDir at startup), so responses depend only on the request
 * and the canned files, never on request order.
 */
export function createMockApp(cfg: MockConfig): Express {
  const frameByHash = new Map<string, number>();
  for (const name of readdirSync(cfg.framesDir)) {
    const stem = parsePath(name).name;
    const frame = Number(stem);
    if (!Number.isInteger(frame)) continue;
    const digest = createHash("sha256")
      .update(readFileSync(join(cfg.framesDir, name)))
      .digest("hex");
    frameByHash.set(digest, frame);
  }

  const app = express();
  app.use(express.json({ limit: "64mb" }));
  let requests = 0;

  app.get("/health", (_req, res) => {
    res.json({ model: "mock", requests });
  });

  app.post("/detect", (req, res) => {
    requests += 1;
    const parsed = DetectRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: "malformed /detect body", issues: parsed.error.issues });
      return;
    }
    const rgb = decodeBase64(parsed.data.rgb_image);
    if (rgb === null) {
      res.status(400).json({ error: "rgb_image is not valid base64" });
      return;
    }
    const digest = createHash("sha256").update(rgb).digest("hex");
    const frame = frameByHash.get(digest);
    if (frame === undefined) {
      res.status(404).json({ error: "unknown frame content" });
      return;
    }
    let rawText: string;
    try {
      rawText = readFileSync(join(cfg.cannedDir, `${String(frame).padStart(6, "0")}.txt`), "utf-8");
    } catch {
      res.status(404).json({ error: `no canned completion for frame ${frame}` });
      return;
    }
    const body: DetectResponse = {
      raw_text: rawText,
      boxes: extractAnswerBoxes(rawText),
      model_width: cfg.modelWidth,
      model_height: cfg.modelHeight,
    };
    console.log(`mock /detect frame=${frame} boxes=${body.boxes.length} (request ${requests})`);
    res.json(body);
  });

  return app;
}
