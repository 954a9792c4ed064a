import { z } from "zod";

/** Wire protocol for POST /detect, shared by the live server and the mock. */

export const DetectRequest = z.object({
  rgb_image: z.string(),
  thermal_image: z.string(),
  prompt: z.string(),
  image_width: z.number().int().positive(),
  image_height: z.number().int().positive(),
});
export type DetectRequest = z.infer<typeof DetectRequest>;

export const DetectResponse = z.object({
  raw_text: z.string(),
  boxes: z.array(z.tuple([z.number(), z.number(), z.number(), z.number()])),
  model_width: z.number().int().positive(),
  model_height: z.number().int().positive(),
});
export type DetectResponse = z.infer<typeof DetectResponse>;

export const HealthResponse = z.object({
  model: z.string(),
  requests: z.number().int().nonnegative(),
});
export type HealthResponse = z.infer<typeof HealthResponse>;

const BASE64_RE = /^[A-Za-z0-9+/]*={0,2}$/;

/** Strict base64 decode; express won't reject bad payloads for us. */
export function decodeBase64(data: string): Buffer | null {
  if (data.length % 4 !== 0 || !BASE64_RE.test(data)) return null;
  return Buffer.from(data, "base64");
}
