/**
 * Conformance runner: replay the engine's golden v1 requests against a
 * live sidecar and validate every response against the shared schemas.
 * Values may differ from the engine's mock backends; schemas must not.
 */

import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";

import { decodePng, pixel } from "./png.js";
import {
  BackendRequestSchema,
  InpaintPayloadSchema,
  InpaintResultSchema,
  OpName,
  validateResponse,
} from "./protocol.js";

export interface EndpointOutcome {
  op: string;
  file: string;
  ok: boolean;
  detail: string;
}

export async function runConformance(
  goldenDir: string,
  baseUrl: string,
): Promise<{ outcomes: EndpointOutcome[]; passed: boolean }> {
  let files: string[];
  try {
    files = readdirSync(goldenDir)
      .filter((f) => f.endsWith("_request.json"))
      .sort();
  } catch (err) {
    throw new Error(`cannot read golden directory ${goldenDir}: ${err}`);
  }
  const outcomes: EndpointOutcome[] = [];
  if (files.length === 0) {
    outcomes.push({
      op: "-",
      file: goldenDir,
      ok: true,
      detail: "warning: golden directory is empty; vacuous pass",
    });
    return { outcomes, passed: true };
  }

  for (const file of files) {
    const op = file.replace("_request.json", "") as OpName;
    let outcome: EndpointOutcome = { op, file, ok: false, detail: "" };
    try {
      const raw = readFileSync(join(goldenDir, file), "utf-8");
      const request = BackendRequestSchema.parse(JSON.parse(raw));
      if (request.op !== op) {
        throw new Error(`file is named ${op} but carries op ${request.op}`);
      }
      const response = await fetch(`${baseUrl}/v1/${op}`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: raw,
      });
      if (response.status !== 200) {
        throw new Error(`HTTP ${response.status}`);
      }
      const body = validateResponse(op, await response.json());
      if (body.request_id !== request.request_id) {
        throw new Error(`request_id not echoed (${body.request_id})`);
      }
      if (body.status !== "ok") {
        throw new Error(`status=error: ${body.error_message}`);
      }
      outcome = { op, file, ok: true, detail: "schema-valid response" };
    } catch (err) {
      outcome.detail = String(err instanceof Error ? err.message : err);
    }
    outcomes.push(outcome);
  }
  return { outcomes, passed: outcomes.every((o) => o.ok) };
}

/**
 * Mask confinement: pixels outside the face box must survive inpainting
 * byte-for-byte (mean |diff| <= 2/255 tolerated for lossy engines).
 */
export function maskConfinement(requestJson: string, responseResult: unknown): number {
  const request = BackendRequestSchema.parse(JSON.parse(requestJson));
  const payload = InpaintPayloadSchema.parse(request.payload);
  const result = InpaintResultSchema.parse(responseResult);
  const before = decodePng(payload.image);
  const after = decodePng(result.image);
  if (before.width !== after.width || before.height !== after.height) {
    throw new Error("inpaint changed image dimensions");
  }
  const box = payload.face_box;
  let total = 0;
  let count = 0;
  for (let y = 0; y < before.height; y++) {
    for (let x = 0; x < before.width; x++) {
      const inside =
        x >= box.x && x < box.x + box.w && y >= box.y && y < box.y + box.h;
      if (inside) continue;
      const a = pixel(before, x, y);
      const b = pixel(after, x, y);
      total += Math.abs(a[0] - b[0]) + Math.abs(a[1] - b[1]) + Math.abs(a[2] - b[2]);
      count += 3;
    }
  }
  return count ? total / count : 0;
}
