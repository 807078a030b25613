/**
 * Express app implementing the anonpipe v1 backend protocol.
 *
 * Malformed envelopes get HTTP 400; anything op-level (bad payload,
 * engine failure) is a semantic error: HTTP 200 with status="error" and
 * the request id echoed, matching the engine client's retry semantics.
 */

import express, { Express } from "express";
import { ZodError } from "zod";

import { BuiltinEngine, EMBED_DIM, ModelEngine } from "./engines.js";
import { decodePng, encodePng } from "./png.js";
import {
  BackendRequestSchema,
  OPS,
  OpName,
  PAYLOAD_SCHEMAS,
  PROTOCOL_VERSION,
} from "./protocol.js";

export const SIDECAR_VERSION = "0.1.0";

export function createApp(engine: ModelEngine = new BuiltinEngine()): Express {
  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.get("/v1/health", (_req, res) => {
    res.json({
      status: "ok",
      engine: engine.name,
      protocol: PROTOCOL_VERSION,
      version: SIDECAR_VERSION,
      ops: Object.fromEntries(OPS.map((op) => [op, { model: engine.name, loaded: true }])),
    });
  });

  const dispatch: Record<OpName, (payload: any) => Record<string, unknown>> = {
    detect: (p) => ({ faces: engine.detect(decodePng(p.image)) }),
    landmarks: (p) => ({ points: engine.landmarks(decodePng(p.image), p.box) }),
    embed: (p) => ({
      embedding: engine.embed(decodePng(p.image), p.box ?? null),
      dim: EMBED_DIM,
    }),
    attributes: (p) => engine.attributes(decodePng(p.image), p.box ?? null),
    inpaint: (p) => {
      const out = engine.inpaint(
        decodePng(p.image),
        p.face_box,
        p.params.steps,
        p.params.seed,
      );
      return {
        image: encodePng(out.image),
        steps_used: out.steps_used,
        seed_used: out.seed_used,
      };
    },
    animate: (p) => {
      const frames = engine.animate(decodePng(p.source), p.driving.length);
      return { frames: frames.map(encodePng), motion_code: null };
    },
  };

  for (const op of OPS) {
    app.post(`/v1/${op}`, (req, res) => {
      const parsed = BackendRequestSchema.safeParse(req.body);
      if (!parsed.success) {
        res.status(400).json({ detail: `malformed request: ${parsed.error.message}` });
        return;
      }
      const request = parsed.data;
      const fail = (message: string) =>
        res.json({
          request_id: request.request_id,
          status: "error",
          result: null,
          error_message: message,
        });
      if (request.op !== op) {
        fail(`op mismatch: body says '${request.op}', endpoint is '${op}'`);
        return;
      }
      let payload;
      try {
        payload = PAYLOAD_SCHEMAS[op].parse(request.payload);
      } catch (err) {
        fail(`invalid ${op} payload: ${err instanceof ZodError ? err.message : err}`);
        return;
      }
      try {
        const result = dispatch[op](payload);
        res.json({
          request_id: request.request_id,
          status: "ok",
          result,
          error_message: null,
        });
      } catch (err) {
        fail(String(err instanceof Error ? err.message : err));
      }
    });
  }

  return app;
}
