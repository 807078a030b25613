/**
 * v1 wire protocol schemas.
 *
 * Mirror of the engine's protocol reference: JSON over HTTP POST, one
 * endpoint per op, images as base64 PNG. Schemas are strict — unknown
 * fields are rejected — so conformance failures surface loudly.
 */

import { z } from "zod";

export const PROTOCOL_VERSION = "v1";

export const OPS = [
  "detect",
  "landmarks",
  "embed",
  "attributes",
  "inpaint",
  "animate",
] as const;

export type OpName = (typeof OPS)[number];

export const FaceBoxSchema = z
  .object({
    x: z.number().int(),
    y: z.number().int(),
    w: z.number().int().positive(),
    h: z.number().int().positive(),
    score: z.number().default(1.0),
  })
  .strict();

export type FaceBox = z.infer<typeof FaceBoxSchema>;

const image = z.string().min(1);

export const DetectPayloadSchema = z.object({ image }).strict();
export const DetectResultSchema = z.object({ faces: z.array(FaceBoxSchema) }).strict();

export const LandmarksPayloadSchema = z.object({ image, box: FaceBoxSchema }).strict();
export const LandmarksResultSchema = z
  .object({ points: z.array(z.tuple([z.number(), z.number()])).length(68) })
  .strict();

export const EmbedPayloadSchema = z
  .object({ image, box: FaceBoxSchema.nullable().default(null) })
  .strict();
export const EmbedResultSchema = z
  .object({ embedding: z.array(z.number()), dim: z.number().int().min(2) })
  .strict();

export const AttributesPayloadSchema = z
  .object({ image, box: FaceBoxSchema.nullable().default(null) })
  .strict();
export const AttributesResultSchema = z
  .object({
    age: z.number().nonnegative(),
    gender: z.string().min(1),
    race: z.string().min(1),
    emotion: z.string().min(1),
    confidences: z.record(z.string(), z.number().min(0).max(1)).default({}),
  })
  .strict();

export const PromptPairSchema = z
  .object({ positive: z.string(), negative: z.string() })
  .strict();

export const ControlStrengthsSchema = z
  .object({
    mask: z.number().min(0).max(1),
    lineart: z.number().min(0).max(1),
    pose: z.number().min(0).max(1),
  })
  .strict();

export const InpaintParamsSchema = z
  .object({
    steps: z.number().int().min(1).max(150),
    guidance: z.number().positive(),
    control_strengths: ControlStrengthsSchema,
    seed: z.number().int().nonnegative(),
  })
  .strict();

export const InpaintPayloadSchema = z
  .object({
    image,
    face_box: FaceBoxSchema,
    prompt: PromptPairSchema,
    params: InpaintParamsSchema,
  })
  .strict();
export const InpaintResultSchema = z
  .object({
    image,
    steps_used: z.number().int(),
    seed_used: z.number().int(),
  })
  .strict();

export const AnimatePayloadSchema = z
  .object({
    source: image,
    driving: z.array(image).min(1),
    motion_code: z.string().nullable().default(null),
  })
  .strict();
export const AnimateResultSchema = z
  .object({
    frames: z.array(image),
    motion_code: z.string().nullable().default(null),
  })
  .strict();

export const PAYLOAD_SCHEMAS: Record<OpName, z.ZodTypeAny> = {
  detect: DetectPayloadSchema,
  landmarks: LandmarksPayloadSchema,
  embed: EmbedPayloadSchema,
  attributes: AttributesPayloadSchema,
  inpaint: InpaintPayloadSchema,
  animate: AnimatePayloadSchema,
};

export const RESULT_SCHEMAS: Record<OpName, z.ZodTypeAny> = {
  detect: DetectResultSchema,
  landmarks: LandmarksResultSchema,
  embed: EmbedResultSchema,
  attributes: AttributesResultSchema,
  inpaint: InpaintResultSchema,
  animate: AnimateResultSchema,
};

export const BackendRequestSchema = z
  .object({
    op: z.enum(OPS),
    request_id: z.string().min(1),
    payload: z.record(z.string(), z.unknown()),
  })
  .strict();

export type BackendRequest = z.infer<typeof BackendRequestSchema>;

export const BackendResponseSchema = z
  .object({
    request_id: z.string(),
    status: z.enum(["ok", "error"]),
    result: z.record(z.string(), z.unknown()).nullable().default(null),
    error_message: z.string().nullable().default(null),
  })
  .strict();

export type BackendResponse = z.infer<typeof BackendResponseSchema>;

/** Validate a response envelope plus its op-specific result schema. */
export function validateResponse(op: OpName, body: unknown): BackendResponse {
  const envelope = BackendResponseSchema.parse(body);
  if (envelope.status === "ok") {
    if (envelope.result === null) {
      throw new Error(`${op}: ok response without result`);
    }
    RESULT_SCHEMAS[op].parse(envelope.result);
  } else if (!envelope.error_message) {
    throw new Error(`${op}: error response without error_message`);
  }
  return envelope;
}
