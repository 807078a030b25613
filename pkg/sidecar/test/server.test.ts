import type { Server } from "node:http";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { createApp } from "../src/server.js";
import { encodePng, decodePng, RgbImage, setPixel } from "../src/png.js";
import { validateResponse, OpName } from "../src/protocol.js";

let server: Server;
let base: string;

beforeAll(async () => {
  const app = createApp();
  server = await new Promise<Server>((resolve) => {
    const s: Server = app.listen(0, "127.0.0.1", () => resolve(s));
  });
  const addr = server.address();
  if (addr === null || typeof addr === "string") throw new Error("no address");
  base = `http://127.0.0.1:${addr.port}`;
});

afterAll(() => {
  server.close();
});

function makeImage(w: number, h: number, rgb: [number, number, number]): RgbImage {
  const img: RgbImage = { width: w, height: h, data: Buffer.alloc(w * h * 3) };
  for (let y = 0; y < h; y++) for (let x = 0; x < w; x++) setPixel(img, x, y, rgb);
  return img;
}

function faceImage(): { img: RgbImage; box: { x: number; y: number; w: number; h: number } } {
  const img = makeImage(80, 60, [20, 60, 110]);
  const box = { x: 26, y: 14, w: 28, h: 32 };
  for (let y = box.y; y < box.y + box.h; y++) {
    for (let x = box.x; x < box.x + box.w; x++) {
      setPixel(img, x, y, [198, 152, 118]);
    }
  }
  return { img, box };
}

async function call(op: OpName, payload: unknown, requestId = "t-1") {
  const res = await fetch(`${base}/v1/${op}`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ op, request_id: requestId, payload }),
  });
  expect(res.status).toBe(200);
  return validateResponse(op, await res.json());
}

describe("health", () => {
  it("reports all six ops", async () => {
    const res = await fetch(`${base}/v1/health`);
    expect(res.status).toBe(200);
    const body = (await res.json()) as any;
    expect(body.status).toBe("ok");
    expect(body.protocol).toBe("v1");
    expect(Object.keys(body.ops).sort()).toEqual(
      ["animate", "attributes", "detect", "embed", "inpaint", "landmarks"].sort(),
    );
  });
});

describe("detect", () => {
  it("finds the skin-tone face box", async () => {
    const { img, box } = faceImage();
    const resp = await call("detect", { image: encodePng(img) });
    expect(resp.status).toBe("ok");
    const faces = (resp.result as any).faces;
    expect(faces).toHaveLength(1);
    expect(faces[0]).toMatchObject(box);
  });

  it("returns empty list on a blank image", async () => {
    const resp = await call("detect", { image: encodePng(makeImage(32, 32, [0, 0, 0])) });
    expect((resp.result as any).faces).toEqual([]);
  });
});

describe("landmarks", () => {
  it("returns 68 in-image points", async () => {
    const { img, box } = faceImage();
    const resp = await call("landmarks", { image: encodePng(img), box: { ...box, score: 1 } });
    const points = (resp.result as any).points as [number, number][];
    expect(points).toHaveLength(68);
    for (const [x, y] of points) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThan(80);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThan(60);
    }
  });
});

describe("embed", () => {
  it("returns a unit vector of the declared dimension", async () => {
    const { img, box } = faceImage();
    const resp = await call("embed", { image: encodePng(img), box: { ...box, score: 1 } });
    const result = resp.result as any;
    expect(result.dim).toBe(64);
    expect(result.embedding).toHaveLength(64);
    const norm = Math.sqrt(result.embedding.reduce((s: number, v: number) => s + v * v, 0));
    expect(Math.abs(norm - 1)).toBeLessThan(1e-6);
  });

  it("is deterministic", async () => {
    const { img } = faceImage();
    const a = await call("embed", { image: encodePng(img), box: null });
    const b = await call("embed", { image: encodePng(img), box: null });
    expect(a.result).toEqual(b.result);
  });
});

describe("attributes", () => {
  it("returns populated labels with confidences in range", async () => {
    const { img, box } = faceImage();
    const resp = await call("attributes", { image: encodePng(img), box: { ...box, score: 1 } });
    const result = resp.result as any;
    expect(result.age).toBeGreaterThanOrEqual(0);
    expect(["male", "female"]).toContain(result.gender);
    expect(result.race.length).toBeGreaterThan(0);
    for (const v of Object.values(result.confidences) as number[]) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
  });
});

const PARAMS = {
  steps: 35,
  guidance: 12.0,
  control_strengths: { mask: 1, lineart: 1, pose: 1 },
  seed: 42,
};
const PROMPT = { positive: "a portrait", negative: "artifacts" };

describe("inpaint", () => {
  it("echoes steps and seed, keeps dimensions", async () => {
    const { img, box } = faceImage();
    const resp = await call("inpaint", {
      image: encodePng(img),
      face_box: { ...box, score: 1 },
      prompt: PROMPT,
      params: PARAMS,
    });
    const result = resp.result as any;
    expect(result.steps_used).toBe(35);
    expect(result.seed_used).toBe(42);
    const out = decodePng(result.image);
    expect([out.width, out.height]).toEqual([80, 60]);
  });

  it("changes the masked region and is seed-sensitive", async () => {
    const { img, box } = faceImage();
    const payload = (seed: number) => ({
      image: encodePng(img),
      face_box: { ...box, score: 1 },
      prompt: PROMPT,
      params: { ...PARAMS, seed },
    });
    const a = decodePng(((await call("inpaint", payload(1))).result as any).image);
    const b = decodePng(((await call("inpaint", payload(2))).result as any).image);
    expect(a.data.equals(decodePng(encodePng(img)).data)).toBe(false);
    expect(a.data.equals(b.data)).toBe(false);
  });

  it("rejects a box outside the image as a semantic error", async () => {
    const { img } = faceImage();
    const resp = await call("inpaint", {
      image: encodePng(img),
      face_box: { x: 500, y: 500, w: 10, h: 10, score: 1 },
      prompt: PROMPT,
      params: PARAMS,
    });
    expect(resp.status).toBe("error");
    expect(resp.error_message).toBeTruthy();
  });
});

describe("animate", () => {
  it("returns one frame per driving frame, frame 0 equals source", async () => {
    const { img } = faceImage();
    const driving = [encodePng(img), encodePng(img), encodePng(img)];
    const resp = await call("animate", { source: encodePng(img), driving, motion_code: null });
    const frames = (resp.result as any).frames as string[];
    expect(frames).toHaveLength(3);
    expect(decodePng(frames[0]).data.equals(decodePng(encodePng(img)).data)).toBe(true);
    expect(decodePng(frames[1]).data.equals(decodePng(frames[0]).data)).toBe(false);
  });
});

describe("protocol errors", () => {
  it("malformed envelope gets HTTP 400", async () => {
    const res = await fetch(`${base}/v1/detect`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ nonsense: true }),
    });
    expect(res.status).toBe(400);
  });

  it("op mismatch is a semantic error with the id echoed", async () => {
    const res = await fetch(`${base}/v1/detect`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ op: "embed", request_id: "xyz", payload: { image: "AAAA" } }),
    });
    expect(res.status).toBe(200);
    const body = (await res.json()) as any;
    expect(body.status).toBe("error");
    expect(body.request_id).toBe("xyz");
  });

  it("invalid payload is a semantic error", async () => {
    const resp = await call("inpaint", { image: "AAAA" });
    expect(resp.status).toBe("error");
    expect(resp.error_message).toContain("inpaint");
  });
});
