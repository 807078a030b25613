/**
 * Model engines behind the six protocol ops.
 *
 * Real deployments plug pretrained models in through the ModelEngine
 * interface (one adapter per op; ONNX / remote runtimes / vendor SDKs).
 * The builtin engines below are deterministic procedural fallbacks: they
 * keep the service schema-complete and testable on machines without model
 * weights, and they honor the contracts the engine relies on (inpaint
 * never touches pixels outside the mask region; animate returns one frame
 * per driving frame; embeddings are unit vectors).
 */

import type { FaceBox } from "./protocol.js";
import { RgbImage, clone, pixel, setPixel } from "./png.js";

export interface ModelEngine {
  name: string;
  detect(image: RgbImage): FaceBox[];
  landmarks(image: RgbImage, box: FaceBox): [number, number][];
  embed(image: RgbImage, box: FaceBox | null): number[];
  attributes(
    image: RgbImage,
    box: FaceBox | null,
  ): { age: number; gender: string; race: string; emotion: string; confidences: Record<string, number> };
  inpaint(
    image: RgbImage,
    box: FaceBox,
    steps: number,
    seed: number,
  ): { image: RgbImage; steps_used: number; seed_used: number };
  animate(source: RgbImage, drivingCount: number): RgbImage[];
}

export const EMBED_DIM = 64;

/** Deterministic 32-bit PRNG (xorshift); good enough for fill patterns. */
function xorshift(seed: number): () => number {
  let state = (seed >>> 0) || 0x9e3779b9;
  return () => {
    state ^= state << 13;
    state >>>= 0;
    state ^= state >> 17;
    state ^= state << 5;
    state >>>= 0;
    return state / 0xffffffff;
  };
}

function cropBounds(image: RgbImage, box: FaceBox | null) {
  if (!box) return { x0: 0, y0: 0, x1: image.width, y1: image.height };
  const x0 = Math.max(box.x, 0);
  const y0 = Math.max(box.y, 0);
  const x1 = Math.min(box.x + box.w, image.width);
  const y1 = Math.min(box.y + box.h, image.height);
  if (x1 <= x0 || y1 <= y0) {
    throw new Error(`box [${box.x},${box.y},${box.w},${box.h}] lies outside the image`);
  }
  return { x0, y0, x1, y1 };
}

function isSkinTone(r: number, g: number, b: number): boolean {
  return r >= 140 && r <= 235 && g >= 100 && g <= 195 && b >= 80 && b <= 170 && r > g && g > b;
}

export class BuiltinEngine implements ModelEngine {
  name = "builtin-procedural";

  detect(image: RgbImage): FaceBox[] {
    let minX = image.width;
    let minY = image.height;
    let maxX = -1;
    let maxY = -1;
    let count = 0;
    for (let y = 0; y < image.height; y++) {
      for (let x = 0; x < image.width; x++) {
        const [r, g, b] = pixel(image, x, y);
        if (isSkinTone(r, g, b)) {
          count++;
          if (x < minX) minX = x;
          if (x > maxX) maxX = x;
          if (y < minY) minY = y;
          if (y > maxY) maxY = y;
        }
      }
    }
    if (count < 16 || maxX < minX || maxY < minY) return [];
    return [{ x: minX, y: minY, w: maxX - minX + 1, h: maxY - minY + 1, score: 1.0 }];
  }

  landmarks(image: RgbImage, box: FaceBox): [number, number][] {
    // Proportional 68-point template inside the box: jaw arc, brows, nose
    // bridge, eye corners, mouth. Positions follow the iBUG layout closely
    // enough for downstream pose estimation to see a frontal face.
    const px = (fx: number, fy: number): [number, number] => [
      box.x + fx * box.w,
      box.y + fy * box.h,
    ];
    const points: [number, number][] = new Array(68);
    for (let i = 0; i <= 16; i++) {
      // Jaw: half ellipse from left temple over the chin to right temple.
      const t = i / 16;
      const angle = Math.PI * (1 - t);
      points[i] = px(0.5 + 0.48 * Math.cos(angle), 0.45 + 0.52 * Math.sin(angle));
    }
    for (let i = 0; i < 5; i++) {
      points[17 + i] = px(0.18 + 0.13 * i, 0.22); // left brow
      points[22 + i] = px(0.56 + 0.13 * i, 0.22); // right brow
    }
    for (let i = 0; i < 4; i++) points[27 + i] = px(0.5, 0.3 + 0.07 * i); // nose bridge
    for (let i = 0; i < 5; i++) points[31 + i] = px(0.42 + 0.04 * i, 0.58); // nostrils
    const eye = (cx: number, idx: number) => {
      const layout: [number, number][] = [
        [-0.07, 0], [-0.035, -0.02], [0.035, -0.02], [0.07, 0], [0.035, 0.02], [-0.035, 0.02],
      ];
      layout.forEach(([dx, dy], k) => {
        points[idx + k] = px(cx + dx, 0.35 + dy);
      });
    };
    eye(0.3, 36); // left eye: 36 outer corner
    eye(0.7, 42); // right eye: 45 = 42+3 outer corner... see remap below
    // iBUG right-eye outer corner is index 45 (the temple side); the
    // template above puts the outer corner at slot 42+3=45 already.
    for (let i = 0; i < 12; i++) {
      const t = (i / 12) * 2 * Math.PI;
      points[48 + i] = px(0.5 + 0.16 * Math.cos(t), 0.75 + 0.07 * Math.sin(t));
    }
    points[48] = px(0.34, 0.75); // left mouth corner
    points[54] = px(0.66, 0.75); // right mouth corner
    for (let i = 60; i < 68; i++) {
      const t = ((i - 60) / 8) * 2 * Math.PI;
      points[i] = px(0.5 + 0.08 * Math.cos(t), 0.75 + 0.035 * Math.sin(t));
    }
    return points.map(([x, y]) => [
      Math.min(Math.max(x, 0), image.width - 1),
      Math.min(Math.max(y, 0), image.height - 1),
    ]);
  }

  embed(image: RgbImage, box: FaceBox | null): number[] {
    const { x0, y0, x1, y1 } = cropBounds(image, box);
    const cells = new Float64Array(EMBED_DIM);
    const counts = new Float64Array(EMBED_DIM);
    for (let y = y0; y < y1; y++) {
      const cy = Math.min(Math.floor(((y - y0) * 8) / (y1 - y0)), 7);
      for (let x = x0; x < x1; x++) {
        const cx = Math.min(Math.floor(((x - x0) * 8) / (x1 - x0)), 7);
        const [r, g, b] = pixel(image, x, y);
        cells[cy * 8 + cx] += (r + g + b) / 3;
        counts[cy * 8 + cx]++;
      }
    }
    let mean = 0;
    for (let i = 0; i < EMBED_DIM; i++) {
      cells[i] = counts[i] ? cells[i] / counts[i] : 0;
      mean += cells[i];
    }
    mean /= EMBED_DIM;
    let norm = 0;
    const out = new Array<number>(EMBED_DIM);
    for (let i = 0; i < EMBED_DIM; i++) {
      out[i] = cells[i] - mean;
      norm += out[i] * out[i];
    }
    norm = Math.sqrt(norm);
    if (norm < 1e-9) {
      // Flat crop: deterministic direction from the byte sum.
      let acc = 2166136261;
      for (let i = 0; i < image.data.length; i += 97) {
        acc = ((acc ^ image.data[i]) * 16777619) >>> 0;
      }
      const rand = xorshift(acc);
      for (let i = 0; i < EMBED_DIM; i++) out[i] = rand() - 0.5;
      norm = Math.sqrt(out.reduce((s, v) => s + v * v, 0));
    }
    return out.map((v) => v / norm);
  }

  attributes(image: RgbImage, box: FaceBox | null) {
    const { x0, y0, x1, y1 } = cropBounds(image, box);
    let rSum = 0;
    let gSum = 0;
    let bSum = 0;
    const n = (x1 - x0) * (y1 - y0);
    for (let y = y0; y < y1; y++) {
      for (let x = x0; x < x1; x++) {
        const [r, g, b] = pixel(image, x, y);
        rSum += r;
        gSum += g;
        bSum += b;
      }
    }
    const brightness = (rSum + gSum + bSum) / (3 * n) / 255;
    const genders = ["female", "male"];
    const races = ["asian", "white", "black", "hispanic", "middle eastern", "indian"];
    const emotions = ["neutral", "happy", "sad", "surprise"];
    return {
      age: Math.round(20 + brightness * 45),
      gender: genders[Math.round(rSum) % 2],
      race: races[Math.round(gSum) % races.length],
      emotion: emotions[Math.round(bSum) % emotions.length],
      confidences: { age: 0.6, gender: 0.75, race: 0.6, emotion: 0.7 },
    };
  }

  inpaint(image: RgbImage, box: FaceBox, steps: number, seed: number) {
    const { x0, y0, x1, y1 } = cropBounds(image, box);
    const out = clone(image);
    const rand = xorshift(seed ^ ((x1 - x0) << 16) ^ (y1 - y0));
    const base: [number, number, number] = [
      60 + Math.floor(rand() * 140),
      60 + Math.floor(rand() * 140),
      60 + Math.floor(rand() * 140),
    ];
    const mosaic: number[] = [];
    for (let i = 0; i < 64 * 3; i++) mosaic.push(Math.floor(rand() * 120) - 60);
    for (let y = y0; y < y1; y++) {
      const cy = Math.min(Math.floor(((y - y0) * 8) / (y1 - y0)), 7);
      for (let x = x0; x < x1; x++) {
        const cx = Math.min(Math.floor(((x - x0) * 8) / (x1 - x0)), 7);
        const cell = (cy * 8 + cx) * 3;
        setPixel(out, x, y, [
          Math.min(Math.max(base[0] + mosaic[cell], 0), 255),
          Math.min(Math.max(base[1] + mosaic[cell + 1], 0), 255),
          Math.min(Math.max(base[2] + mosaic[cell + 2], 0), 255),
        ]);
      }
    }
    return { image: out, steps_used: steps, seed_used: seed };
  }

  animate(source: RgbImage, drivingCount: number): RgbImage[] {
    const frames: RgbImage[] = [];
    const shiftsX = [0, 1, 2, 1, 0, -1, -2, -1];
    const shiftsY = [0, 1, 0, -1];
    for (let i = 0; i < drivingCount; i++) {
      const dx = shiftsX[i % shiftsX.length];
      const dy = shiftsY[i % shiftsY.length];
      const frame = clone(source);
      for (let y = 0; y < source.height; y++) {
        const sy = (((y - dy) % source.height) + source.height) % source.height;
        for (let x = 0; x < source.width; x++) {
          const sx = (((x - dx) % source.width) + source.width) % source.width;
          setPixel(frame, x, y, pixel(source, sx, sy));
        }
      }
      frames.push(frame);
    }
    return frames;
  }
}
