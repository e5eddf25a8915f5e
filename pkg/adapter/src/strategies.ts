/** Segmentation strategies: where a real promptable model would plug in. */

import { Volume, flatIndex, readMask, readNifti } from "./nifti";
import { SegmentMessage } from "./protocol";

export type StrategyName = "prior-oracle-reimpl" | "threshold-in-bbox";

export interface Prediction {
  mask: Volume;
  confidence: number;
}

type BBox = [number, number, number, number, number, number];

function clampBox(box: BBox, dims: [number, number, number]): BBox {
  return [
    Math.max(0, box[0]),
    Math.max(0, box[1]),
    Math.max(0, box[2]),
    Math.min(dims[0], box[3]),
    Math.min(dims[1], box[4]),
    Math.min(dims[2], box[5]),
  ];
}

/** Re-implementation of the gateway's built-in: prior mask ∩ bbox. */
export function priorOracle(msg: SegmentMessage): Prediction {
  if (!msg.prompts.bbox || !msg.prompts.mask) {
    throw new Error("prior-oracle-reimpl needs both bbox and mask prompts");
  }
  const prior = readMask(msg.prompts.mask);
  const out: Volume = {
    dims: prior.dims,
    spacing: prior.spacing,
    origin: prior.origin,
    data: new Float32Array(prior.data.length),
  };
  const [x0, y0, z0, x1, y1, z1] = clampBox(msg.prompts.bbox, prior.dims);
  for (let k = z0; k < z1; k++) {
    for (let j = y0; j < y1; j++) {
      for (let i = x0; i < x1; i++) {
        const idx = flatIndex(prior, i, j, k);
        out.data[idx] = prior.data[idx];
      }
    }
  }
  return { mask: out, confidence: 1.0 };
}

/** Otsu's threshold over a histogram: bin index maximizing between-class variance. */
export function otsuThreshold(values: Float32Array | number[], bins = 256): number {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) return lo;
  const width = (hi - lo) / bins;
  const hist = new Array(bins).fill(0);
  for (const v of values) {
    let b = Math.floor((v - lo) / width);
    if (b >= bins) b = bins - 1;
    hist[b] += 1;
  }
  const total = values.length;
  let sumAll = 0;
  for (let b = 0; b < bins; b++) sumAll += b * hist[b];
  let wB = 0;
  let sumB = 0;
  let best = -1;
  let runStart = 0;
  let runEnd = 0;
  for (let t = 0; t < bins - 1; t++) {
    wB += hist[t];
    sumB += t * hist[t];
    const wF = total - wB;
    if (wB === 0 || wF === 0) continue;
    const mB = sumB / wB;
    const mF = (sumAll - sumB) / wF;
    const between = wB * wF * (mB - mF) * (mB - mF);
    if (between > best) {
      best = between;
      runStart = t;
      runEnd = t;
    } else if (between === best) {
      runEnd = t; // flat maximum: remember the whole run, split it below
    }
  }
  const tMid = (runStart + runEnd) / 2;
  return lo + (tMid + 1) * width;
}

/** Threshold the current image inside the box; confidence = in-box foreground fraction. */
export function thresholdInBbox(msg: SegmentMessage): Prediction {
  if (!msg.prompts.bbox) {
    throw new Error("threshold-in-bbox needs a bbox prompt");
  }
  const current = readNifti(msg.inputs.current);
  const [x0, y0, z0, x1, y1, z1] = clampBox(msg.prompts.bbox, current.dims);
  const inside: number[] = [];
  for (let k = z0; k < z1; k++) {
    for (let j = y0; j < y1; j++) {
      for (let i = x0; i < x1; i++) {
        inside.push(current.data[flatIndex(current, i, j, k)]);
      }
    }
  }
  if (inside.length === 0) {
    throw new Error("bbox selects no voxels");
  }
  const threshold = otsuThreshold(Float32Array.from(inside));
  const out: Volume = {
    dims: current.dims,
    spacing: current.spacing,
    origin: current.origin,
    data: new Float32Array(current.data.length),
  };
  let fg = 0;
  for (let k = z0; k < z1; k++) {
    for (let j = y0; j < y1; j++) {
      for (let i = x0; i < x1; i++) {
        const idx = flatIndex(current, i, j, k);
        if (current.data[idx] > threshold) {
          out.data[idx] = 1;
          fg += 1;
        }
      }
    }
  }
  return { mask: out, confidence: fg / inside.length };
}

/**
 * Hook point for a real promptable segmenter.
 *
 * A production adapter would load model weights once at startup, then for
 * each request: read the current/prior volumes and the prompts, run
 * inference (image encoding, prompt encoding, mask decoding), binarize the
 * logits, and return the mask with the model's confidence. This reference
 * adapter deliberately ships no weights so it runs everywhere; wire a model
 * in by implementing this function and registering it in `runStrategy`.
 */
export function runModelInference(_msg: SegmentMessage): Prediction {
  throw new Error("no neural model bundled with the reference adapter");
}

export function runStrategy(name: StrategyName, msg: SegmentMessage): Prediction {
  switch (name) {
    case "prior-oracle-reimpl":
      return priorOracle(msg);
    case "threshold-in-bbox":
      return thresholdInBbox(msg);
  }
}
