import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import {
  HEADER_SIZE,
  VOX_OFFSET,
  Volume,
  flatIndex,
  readMask,
  readNifti,
  writeMask,
  writeVolume,
} from "../src/nifti";

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "adapter-nifti-"));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function sampleVolume(): Volume {
  const dims: [number, number, number] = [4, 3, 2];
  const data = new Float32Array(4 * 3 * 2);
  for (let i = 0; i < data.length; i++) data[i] = i * 0.5 - 3;
  return { dims, spacing: [1.5, 1.5, 3], origin: [1, -2, 0.5], data };
}

describe("nifti round trips", () => {
  it("float32 volume survives write/read exactly", () => {
    const vol = sampleVolume();
    const p = path.join(dir, "v.nii");
    writeVolume(vol, p);
    const back = readNifti(p);
    expect(back.dims).toEqual(vol.dims);
    expect(back.spacing).toEqual(vol.spacing);
    expect(back.origin).toEqual(vol.origin);
    expect(Array.from(back.data)).toEqual(Array.from(vol.data));
  });

  it("mask file is 352 header bytes plus one byte per voxel", () => {
    const vol = sampleVolume();
    vol.data = vol.data.map((v) => (v > 0 ? 1 : 0)) as unknown as Float32Array;
    const mask: Volume = { ...vol, data: Float32Array.from(vol.data) };
    const p = path.join(dir, "m.nii");
    writeMask(mask, p);
    expect(fs.statSync(p).size).toBe(VOX_OFFSET + 4 * 3 * 2);
    const back = readMask(p);
    expect(Array.from(back.data)).toEqual(Array.from(mask.data));
  });

  it("voxel order is x-fastest", () => {
    const vol = sampleVolume();
    const p = path.join(dir, "o.nii");
    writeVolume(vol, p);
    const raw = fs.readFileSync(p);
    const val = raw.readFloatLE(VOX_OFFSET + 4 * flatIndex(vol, 2, 1, 1));
    expect(val).toBe(vol.data[2 + 1 * 4 + 1 * 12]);
  });
});

describe("nifti guards", () => {
  it("rejects gzip input", () => {
    const p = path.join(dir, "z.nii");
    fs.writeFileSync(p, Buffer.concat([Buffer.from([0x1f, 0x8b]), Buffer.alloc(400)]));
    expect(() => readNifti(p)).toThrow(/gzip/);
  });

  it("rejects bad magic", () => {
    const vol = sampleVolume();
    const p = path.join(dir, "bad.nii");
    writeVolume(vol, p);
    const raw = fs.readFileSync(p);
    raw.write("xxxx", 344, "latin1");
    fs.writeFileSync(p, raw);
    expect(() => readNifti(p)).toThrow(/magic/);
  });

  it("rejects non-binary masks", () => {
    const vol = sampleVolume();
    const p = path.join(dir, "nb.nii");
    writeVolume(vol, p);
    expect(() => readMask(p)).toThrow(/outside/);
  });

  it("rejects truncated headers", () => {
    const p = path.join(dir, "short.nii");
    fs.writeFileSync(p, Buffer.alloc(HEADER_SIZE - 10));
    expect(() => readNifti(p)).toThrow(/shorter/);
  });
});
