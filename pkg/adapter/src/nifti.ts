/**
 * Minimal uncompressed NIfTI-1 reader/writer: 348-byte header, magic "n+1\0",
 * little-endian, dtypes uint8 (2), int16 (4), float32 (16), vox_offset 352.
 * Voxel (i, j, k) lives at flat offset i + j*nx + k*nx*ny (x fastest).
 */

import * as fs from "node:fs";

export interface Volume {
  dims: [number, number, number];
  spacing: [number, number, number];
  origin: [number, number, number];
  data: Float32Array;
}

export const HEADER_SIZE = 348;
export const VOX_OFFSET = 352;

const DT_UINT8 = 2;
const DT_INT16 = 4;
const DT_FLOAT32 = 16;

export function flatIndex(v: Volume, i: number, j: number, k: number): number {
  return i + j * v.dims[0] + k * v.dims[0] * v.dims[1];
}

export function readNifti(path: string): Volume {
  const buf = fs.readFileSync(path);
  if (buf.length < HEADER_SIZE) {
    throw new Error(`${path}: shorter than a NIfTI-1 header`);
  }
  if (buf[0] === 0x1f && buf[1] === 0x8b) {
    throw new Error(`${path}: gzip input is not supported`);
  }
  if (buf.readInt32LE(0) !== HEADER_SIZE) {
    throw new Error(`${path}: bad sizeof_hdr (big-endian files unsupported)`);
  }
  if (buf.toString("latin1", 344, 347) !== "n+1") {
    throw new Error(`${path}: bad magic`);
  }
  const ndim = buf.readInt16LE(40);
  const dims: [number, number, number] = [
    Math.max(1, buf.readInt16LE(42)),
    Math.max(1, buf.readInt16LE(44)),
    Math.max(1, buf.readInt16LE(46)),
  ];
  for (let d = 4; d <= Math.min(7, ndim); d++) {
    if (buf.readInt16LE(40 + 2 * d) > 1) {
      throw new Error(`${path}: >3D data is not supported`);
    }
  }
  const datatype = buf.readInt16LE(70);
  const spacing: [number, number, number] = [
    Math.abs(buf.readFloatLE(80)) || 1,
    Math.abs(buf.readFloatLE(84)) || 1,
    Math.abs(buf.readFloatLE(88)) || 1,
  ];
  const voxOffset = Math.trunc(buf.readFloatLE(108));
  let slope = buf.readFloatLE(112);
  const inter = buf.readFloatLE(116);
  if (slope === 0) slope = 1;
  const origin: [number, number, number] = [
    buf.readFloatLE(268),
    buf.readFloatLE(272),
    buf.readFloatLE(276),
  ];
  const n = dims[0] * dims[1] * dims[2];
  const data = new Float32Array(n);
  if (datatype === DT_UINT8) {
    for (let i = 0; i < n; i++) data[i] = buf.readUInt8(voxOffset + i);
  } else if (datatype === DT_INT16) {
    for (let i = 0; i < n; i++) data[i] = buf.readInt16LE(voxOffset + 2 * i);
  } else if (datatype === DT_FLOAT32) {
    for (let i = 0; i < n; i++) data[i] = buf.readFloatLE(voxOffset + 4 * i);
  } else {
    throw new Error(`${path}: unsupported datatype code ${datatype}`);
  }
  if (slope !== 1 || inter !== 0) {
    for (let i = 0; i < n; i++) data[i] = data[i] * slope + inter;
  }
  return { dims, spacing, origin, data };
}

export function readMask(path: string): Volume {
  const vol = readNifti(path);
  for (const v of vol.data) {
    const r = Math.round(v);
    if (r !== 0 && r !== 1) {
      throw new Error(`${path}: mask value ${v} outside {0,1}`);
    }
  }
  return vol;
}

function buildHeader(vol: Volume, datatype: number, bitpix: number, n: number): Buffer {
  const buf = Buffer.alloc(VOX_OFFSET + n * (bitpix / 8));
  buf.writeInt32LE(HEADER_SIZE, 0);
  buf.write("r", 38, "latin1");
  buf.writeInt16LE(3, 40);
  buf.writeInt16LE(vol.dims[0], 42);
  buf.writeInt16LE(vol.dims[1], 44);
  buf.writeInt16LE(vol.dims[2], 46);
  for (let d = 4; d <= 7; d++) buf.writeInt16LE(1, 40 + 2 * d);
  buf.writeInt16LE(datatype, 70);
  buf.writeInt16LE(bitpix, 72);
  buf.writeFloatLE(1, 76); // pixdim[0] = qfac
  buf.writeFloatLE(vol.spacing[0], 80);
  buf.writeFloatLE(vol.spacing[1], 84);
  buf.writeFloatLE(vol.spacing[2], 88);
  buf.writeFloatLE(VOX_OFFSET, 108);
  buf.writeFloatLE(1, 112); // scl_slope
  buf.writeFloatLE(0, 116); // scl_inter
  buf.writeInt16LE(1, 252); // qform_code
  buf.writeFloatLE(vol.origin[0], 268);
  buf.writeFloatLE(vol.origin[1], 272);
  buf.writeFloatLE(vol.origin[2], 276);
  buf.write("n+1\0", 344, "latin1");
  return buf;
}

export function writeMask(vol: Volume, path: string): void {
  const n = vol.dims[0] * vol.dims[1] * vol.dims[2];
  const buf = buildHeader(vol, DT_UINT8, 8, n);
  for (let i = 0; i < n; i++) {
    const v = Math.round(vol.data[i]);
    if (v !== 0 && v !== 1) {
      throw new Error(`mask value ${vol.data[i]} outside {0,1}`);
    }
    buf.writeUInt8(v, VOX_OFFSET + i);
  }
  fs.writeFileSync(path, buf);
}

export function writeVolume(vol: Volume, path: string): void {
  const n = vol.dims[0] * vol.dims[1] * vol.dims[2];
  const buf = buildHeader(vol, DT_FLOAT32, 32, n);
  for (let i = 0; i < n; i++) {
    buf.writeFloatLE(vol.data[i], VOX_OFFSET + 4 * i);
  }
  fs.writeFileSync(path, buf);
}
