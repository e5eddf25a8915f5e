import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { PassThrough } from "node:stream";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { Volume, flatIndex, readMask, writeMask } from "../src/nifti";
import { serve } from "../src/serve";

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "adapter-serve-"));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function makeSession() {
  const input = new PassThrough();
  const output = new PassThrough();
  const replies: string[] = [];
  output.on("data", (chunk) => {
    for (const line of chunk.toString().split("\n")) {
      if (line.trim()) replies.push(line);
    }
  });
  const done = serve(input, output, { strategy: "prior-oracle-reimpl", logLevel: "quiet" });
  const send = (doc: unknown) => input.write(JSON.stringify(doc) + "\n");
  const waitReplies = async (n: number) => {
    for (let spins = 0; replies.length < n && spins < 200; spins++) {
      await new Promise((r) => setTimeout(r, 5));
    }
    return replies.map((l) => JSON.parse(l));
  };
  return { input, send, waitReplies, done };
}

function writePriorMask(): string {
  const dims: [number, number, number] = [6, 6, 2];
  const vol: Volume = {
    dims,
    spacing: [1, 1, 1],
    origin: [0, 0, 0],
    data: new Float32Array(72),
  };
  vol.data[flatIndex(vol, 2, 2, 0)] = 1;
  vol.data[flatIndex(vol, 5, 5, 1)] = 1;
  const p = path.join(dir, "prior.nii");
  writeMask(vol, p);
  return p;
}

describe("serve loop", () => {
  it("handshakes, segments, and exits on bye", async () => {
    const { send, waitReplies, done } = makeSession();
    send({ type: "hello", version: 1 });
    let msgs = await waitReplies(1);
    expect(msgs[0].type).toBe("ready");
    expect(msgs[0].capabilities).toEqual(["bbox", "mask", "prior"]);

    const prior = writePriorMask();
    send({
      type: "segment",
      case_id: "a/f1",
      inputs: { current: prior, prior: null, prior_mask: prior },
      prompts: { bbox: [0, 0, 0, 4, 4, 2], mask: prior },
      out_dir: path.join(dir, "out"),
    });
    msgs = await waitReplies(2);
    expect(msgs[1].type).toBe("result");
    expect(msgs[1].case_id).toBe("a/f1");
    const mask = readMask(msgs[1].mask);
    let count = 0;
    mask.data.forEach((v) => (count += v));
    expect(count).toBe(1); // only the in-box voxel

    send({ type: "bye" });
    expect(await done).toBe(0);
  });

  it("rejects hello with the wrong version", async () => {
    const { send, waitReplies } = makeSession();
    send({ type: "hello", version: 2 });
    const msgs = await waitReplies(1);
    expect(msgs[0].type).toBe("error");
    expect(msgs[0].message).toContain("unsupported version");
  });

  it("answers malformed lines with protocol errors, never crashing", async () => {
    const { input, send, waitReplies } = makeSession();
    input.write("not json at all\n");
    send({ type: "mystery" });
    send({ type: "hello", version: 1 });
    const msgs = await waitReplies(3);
    expect(msgs[0].type).toBe("error");
    expect(msgs[1].type).toBe("error");
    expect(msgs[2].type).toBe("ready"); // still alive after the garbage
  });

  it("reports per-request failures as error messages", async () => {
    const { send, waitReplies } = makeSession();
    send({ type: "hello", version: 1 });
    send({
      type: "segment",
      case_id: "b/f1",
      inputs: { current: "/nope.nii", prior: null, prior_mask: null },
      prompts: { bbox: null, mask: null },
      out_dir: dir,
    });
    const msgs = await waitReplies(2);
    expect(msgs[1].type).toBe("error");
    expect(msgs[1].case_id).toBe("b/f1");
  });
});
