/** Request loop: hello/ready handshake, one segment request at a time, bye. */

import * as fs from "node:fs";
import * as path from "node:path";
import * as readline from "node:readline";
import { Writable } from "node:stream";

import { writeMask } from "./nifti";
import {
  PROTOCOL_VERSION,
  errorLine,
  parseIncoming,
  readyLine,
  resultLine,
} from "./protocol";
import { StrategyName, runStrategy } from "./strategies";

export interface ServeOptions {
  strategy: StrategyName;
  logLevel: "quiet" | "info" | "debug";
}

function sanitize(caseId: string): string {
  return caseId.replace(/[^A-Za-z0-9._-]/g, "_");
}

export function serve(
  input: NodeJS.ReadableStream,
  output: Writable,
  options: ServeOptions,
  log: (line: string) => void = (line) => process.stderr.write(line + "\n"),
): Promise<number> {
  const info = (m: string) => {
    if (options.logLevel !== "quiet") log(`[adapter] ${m}`);
  };
  const send = (line: string) => output.write(line + "\n");

  return new Promise((resolve) => {
    const rl = readline.createInterface({ input, terminal: false });
    let greeted = false;
    rl.on("close", () => resolve(0));
    rl.on("line", (line) => {
      if (!line.trim()) return;
      let msg;
      try {
        msg = parseIncoming(line);
      } catch (err) {
        send(errorLine("", `protocol error: ${(err as Error).message}`));
        return;
      }
      if (msg.type === "hello") {
        if (msg.version !== PROTOCOL_VERSION) {
          send(errorLine("", "unsupported version"));
          info(`rejected hello with version ${msg.version}`);
          return;
        }
        greeted = true;
        send(readyLine(`segmenter-adapter/${options.strategy}`, ["bbox", "mask", "prior"]));
        info(`ready (strategy=${options.strategy})`);
        return;
      }
      if (msg.type === "bye") {
        info("bye received, exiting");
        rl.close();
        resolve(0);
        return;
      }
      // segment
      if (!greeted) {
        send(errorLine(msg.case_id, "segment before handshake"));
        return;
      }
      try {
        const prediction = runStrategy(options.strategy, msg);
        fs.mkdirSync(msg.out_dir, { recursive: true });
        const maskPath = path.join(msg.out_dir, `${sanitize(msg.case_id)}_ext.nii`);
        writeMask(prediction.mask, maskPath);
        send(resultLine(msg.case_id, maskPath, prediction.confidence));
        info(`segmented ${msg.case_id} -> ${maskPath}`);
      } catch (err) {
        send(errorLine(msg.case_id, (err as Error).message));
        info(`request ${msg.case_id} failed: ${(err as Error).message}`);
      }
    });
  });
}
