/** Message shapes for the JSON-lines gateway protocol (version 1). */

export const PROTOCOL_VERSION = 1;

export interface HelloMessage {
  type: "hello";
  version: number;
}

export interface SegmentMessage {
  type: "segment";
  case_id: string;
  inputs: {
    current: string;
    prior: string | null;
    prior_mask: string | null;
  };
  prompts: {
    /** zero-based, min inclusive, max exclusive: [x0,y0,z0,x1,y1,z1] */
    bbox: [number, number, number, number, number, number] | null;
    mask: string | null;
  };
  out_dir: string;
}

export interface ByeMessage {
  type: "bye";
}

export type Incoming = HelloMessage | SegmentMessage | ByeMessage;

export function parseIncoming(line: string): Incoming {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch {
    throw new Error(`invalid JSON: ${line.slice(0, 120)}`);
  }
  if (typeof doc !== "object" || doc === null || !("type" in doc)) {
    throw new Error("message has no type field");
  }
  const msg = doc as Record<string, unknown>;
  switch (msg.type) {
    case "hello":
      if (typeof msg.version !== "number") throw new Error("hello without version");
      return msg as unknown as HelloMessage;
    case "bye":
      return { type: "bye" };
    case "segment": {
      const m = msg as unknown as SegmentMessage;
      if (typeof m.case_id !== "string") throw new Error("segment without case_id");
      if (!m.inputs || typeof m.inputs.current !== "string") {
        throw new Error("segment without inputs.current");
      }
      if (!m.prompts) throw new Error("segment without prompts");
      if (typeof m.out_dir !== "string") throw new Error("segment without out_dir");
      if (m.prompts.bbox !== null && (!Array.isArray(m.prompts.bbox) || m.prompts.bbox.length !== 6)) {
        throw new Error("prompts.bbox must be null or [x0,y0,z0,x1,y1,z1]");
      }
      return m;
    }
    default:
      throw new Error(`unknown message type ${String(msg.type)}`);
  }
}

export function readyLine(name: string, capabilities: string[]): string {
  return JSON.stringify({ type: "ready", name, capabilities });
}

export function resultLine(caseId: string, maskPath: string, confidence: number): string {
  return JSON.stringify({
    type: "result",
    case_id: caseId,
    mask: maskPath,
    confidence,
  });
}

export function errorLine(caseId: string, message: string): string {
  return JSON.stringify({ type: "error", case_id: caseId, message });
}
