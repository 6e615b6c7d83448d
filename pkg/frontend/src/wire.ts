// Wire protocol for the /ws/ol gateway socket.
//
// JSON text frames: {type, session, payload} with type in
// {hello, ready, interrupt, transcript, answer, status, bye}.
// Binary frames: 1-byte kind tag (0x01 audio-in, 0x02 frame-in,
// 0x11 audio-out) + 4-byte big-endian seq + 8-byte big-endian t_ms + body.

export const PROTOCOL_VERSION = "ol/1";

export const KIND_AUDIO_IN = 0x01;
export const KIND_FRAME_IN = 0x02;
export const KIND_AUDIO_OUT = 0x11;

const HEADER_BYTES = 13;
const KNOWN_KINDS = new Set([KIND_AUDIO_IN, KIND_FRAME_IN, KIND_AUDIO_OUT]);

export interface BinaryFrame {
  kind: number;
  seq: number;
  tMs: number;
  body: Uint8Array;
}

export function encodeBinary(frame: BinaryFrame): Uint8Array {
  if (!KNOWN_KINDS.has(frame.kind)) {
    throw new Error(`unknown binary kind 0x${frame.kind.toString(16)}`);
  }
  const out = new Uint8Array(HEADER_BYTES + frame.body.length);
  const view = new DataView(out.buffer);
  view.setUint8(0, frame.kind);
  view.setUint32(1, frame.seq, false);
  view.setBigUint64(5, BigInt(frame.tMs), false);
  out.set(frame.body, HEADER_BYTES);
  return out;
}

export function decodeBinary(data: Uint8Array): BinaryFrame {
  if (data.length < HEADER_BYTES) {
    throw new Error(`binary frame too short: ${data.length} bytes`);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const kind = view.getUint8(0);
  if (!KNOWN_KINDS.has(kind)) {
    throw new Error(`unknown binary kind 0x${kind.toString(16)}`);
  }
  return {
    kind,
    seq: view.getUint32(1, false),
    tMs: Number(view.getBigUint64(5, false)),
    body: data.slice(HEADER_BYTES),
  };
}

export interface Profile {
  t: number;
  n: number;
  p: number;
  c: number;
  sample_rate: number;
}

export interface JsonMessage {
  type: "hello" | "ready" | "interrupt" | "transcript" | "answer" | "status" | "bye";
  session: string;
  payload: Record<string, unknown>;
}

export function helloMessage(session: string, profile?: Profile): JsonMessage {
  const payload: Record<string, unknown> = { version: PROTOCOL_VERSION };
  if (profile) payload.profile = profile;
  return { type: "hello", session, payload };
}

export function byeMessage(session: string, reason = ""): JsonMessage {
  return { type: "bye", session, payload: { reason } };
}

export function parseJson(text: string): JsonMessage {
  const obj = JSON.parse(text);
  if (typeof obj !== "object" || obj === null || typeof obj.type !== "string") {
    throw new Error("malformed JSON frame");
  }
  return obj as JsonMessage;
}
