// Gateway client: handshake, outbound media framing, inbound routing.
//
// The socket is injected behind a minimal interface so tests drive the
// client with an in-process stub; ui/main.ts passes a real WebSocket.

import { AudioStreamer, FrameTicker } from "./capture";
import { PlaybackQueue, type AudioSink } from "./playback";
import {
  KIND_AUDIO_IN,
  KIND_AUDIO_OUT,
  KIND_FRAME_IN,
  PROTOCOL_VERSION,
  byeMessage,
  decodeBinary,
  encodeBinary,
  helloMessage,
  parseJson,
  type JsonMessage,
  type Profile,
} from "./wire";

export interface SocketLike {
  send(data: string | Uint8Array): void;
  close(): void;
}

export interface ClientEvents {
  onReady?(profile: Profile): void;
  onTranscript?(payload: Record<string, unknown>): void;
  onAnswer?(payload: Record<string, unknown>): void;
  onStatus?(payload: Record<string, unknown>): void;
  onInterrupt?(generation: number): void;
  onClose?(reason: string): void;
}

export const RECONNECT_MIN_MS = 5000; // never retry faster than this

export type ClientState = "connecting" | "live" | "closed";

export class GatewayClient {
  readonly playback: PlaybackQueue;
  readonly audio: AudioStreamer;
  readonly frames: FrameTicker;
  state: ClientState = "connecting";
  micOpen = true; // open-mic by default; push-to-talk toggles this
  private audioSeq = 0;
  private frameSeq = 0;

  constructor(
    private socket: SocketLike,
    private session: string,
    sink: AudioSink,
    private events: ClientEvents = {},
    private profile?: Profile,
  ) {
    this.playback = new PlaybackQueue(sink);
    this.audio = new AudioStreamer((body, tMs) => {
      if (this.state === "live" && this.micOpen) {
        this.socket.send(
          encodeBinary({ kind: KIND_AUDIO_IN, seq: this.audioSeq++, tMs, body }),
        );
      }
    });
    this.frames = new FrameTicker((jpeg, tMs) => {
      if (this.state === "live") {
        this.socket.send(
          encodeBinary({ kind: KIND_FRAME_IN, seq: this.frameSeq++, tMs, body: jpeg }),
        );
      }
    });
  }

  start(): void {
    this.socket.send(JSON.stringify(helloMessage(this.session, this.profile)));
  }

  stop(reason = "user"): void {
    if (this.state !== "closed") {
      this.audio.flush();
      this.socket.send(JSON.stringify(byeMessage(this.session, reason)));
    }
  }

  handleMessage(data: string | Uint8Array): void {
    try {
      if (typeof data === "string") {
        this.handleJson(parseJson(data));
      } else {
        const frame = decodeBinary(data);
        if (frame.kind === KIND_AUDIO_OUT) {
          const pcm = new Int16Array(
            frame.body.buffer.slice(
              frame.body.byteOffset,
              frame.body.byteOffset + frame.body.byteLength,
            ),
          );
          this.playback.enqueue(frame.seq, frame.tMs, pcm);
        }
      }
    } catch (err) {
      // a malformed frame is skipped, never fatal to the session
      this.events.onStatus?.({ status: "decode_error", detail: String(err) });
    }
  }

  private handleJson(message: JsonMessage): void {
    switch (message.type) {
      case "ready":
        this.state = "live";
        this.events.onReady?.(message.payload.profile as Profile);
        break;
      case "interrupt": {
        const generation = Number(message.payload.generation ?? 0);
        this.playback.interrupt(generation);
        this.events.onInterrupt?.(generation);
        break;
      }
      case "transcript":
        this.events.onTranscript?.(message.payload);
        break;
      case "answer":
        this.events.onAnswer?.(message.payload);
        break;
      case "status":
        this.events.onStatus?.(message.payload);
        break;
      case "bye":
        this.state = "closed";
        this.events.onClose?.(String(message.payload.reason ?? ""));
        this.socket.close();
        break;
      default:
        // servers never send hello; ignore unknowns to stay forward-compatible
        break;
    }
  }
}

export { PROTOCOL_VERSION };
