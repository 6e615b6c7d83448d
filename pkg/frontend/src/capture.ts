// Media capture: microphone PCM and 1 fps camera frames.
//
// The browser glue (getUserMedia, AudioContext, canvas JPEG) lives in
// ui/main.ts; these classes hold the wire-facing logic so it runs headless:
// resample float samples to 16 kHz mono int16, batch into bodies of at
// least 4096 bits, and pace camera grabs at the target frame rate.

export const TARGET_RATE = 16000;
export const MIN_BODY_BYTES = 512; // 4096 bits

export type AudioBodySender = (body: Uint8Array, tMs: number) => void;
export type FrameSender = (jpeg: Uint8Array, tMs: number) => void;

function floatToInt16(v: number): number {
  const clamped = Math.max(-1, Math.min(1, v));
  return Math.round(clamped * 32767);
}

export class AudioStreamer {
  private pending: number[] = [];
  private sentSamples = 0;

  constructor(
    private send: AudioBodySender,
    private samplesPerBody = 1600, // 100 ms per message
  ) {
    if (samplesPerBody * 2 < MIN_BODY_BYTES) {
      throw new Error(`bodies must carry at least ${MIN_BODY_BYTES} bytes`);
    }
  }

  // Feed captured samples at the device rate; linear resampling to 16 kHz.
  push(samples: Float32Array, sourceRate: number): void {
    if (sourceRate === TARGET_RATE) {
      for (let i = 0; i < samples.length; i++) {
        this.pending.push(floatToInt16(samples[i]));
      }
    } else {
      const step = sourceRate / TARGET_RATE;
      const outLen = Math.floor(samples.length / step);
      for (let i = 0; i < outLen; i++) {
        const pos = i * step;
        const lo = Math.floor(pos);
        const hi = Math.min(lo + 1, samples.length - 1);
        const frac = pos - lo;
        this.pending.push(floatToInt16(samples[lo] * (1 - frac) + samples[hi] * frac));
      }
    }
    while (this.pending.length >= this.samplesPerBody) {
      this.emit(this.pending.splice(0, this.samplesPerBody));
    }
  }

  // Flush the remainder (mic muted or session closing).
  flush(): void {
    if (this.pending.length > 0) {
      this.emit(this.pending.splice(0));
    }
  }

  private emit(samples: number[]): void {
    const body = new Uint8Array(samples.length * 2);
    const view = new DataView(body.buffer);
    for (let i = 0; i < samples.length; i++) {
      view.setInt16(i * 2, samples[i], true); // PCM is little-endian
    }
    const tMs = Math.round((this.sentSamples * 1000) / TARGET_RATE);
    this.sentSamples += samples.length;
    this.send(body, tMs);
  }
}

export class FrameTicker {
  private nextTickMs = 0;
  frames = 0;

  constructor(
    private send: FrameSender,
    private fps = 1,
  ) {}

  // Call frequently (e.g. every animation frame); grabs one frame per tick.
  maybeCapture(nowMs: number, grab: () => Uint8Array | null): boolean {
    if (nowMs < this.nextTickMs) return false;
    const jpeg = grab();
    if (jpeg === null) return false; // camera not ready; retry next call
    this.send(jpeg, Math.round(nowMs));
    this.frames += 1;
    const period = 1000 / this.fps;
    while (this.nextTickMs <= nowMs) this.nextTickMs += period;
    return true;
  }
}
