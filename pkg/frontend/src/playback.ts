// Answer-audio playback with interrupt-and-discard semantics.
//
// Inbound audio frames queue in seq order, tagged with the generation
// current at arrival. An interrupt discards every pending frame of the
// interrupted generation (and stops whatever is sounding); frames of a
// newer generation play normally. The sink is pull-based so headless
// tests can substitute a logging sink for the speaker.

export interface PlaybackFrame {
  seq: number;
  tMs: number;
  pcm: Int16Array;
  generation: number;
}

export interface AudioSink {
  // called when frames become available or after an interrupt; the sink
  // pulls frames from the queue at its own pace
  wake(queue: PlaybackQueue): void;
  // stop whatever is currently sounding (barge-in)
  stop(): void;
}

export class PlaybackQueue {
  private buffer: PlaybackFrame[] = [];
  private generation = 0;
  playing = false;

  constructor(private sink: AudioSink) {}

  get currentGeneration(): number {
    return this.generation;
  }

  get pending(): number {
    return this.buffer.length;
  }

  enqueue(seq: number, tMs: number, pcm: Int16Array): void {
    this.buffer.push({ seq, tMs, pcm, generation: this.generation });
    this.sink.wake(this);
  }

  // Interrupt: discard the pending buffer and silence the current source.
  // Everything buffered was received before this message (in-order socket),
  // so it all belongs to generations <= the interrupted one.
  interrupt(generation: number): void {
    this.generation = Math.max(this.generation + 1, generation);
    this.buffer = this.buffer.filter((f) => f.generation >= this.generation);
    this.playing = false;
    this.sink.stop();
    if (this.buffer.length > 0) this.sink.wake(this);
  }

  pull(): PlaybackFrame | null {
    const frame = this.buffer.shift();
    if (frame === undefined) {
      this.playing = false;
      return null;
    }
    this.playing = true;
    return frame;
  }
}

// Test sink: records everything that reaches the audio output. It never
// pulls on its own; the test advances playback explicitly with drain(),
// standing in for the wall time a real speaker would take.
export class LoggingSink implements AudioSink {
  played: PlaybackFrame[] = [];
  wakes = 0;
  stops = 0;

  wake(_queue: PlaybackQueue): void {
    this.wakes += 1;
  }

  stop(): void {
    this.stops += 1;
  }

  drain(queue: PlaybackQueue, maxFrames = Infinity): void {
    for (let i = 0; i < maxFrames; i++) {
      const frame = queue.pull();
      if (frame === null) return;
      this.played.push(frame);
    }
  }
}
