import { describe, expect, it } from "vitest";

import { LoggingSink, PlaybackQueue } from "../src/playback";

function pcm(fill: number): Int16Array {
  return new Int16Array(256).fill(fill);
}

describe("interrupt-and-discard playback", () => {
  it("discards all pending frames on interrupt (acceptance: UI interrupt-discard)", () => {
    const sink = new LoggingSink();
    const queue = new PlaybackQueue(sink);
    // stub server feeds 5 audio frames, then an interrupt
    for (let seq = 0; seq < 5; seq++) queue.enqueue(seq, seq * 16, pcm(seq));
    expect(queue.pending).toBe(5);
    queue.interrupt(1);
    sink.drain(queue);
    expect(sink.played).toHaveLength(0); // none of the 5 reach the output
    expect(sink.stops).toBe(1);
    // new-generation frames after the interrupt all appear
    for (let seq = 0; seq < 3; seq++) queue.enqueue(seq, seq * 16, pcm(100 + seq));
    sink.drain(queue);
    expect(sink.played.map((f) => f.pcm[0])).toEqual([100, 101, 102]);
    expect(sink.played.every((f) => f.generation >= 1)).toBe(true);
  });

  it("never plays a stale-generation frame after its interrupt", () => {
    const sink = new LoggingSink();
    const queue = new PlaybackQueue(sink);
    queue.enqueue(0, 0, pcm(1));
    sink.drain(queue, 1); // first frame reaches the speaker pre-interrupt
    queue.enqueue(1, 16, pcm(2));
    queue.enqueue(2, 32, pcm(3));
    queue.interrupt(1);
    queue.enqueue(0, 0, pcm(9)); // next answer
    sink.drain(queue);
    const playedAfterInterrupt = sink.played.slice(1);
    expect(playedAfterInterrupt.every((f) => f.generation >= 1)).toBe(true);
    expect(sink.played.map((f) => f.pcm[0])).toEqual([1, 9]);
  });

  it("interrupt with an empty buffer is a no-op besides the stop", () => {
    const sink = new LoggingSink();
    const queue = new PlaybackQueue(sink);
    queue.interrupt(1);
    sink.drain(queue);
    expect(sink.played).toHaveLength(0);
    expect(queue.pending).toBe(0);
  });

  it("frames queue and play in seq order", () => {
    const sink = new LoggingSink();
    const queue = new PlaybackQueue(sink);
    for (let seq = 0; seq < 4; seq++) queue.enqueue(seq, seq * 16, pcm(seq));
    sink.drain(queue);
    expect(sink.played.map((f) => f.seq)).toEqual([0, 1, 2, 3]);
  });

  it("generation counter follows the interrupt payload", () => {
    const sink = new LoggingSink();
    const queue = new PlaybackQueue(sink);
    expect(queue.currentGeneration).toBe(0);
    queue.interrupt(4);
    expect(queue.currentGeneration).toBe(4);
    queue.interrupt(2); // never regresses
    expect(queue.currentGeneration).toBe(5);
  });
});
