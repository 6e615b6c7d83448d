// Browser glue: getUserMedia capture, WebAudio playback, panes.

import { GatewayClient, RECONNECT_MIN_MS } from "../client";
import { TARGET_RATE } from "../capture";
import { PlaybackQueue, type AudioSink } from "../playback";

const WS_URL = `ws://${location.hostname}:8076/ws/ol`;
const FRAME_W = 640;
const FRAME_H = 480;

const el = (id: string) => document.getElementById(id)!;

function log(paneId: string, text: string, cls = ""): void {
  const div = document.createElement("div");
  div.className = `entry ${cls}`;
  div.textContent = text;
  el(paneId).prepend(div);
}

// WebAudio sink: schedules pulled frames back-to-back; stop() silences
// everything already scheduled (the queue has discarded the rest).
class WebAudioSink implements AudioSink {
  private ctx = new AudioContext();
  private nextStart = 0;
  private sources: AudioBufferSourceNode[] = [];

  wake(queue: PlaybackQueue): void {
    for (let frame = queue.pull(); frame !== null; frame = queue.pull()) {
      const buffer = this.ctx.createBuffer(1, frame.pcm.length, TARGET_RATE);
      const channel = buffer.getChannelData(0);
      for (let i = 0; i < frame.pcm.length; i++) channel[i] = frame.pcm[i] / 32768;
      const source = this.ctx.createBufferSource();
      source.buffer = buffer;
      source.connect(this.ctx.destination);
      const at = Math.max(this.ctx.currentTime, this.nextStart);
      source.start(at);
      this.nextStart = at + buffer.duration;
      this.sources.push(source);
      source.onended = () => {
        this.sources = this.sources.filter((s) => s !== source);
      };
    }
  }

  stop(): void {
    for (const source of this.sources) {
      try {
        source.stop();
      } catch {
        // already ended
      }
    }
    this.sources = [];
    this.nextStart = 0;
  }
}

let lastAttempt = 0;

async function connect(): Promise<void> {
  const now = Date.now();
  if (now - lastAttempt < RECONNECT_MIN_MS) return;
  lastAttempt = now;

  let media: MediaStream;
  try {
    media = await navigator.mediaDevices.getUserMedia({
      audio: { channelCount: 1, echoCancellation: true },
      video: { width: FRAME_W, height: FRAME_H },
    });
  } catch (err) {
    el("status").textContent = `media permission denied: ${err}`;
    return;
  }

  const video = el("preview") as HTMLVideoElement;
  video.srcObject = media;
  await video.play();

  const socket = new WebSocket(WS_URL);
  socket.binaryType = "arraybuffer";
  const session = `web-${Math.random().toString(36).slice(2, 10)}`;
  const client = new GatewayClient(socket, session, new WebAudioSink(), {
    onReady: () => {
      el("status").textContent = `live as ${session}`;
    },
    onTranscript: (p) => log("transcripts", `[${p.t_start_ms}ms] ${p.text}`),
    onAnswer: (p) => log("answers", `${p.question} -> ${p.answer}`, "answer"),
    onStatus: (p) => {
      if (p.status === "environment_sound") {
        log("transcripts", `(environment: ${p.detail})`, "env");
      } else {
        el("status").textContent = `status: ${p.status} ${p.detail ?? ""}`;
      }
    },
    onInterrupt: () => log("answers", "(playback interrupted)", "env"),
    onClose: (reason) => {
      el("status").textContent = `closed: ${reason}`;
    },
  });

  socket.onopen = () => client.start();
  socket.onmessage = (ev) =>
    client.handleMessage(
      typeof ev.data === "string" ? ev.data : new Uint8Array(ev.data as ArrayBuffer),
    );
  socket.onclose = () => {
    el("status").textContent = "disconnected";
  };

  // microphone -> 16 kHz PCM bodies
  const audioCtx = new AudioContext();
  const source = audioCtx.createMediaStreamSource(media);
  const processor = audioCtx.createScriptProcessor(4096, 1, 1);
  processor.onaudioprocess = (ev) => {
    client.audio.push(ev.inputBuffer.getChannelData(0), audioCtx.sampleRate);
  };
  source.connect(processor);
  processor.connect(audioCtx.destination);

  // camera -> 1 fps JPEG
  const canvas = document.createElement("canvas");
  canvas.width = FRAME_W;
  canvas.height = FRAME_H;
  const ctx2d = canvas.getContext("2d")!;
  const grabLoop = () => {
    client.frames.maybeCapture(performance.now(), () => {
      if (video.readyState < 2) return null;
      ctx2d.drawImage(video, 0, 0, FRAME_W, FRAME_H);
      const dataUrl = canvas.toDataURL("image/jpeg", 0.7);
      const b64 = dataUrl.slice(dataUrl.indexOf(",") + 1);
      const raw = atob(b64);
      const bytes = new Uint8Array(raw.length);
      for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
      return bytes;
    });
    if (client.state !== "closed") requestAnimationFrame(grabLoop);
  };
  requestAnimationFrame(grabLoop);

  const talk = el("talk") as HTMLButtonElement;
  talk.onclick = () => {
    client.micOpen = !client.micOpen;
    talk.textContent = client.micOpen ? "Mic: open" : "Mic: muted";
    talk.classList.toggle("muted", !client.micOpen);
  };
}

(el("connect") as HTMLButtonElement).onclick = () => void connect();
