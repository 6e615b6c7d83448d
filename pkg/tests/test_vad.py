"""VAD segmentation is checked against an offline oracle that scans the raw
sample array with the same onset/hangover rules through independent code."""

import numpy as np
import pytest

from conftest import silence_pcm, tone_pcm
from olive.errors import SequencingError, SessionFaultedError
from olive.ingest import CHUNK_MS, chunk_audio
from olive.vad import Phase, VadConfig, VoiceDetector, VoiceEnd, VoiceStart


def oracle_scan(pcm: bytes, cfg: VadConfig):
    """Independent segmentation: window the samples, threshold RMS, apply
    onset/hangover debouncing. Returns [(start_ms, end_ms), ...]."""
    samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64)
    n_windows = len(samples) // 256
    voiced = []
    for w in range(n_windows):
        window = samples[w * 256 : (w + 1) * 256]
        voiced.append(np.sqrt(np.mean(window**2)) >= cfg.energy_threshold)
    onset_w = cfg.onset_min_ms // CHUNK_MS
    hang_w = cfg.hangover_ms // CHUNK_MS
    max_w = cfg.max_segment_ms // CHUNK_MS
    segments = []
    state = "silence"
    start = run = trail = 0
    for w, v in enumerate(voiced):
        if state == "silence":
            if v:
                state, start, run = "candidate", w, 1
                if run >= onset_w:
                    state = "speech"
        elif state == "candidate":
            if v:
                run += 1
                if run >= onset_w:
                    state = "speech"
            else:
                state = "silence"
        elif state == "speech":
            if not v:
                state, trail = "trailing", 1
                if trail >= hang_w:
                    segments.append((start, w + 1))
                    state = "silence"
        elif state == "trailing":
            if v:
                state = "speech"
            else:
                trail += 1
                if trail >= hang_w:
                    segments.append((start, w + 1))
                    state = "silence"
        if state in ("speech", "trailing") and (w + 1 - start) >= max_w:
            segments.append((start, w + 1))
            state = "silence"
    return [(s * CHUNK_MS, e * CHUNK_MS) for s, e in segments]


def run_detector(pcm: bytes, cfg: VadConfig):
    detector = VoiceDetector(cfg)
    events = []
    for chunk in chunk_audio(pcm, "s"):
        events.extend(detector.process_chunk(chunk))
    return events


CFG = VadConfig(energy_threshold=1000.0, onset_min_ms=64, hangover_ms=256,
                max_segment_ms=30000)


def test_all_zero_input_stays_silent():
    detector = VoiceDetector(CFG)
    for chunk in chunk_audio(silence_pcm(2000), "s"):
        assert detector.process_chunk(chunk) == []
    assert detector.state.phase is Phase.SILENCE


def test_spec_synthetic_burst_times():
    pcm = silence_pcm(500) + tone_pcm(400, amplitude=32000) + silence_pcm(500)
    events = run_detector(pcm, CFG)
    starts = [e for e in events if isinstance(e, VoiceStart)]
    ends = [e for e in events if isinstance(e, VoiceEnd)]
    assert len(starts) == 1 and len(ends) == 1
    assert abs(starts[0].t_ms - 500) <= CHUNK_MS
    assert abs(ends[0].segment.t_end_ms - (900 + 256)) <= CHUNK_MS
    # and the oracle agrees exactly
    oracle = oracle_scan(pcm, CFG)
    assert oracle == [(starts[0].t_ms, ends[0].segment.t_end_ms)]


def test_three_bursts_three_pairs_in_order():
    pcm = b""
    for _ in range(3):
        pcm += silence_pcm(500) + tone_pcm(400, amplitude=32000)
    pcm += silence_pcm(500)
    events = run_detector(pcm, CFG)
    kinds = [type(e).__name__ for e in events]
    assert kinds == ["VoiceStart", "VoiceEnd"] * 3
    got = [
        (s.t_ms, e.segment.t_end_ms)
        for s, e in zip(events[0::2], events[1::2])
    ]
    assert got == oracle_scan(pcm, CFG)


def test_random_amplitude_streams_match_oracle():
    rng = np.random.default_rng(5)
    for trial in range(25):
        n_chunks = int(rng.integers(10, 120))
        pcm = b""
        for _ in range(n_chunks):
            amp = int(rng.choice([0, 300, 5000, 20000]))
            pcm += tone_pcm(CHUNK_MS, amplitude=amp) if amp else silence_pcm(CHUNK_MS)
        events = run_detector(pcm, CFG)
        kinds = [type(e).__name__ for e in events]
        # events alternate start/end with no repeats
        for i, k in enumerate(kinds):
            assert k == ("VoiceStart" if i % 2 == 0 else "VoiceEnd")
        closed = [
            (s.t_ms, e.segment.t_end_ms) for s, e in zip(events[0::2], events[1::2])
        ]
        oracle = oracle_scan(pcm, CFG)
        # an unterminated trailing segment stays open in the detector
        assert closed == oracle[: len(closed)]


def test_determinism_bitwise():
    pcm = b""
    for _ in range(3):
        pcm += silence_pcm(500) + tone_pcm(400, amplitude=32000)
    runs = []
    for _ in range(2):
        events = run_detector(pcm, CFG)
        runs.append(
            [
                (type(e).__name__, getattr(e, "t_ms", None),
                 e.segment.samples if isinstance(e, VoiceEnd) else None,
                 e.segment.t_end_ms if isinstance(e, VoiceEnd) else None)
                for e in events
            ]
        )
    assert runs[0] == runs[1]


def test_segment_integrity_is_input_slice():
    pcm = silence_pcm(512) + tone_pcm(400, amplitude=32000) + silence_pcm(512)
    events = run_detector(pcm, CFG)
    seg = next(e.segment for e in events if isinstance(e, VoiceEnd))
    start_byte = seg.t_start_ms * 32  # 16 kHz * 2 bytes / ms
    end_byte = seg.t_end_ms * 32
    assert seg.samples == pcm[start_byte:end_byte]


def test_out_of_order_seq_faults_session():
    detector = VoiceDetector(CFG)
    chunks = chunk_audio(silence_pcm(64), "s")
    detector.process_chunk(chunks[0])
    with pytest.raises(SequencingError):
        detector.process_chunk(chunks[2])
    with pytest.raises(SessionFaultedError):
        detector.process_chunk(chunks[1])


def test_max_segment_forces_closure():
    cfg = VadConfig(energy_threshold=1000.0, onset_min_ms=32, hangover_ms=64,
                    max_segment_ms=320)
    pcm = tone_pcm(960, amplitude=32000)
    events = run_detector(pcm, cfg)
    ends = [e for e in events if isinstance(e, VoiceEnd)]
    assert len(ends) >= 2
    assert all(e.segment.duration_ms <= 320 for e in ends)
    assert oracle_scan(pcm, cfg)[: len(ends)] == [
        (e.segment.t_start_ms, e.segment.t_end_ms) for e in ends
    ]


def test_flush_closes_open_episode():
    detector = VoiceDetector(CFG)
    for chunk in chunk_audio(silence_pcm(500) + tone_pcm(400, amplitude=32000), "s"):
        detector.process_chunk(chunk)
    events = detector.flush()
    assert len(events) == 1 and isinstance(events[0], VoiceEnd)
    assert detector.state.phase is Phase.SILENCE


def test_config_granularity_validated():
    with pytest.raises(ValueError):
        VadConfig(onset_min_ms=30).validate()
    with pytest.raises(ValueError):
        VadConfig(energy_threshold=0).validate()
