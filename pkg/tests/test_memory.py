import math

import numpy as np
import pytest

from olive.backends.hashing import hashed_vector, token_key
from olive.backends.reference import ReferenceCompressor
from olive.errors import ConfigError
from olive.memory import (
    EMPTY_SNAPSHOT,
    MemoryBank,
    QuestionFeature,
    compress_clip,
    encode_question,
    export_memory,
    import_memory,
    init_short_term,
    integrate,
    retrieve,
)
from olive.perception import ClipFeatures


def e(i, c=8):
    v = np.zeros(c)
    v[i] = 1.0
    return v


def clip(index, features, t0=0, t1=1000, n=None):
    n = n if n is not None else features.shape[0]
    frames = features.shape[0] // n
    return ClipFeatures(
        clip_index=index,
        t_start_ms=t0,
        t_end_ms=t1,
        features=features,
        frame_times=tuple(t0 + i * 1000 for i in range(frames)),
        tokens_per_frame=n,
    )


class TestInitShortTerm:
    def test_two_tokens_to_one_is_their_mean(self):
        f = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = init_short_term(f, tokens_per_frame=2, p=1)
        assert out.tolist() == [[0.5, 0.5]]

    def test_p_equal_n_is_identity(self):
        f = np.random.default_rng(0).normal(size=(8, 4))
        assert np.array_equal(init_short_term(f, 4, 4), f)

    def test_matches_naive_group_mean_oracle(self):
        rng = np.random.default_rng(1)
        f = rng.normal(size=(3 * 16, 32))  # 3 frames, N=16
        out = init_short_term(f, 16, 4)
        # independent loop oracle
        expected = np.zeros((3 * 4, 32))
        for t in range(3):
            for p in range(4):
                group = [f[t * 16 + p * 4 + j] for j in range(4)]
                expected[t * 4 + p] = sum(group) / 4
        assert np.allclose(out, expected, atol=1e-12, rtol=0)

    def test_p_not_dividing_n_rejected(self):
        with pytest.raises(ConfigError):
            init_short_term(np.zeros((16, 4)), 16, 3)


class TestCompressClip:
    def test_uniform_basis_clip(self):
        f = np.tile(e(1), (8, 1))
        h0 = init_short_term(f, 4, 2)
        h, ghat, flags = compress_clip(f, h0, np.zeros(8), ReferenceCompressor())
        assert np.allclose(ghat, e(1), atol=1e-12)
        assert np.allclose(h, np.tile(e(1), (4, 1)), atol=1e-12)
        assert flags == ()

    def test_two_basis_halves(self):
        f = np.concatenate([np.tile(e(1), (4, 1)), np.tile(e(2), (4, 1))])
        h0 = init_short_term(f, 4, 2)
        _, ghat, _ = compress_clip(f, h0, np.zeros(8), ReferenceCompressor())
        expected = (e(1) + e(2)) / math.sqrt(2)  # mean then unit-normalize
        assert np.allclose(ghat, expected, atol=1e-12)

    def test_global_memory_unit_norm_property(self):
        rng = np.random.default_rng(2)
        backend = ReferenceCompressor()
        for _ in range(200):
            f = rng.normal(size=(8, 16))
            h0 = init_short_term(f, 4, 2)
            _, ghat, _ = compress_clip(f, h0, np.zeros(16), backend)
            assert abs(np.linalg.norm(ghat) - 1.0) <= 1e-9

    def test_backend_failure_degrades_and_flags(self):
        class Broken:
            def compress_clip(self, tokens, boundaries):
                raise RuntimeError("gone")

        f = np.tile(e(1), (8, 1))
        h0 = init_short_term(f, 4, 2)
        h, ghat, flags = compress_clip(f, h0, np.zeros(8), Broken())
        assert flags == ("degraded",)
        assert np.array_equal(h, h0)
        assert abs(np.linalg.norm(ghat) - 1.0) <= 1e-9


class TestIntegrate:
    def test_single_clip_degenerates_to_global(self):
        f = np.tile(e(1), (8, 1))
        backend = ReferenceCompressor()
        h0 = init_short_term(f, 4, 2)
        h, ghat, _ = compress_clip(f, h0, np.zeros(8), backend)
        rows = integrate([h], [ghat], backend)
        assert np.allclose(rows, ghat[None, :], atol=1e-12)

    def test_orthogonal_clips_direct_oracle(self):
        backend = ReferenceCompressor()
        shorts = [np.tile(e(i), (4, 1)) for i in (0, 1, 2)]
        globals_ = [e(i) for i in (0, 1, 2)]
        rows = integrate(shorts, globals_, backend)
        for i in range(3):
            assert np.allclose(rows[i], e(i), atol=1e-12)

    def test_permutation_permutes_rows(self):
        rng = np.random.default_rng(3)
        backend = ReferenceCompressor()
        shorts = [rng.normal(size=(4, 8)) for _ in range(5)]
        globals_ = [rng.normal(size=8) for _ in range(5)]
        rows = integrate(shorts, globals_, backend)
        perm = [3, 0, 4, 1, 2]
        permuted = integrate([shorts[i] for i in perm], [globals_[i] for i in perm], backend)
        assert np.allclose(permuted, rows[perm], atol=0)


class TestEncodeQuestion:
    def test_single_token_is_its_hash_vector(self):
        lt = np.zeros((0, 16))
        qf = encode_question(lt, "umbrella", ReferenceCompressor())
        assert np.array_equal(qf.q, hashed_vector(token_key("umbrella"), 16))

    def test_purity(self):
        lt = np.zeros((2, 16))
        a = encode_question(lt, "what is this", ReferenceCompressor())
        b = encode_question(lt, "what is this", ReferenceCompressor())
        assert a.q.tobytes() == b.q.tobytes()

    def test_multi_token_matches_recompute_oracle(self):
        lt = np.zeros((0, 16))
        qf = encode_question(lt, "How about the weather today?", ReferenceCompressor())
        vecs = [
            hashed_vector(token_key(t), 16)
            for t in ("how", "about", "the", "weather", "today")
        ]
        mean = sum(vecs) / len(vecs)
        assert np.allclose(qf.q, mean / np.linalg.norm(mean), atol=1e-12)

    def test_empty_question_rejected(self):
        with pytest.raises(ValueError):
            encode_question(np.zeros((0, 16)), "", ReferenceCompressor())


def bank_with_globals(globals_,
                      t_ends=None, backend=None, **kwargs):
    backend = backend or ReferenceCompressor()
    bank = MemoryBank(tokens_per_frame=4, p=2, backend=backend, **kwargs)
    for i, g in enumerate(globals_):
        t0 = i * 1000
        t1 = t_ends[i] if t_ends else t0 + 900
        features = np.tile(np.asarray(g, dtype=np.float64), (4, 1))
        bank.ingest_clip(clip(i, features, t0, t1))
    return bank


class TestRetrieve:
    def test_exact_match_wins(self):
        bank = bank_with_globals([e(1), e(2)])
        result = retrieve(QuestionFeature(e(2), "q"), bank.live_view(), top_k=1)
        assert len(result) == 1
        hit = result.hits[0]
        assert hit.clip_index == 1 and abs(hit.score - 1.0) <= 1e-9

    def test_orthogonal_query_ties_break_by_index(self):
        bank = bank_with_globals([e(1), e(2), e(3)])
        q = QuestionFeature(e(5), "q")
        result = retrieve(q, bank.live_view(), top_k=2)
        assert [h.clip_index for h in result.hits] == [0, 1]
        assert all(abs(h.score) <= 1e-12 for h in result.hits)

    def test_empty_bank_sets_no_memory_flag(self):
        result = retrieve(QuestionFeature(e(1), "q"), EMPTY_SNAPSHOT, top_k=3)
        assert result.no_memory and len(result) == 0

    def test_matches_brute_force_oracle_on_random_banks(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            k = int(rng.integers(1, 32))
            c = int(rng.integers(2, 24))
            globals_ = [v / np.linalg.norm(v) for v in rng.normal(size=(k, c))]
            bank = bank_with_globals(globals_)
            view = bank.live_view()
            q = rng.normal(size=c)
            top_k = int(rng.integers(1, 8))
            got = [h.clip_index for h in retrieve(QuestionFeature(q, "q"), view, top_k)]
            # brute force: full stable sort on (score desc, index asc)
            scores = []
            for j, rec in enumerate(view.records):
                num = float(np.dot(q, rec.global_mem))
                den = float(np.linalg.norm(q) * np.linalg.norm(rec.global_mem))
                scores.append((j, num / den if den else 0.0))
            expected = [j for j, _ in sorted(scores, key=lambda t: (-t[1], t[0]))][:top_k]
            assert got == expected

    def test_score_bounds(self):
        rng = np.random.default_rng(5)
        globals_ = [v / np.linalg.norm(v) for v in rng.normal(size=(16, 8))]
        bank = bank_with_globals(globals_)
        for _ in range(20):
            q = rng.normal(size=8)
            for hit in retrieve(QuestionFeature(q, "q"), bank.live_view(), 16):
                assert -1.0 - 1e-12 <= hit.score <= 1.0 + 1e-12

    def test_recency_bonus_prefers_latest(self):
        bank = bank_with_globals([e(1), e(2), e(3)])
        q = QuestionFeature(e(1), "what is this")  # cosine favors clip 0
        plain = retrieve(q, bank.live_view(), 1)
        assert plain.hits[0].clip_index == 0
        biased = retrieve(q, bank.live_view(), 1, recency_bonus=8.0)
        assert biased.hits[0].clip_index == 2
        # the pure cosine is still reported alongside the biased score
        assert biased.hits[0].cosine <= biased.hits[0].score


class TestSnapshots:
    def test_backup_excludes_later_clips(self):
        bank = bank_with_globals([e(1), e(2)], t_ends=[900, 1900])
        snap = bank.snapshot(t_ms=5000)
        features = np.tile(e(3), (4, 1))
        bank.ingest_clip(clip(2, features, 5500, 6000))
        result = retrieve(QuestionFeature(e(3), "q"), snap, top_k=3)
        assert all(h.clip_index != 2 for h in result.hits)
        live = retrieve(QuestionFeature(e(3), "q"), bank.live_view(), top_k=3)
        assert live.hits[0].clip_index == 2

    def test_two_backups_are_distinct(self):
        bank = bank_with_globals([e(1)], t_ends=[900])
        s1 = bank.snapshot(1000)
        bank.ingest_clip(clip(1, np.tile(e(2), (4, 1)), 1500, 2500))
        s2 = bank.snapshot(3000)
        assert s1.clip_count == 1 and s2.clip_count == 2
        assert bank.restore_for_grounding(1000).snapshot_t_ms == 1000
        assert bank.restore_for_grounding(3500).snapshot_t_ms == 3000

    def test_restore_without_backup_is_cold_start(self):
        bank = bank_with_globals([e(1)])
        snap = bank.restore_for_grounding(100)
        assert snap.clip_count == 0

    def test_snapshot_immutable_under_ingestion(self):
        bank = bank_with_globals([e(1), e(2)], t_ends=[900, 1900])
        snap = bank.snapshot(2000)
        before = snap.content_hash()
        rng = np.random.default_rng(6)
        for i in range(100):
            g = rng.normal(size=8)
            features = np.tile(g / np.linalg.norm(g), (4, 1))
            bank.ingest_clip(clip(2 + i, features, 3000 + i * 1000, 3900 + i * 1000))
        assert snap.content_hash() == before

    def test_snapshot_filters_clips_ending_after_its_time(self):
        bank = bank_with_globals([e(1), e(2)], t_ends=[900, 1900])
        snap = bank.snapshot(1000)
        assert [r.clip_index for r in snap.records] == [0]
        assert snap.long_term.shape == (1, 8)

    def test_snapshot_retention_evicts_oldest(self):
        bank = bank_with_globals([e(1)], max_snapshots=3)
        for t in (1000, 2000, 3000, 4000):
            bank.snapshot(t)
        assert bank.restore_for_grounding(1500).clip_count == 0  # t=1000 evicted


class TestShapesAndWindowing:
    def test_shape_conservation_every_step(self):
        rng = np.random.default_rng(7)
        bank = MemoryBank(tokens_per_frame=4, p=2, backend=ReferenceCompressor(),
                          window_clips=3)
        for i in range(8):
            features = rng.normal(size=(2 * 4, 6))  # 2 frames
            bank.ingest_clip(clip(i, features, i * 1000, i * 1000 + 900, n=4))
            record = bank.records[-1]
            assert record.short_term.shape == (2 * 2, 6)
            assert record.global_mem.shape == (6,)
            assert bank.long_term.shape == (i + 1, 6)

    def test_windowed_rows_match_full_recompute_for_reference(self):
        # the reference rule is per-clip, so windowing is invisible
        rng = np.random.default_rng(8)
        bank = MemoryBank(4, 2, ReferenceCompressor(), window_clips=2)
        shorts = []
        for i in range(6):
            features = rng.normal(size=(4, 6))
            bank.ingest_clip(clip(i, features, i * 1000, i * 1000 + 900))
            shorts.append(bank.records[-1].short_term)
        full = integrate(shorts, [r.global_mem for r in bank.records],
                         ReferenceCompressor())
        assert np.allclose(bank.long_term, full, atol=1e-12)

    def test_frame_refs_bounded_and_spread(self):
        bank = MemoryBank(4, 2, ReferenceCompressor(), frame_refs_per_clip=4)
        features = np.zeros((16 * 4, 6))
        c = ClipFeatures(0, 0, 15000, features, tuple(range(0, 16000, 1000)), 4)
        record = bank.ingest_clip(c)
        assert record.frame_refs == (0, 5000, 10000, 15000)
        assert record.features is None  # raw features evicted after compression


class TestPersistence:
    def test_round_trip(self, tmp_path):
        bank = bank_with_globals([e(1), e(2), e(3)])
        view = bank.live_view()
        export_memory(view, tmp_path / "mem")
        loaded = import_memory(tmp_path / "mem")
        assert loaded.clip_count == 3
        for a, b in zip(view.records, loaded.records):
            assert a.clip_index == b.clip_index
            assert a.frame_refs == b.frame_refs
            assert np.allclose(a.short_term, b.short_term, atol=1e-6)
            assert np.allclose(a.global_mem, b.global_mem, atol=1e-6)
        assert np.allclose(view.long_term, loaded.long_term, atol=1e-6)

    def test_format_tag_checked(self, tmp_path):
        bank = bank_with_globals([e(1)])
        export_memory(bank.live_view(), tmp_path / "mem")
        manifest = tmp_path / "mem" / "manifest.json"
        manifest.write_text(manifest.read_text().replace("omnimem/1", "other/9"))
        with pytest.raises(ValueError):
            import_memory(tmp_path / "mem")
