import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcache.dispatcher import (DispatchDecision, LatencyParams, Mode, SimulatedGenerator, Thresholds,
                                 composite_score, decide, execute, gpu_seconds, request_latency)
from semcache.embedding import Embedding, Modality, cosine_similarity
from semcache.errors import BackendFailure, InvalidParameter
from semcache.payloads import MemoryPayloadStore
from semcache.store import Shard

from conftest import basis, entry, random_shard, unit

EPS = 1e-9


def at_score(eid, c, dim=4):
    """Entry whose image and text cosines to basis(0) are both exactly ``c``."""
    v = np.zeros(dim)
    v[0], v[1] = c, np.sqrt(1.0 - c * c)
    return entry(eid, Embedding(v, Modality.IMAGE), Embedding(v))


def shard_with(*entries, dim=4):
    s = Shard("n", dim)
    for e in entries:
        s.insert(e)
    return s


def eq8_oracle(mode, p):
    x = 1 if mode == "return_cached" else 0
    y = 1 if mode == "image_to_image" else 0
    z = 1 if mode == "text_to_image" else 0
    return p.t_retrieve + x * p.t_return + y * (p.t_noise + p.K * p.t_step) + z * p.N * p.t_step


def test_latency_worked_examples():
    assert request_latency(Mode.RETURN_CACHED, LatencyParams(t_retrieve=0.1, t_return=0.05)) == pytest.approx(0.15)
    t2i = request_latency(Mode.TEXT_TO_IMAGE, LatencyParams(t_retrieve=0.1, N=50, t_step=0.0448))
    assert t2i == pytest.approx(2.34, abs=1e-12)
    i2i = request_latency(Mode.IMAGE_TO_IMAGE, LatencyParams(t_retrieve=0.1, t_noise=0.05, K=20, t_step=0.0448))
    assert i2i == pytest.approx(1.046, abs=1e-12)


@settings(max_examples=200)
@given(st.sampled_from([m.value for m in Mode]),
       st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 1),
       st.integers(0, 99), st.integers(1, 100))
def test_latency_matches_formula(mode, t_ret, t_rtn, t_noise, t_step, K, extra):
    p = LatencyParams(t_ret, t_rtn, t_noise, t_step, K, K + extra)
    assert request_latency(mode, p) == eq8_oracle(mode, p)
    assert gpu_seconds(mode, p) == pytest.approx(eq8_oracle(mode, p) - t_ret - (t_rtn if mode == "return_cached" else 0))


def test_flags_one_hot():
    for m in Mode:
        assert sum(m.flags) == 1 and set(m.flags) == {0, 1}


def test_latency_params_validation():
    with pytest.raises(InvalidParameter):
        LatencyParams(K=50, N=50)
    with pytest.raises(InvalidParameter):
        LatencyParams(t_step=-1)
    with pytest.raises(InvalidParameter):
        Thresholds(hi=0.4, lo=0.4)


def test_decision_needs_reference():
    with pytest.raises(InvalidParameter):
        DispatchDecision(Mode.IMAGE_TO_IMAGE, None, 0.45)


def test_composite_score_cases(rng):
    v = basis(0, 4)
    assert composite_score(v, entry(1, v.values)) == 1.0
    assert composite_score(v, entry(1, basis(2, 4).values, basis(3, 4).values)) == 0.0
    e = entry(2, rng.standard_normal(4), rng.standard_normal(4))
    q = unit(rng.standard_normal(4))
    oracle = (float(np.dot(q.values, e.image_vec.values)) + float(np.dot(q.values, e.text_vec.values))) / 2
    assert composite_score(q, e) == pytest.approx(oracle, abs=1e-12)


def test_decide_basic_branches():
    v = basis(0, 4)
    assert decide(v, shard_with(entry(1, v.values))).mode == Mode.RETURN_CACHED
    empty = decide(v, Shard("n", 4))
    assert empty.mode == Mode.TEXT_TO_IMAGE and empty.reference_id is None
    d = decide(v, shard_with(at_score(4, 0.45), at_score(5, 0.2)))
    assert (d.mode, d.reference_id) == (Mode.IMAGE_TO_IMAGE, 4)
    assert d.best_score == pytest.approx(0.45, abs=1e-15)


@pytest.mark.parametrize("score, mode", [
    (0.5, Mode.IMAGE_TO_IMAGE),
    (0.4, Mode.IMAGE_TO_IMAGE),
    (0.5 + EPS, Mode.RETURN_CACHED),
    (0.4 - EPS, Mode.TEXT_TO_IMAGE),
])
def test_threshold_boundaries(score, mode):
    e = at_score(1, score)
    assert composite_score(basis(0, 4), e) == score
    assert decide(basis(0, 4), shard_with(e)).mode == mode


def test_decide_tie_prefers_smaller_id():
    d = decide(basis(0, 4), shard_with(at_score(9, 0.45), at_score(3, 0.45)))
    assert d.reference_id == 3


def test_decide_uses_custom_scorer():
    class Fixed:
        def score(self, prompt, prompt_vec, e):
            return (0.9, 0.9) if e.id == 2 else (0.0, 0.0)

    s = shard_with(entry(1, [1, 0, 0, 0]), entry(2, [0, 1, 0, 0]))
    d = decide(basis(0, 4), s, scorer=Fixed())
    assert (d.mode, d.reference_id) == (Mode.RETURN_CACHED, 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decide_best_among_retrieved(seed):
    g = np.random.default_rng(seed)
    s = random_shard(g, 40, 8)
    q = unit(g.standard_normal(8))
    d = decide(q, s, k=5)
    scores = {eid: composite_score(q, s.get(eid)) for eid in s.dual_retrieve(q, 5)}
    best = max(scores.values())
    assert d.best_score == best
    assert sum(d.flags) == 1
    if d.reference_id is not None:
        assert d.reference_id == min(e for e, v in scores.items() if v == best)


def test_execute_return_cached_counts_hit():
    s = shard_with(entry(1, [1, 0, 0, 0]))
    res = execute(DispatchDecision(Mode.RETURN_CACHED, 1, 1.0), "p", basis(0, 4), SimulatedGenerator(),
                  s, MemoryPayloadStore(), LatencyParams(), new_id=2, tick=5)
    assert s.get(1).hit_count == 1 and s.get(1).last_access == 5
    assert (res.payload_uri, res.entry_id, res.gpu_seconds, len(s)) == ("mem://e1", 1, 0.0, 1)


def test_execute_text_to_image_inserts():
    s, store = Shard("n", 4), MemoryPayloadStore()
    res = execute(DispatchDecision(Mode.TEXT_TO_IMAGE, None, -np.inf), "a cat", basis(0, 4),
                  SimulatedGenerator(), s, store, LatencyParams(), new_id=7)
    assert len(s) == 1 and s.get(7).caption == "a cat"
    assert store.exists(res.payload_uri)
    assert res.latency == request_latency(Mode.TEXT_TO_IMAGE, LatencyParams()) and res.steps == 50


def test_execute_deterministic():
    def once():
        s = shard_with(entry(1, [1, 0, 0, 0]))
        store = MemoryPayloadStore()
        res = execute(DispatchDecision(Mode.IMAGE_TO_IMAGE, 1, 0.45), "x", unit([1, 1, 0, 0]),
                      SimulatedGenerator(seed=3), s, store, LatencyParams(), new_id=2, seed=11)
        return store.get(res.payload_uri), res.latency, s.get(2).image_vec.values.tobytes()

    assert once() == once()


def test_img2img_output_leans_to_reference():
    gen = SimulatedGenerator(jitter=0.0)
    ref = entry(1, [0, 1, 0, 0])
    out = gen.image_to_image("p", basis(0, 4), ref, 20, 0)
    # reference keeps (50-20)/50 of the blend
    assert cosine_similarity(out.image_vec, ref.image_vec) > cosine_similarity(out.image_vec, basis(0, 4))


def test_backend_failure_wrapped():
    class Broken:
        simulated = True

        def text_to_image(self, *a):
            raise RuntimeError("gpu on fire")

    s = Shard("n", 4)
    with pytest.raises(BackendFailure):
        execute(DispatchDecision(Mode.TEXT_TO_IMAGE, None, 0.0), "p", basis(0, 4), Broken(), s,
                MemoryPayloadStore(), LatencyParams(), new_id=1)
    assert len(s) == 0
