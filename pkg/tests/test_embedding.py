import hashlib
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semcache.embedding import (Embedding, HashEmbedder, Modality, cosine_similarity, hash_embed, l2_normalize,
                                synth_clustered_embeddings, tokenize)
from semcache.errors import DimensionMismatch, EmptyInput, InvalidParameter, ZeroVector

from conftest import basis

# frozen from the reference construction (see _oracle_hash_embed)
RED_CAT_VS_OUTDOORS = 0.8187739508045384
RED_CAT_VS_AIRPLANE = 0.03067386351412115

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, 8, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-6)


def _oracle_hash_embed(text, seed, dim=512):
    acc = np.zeros(dim)
    for tok in text.lower().split():
        digest = hashlib.blake2b(f"{seed}\x00{tok}".encode(), digest_size=16).digest()
        g = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
        acc += g.integers(0, 2, size=dim) * 2.0 - 1.0
    return acc / np.linalg.norm(acc)


def test_normalize_unit_vector_unchanged():
    e = l2_normalize([1.0] + [0.0] * 7)
    assert e.values.tolist() == [1.0] + [0.0] * 7


def test_normalize_three_four_five():
    e = l2_normalize([3.0, 4.0, 0.0, 0.0])
    assert np.allclose(e.values, [0.6, 0.8, 0.0, 0.0], atol=1e-15)
    assert e.is_unit()


def test_normalize_zero_vector_rejected():
    with pytest.raises(ZeroVector):
        l2_normalize(np.zeros(8))
    with pytest.raises(ZeroVector):
        l2_normalize(np.full(8, 1e-14))


def test_cosine_basic_cases():
    v = l2_normalize(np.arange(1.0, 9.0))
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity(basis(0, 8), basis(1, 8)) == 0.0
    assert cosine_similarity(v, Embedding(-v.values)) == pytest.approx(-1.0, abs=1e-12)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        cosine_similarity(basis(0, 4), basis(0, 5))


def test_embedding_is_immutable_and_hashable():
    e = l2_normalize([1.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        e.values[0] = 5.0
    assert e == l2_normalize([1.0, 2.0, 2.0])
    assert len({e, l2_normalize([2.0, 4.0, 4.0])}) == 1
    assert e != Embedding(e.values, Modality.IMAGE)


@given(vectors)
def test_normalize_idempotent(v):
    once = l2_normalize(v)
    assert np.allclose(l2_normalize(once).values, once.values, atol=1e-9)


@given(vectors, st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(v, c):
    assert np.allclose(l2_normalize(c * v).values, l2_normalize(v).values, atol=1e-9)


@given(vectors, vectors)
def test_cosine_symmetric_exactly(a, b):
    ea, eb = l2_normalize(a), l2_normalize(b)
    assert cosine_similarity(ea, eb) == cosine_similarity(eb, ea)


def test_hash_embed_deterministic_and_unit():
    a = hash_embed("cat", Modality.TEXT, 7)
    b = hash_embed("cat", Modality.TEXT, 7)
    assert np.array_equal(a.values, b.values)
    assert a.is_unit() and a.dim == 512


def test_hash_embed_identical_text_cosine_one():
    a = hash_embed("a cat on a mat", Modality.TEXT, 3)
    assert cosine_similarity(a, hash_embed("a cat on a mat", Modality.TEXT, 3)) == pytest.approx(1.0, abs=1e-12)


def test_hash_embed_matches_reference_construction():
    for text in ("red cat", "a cat on a mat", "blue airplane"):
        assert np.allclose(hash_embed(text, Modality.TEXT, 7).values, _oracle_hash_embed(text, 7), atol=1e-15)


def test_hash_embed_shared_tokens_rank_higher():
    s = 7
    near = cosine_similarity(hash_embed("red cat", seed=s), hash_embed("red cat outdoors", seed=s))
    far = cosine_similarity(hash_embed("red cat", seed=s), hash_embed("blue airplane", seed=s))
    assert near == pytest.approx(RED_CAT_VS_OUTDOORS, abs=1e-12)
    assert far == pytest.approx(RED_CAT_VS_AIRPLANE, abs=1e-12)
    assert near > far


def test_hash_embed_seed_changes_vector():
    assert not np.array_equal(hash_embed("cat", seed=1).values, hash_embed("cat", seed=2).values)


def test_hash_embed_empty_rejected():
    with pytest.raises(EmptyInput):
        hash_embed("")
    with pytest.raises(EmptyInput):
        hash_embed("  ...  ")


def test_hash_embed_stable_across_processes():
    code = ("from semcache.embedding import hash_embed;"
            "print(repr(float(hash_embed('sunset over a lake', seed=11).values.sum())))")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
    assert float(out) == float(hash_embed("sunset over a lake", seed=11).values.sum())


def test_tokenize_strips_punctuation_and_case():
    assert tokenize("A Red, car; (parked)!") == ["a", "red", "car", "parked"]


def test_hash_embedder_image_vector_tracks_caption():
    emb = HashEmbedder(dim=256, seed=0, image_noise=0.5)
    txt = emb.embed_text("a red sports car")
    img = emb.embed_image("img/1.png", caption="a red sports car")
    other = emb.embed_image("img/2.png", caption="a red sports car")
    assert img.modality == Modality.IMAGE and img.is_unit()
    assert 0.5 < cosine_similarity(txt, img) < 1.0
    assert not np.array_equal(img.values, other.values)
    assert np.array_equal(img.values, emb.embed_image("img/1.png", caption="a red sports car").values)


def test_synth_zero_spread_limit():
    samples = synth_clustered_embeddings(1, 5, 1e-6, seed=0)
    vecs = [e for e, _ in samples]
    assert min(cosine_similarity(a, b) for a in vecs for b in vecs) > 0.999


def test_synth_within_beats_cross_cluster():
    samples = synth_clustered_embeddings(2, 50, 0.05, seed=1)
    X = np.vstack([e.values for e, _ in samples])
    labels = np.array([lab for _, lab in samples])
    G = X @ X.T
    same = labels[:, None] == labels[None, :]
    assert G[same].mean() > G[~same].mean()


def test_synth_counts():
    samples = synth_clustered_embeddings(3, 10, 0.3, seed=4)
    labels = [lab for _, lab in samples]
    assert len(samples) == 30
    assert {lab: labels.count(lab) for lab in set(labels)} == {0: 10, 1: 10, 2: 10}


@pytest.mark.parametrize("args", [(0, 5, 0.1), (2, 0, 0.1), (2, 5, 0.0), (2, 5, 1.0)])
def test_synth_invalid(args):
    with pytest.raises(InvalidParameter):
        synth_clustered_embeddings(*args, seed=0)
