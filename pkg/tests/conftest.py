import numpy as np
import pytest

from semcache.embedding import Embedding, Modality, l2_normalize
from semcache.store import CacheEntry, Shard

ACCEPTANCE_LINES: list[str] = []


def unit(values, modality=Modality.TEXT) -> Embedding:
    return l2_normalize(np.asarray(values, dtype=float), modality)


def basis(i: int, dim: int, modality=Modality.TEXT) -> Embedding:
    v = np.zeros(dim)
    v[i] = 1.0
    return Embedding(v, modality)


def entry(eid, img, txt=None, uri=None, tick=0, hits=0, caption=""):
    img = img if isinstance(img, Embedding) else unit(img, Modality.IMAGE)
    txt = img if txt is None else txt
    txt = txt if isinstance(txt, Embedding) else unit(txt)
    return CacheEntry(eid, Embedding(img.values, Modality.IMAGE), Embedding(txt.values, Modality.TEXT),
                      uri or f"mem://e{eid}", caption, tick, tick, hits)


def random_shard(rng: np.random.Generator, n: int, dim: int, node_id="n0", start_id=0,
                 quantize: int | None = None) -> Shard:
    """Random unit entries; ``quantize`` snaps components to a small grid to force exact ties."""
    shard = Shard(node_id, dim)
    for i in range(n):
        a, b = rng.standard_normal(dim), rng.standard_normal(dim)
        if quantize:
            a, b = np.round(a * quantize) + 0.5, np.round(b * quantize) + 0.5
        shard.insert(entry(start_id + i, a, b))
    return shard


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
