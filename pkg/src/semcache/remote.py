"""HTTP clients for external generation and phrase-importance services."""
from __future__ import annotations

import json
import urllib.error
import urllib.request
from typing import Sequence

from .dispatcher import GenerationResult
from .embedding import Embedding, EmbedderBackend, Modality, l2_normalize
from .store import CacheEntry


def _post_json(url: str, body: dict, timeout: float) -> dict:
    req = urllib.request.Request(url, data=json.dumps(body).encode("utf-8"),
                                 headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace")[:200]
        raise RuntimeError(f"{url} answered {exc.code}: {detail}") from exc


class HttpGenerator:
    """Diffusion service client.

    ``POST {base}/txt2img`` with ``{"prompt", "steps", "seed"}`` and
    ``POST {base}/img2img`` with ``{"prompt", "reference_uri", "strength_steps", "seed"}``. The service
    answers ``{"payload_uri": ..., "image_vector": [...]?}``; without a vector the
    new image is embedded through ``embedder``.
    """

    simulated = False

    def __init__(self, base_url: str, embedder: EmbedderBackend, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.embedder = embedder
        self.timeout = timeout

    def _finish(self, reply: dict, prompt: str, prompt_vec: Embedding, steps: int) -> GenerationResult:
        uri = str(reply["payload_uri"])
        vec = reply.get("image_vector")
        img = l2_normalize(vec, Modality.IMAGE) if vec is not None else self.embedder.embed_image(uri)
        return GenerationResult(b"", img, Embedding(prompt_vec.values, Modality.TEXT), steps, uri)

    def text_to_image(self, prompt, prompt_vec, steps, seed):
        reply = _post_json(f"{self.base_url}/txt2img", {"prompt": prompt, "steps": steps, "seed": seed},
                           self.timeout)
        return self._finish(reply, prompt, prompt_vec, steps)

    def image_to_image(self, prompt, prompt_vec, reference: CacheEntry, steps, seed):
        body = {"prompt": prompt, "reference_uri": reference.payload_uri, "strength_steps": steps, "seed": seed}
        reply = _post_json(f"{self.base_url}/img2img", body, self.timeout)
        return self._finish(reply, prompt, prompt_vec, steps)


class HttpImportanceScorer:
    """``POST {"phrases": [...]}`` and expect ``{"weights": [...]}`` of the same length."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def score(self, phrases: Sequence[str]) -> list[float]:
        reply = _post_json(self.url, {"phrases": list(phrases)}, self.timeout)
        weights = [float(w) for w in reply["weights"]]
        if len(weights) != len(phrases):
            raise ValueError(f"importance service returned {len(weights)} weights for {len(phrases)} phrases")
        return weights
