"""Chat-completions wire client with caching, retries, and rate limiting.

Requests go to a ``{base_url}/chat/completions``-shaped endpoint with a
bearer token taken from an environment variable, so the same client works
against the original hosted models and local compatible servers. Every
response is stored in a content-addressed cache keyed by model id, the
full prompt text, and the hash of each transmitted image, which makes
reruns free, offline, and deterministic.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from PIL import Image, UnidentifiedImageError


class TransportError(RuntimeError):
    """Request could not be completed after the configured retries."""


class RateLimitExhaustedError(TransportError):
    """The endpoint kept refusing with rate-limit responses."""


class EmptyResponseError(TransportError):
    """The model returned an empty message."""


class ImageDecodeError(ValueError):
    """Input image bytes could not be decoded."""


@dataclass(frozen=True)
class MllmClientConfig:
    base_url: str = "http://localhost:8000/v1"
    model_id: str = "default-mllm"
    api_key_env: str = "MLLM_API_KEY"
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 1.0
    max_requests_per_minute: int = 60
    max_in_flight: int = 4
    image_max_side: int = 768
    cache_dir: str = "mllm-cache"
    temperature: float = 0.0

    def __post_init__(self) -> None:
        for name in (
            "timeout",
            "max_retries",
            "backoff_base",
            "max_requests_per_minute",
            "max_in_flight",
            "image_max_side",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ChatRequest:
    """One request to the refiner model, plus the metadata mocks need.

    ``images`` holds the already downscaled/re-encoded bytes that would go
    on the wire (query first). ``candidate_ids`` is the single candidate
    for a description request, or all candidates in coarse order for a
    rerank request; ``scores`` mirrors the coarse similarity scores.
    """

    kind: str  # "describe" | "rerank"
    text: str
    images: tuple[bytes, ...] = ()
    query_id: str = ""
    candidate_ids: tuple[str, ...] = ()
    scores: tuple[float, ...] | None = None


class SystemClock:
    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class RateLimiter:
    """Sliding 60 s request window plus an in-flight cap; thread-safe."""

    def __init__(self, max_per_minute: int, max_in_flight: int, clock=None) -> None:
        self._max_per_minute = max_per_minute
        self._clock = clock if clock is not None else SystemClock()
        self._issued: deque[float] = deque()
        self._window_lock = threading.Lock()
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def acquire(self) -> None:
        self._in_flight.acquire()
        while True:
            with self._window_lock:
                now = self._clock.monotonic()
                while self._issued and now - self._issued[0] >= 60.0:
                    self._issued.popleft()
                if len(self._issued) < self._max_per_minute:
                    self._issued.append(now)
                    return
                wait = self._issued[0] + 60.0 - now
            self._clock.sleep(max(wait, 1e-3))

    def release(self) -> None:
        self._in_flight.release()


class ResponseCache:
    """Content-addressed response store: ``{dir}/{hash[:2]}/{hash}.txt``."""

    def __init__(self, cache_dir: str | Path) -> None:
        self.root = Path(cache_dir)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.txt"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, key: str, text: str) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)


def cache_key(model_id: str, prompt_text: str, image_hashes: tuple[str, ...]) -> str:
    payload = json.dumps(
        {"model": model_id, "prompt": prompt_text, "images": list(image_hashes)},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def prepare_image(raw: bytes, max_side: int) -> bytes:
    """Decode, downscale so max(width, height) <= max_side, re-encode as JPEG."""
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from exc
    img = img.convert("RGB")
    w, h = img.size
    longest = max(w, h)
    if longest > max_side:
        scale = max_side / longest
        img = img.resize((max(1, round(w * scale)), max(1, round(h * scale))), Image.LANCZOS)
    out = io.BytesIO()
    img.save(out, format="JPEG", quality=90)
    return out.getvalue()


def request_payload(request: ChatRequest, model_id: str, temperature: float) -> dict:
    """Wire JSON: one user message with a text part then base64 image parts."""
    import base64

    content: list[dict] = [{"type": "text", "text": request.text}]
    for img in request.images:
        uri = "data:image/jpeg;base64," + base64.b64encode(img).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": uri}})
    return {
        "model": model_id,
        "temperature": temperature,
        "messages": [{"role": "user", "content": content}],
    }


def _http_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    body = None
    try:
        body = resp.json()
    except ValueError:
        pass
    return resp.status_code, body


class MllmClient:
    """Live client; safe to share across threads.

    ``transport`` is a callable ``(url, headers, payload, timeout) ->
    (status_code, body_dict)`` so tests can substitute counting or failing
    fakes; ``clock`` likewise makes backoff and the rate window testable.
    """

    needs_images = True

    def __init__(
        self,
        config: MllmClientConfig,
        transport: Callable | None = None,
        clock=None,
    ) -> None:
        self.config = config
        self.model_id = config.model_id
        self._transport = transport if transport is not None else _http_transport
        self._clock = clock if clock is not None else SystemClock()
        self._limiter = RateLimiter(
            config.max_requests_per_minute, config.max_in_flight, self._clock
        )
        self._cache = ResponseCache(config.cache_dir)
        self._log_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> tuple[str, bool]:
        """Return (response_text, cached). Cache hits make no network call."""
        image_hashes = tuple(hashlib.sha256(img).hexdigest() for img in request.images)
        key = cache_key(self.config.model_id, request.text, image_hashes)
        hit = self._cache.get(key)
        if hit is not None:
            return hit, True
        text, usage = self._issue(request)
        if not text.strip():
            raise EmptyResponseError(f"empty model response for request {key[:12]}")
        self._cache.put(key, text)
        self._audit(key, usage)
        return text, False

    def _issue(self, request: ChatRequest) -> tuple[str, dict | None]:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        api_key = os.environ.get(self.config.api_key_env)
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = request_payload(request, self.config.model_id, self.config.temperature)
        last_error: str = ""
        rate_limited = False
        for attempt in range(self.config.max_retries):
            if attempt > 0:
                self._clock.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            self._limiter.acquire()
            try:
                status, body = self._transport(url, headers, payload, self.config.timeout)
            except ConnectionError as exc:
                last_error = str(exc)
                continue
            finally:
                self._limiter.release()
            if status == 429:
                rate_limited = True
                last_error = f"HTTP 429: {body}"
                continue
            if 500 <= status < 600:
                rate_limited = False
                last_error = f"HTTP {status}: {body}"
                continue
            if status != 200:
                raise TransportError(f"HTTP {status}: {body}")
            try:
                text = body["choices"][0]["message"]["content"]
            except (TypeError, KeyError, IndexError) as exc:
                raise TransportError(f"malformed response body: {exc}") from exc
            return text or "", body.get("usage") if isinstance(body, dict) else None
        if rate_limited:
            raise RateLimitExhaustedError(
                f"rate limit not lifted after {self.config.max_retries} attempts: {last_error}"
            )
        raise TransportError(
            f"transport failed after {self.config.max_retries} attempts: {last_error}"
        )

    def _audit(self, key: str, usage: dict | None) -> None:
        record = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "hash": key,
            "model": self.config.model_id,
            "usage": usage,
        }
        log_path = self._cache.root / "requests.log"
        with self._log_lock:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
