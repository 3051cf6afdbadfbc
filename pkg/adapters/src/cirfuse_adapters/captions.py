"""Caption generation against a pluggable MLLM provider.

Templates are versioned files shipped with the package so runs record
which wording produced which captions. Every raw provider response is
archived to a JSONL audit file. Captions-per-image is a hard contract:
a response with the wrong count is a failure, not a truncation.
"""
from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .formats import AdapterError, write_captions_jsonl

log = logging.getLogger("cirfuse_adapters")

DEFAULT_R = 3

# Spot-check list for the garment-not-wearer policy. Matching a token is a
# policy warning, not proof of a bad caption.
PERSON_TOKENS = (
    "person", "people", "man", "men", "woman", "women", "model", "wearer",
    "lady", "ladies", "guy", "girl", "boy", "he", "she", "his", "her",
)
_PERSON_RE = re.compile(
    r"\b(" + "|".join(re.escape(t) for t in PERSON_TOKENS) + r")\b", re.IGNORECASE
)


@dataclass(frozen=True)
class CaptionTemplate:
    template_id: str
    text: str

    def render(self, r: int) -> str:
        return self.text.format(r=r)


def load_template(template_id: str) -> CaptionTemplate:
    ref = resources.files("cirfuse_adapters.templates").joinpath(f"{template_id}.txt")
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        have = sorted(
            p.name[: -len(".txt")]
            for p in resources.files("cirfuse_adapters.templates").iterdir()
            if p.name.endswith(".txt")
        )
        raise AdapterError(
            f"unknown template {template_id!r} (have: {', '.join(have)})"
        ) from None
    return CaptionTemplate(template_id=template_id, text=text)


def person_token_violations(captions: Sequence[str]) -> list[str]:
    """Captions containing a person-referring token from the blocklist."""
    return [c for c in captions if _PERSON_RE.search(c)]


class CaptionProvider(Protocol):
    provider_id: str

    def caption(self, image_path: Path, prompt: str, r: int) -> tuple[list[str], str]:
        """Return (captions, raw response text). Raise on transport failure."""
        ...


class MockProvider:
    """Offline provider deriving captions from content bytes. For pipeline
    work and tests; the captions describe nothing."""

    provider_id = "mock"

    def caption(self, image_path: Path, prompt: str, r: int) -> tuple[list[str], str]:
        digest = hashlib.sha256(Path(image_path).read_bytes()).hexdigest()[:12]
        captions = [f"a garment with pattern {digest} variant {k}" for k in range(1, r + 1)]
        raw = json.dumps({"provider": self.provider_id, "captions": captions})
        return captions, raw


class HttpProvider:
    """POSTs {prompt, image_b64, n} to an endpoint returning {"captions": [...]}.

    Credentials come from the named environment variable, never from
    arguments or files, so they cannot end up in manifests or audit logs.
    """

    def __init__(
        self,
        endpoint: str,
        credentials_env: str | None = None,
        model: str | None = None,
        timeout_s: float = 60.0,
    ):
        self.endpoint = endpoint
        self.credentials_env = credentials_env
        self.model = model
        self.timeout_s = timeout_s
        self.provider_id = f"http:{endpoint}" + (f"#{model}" if model else "")

    def caption(self, image_path: Path, prompt: str, r: int) -> tuple[list[str], str]:
        import requests

        headers = {}
        if self.credentials_env:
            token = os.environ.get(self.credentials_env)
            if not token:
                raise AdapterError(
                    f"credentials variable {self.credentials_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "prompt": prompt,
            "image_b64": base64.b64encode(Path(image_path).read_bytes()).decode("ascii"),
            "n": r,
        }
        if self.model:
            payload["model"] = self.model
        resp = requests.post(
            self.endpoint, json=payload, headers=headers, timeout=self.timeout_s
        )
        raw = resp.text
        if resp.status_code != 200:
            raise AdapterError(f"provider returned HTTP {resp.status_code}: {raw[:200]}")
        try:
            captions = [str(c) for c in resp.json()["captions"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise AdapterError(f"unparseable provider response: {raw[:200]}") from exc
        return captions, raw


@dataclass
class CaptionJob:
    images: list[tuple[str, Path]]
    template_id: str = "fashion_v1"
    r: int = DEFAULT_R
    provider_endpoint: str | None = None
    credentials_env: str | None = None
    model: str | None = None


@dataclass
class CaptionRunResult:
    out_path: Path
    audit_path: Path
    captioned: int
    failures: list[tuple[str, str]] = field(default_factory=list)
    policy_violations: dict[str, list[str]] = field(default_factory=dict)


class _RateLimiter:
    def __init__(self, per_second: float | None):
        self._interval = 1.0 / per_second if per_second else 0.0
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if self._interval <= 0.0:
            return
        with self._lock:
            now = time.monotonic()
            start_at = max(now, self._next_at)
            self._next_at = start_at + self._interval
        delay = start_at - now
        if delay > 0:
            time.sleep(delay)


def run_caption_job(
    job: CaptionJob,
    out_path: str | Path,
    audit_path: str | Path | None = None,
    provider: CaptionProvider | None = None,
    max_workers: int = 4,
    max_attempts: int = 3,
    backoff_s: float = 1.0,
    rate_per_second: float | None = None,
) -> CaptionRunResult:
    """Caption every image, enforcing exactly job.r captions per item.

    Transient provider errors retry with exponential backoff; items still
    failing after max_attempts land on the failure list instead of raising,
    so a long run salvages what it can.
    """
    if job.r < 1:
        raise AdapterError(f"captions per image must be >= 1, got {job.r}")
    if not job.images:
        raise AdapterError("caption job has no images")
    if provider is None:
        if not job.provider_endpoint:
            raise AdapterError("caption job needs a provider endpoint")
        provider = HttpProvider(
            job.provider_endpoint, job.credentials_env, job.model
        )
    template = load_template(job.template_id)
    prompt = template.render(job.r)

    out_path = Path(out_path)
    if audit_path is None:
        audit_path = out_path.with_suffix(".audit.jsonl")
    audit_path = Path(audit_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    audit_path.parent.mkdir(parents=True, exist_ok=True)

    limiter = _RateLimiter(rate_per_second)
    audit_lock = threading.Lock()
    audit_fh = open(audit_path, "w", encoding="utf-8")

    def audit(item_id: str, attempt: int, status: str, raw: str) -> None:
        record = {
            "item_id": item_id,
            "attempt": attempt,
            "status": status,
            "provider_id": provider.provider_id,
            "template_id": template.template_id,
            "r": job.r,
            "unix_time": time.time(),
            "raw": raw,
        }
        with audit_lock:
            audit_fh.write(json.dumps(record, sort_keys=True) + "\n")

    def caption_one(item: tuple[str, Path]) -> tuple[str, list[str] | None, str]:
        item_id, path = item
        last_error = "no attempts made"
        for attempt in range(1, max_attempts + 1):
            limiter.wait()
            try:
                captions, raw = provider.caption(path, prompt, job.r)
            except Exception as exc:
                last_error = str(exc)
                audit(item_id, attempt, "error", last_error)
            else:
                if len(captions) != job.r:
                    last_error = f"provider returned {len(captions)} captions, need {job.r}"
                    audit(item_id, attempt, "bad_count", raw)
                else:
                    audit(item_id, attempt, "ok", raw)
                    return item_id, captions, ""
            if attempt < max_attempts:
                time.sleep(backoff_s * (2 ** (attempt - 1)))
        return item_id, None, last_error

    try:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(caption_one, job.images))
    finally:
        audit_fh.close()

    captioned: dict[str, list[str]] = {}
    failures: list[tuple[str, str]] = []
    for item_id, captions, error in outcomes:
        if captions is None:
            failures.append((item_id, error))
        else:
            captioned[item_id] = captions

    rows = [
        {"item_id": item_id, "captions": captioned[item_id]}
        for item_id in sorted(captioned)
    ]
    write_captions_jsonl(out_path, rows)
    if failures:
        failure_path = out_path.with_suffix(".failures.json")
        failure_path.write_text(
            json.dumps(
                [{"item_id": i, "error": e} for i, e in failures], indent=2
            ) + "\n",
            encoding="utf-8",
        )
        log.warning("%d items failed captioning; see %s", len(failures), failure_path)

    violations: dict[str, list[str]] = {}
    if job.template_id.startswith("fashion"):
        for item_id, caps in captioned.items():
            bad = person_token_violations(caps)
            if bad:
                violations[item_id] = bad
        if violations:
            log.warning(
                "%d items have captions mentioning a person despite the "
                "fashion template", len(violations)
            )
    return CaptionRunResult(
        out_path=out_path,
        audit_path=audit_path,
        captioned=len(captioned),
        failures=failures,
        policy_violations=violations,
    )
