"""Hazard identification and grounding through pluggable backends.

The mock backends answer from scenario ground truth and keep the whole
benchmark offline.  The remote backends speak two small HTTP schemas:

* assessor: OpenAI-style chat completion, POST {model, messages:[{role,
  content:[text, image]}]} -> {choices:[{message:{content}}]};
* detector: POST {image, caption} -> {boxes: [[u0,v0,u1,v1], ...],
  scores: [...]}.

Base URLs come from ASSESSOR_URL / DETECTOR_URL with bearer tokens read from
ASSESSOR_TOKEN / DETECTOR_TOKEN.  Recorded request/response fixtures replay
either client without a network.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .errors import MalformedReply, NotFound, RemoteUnavailable
from .perception import BBox

PROMPT_TEMPLATE = (
    "The robot must follow this instruction: {instruction}. Based on both the "
    "instruction and the image, identify exactly one non-robot object that is "
    "most likely to obstruct the robot's motion during task execution. You "
    "must output a uniquely identifiable obstacle name including both color "
    "and object type, preferably from this list when applicable: {candidates}. "
    "Output only the object name, with no additional words."
)

DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class HazardQuery:
    instruction: str
    image_ref: str = ""
    candidate_list: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.instruction:
            raise ValueError("instruction must be nonempty")
        object.__setattr__(self, "candidate_list", tuple(self.candidate_list))


@dataclass(frozen=True)
class HazardResult:
    object_name: str
    source: str  # "mock" | "remote"

    def __post_init__(self):
        if not self.object_name or self.object_name != self.object_name.strip():
            raise ValueError("object name must be nonempty without surrounding whitespace")


def build_prompt(q: HazardQuery) -> str:
    """Fill the identification prompt; byte-stable for identical inputs."""
    candidates = "[" + ", ".join(q.candidate_list) + "]"
    return PROMPT_TEMPLATE.format(instruction=q.instruction, candidates=candidates)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

Transport = Callable[[str, Dict[str, str], dict], Tuple[int, str]]


def _http_transport(timeout: float) -> Transport:
    def post(url: str, headers: Dict[str, str], payload: dict) -> Tuple[int, str]:
        import requests

        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            raise RemoteUnavailable(f"POST {url} failed: {exc}") from exc
        return resp.status_code, resp.text

    return post


@dataclass(frozen=True)
class MockAssessor:
    """Answers every query with the scenario's declared hazard name."""

    hazard_name: str

    def identify(self, q: HazardQuery) -> HazardResult:
        return HazardResult(self.hazard_name, "mock")


@dataclass
class RemoteAssessor:
    """Chat-completion client for the hazard-identification prompt."""

    base_url: Optional[str] = None
    model: str = "glm-4.5v"
    timeout: float = DEFAULT_TIMEOUT
    transport: Optional[Transport] = None

    def identify(self, q: HazardQuery) -> HazardResult:
        url = (self.base_url or os.environ.get("ASSESSOR_URL", "")).rstrip("/")
        if not url:
            raise RemoteUnavailable("no assessor URL configured (set ASSESSOR_URL)")
        headers = {}
        token = os.environ.get("ASSESSOR_TOKEN")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.model,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": build_prompt(q)},
                        {"type": "image_url", "image_url": {"url": q.image_ref}},
                    ],
                }
            ],
        }
        post = self.transport or _http_transport(self.timeout)
        status, body = post(url + "/chat/completions", headers, payload)
        if status != 200:
            raise RemoteUnavailable(f"assessor returned HTTP {status}")
        try:
            reply = json.loads(body)["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise MalformedReply(f"unparseable assessor reply: {body[:200]!r}") from exc
        name = reply.strip()
        if not name or "\n" in name:
            raise MalformedReply(f"expected a single-line object name, got {reply!r}")
        return HazardResult(name, "remote")


def identify_hazard(q: HazardQuery, backend) -> HazardResult:
    """Route the query through the configured backend."""
    return backend.identify(q)


@dataclass(frozen=True)
class MockDetector:
    """Returns scenario ground-truth boxes keyed by object name."""

    boxes: Dict[str, BBox] = field(default_factory=dict)

    def ground(self, name: str, image_ref: str) -> BBox:
        if name not in self.boxes:
            raise NotFound(f"no ground-truth box declared for {name!r}")
        return self.boxes[name]


@dataclass
class RemoteDetector:
    """Open-set detection client; keeps the highest-confidence box."""

    base_url: Optional[str] = None
    timeout: float = DEFAULT_TIMEOUT
    transport: Optional[Transport] = None

    def ground(self, name: str, image_ref: str) -> BBox:
        url = (self.base_url or os.environ.get("DETECTOR_URL", "")).rstrip("/")
        if not url:
            raise RemoteUnavailable("no detector URL configured (set DETECTOR_URL)")
        headers = {}
        token = os.environ.get("DETECTOR_TOKEN")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {"image": image_ref, "caption": name}
        post = self.transport or _http_transport(self.timeout)
        status, body = post(url + "/detect", headers, payload)
        if status != 200:
            raise RemoteUnavailable(f"detector returned HTTP {status}")
        try:
            parsed = json.loads(body)
            boxes = parsed["boxes"]
            scores = parsed["scores"]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise RemoteUnavailable(f"unparseable detector reply: {body[:200]!r}") from exc
        if not boxes:
            raise NotFound(f"detector returned no box for {name!r}")
        best = 0
        for i in range(1, len(scores)):
            if scores[i] > scores[best]:  # strict: first occurrence wins ties
                best = i
        u0, v0, u1, v1 = boxes[best]
        return BBox(u0, v0, u1, v1, float(scores[best]))


def ground_object(name: str, image_ref: str, backend) -> BBox:
    """Locate the named object; argmax confidence, first occurrence on ties."""
    if not name:
        raise ValueError("object name must be nonempty")
    return backend.ground(name, image_ref)


# ---------------------------------------------------------------------------
# Recorded fixtures
# ---------------------------------------------------------------------------

FIXTURE_REQUEST = "----request----"
FIXTURE_RESPONSE = "----response----"


def record_fixture(path: Union[str, Path], records: Sequence[Tuple[dict, int, str]]) -> None:
    """Persist (request payload, status, body) triples as plain text."""
    with open(path, "w") as fh:
        for payload, status, body in records:
            fh.write(FIXTURE_REQUEST + "\n")
            fh.write(json.dumps(payload, sort_keys=True) + "\n")
            fh.write(FIXTURE_RESPONSE + "\n")
            fh.write(f"{status}\n")
            fh.write(json.dumps(body) + "\n")


def fixture_transport(path: Union[str, Path]) -> Transport:
    """Transport that replays recorded responses for matching requests."""
    lines = Path(path).read_text().splitlines()
    replies: List[Tuple[str, int, str]] = []
    i = 0
    while i < len(lines):
        if lines[i] != FIXTURE_REQUEST:
            raise ValueError(f"fixture parse error at line {i + 1}")
        payload_key = lines[i + 1]
        if lines[i + 2] != FIXTURE_RESPONSE:
            raise ValueError(f"fixture parse error at line {i + 3}")
        status = int(lines[i + 3])
        body = json.loads(lines[i + 4])
        replies.append((payload_key, status, body))
        i += 5

    def post(url: str, headers: Dict[str, str], payload: dict) -> Tuple[int, str]:
        key = json.dumps(payload, sort_keys=True)
        for recorded_key, status, body in replies:
            if recorded_key == key:
                return status, body
        raise RemoteUnavailable("no recorded fixture matches this request")

    return post
