"""LLM-driven graph refinement: per-edge keep/reverse/remove verdicts, graph
additions, and the loop that applies them under an acyclicity guard.

Clients are pluggable: an HTTP chat-completion backend for live runs, a
scripted mock for deterministic tests, and a ground-truth oracle that
answers every prompt from a known DAG.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import requests

from .data import VariableMeta
from .errors import (
    AuthError,
    ClientError,
    ClientFailure,
    MalformedResponse,
    RateLimited,
    Timeout,
    Unparseable,
)
from .graphs import CausalGraph, EdgeMark, is_acyclic, summarize_edges, would_create_cycle
from .prompts import build_addition_prompt, build_edge_prompt, render

log = logging.getLogger(__name__)


class Confidence(IntEnum):
    LOW = 0
    MODERATE = 1
    HIGH = 2
    VERY_HIGH = 3


_CONFIDENCE_ALIASES = {
    "low": Confidence.LOW,
    "moderate": Confidence.MODERATE,
    "medium": Confidence.MODERATE,
    "high": Confidence.HIGH,
    "very_high": Confidence.VERY_HIGH,
    "very high": Confidence.VERY_HIGH,
    "veryhigh": Confidence.VERY_HIGH,
}

KEEP, REVERSE, REMOVE = "keep", "reverse", "remove"
_DECISIONS = (KEEP, REVERSE, REMOVE)


@dataclass(frozen=True)
class EdgeVerdict:
    decision: str  # keep | reverse | remove
    confidence: Confidence
    rationale: str


@dataclass(frozen=True)
class AdditionProposal:
    from_node: str
    to_node: str
    confidence: Confidence
    rationale: str


def _parse_confidence(value) -> Confidence:
    if isinstance(value, str):
        return _CONFIDENCE_ALIASES.get(value.strip().lower(), Confidence.LOW)
    return Confidence.LOW


def _iter_json_values(text: str, opener: str):
    """Yield JSON values whose serialization starts at each opener position."""
    decoder = json.JSONDecoder()
    for pos in range(len(text)):
        if text[pos] != opener:
            continue
        try:
            value, _ = decoder.raw_decode(text[pos:])
        except json.JSONDecodeError:
            continue
        yield value


def parse_verdict(response: str) -> EdgeVerdict:
    """Extract the first verdict block; fall back to a single bare keyword.

    A structured block is a JSON object whose "decision" is one of
    keep/reverse/remove (case-insensitive). Without one, the response must
    contain exactly one of those keywords; the fallback is flagged in the
    rationale and carries low confidence.
    """
    for value in _iter_json_values(response, "{"):
        if not isinstance(value, dict):
            continue
        decision = value.get("decision")
        if isinstance(decision, str) and decision.strip().lower() in _DECISIONS:
            return EdgeVerdict(
                decision=decision.strip().lower(),
                confidence=_parse_confidence(value.get("confidence")),
                rationale=str(value.get("reason", "")),
            )
    found = {d for d in _DECISIONS if re.search(rf"\b{d}\b", response, re.IGNORECASE)}
    if len(found) == 1:
        return EdgeVerdict(
            decision=found.pop(), confidence=Confidence.LOW, rationale="keyword fallback"
        )
    raise Unparseable(f"no verdict found in response: {response[:120]!r}")


def parse_additions(response: str) -> list[AdditionProposal]:
    """Extract the first JSON array of {from, to, confidence, reason} entries.

    Entries missing endpoints or proposing self-loops are dropped.
    """
    for value in _iter_json_values(response, "["):
        if not isinstance(value, list):
            continue
        proposals = []
        for entry in value:
            if not isinstance(entry, dict):
                continue
            src, dst = entry.get("from"), entry.get("to")
            if not isinstance(src, str) or not isinstance(dst, str) or src == dst:
                continue
            proposals.append(
                AdditionProposal(
                    from_node=src,
                    to_node=dst,
                    confidence=_parse_confidence(entry.get("confidence")),
                    rationale=str(entry.get("reason", "")),
                )
            )
        return proposals
    raise Unparseable(f"no additions array found in response: {response[:120]!r}")


# --- clients -----------------------------------------------------------------

class ScriptedMock:
    """Replays a fixed queue of responses; exhausted queues yield empty text."""

    def __init__(self, responses: Sequence[str] = ()):
        self._queue = list(responses)
        self.calls = 0

    def complete(self, prompt: str, temperature: float = 0.0, max_tokens: int = 512) -> str:
        self.calls += 1
        if self._queue:
            return self._queue.pop(0)
        return ""


_QUESTION_RE = re.compile(r"Does (\S+) cause (\S+)\?")
_LIMIT_RE = re.compile(r"List up to (\d+) causal edges")
_EDGE_RE = re.compile(r"([^\s;]+) (->|--) ([^\s;]+)")


class TruthOracle:
    """Answers edge and addition prompts from a ground-truth DAG (test double)."""

    def __init__(self, truth: CausalGraph):
        self.truth = truth
        self.calls = 0

    def complete(self, prompt: str, temperature: float = 0.0, max_tokens: int = 512) -> str:
        self.calls += 1
        m = _QUESTION_RE.search(prompt)
        if m:
            return self._edge_answer(m.group(1), m.group(2))
        m = _LIMIT_RE.search(prompt)
        if m:
            return self._addition_answer(prompt, int(m.group(1)))
        return ""

    def _edge_answer(self, a: str, b: str) -> str:
        if a in self.truth.nodes and b in self.truth.nodes and self.truth.has_directed(a, b):
            decision = KEEP
        elif a in self.truth.nodes and b in self.truth.nodes and self.truth.has_directed(b, a):
            decision = REVERSE
        else:
            decision = REMOVE
        return json.dumps(
            {"decision": decision, "confidence": "very_high", "reason": "ground truth"}
        )

    def _addition_answer(self, prompt: str, limit: int) -> str:
        current: set[frozenset] = set()
        context = prompt.split("### Metadata", 1)[0]
        for src, _, dst in _EDGE_RE.findall(context):
            current.add(frozenset((src, dst)))
        missing = []
        for i, j in sorted(self.truth.directed_edges()):
            a, b = self.truth.nodes[i], self.truth.nodes[j]
            if frozenset((a, b)) not in current:
                missing.append(
                    {"from": a, "to": b, "confidence": "very_high", "reason": "ground truth"}
                )
            if len(missing) == limit:
                break
        return json.dumps(missing)


@dataclass(frozen=True)
class LlmConfig:
    base_url: str
    model: str
    api_key: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 30.0
    retries: int = 3
    backoff_base: float = 1.0


def http_complete(
    cfg: LlmConfig,
    prompt: str,
    cache: Optional[dict] = None,
    sleep=time.sleep,
) -> str:
    """One chat completion with retry/backoff and optional response caching.

    Transient failures (connection errors, timeouts, 429, 5xx) are retried
    with exponential backoff; auth failures are raised immediately.
    """
    key = hashlib.sha256(
        f"{cfg.model}\x00{cfg.temperature}\x00{prompt}".encode()
    ).hexdigest()
    if cache is not None and key in cache:
        return cache[key]
    payload = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    url = cfg.base_url.rstrip("/") + "/chat/completions"

    last_error: Optional[ClientError] = None
    for attempt in range(cfg.retries):
        if attempt:
            sleep(cfg.backoff_base * 2 ** (attempt - 1))
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=cfg.timeout)
        except requests.Timeout:
            last_error = Timeout(f"request to {url} timed out")
            continue
        except requests.ConnectionError as exc:
            last_error = ClientError(f"connection failed: {exc}")
            continue
        if resp.status_code in (401, 403):
            raise AuthError(f"authentication failed ({resp.status_code})")
        if resp.status_code == 429:
            last_error = RateLimited("rate limited (429)")
            continue
        if resp.status_code >= 500:
            last_error = ClientError(f"server error ({resp.status_code})")
            continue
        if resp.status_code != 200:
            raise ClientError(f"unexpected status {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"bad completion payload: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("completion content is not text")
        if cache is not None:
            cache[key] = text
        return text
    raise last_error if last_error is not None else ClientError("no attempts made")


class HttpChatClient:
    """Chat-completion client with an in-memory response cache."""

    def __init__(self, cfg: LlmConfig, sleep=time.sleep):
        self.cfg = cfg
        self.cache: dict = {}
        self._sleep = sleep

    def complete(self, prompt: str, temperature: Optional[float] = None,
                 max_tokens: Optional[int] = None) -> str:
        cfg = self.cfg
        if temperature is not None or max_tokens is not None:
            cfg = LlmConfig(
                base_url=cfg.base_url,
                model=cfg.model,
                api_key=cfg.api_key,
                temperature=cfg.temperature if temperature is None else temperature,
                max_tokens=cfg.max_tokens if max_tokens is None else max_tokens,
                timeout=cfg.timeout,
                retries=cfg.retries,
                backoff_base=cfg.backoff_base,
            )
        return http_complete(cfg, prompt, cache=self.cache, sleep=self._sleep)


# --- the refinement loop ------------------------------------------------------

ON_UNPARSEABLE_KEEP = "keep_unchanged"
ON_UNPARSEABLE_FAIL = "fail"


@dataclass(frozen=True)
class RefinePolicy:
    min_add_confidence: Confidence = Confidence.HIGH
    on_unparseable: str = ON_UNPARSEABLE_KEEP
    additions_enabled: bool = True
    max_additions: int = 5
    allow_new_nodes: bool = False


@dataclass
class RefinementRecord:
    prompt_sha256: str
    response: str
    verdict: str
    action: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "prompt_sha256": self.prompt_sha256,
                "response": self.response,
                "verdict": self.verdict,
                "action": self.action,
            },
            sort_keys=True,
        )


@dataclass
class RefinementLog:
    records: list = field(default_factory=list)
    kept: int = 0
    reversed: int = 0
    removed: int = 0
    added: int = 0
    unparseable: int = 0
    cycles_rejected: int = 0

    def counters(self) -> dict:
        return {
            "kept": self.kept,
            "reversed": self.reversed,
            "removed": self.removed,
            "added": self.added,
            "unparseable": self.unparseable,
            "cycles_rejected": self.cycles_rejected,
        }

    def to_jsonl(self) -> str:
        lines = [r.to_json() for r in self.records]
        lines.append(json.dumps({"counters": self.counters()}, sort_keys=True))
        return "\n".join(lines) + "\n"


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def refine(
    g: CausalGraph,
    meta: Sequence[VariableMeta],
    domain: str,
    client,
    policy: Optional[RefinePolicy] = None,
    algorithm_name: str = "causal discovery",
    templates: Optional[dict] = None,
) -> tuple[CausalGraph, RefinementLog]:
    """Consult the client once per edge (and once for additions) and apply the
    verdicts under an acyclicity guard.

    Directed edges are kept, reversed, or removed; undirected edges are
    resolved to the direction the verdict endorses. Any action that would
    close a directed cycle is rejected and counted. Additions below the
    policy's confidence floor are ignored; unknown node names are accepted
    only when the policy allows new nodes.
    """
    policy = policy or RefinePolicy()
    known = {v.name for v in meta}
    if set(g.nodes) - known:
        raise ValueError(f"graph nodes missing metadata: {sorted(set(g.nodes) - known)}")
    logbook = RefinementLog()
    cur = g

    # snapshot: one consultation per edge of the input graph, canonical order
    consultations: list[tuple[str, str, bool]] = []
    for i in range(g.d):
        for j in range(i + 1, g.d):
            if g.has_directed(i, j):
                consultations.append((g.nodes[i], g.nodes[j], False))
            elif g.has_directed(j, i):
                consultations.append((g.nodes[j], g.nodes[i], False))
            elif g.has_undirected(i, j):
                consultations.append((g.nodes[i], g.nodes[j], True))

    for a, b, was_undirected in consultations:
        prompt = render(
            build_edge_prompt(
                (a, b), algorithm_name, summarize_edges(cur), meta, domain,
                templates=templates,
            )
        )
        try:
            response = client.complete(prompt)
        except ClientError as exc:
            raise ClientFailure(f"client failed on edge {a} -> {b}: {exc}", log=logbook) from exc
        try:
            verdict = parse_verdict(response)
        except Unparseable:
            if policy.on_unparseable == ON_UNPARSEABLE_FAIL:
                raise
            logbook.unparseable += 1
            logbook.records.append(
                RefinementRecord(_sha(prompt), response, "unparseable", "none")
            )
            continue
        cur, action = _apply_edge_verdict(cur, a, b, was_undirected, verdict, logbook)
        logbook.records.append(
            RefinementRecord(
                _sha(prompt), response, f"{verdict.decision}/{verdict.confidence.name.lower()}",
                action,
            )
        )

    if policy.additions_enabled:
        prompt = render(
            build_addition_prompt(
                summarize_edges(cur), meta, domain, policy.max_additions,
                templates=templates,
            )
        )
        try:
            response = client.complete(prompt)
        except ClientError as exc:
            raise ClientFailure(f"client failed on addition prompt: {exc}", log=logbook) from exc
        try:
            proposals = parse_additions(response)
        except Unparseable:
            if policy.on_unparseable == ON_UNPARSEABLE_FAIL:
                raise
            logbook.unparseable += 1
            logbook.records.append(
                RefinementRecord(_sha(prompt), response, "unparseable", "none")
            )
            proposals = []
        for prop in proposals[: policy.max_additions]:
            verdict_txt = f"add/{prop.confidence.name.lower()}"
            cur, action = _apply_addition(cur, prop, policy, logbook)
            logbook.records.append(
                RefinementRecord(_sha(prompt), response, verdict_txt, action)
            )

    assert is_acyclic(cur)
    return cur, logbook


def _apply_edge_verdict(
    cur: CausalGraph, a: str, b: str, was_undirected: bool,
    verdict: EdgeVerdict, logbook: RefinementLog,
) -> tuple[CausalGraph, str]:
    if verdict.decision == REMOVE:
        logbook.removed += 1
        return cur.set_mark(a, b, EdgeMark.ABSENT), "removed"
    if verdict.decision == KEEP:
        if was_undirected:
            if would_create_cycle(cur, a, b):
                logbook.cycles_rejected += 1
                return cur, "rejected_cycle"
            logbook.kept += 1
            return cur.set_mark(a, b, EdgeMark.DIRECTED), f"oriented:{a}->{b}"
        logbook.kept += 1
        return cur, "kept"
    # reverse
    if would_create_cycle(cur, b, a):
        logbook.cycles_rejected += 1
        return cur, "rejected_cycle"
    logbook.reversed += 1
    return cur.set_mark(b, a, EdgeMark.DIRECTED), f"reversed:{b}->{a}"


def _apply_addition(
    cur: CausalGraph, prop: AdditionProposal, policy: RefinePolicy,
    logbook: RefinementLog,
) -> tuple[CausalGraph, str]:
    if prop.confidence < policy.min_add_confidence:
        return cur, "skipped_low_confidence"
    new_names = [n for n in (prop.from_node, prop.to_node) if n not in cur.nodes]
    if new_names and not policy.allow_new_nodes:
        return cur, "skipped_unknown_node"
    g = cur.with_nodes_added(new_names)
    if g.has_directed(prop.from_node, prop.to_node):
        return cur, "already_present"
    if would_create_cycle(g, prop.from_node, prop.to_node):
        logbook.cycles_rejected += 1
        return cur, "rejected_cycle"
    logbook.added += 1
    return (
        g.set_mark(prop.from_node, prop.to_node, EdgeMark.DIRECTED),
        f"added:{prop.from_node}->{prop.to_node}",
    )
