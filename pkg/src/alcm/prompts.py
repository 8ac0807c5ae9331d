"""Structured causal prompts: instruction, causal context, metadata, question,
output format.

Rendering is deterministic and byte-stable so prompts can be golden-tested
and used as cache keys. Section bodies are escaped so the five section
labels appear exactly once each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .data import VariableMeta
from .errors import EmptyBlock, UnknownVariable


class PromptKind(Enum):
    EDGE_VALIDATION = "edge_validation"
    UNIQUE_EDGE_ARBITRATION = "unique_edge_arbitration"
    GRAPH_ADDITION = "graph_addition"


@dataclass(frozen=True)
class CausalPrompt:
    instruction: str
    causal_context: str
    metadata: str
    question: str
    output_format: str


SECTION_LABELS = (
    "### Instruction",
    "### Causal Context",
    "### Metadata",
    "### Question",
    "### Output Format",
)

_EDGE_INSTRUCTION = (
    "You are an expert in causal inference reviewing one edge of a causal graph "
    "produced by a data-driven discovery algorithm. Use the algorithmic evidence "
    "together with your domain knowledge. Reason step by step through the "
    "mechanism before you commit to an answer, then reply only in the requested "
    "output format."
)

_ARBITRATION_INSTRUCTION = (
    "You are an expert in causal inference acting as the decisive reviewer for a "
    "causal edge that only one of several discovery algorithms proposed. Weigh "
    "whether the relationship is plausible at all. Reason step by step through "
    "the mechanism before you commit to an answer, then reply only in the "
    "requested output format."
)

_ADDITION_INSTRUCTION = (
    "You are an expert in causal inference auditing a causal graph for missing "
    "structure. Consider direct causal mechanisms among the listed variables, "
    "including relationships the data may have been too limited to expose. "
    "Reason step by step before you answer, then reply only in the requested "
    "output format."
)

_VERDICT_FORMAT = (
    "Reply with a single JSON object and nothing else:\n"
    '{"decision": "keep" | "reverse" | "remove", '
    '"confidence": "very_high" | "high" | "moderate" | "low", '
    '"reason": "<one short sentence>"}'
)

DEFAULT_TEMPLATES = {
    "edge_instruction": _EDGE_INSTRUCTION,
    "arbitration_instruction": _ARBITRATION_INSTRUCTION,
    "addition_instruction": _ADDITION_INSTRUCTION,
    "verdict_format": _VERDICT_FORMAT,
}


def load_templates(path: str) -> dict:
    """Template overrides from a JSON file; unknown keys are rejected."""
    with open(path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    bad = set(overrides) - set(DEFAULT_TEMPLATES)
    if bad:
        raise ValueError(f"unknown template keys: {sorted(bad)}")
    merged = dict(DEFAULT_TEMPLATES)
    merged.update(overrides)
    return merged


def _metadata_block(meta: Sequence[VariableMeta], domain: str) -> str:
    lines = [f"Domain: {domain if domain else 'unspecified'}"]
    lines.append("Variables (in dataset order):")
    for v in meta:
        if v.description:
            lines.append(f"- {v.name}: {v.description}")
        else:
            lines.append(f"- {v.name}")
    return "\n".join(lines)


def build_edge_prompt(
    edge: tuple[str, str],
    algorithm_name: str,
    graph_summary: str,
    meta: Sequence[VariableMeta],
    domain: str = "",
    kind: PromptKind = PromptKind.EDGE_VALIDATION,
    templates: Optional[dict] = None,
) -> CausalPrompt:
    """Prompt asking whether the edge's source causes its target."""
    t = templates or DEFAULT_TEMPLATES
    a, b = edge
    known = {v.name for v in meta}
    for name in (a, b):
        if name not in known:
            raise UnknownVariable(name)
    if kind is PromptKind.UNIQUE_EDGE_ARBITRATION:
        instruction = t["arbitration_instruction"]
        context_head = (
            f"Discovery algorithm: {algorithm_name}\n"
            f"The edge {a} -> {b} was proposed by this algorithm alone."
        )
    else:
        instruction = t["edge_instruction"]
        context_head = f"Discovery algorithm: {algorithm_name}"
    causal_context = f"{context_head}\nCurrent graph edges: {graph_summary}"
    question = (
        f"Does {a} cause {b}? Answer keep if {a} directly causes {b}, "
        f"reverse if {b} directly causes {a}, or remove if neither directly "
        f"causes the other."
    )
    return CausalPrompt(
        instruction=instruction,
        causal_context=causal_context,
        metadata=_metadata_block(meta, domain),
        question=question,
        output_format=t["verdict_format"],
    )


def build_addition_prompt(
    graph_summary: str,
    meta: Sequence[VariableMeta],
    domain: str = "",
    max_suggestions: int = 5,
    templates: Optional[dict] = None,
) -> CausalPrompt:
    """Prompt asking for causal edges missing from the current graph."""
    t = templates or DEFAULT_TEMPLATES
    question = (
        f"List up to {max_suggestions} causal edges missing from the current "
        f"graph, with a confidence level for each. You may name an unobserved "
        f"variable if a well-known direct mechanism requires it."
    )
    output_format = (
        f"Reply with a single JSON array of at most {max_suggestions} elements "
        f"and nothing else; use [] if nothing is missing:\n"
        '[{"from": "<variable>", "to": "<variable>", '
        '"confidence": "very_high" | "high" | "moderate" | "low", '
        '"reason": "<one short sentence>"}]'
    )
    return CausalPrompt(
        instruction=t["addition_instruction"],
        causal_context=f"Current graph edges: {graph_summary}",
        metadata=_metadata_block(meta, domain),
        question=question,
        output_format=output_format,
    )


def _escape_body(text: str) -> str:
    # keep section labels unique in the rendered text: any body line that
    # could look like a label (or an escape of one) gets a backslash prefix
    out = []
    for line in text.split("\n"):
        if line.startswith("#") or line.startswith("\\"):
            out.append("\\" + line)
        else:
            out.append(line)
    return "\n".join(out)


def render(p: CausalPrompt) -> str:
    """Concatenate the five labeled sections, one blank line between sections."""
    bodies = (p.instruction, p.causal_context, p.metadata, p.question, p.output_format)
    for label, body in zip(SECTION_LABELS, bodies):
        if not body.strip():
            raise EmptyBlock(f"section {label[4:]!r} is empty")
    sections = [
        f"{label}\n{_escape_body(body)}" for label, body in zip(SECTION_LABELS, bodies)
    ]
    return "\n\n".join(sections) + "\n"
