"""Optional summarization pass that distills documents before ranking.

Large documents (decompiled functions, long pages) can exceed what a
batch-ranking prompt comfortably holds; this pass replaces each document's
ranking payload with a short model-written summary while preserving the
original text on the document record.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import RankerError
from .rankers import ChatCompletionsClient
from .types import Document

PROMPT_TEMPLATES = {
    "default": (
        "In just a few sentences, summarize what this function appears to be "
        "doing. Provide roughly 3 sentences of medium-level technical "
        "explanation (e.g., if a developer were speaking to a technical "
        "product manager), and then 1 sentence of high-level business "
        "explanation (e.g., if a technical product manager were speaking to "
        "a sales representative)."
    ),
    "query_focused": (
        "In just a few sentences, summarize this document with particular "
        "attention to anything bearing on the following question: {query}. "
        "Provide roughly 3 sentences of technical explanation and 1 sentence "
        "of plain-language explanation."
    ),
}


@dataclass(frozen=True)
class SummaryJob:
    doc_id: str
    text: str
    template: str = "default"
    query_focus: str | None = None


def summarize(job: SummaryJob, client: ChatCompletionsClient) -> str:
    """Produce a summary for one document. Raises RankerError on model failure."""
    if not job.text:
        raise ValueError(f"document {job.doc_id!r} has empty text")
    try:
        template = PROMPT_TEMPLATES[job.template]
    except KeyError:
        raise ValueError(f"unknown prompt template {job.template!r}") from None
    instruction = template.format(query=job.query_focus or "")
    messages = [
        {"role": "user", "content": f"{instruction}\n\n{job.text}"},
    ]
    summary, _ = client.complete(messages)
    summary = summary.strip()
    if not summary:
        raise RankerError(f"model returned an empty summary for {job.doc_id!r}")
    return summary


def summarize_corpus(documents: Sequence[Document], client: ChatCompletionsClient, *,
                     concurrency: int = 4, template: str = "default",
                     query_focus: str | None = None,
                     force: bool = False) -> tuple[list[Document], list[str]]:
    """Summarize every document, preserving order, count, and originals.

    Documents already carrying a summary are skipped unless ``force`` is
    set. A document whose summarization fails passes through unchanged and
    is reported in the returned failure list; ranking tolerates the odd
    unsummarized item by design.
    """
    failed: list[str] = []

    def work(doc: Document) -> Document:
        if doc.source_text is not None and not force:
            return doc
        job = SummaryJob(doc.id, doc.text,
                         template="query_focused" if query_focus else template,
                         query_focus=query_focus)
        try:
            summary = summarize(job, client)
        except RankerError:
            failed.append(doc.id)
            return doc
        return replace(doc, text=summary, source_text=doc.text)

    if concurrency > 1 and len(documents) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            out = list(pool.map(work, documents))
    else:
        out = [work(doc) for doc in documents]
    return out, sorted(failed)
