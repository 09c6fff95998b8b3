"""Corpus BLEU and table-grounded precision/recall/F1 (plus adapter hooks).

BLEU follows the classic multi-bleu convention: corpus-level modified n-gram
precisions clipped against the best reference, geometric mean over orders
1..4, no smoothing, brevity penalty from the closest reference length.

The table-grounded metric scores each hypothesis against both its references
and the instance's triples. n-gram entailment uses the word-overlap model:
the entailment probability of an n-gram is the fraction of its tokens that
appear anywhere among the table values. External metrics that need linguistic
or neural resources are not computed here; they plug in via MetricAdapter.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

from .model import (
    DataInstance,
    InstanceScore,
    MetricReport,
    TokenCounts,
    harmonic_mean,
    predicate_words,
)

_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation as separate tokens."""
    return _TOKEN.findall(text.lower())


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(hyp_len: int, ref_lens: Iterable[int]) -> int:
    best_len = None
    best_diff = None
    for length in ref_lens:
        diff = abs(length - hyp_len)
        if best_diff is None or diff < best_diff or (diff == best_diff and length < best_len):
            best_diff = diff
            best_len = length
    return best_len


def corpus_bleu(
    hyps: Sequence[Sequence[str]],
    refs_list: Sequence[Sequence[Sequence[str]]],
    max_n: int = 4,
) -> float:
    """Corpus BLEU in [0, 100] over token lists; one reference list per hypothesis."""
    if len(hyps) != len(refs_list):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs_list)} reference lists")
    if not hyps:
        raise ValueError("empty corpus")
    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len_total = 0
    ref_len_total = 0
    for hyp, refs in zip(hyps, refs_list):
        if not refs:
            raise ValueError("hypothesis without references")
        hyp_len_total += len(hyp)
        ref_len_total += _closest_ref_length(len(hyp), (len(r) for r in refs))
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hyp, n)
            if not hyp_counts:
                continue
            best_ref: Counter = Counter()
            for ref in refs:
                for gram, count in _ngram_counts(ref, n).items():
                    if count > best_ref[gram]:
                        best_ref[gram] = count
            totals[n - 1] += sum(hyp_counts.values())
            clipped[n - 1] += sum(min(c, best_ref[g]) for g, c in hyp_counts.items())
    if hyp_len_total == 0:
        return 0.0
    log_precision = 0.0
    for n in range(max_n):
        if clipped[n] == 0 or totals[n] == 0:
            return 0.0
        log_precision += math.log(clipped[n] / totals[n])
    if hyp_len_total > ref_len_total:
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - ref_len_total / hyp_len_total)
    return 100.0 * brevity * math.exp(log_precision / max_n)


@dataclass(frozen=True)
class EvalExample:
    """Tokenized hypothesis, references and table values for one instance.

    All three views must come from the same tokenizer so overlap counts are
    comparable.
    """

    hypothesis: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]
    table_values: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError("an EvalExample needs at least one reference")


def example_from_instance(instance: DataInstance, hypothesis: str) -> EvalExample:
    """Tokenize one instance's hypothesis, references, and triple values."""
    values = []
    for triple in instance.triples:
        for text in (triple.subject, predicate_words(triple.predicate), triple.object):
            tokens = tuple(tokenize(text))
            if tokens:
                values.append(tokens)
    return EvalExample(
        hypothesis=tuple(tokenize(hypothesis)),
        references=tuple(tuple(tokenize(r)) for r in instance.references),
        table_values=tuple(values),
    )


def _geometric_mean(values: Sequence[float]) -> float:
    if not values:
        return 0.0
    if any(v == 0.0 for v in values):
        return 0.0
    return math.exp(sum(math.log(v) for v in values) / len(values))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j in range(1, len(b) + 1):
            if token == b[j - 1]:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def parent_instance(
    example: EvalExample, lambda_weight: float = 0.5, max_n: int = 4
) -> tuple[float, float, float]:
    """(precision, recall, f1) for one example; see module docstring."""
    bag = {token for seq in example.table_values for token in seq}

    def entailment(gram: tuple[str, ...]) -> float:
        return sum(1 for token in gram if token in bag) / len(gram)

    hyp = example.hypothesis
    order_precisions = []
    hyp_counts_by_n = {}
    for n in range(1, max_n + 1):
        hyp_counts = _ngram_counts(hyp, n)
        hyp_counts_by_n[n] = hyp_counts
        if not hyp_counts:
            continue
        best_ref: Counter = Counter()
        for ref in example.references:
            for gram, count in _ngram_counts(ref, n).items():
                if count > best_ref[gram]:
                    best_ref[gram] = count
        numerator = 0.0
        denominator = 0
        for gram, count in hyp_counts.items():
            p_ref = min(1.0, best_ref[gram] / count)
            numerator += count * (p_ref + (1.0 - p_ref) * entailment(gram))
            denominator += count
        order_precisions.append(numerator / denominator)
    precision = _geometric_mean(order_precisions)

    ref_recall = 0.0
    for ref in example.references:
        order_recalls = []
        for n in range(1, max_n + 1):
            ref_counts = _ngram_counts(ref, n)
            numerator = 0.0
            denominator = 0.0
            for gram, count in ref_counts.items():
                weight = entailment(gram)
                denominator += count * weight
                numerator += min(hyp_counts_by_n[n][gram], count) * weight
            if denominator > 0.0:
                order_recalls.append(numerator / denominator)
        ref_recall = max(ref_recall, _geometric_mean(order_recalls))

    if example.table_values:
        table_recall = sum(
            _lcs_length(seq, hyp) / len(seq) for seq in example.table_values
        ) / len(example.table_values)
    else:
        table_recall = 0.0

    recall = (ref_recall ** (1.0 - lambda_weight)) * (table_recall**lambda_weight)
    return precision, recall, harmonic_mean(precision, recall)


def parent_scores(
    examples: Sequence[EvalExample], lambda_weight: float = 0.5
) -> tuple[float, float, float, list[tuple[float, float, float]]]:
    """Corpus precision/recall/F1 plus the per-instance score triples.

    Corpus precision and recall are means over instances; the corpus F1 is the
    harmonic mean of those two (zero when both vanish).
    """
    if not examples:
        raise ValueError("no examples to score")
    if not 0.0 <= lambda_weight <= 1.0:
        raise ValueError("lambda_weight must lie in [0, 1]")
    per_instance = [parent_instance(e, lambda_weight) for e in examples]
    precision = sum(p for p, _, _ in per_instance) / len(per_instance)
    recall = sum(r for _, r, _ in per_instance) / len(per_instance)
    return precision, recall, harmonic_mean(precision, recall), per_instance


class MetricAdapter(Protocol):
    """Hook for metrics computed by external tools (shell-out or HTTP)."""

    name: str

    def score(self, hypotheses: Sequence[str], references: Sequence[Sequence[str]]) -> float: ...


@dataclass(frozen=True)
class CommandAdapter:
    """Scores via an external command: hypotheses/references go in as JSON on
    stdin, one float comes back on stdout. Nothing is computed natively."""

    name: str
    command: tuple[str, ...]
    timeout: float = 600.0

    def score(self, hypotheses: Sequence[str], references: Sequence[Sequence[str]]) -> float:
        import json
        import subprocess

        payload = json.dumps(
            {"hypotheses": list(hypotheses), "references": [list(r) for r in references]}
        )
        result = subprocess.run(
            list(self.command),
            input=payload,
            capture_output=True,
            text=True,
            timeout=self.timeout,
            check=True,
        )
        return float(result.stdout.strip())


def run_adapters(
    adapters: Sequence[MetricAdapter],
    corpus_hyps: Mapping[str, str],
    instances: Sequence[DataInstance],
) -> dict[str, float]:
    """Score hypotheses with external metric adapters, keyed by adapter name."""
    ordered = sorted(instances, key=lambda i: i.id)
    hyps = [corpus_hyps[i.id] for i in ordered]
    refs = [list(i.references) for i in ordered]
    return {adapter.name: adapter.score(hyps, refs) for adapter in adapters}


def evaluate(
    corpus_hyps: Mapping[str, str],
    instances: Sequence[DataInstance],
    parent_lambda: float = 0.5,
) -> MetricReport:
    """Score hypotheses (keyed by instance id) against a corpus.

    Deterministic: instances are processed in id order, so permuting the input
    changes nothing. Every instance must have a hypothesis and at least one
    reference.
    """
    ordered = sorted(instances, key=lambda i: i.id)
    instance_ids = {i.id for i in ordered}
    if len(instance_ids) != len(ordered):
        raise ValueError("duplicate instance ids in corpus")
    missing = sorted(instance_ids - set(corpus_hyps))
    extra = sorted(set(corpus_hyps) - instance_ids)
    if missing or extra:
        raise ValueError(f"hypothesis/instance id mismatch: missing={missing} extra={extra}")
    unlabeled = [i.id for i in ordered if not i.references]
    if unlabeled:
        raise ValueError(f"instances without references cannot be scored: {unlabeled}")

    examples = [example_from_instance(i, corpus_hyps[i.id]) for i in ordered]
    bleu = corpus_bleu(
        [e.hypothesis for e in examples], [e.references for e in examples]
    )
    precision, recall, f1, per_instance = parent_scores(examples, parent_lambda)
    counts = TokenCounts(
        instances=len(examples),
        hypothesis_tokens=sum(len(e.hypothesis) for e in examples),
        reference_tokens=sum(
            _closest_ref_length(len(e.hypothesis), (len(r) for r in e.references))
            for e in examples
        ),
    )
    return MetricReport(
        bleu=bleu,
        parent_precision=precision,
        parent_recall=recall,
        parent_f1=f1,
        per_instance=tuple(
            InstanceScore(i.id, p, r, f)
            for i, (p, r, f) in zip(ordered, per_instance)
        ),
        counts=counts,
        parent_lambda=parent_lambda,
    )
