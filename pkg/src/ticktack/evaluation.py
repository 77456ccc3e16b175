"""Alignment diagnostics: similarity matrices, clustering scores, synthetic QA.

The synthetic task generator is a desk-scale stand-in for a long-span
temporal QA corpus: deterministic year-conditioned facts ("In YEAR,
ENTITY did ACTION") spanning BCE through post-2000, with a matching
declarative training corpus and a held-out exemplar pool for few-shot
prompts.  Scoring picks the option whose completion has the highest
length-normalized log-likelihood, and accuracy is reported per era
bucket (BCE, 500-year AD intervals, post-2000).
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field

import numpy as np
import torch

from . import sexagenary
from .annotate import AnnotatedSequence, annotate
from .errors import DegeneratePartitionError, InsufficientDataError, ZeroVectorError
from .geometry import EncodingConfig
from .model import ModelConfig, ParameterSet, forward, sentence_embedding
from .tokenizer import Tokenizer

ERA_BUCKETS = (
    ("BCE", -(10**9), -1),
    ("AD1-500", 1, 500),
    ("AD501-1000", 501, 1000),
    ("AD1001-1500", 1001, 1500),
    ("AD1501-2000", 1501, 2000),
    ("post-2000", 2001, 10**9),
)

_ENTITIES = (
    "Aldan", "Beron", "Cadia", "Doran", "Elvia", "Fenric", "Galen", "Halvar",
    "Iskra", "Joral", "Kestrel", "Lira", "Moren", "Nerida", "Orin", "Peralt",
    "Quessa", "Rovan", "Selka", "Torvald", "Ulmar", "Vessia", "Wendel", "Yorick",
)
_VERBS = (
    "opened", "closed", "restored", "founded", "crowned", "charted",
    "sealed", "raised", "banished", "united", "divided", "blessed",
)
_OBJECTS = (
    "the stone bridge", "the river port", "the high temple", "the salt mine",
    "the border keep", "the grand library", "the old aqueduct", "the harbor wall",
    "the mountain pass", "the trade guild", "the star tower", "the long canal",
)
_FILLERS = (
    "The guild kept its old records in careful order.",
    "Merchants crossed the valley whenever the road was dry.",
    "The archive holds maps, letters, and sealed decrees.",
    "A quiet market day ended without any news.",
)


def era_bucket(year: int) -> str:
    for label, lo, hi in ERA_BUCKETS:
        if lo <= year <= hi:
            return label
    raise ValueError(f"year {year} fits no era bucket")


def year_surface(year: int) -> str:
    """Writable form of a year that the mention extractor recovers."""
    if year < 0:
        return f"{-year} BCE"
    if year < 100 or year > 2999:
        return f"{year} AD"
    return str(year)


@dataclass
class SimilarityMatrix:
    years: list[int]
    values: np.ndarray


def year_similarity_matrix(
    params: ParameterSet,
    model_cfg: ModelConfig,
    enc_cfg: EncodingConfig,
    tokenizer: Tokenizer,
    years: list[int],
    probe_template: str,
    injection_enabled: bool = True,
) -> SimilarityMatrix:
    """Pairwise cosine similarities of pooled probe embeddings per year.

    The template must contain a single ``{year}`` placeholder; each filled
    probe runs through the model (injection uses the probe's own year) and
    is mean-pooled before the cosine matrix is assembled.
    """
    if "{year}" not in probe_template:
        raise ValueError("probe template needs a {year} placeholder")
    embeddings = []
    for year in years:
        seq = annotate(probe_template.format(year=year_surface(year)), tokenizer)
        _, hidden = forward(
            params, seq, model_cfg, enc_cfg,
            injection_enabled=injection_enabled, injection_year=year,
        )
        embeddings.append(sentence_embedding(hidden).detach().numpy())
    mat = np.asarray(embeddings)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if norms.min() == 0.0:
        raise ZeroVectorError("zero-norm probe embedding")
    unit = mat / norms
    sims = unit @ unit.T
    sims = np.clip((sims + sims.T) / 2.0, -1.0, 1.0)
    return SimilarityMatrix(years=list(years), values=sims)


def same_term_contrast(m: SimilarityMatrix) -> tuple[float, float]:
    """(mean same-term cosine, mean different-term cosine) over distinct year pairs."""
    idx = [sexagenary.to_cycle_index(y).value for y in m.years]
    same_vals, diff_vals = [], []
    for i in range(len(m.years)):
        for j in range(i + 1, len(m.years)):
            if m.years[i] == m.years[j]:
                continue
            (same_vals if idx[i] == idx[j] else diff_vals).append(m.values[i, j])
    if not same_vals or not diff_vals:
        raise DegeneratePartitionError("need both same-term and different-term year pairs")
    return float(np.mean(same_vals)), float(np.mean(diff_vals))


@dataclass
class ClusteringMetrics:
    silhouette: float
    intra_mean: float
    inter_mean: float


def clustering_metrics(embeddings: list[tuple[np.ndarray, int]]) -> ClusteringMetrics:
    """Cosine-distance silhouette plus mean intra/inter-class cosines.

    Labels are sexagenary cycle indices.  Points in singleton classes get
    silhouette 0 by convention; at least two populated classes are
    required.
    """
    if len(embeddings) < 2:
        raise DegeneratePartitionError("need at least two embeddings")
    mat = np.asarray([np.asarray(v, dtype=np.float64) for v, _ in embeddings])
    labels = np.asarray([int(l) for _, l in embeddings])
    if len(set(labels.tolist())) < 2:
        raise DegeneratePartitionError("need at least two distinct classes")
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if norms.min() == 0.0:
        raise ZeroVectorError("zero-norm embedding")
    unit = mat / norms
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    dists = 1.0 - sims
    n = len(labels)
    scores = np.zeros(n)
    same_mask = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    for i in range(n):
        own = same_mask[i] & off_diag[i]
        if not own.any():
            continue  # singleton class: score stays 0
        a = dists[i, own].mean()
        b = min(
            dists[i, labels == other].mean()
            for other in set(labels.tolist())
            if other != labels[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    intra_pairs = same_mask & off_diag
    inter_pairs = ~same_mask
    intra_mean = float(sims[intra_pairs].mean()) if intra_pairs.any() else 0.0
    inter_mean = float(sims[inter_pairs].mean()) if inter_pairs.any() else 0.0
    return ClusteringMetrics(
        silhouette=float(scores.mean()), intra_mean=intra_mean, inter_mean=inter_mean
    )


# --- synthetic long-span QA --------------------------------------------


@dataclass(frozen=True)
class SyntheticQaItem:
    question: str
    options: tuple[str, str, str, str]
    answer_index: int
    year: int
    era_bucket: str


@dataclass
class TaskSet:
    items: list[SyntheticQaItem]
    corpus: list[str]
    fewshot_pool: list[SyntheticQaItem] = field(default_factory=list)


def _valid_years_from(start: int, count: int) -> list[int]:
    """``count`` consecutive calendar years from ``start``, skipping year zero."""
    out, y = [], start
    while len(out) < count:
        if y != 0:
            out.append(y)
        y += 1
    return out


def _draw_longtail_year(rng: random.Random, lo: int, hi: int) -> int:
    """Long-tail draw: mass in the recent past, thin tail into BCE."""
    roll = rng.random()
    if roll < 0.45:
        lo_r, hi_r = max(lo, 1900), min(hi, 2025)
    elif roll < 0.70:
        lo_r, hi_r = max(lo, 1500), min(hi, 1899)
    elif roll < 0.90:
        lo_r, hi_r = max(lo, 1), min(hi, 1499)
    else:
        lo_r, hi_r = lo, min(hi, -1)
    if lo_r > hi_r:  # requested region lies outside the allowed range
        lo_r, hi_r = lo, hi
    y = rng.randint(lo_r, hi_r)
    return y if y != 0 else 1


def generate_synthetic_tasks(
    seed: int,
    n_items: int,
    year_range: tuple[int, int] = (-75000, 2025),
    n_entities: int = 16,
    n_fewshot: int = 8,
) -> TaskSet:
    """Deterministic year-fact QA items plus their declarative training corpus.

    A consecutive block of up to sixty years guarantees every sexagenary
    class shows up when ``n_items`` allows; the remaining years are drawn
    long-tail so BCE buckets stay low-resource.  Each fact assigns an
    entity and an action to a year; the matching corpus sentence states
    the fact and the question blanks the action.  ``n_fewshot`` extra
    facts form a held-out exemplar pool (their sentences are in the
    corpus, their items are not).
    """
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    lo, hi = year_range
    if lo > hi or lo < sexagenary.MIN_YEAR or hi > sexagenary.MAX_YEAR:
        raise ValueError(f"bad year range {year_range}")
    rng = random.Random(seed)
    entities = list(_ENTITIES[: max(1, min(n_entities, len(_ENTITIES)))])
    actions = [f"{v} {o}" for v in _VERBS for o in _OBJECTS]
    rng.shuffle(actions)
    actions = actions[:48]

    total = n_items + max(0, n_fewshot)
    span = hi - lo + 1
    block_len = min(60, total, span)
    block_start = min(max(lo, 1920), hi - block_len + 1)
    years = [y for y in _valid_years_from(block_start, block_len) if lo <= y <= hi]
    seen = set(years)
    attempts = 0
    while len(years) < total and attempts < 100 * total:
        y = _draw_longtail_year(rng, lo, hi)
        attempts += 1
        if y in seen:
            continue
        seen.add(y)
        years.append(y)
    if len(years) < total:
        raise ValueError(f"year range {year_range} too narrow for {total} distinct years")
    # Force BCE coverage when the range allows it.
    if lo < 0 and not any(y < 0 for y in years):
        years[-1] = rng.randint(lo, -1)

    items: list[SyntheticQaItem] = []
    corpus: list[str] = []
    for year in years:
        entity = rng.choice(entities)
        action = rng.choice(actions)
        surface = year_surface(year)
        corpus.append(f"In {surface}, {entity} {action}.")
        distractors = rng.sample([a for a in actions if a != action], 3)
        options = distractors + [action]
        rng.shuffle(options)
        items.append(
            SyntheticQaItem(
                question=f"In {surface}, {entity} ____.",
                options=tuple(options),
                answer_index=options.index(action),
                year=year,
                era_bucket=era_bucket(year),
            )
        )
    for filler in _FILLERS:
        corpus.append(filler)
    return TaskSet(items=items[:n_items], corpus=corpus, fewshot_pool=items[n_items:])


def write_items_jsonl(items: list[SyntheticQaItem], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(
                json.dumps(
                    {
                        "question": item.question,
                        "options": list(item.options),
                        "answer_index": item.answer_index,
                        "year": item.year,
                        "bucket": item.era_bucket,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_items_jsonl(path) -> list[SyntheticQaItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            items.append(
                SyntheticQaItem(
                    question=rec["question"],
                    options=tuple(rec["options"]),
                    answer_index=rec["answer_index"],
                    year=rec["year"],
                    era_bucket=rec["bucket"],
                )
            )
    return items


def write_corpus_jsonl(corpus: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, text in enumerate(corpus):
            fh.write(json.dumps({"id": i, "text": text}, sort_keys=True) + "\n")


# --- QA scoring ---------------------------------------------------------


@dataclass
class BucketResult:
    label: str
    count: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.count if self.count else 0.0


@dataclass
class EraReport:
    buckets: list[BucketResult]
    total: int
    correct: int

    @property
    def overall_accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


def _declarative(item: SyntheticQaItem) -> str:
    return item.question.replace("____", item.options[item.answer_index])


def _option_logprob(
    params, seq: AnnotatedSequence, model_cfg, enc_cfg, opt_start: int, opt_end: int,
    injection_enabled: bool, injection_year: int | None,
) -> float:
    """Mean log-likelihood of the option's tokens given everything before them."""
    logits, _ = forward(
        params, seq, model_cfg, enc_cfg,
        injection_enabled=injection_enabled, injection_year=injection_year,
    )
    logprobs = torch.log_softmax(logits, dim=-1)
    positions = [
        i
        for i, (s, e) in enumerate(seq.token_spans)
        if s >= opt_start and e <= opt_end and i >= 1
    ]
    if not positions:
        raise ValueError("option produced no scorable tokens")
    vals = [float(logprobs[i - 1, seq.tokens[i]]) for i in positions]
    return sum(vals) / len(vals)


def evaluate_qa(
    params: ParameterSet,
    model_cfg: ModelConfig,
    enc_cfg: EncodingConfig,
    tokenizer: Tokenizer,
    items: list[SyntheticQaItem],
    shots: int = 0,
    fewshot_pool: list[SyntheticQaItem] | None = None,
    seed: int = 0,
    injection_enabled: bool = False,
) -> EraReport:
    """Multiple-choice scoring by length-normalized option log-likelihood.

    With ``shots`` > 0 a fixed exemplar set is drawn once per call from the
    held-out pool with ``random.Random(seed)`` and prepended as declarative
    sentences.  Injection (when enabled) always stamps the scored item's
    own year, not an exemplar's.  Ties resolve to the lowest option index.
    """
    if not items:
        raise InsufficientDataError("no items to evaluate")
    prefix = ""
    if shots > 0:
        if not fewshot_pool or len(fewshot_pool) < shots:
            raise InsufficientDataError(f"few-shot pool smaller than {shots}")
        exemplars = random.Random(seed).sample(fewshot_pool, shots)
        prefix = " ".join(_declarative(e) for e in exemplars) + " "
    buckets = {label: BucketResult(label=label, count=0, correct=0) for label, _, _ in ERA_BUCKETS}
    for item in items:
        stem, suffix = item.question.split("____", 1)
        scores = []
        for option in item.options:
            text = prefix + stem + option + suffix
            seq = annotate(text, tokenizer)
            opt_start = len(prefix) + len(stem)
            scores.append(
                _option_logprob(
                    params, seq, model_cfg, enc_cfg,
                    opt_start, opt_start + len(option),
                    injection_enabled, item.year if injection_enabled else None,
                )
            )
        choice = int(np.argmax(scores))
        b = buckets[item.era_bucket]
        b.count += 1
        if choice == item.answer_index:
            b.correct += 1
    ordered = [buckets[label] for label, _, _ in ERA_BUCKETS]
    return EraReport(
        buckets=ordered,
        total=sum(b.count for b in ordered),
        correct=sum(b.correct for b in ordered),
    )


def report_to_dict(report: EraReport) -> dict:
    return {
        "overall_accuracy": report.overall_accuracy,
        "total": report.total,
        "correct": report.correct,
        "buckets": [
            {"bucket": b.label, "count": b.count, "correct": b.correct, "accuracy": b.accuracy}
            for b in report.buckets
        ],
    }


def write_report_csv(report: EraReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bucket", "count", "correct", "accuracy"])
        for b in report.buckets:
            writer.writerow([b.label, b.count, b.correct, repr(b.accuracy)])


def export_embeddings_csv(rows: list[tuple[int, int, np.ndarray]], path) -> None:
    """Rows of (year, class index, embedding) for external projection tools."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        dim = len(rows[0][2]) if rows else 0
        writer.writerow(["year", "class"] + [f"e{i}" for i in range(dim)])
        for year, label, vec in rows:
            writer.writerow([year, label] + [repr(float(v)) for v in vec])
