"""Year mention extraction, sequence labeling, and corpus temporal profiles.

Extraction is ASCII/English: bare 3-4 digit numbers in [100, 2999] count as
years on their own, anything else needs an explicit era marker ("606 AD",
"AD 606", "250 BC", "75,000 BCE").  BCE years map to negative values.
Matches that do not form a representable year (year zero, beyond the
supported range) are ignored rather than raised.

Profiles are streaming folds over a corpus: a Gregorian histogram with a
fixed bin width (BCE years bin negatively) and a sexagenary histogram over
the sixty cycle classes, plus entropy/chi-square uniformity metrics to
compare the two views.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from . import sexagenary
from .errors import EmptyHistogramError
from .sexagenary import CycleIndex, GregorianYear, YearOutOfRangeError, YearZeroError
from .tokenizer import Tokenizer

# Lookarounds admit punctuation commas ("in 1920, the...") but reject digits
# inside comma-grouped numbers ("75,000").
_NUM = r"\d{1,3}(?:,\d{3})+|\d+"
_BEFORE = r"(?<!\d)(?<!\d,)"
_AFTER = r"(?!\d)(?!,\d)"
_MENTION_RE = re.compile(
    rf"\bAD\s+({_NUM}){_AFTER}"
    rf"|{_BEFORE}({_NUM})\s*(BCE|BC|AD)\b"
    rf"|{_BEFORE}(\d{{3,4}}){_AFTER}"
)


@dataclass(frozen=True)
class YearMention:
    start: int
    end: int
    year: GregorianYear
    surface: str


@dataclass
class AnnotatedSequence:
    """A text with token ids, detected year mentions, and its cycle class.

    The class label is the cycle index of the first mention; sequences
    without a year mention carry no label.  Token spans are kept so
    mentions can be located at token granularity.
    """

    text: str
    tokens: list[int]
    token_spans: list[tuple[int, int]]
    mentions: list[YearMention] = field(default_factory=list)
    class_label: CycleIndex | None = None


def extract_year_mentions(text: str) -> list[YearMention]:
    """All non-overlapping year mentions, left to right."""
    out = []
    for m in _MENTION_RE.finditer(text):
        ad_prefixed, marked, marker, bare = m.groups()
        if ad_prefixed is not None:
            value = int(ad_prefixed.replace(",", ""))
        elif marked is not None:
            value = int(marked.replace(",", ""))
            if marker in ("BCE", "BC"):
                value = -value
        else:
            value = int(bare)
            if not 100 <= value <= 2999:
                continue
        try:
            year = GregorianYear(value)
        except (YearZeroError, YearOutOfRangeError):
            continue
        out.append(YearMention(start=m.start(), end=m.end(), year=year, surface=m.group(0)))
    return out


def annotate(text: str, tokenizer: Tokenizer) -> AnnotatedSequence:
    """Tokenize a text and stamp it with its sexagenary class, if any."""
    ids, spans = tokenizer.encode_with_spans(text)
    mentions = extract_year_mentions(text)
    label = sexagenary.to_cycle_index(mentions[0].year) if mentions else None
    return AnnotatedSequence(
        text=text, tokens=ids, token_spans=spans, mentions=mentions, class_label=label
    )


def mention_token_indices(seq: AnnotatedSequence, mention: YearMention) -> list[int]:
    """Token positions whose spans overlap the mention's character span."""
    return [
        i
        for i, (s, e) in enumerate(seq.token_spans)
        if s < mention.end and e > mention.start
    ]


# --- corpus profiles ---------------------------------------------------


@dataclass
class YearHistogram:
    """Binned mention counts.

    ``bins`` holds ((start, end), count) with end exclusive.  The Gregorian
    view lists only nonempty bins; ``capable_bins`` counts every bin in the
    contiguous covered span, so uniformity metrics see interior zeros.  The
    sexagenary view always lists all sixty class bins.
    """

    bin_width_years: int
    bins: list[tuple[tuple[int, int], int]]
    total: int
    capable_bins: int


def iter_corpus(path) -> Iterator[str]:
    """Texts from a newline-delimited JSON corpus with a required "text" field."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            if "text" not in record:
                raise ValueError(f"{path}:{lineno}: record has no \"text\" field")
            yield record["text"]


def profile_gregorian(texts: Iterable[str], bin_width: int) -> YearHistogram:
    """Histogram of Gregorian year mentions at a fixed bin width."""
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    counts: Counter[int] = Counter()
    total = 0
    for text in texts:
        for mention in extract_year_mentions(text):
            start = (mention.year.value // bin_width) * bin_width
            counts[start] += 1
            total += 1
    if not counts:
        return YearHistogram(bin_width_years=bin_width, bins=[], total=0, capable_bins=0)
    starts = sorted(counts)
    span = (starts[-1] - starts[0]) // bin_width + 1
    bins = [((s, s + bin_width), counts[s]) for s in starts]
    return YearHistogram(bin_width_years=bin_width, bins=bins, total=total, capable_bins=span)


def profile_sexagenary(texts: Iterable[str]) -> YearHistogram:
    """Mention counts over the sixty sexagenary classes (all bins listed)."""
    counts = [0] * 60
    total = 0
    for text in texts:
        for mention in extract_year_mentions(text):
            counts[sexagenary.to_cycle_index(mention.year).value] += 1
            total += 1
    bins = [((k, k + 1), counts[k]) for k in range(60)]
    return YearHistogram(bin_width_years=1, bins=bins, total=total, capable_bins=60)


def uniformity_metrics(h: YearHistogram) -> tuple[float, float]:
    """(normalized entropy, chi-square against a uniform spread).

    Entropy is normalized by log of the capable bin count; a single-bin
    histogram is uniform by convention (entropy 1.0).  Chi-square includes
    the expected mass of capable-but-empty bins.
    """
    if h.total == 0:
        raise EmptyHistogramError("histogram has no counted mentions")
    counts = [c for _, c in h.bins]
    entropy = -sum((c / h.total) * math.log(c / h.total) for c in counts if c > 0)
    normalized = 1.0 if h.capable_bins <= 1 else entropy / math.log(h.capable_bins)
    expected = h.total / h.capable_bins
    missing = h.capable_bins - len(counts)
    chi_square = sum((c - expected) ** 2 / expected for c in counts) + missing * expected
    return normalized, chi_square
