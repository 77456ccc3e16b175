"""Exact conversion between Gregorian years and the sexagenary cycle.

The sexagenary cycle pairs ten heavenly stems with twelve earthly branches
into sixty year terms, Jiazi through Guihai, repeating every sixty years
(1864 and 1924 are both Jiazi years).  Conversion is total over the
supported range [-75000, 9999]: negative values are BCE years, there is no
year zero, and 4 AD anchors the cycle at index 1 (Jiazi).  Index 0 is
Guihai.

All functions are pure and accept either a ``GregorianYear`` or a plain
``int`` where a year is expected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidRangeError, YearOutOfRangeError, YearZeroError

MIN_YEAR = -75000
MAX_YEAR = 9999

STEMS = ("Jia", "Yi", "Bing", "Ding", "Wu", "Ji", "Geng", "Xin", "Ren", "Gui")
BRANCHES = ("Zi", "Chou", "Yin", "Mao", "Chen", "Si", "Wu", "Wei", "Shen", "You", "Xu", "Hai")


@dataclass(frozen=True, order=True)
class GregorianYear:
    """A signed calendar year: negative = BCE, positive = AD, no year zero."""

    value: int

    def __post_init__(self):
        if self.value == 0:
            raise YearZeroError("no year zero exists in the calendar")
        if not MIN_YEAR <= self.value <= MAX_YEAR:
            raise YearOutOfRangeError(
                f"year {self.value} outside supported range [{MIN_YEAR}, {MAX_YEAR}]"
            )


@dataclass(frozen=True, order=True)
class CycleIndex:
    """Position of a year within the sexagenary cycle, in [0, 59]."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value <= 59:
            raise ValueError(f"cycle index {self.value} outside [0, 59]")


@dataclass(frozen=True)
class SexagenaryTerm:
    """One of the sixty stem-branch terms.

    ``term_number`` runs 1 (Jiazi) through 60 (Guihai); the stem and branch
    indices are its residues mod 10 and mod 12, which forces matching parity.
    """

    stem: int
    branch: int
    term_number: int
    name: str

    def __post_init__(self):
        if not 1 <= self.term_number <= 60:
            raise ValueError(f"term number {self.term_number} outside [1, 60]")
        if self.stem != (self.term_number - 1) % 10 or self.branch != (self.term_number - 1) % 12:
            raise ValueError("stem/branch inconsistent with term number")

    @classmethod
    def from_term_number(cls, n: int) -> "SexagenaryTerm":
        stem = (n - 1) % 10
        branch = (n - 1) % 12
        name = STEMS[stem] + BRANCHES[branch].lower()
        return cls(stem=stem, branch=branch, term_number=n, name=name)


def _as_year(year: GregorianYear | int) -> GregorianYear:
    return year if isinstance(year, GregorianYear) else GregorianYear(int(year))


def _as_index(index: CycleIndex | int) -> CycleIndex:
    return index if isinstance(index, CycleIndex) else CycleIndex(int(index))


def to_cycle_index(year: GregorianYear | int) -> CycleIndex:
    """Map a Gregorian year to its sexagenary cycle index.

    Three cases cover the missing year zero: BCE years, the first three AD
    years, and 4 AD onward.  The anchor 4 AD maps to index 1 (Jiazi).
    """
    t = _as_year(year).value
    if t < 0:
        value = (60 - abs(t) - 2) % 60
    elif t < 4:
        value = (60 - abs(t - 3)) % 60
    else:
        value = (t - 3) % 60
    return CycleIndex(value)


def term_of(index: CycleIndex | int) -> SexagenaryTerm:
    """The stem-branch term carried by a cycle index (index 1 = Jiazi)."""
    idx = _as_index(index)
    return SexagenaryTerm.from_term_number(((idx.value + 59) % 60) + 1)


def astronomical(year: GregorianYear | int) -> int:
    """Astronomical year numbering: 1 BCE becomes 0, removing the gap at zero."""
    v = _as_year(year).value
    return v if v > 0 else v + 1


def epoch_index(year: GregorianYear | int) -> int:
    """Completed sixty-year cycles since the anchor 4 AD (floor toward minus infinity)."""
    return (astronomical(year) - 4) // 60


def _from_astronomical(a: int) -> GregorianYear:
    return GregorianYear(a if a >= 1 else a - 1)


def years_in_term(
    term: SexagenaryTerm, lo: GregorianYear | int, hi: GregorianYear | int
) -> list[GregorianYear]:
    """All years in [lo, hi] carrying ``term``, ascending, sixty apart.

    Raises InvalidRangeError when lo > hi.
    """
    lo_y, hi_y = _as_year(lo), _as_year(hi)
    if lo_y.value > hi_y.value:
        raise InvalidRangeError(f"empty interval [{lo_y.value}, {hi_y.value}]")
    # Index i occurs exactly at astronomical years congruent to i + 3 mod 60.
    target = (term.term_number % 60 + 3) % 60
    a = astronomical(lo_y)
    first = a + (target - a) % 60
    out = []
    for cand in range(first, astronomical(hi_y) + 1, 60):
        out.append(_from_astronomical(cand))
    return out
