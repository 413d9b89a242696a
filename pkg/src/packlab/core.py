"""Exact item sizes, category classification, and the size-to-weight map.

Everything downstream (packers, chains, LPs) relies on sizes being exact
rationals: category boundaries sit exactly at 1/4, 1/3 and 1/2, and the
open-bin chain is only finite when loads are exact subset sums.  Floats
appear solely in reported ratios at output time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence


class PackLabError(Exception):
    """Base class for all package errors."""


class SizeDomainError(PackLabError):
    """An item size fell outside the admissible range (0, 1]."""


class ParseError(PackLabError):
    """Malformed textual input; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapExceededError(PackLabError):
    """A configured resource cap (instance size, states, patterns) was hit."""


class CoverageError(PackLabError):
    """A packing recipe fails to cover some item type of a distribution."""


class InvariantError(PackLabError):
    """An internal consistency condition that should always hold was violated."""


HALF = Fraction(1, 2)
THIRD = Fraction(1, 3)
QUARTER = Fraction(1, 4)
TWO_THIRDS = Fraction(2, 3)
THREE_QUARTERS = Fraction(3, 4)
ONE = Fraction(1)


class Category(Enum):
    """Size classes over (0, 1], half-open on the left."""

    LARGE = "L"
    MEDIUM = "M"
    SMALL = "S"
    TINY = "T"

    @property
    def order(self) -> int:
        """Rank in increasing size order: TINY < SMALL < MEDIUM < LARGE."""
        return _CATEGORY_ORDER[self]


_CATEGORY_ORDER = {
    Category.TINY: 0,
    Category.SMALL: 1,
    Category.MEDIUM: 2,
    Category.LARGE: 3,
}


def as_size(value: Fraction | int | str) -> Fraction:
    """Coerce to an exact rational size and validate 0 < size <= 1."""
    if isinstance(value, float):
        raise SizeDomainError(
            f"refusing float size {value!r}; pass a Fraction or a string"
        )
    try:
        size = Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"not a rational size: {value!r} ({exc})") from None
    if not 0 < size <= 1:
        raise SizeDomainError(f"size {size} outside (0, 1]")
    return size


def parse_size(text: str) -> Fraction:
    """Parse a decimal ("0.245") or fraction ("49/200") string exactly.

    Decimal inputs become rationals over a power of ten, so boundary
    behaviour (0.245 <= 1/4, say) is decided exactly.
    """
    text = text.strip()
    if not text:
        raise ParseError("empty size string")
    try:
        size = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"malformed size {text!r}") from None
    if not 0 < size <= 1:
        raise SizeDomainError(f"size {size} outside (0, 1]")
    return size


def classify(size: Fraction) -> Category:
    """Map a size to its category; boundaries resolved by exact comparison."""
    size = as_size(size)
    if size > HALF:
        return Category.LARGE
    if size > THIRD:
        return Category.MEDIUM
    if size > QUARTER:
        return Category.SMALL
    return Category.TINY


def weight(size: Fraction) -> Fraction:
    """Rounded-up value of an item: 1 / 1/2 / 1/2 / 3*size by category."""
    size = as_size(size)
    cat = classify(size)
    if cat is Category.LARGE:
        return ONE
    if cat is Category.MEDIUM or cat is Category.SMALL:
        return HALF
    return 3 * size


@dataclass(frozen=True)
class Instance:
    """An ordered list of item sizes in canonical (unpermuted) order."""

    items: tuple[Fraction, ...]
    id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(as_size(s) for s in self.items))

    def __len__(self) -> int:
        return len(self.items)

    @property
    def volume(self) -> Fraction:
        return sum(self.items, Fraction(0))

    def category_counts(self) -> dict[Category, int]:
        counts = {c: 0 for c in Category}
        for s in self.items:
            counts[classify(s)] += 1
        return counts

    def permuted(self, perm: Sequence[int]) -> tuple[Fraction, ...]:
        """Arrival order under ``perm``: position i receives item perm[i]."""
        check_permutation(perm, len(self.items))
        return tuple(self.items[j] for j in perm)


def check_permutation(perm: Sequence[int], n: int) -> None:
    """Validate that ``perm`` is a bijection on range(n) (0-based)."""
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise InvariantError(f"not a permutation of range({n}): {perm!r}")


def identity_permutation(n: int) -> tuple[int, ...]:
    return tuple(range(n))


def parse_instance(lines: Iterable[str], id: str | None = None) -> Instance:
    """Parse an instance from text lines: one size per line, '#' comments."""
    items: list[Fraction] = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            items.append(parse_size(text))
        except (ParseError, SizeDomainError) as exc:
            raise ParseError(str(exc), line=lineno) from None
    return Instance(tuple(items), id=id)


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        return parse_instance(fh, id=path.name)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely many item sizes with rational probabilities summing to 1."""

    sizes: tuple[Fraction, ...]
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        sizes = tuple(as_size(s) for s in self.sizes)
        probs = tuple(Fraction(p) for p in self.probs)
        if len(sizes) != len(probs) or not sizes:
            raise InvariantError("sizes and probs must be nonempty and aligned")
        if len(set(sizes)) != len(sizes):
            raise InvariantError("distribution sizes must be distinct")
        if any(p <= 0 for p in probs):
            raise InvariantError("probabilities must be positive")
        if sum(probs) != 1:
            raise InvariantError(f"probabilities sum to {sum(probs)}, not 1")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.sizes)

    @property
    def min_size(self) -> Fraction:
        return min(self.sizes)

    def items(self) -> list[tuple[Fraction, Fraction]]:
        return list(zip(self.sizes, self.probs))
