"""Online packers (Best-Fit, First-Fit, Next-Fit) with replayable traces.

Each packer is a pure function from an arrival sequence to a
:class:`PackingTrace`.  Traces record, per item, the chosen bin and its
load before insertion, which is exactly what the downstream analytics
need to locate threshold times without re-simulating.
"""

from __future__ import annotations

from bisect import bisect_right, insort
from dataclasses import dataclass, field
from fractions import Fraction
from heapq import heappop, heappush
from typing import Iterable, Sequence

from .core import InvariantError, as_size

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass(frozen=True, slots=True)
class PackEvent:
    """One placement: item `size` arrived at `time` and entered `bin_id`."""

    time: int
    size: Fraction
    bin_id: int
    load_before: Fraction
    opened_new: bool

    @property
    def load_after(self) -> Fraction:
        return self.load_before + self.size


@dataclass(slots=True)
class Bin:
    """Final state of one bin; `contents` holds (arrival time, size) pairs."""

    id: int
    load: Fraction
    contents: list[tuple[int, Fraction]] = field(default_factory=list)


@dataclass(frozen=True)
class PackingTrace:
    """Complete log of a packing run plus the final bin states."""

    algorithm: str
    events: tuple[PackEvent, ...]
    bins: tuple[Bin, ...]

    def __len__(self) -> int:
        return len(self.events)

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def num_bins(self) -> int:
        return len(self.bins)

    def final_loads(self) -> list[Fraction]:
        return [b.load for b in self.bins]

    def opened_time(self) -> list[int]:
        """Arrival time at which each bin was opened, indexed by bin id."""
        opened = [0] * len(self.bins)
        for ev in self.events:
            if ev.opened_new:
                opened[ev.bin_id] = ev.time
        return opened


def _prepare(sequence: Iterable[Fraction]) -> list[Fraction]:
    return [as_size(s) for s in sequence]


def _finish(algorithm: str, events: list[PackEvent], bins: list[Bin]) -> PackingTrace:
    return PackingTrace(algorithm=algorithm, events=tuple(events), bins=tuple(bins))


def best_fit(sequence: Iterable[Fraction]) -> PackingTrace:
    """Pack each item into the fullest bin where it fits.

    Ties between equal-load bins break toward the smallest bin id; a new
    bin is opened when no open bin can take the item.  The fullest-fitting
    bin is located by bisection on a sorted load list, so long sequences
    stay cheap.
    """
    sizes = _prepare(sequence)
    bins: list[Bin] = []
    events: list[PackEvent] = []
    loads: list[Fraction] = []  # sorted ascending, one entry per bin
    ids_at_load: dict[Fraction, list[int]] = {}  # load -> min-heap of bin ids

    for t, s in enumerate(sizes, start=1):
        pos = bisect_right(loads, 1 - s) - 1
        if pos < 0:
            bin_id = len(bins)
            bins.append(Bin(id=bin_id, load=s, contents=[(t, s)]))
            events.append(PackEvent(t, s, bin_id, ZERO, True))
            insort(loads, s)
            heappush(ids_at_load.setdefault(s, []), bin_id)
        else:
            load = loads[pos]
            heap = ids_at_load[load]
            bin_id = heappop(heap)
            if not heap:
                del ids_at_load[load]
            loads.pop(pos)
            new_load = load + s
            b = bins[bin_id]
            b.load = new_load
            b.contents.append((t, s))
            events.append(PackEvent(t, s, bin_id, load, False))
            insort(loads, new_load)
            heappush(ids_at_load.setdefault(new_load, []), bin_id)
    return _finish("best-fit", events, bins)


def first_fit(sequence: Iterable[Fraction]) -> PackingTrace:
    """Pack each item into the lowest-id bin where it fits."""
    sizes = _prepare(sequence)
    bins: list[Bin] = []
    events: list[PackEvent] = []
    for t, s in enumerate(sizes, start=1):
        for b in bins:
            if b.load + s <= 1:
                events.append(PackEvent(t, s, b.id, b.load, False))
                b.load += s
                b.contents.append((t, s))
                break
        else:
            bin_id = len(bins)
            bins.append(Bin(id=bin_id, load=s, contents=[(t, s)]))
            events.append(PackEvent(t, s, bin_id, ZERO, True))
    return _finish("first-fit", events, bins)


def next_fit(sequence: Iterable[Fraction]) -> PackingTrace:
    """Only the most recently opened bin is a candidate."""
    sizes = _prepare(sequence)
    bins: list[Bin] = []
    events: list[PackEvent] = []
    for t, s in enumerate(sizes, start=1):
        if bins and bins[-1].load + s <= 1:
            b = bins[-1]
            events.append(PackEvent(t, s, b.id, b.load, False))
            b.load += s
            b.contents.append((t, s))
        else:
            bin_id = len(bins)
            bins.append(Bin(id=bin_id, load=s, contents=[(t, s)]))
            events.append(PackEvent(t, s, bin_id, ZERO, True))
    return _finish("next-fit", events, bins)


PACKERS = {"best-fit": best_fit, "first-fit": first_fit, "next-fit": next_fit}


def bins_opened_by(trace: PackingTrace, t: int) -> int:
    """Number of bins opened among the first ``t`` arrivals."""
    if not 0 <= t <= trace.n:
        raise InvariantError(f"t={t} outside [0, {trace.n}]")
    return sum(1 for ev in trace.events if ev.opened_new and ev.time <= t)


def replay(events: Sequence[PackEvent]) -> list[Bin]:
    """Rebuild bin states from events alone; used to cross-check traces."""
    bins: dict[int, Bin] = {}
    for ev in events:
        b = bins.get(ev.bin_id)
        if ev.opened_new:
            if b is not None or ev.load_before != 0:
                raise InvariantError(f"bad opening event at t={ev.time}")
            bins[ev.bin_id] = Bin(id=ev.bin_id, load=ev.size, contents=[(ev.time, ev.size)])
        else:
            if b is None or b.load != ev.load_before:
                raise InvariantError(f"replay mismatch at t={ev.time}")
            b.load += ev.size
            b.contents.append((ev.time, ev.size))
        if bins[ev.bin_id].load > 1:
            raise InvariantError(f"bin {ev.bin_id} overflows at t={ev.time}")
    return [bins[i] for i in sorted(bins)]


def bins_at(trace: PackingTrace, t: int) -> list[Bin]:
    """Bin states after the first ``t`` arrivals are packed."""
    if not 0 <= t <= trace.n:
        raise InvariantError(f"t={t} outside [0, {trace.n}]")
    return replay(trace.events[:t])
