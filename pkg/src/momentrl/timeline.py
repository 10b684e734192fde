"""Geometry of intervals on the normalized video timeline.

Every position here is a fraction of the video length, so intervals live on
the unit square. All functions are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from itertools import combinations
from typing import Sequence

N_BOUNDARY_CLASSES = 4
N_JOINT_CLASSES = N_BOUNDARY_CLASSES * N_BOUNDARY_CLASSES


@dataclass(frozen=True)
class Interval:
    """A [start, end] pair measured in fractions of the video length.

    Raw candidates produced mid-rollout may violate ``start <= end``;
    use :attr:`is_proper` to tell them apart from well-formed intervals.
    """

    start: float
    end: float

    @property
    def is_proper(self) -> bool:
        return 0.0 <= self.start <= self.end <= 1.0

    @property
    def length(self) -> float:
        return self.end - self.start

    def as_pair(self) -> tuple[float, float]:
        return (self.start, self.end)


class Boundary(Enum):
    START = "start"
    END = "end"


class RelPos(IntEnum):
    """Relative position of one boundary w.r.t. its target boundary."""

    LEFT_FAR = 0
    LEFT_NEAR = 1
    RIGHT_NEAR = 2
    RIGHT_FAR = 3


@dataclass(frozen=True)
class RelLocClass:
    """Joint relative-location class of an interval's two boundaries."""

    start_class: RelPos
    end_class: RelPos

    @property
    def joint_index(self) -> int:
        return N_BOUNDARY_CLASSES * int(self.start_class) + int(self.end_class)


class Verdict(Enum):
    OOS = "oos"
    MATCH = "match"


@dataclass(frozen=True)
class ConflictReport:
    """Pairwise disagreement among N agents' final intervals."""

    pairwise: tuple[tuple[int, int, float], ...]
    eta: float
    verdict: Verdict | None = None


def tiou(a: Interval, b: Interval) -> float:
    """Temporal IoU of two intervals, clamped into [0, 1].

    Identical point intervals have IoU 1 by convention; disjoint intervals
    get 0 rather than a negative ratio.
    """
    if a.start > a.end or b.start > b.end:
        raise ValueError(f"tiou needs start <= end, got {a} and {b}")
    inter = min(a.end, b.end) - max(a.start, b.start)
    union = max(a.end, b.end) - min(a.start, b.start)
    if union == 0.0:
        return 1.0
    return max(0.0, inter / union)


def boundary_distance(b: float, gt: float) -> float:
    """Absolute distance between a boundary and its target."""
    return abs(b - gt)


def classify_boundary(b: float, gt: float, f0: float) -> RelPos:
    """Four-way relative position of one boundary.

    A boundary sitting exactly on its target counts as LEFT_NEAR so labels
    stay deterministic.
    """
    k = abs(b - gt)
    if b > gt:
        return RelPos.RIGHT_NEAR if k <= f0 else RelPos.RIGHT_FAR
    return RelPos.LEFT_NEAR if k <= f0 else RelPos.LEFT_FAR


def rel_loc_class(scanner: Interval, gt: Interval, f0: float) -> RelLocClass:
    if f0 <= 0.0:
        raise ValueError(f"f0 must be positive, got {f0}")
    return RelLocClass(
        start_class=classify_boundary(scanner.start, gt.start, f0),
        end_class=classify_boundary(scanner.end, gt.end, f0),
    )


def is_valid(candidate: float, which: Boundary, other_boundary: float) -> bool:
    """Whether a single boundary is admissible against the opposite one.

    A start must sit in [0, other) and an end in (other, 1]; the video
    length is normalized to 1.
    """
    if which is Boundary.START:
        return 0.0 <= candidate < other_boundary
    return other_boundary < candidate <= 1.0


def conflict(a: Interval, b: Interval) -> float:
    """L1 distance between two intervals' boundary pairs."""
    return abs(a.start - b.start) + abs(a.end - b.end)


def pairwise_conflicts(finals: Sequence[Interval]) -> list[tuple[int, int, float]]:
    if len(finals) < 2:
        raise ValueError("conflict is undefined for fewer than two intervals")
    return [
        (i, j, conflict(finals[i], finals[j]))
        for i, j in combinations(range(len(finals)), 2)
    ]


def eta(finals: Sequence[Interval]) -> float:
    """Largest pairwise conflict among the agents' final intervals."""
    return max(c for _, _, c in pairwise_conflicts(finals))


def conflict_report(finals: Sequence[Interval], h: float | None = None) -> ConflictReport:
    pw = tuple(pairwise_conflicts(finals))
    e = max(c for _, _, c in pw)
    verdict = None if h is None else (Verdict.OOS if e > h else Verdict.MATCH)
    return ConflictReport(pairwise=pw, eta=e, verdict=verdict)
