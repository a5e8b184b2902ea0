"""Exhaustive search over valid (h, v) split pairs minimizing the round delay.

The search space is every pair with min_h <= h < v <= V-1, O(V^2) delay
evaluations. Ties are broken toward smaller h, then smaller v, which
pushes work off the weak clients first; the winner is independent of
evaluation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .delay import DelayBreakdown, round_delay
from .overhead import overhead_csfl
from .profiles import FleetSpec, ModelProfile, SplitConfig, validate_fleet


@dataclass(frozen=True)
class PlanCandidate:
    split: SplitConfig
    delay: DelayBreakdown
    overhead_bits: float


@dataclass(frozen=True)
class PlanResult:
    """Best split plus the full candidate landscape sorted by round delay."""

    best: SplitConfig
    best_delay: DelayBreakdown
    candidates: tuple[PlanCandidate, ...]


def enumerate_splits(num_layers: int, min_h: int = 1) -> list[SplitConfig]:
    """All valid (h, v) pairs with min_h <= h < v <= V-1, lexicographic."""
    if num_layers < 3:
        raise ValueError(f"need at least 3 layers to split, got {num_layers}")
    if min_h < 1:
        raise ValueError(f"min_h must be >= 1, got {min_h}")
    return [
        SplitConfig(h=h, v=v)
        for h in range(min_h, num_layers - 1)
        for v in range(h + 1, num_layers)
    ]


def plan(
    profile: ModelProfile,
    fleet: FleetSpec,
    epochs: int,
    batches: int,
    min_h: int = 1,
) -> PlanResult:
    """Evaluate every candidate pair and pick the delay-minimizing split.

    Each candidate also carries the three-way scheme's communication
    overhead for the same epoch count, so the full delay/overhead
    landscape can be inspected or dumped as CSV.
    """
    violations = validate_fleet(fleet)
    if violations:
        raise ValueError("fleet invalid: " + "; ".join(violations))

    best: PlanCandidate | None = None
    candidates: list[PlanCandidate] = []
    for split in enumerate_splits(profile.num_layers, min_h=min_h):
        breakdown = round_delay(profile, fleet, split, epochs, batches)
        bits = overhead_csfl(
            profile,
            fleet.num_clients,
            batches,
            split,
            fleet.aggregator_fraction,
            epochs=epochs,
        ).bits_per_round
        cand = PlanCandidate(split=split, delay=breakdown, overhead_bits=bits)
        candidates.append(cand)
        # Strict < keeps the first (lexicographically smallest) pair on ties.
        if best is None or breakdown.d_round < best.delay.d_round:
            best = cand

    assert best is not None
    candidates.sort(key=lambda c: (c.delay.d_round, c.split.h, c.split.v))
    return PlanResult(
        best=best.split, best_delay=best.delay, candidates=tuple(candidates)
    )


def write_candidates_csv(result: PlanResult, path: str) -> None:
    """Dump the candidate table: h, v, d0..d3, d_round, overhead_bits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "v", "d0", "d1", "d2", "d3", "d_round", "overhead_bits"])
        for cand in result.candidates:
            d = cand.delay
            writer.writerow(
                [
                    cand.split.h,
                    cand.split.v,
                    repr(d.d0),
                    repr(d.d1),
                    repr(d.d2),
                    repr(d.d3),
                    repr(d.d_round),
                    repr(cand.overhead_bits),
                ]
            )
