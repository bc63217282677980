"""Permutation selection rules.

A permutation rule is a total order over (arrival index, type id) pairs.  Run
against a realized type vector, it scans the pairs in order and selects the
first arrival whose realized type matches; if no pair matches it selects
nothing.  Rules of this shape are the extreme points of the space of
selection rules for a single offline vertex, which is why the worst-case
analysis machinery works exclusively with them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import InvalidInstance


@dataclass(frozen=True)
class PermutationRule:
    """Ordered (arrival index, type id) pairs, scanned front to back."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if len(set(self.pairs)) != len(self.pairs):
            raise InvalidInstance("permutation rule contains duplicate pairs")

    def arrivals(self) -> set[int]:
        return {j for j, _ in self.pairs}

    def selected_type_ids(self, j: int) -> list[int]:
        """Type ids of arrival j in scan order (earliest first)."""
        return [tid for i, tid in self.pairs if i == j]

    def validate_for(self, instance) -> None:
        for j, tid in self.pairs:
            if not 0 <= j < len(instance.arrivals):
                raise InvalidInstance(f"rule references arrival {j} out of range")
            if not 0 <= tid < len(instance.arrivals[j].types):
                raise InvalidInstance(f"rule references type {tid} of arrival {j} out of range")


def permutation_select(rule: PermutationRule, types: Sequence[int]) -> Optional[int]:
    """First arrival whose realized type id matches a rule pair, or None."""
    for j, tid in rule.pairs:
        if types[j] == tid:
            return j
    return None


def rule_to_dict(rule: PermutationRule) -> dict:
    return {"pairs": [[j, tid] for j, tid in rule.pairs]}


def rule_from_dict(data: dict) -> PermutationRule:
    return PermutationRule(tuple((int(j), int(tid)) for j, tid in data["pairs"]))


def save_rule(rule: PermutationRule, path: str | Path) -> None:
    Path(path).write_text(json.dumps(rule_to_dict(rule), indent=2) + "\n")


def load_rule(path: str | Path) -> PermutationRule:
    return rule_from_dict(json.loads(Path(path).read_text()))
