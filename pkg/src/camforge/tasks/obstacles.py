"""Obstacle avoidance proxy: was each crossed obstacle seen before the crossing?"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_VISIBLE_PIXELS = 25


@dataclass(frozen=True)
class ObstacleReport:
    n_total: int
    n_seen: int

    @property
    def ratio(self) -> float:
        return self.n_seen / self.n_total if self.n_total else 1.0


def visible_in(instance: np.ndarray, obstacle_id: int, min_pixels: int = MIN_VISIBLE_PIXELS) -> bool:
    return int(np.count_nonzero(instance == obstacle_id)) >= min_pixels


def obstacle_visibility(events, min_pixels: int = MIN_VISIBLE_PIXELS) -> ObstacleReport:
    """``events`` holds, per obstacle crossing, the instance maps rendered on
    approach (before the crossing step). An obstacle counts as avoided when it
    covers ``min_pixels`` in any of them."""
    n_total = 0
    n_seen = 0
    for obstacle_id, maps in events:
        n_total += 1
        if any(visible_in(m, obstacle_id, min_pixels) for m in maps):
            n_seen += 1
    return ObstacleReport(n_total, n_seen)
