"""Scalar fitness from task metrics."""
from __future__ import annotations

from dataclasses import dataclass

from camforge.tasks.features import MatchResult
from camforge.tasks.obstacles import ObstacleReport
from camforge.tasks.stereo import DepthMetrics

STEREO_EPS = 1e-6


@dataclass(frozen=True)
class Lambdas:
    inlier: float = 0.0025
    ratio: float = 0.5
    feature: float = 1.0
    od: float = 1.0
    obstacle: float = 1.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"lambda {k} must be >= 0, got {v}")


def fitness_stereo(metrics: DepthMetrics) -> float:
    """Inverse average log depth error."""
    if metrics.avg_log_error < 0:
        raise ValueError("average log error must be >= 0")
    return 1.0 / (metrics.avg_log_error + STEREO_EPS)


def fitness_mono(n_inlier: float, inlier_ratio: float, ap: float, obstacle_ratio: float,
                 lambdas: Lambdas = Lambdas()) -> float:
    """Weighted sum of feature, detection and obstacle scores."""
    lam = lambdas
    return (lam.feature * (lam.inlier * n_inlier + lam.ratio * inlier_ratio)
            + lam.od * ap + lam.obstacle * obstacle_ratio)


def fitness_mono_from(match: MatchResult, ap: float, obstacles: ObstacleReport, lambdas: Lambdas = Lambdas()) -> float:
    return fitness_mono(match.n_inlier, match.inlier_ratio, ap, obstacles.ratio, lambdas)
