"""Ordinary least squares with a t-based 95% mean-response confidence band."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy import stats

CONFIDENCE_LEVEL = 0.95


class FitRefusedError(ValueError):
    """Raised when a fit is impossible: fewer than 3 points or constant x."""


@dataclass(frozen=True)
class RegressionFit:
    """OLS line plus the parameters of its mean-response confidence band.

    The band half-width at x is ``t_crit * residual_se *
    sqrt(1/n + (x - x_mean)^2 / sxx)``; it is narrowest at the mean of x
    and collapses to zero width for exactly collinear points.
    """

    slope: float
    intercept: float
    residual_se: float
    n: int
    x_mean: float
    sxx: float
    t_crit: float

    def predict(self, x: float) -> float:
        return self.intercept + self.slope * x

    def band(self, x: float) -> tuple[float, float]:
        half = self.t_crit * self.residual_se * math.sqrt(1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx)
        center = self.predict(x)
        return center - half, center + half

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual_se": self.residual_se,
            "n": self.n,
            "x_mean": self.x_mean,
            "sxx": self.sxx,
            "t_crit": self.t_crit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionFit":
        return cls(**data)


def fit_linear_with_ci(points: Sequence[tuple[float, float]]) -> RegressionFit:
    """Fit y on x by ordinary least squares.

    Uses the centered formulation (slope = Sxy/Sxx); the test-suite oracle
    solves the raw normal equations instead, keeping the two routes
    independent. Requires at least 3 points and nonconstant x.
    """
    n = len(points)
    if n < 3:
        raise FitRefusedError(f"need at least 3 points, got {n}")
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    x_mean = math.fsum(xs) / n
    y_mean = math.fsum(ys) / n
    sxx = math.fsum((x - x_mean) ** 2 for x in xs)
    if sxx == 0.0:
        raise FitRefusedError("x values are constant; no line can be fit")
    sxy = math.fsum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    ssr = math.fsum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    df = n - 2
    residual_se = math.sqrt(max(ssr, 0.0) / df)
    t_crit = float(stats.t.ppf(0.5 + CONFIDENCE_LEVEL / 2.0, df))
    return RegressionFit(
        slope=slope,
        intercept=intercept,
        residual_se=residual_se,
        n=n,
        x_mean=x_mean,
        sxx=sxx,
        t_crit=t_crit,
    )
