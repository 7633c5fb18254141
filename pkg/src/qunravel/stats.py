"""Small statistical verdict helpers shared by the ensemble and probe modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats


@dataclass(frozen=True)
class ChiSquareVerdict:
    """Pearson goodness-of-fit verdict at a fixed significance level."""

    statistic: float
    dof: int
    threshold: float
    p_value: float
    passed: bool
    observed: tuple
    expected: tuple


def chi_square_verdict(observed, expected, significance: float = 0.01) -> ChiSquareVerdict:
    """Pearson chi-square of observed counts against expected counts.

    Categories with (numerically) zero expectation are dropped from the
    statistic; any observed count in such a category fails the verdict
    outright.  A fully degenerate comparison (at most one live category)
    passes automatically.
    """
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.shape != exp.shape or obs.ndim != 1:
        raise ValueError("observed and expected must be 1-d arrays of equal length")
    live = exp > 1e-9
    impossible = float(obs[~live].sum())
    obs_live = obs[live]
    exp_live = exp[live]
    dof = int(live.sum()) - 1
    if dof <= 0:
        stat = 0.0
        threshold = 0.0
        p_value = 1.0
        passed = impossible == 0.0
    else:
        stat = float(((obs_live - exp_live) ** 2 / exp_live).sum())
        threshold = float(_scipy_stats.chi2.ppf(1.0 - significance, dof))
        p_value = float(_scipy_stats.chi2.sf(stat, dof))
        passed = impossible == 0.0 and stat <= threshold
    return ChiSquareVerdict(
        statistic=stat,
        dof=dof,
        threshold=threshold,
        p_value=p_value,
        passed=passed,
        observed=tuple(float(x) for x in obs),
        expected=tuple(float(x) for x in exp),
    )
