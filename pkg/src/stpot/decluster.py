"""Field-level declustering of daily panels.

Whole days (the full spatial field) are kept or dropped. Days are visited in
decreasing order of their field maximum and kept when they lie more than
``lag_days`` calendar days away from every day kept so far.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .ingest import ObservationPanel


@dataclass(frozen=True, eq=False)
class DeclusteredPanel:
    base: ObservationPanel
    retained_days: np.ndarray  # sorted 0-based row indices into ``base``
    lag_days: int

    @property
    def retained_count(self) -> int:
        return len(self.retained_days)

    def to_panel(self) -> ObservationPanel:
        """The base panel with every non-retained day blanked out.

        Rows are kept so the seasonal time axis i/n is unchanged.
        """
        values = np.full_like(self.base.values, np.nan)
        values[self.retained_days] = self.base.values[self.retained_days]
        return replace(self.base, values=values)


def field_maxima(panel: ObservationPanel) -> np.ndarray:
    """Daily maximum over stations, ignoring missing cells; -inf for empty days."""
    vals = np.where(np.isnan(panel.values), -np.inf, panel.values)
    return vals.max(axis=1)


def decluster(panel: ObservationPanel, lag_days: int = 2, target: int | None = None) -> DeclusteredPanel:
    """Greedy two-sided separation of high days.

    Ties in the field maximum are visited in calendar order. Fewer than
    ``target`` retained days is not an error; check ``retained_count``.
    """
    if lag_days < 0:
        raise ValueError("lag_days must be >= 0")
    if target is not None and target < 1:
        raise ValueError("target must be >= 1 or None")
    maxima = field_maxima(panel)
    day = (panel.dates - panel.dates[0]).astype(int)
    order = np.lexsort((np.arange(len(maxima)), -maxima))
    blocked = np.zeros(day[-1] + 2 * lag_days + 1, dtype=bool)
    kept = []
    for i in order:
        if maxima[i] == -np.inf:
            break
        d = day[i] + lag_days
        if blocked[d]:
            continue
        kept.append(i)
        blocked[d - lag_days:d + lag_days + 1] = True
        if target is not None and len(kept) >= target:
            break
    return DeclusteredPanel(panel, np.sort(np.asarray(kept, dtype=int)), lag_days)


class Declusterer(TransformerMixin, BaseEstimator):
    """Transformer wrapper: ``transform`` returns the blanked-out panel."""

    def __init__(self, lag_days: int = 2, target: int | None = None):
        self.lag_days = lag_days
        self.target = target

    def fit(self, panel: ObservationPanel, y=None):
        self.result_ = decluster(panel, self.lag_days, self.target)
        self.retained_days_ = self.result_.retained_days
        return self

    def transform(self, panel: ObservationPanel) -> ObservationPanel:
        return decluster(panel, self.lag_days, self.target).to_panel()
