from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """Counts (or rates) versus a delay axis in ns.

    Histograms with identical edges add bin by bin, so partial results from
    shards merge in any order.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    normalization: float | None = None
    errors: np.ndarray | None = None

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or counts.ndim != 1 or counts.size != edges.size - 1:
            raise ValueError("need len(counts) == len(bin_edges) - 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)
        if self.errors is not None:
            object.__setattr__(self, "errors", np.asarray(self.errors, dtype=float))

    @classmethod
    def from_centers(cls, centers, values, normalization=None, errors=None) -> CoincidenceHistogram:
        c = np.asarray(centers, dtype=float)
        if c.size == 1:
            edges = np.array([c[0] - 0.5, c[0] + 0.5])
        else:
            mid = (c[1:] + c[:-1]) / 2
            edges = np.concatenate([[c[0] - (mid[0] - c[0])], mid, [c[-1] + (c[-1] - mid[-1])]])
        return cls(edges, np.asarray(values), normalization, errors)

    @property
    def centers(self) -> np.ndarray:
        return (self.bin_edges[1:] + self.bin_edges[:-1]) / 2

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def total(self):
        return self.counts.sum()

    def __add__(self, other: CoincidenceHistogram) -> CoincidenceHistogram:
        if self.bin_edges.shape != other.bin_edges.shape or not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("cannot merge histograms with different bin edges")
        return CoincidenceHistogram(self.bin_edges, self.counts + other.counts)

    def rows(self):
        """(center, value[, error]) tuples for CSV output."""
        if self.errors is None:
            return [(float(c), v.item()) for c, v in zip(self.centers, self.counts)]
        return [(float(c), v.item(), float(e)) for c, v, e in zip(self.centers, self.counts, self.errors)]
