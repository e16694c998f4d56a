"""Counting statistics on time-tag streams.

All pair multiplicities are counted: every (A, B) pair whose delay falls in
range contributes, not only nearest neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .histogram import CoincidenceHistogram
from .interference import DetectionWindow
from .tagio import S1, S2, TimeTagStream, channel_id

MIN_STATISTICS = 100


def delay_edges(binwidth: float, span: float) -> np.ndarray:
    """Bins centered on multiples of ``binwidth`` covering +-span (rounded up to whole bins)."""
    if binwidth <= 0:
        raise ValueError("binwidth must be positive")
    if span <= binwidth:
        raise ValueError("span must exceed binwidth")
    m = int(math.ceil(span / binwidth - 0.5))
    return (np.arange(-m, m + 2) - 0.5) * binwidth


def pair_delays(idx_a: np.ndarray, t_a: np.ndarray, idx_b: np.ndarray, t_b: np.ndarray,
                 lo: float, hi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (a, b) with lo <= t_b - t_a < hi; returns delays and the two record indices."""
    first = np.searchsorted(t_b, t_a + lo, side="left")
    last = np.searchsorted(t_b, t_a + hi, side="left")
    n = last - first
    total = int(n.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    rep_a = np.repeat(np.arange(t_a.size), n)
    # position within each run of B partners
    offs = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
    jb = np.repeat(first, n) + offs
    return t_b[jb] - t_a[rep_a], idx_a[rep_a], idx_b[jb]


def _histogram_delays(delays: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # integer floor binning on half-open [edge_k, edge_k+1)
    k = np.floor((delays - edges[0]) / (edges[1] - edges[0])).astype(np.int64)
    k = k[(k >= 0) & (k < edges.size - 1)]
    return np.bincount(k, minlength=edges.size - 1).astype(np.int64)


def coincidences(s: TimeTagStream, ch_a: int | str, ch_b: int | str,
                 binwidth: float, span: float) -> CoincidenceHistogram:
    """Histogram of t_B - t_A over all pairs within the binned span."""
    if binwidth % s.metadata.resolution_ns:
        raise ValueError(f"binwidth must be a multiple of the {s.metadata.resolution_ns} ns resolution")
    edges = delay_edges(binwidth, span)
    a, b = channel_id(ch_a), channel_id(ch_b)
    idx = np.arange(len(s))
    ma, mb = s.channels == a, s.channels == b
    d, ia, ib = pair_delays(idx[ma], s.timestamps[ma], idx[mb], s.timestamps[mb], edges[0], edges[-1])
    if a == b:
        d = d[ia != ib]
    return CoincidenceHistogram(edges, _histogram_delays(d, edges))


class CoincidenceAccumulator:
    """Incremental version of :func:`coincidences` for chunked streams.

    Keeps the tags of the last ``span`` of stream time so pairs that straddle
    a chunk boundary are counted exactly once.
    """

    def __init__(self, ch_a: int | str, ch_b: int | str, binwidth: float, span: float):
        self.a, self.b = channel_id(ch_a), channel_id(ch_b)
        self.edges = delay_edges(binwidth, span)
        self.counts = np.zeros(self.edges.size - 1, dtype=np.int64)
        self._reach = max(abs(self.edges[0]), abs(self.edges[-1]))
        self._ch = np.zeros(0, np.uint8)
        self._ts = np.zeros(0, np.int64)

    def update(self, chunk: TimeTagStream) -> None:
        ch = np.concatenate([self._ch, chunk.channels])
        ts = np.concatenate([self._ts, chunk.timestamps])
        n_old = self._ts.size
        idx = np.arange(ts.size)
        ma, mb = ch == self.a, ch == self.b
        d, ia, ib = pair_delays(idx[ma], ts[ma], idx[mb], ts[mb], self.edges[0], self.edges[-1])
        fresh = np.maximum(ia, ib) >= n_old
        if self.a == self.b:
            fresh &= ia != ib
        self.counts += _histogram_delays(d[fresh], self.edges)
        if ts.size:
            keep = ts >= ts[-1] - self._reach
            self._ch, self._ts = ch[keep], ts[keep]

    def result(self) -> CoincidenceHistogram:
        return CoincidenceHistogram(self.edges, self.counts.copy())


def coincidences_chunked(chunks: Iterable[TimeTagStream], ch_a, ch_b, binwidth: float,
                         span: float) -> CoincidenceHistogram:
    acc = CoincidenceAccumulator(ch_a, ch_b, binwidth, span)
    for chunk in chunks:
        acc.update(chunk)
    return acc.result()


@dataclass(frozen=True)
class G2Estimate:
    """Heralded HBT estimate g2 = N_hAB * N_h / (N_hA * N_hB)."""

    g2: float
    n_herald: int
    n_herald_a: int
    n_herald_b: int
    n_herald_ab: int

    @property
    def insufficient_statistics(self) -> bool:
        return min(self.n_herald, self.n_herald_a, self.n_herald_b) < MIN_STATISTICS

    @property
    def stderr(self) -> float:
        """Poisson error dominated by the triple count."""
        if self.n_herald_ab == 0:
            return math.nan
        return self.g2 / math.sqrt(self.n_herald_ab)

    def __float__(self) -> float:
        return self.g2


def _has_tag(t_h: np.ndarray, t_x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.searchsorted(t_x, t_h + hi, side="left") > np.searchsorted(t_x, t_h + lo, side="left")


def conditional_g2(s: TimeTagStream, herald_ch, split_ch_a, split_ch_b, window: float,
                   delay: float = 0.0) -> G2Estimate:
    """Conditional autocorrelation over herald windows [t_h + delay, t_h + delay + window).

    A herald window counts for A (B) if it holds at least one A (B) tag.
    """
    h, a, b = channel_id(herald_ch), channel_id(split_ch_a), channel_id(split_ch_b)
    if len({h, a, b}) != 3:
        raise ValueError("herald and split channels must be distinct")
    if window <= 0:
        raise ValueError("window must be positive")
    th, ta, tb = s.select(h), s.select(a), s.select(b)
    ha = _has_tag(th, ta, delay, delay + window)
    hb = _has_tag(th, tb, delay, delay + window)
    n_h, n_a, n_b, n_ab = th.size, int(ha.sum()), int(hb.sum()), int((ha & hb).sum())
    if n_ab == 0:
        g2 = 0.0
    elif n_a == 0 or n_b == 0:
        g2 = math.nan
    else:
        g2 = n_ab * n_h / (n_a * n_b)
    return G2Estimate(g2, n_h, n_a, n_b, n_ab)


@dataclass(frozen=True)
class FourfoldResult:
    count: int
    histogram: CoincidenceHistogram | None


def _window_pairs(ref: np.ndarray, tc: np.ndarray, w: DetectionWindow,
                  transition: float | None, margin: float) -> tuple[np.ndarray, np.ndarray]:
    d, ir, _ = pair_delays(np.arange(ref.size), ref, np.arange(tc.size), tc,
                            w.start, np.nextafter(w.end, np.inf))
    if transition is not None and margin > 0 and w.start <= transition <= w.end:
        ok = np.abs(d - transition) >= margin
        d, ir = d[ok], ir[ok]
    return d, ir


def fourfold_count(s: TimeTagStream, windows: Sequence[DetectionWindow],
                   reference_channel: int | str = S1, exclusion_margin: float = 0.0,
                   transition: float | None = None, delta_channel: int | str | None = S2,
                   delta_edges: np.ndarray | None = None) -> FourfoldResult:
    """Count reference tags combined with one tag per windowed channel.

    Window bounds are inclusive and relative to the reference tag. Tags
    within ``exclusion_margin`` of ``transition`` are dropped from any window
    that contains the transition time. Combinations are counted with full
    multiplicity; the optional histogram bins t_delta - t_reference.
    """
    ref = s.select(reference_channel)
    chans = [channel_id(w.channel) for w in windows]
    if len(set(chans)) != len(chans) or channel_id(reference_channel) in chans:
        raise ValueError("each windowed channel must appear once and differ from the reference")
    pairs = [_window_pairs(ref, s.select(c), w, transition, exclusion_margin)
             for w, c in zip(windows, chans)]
    per_window = [np.bincount(ir, minlength=ref.size) for _, ir in pairs]
    weights = np.prod(per_window, axis=0) if per_window else np.ones(ref.size, np.int64)
    count = int(weights.sum())
    hist = None
    if delta_edges is not None:
        if delta_channel is None or channel_id(delta_channel) not in chans:
            raise ValueError("delta histogram needs a windowed delta_channel")
        k = chans.index(channel_id(delta_channel))
        d, ir = pairs[k]
        others = np.prod([n for j, n in enumerate(per_window) if j != k], axis=0) \
            if len(per_window) > 1 else np.ones(ref.size, np.int64)
        edges = np.asarray(delta_edges, dtype=float)
        counts, _ = np.histogram(d, bins=edges, weights=others[ir])
        hist = CoincidenceHistogram(edges, np.rint(counts).astype(np.int64))
    return FourfoldResult(count, hist)
