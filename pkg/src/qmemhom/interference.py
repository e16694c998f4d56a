"""Two-photon interference at a beam splitter.

Photon 1 enters port a, photon 2 port b. With a -> sqrt(T) c + sqrt(R) d and
b -> sqrt(T) d - sqrt(R) c, the amplitude for one click at c (time t1) and
one at d (time t2) is ``T w1(t1) w2(t2) - R w1(t2) w2(t1)``. Non-temporal
distinguishability (polarization, spatial mode) scales the cross term by
``mode_overlap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import EmptyWindowError
from .histogram import CoincidenceHistogram
from .wavepacket import TemporalWavepacket, TimeGrid, intensity_fwhm, overlap, require_same_grid, shift


@dataclass(frozen=True)
class BeamSplitter:
    transmission: float = 0.5
    reflection: float = 0.5

    def __post_init__(self):
        for name in ("transmission", "reflection"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"beam splitter {name} must lie in [0, 1], got {v}")
        if abs(self.transmission + self.reflection - 1.0) > 1e-12:
            raise ValueError(
                f"lossless beam splitter needs T + R = 1, got {self.transmission + self.reflection}"
            )


@dataclass(frozen=True)
class SourceDistinguishability:
    mode_overlap: float = 1.0
    gbar2: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mode_overlap <= 1.0:
            raise ValueError("mode_overlap must lie in [0, 1]")
        if self.gbar2 < 0:
            raise ValueError("gbar2 must be non-negative")


DISTINGUISHABLE = SourceDistinguishability(mode_overlap=0.0)


@dataclass(frozen=True, eq=False)
class JointDensity:
    """G(t1, t2): rows index the port-c time t1, columns the port-d time t2."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.count, self.grid.count):
            raise ValueError("joint density shape does not match grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def total(self) -> float:
        return float(self.values.sum() * self.grid.step**2)


@dataclass(frozen=True)
class DetectionWindow:
    channel: str | int
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"window start {self.start} must precede end {self.end}")

    def contains(self, t):
        t = np.asarray(t)
        return (t >= self.start) & (t <= self.end)


def _amplitude_products(w1: TemporalWavepacket, w2: TemporalWavepacket):
    require_same_grid(w1, w2)
    direct = np.outer(w1.amplitude, w2.amplitude)   # w1(t1) w2(t2)
    exchange = direct.T                             # w1(t2) w2(t1)
    return direct, exchange


def coincidence_density(w1: TemporalWavepacket, w2: TemporalWavepacket,
                        bs: BeamSplitter = BeamSplitter(),
                        dist: SourceDistinguishability = SourceDistinguishability()) -> JointDensity:
    T, R, lam = bs.transmission, bs.reflection, dist.mode_overlap
    direct, exchange = _amplitude_products(w1, w2)
    separable = T**2 * np.abs(direct) ** 2 + R**2 * np.abs(exchange) ** 2
    coherent = np.abs(T * direct - R * exchange) ** 2
    # convex mix keeps G >= 0 without clipping
    return JointDensity(w1.grid, lam * coherent + (1.0 - lam) * separable)


def bunching_density(w1: TemporalWavepacket, w2: TemporalWavepacket,
                     bs: BeamSplitter = BeamSplitter(),
                     dist: SourceDistinguishability = SourceDistinguishability()) -> JointDensity:
    """Density for both photons leaving the same port, over ordered (t1, t2).

    The factor 1/2 removes the double count of the two time orderings, so
    integrating gives the probability for that port. Both ports are equal.
    """
    T, R, lam = bs.transmission, bs.reflection, dist.mode_overlap
    direct, exchange = _amplitude_products(w1, w2)
    separable = np.abs(direct) ** 2 + np.abs(exchange) ** 2
    cross = 2.0 * np.real(direct * np.conj(exchange))
    return JointDensity(w1.grid, 0.5 * T * R * (separable + lam * cross))


def windowed_coincidence(G: JointDensity, win_b: DetectionWindow, win_c: DetectionWindow,
                         transition: float | None = None, margin: float = 0.0) -> float:
    """Integral of G over win_b x win_c, skipping samples within ``margin`` of ``transition``."""
    t = G.grid.times
    keep = np.ones_like(t, dtype=bool)
    if transition is not None and margin > 0:
        keep = np.abs(t - transition) >= margin
    rows = win_b.contains(t) & keep
    cols = win_c.contains(t) & keep
    if not rows.any() or not cols.any():
        raise EmptyWindowError(f"window pair {win_b} x {win_c} selects no samples")
    return float(G.values[np.ix_(rows, cols)].sum() * G.grid.step**2)


def half_windows(grid: TimeGrid, transition: float) -> tuple[DetectionWindow, DetectionWindow]:
    """Early and late halves of the grid split at ``transition``."""
    return (DetectionWindow("early", grid.start, transition),
            DetectionWindow("late", transition, grid.end))


def step_phase_ratios(w1: TemporalWavepacket, w2: TemporalWavepacket, transition: float,
                      margin: float = 25.0, bs: BeamSplitter = BeamSplitter(),
                      dist: SourceDistinguishability = SourceDistinguishability()) -> dict[str, float]:
    """Same-half and cross-half coincidences relative to the distinguishable case."""
    early, late = half_windows(w1.grid, transition)
    out = {}
    for label, pairs in (("same", ((early, early), (late, late))),
                         ("cross", ((early, late), (late, early)))):
        dens = coincidence_density(w1, w2, bs, dist)
        base = coincidence_density(w1, w2, bs, DISTINGUISHABLE)
        num = sum(windowed_coincidence(dens, b, c, transition, margin) for b, c in pairs)
        den = sum(windowed_coincidence(base, b, c, transition, margin) for b, c in pairs)
        out[label] = num / den
    return out


def calibrate_mode_overlap(w1: TemporalWavepacket, w2: TemporalWavepacket, transition: float,
                           target_same: float, margin: float = 25.0,
                           bs: BeamSplitter = BeamSplitter()) -> float:
    """Mode overlap that puts the same-half ratio at ``target_same``.

    The ratio is affine in the mode overlap (1 at zero overlap), so one
    evaluation at full overlap fixes the slope.
    """
    full = step_phase_ratios(w1, w2, transition, margin, bs, SourceDistinguishability(1.0))["same"]
    lam = (1.0 - target_same) / (1.0 - full)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"target ratio {target_same} unreachable (full-overlap ratio {full:.4f})")
    return lam


def delayed_overlap(w1: TemporalWavepacket, w2: TemporalWavepacket, dt: float) -> complex:
    """Integral of conj(psi1(tau)) psi2(tau + dt)."""
    return overlap(w1, shift(w2, -dt))


def fourfold_rate(w1: TemporalWavepacket, w2: TemporalWavepacket, dt: float = 0.0,
                  bs: BeamSplitter = BeamSplitter(),
                  dist: SourceDistinguishability = SourceDistinguishability()) -> float:
    """Fourfold coincidence rate at herald delay ``dt`` (arbitrary units).

    Packet energies enter as written, so a lossy memory output weighs the
    R^2 and multi-pair terms by its throughput.
    """
    T, R = bs.transmission, bs.reflection
    e1, e2 = w1.energy, w2.energy
    o2 = abs(delayed_overlap(w1, w2, dt)) ** 2
    return T**2 * e1 + R**2 * e2 - 2 * T * R * dist.mode_overlap * o2 + T * R * dist.gbar2 * e1 * e2


def analytic_visibility(overlap_sq: float, bs: BeamSplitter = BeamSplitter(),
                        dist: SourceDistinguishability = SourceDistinguishability(),
                        e1: float = 1.0, e2: float = 1.0) -> float:
    """Closed-form dip visibility; ``overlap_sq`` is for the normalized packets."""
    T, R = bs.transmission, bs.reflection
    base = T**2 * e1 + R**2 * e2 + T * R * dist.gbar2 * e1 * e2
    return 2 * T * R * dist.mode_overlap * overlap_sq * e1 * e2 / base


def hom_dip_scan(w1: TemporalWavepacket, w2: TemporalWavepacket,
                 bs: BeamSplitter = BeamSplitter(),
                 dist: SourceDistinguishability = SourceDistinguishability(),
                 delays=None) -> CoincidenceHistogram:
    """Fourfold rate versus herald delay.

    The histogram's ``normalization`` is the baseline: the mean rate over
    delays beyond three intensity FWHMs of ``w1`` (the maximum if none).
    """
    if delays is None:
        delays = np.arange(-1500.0, 1500.1, 150.0)
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        raise ValueError("need at least one delay")
    rates = np.array([fourfold_rate(w1, w2, d, bs, dist) for d in delays])
    far = np.abs(delays) > 3 * intensity_fwhm(w1)
    baseline = float(rates[far].mean()) if far.any() else float(rates.max())
    return CoincidenceHistogram.from_centers(delays, rates, normalization=baseline)


def visibility(scan: CoincidenceHistogram) -> float:
    """1 - dip minimum / baseline."""
    base = scan.normalization if scan.normalization is not None else float(np.max(scan.counts))
    if base <= 0:
        return 0.0
    return float(1.0 - np.min(scan.counts) / base)


def _diagonal_sums(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sums of values[i, i - k] for k = -(n-1) .. n-1 (t1 - t2 = k * step)."""
    n = values.shape[0]
    ks = np.arange(-(n - 1), n)
    sums = np.array([np.trace(values, offset=-k) for k in ks])
    return ks, sums


def beat_profile(w1: TemporalWavepacket, w2: TemporalWavepacket,
                 bs: BeamSplitter = BeamSplitter(),
                 dist: SourceDistinguishability = SourceDistinguishability(),
                 binwidth: float = 18.0, span: float | None = None) -> CoincidenceHistogram:
    """Coincidence probability versus detection delay t1 - t2, bins centered on multiples of binwidth."""
    G = coincidence_density(w1, w2, bs, dist)
    step = G.grid.step
    ks, sums = _diagonal_sums(G.values)
    if span is None:
        span = step * (G.grid.count - 1)
    m = int(math.floor(span / binwidth + 0.5))
    edges = (np.arange(-m, m + 2) - 0.5) * binwidth
    counts, _ = np.histogram(ks * step, bins=edges, weights=sums * step**2)
    return CoincidenceHistogram(edges, counts)


def _beat_model(x, amp, width, period, floor):
    return amp * np.exp(-(x**2) / (2 * width**2)) * np.sin(np.pi * x / period) ** 2 + floor


def beat_period(profile: CoincidenceHistogram, min_period: float = 40.0,
                max_period: float = 2000.0) -> float:
    """Oscillation period (ns) of a beat profile.

    Fits a Gaussian-enveloped sin^2 with a constant floor; the starting
    period comes from a coarse scan of the linear least-squares residual.
    """
    x = profile.centers
    y = np.asarray(profile.counts, dtype=float)
    if y.sum() <= 0:
        raise ValueError("empty beat profile")
    width0 = math.sqrt(float(np.sum(y * x**2) / y.sum()))
    best = None
    for period in np.arange(min_period, max_period, 2.0):
        shape = np.exp(-(x**2) / (2 * width0**2)) * np.sin(np.pi * x / period) ** 2
        design = np.column_stack([shape, np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        res = float(np.sum((design @ coef - y) ** 2))
        if best is None or res < best[0]:
            best = (res, period, coef)
    _, p0, (a0, f0) = best
    sigma = np.sqrt(np.maximum(y, 1.0)) if np.issubdtype(profile.counts.dtype, np.integer) else None
    try:
        popt, _ = curve_fit(_beat_model, x, y, p0=(a0, width0, p0, f0), sigma=sigma, maxfev=20000)
        period = abs(float(popt[2]))
    except RuntimeError:
        period = float(p0)
    return period
