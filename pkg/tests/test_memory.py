import math
import warnings
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmemhom.memory import (EnsembleParams, MemoryChannel, StorageLifetimeWarning, aligned_roundtrip,
                            mixing_angle, readout, roundtrip, store)
from qmemhom.wavepacket import (DEFAULT_GRID, ControlEnvelope, PhaseProgram, apply_phase,
                                frequency_offset_mhz, intensity_centroid, likeness, make_gaussian_wavepacket,
                                overlap)

W = make_gaussian_wavepacket(DEFAULT_GRID, 1000.0, 320.0)


def decimal_atan(x: Decimal) -> Decimal:
    """Arctangent by argument halving and the Taylor series, independent of math.atan."""
    getcontext().prec = 40
    halvings = 0
    while abs(x) > Decimal("0.1"):
        x = x / (1 + (1 + x * x).sqrt())
        halvings += 1
    term, total, k = x, Decimal(0), 0
    while abs(term) > Decimal(10) ** -38:
        total += term / (2 * k + 1) * (-1) ** k
        term *= x * x
        k += 1
    return total * (2**halvings)


def test_mixing_angle_limits():
    e = EnsembleParams(1.0, 400)
    assert abs(mixing_angle(e, 20.0) - math.pi / 4) < 1e-12
    assert mixing_angle(e, 0.0) == math.pi / 2
    assert abs(mixing_angle(e, 40.0) - float(decimal_atan(Decimal("0.5")))) < 1e-15
    with pytest.raises(ValueError):
        mixing_angle(e, -1.0)


def test_invariants():
    with pytest.raises(ValueError):
        MemoryChannel(efficiency=1.2)
    with pytest.raises(ValueError):
        MemoryChannel(lifetime_us=0)
    with pytest.raises(ValueError):
        EnsembleParams(coupling=0)
    with pytest.raises(ValueError):
        EnsembleParams(atom_number=0)


def test_lossless_store_keeps_profile():
    s = store(W, MemoryChannel(1.0))
    assert np.max(np.abs(np.abs(s.amplitude) ** 2 - W.intensity)) <= 1e-12 * np.max(W.intensity)


def test_zero_efficiency_gives_zero_spin_wave():
    assert not np.any(store(W, MemoryChannel(0.0)).amplitude)


def test_roundtrip_efficiency():
    out = roundtrip(W, MemoryChannel(0.86), 0.0)
    assert abs(out.energy - 0.86) < 1e-9


def test_identity_roundtrip():
    out = roundtrip(W, MemoryChannel(1.0), 0.0)
    assert out.grid.matches(W.grid)
    assert np.allclose(out.amplitude, W.amplitude, atol=1e-15)


def test_700ns_storage_shifts_waveform():
    mem = MemoryChannel(0.86)
    out = roundtrip(W, mem, 700.0)
    decay = math.exp(-700 / 5000)
    assert abs(out.energy - 0.86 * decay) < 1e-9
    assert abs(intensity_centroid(out) - intensity_centroid(W) - 700) < 1e-9
    assert likeness(aligned_roundtrip(W, mem, 700.0).normalize(), W) > 0.999


def test_storage_at_lifetime_damps_by_e():
    mem = MemoryChannel(0.86, 5.0)
    out = roundtrip(W, mem, 5000.0)
    assert abs(out.energy - 0.86 * math.exp(-1)) < 1e-9


def test_readout_beyond_lifetime_warns():
    mem = MemoryChannel(0.86, 1.0)
    with pytest.warns(StorageLifetimeWarning):
        roundtrip(W, mem, 1500.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        roundtrip(W, mem, 900.0)


def test_readout_before_store_rejected():
    s = store(W, MemoryChannel(), 100.0)
    with pytest.raises(ValueError):
        readout(s, MemoryChannel(), 50.0)
    with pytest.raises(ValueError):
        store(W, MemoryChannel(), 1e6)


def test_step_phase_readout_is_orthogonal():
    w = make_gaussian_wavepacket(DEFAULT_GRID, 1001.0, 320.0)
    mem = MemoryChannel(1.0).with_read_phase(PhaseProgram.step(1001.0))
    out = aligned_roundtrip(w, mem, 0.0)
    assert abs(overlap(w, out)) < 1e-6


def test_linear_phase_readout_frequency():
    mem = MemoryChannel(1.0).with_read_phase(PhaseProgram.linear(730.0, 4 * math.pi, 540.0))
    out = aligned_roundtrip(W, mem, 0.0)
    assert abs(frequency_offset_mhz(out, W, window=(740.0, 1260.0)) - 3.7) < 0.1


def test_energy_non_increasing_in_delay():
    mem = MemoryChannel(0.86, 5.0)
    e = [roundtrip(W, mem, d).energy for d in np.linspace(0, 4000, 9)]
    assert all(b <= a for a, b in zip(e, e[1:]))


def test_global_phase_gauge():
    base = aligned_roundtrip(W, MemoryChannel(0.86), 0.0)
    phased = aligned_roundtrip(W, MemoryChannel(0.86, global_phase=0.7), 0.0)
    assert np.allclose(base.intensity, phased.intensity, rtol=0, atol=1e-15)
    dphi = np.angle(overlap(base, phased))
    assert abs(dphi - (-0.7)) < 1e-12


def test_amplitude_shaping_flag():
    env = ControlEnvelope(2.0, (0.0, 2000.0), (1.0, 1.0))
    shaped = MemoryChannel(1.0, control=env, shape_amplitude=True)
    plain = MemoryChannel(1.0, control=env)
    assert abs(roundtrip(W, plain, 0.0).energy - 1) < 1e-9
    assert abs(roundtrip(W, shaped, 0.0).energy - 0.25) < 1e-9


def random_program(rng):
    kind = rng.integers(4)
    if kind == 0:
        return PhaseProgram.constant(rng.uniform(-7, 7))
    if kind == 1:
        return PhaseProgram.step(rng.uniform(0, 2000), rng.uniform(-4, 4), rng.uniform(-4, 4))
    if kind == 2:
        span = rng.uniform(-20, 20)
        return PhaseProgram.linear(rng.uniform(0, 1500), span, rng.uniform(10, 1000))
    ts = np.sort(rng.choice(np.arange(0, 2000, 7), size=6, replace=False))
    return PhaseProgram.piecewise([(t, rng.uniform(-9, 9)) for t in ts])


def test_phase_transparency_over_random_programs():
    rng = np.random.default_rng(2024)
    mem = MemoryChannel(0.86, global_phase=0.3)
    flat = aligned_roundtrip(W, mem, 0.0)
    worst = 0.0
    for _ in range(100):
        p = random_program(rng)
        out = aligned_roundtrip(W, mem.with_read_phase(p), 0.0)
        worst = max(worst, float(np.max(np.abs(out.amplitude - apply_phase(flat, p).amplitude))))
    assert worst < 1e-9


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_sequential_roundtrips_add_phases(seed):
    rng = np.random.default_rng(seed)
    p1, p2 = random_program(rng), random_program(rng)
    mem = MemoryChannel(1.0)
    twice = aligned_roundtrip(aligned_roundtrip(W, mem.with_read_phase(p1), 0.0), mem.with_read_phase(p2), 0.0)
    once = aligned_roundtrip(W, mem.with_read_phase(p1 + p2), 0.0)
    assert np.max(np.abs(twice.amplitude - once.amplitude)) < 1e-9
