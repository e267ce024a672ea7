import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpo_ising.engine import Trajectory, StepStats, pure_density, vacuum
from kpo_ising.fock import FockCutoff, TruncationTooSmall, coherent_state, fock_state, product_state
from kpo_ising.model import PumpSchedule
from kpo_ising.observables import (
    DEFAULT_GRID,
    GridSpec,
    WindowNotCovered,
    correlation_over_readout,
    flip_mode_sign,
    husimi_q_real_slice,
    mean_photon_numbers,
    metapotential,
    same_phase_probability,
    time_average,
    xi_amplitudes,
    xi_from_q,
)

CUT = FockCutoff(24)
SMALL = FockCutoff(16)


def coherent_pair(aL, aR, cut=CUT):
    return pure_density(product_state(coherent_state(aL, cut).amplitudes, coherent_state(aR, cut).amplitudes))


def mixture(pairs, cut=CUT):
    return sum(coherent_pair(a, b, cut) for a, b in pairs) / len(pairs)


def test_vacuum_q():
    q = husimi_q_real_slice(vacuum(CUT), DEFAULT_GRID, CUT)
    a = q.axis
    np.testing.assert_allclose(q.values, np.exp(-a[:, None] ** 2 - a[None, :] ** 2), atol=1e-4)
    assert q.peak() == (0.0, 0.0)
    xp, xm = xi_from_q(q)
    assert abs(xp - xm) < 1e-6


def test_coherent_peak():
    q = husimi_q_real_slice(coherent_pair(2.8, 2.5), GridSpec(6.0, 0.1), CUT)
    assert q.peak() == pytest.approx((2.8, 2.5))
    m = q.quadrant_masses()
    assert m["I"] > 0.99 * sum(m.values())


def test_four_way_mixture_peaks_equal():
    a, b = 2.8, 2.5
    rho = mixture([(a, b), (-a, b), (a, -b), (-a, -b)])
    q = husimi_q_real_slice(rho, GridSpec(6.0, 0.1), CUT)
    ax = q.axis
    j, k = np.argmin(abs(ax - a)), np.argmin(abs(ax - b))
    jn, kn = np.argmin(abs(ax + a)), np.argmin(abs(ax + b))
    peaks = [q.values[j, k], q.values[jn, k], q.values[j, kn], q.values[jn, kn]]
    assert max(peaks) - min(peaks) < 1e-6
    assert abs(same_phase_probability(*xi_from_q(q)) - 0.5) < 1e-3


def test_same_phase_mixture():
    rho = mixture([(2, 2), (-2, -2)], SMALL)
    assert same_phase_probability(*xi_amplitudes(rho, DEFAULT_GRID, SMALL)) >= 0.99


def test_renormalized_rows_need_a_larger_cutoff():
    with pytest.raises(TruncationTooSmall):
        husimi_q_real_slice(vacuum(CUT), DEFAULT_GRID, CUT, renormalized=True)
    q = husimi_q_real_slice(vacuum(FockCutoff(66)), DEFAULT_GRID, FockCutoff(66), renormalized=True)
    assert q.values.max() == pytest.approx(1.0)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_q_nonnegative_and_flip_symmetry(seed):
    rng = np.random.default_rng(seed)
    cut = FockCutoff(8)
    n = cut.joint_dim
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    grid = GridSpec(4.0, 0.25)
    q = husimi_q_real_slice(rho, grid, cut)
    assert q.values.min() >= -1e-12
    p = same_phase_probability(*xi_amplitudes(rho, grid, cut))
    flipped = same_phase_probability(*xi_amplitudes(flip_mode_sign(rho, "R", cut), grid, cut))
    assert 0 <= p <= 1
    assert abs(flipped - (1 - p)) < 1e-6


def test_flip_maps_coherent_state():
    cut = FockCutoff(12)
    np.testing.assert_allclose(flip_mode_sign(coherent_pair(1.0, 1.5, cut), "R", cut), coherent_pair(1.0, -1.5, cut), atol=1e-14)
    with pytest.raises(ValueError):
        flip_mode_sign(vacuum(cut), "X", cut)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(6.0, 0.7)
    g = GridSpec(6.0, 0.25)
    assert g.axis.size == 49 and g.axis[0] == -6 and g.refined().step == 0.125
    assert g.covers(4.8) and not g.covers(6.5)


def test_qgrid_csv(tmp_path):
    q = husimi_q_real_slice(vacuum(SMALL), GridSpec(1.0, 0.5), SMALL)
    q.to_csv(tmp_path / "q.csv")
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines[0] == "alpha_L,alpha_R,value" and len(lines) == 26


def test_photon_numbers():
    cut = FockCutoff(5)
    assert mean_photon_numbers(vacuum(cut), cut) == (0.0, 0.0)
    rho = pure_density(product_state(fock_state(2, 5), fock_state(3, 5)))
    assert mean_photon_numbers(rho, cut) == (2.0, 3.0)


def test_same_phase_probability_rejects_empty():
    with pytest.raises(ValueError):
        same_phase_probability(0.0, 0.0)


def _fake_trajectory(state_times, states, cut):
    t = np.asarray(state_times)
    z = np.zeros(t.size)
    return Trajectory(t, z, z, z + 1, t, states, StepStats(1e-4, 0, 1e-4), cut, 0.1)


def test_correlation_over_readout():
    cut = FockCutoff(12)
    sched = PumpSchedule(ramp_up=1.0, plateau=1.0, readout_delay=0.2, readout_window=0.4)
    same = mixture([(1.5, 1.5), (-1.5, -1.5)], cut)
    four = mixture([(1.5, 1.5), (-1.5, -1.5), (1.5, -1.5), (-1.5, 1.5)], cut)
    times = [1.2, 1.4, 1.6]
    traj = _fake_trajectory(times, [same, four, four], cut)
    rec = correlation_over_readout(traj, sched, GridSpec(4.0, 0.25))
    p_same = rec.p_plus[0]
    np.testing.assert_allclose(rec.p_plus, rec.xi_plus / (rec.xi_plus + rec.xi_minus))
    expected = (0.5 * (p_same + 0.5) * 0.2 + 0.5 * 0.2) / 0.4
    assert rec.readout_average == pytest.approx(expected)
    with pytest.raises(WindowNotCovered):
        correlation_over_readout(_fake_trajectory([1.2, 1.4], [same, four], cut), sched)


def test_time_average():
    assert time_average(np.array([0.0, 1.0]), np.array([0.0, 1.0])) == 0.5
    assert time_average(np.array([2.0]), np.array([0.7])) == 0.7


def test_metapotential():
    assert metapotential(0j, 41.6, -10.4, 7.35, 0.0, 2.5) == 0.0
    g, aR = 7.35, 2.5
    x = np.array([0.7 + 0.3j, -1.1 + 0.5j])
    base = metapotential(x, 41.6, -10.4, 0.0, 0.0, aR)
    tilt0 = metapotential(x, 41.6, -10.4, g, 0.0, aR) - base
    np.testing.assert_allclose(tilt0, 2 * g * aR * x.real)
    v = metapotential(x, 41.6, -10.4, g, math.pi, aR)
    np.testing.assert_allclose(v, metapotential(-x.conj(), 41.6, -10.4, g, math.pi, aR))
    assert metapotential(1.0, 4.0, -1.0, 1.0, 0.0, 1.0, in_kerr_units=True) == metapotential(1.0, 4.0, -1.0, 1.0, 0.0, 1.0)
