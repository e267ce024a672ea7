import math

import numpy as np
import pytest

from kpo_ising.fock import FockCutoff, fock_state, joint_index, product_state
from kpo_ising.model import TWO_PI, SystemParams, hamiltonian_with_pumps, pump_amplitudes_from_alpha
from kpo_ising.observables import DEFAULT_GRID, same_phase_probability, xi_from_q
from kpo_ising.spectrum import (
    BranchAmbiguous,
    eigenstate_qfunction,
    opposite_correlation_population,
    pump_ratio,
    pump_spectrum,
    top_eigenpairs,
    track_vacuum_branch,
    vacuum_level,
)
from kpo_ising.engine import pure_density

CUT = FockCutoff(24)


def zero_pump_spectrum(delta):
    H = hamiltonian_with_pumps(SystemParams(delta_L=delta, delta_R=delta), 0.0, 0.0, CUT)
    return top_eigenpairs(H, None, CUT)


def test_vacuum_below_symmetric_single_photon_at_zero_detuning():
    eig = zero_pump_spectrum(0.0)
    lvl = vacuum_level(eig, CUT)
    assert lvl > 0
    mhz = eig.values / TWO_PI
    assert mhz[lvl] == pytest.approx(0.0, abs=1e-9)
    # the coupled single-photon pair sits at +-g around the vacuum
    odd = mhz[eig.parity == 1]
    assert np.min(np.abs(odd - 7.35)) < 1e-9 and np.min(np.abs(odd + 7.35)) < 1e-9
    assert mhz[:lvl].min() > 0


def test_vacuum_on_top_when_detuned():
    eig = zero_pump_spectrum(-20.0)
    assert vacuum_level(eig, CUT) == 0
    assert eig.values[1] / TWO_PI == pytest.approx(-20.0 + 7.35, abs=1e-9)


def test_harmonic_ladder():
    cut = FockCutoff(5)
    p = SystemParams(kerr_L=-1e-300, kerr_R=-1e-300, g=0.0, delta_L=-1.0, delta_R=-1.0)
    eig = top_eigenpairs(hamiltonian_with_pumps(p, 0, 0, cut), None, cut)
    for value, vec in zip(eig.values, eig.vectors.T):
        k = int(np.argmax(np.abs(vec)))
        nL, nR = divmod(k, 5)
        assert value == pytest.approx(TWO_PI * -1.0 * (nL + nR), rel=1e-14, abs=1e-14)


def test_top_eigenpairs_consistency():
    p = SystemParams(theta_p=0.4)
    cut = FockCutoff(8)
    H = hamiltonian_with_pumps(p, 30.0, 20.0, cut)
    eig = top_eigenpairs(H, None, cut)
    assert np.all(np.diff(eig.values) <= 0)
    assert abs(eig.values.sum() - np.trace(H).real) < 1e-8 * np.abs(eig.values).sum()
    np.testing.assert_allclose(eig.vectors.conj().T @ eig.vectors, np.eye(cut.joint_dim), atol=1e-10)
    np.testing.assert_allclose(H @ eig.vectors, eig.vectors * eig.values, atol=1e-8)
    dense = top_eigenpairs(H, 5)
    np.testing.assert_allclose(dense.values, eig.values[:5], atol=1e-9)
    assert np.all(dense.parity == -1)
    with pytest.raises(ValueError):
        top_eigenpairs(H, 0)


def test_uncoupled_tracking_is_smooth():
    p = SystemParams(g=0.0)
    sweep = track_vacuum_branch(p, np.arange(0, 20.5, 0.5), FockCutoff(12))
    assert sweep.overlaps[1:].min() >= 0.99


def test_branch_ambiguous_reported(monkeypatch):
    from kpo_ising import spectrum

    cut = FockCutoff(6)
    real = spectrum._full_spectrum
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(36, 36)) + 1j * rng.normal(size=(36, 36)))

    def scrambled(params, p_L, ratio, cutoff):
        eig = real(params, p_L, ratio, cutoff)
        return eig if p_L == 0 else eig._replace(vectors=q)

    monkeypatch.setattr(spectrum, "_full_spectrum", scrambled)
    with pytest.raises(BranchAmbiguous) as exc:
        track_vacuum_branch(SystemParams(), [0.0, 10.0], cut)
    assert exc.value.overlap < 0.5 and exc.value.pump == 10.0


def test_tracking_input_validation():
    with pytest.raises(ValueError):
        track_vacuum_branch(SystemParams(), [1.0, 2.0], FockCutoff(6))


def test_pump_ratio():
    pL, pR = pump_amplitudes_from_alpha(SystemParams())
    assert pump_ratio(SystemParams()) == pytest.approx(pR / pL)


def test_paper_sweep_structure(paper_spectrum):
    sw = paper_spectrum
    assert np.all(np.diff(sw.levels, axis=1) <= 0)
    assert sw.overlaps[1:].min() >= 0.5
    assert sw.pump_points.size > 81  # refinement added points near the gap minima
    assert sw.pump_points[-1] == pytest.approx(pump_amplitudes_from_alpha(SystemParams())[0])


def test_tracked_state_same_phase_at_full_pump(paper_spectrum):
    q = eigenstate_qfunction(paper_spectrum.vectors[-1], DEFAULT_GRID, CUT)
    m = q.quadrant_masses()
    assert min(m["I"], m["III"]) > max(m["II"], m["IV"])
    assert same_phase_probability(*xi_from_q(q)) > 0.5


def test_vacuum_qfunction_peak():
    v = product_state(fock_state(0, 24), fock_state(0, 24))
    assert eigenstate_qfunction(v, DEFAULT_GRID, CUT).peak() == (0.0, 0.0)
    with pytest.raises(ValueError):
        eigenstate_qfunction(2 * v, DEFAULT_GRID, CUT)


def test_opposite_correlation_state():
    p = SystemParams()
    pL, pR = pump_amplitudes_from_alpha(p)
    eig = top_eigenpairs(hamiltonian_with_pumps(p, pL, pR, CUT), 8, CUT)
    res = opposite_correlation_population(np.eye(CUT.joint_dim) / CUT.joint_dim, p, pL, pR, CUT)
    v = eig.vectors[:, res.level]
    assert eig.parity[res.level] == 0 and res.same_phase_probability < 0.5
    m = eigenstate_qfunction(v, DEFAULT_GRID, CUT).quadrant_masses()
    assert min(m["II"], m["IV"]) > max(m["I"], m["III"])
    assert res.population == pytest.approx(1 / CUT.joint_dim)
    res1 = opposite_correlation_population(pure_density(v), p, pL, pR, CUT)
    assert res1.population == pytest.approx(1.0)


def test_cat_pair_splitting_closes_with_pump():
    p = SystemParams()
    r = pump_ratio(p)
    split = []
    for pl in (10, 20, 30, 40, 50):
        e = top_eigenpairs(hamiltonian_with_pumps(p, pl, pl * r, CUT), 2, CUT)
        split.append(e.values[0] - e.values[1])
    assert np.all(np.diff(split) < 0)


def test_spectrum_csv(tmp_path):
    sw = pump_spectrum(SystemParams(), FockCutoff(6), n_points=5, k=3, refine=False)
    sw.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "p_L_MHz,level,energy_MHz,is_tracked,gap_MHz"
    tracked = [l for l in lines[1:] if l.split(",")[3] == "1"]
    assert len(tracked) == 5 and all(l.split(",")[4] for l in tracked)
