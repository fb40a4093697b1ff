import math

import numpy as np
import pytest

from nvcavity.mesolve import IntegratorConfig, integrate
from nvcavity.model import (
    CavityConfig,
    CouplingSpec,
    NVLevelScheme,
    PumpPulse,
    SystemModel,
    Truncation,
    build_channels,
    build_hamiltonian,
    coupling_from_dipole,
    dipole_from_coupling,
    full_model,
    kappa_from_q,
    purcell_factor,
    reduced_phonon_model,
    spontaneous_coupling_beta,
    total_excitation_operator,
    two_level_model,
)
from nvcavity.quantum import basis_state

# Anchors for the design point (lambda = 638 nm, Q = 36500),
# frozen from independent evaluation of 2 pi c / lambda etc.
DESIGN_OMEGA_C = 2.952432e15
DESIGN_KAPPA = 4.044427e10
DESIGN_COUPLING = 1.617771e10

BRANCHING = [0.036964, 0.121982, 0.201271, 0.221398, 0.182653, 0.120551,
             0.066303, 0.031257, 0.012894, 0.004728]


def design_pump():
    return PumpPulse(rate=1e13, width=0.56e-12)


def test_kappa_design_point():
    cav = CavityConfig(wavelength=638e-9, quality_factor=36500)
    assert cav.angular_frequency == pytest.approx(DESIGN_OMEGA_C, rel=1e-6)
    assert kappa_from_q(cav) == pytest.approx(DESIGN_KAPPA, rel=1e-6)


def test_kappa_inverse_in_q():
    cav = CavityConfig(quality_factor=36500)
    cav2 = CavityConfig(quality_factor=73000)
    assert kappa_from_q(cav) == pytest.approx(2 * kappa_from_q(cav2))


def test_design_coupling_from_kappa_ratio():
    assert kappa_from_q(CavityConfig()) / 2.5 == pytest.approx(DESIGN_COUPLING, rel=1e-6)


def test_purcell_design_point():
    cav = CavityConfig(wavelength=638e-9, quality_factor=36500, mode_volume=(638e-9) ** 3,
                       refractive_index=2.4)
    assert purcell_factor(cav) == pytest.approx(200.64, rel=1e-3)
    assert spontaneous_coupling_beta(cav) == pytest.approx(200.64 / 201.64, rel=1e-3)


def test_purcell_linear_in_q_and_small_q_limit():
    cav = CavityConfig(quality_factor=1000)
    cav2 = CavityConfig(quality_factor=2000)
    assert purcell_factor(cav2) == pytest.approx(2 * purcell_factor(cav))
    tiny = CavityConfig(quality_factor=1e-6)
    assert purcell_factor(tiny) < 1e-8
    assert spontaneous_coupling_beta(tiny) < 1e-8


def test_coupling_from_dipole_limits():
    cav = CavityConfig()
    assert coupling_from_dipole(0.0, cav) == 0.0
    big = CavityConfig(mode_volume=4 * cav.mode_volume)
    d = 1e-29
    assert coupling_from_dipole(d, big) == pytest.approx(coupling_from_dipole(d, cav) / 2)


def test_dipole_inversion_roundtrip():
    cav = CavityConfig()
    d = dipole_from_coupling(DESIGN_COUPLING, cav)
    assert coupling_from_dipole(d, cav) == pytest.approx(DESIGN_COUPLING, rel=1e-12)


def test_hamiltonian_two_level_hand_computed():
    g = 2.0e10
    m = two_level_model(coupling=g, pump=design_pump(), n_cavity=1, n_waveguide=0)
    h = build_hamiltonian(m, rotating_frame=True).mat
    # basis: (g0,0), (g0,1), (e,0), (e,1); resonant coupling couples (g0,1)<->(e,0)
    expected = np.zeros((4, 4), dtype=complex)
    expected[1, 2] = g
    expected[2, 1] = g
    np.testing.assert_allclose(h, expected, atol=1e-6)


def test_hamiltonian_zero_coupling_is_diagonal():
    m = two_level_model(coupling=0.0, pump=design_pump(), n_cavity=2, n_waveguide=1)
    h = build_hamiltonian(m).mat
    assert np.count_nonzero(h - np.diag(np.diagonal(h))) == 0


def test_hamiltonian_hermitian_and_excitation_conserving():
    rng = np.random.default_rng(3)
    for _ in range(5):
        m = full_model(
            BRANCHING,
            pump=design_pump(),
            coupling_resonant=float(rng.uniform(1e9, 5e10)),
            quality_factor=float(rng.uniform(1e3, 1e5)),
            n_cavity=2,
            n_waveguide=1,
        )
        h = build_hamiltonian(m).mat
        np.testing.assert_array_equal(h, h.conj().T)
        n = total_excitation_operator(m).mat
        np.testing.assert_allclose(h @ n - n @ h, 0, atol=1e-4)


def test_lab_frame_keeps_photon_energies():
    m = two_level_model(coupling=1e10, pump=design_pump(), n_cavity=1, n_waveguide=0)
    h = build_hamiltonian(m, rotating_frame=False).mat
    sp = m.space()
    i = sp.index(atom=0, cavity=1)
    assert h[i, i].real == pytest.approx(DESIGN_OMEGA_C, rel=1e-6)


def test_channel_count_full_model():
    m = full_model(BRANCHING, pump=design_pump(), coupling_resonant=DESIGN_COUPLING)
    chans = build_channels(m)
    assert len(chans) == 21  # 10 radiative + 1 pump + 9 phonon + 1 cavity
    tags = [c.tag for c in chans]
    assert tags.count("pump") == 1
    assert tags.count("cavity-out") == 1
    assert sum(t.startswith("radiative:") for t in tags) == 10
    assert sum(t.startswith("phonon:") for t in tags) == 9


def test_zero_rates_leave_only_cavity_channel():
    m = two_level_model(
        coupling=DESIGN_COUPLING,
        pump=PumpPulse(rate=0.0, width=1e-12),
        lifetime_pl=math.inf,
        n_waveguide=1,
    )
    chans = build_channels(m)
    assert [c.tag for c in chans] == ["cavity-out"]


def test_no_waveguide_falls_back_to_plain_loss():
    m = two_level_model(coupling=DESIGN_COUPLING, pump=design_pump(), n_waveguide=0)
    tags = [c.tag for c in build_channels(m)]
    assert "cavity-loss" in tags and "cavity-out" not in tags


def test_channel_operators_have_at_most_one_entry_per_column():
    m = full_model(BRANCHING, pump=design_pump(), coupling_resonant=DESIGN_COUPLING)
    for ch in build_channels(m):
        per_col = np.count_nonzero(ch.op.mat, axis=0)
        assert per_col.max() <= 1


def test_channel_list_deterministic_bit_for_bit():
    m = full_model(BRANCHING, pump=design_pump(), coupling_resonant=DESIGN_COUPLING)
    a = build_channels(m)
    b = build_channels(m)
    assert [c.tag for c in a] == [c.tag for c in b]
    for ca, cb in zip(a, b):
        assert ca.rate == cb.rate
        np.testing.assert_array_equal(ca.op.mat, cb.op.mat)


def test_vacuum_rabi_oscillation_period():
    # lossless resonant two-level reduction: population cycles at pi / coupling
    g = 1.0e10
    m = two_level_model(
        coupling=g,
        pump=PumpPulse(rate=0.0, width=1e-12),
        quality_factor=math.inf,
        lifetime_pl=math.inf,
        n_cavity=1,
        n_waveguide=0,
    )
    psi0 = basis_state(m.space(), atom=1, cavity=0)
    period = math.pi / g
    res = integrate(
        m,
        rho0=psi0,
        t_final=2.0 * period,
        cfg=IntegratorConfig(record_dt=period / 100),
    )
    expected = np.cos(g * res.times) ** 2
    np.testing.assert_allclose(res.populations["pop_e"], expected, atol=1e-7)


def test_pump_pulse_rate_and_edges():
    p = PumpPulse(rate=2.0, width=1.0, t_start=0.5)
    assert p.rate_at(0.0) == 0.0
    assert p.rate_at(0.5) == 2.0
    assert p.rate_at(1.5) == 2.0
    assert p.rate_at(1.6) == 0.0
    assert p.edges_between(0.0, 3.0) == [0.5, 1.5]
    rep = PumpPulse(rate=2.0, width=1.0, rep_period=4.0)
    assert rep.rate_at(4.5) == 2.0
    assert rep.rate_at(5.5) == 0.0
    assert rep.rate_at(-1.0) == 0.0
    assert rep.edges_between(0.0, 9.0) == [1.0, 4.0, 5.0, 8.0]
    off = PumpPulse(rate=0.0, width=1.0)
    assert off.edges_between(0.0, 10.0) == []


def test_level_scheme_validation():
    with pytest.raises(ValueError):
        NVLevelScheme((0.0, -1.0), 1e15, (0.0, 0.0), (0.0,))
    with pytest.raises(ValueError):
        NVLevelScheme((0.0,), 1e15, (-1.0,), ())
    with pytest.raises(ValueError):
        NVLevelScheme((0.0, 1e14), 1e13, (0.0, 0.0), (0.0,))


def test_truncation_and_subset_validation():
    with pytest.raises(ValueError):
        Truncation(n_cavity=0)
    scheme = NVLevelScheme((0.0, 9.1e13), 2.95e15, (4e7, 4e7), (1e11,))
    cav = CavityConfig()
    coup = CouplingSpec((1e10, 0.0))
    with pytest.raises(ValueError):
        SystemModel(scheme, cav, coup, design_pump(), Truncation(atomic_subset=("g0", "g7", "e")))
    with pytest.raises(ValueError):
        SystemModel(scheme, cav, coup, design_pump(), Truncation(atomic_subset=("g0", "g1")))
    m = SystemModel(scheme, cav, coup, design_pump(), Truncation(atomic_subset=("g0", "e")))
    assert m.space().total_dim == 2 * 2 * 2
    # reduced model keeps the retained level's rates unchanged
    assert build_channels(m)[0].rate == 4e7


def test_composite_dim_full_default():
    m = full_model(BRANCHING, pump=design_pump(), coupling_resonant=DESIGN_COUPLING)
    assert m.space().total_dim == 11 * 2 * 2


def test_full_model_branching_validation():
    with pytest.raises(ValueError):
        full_model([0.5, 0.5], pump=design_pump(), coupling_resonant=1e10)
    bad = list(BRANCHING)
    bad[0] += 0.1
    with pytest.raises(ValueError):
        full_model(bad, pump=design_pump(), coupling_resonant=1e10)


def test_reduced_phonon_model_structure():
    m = reduced_phonon_model(coupling=1e9, quality_factor=36500, phonon_rate=1e7)
    assert m.retained_levels() == ("g0", "g1", "e")
    assert m.cavity.resonant_transition == 1
    tags = [c.tag for c in build_channels(m)]
    assert tags == ["phonon:0", "cavity-loss"]
    # cavity sits on the first phonon line, below the bare transition
    assert m.cavity.angular_frequency < 2.952432e15
