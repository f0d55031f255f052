import numpy as np
import pytest

from conftest import random_state
from rabi_dimer.ansatz import MultiD2State, build_overlap_tables, initial_state
from rabi_dimer.model import BathSpec, DrivingField, ModelSpec
from rabi_dimer.observables import (COLUMNS, ConsistencyError, bath_populations, energy, norm,
                                    observe, photon_numbers, qubit_polarizations)
from rabi_dimer.oracle import FockBasisSpec, FockHamiltonian, convert_ansatz_to_fock


def single_branch(amps, disp):
    return MultiD2State(np.asarray(amps, dtype=complex)[None], np.asarray(disp, dtype=complex)[None])


class TestExamples:
    def test_baseline_initial_state(self):
        rec = observe(initial_state(6, 0, 20.0, 1e-3), ModelSpec())
        assert rec.N_L == pytest.approx(20.0, rel=1e-12) and rec.N_R == pytest.approx(0.0, abs=1e-15)
        assert (rec.sigz_L, rec.sigz_R) == (-1.0, -1.0)
        assert rec.Z == pytest.approx(20.0) and rec.N_tot == pytest.approx(20.0)

    def test_vacuum_ground(self):
        s = single_branch([0, 0, 0, 1], [0, 0])
        model = ModelSpec(J=0.0, g=0.0)
        assert photon_numbers(s) == (0.0, 0.0)
        assert energy(s, model, 0.0) == pytest.approx(-1.0, abs=1e-15)

    def test_photons_plus_qubits(self):
        s = initial_state(1, 0, 20.0, 0.0)
        model = ModelSpec(J=0.05, g=0.0)
        assert energy(s, model, 0.0) == pytest.approx(19.0, rel=1e-14)

    def test_hopping_energy(self):
        # real displacements in both cavities: -J (mu* nu + nu* mu)
        s = single_branch([0, 0, 0, 1], [1.0, 2.0])
        model = ModelSpec(J=0.05, g=0.0)
        assert energy(s, model, 0.0) == pytest.approx(-1.0 + 1.0 + 4.0 - 0.05 * 4.0, rel=1e-14)

    def test_rabi_energy(self):
        # |up down> (x) |mu> with sigma_x coupling vanishing in a single product branch
        s = single_branch([0, 1, 0, 0], [0.7, 0])
        model = ModelSpec(J=0.05, g=0.3)
        assert energy(s, model, 0.0) == pytest.approx(0.49, rel=1e-14)

    def test_superposed_qubit(self):
        amp = np.sqrt(0.5)
        s = single_branch([amp, 0, amp, 0], [0.0, 0.0])
        assert qubit_polarizations(s) == pytest.approx((0.0, 1.0), abs=1e-15)

    def test_bath_population_single_branch(self):
        s = single_branch([0, 0, 0, 1], [0, 0, 0.3, 1j])
        assert np.allclose(bath_populations(s), [0.09, 1.0])

    def test_columns(self):
        rec = observe(initial_state(2, 0, 20.0, 0.0), ModelSpec())
        assert len(rec.row()) == len(COLUMNS)
        assert rec.row()[COLUMNS.index("N_L")] == rec.N_L


class TestAgainstFockOracle:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_random_two_branch_state(self, seed, small_model):
        rng = np.random.default_rng(seed)
        s = random_state(rng, 2, 2, scale=0.45)
        spec = FockBasisSpec(n_max_photon=14, n_max_bath=14, n_bath=2)
        psi = convert_ansatz_to_fock(s, spec).vector
        ref = FockHamiltonian(small_model, spec).observe(psi, 0.7)
        rec = observe(s, small_model, 0.7)
        for name in ("N_L", "N_R", "sigz_L", "sigz_R", "norm"):
            assert getattr(rec, name) == pytest.approx(getattr(ref, name), abs=1e-8), name
        assert rec.energy == pytest.approx(ref.energy, rel=1e-6)
        assert np.allclose(rec.bath_populations, ref.bath_populations, atol=1e-8)

    def test_baseline_like_state_without_bath(self):
        s = initial_state(4, 0, 4.0, 0.05, seed=3)
        model = ModelSpec(J=0.05, g=0.3, left=DrivingField(2.0, 0.5))
        spec = FockBasisSpec(n_max_photon=30)
        ref = FockHamiltonian(model, spec).observe(convert_ansatz_to_fock(s, spec).vector, 1.3)
        rec = observe(s, model, 1.3)
        assert rec.N_L == pytest.approx(ref.N_L, abs=1e-8)
        assert rec.energy == pytest.approx(ref.energy, rel=1e-6)


class TestProperties:
    def test_branch_permutation(self, rng, small_model):
        s = random_state(rng, 4, 2)
        perm = rng.permutation(4)
        p = MultiD2State(s.amps[perm], s.disp[perm])
        a, b = observe(s, small_model, 0.3), observe(p, small_model, 0.3)
        for name in COLUMNS:
            assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-12, abs=1e-14)

    def test_norm_positive(self, rng):
        for _ in range(10):
            s = MultiD2State(rng.normal(size=(3, 4)) + 0j, rng.normal(size=(3, 3)) + 0j)
            assert norm(s) > 0

    def test_complex_residue_detected(self, rng):
        s = random_state(rng, 2, 0)
        tables = build_overlap_tables(s)
        tables.S[0, 1] *= 1.0 + 0.5j
        with pytest.raises(ConsistencyError):
            norm(s, tables)

    def test_bath_shift_enters_energy(self):
        # one bath mode with both qubits up: phi (eta + eta*) * 2
        s = single_branch([1, 0, 0, 0], [0, 0, 0.25])
        bath = BathSpec(alpha=0.1, n_modes=1)
        model = ModelSpec(J=0.0, g=0.0, bath=bath)
        w, phi = model.modes.omega[0], model.modes.phi[0]
        assert energy(s, model, 0.0) == pytest.approx(1.0 + w * 0.0625 + 2 * phi * 0.5, rel=1e-13)
