import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavmem import closed_form as cf
from cavmem.beam import (
    DISPERSIVE,
    PHASE_KICK,
    AtomInstance,
    BeamSpec,
    Geometry,
    analytic_slot_factors,
    apply_atom_analytic,
    apply_atom_numeric,
    atom_transfer_map,
    build_schedule,
    fit_decay,
    monte_carlo_ensemble,
    nominal_slot,
    run_beam,
    sample_atom,
)
from cavmem.errors import ClampedTimingWarning, FactorOutOfRange, FitDegenerate
from cavmem.hilbert import PhysicalParams, field_qubit, pure_density
from cavmem.validation import per_atom_coherence_ratio

T_INT = 1.96e-5
G = math.pi / T_INT
KAPPA = 1 / (2 * 0.130)
PRESET = PhysicalParams(kappa=KAPPA, G=G, delta=3 * G)
LOSSLESS = PhysicalParams(kappa=0.0, G=G, delta=3 * G)


def random_qubit(seed, cutoff=3):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    psi = np.zeros(cutoff, dtype=complex)
    psi[:2] = v / np.linalg.norm(v)
    return pure_density(psi)


class TestSampling:
    def test_no_dispersion_means_nominal(self):
        rng = np.random.default_rng(0)
        atom = sample_atom(BeamSpec(density=1.0, dv=0.0), Geometry(), PHASE_KICK, rng)
        assert atom.present and atom.dt_pi1 == 0 and atom.dt_pi2 == 0 and atom.velocity == 510.0

    def test_empty_beam(self):
        rng = np.random.default_rng(0)
        spec = BeamSpec(density=0.0, dv=1.0)
        assert not any(sample_atom(spec, Geometry(), PHASE_KICK, rng).present for _ in range(200))

    def test_fixed_timing_shift(self):
        spec = BeamSpec(density=1.0, v0=510.0, dv=1.0, velocity_dist="fixed")
        atom = sample_atom(spec, Geometry(a=0.01), PHASE_KICK, np.random.default_rng(0))
        assert atom.velocity == 511.0
        assert atom.dt_pi1 == pytest.approx(3.8446751249519416e-8, rel=1e-14)
        assert atom.dt_pi2 == pytest.approx(Geometry().c / 510.0 / 510.0, rel=1e-14)

    def test_dispersive_uses_far_length_d(self):
        geom = Geometry(a=0.01, c=0.02, d=0.05)
        spec = BeamSpec(density=1.0, v0=127.5, dv=1.0, velocity_dist="fixed")
        atom = sample_atom(spec, geom, DISPERSIVE, np.random.default_rng(0))
        assert atom.dt_pi2 == pytest.approx(0.05 / 127.5**2)

    def test_uniform_rms(self):
        assert BeamSpec(dv=2.0).velocity_rms == pytest.approx(2 / math.sqrt(3))

    def test_large_spread_warns(self):
        with pytest.warns(UserWarning):
            BeamSpec(v0=10.0, dv=2.0)


class TestSchedule:
    def test_kick_nominal(self):
        s = build_schedule(AtomInstance(True, 510.0), PRESET, PHASE_KICK)
        assert [seg.kind for seg in s.segments] == ["resonant", "kick", "resonant"]
        assert s.segments[0].duration == pytest.approx(math.pi / PRESET.Omega)
        assert s.duration == pytest.approx(T_INT)

    def test_dispersive_tau(self):
        s = build_schedule(AtomInstance(True, 127.5), PRESET, DISPERSIVE)
        assert s.segments[1].duration == pytest.approx(6 * math.pi / PRESET.Omega)

    def test_absent_atom(self):
        s = build_schedule(AtomInstance(False, 510.0), PRESET, PHASE_KICK)
        assert len(s.segments) == 1 and s.segments[0].kind == "free"
        assert s.segments[0].duration == pytest.approx(2 * math.pi / PRESET.Omega)

    def test_clamping(self):
        atom = AtomInstance(True, 400.0, dt_pi1=-1.0, dt_pi2=0.0)
        with pytest.warns(ClampedTimingWarning):
            s = build_schedule(atom, PRESET, PHASE_KICK)
        assert s.clamped and s.segments[0].duration == 0.0


class TestSingleAtom:
    @pytest.mark.parametrize("kind", [PHASE_KICK, DISPERSIVE])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_lossless_round_trip(self, kind, seed):
        field = random_qubit(seed)
        out = apply_atom_numeric(field, build_schedule(AtomInstance(True, 0.0), LOSSLESS, kind), LOSSLESS)
        np.testing.assert_allclose(out, field, atol=1e-6)

    @pytest.mark.parametrize("kind", [PHASE_KICK, DISPERSIVE])
    def test_vacuum_is_stationary(self, kind):
        vac = pure_density(np.array([1, 0, 0]))
        perturbed = AtomInstance(True, 0.0, dt_pi1=1e-6, dt_pi2=-2e-6)
        out = apply_atom_numeric(vac, build_schedule(perturbed, PRESET, kind), PRESET)
        np.testing.assert_array_equal(out, vac)

    def test_transfer_map_matches_step_path(self):
        field = random_qubit(3)
        sched = build_schedule(AtomInstance(True, 0.0, 1e-7, 2e-7), PRESET, DISPERSIVE)
        direct = apply_atom_numeric(field, sched, PRESET)
        mapped = (atom_transfer_map(sched, PRESET) @ field.reshape(-1)).reshape(3, 3)
        np.testing.assert_allclose(mapped, direct, atol=1e-12)

    def test_eta_agreement_vanishes_quadratically(self):
        devs = []
        for r in (1e-2, 1e-3, 1e-4):
            got = per_atom_coherence_ratio(r, PRESET.Omega)
            devs.append(abs(got - cf.eta(r * PRESET.Omega, PRESET.Omega, T_INT)))
            assert devs[-1] <= 10 * r**2
        assert devs[0] / devs[1] >= 50 and devs[1] / devs[2] >= 50


class TestAnalytic:
    def test_identity(self):
        f = random_qubit(4)
        np.testing.assert_allclose(apply_atom_analytic(f, 1.0), f, atol=1e-16)

    def test_population_example(self):
        out = apply_atom_analytic(pure_density(np.array([0, 1, 0])), math.exp(-0.5))
        assert out[1, 1].real == pytest.approx(0.36787944117144233, rel=1e-15)
        assert np.trace(out).real == pytest.approx(1.0)

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_coherence_linear(self, a, b):
        f = field_qubit(0.5, 0.4 + 0.2j, PRESET.space)
        assert apply_atom_analytic(f, a * b)[1, 0] == pytest.approx(a * b * f[1, 0], rel=1e-14)

    def test_out_of_range(self):
        with pytest.raises(FactorOutOfRange):
            apply_atom_analytic(random_qubit(0), 1.5)
        with pytest.raises(FactorOutOfRange):
            apply_atom_analytic(random_qubit(0), 0.0)

    def test_repeated_map_is_product_form(self):
        n = 37
        eta = cf.eta(KAPPA, PRESET.Omega, T_INT)
        f = field_qubit(0.5, 0.5, PRESET.space)
        out = f
        for _ in range(n):
            out = apply_atom_analytic(out, eta)
        assert out[1, 0] == pytest.approx(0.5 * eta**n, rel=1e-13)
        assert out[1, 1].real == pytest.approx(0.5 * eta ** (2 * n), rel=1e-13)

    def test_empty_slot_is_free_decay(self):
        slot = nominal_slot(PRESET, PHASE_KICK)
        factor, deph = analytic_slot_factors(AtomInstance(False, 510.0), PRESET, Geometry(),
                                             PHASE_KICK, 510.0)
        assert factor == pytest.approx(math.exp(-KAPPA * slot)) and deph == 1.0


class TestRunBeam:
    def test_zero_atoms(self):
        f = random_qubit(0)
        res = run_beam(f, BeamSpec(n_atoms=0), Geometry(), PRESET, PHASE_KICK)
        assert res.times.shape == (1,)
        np.testing.assert_array_equal(res.final, f)

    @pytest.mark.parametrize("kind", [PHASE_KICK, DISPERSIVE])
    def test_lossless_train(self, kind):
        f = random_qubit(7)
        n = 250
        res = run_beam(f, BeamSpec(n_atoms=n, density=1.0), Geometry(), LOSSLESS, kind)
        assert np.max(np.abs(res.final - f)) <= n * 1e-6

    @pytest.mark.parametrize("engine", ["numeric", "analytic"])
    def test_empty_beam_is_bare_decay(self, engine):
        f = field_qubit(0.5, 0.5, PRESET.space)
        res = run_beam(f, BeamSpec(n_atoms=400, density=0.0), Geometry(), PRESET, PHASE_KICK,
                       engine=engine)
        np.testing.assert_allclose(res.rho11, 0.5 * np.exp(-2 * KAPPA * res.times), atol=1e-6, rtol=1e-6)
        np.testing.assert_allclose(res.coherence, 0.5 * np.exp(-KAPPA * res.times), rtol=1e-6)

    def test_numeric_and_analytic_agree_at_preset(self):
        f = field_qubit(0.5, 0.5, PRESET.space)
        spec = BeamSpec(n_atoms=300, density=0.6, seed=11)
        a = run_beam(f, spec, Geometry(), PRESET, PHASE_KICK, engine="numeric")
        b = run_beam(f, spec, Geometry(), PRESET, PHASE_KICK, engine="analytic")
        assert a.n_present == b.n_present
        np.testing.assert_allclose(a.coherence, b.coherence, rtol=1e-6)

    def test_deterministic(self):
        f = random_qubit(2)
        spec = BeamSpec(n_atoms=60, density=0.7, dv=1.0, seed=42)
        a = run_beam(f, spec, Geometry(), PRESET, PHASE_KICK)
        b = run_beam(f, spec, Geometry(), PRESET, PHASE_KICK)
        np.testing.assert_array_equal(a.rho10, b.rho10)
        np.testing.assert_array_equal(a.fidelity, b.fidelity)

    @pytest.mark.parametrize("kind", [PHASE_KICK, DISPERSIVE])
    def test_valid_states_and_no_leakage(self, kind):
        f = random_qubit(9)
        spec = BeamSpec(n_atoms=80, density=0.8, v0=510.0 if kind == PHASE_KICK else 127.5, dv=2.0, seed=3)
        res = run_beam(f, spec, Geometry(), PRESET, kind)
        assert res.leakage_max <= 1e-8
        assert np.trace(res.final).real == pytest.approx(1.0, abs=1e-9)
        assert np.linalg.eigvalsh(res.final).min() >= -1e-8
        assert np.all(res.fidelity <= 1 + 1e-12)


class TestEnsemble:
    field = field_qubit(0.5, 0.5, PRESET.space)

    def test_bare_rates(self):
        spec = BeamSpec(n_atoms=200, density=0.0, seed=1)
        ens = monte_carlo_ensemble(self.field, spec, Geometry(), PRESET, PHASE_KICK, 5)
        assert ens.population_fit.rate == pytest.approx(2 * KAPPA, rel=0.01)
        assert ens.coherence_fit.rate == pytest.approx(KAPPA, rel=0.01)

    def test_full_beam_matches_closed_form(self):
        spec = BeamSpec(n_atoms=300, density=1.0, seed=1)
        ens = monte_carlo_ensemble(self.field, spec, Geometry(), PRESET, PHASE_KICK, 3)
        rep = cf.dwell_kick(cf.KickParams(KAPPA, PRESET.Omega, T_INT, lam=1.0))
        assert ens.coherence_fit.rate == pytest.approx(1 / rep.Tr_c, rel=0.01)
        assert ens.population_fit.rate == pytest.approx(1 / rep.Tr_p, rel=0.01)

    def test_standard_error_shrinks_as_root_n(self):
        spec = BeamSpec(n_atoms=200, density=0.5, seed=5)
        small = monte_carlo_ensemble(self.field, spec, Geometry(), PRESET, PHASE_KICK, 100,
                                     engine="analytic")
        large = monte_carlo_ensemble(self.field, spec, Geometry(), PRESET, PHASE_KICK, 400,
                                     engine="analytic")
        ratio = np.median(small.se_coherence[1:] / large.se_coherence[1:])
        assert ratio == pytest.approx(2.0, abs=0.3)

    def test_parallel_matches_serial(self):
        spec = BeamSpec(n_atoms=40, density=0.5, dv=1.0, seed=8)
        a = monte_carlo_ensemble(self.field, spec, Geometry(), PRESET, PHASE_KICK, 6)
        b = monte_carlo_ensemble(self.field, spec, Geometry(), PRESET, PHASE_KICK, 6, workers=2)
        np.testing.assert_array_equal(a.mean_rho10, b.mean_rho10)

    def test_fit_degenerate(self):
        with pytest.raises(FitDegenerate):
            fit_decay([0.0, 1.0], [1.0, 0.5])
        with pytest.raises(FitDegenerate):
            monte_carlo_ensemble(self.field, BeamSpec(n_atoms=1), Geometry(), PRESET, PHASE_KICK, 2)

    def test_fit_recovers_rate(self):
        t = np.linspace(0, 2, 20)
        fit = fit_decay(t, 3 * np.exp(-0.7 * t))
        assert fit.rate == pytest.approx(0.7, rel=1e-12)
        assert fit.residual_rms < 1e-12
