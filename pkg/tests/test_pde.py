import json

import numpy as np
import pytest

from fibrosim.model import RateFunction
from fibrosim.ode import rhs
from fibrosim.pde import (
    CFLError,
    ConstitutiveLaw,
    FieldInvariantError,
    FieldState,
    Grid1D,
    NoCrossingError,
    cell_flux,
    cell_fluxes,
    cfl_limit,
    export_frames,
    front_position,
    invasion_initial,
    simulate,
    step,
    wave_speed,
)


@pytest.fixture
def law():
    return ConstitutiveLaw()


@pytest.fixture
def step_profile():
    # tumor 0.2 and healthy 0.3 on the left half, tumor 0.3 alone on the right half
    grid = Grid1D(0.0, 8.0, 8)
    T = np.array([0.2] * 4 + [0.3] * 4)
    H = np.array([0.3] * 4 + [0.0] * 4)
    return FieldState(grid, T, H, np.full(8, 0.1))


class TestGrid:
    def test_geometry(self):
        g = Grid1D(0.0, 2.0, 10)
        assert g.dx == pytest.approx(0.2)
        assert g.centers[0] == pytest.approx(0.1)

    @pytest.mark.parametrize("args", [(0, 1, 4), (1, 0, 10)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            Grid1D(*args)


class TestLaw:
    def test_pressure(self):
        law = ConstitutiveLaw(kappa=2.0, phi0=0.1)
        assert law.pressure(0.5) == pytest.approx(0.5 * 2 * 0.4)
        assert law.pressure(0.05) == 0
        assert law.dpressure(0.5) == pytest.approx(2 * 0.4 + 0.5 * 2)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ConstitutiveLaw(K_T=-1)


class TestFlux:
    def test_face_flux_oracle(self, step_profile, law):
        # p = phi^2: gradient at the middle face is (0.09 - 0.25) / 1 = -0.16, upwind cell on the left
        assert cell_flux(step_profile, law, "T", 4) == pytest.approx(0.2 * (0.2 / 0.5) * 0.16)
        assert cell_flux(step_profile, law, "H", 4) == pytest.approx(0.3 * (0.3 / 0.5) * 0.16)

    def test_walls_and_flat_regions(self, step_profile, law):
        F = cell_fluxes(step_profile, law, "T")
        assert F[0] == 0 and F[-1] == 0
        np.testing.assert_array_equal(np.delete(F, 4), 0)

    def test_threshold_blocks_motion(self, step_profile):
        # tumor speed factor 0.4 - 0.5 / 0.16 < 0
        assert cell_flux(step_profile, ConstitutiveLaw(sigma_T=0.5), "T", 4) == 0

    def test_motility_scales(self, step_profile):
        a = cell_flux(step_profile, ConstitutiveLaw(K_H=1.0), "H", 4)
        b = cell_flux(step_profile, ConstitutiveLaw(K_H=3.0), "H", 4)
        assert b == pytest.approx(3 * a)


class TestStep:
    def test_uniform_field_matches_reaction_step(self, p0, law):
        y0 = np.array([0.1, 0.4, 0.25])
        f = FieldState.uniform(Grid1D(0, 1, 16), y0)
        dt = cfl_limit(f, law)
        out = step(f, p0, law, dt)
        np.testing.assert_allclose(out.as_array(), np.tile(y0 + dt * rhs(y0, p0), (16, 1)), atol=1e-15)
        assert out.t == pytest.approx(dt)

    def test_mass_balance(self, p0, law, step_profile):
        dt = 0.5 * cfl_limit(step_profile, law)
        out = step(step_profile, p0, law, dt)
        source = dt * rhs(step_profile.as_array(), p0).sum(axis=0) * step_profile.grid.dx
        for i, name in enumerate("THM"):
            assert out.mass(name) - step_profile.mass(name) == pytest.approx(source[i], abs=1e-14)

    def test_pure_transport_conserves(self, p0, law, step_profile):
        # no duplication, no death: only transport changes the cell fields
        zero = RateFunction.linear(0.0)
        still = p0.replace(**{f"kinetics_{a}.{k}": v for a in "TH"
                              for k, v in (("gamma", zero), ("delta", 0.0), ("delta_prime", 0.0))})
        f = FieldState(step_profile.grid, step_profile.phi_T, step_profile.phi_H, np.zeros(8))
        out = step(f, still, law, 0.5 * cfl_limit(f, law))
        assert out.mass("T") == pytest.approx(f.mass("T"), abs=1e-14)
        assert out.mass("H") == pytest.approx(f.mass("H"), abs=1e-14)

    def test_cfl_violation(self, p0, law, step_profile):
        with pytest.raises(CFLError):
            step(step_profile, p0, law, 10 * cfl_limit(step_profile, law))

    def test_invariant_check(self):
        f = FieldState.uniform(Grid1D(0, 1, 8), (0.6, 0.6, 0.1))
        with pytest.raises(FieldInvariantError):
            f.check()


class TestSimulate:
    def test_uniform_simulation_matches_euler(self, p0, law):
        y0 = np.array([0.05, 0.45, 0.2])
        frames = simulate(FieldState.uniform(Grid1D(0, 1, 8), y0), p0, law, 1.0, 0.5)
        assert [f.t for f in frames] == [0.0, 0.5, 1.0]
        assert np.ptp(frames[-1].as_array(), axis=0).max() < 1e-15

    def test_callback_and_partial_output(self, p0, law):
        seen = []
        frames = simulate(FieldState.uniform(Grid1D(0, 1, 8), (0, 0.5, 0.25)), p0, law, 1.0, 0.4, callback=seen.append)
        assert [round(f.t, 12) for f in frames] == [0.0, 0.4, 0.8, 1.0]
        assert len(seen) == 3

    def test_short_invasion_advances(self, p0, law):
        init = invasion_initial(p0, Grid1D(0.0, 10.0, 50))
        frames = simulate(init, p0, law, 40.0, 10.0)
        assert frames[-1].mass("T") > init.mass("T")
        assert front_position(frames[-1], "T", 0.02) > front_position(init, "T", 0.02)


class TestFront:
    def _frame(self, t, x0):
        g = Grid1D(0.0, 10.0, 100)
        T = 0.5 * (g.centers < x0)
        return FieldState(g, T, np.zeros(100), np.zeros(100), t)

    def test_crossing_interpolated(self):
        f = self._frame(0.0, 4.0)
        assert front_position(f, "T", 0.25) == pytest.approx(4.0, abs=0.06)

    def test_linear_motion(self):
        frames = [self._frame(t, 2.0 + 0.5 * t) for t in range(6)]
        fit = wave_speed(frames, "T", 0.25)
        assert fit.speed == pytest.approx(0.5)
        assert fit.r2 == pytest.approx(1.0)

    def test_no_crossing(self):
        f = self._frame(0.0, 0.0)
        with pytest.raises(NoCrossingError):
            front_position(f, "T", 0.25)

    def test_too_few_frames(self):
        with pytest.raises(ValueError):
            wave_speed([self._frame(0, 3)] * 2, "T", 0.25)


def test_export(tmp_path, p0, law):
    frames = simulate(FieldState.uniform(Grid1D(0, 1, 8), (0, 0.5, 0.25)), p0, law, 1.0, 0.5)
    manifest = export_frames(frames, tmp_path / "out", {"a": 1.0}, law)
    data = json.loads(manifest.read_text())
    assert data["times"] == [0.0, 0.5, 1.0]
    assert (tmp_path / "out" / data["files"][1]).read_text().startswith("x,phi_T,phi_H,phi_M\n")
    assert data["law"]["kappa"] == 1.0
