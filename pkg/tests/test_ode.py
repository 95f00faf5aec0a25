import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibrosim.model import RateFunction, default_params
from fibrosim.ode import (
    InstabilityError,
    NonContractionError,
    Trajectory,
    augmented_rhs,
    continuous_dependence_check,
    gronwall_bound,
    integrate_picard,
    integrate_rk,
    lambda_bound,
    lipschitz_constant,
    picard_constants,
    rhs,
    sup_distance,
)


@pytest.fixture
def no_production(p0):
    # without matrix production phi_M stays 0 and healthy cells die at rate delta + delta' = 0.5
    return p0.replace(**{"kinetics_H.mu": RateFunction.linear(0.0), "kinetics_T.mu": RateFunction.linear(0.0)})


def simplex_points(rng, n):
    return rng.dirichlet(np.ones(4), size=n)[:, :3]


class TestRhs:
    def test_equilibrium_is_fixed(self, p0):
        np.testing.assert_allclose(rhs([0, 0.51, 0.25], p0), 0, atol=1e-15)

    def test_cell_free_line_is_fixed(self, p0):
        for m in (0.0, 0.3, 1.0):
            np.testing.assert_array_equal(rhs([0, 0, m], p0), 0)

    def test_augmented_conserves_total(self, p0, rng):
        y = simplex_points(rng, 50)
        Phi = np.concatenate([y, 1 - y.sum(1, keepdims=True)], axis=1)
        np.testing.assert_allclose(augmented_rhs(Phi, p0).sum(1), 0, atol=1e-15)


class TestRK:
    def test_exponential_decay_oracle(self, no_production):
        traj = integrate_rk([0, 0.4, 0], no_production, 2.0, 1e-3)
        np.testing.assert_allclose(traj.states[:, 1], 0.4 * np.exp(-0.5 * traj.times), rtol=1e-12)
        assert np.all(traj.states[:, 2] == 0)

    def test_fourth_order(self, p0):
        # this orbit stays clear of every switch transition, so the rate map is smooth along it
        y0 = [0.1, 0.2, 0.35]
        ref = integrate_rk(y0, p0, 1.0, 1e-4).final.as_array()
        errs = [np.abs(integrate_rk(y0, p0, 1.0, dt).final.as_array() - ref).sum() for dt in (0.1, 0.05)]
        assert errs[0] / errs[1] == pytest.approx(16, rel=0.15)

    def test_batch_matches_single(self, p0, rng):
        y = simplex_points(rng, 5)
        batch = integrate_rk(y, p0, 1.0, 1e-2)
        for i in range(5):
            np.testing.assert_allclose(batch.states[:, i], integrate_rk(y[i], p0, 1.0, 1e-2).states, atol=1e-15)

    def test_record_every(self, p0):
        traj = integrate_rk([0, 0.3, 0], p0, 1.0, 0.1, record_every=3)
        np.testing.assert_allclose(traj.times, [0, 0.3, 0.6, 0.9, 1.0])

    def test_ragged_end(self, p0):
        traj = integrate_rk([0, 0.3, 0], p0, 0.25, 0.1)
        assert traj.times[-1] == 0.25

    def test_bad_arguments(self, p0):
        with pytest.raises(ValueError):
            integrate_rk([0, 0.3, 0], p0, 1.0, 0.0)

    def test_huge_step_detected(self, p0):
        with pytest.raises(InstabilityError):
            integrate_rk([0.3, 0.3, 0.3], p0.replace(nu=150.0, **{"kinetics_T.nu_alpha": 150.0,
                                                                   "kinetics_H.nu_alpha": 150.0}), 10.0, 1.0)

    @given(w=st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))
    @settings(max_examples=30, deadline=None)
    def test_invariants(self, w):
        w = np.array(w) / np.sum(w)
        traj = integrate_rk(w[:3], default_params(), 20.0, 1e-2, record_every=10)
        assert traj.states.min() >= -1e-9
        assert traj.psi.max() <= 1 + 1e-9


class TestPicard:
    def test_constants_for_reference(self, p0):
        c = picard_constants(p0)
        assert c.lam_bound == pytest.approx(40.0)
        assert c.lam == pytest.approx(41.0)
        assert c.lipschitz == pytest.approx(131.6)
        assert lipschitz_constant(p0) == c.lipschitz
        assert lambda_bound(p0) == c.lam_bound

    def test_exponential_decay_oracle(self, no_production):
        traj = integrate_picard([0, 0.4, 0], no_production, 1.0)
        np.testing.assert_allclose(traj.states[:, 1], 0.4 * np.exp(-0.5 * traj.times), rtol=1e-6)

    def test_agrees_with_rk(self, p0):
        a = integrate_picard([0.1, 0.5, 0.25], p0, 1.0)
        b = integrate_rk([0.1, 0.5, 0.25], p0, 1.0, 1e-3)
        assert np.abs(a.final.as_array() - b.final.as_array()).sum() < 1e-6

    def test_augmented_mass(self, p0):
        traj = integrate_picard([0.2, 0.2, 0.2], p0, 0.5)
        np.testing.assert_allclose(traj.metadata["augmented"].sum(-1), 1.0, atol=1e-12)
        assert traj.metadata["augmented"].min() >= -1e-12

    def test_noncontracting_window(self, p0):
        with pytest.raises(NonContractionError):
            integrate_picard([0, 0.3, 0], p0, 1.0, window=1.0)

    def test_inadmissible_initial(self, p0):
        with pytest.raises(ValueError):
            integrate_picard([0.6, 0.6, 0.3], p0, 1.0)


class TestDependence:
    def test_bound_formula(self, p0):
        a = (131.6 + 41.0) * 0.5
        assert gronwall_bound(p0, 0.5) == pytest.approx(2 * (1 + a * np.exp(a)))

    def test_identical_initials(self, p0):
        r = continuous_dependence_check([0, 0.3, 0], [0, 0.3, 0], p0, 1.0)
        assert r.ratio == 0 and r.passed

    def test_perturbation_within_bound(self, p0):
        r = continuous_dependence_check([0.1, 0.3, 0.2], [0.1, 0.301, 0.2], p0, 1.0)
        assert r.initial_distance == pytest.approx(1e-3)
        assert r.passed and r.ratio < 10

    def test_sup_distance_requires_shared_nodes(self, p0):
        a = integrate_rk([0, 0.3, 0], p0, 1.0, 0.1)
        b = integrate_rk([0, 0.3, 0], p0, 1.0, 0.05)
        with pytest.raises(ValueError):
            sup_distance(a, b)
        assert sup_distance(a, a) == 0


def test_csv_round_trip(tmp_path, p0):
    traj = integrate_rk([0.01, 0.51, 0.25], p0, 1.0, 0.1)
    back = Trajectory.from_csv(traj.to_csv(tmp_path / "t.csv"))
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.times, traj.times)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,phi_T,phi_H,phi_M,psi"
