import json
import warnings

import numpy as np
import pytest

from fibrosim.equilibria import (
    KinkWarning,
    MultipleRootsWarning,
    NonexistenceError,
    NoRootError,
    TRIVIAL_NOTE,
    classify,
    find_matrix_root,
    jacobian,
    mixed_equilibrium_scan,
    near_kink,
    nontrivial_equilibrium,
    trivial_equilibrium,
)
from fibrosim.model import RateFunction

# hand-derived Jacobian at (0, 0.51, 0.25): the T row is Gamma_T = 0.125 on the diagonal,
# the H row is 0.51 * (-2.5, -2.5, 0.4 - 2.5) and the matrix row is 0.51 * (mu' - nu) on the diagonal
J_PHYSIO = np.array([[0.125, 0.0, 0.0], [-1.275, -1.275, -1.071], [0.0, 0.0, -1.02]])


class TestMatrixRoot:
    @pytest.mark.parametrize("alpha", ["T", "H"])
    def test_reference_root(self, p0, alpha):
        # 0.5 (1 - s) = 1.5 s
        assert find_matrix_root(alpha, p0) == pytest.approx(0.25, abs=1e-14)

    def test_degenerate_origin(self, p0):
        with pytest.raises(NoRootError):
            find_matrix_root("H", p0.replace(**{"kinetics_H.mu": RateFunction.linear(0.0)}))

    def test_no_sign_change(self, p0):
        with pytest.raises(NoRootError):
            find_matrix_root("H", p0.replace(**{"kinetics_H.mu": RateFunction.linear(0.0, 2.0)}))

    def test_multiple_roots_warns_and_returns_smallest(self, p0):
        mu = RateFunction.tabulated([0, 0.1, 0.2, 0.5, 1], [0.1, 0.1, 0.6, 0.6, 0.6])
        with pytest.warns(MultipleRootsWarning):
            root = find_matrix_root("H", p0.replace(**{"kinetics_H.mu": mu}))
        assert root == pytest.approx(0.1 / 1.5)


class TestNontrivial:
    def test_physiological(self, p0):
        r = nontrivial_equilibrium("H", p0)
        np.testing.assert_allclose(r.location.as_array(), [0, 0.51, 0.25], atol=1e-12)
        assert r.residual < 1e-12
        assert r.kind == "physiological"
        np.testing.assert_allclose(r.jacobian, J_PHYSIO, atol=1e-6)
        np.testing.assert_allclose(np.sort(r.eigenvalues.real), [-1.275, -1.02, 0.125], atol=1e-6)
        assert r.verdict == "unstable"
        assert r.restricted_verdict == "stable"

    def test_pathological(self, p0):
        r = nontrivial_equilibrium("T", p0)
        np.testing.assert_allclose(r.location.as_array(), [0.56, 0, 0.25], atol=1e-12)
        assert r.kind == "pathological"
        assert r.verdict == "stable"
        # Gamma_H at the tumor state: 0.25 H_H(-0.01) - 0.1 = -0.1
        assert r.jacobian[1, 1] == pytest.approx(-0.1, abs=1e-6)

    def test_smooth_switch(self):
        from fibrosim.model import default_params

        p = default_params("smooth")
        r = nontrivial_equilibrium("H", p)
        assert r.residual < 1e-12
        assert r.location.phi_M == pytest.approx(0.25)

    def test_inverse_domain(self, p0):
        with pytest.raises(NonexistenceError) as exc:
            nontrivial_equilibrium("H", p0.replace(**{"kinetics_H.delta": 0.3}))
        assert exc.value.reason == "inverse-domain violation"

    def test_nonpositive(self, p0):
        with pytest.raises(NonexistenceError) as exc:
            nontrivial_equilibrium("H", p0.replace(**{"kinetics_H.psi_alpha": 0.28}))
        assert exc.value.reason == "nonpositive phi_alpha"

    def test_free_space(self, p0):
        with pytest.raises(NonexistenceError) as exc:
            nontrivial_equilibrium("H", p0.replace(psi_M=0.9))
        assert exc.value.reason == "free-space precondition violated"
        with pytest.raises(NonexistenceError):
            nontrivial_equilibrium("H", p0, eta=0.3)

    def test_json(self, p0):
        d = json.loads(nontrivial_equilibrium("H", p0).to_json())
        assert d["location"]["phi_H"] == pytest.approx(0.51)
        assert len(d["eigenvalues"]) == 3 and len(d["eigenvalues"][0]) == 2


class TestTrivial:
    def test_column_along_family_vanishes(self, p0):
        r = trivial_equilibrium(0.5, p0)
        np.testing.assert_allclose(r.jacobian[:, 2], 0, atol=1e-12)
        assert TRIVIAL_NOTE in r.notes

    def test_rich_matrix_unstable(self, p0):
        # Gamma_T(0, 0, 0.5) = 0.5 - 0.1 = 0.4
        r = trivial_equilibrium(0.5, p0)
        assert r.verdict == "unstable"
        assert max(r.restricted_eigenvalues.real) == pytest.approx(0.4, abs=1e-6)

    def test_poor_matrix_stable(self, p0):
        # Gamma_T = 0.05 - 0.1 - 0.2, Gamma_H = 0.05 - 0.1 - 0.4
        r = trivial_equilibrium(0.05, p0)
        assert r.verdict == "stable"
        np.testing.assert_allclose(np.sort(r.restricted_eigenvalues.real), [-0.45, -0.25], atol=1e-6)


class TestJacobian:
    def test_kink_uses_one_sided(self, p0):
        y = [0.0, 0.3, 0.2]  # m_alpha - phi_M = 0
        assert near_kink(y, p0)
        with pytest.warns(KinkWarning):
            jacobian(y, p0)

    def test_smooth_switch_never_kinks(self):
        from fibrosim.model import default_params

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            jacobian([0.0, 0.3, 0.2], default_params("smooth"))

    def test_classify_band(self):
        assert classify([-1.0, -2.0]) == "stable"
        assert classify([-1.0, 1e-3]) == "unstable"
        assert classify([-1.0, 1e-8]) == "marginal"


class TestMixedScan:
    def test_reference_has_no_mixed_equilibria(self, p0):
        scan = mixed_equilibrium_scan(p0)
        assert scan.passed
        assert scan.min_max_rate > 1e-3

    def test_identical_kinetics_fail(self, p0):
        same = p0.replace(kinetics_T=p0.kinetics_H)
        scan = mixed_equilibrium_scan(same)
        assert not scan.passed
        assert scan.location is not None
