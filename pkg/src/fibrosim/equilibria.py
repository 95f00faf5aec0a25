"""Equilibria of the homogeneous system and their linear stability."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (
    MollifierDomainError,
    ModelParams,
    VolumeState,
    _growth,
    as_state_array,
    check_gamma_ordering,
)
from .ode import rhs

STABILITY_TOL = 1e-6
FD_STEP = 1e-7
KINK_TOL = 1e-6
TRIVIAL_NOTE = "zero eigenvalue along phi_M (line of equilibria)"


class NoRootError(ValueError):
    pass


class NonexistenceError(ValueError):
    """The nontrivial equilibrium does not exist; ``reason`` says why."""

    def __init__(self, reason: str, message: str):
        super().__init__(f"{reason}: {message}")
        self.reason = reason


class MultipleRootsWarning(UserWarning):
    pass


class KinkWarning(UserWarning):
    pass


def _bisect(f, a: float, b: float, fa: float | None = None) -> float:
    fa = f(a) if fa is None else fa
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _sign_changes(f, lo: float, hi: float, n: int) -> list[tuple[float, float]]:
    xs = np.linspace(lo, hi, n + 1)
    v = np.asarray(f(xs), dtype=float)
    brackets = []
    for i in range(n):
        if v[i] == 0:
            brackets.append((xs[i], xs[i]))
        elif v[i] * v[i + 1] < 0:
            brackets.append((xs[i], xs[i + 1]))
    return brackets


def find_matrix_root(alpha: str, p: ModelParams, scan: int = 1000) -> float:
    """Zero of ``mu_alpha(s) - nu_alpha s`` on ``[0, psi_alpha]``.

    If several sign changes are found a :class:`MultipleRootsWarning` is
    issued and the smallest root returned.
    """
    k = p.kinetics(alpha)
    f = lambda s: k.mu(s) - k.nu_alpha * np.asarray(s)  # noqa: E731
    if float(f(0.0)) == 0.0:
        # mu(0) = 0: only the degenerate root at the origin
        raise NoRootError(f"mu_{alpha}(0) = 0; degenerate root M = 0")
    brackets = _sign_changes(f, 0.0, k.psi_alpha, scan)
    if not brackets:
        raise NoRootError(f"mu_{alpha}(s) - nu_{alpha} s has no sign change on [0, {k.psi_alpha}]")
    roots = [a if a == b else _bisect(lambda s: float(f(s)), a, b) for a, b in brackets]
    if len(roots) > 1:
        warnings.warn(f"{len(roots)} roots of mu - nu s found: {roots}; using the smallest", MultipleRootsWarning)
    return roots[0]


def near_kink(state, p: ModelParams, tol: float = KINK_TOL) -> bool:
    """True if any piecewise-linear switch argument sits within ``tol`` of a kink."""
    if p.mollifier != "linear":
        return False
    y = as_state_array(state)
    phi_M, psi = y[2], y.sum()
    args = [(p.psi_M - psi, p.eps_M)]
    for alpha in ("T", "H"):
        k = p.kinetics(alpha)
        args.append((k.psi_alpha - psi, k.eps_alpha))
        args.append((k.m_alpha - phi_M, p.eps_M))
    return any(abs(a) < tol or abs(a - eps) < tol for a, eps in args)


def jacobian(state, p: ModelParams, step: float = FD_STEP) -> np.ndarray:
    """Finite-difference Jacobian of the rate map.

    Central differences normally; if a piecewise-linear switch has a kink
    within 1e-6 of ``state`` a :class:`KinkWarning` is issued and forward
    differences are used instead.
    """
    y = as_state_array(state).astype(float)
    E = np.eye(3) * step
    if near_kink(y, p):
        warnings.warn("state is at a switch kink; using one-sided differences", KinkWarning)
        return ((rhs(y + E, p) - rhs(y, p)) / step).T
    return ((rhs(y + E, p) - rhs(y - E, p)) / (2 * step)).T


def classify(eigenvalues, tol: float = STABILITY_TOL) -> str:
    re = np.real(np.asarray(eigenvalues))
    if np.all(re < -tol):
        return "stable"
    if np.any(re > tol):
        return "unstable"
    return "marginal"


@dataclass
class EquilibriumReport:
    location: VolumeState
    kind: str  # trivial-family | physiological | pathological
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    verdict: str
    residual: float
    restricted_eigenvalues: np.ndarray | None = None
    restricted_verdict: str | None = None
    kink: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def pairs(ev):
            return None if ev is None else [[float(np.real(z)), float(np.imag(z))] for z in ev]

        return {
            "location": {"phi_T": self.location.phi_T, "phi_H": self.location.phi_H, "phi_M": self.location.phi_M},
            "kind": self.kind,
            "eigenvalues": pairs(self.eigenvalues),
            "verdict": self.verdict,
            "residual": self.residual,
            "restricted_eigenvalues": pairs(self.restricted_eigenvalues),
            "restricted_verdict": self.restricted_verdict,
            "kink": self.kink,
            "notes": list(self.notes),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _restricted_indices(kind: str):
    return {"physiological": [1, 2], "pathological": [0, 2], "trivial-family": [0, 1]}[kind]


def classify_stability(report: EquilibriumReport) -> str:
    """Fill in the verdicts of ``report`` from its Jacobian; returns the full-system verdict.

    For the trivial family the verdict is the transverse one (the
    (phi_T, phi_H) block), since the direction along the family always
    carries a zero eigenvalue.
    """
    J = report.jacobian
    idx = _restricted_indices(report.kind)
    block = J[np.ix_(idx, idx)]
    report.restricted_eigenvalues = np.linalg.eigvals(block)
    report.restricted_verdict = classify(report.restricted_eigenvalues)
    if report.kind == "trivial-family":
        report.verdict = report.restricted_verdict
        if TRIVIAL_NOTE not in report.notes:
            report.notes.append(TRIVIAL_NOTE)
    else:
        report.verdict = classify(report.eigenvalues)
    return report.verdict


def analyse_point(state, p: ModelParams, kind: str) -> EquilibriumReport:
    loc = state if isinstance(state, VolumeState) else VolumeState.from_array(state)
    y = loc.as_array()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", KinkWarning)
        J = jacobian(y, p)
    report = EquilibriumReport(
        location=loc,
        kind=kind,
        jacobian=J,
        eigenvalues=np.linalg.eigvals(J),
        verdict="marginal",
        residual=float(np.abs(rhs(y, p)).sum()),
        kink=bool(caught),
    )
    classify_stability(report)
    return report


def trivial_equilibrium(phi_M: float, p: ModelParams) -> EquilibriumReport:
    return analyse_point(VolumeState(0.0, 0.0, phi_M), p, "trivial-family")


def nontrivial_equilibrium(alpha: str, p: ModelParams, eta: float | None = None) -> EquilibriumReport:
    """Single-population equilibrium: ``phi_M = M_alpha``,
    ``phi_alpha = psi_alpha - M_alpha - H_alpha^{-1}((delta + delta' H_M(m - M)) / gamma(M))``.

    Requires ``psi_M = 1`` and ``phi_alpha + phi_M <= 1 - eta`` with
    ``eta = 2 eps_M`` by default.
    """
    k = p.kinetics(alpha)
    eta = 2 * p.eps_M if eta is None else eta
    if p.psi_M != 1.0:
        raise NonexistenceError("free-space precondition violated", f"psi_M = {p.psi_M}, expected 1")
    M = float(find_matrix_root(alpha, p))
    g = float(k.gamma(M))
    if g == 0:
        raise ZeroDivisionError(f"gamma_{alpha}(M_{alpha}) = 0")
    arg = (k.delta + k.delta_prime * p.switch("M")(k.m_alpha - M)) / g
    try:
        shift = float(p.switch(alpha).inverse(arg))
    except MollifierDomainError as exc:
        raise NonexistenceError("inverse-domain violation", f"switch argument {arg:.6g} not in (0, 1)") from exc
    phi_a = float(k.psi_alpha - M - shift)
    if phi_a <= 0:
        raise NonexistenceError("nonpositive phi_alpha", f"phi_{alpha} = {phi_a:.6g}")
    if phi_a + M > 1 - eta:
        raise NonexistenceError(
            "free-space precondition violated", f"phi_{alpha} + phi_M = {phi_a + M:.6g} > 1 - eta = {1 - eta:.6g}"
        )
    if alpha == "H":
        loc, kind = VolumeState(0.0, phi_a, M), "physiological"
    else:
        loc, kind = VolumeState(phi_a, 0.0, M), "pathological"
    return analyse_point(loc, p, kind)


@dataclass
class MixedScan:
    min_max_rate: float
    location: tuple[float, float, float] | None
    threshold: float
    passed: bool
    ordering_holds: bool


def mixed_equilibrium_scan(p: ModelParams, grid_n: int = 50, threshold: float = 1e-3, floor: float = 0.01) -> MixedScan:
    """Search a lattice with both cell ratios >= ``floor`` for simultaneous zeros of Gamma_T, Gamma_H.

    Passes if ``min max(|Gamma_T|, |Gamma_H|)`` over the admissible lattice
    exceeds ``threshold``.
    """
    cells = np.linspace(floor, 1.0, grid_n)
    matrix = np.linspace(0.0, 1.0, grid_n)
    T, Hh, M = np.meshgrid(cells, cells, matrix, indexing="ij")
    psi = T + Hh + M
    ok = psi <= 1 + 1e-12
    if not ok.any():
        return MixedScan(np.inf, None, threshold, True, check_gamma_ordering(p).holds)
    worst = np.maximum(np.abs(_growth("T", M[ok], psi[ok], p)), np.abs(_growth("H", M[ok], psi[ok], p)))
    i = int(np.argmin(worst))
    loc = (float(T[ok][i]), float(Hh[ok][i]), float(M[ok][i]))
    value = float(worst[i])
    return MixedScan(value, loc, threshold, value > threshold, check_gamma_ordering(p).holds)
