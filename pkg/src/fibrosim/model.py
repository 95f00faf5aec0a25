"""Kinetic rate laws, switch functions and parameter sets of the mixture model.

The state of the tissue at a point is the triple of volume ratios
``(phi_T, phi_H, phi_M)`` for tumor cells, healthy cells and extracellular
matrix. Every rate function in this module accepts either a
:class:`VolumeState` or an array whose last axis has length 3, so whole
batches of states can be evaluated at once.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

POPULATIONS = ("T", "H")
MOLLIFIER_SHAPES = ("linear", "smooth")

_SAMPLES = np.linspace(0.0, 1.0, 1001)


class MollifierDomainError(ValueError):
    """Raised when a switch value cannot be inverted (outside (0, 1))."""


@dataclass(frozen=True)
class VolumeState:
    phi_T: float
    phi_H: float
    phi_M: float

    @property
    def psi(self) -> float:
        """Volume fraction occupied by cells and matrix."""
        return self.phi_T + self.phi_H + self.phi_M

    @property
    def free_space(self) -> float:
        return 1.0 - self.psi

    def as_array(self) -> np.ndarray:
        return np.array([self.phi_T, self.phi_H, self.phi_M], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "VolumeState":
        a, b, c = (float(v) for v in values)
        return cls(a, b, c)

    def is_admissible(self, tol: float = 0.0) -> bool:
        arr = self.as_array()
        return bool(np.all(arr >= -tol) and np.all(arr <= 1 + tol) and arr.sum() <= 1 + tol)


def as_state_array(state) -> np.ndarray:
    """Return ``state`` as a float array with trailing axis of length 3."""
    if isinstance(state, VolumeState):
        return state.as_array()
    arr = np.asarray(state, dtype=float)
    if arr.shape[-1:] != (3,):
        raise ValueError(f"expected trailing dimension 3, got shape {arr.shape}")
    return arr


def _scalar_or_array(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# switch functions


@dataclass(frozen=True)
class Mollifier:
    """Lipschitz ramp from 0 (for ``s <= 0``) to 1 (for ``s >= width``).

    ``shape="linear"`` is the piecewise-linear ramp ``s / width``;
    ``shape="smooth"`` is the C1 smoothstep ``3t^2 - 2t^3`` with ``t = s / width``.
    """

    width: float
    shape: str = "linear"

    def __post_init__(self):
        if self.shape not in MOLLIFIER_SHAPES:
            raise ValueError(f"unknown mollifier shape {self.shape!r}")

    @property
    def lipschitz(self) -> float:
        if self.width <= 0:
            return math.inf
        return (1.0 if self.shape == "linear" else 1.5) / self.width

    def __call__(self, s):
        t = np.minimum(np.maximum(np.asarray(s, dtype=float) / self.width, 0.0), 1.0)
        if self.shape == "smooth":
            t = t * t * (3.0 - 2.0 * t)
        return _scalar_or_array(t)

    def derivative(self, s):
        t = np.asarray(s, dtype=float) / self.width
        inside = (t > 0) & (t < 1)
        if self.shape == "linear":
            d = np.where(inside, 1.0 / self.width, 0.0)
        else:
            d = np.where(inside, 6.0 * t * (1.0 - t) / self.width, 0.0)
        return _scalar_or_array(d)

    def inverse(self, y):
        """Unique ``s`` in ``(0, width)`` with ``H(s) = y``, for ``y`` in ``(0, 1)``."""
        y = np.asarray(y, dtype=float)
        if np.any((y <= 0) | (y >= 1)) or np.any(np.isnan(y)):
            raise MollifierDomainError(f"switch inverse defined only on (0, 1), got {y}")
        if self.shape == "linear":
            t = y
        else:
            # closed-form inverse of the smoothstep on [0, 1]
            t = 0.5 - np.sin(np.arcsin(1.0 - 2.0 * y) / 3.0)
        return _scalar_or_array(self.width * t)

    def kinks(self) -> tuple[float, ...]:
        """Points where the switch is not differentiable."""
        return (0.0, self.width) if self.shape == "linear" else ()


def mollifier_eval(s, H: Mollifier):
    return H(s)


def mollifier_inverse(y, H: Mollifier):
    return H.inverse(y)


# ---------------------------------------------------------------------------
# rate functions on [0, 1]

RATE_FAMILIES = ("linear", "saturating", "tabulated")


@dataclass(frozen=True)
class RateFunction:
    """Scalar rate law on [0, 1].

    Families and coefficient layout:

    * ``linear``: ``(a, b)`` gives ``a + b*s``
    * ``saturating``: ``(a, b, k)`` gives ``a + b*s/(k + s)``, ``k > 0``
    * ``tabulated``: ``(x_0..x_n, y_0..y_n)`` flattened; piecewise-linear
      interpolation between the nodes
    """

    family: str
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if self.family not in RATE_FAMILIES:
            raise ValueError(f"unknown rate family {self.family!r}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        n = len(self.coeffs)
        if self.family == "linear" and n != 2:
            raise ValueError("linear rate needs 2 coefficients (a, b)")
        if self.family == "saturating" and (n != 3 or self.coeffs[2] <= 0):
            raise ValueError("saturating rate needs (a, b, k) with k > 0")
        if self.family == "tabulated":
            if n < 4 or n % 2:
                raise ValueError("tabulated rate needs matching node and value lists")
            xs = np.asarray(self.coeffs[: n // 2])
            if np.any(np.diff(xs) <= 0):
                raise ValueError("tabulated nodes must be strictly increasing")

    @classmethod
    def linear(cls, slope: float, intercept: float = 0.0) -> "RateFunction":
        return cls("linear", (intercept, slope))

    @classmethod
    def saturating(cls, amplitude: float, half: float, base: float = 0.0) -> "RateFunction":
        return cls("saturating", (base, amplitude, half))

    @classmethod
    def tabulated(cls, xs: Iterable[float], ys: Iterable[float]) -> "RateFunction":
        xs, ys = list(xs), list(ys)
        if len(xs) != len(ys):
            raise ValueError("xs and ys differ in length")
        return cls("tabulated", tuple(xs) + tuple(ys))

    def _table(self):
        n = len(self.coeffs) // 2
        return np.asarray(self.coeffs[:n]), np.asarray(self.coeffs[n:])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "linear":
            a, b = self.coeffs
            out = a + b * s
        elif self.family == "saturating":
            a, b, k = self.coeffs
            out = a + b * s / (k + s)
        else:
            xs, ys = self._table()
            out = np.interp(s, xs, ys)
        return _scalar_or_array(out)

    @property
    def lipschitz(self) -> float:
        """Declared Lipschitz constant on [0, 1] (exact for built-in families)."""
        if self.family == "linear":
            return abs(self.coeffs[1])
        if self.family == "saturating":
            return abs(self.coeffs[1]) / self.coeffs[2]
        xs, ys = self._table()
        return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))

    @property
    def monotonicity(self) -> str:
        if self.family in ("linear", "saturating"):
            slopes = np.array([self.coeffs[1]])
        else:
            xs, ys = self._table()
            slopes = np.diff(ys)
        if np.all(slopes == 0):
            return "constant"
        if np.all(slopes >= 0):
            return "nondecreasing"
        if np.all(slopes <= 0):
            return "nonincreasing"
        return "mixed"


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class CellKinetics:
    """Kinetic constants of one cell population."""

    gamma: RateFunction
    delta: float
    delta_prime: float
    psi_alpha: float
    m_alpha: float
    eps_alpha: float
    mu: RateFunction
    nu_alpha: float


@dataclass(frozen=True)
class ModelParams:
    kinetics_T: CellKinetics
    kinetics_H: CellKinetics
    psi_M: float = 1.0
    eps_M: float = 0.05
    tau: float = 1.0
    pi_T: float = 1.0
    pi_H: float = 1.0
    nu: float = 1.5
    mollifier: str = "linear"

    def kinetics(self, alpha: str) -> CellKinetics:
        if alpha == "T":
            return self.kinetics_T
        if alpha == "H":
            return self.kinetics_H
        raise ValueError(f"population must be 'T' or 'H', got {alpha!r}")

    def switch(self, alpha: str) -> Mollifier:
        """Free-space switch of population ``alpha`` ('T', 'H') or the matrix ('M')."""
        width = self.eps_M if alpha == "M" else self.kinetics(alpha).eps_alpha
        return Mollifier(width, self.mollifier)

    def pi(self, alpha: str) -> float:
        return self.pi_T if alpha == "T" else self.pi_H

    def replace(self, **overrides) -> "ModelParams":
        """Copy with overrides; dotted keys such as ``kinetics_H.delta`` reach into kinetics."""
        top, nested = {}, {"kinetics_T": {}, "kinetics_H": {}}
        for key, value in overrides.items():
            head, _, rest = key.partition(".")
            if rest:
                if head not in nested:
                    raise KeyError(key)
                nested[head][rest] = value
            else:
                top[key] = value
        for name, changes in nested.items():
            if changes:
                base = top.get(name, getattr(self, name))
                top[name] = dataclasses.replace(base, **changes)
        return dataclasses.replace(self, **top)


def default_params(mollifier: str = "linear") -> ModelParams:
    """Reference parameter set used throughout the examples and tests.

    Tumor cells differ from healthy cells by a higher crowding threshold
    (0.85 vs 0.8) and a weaker anoikis response (0.2 vs 0.4).
    """
    healthy = CellKinetics(
        gamma=RateFunction.linear(1.0),
        delta=0.1,
        delta_prime=0.4,
        psi_alpha=0.8,
        m_alpha=0.2,
        eps_alpha=0.1,
        mu=RateFunction.linear(-0.5, 0.5),
        nu_alpha=1.5,
    )
    tumor = dataclasses.replace(healthy, delta_prime=0.2, psi_alpha=0.85)
    return ModelParams(kinetics_T=tumor, kinetics_H=healthy, mollifier=mollifier)


# ---------------------------------------------------------------------------
# rates


def _growth(alpha: str, phi_M, psi, p: ModelParams):
    k = p.kinetics(alpha)
    H_a, H_M = p.switch(alpha), p.switch("M")
    return (
        k.gamma(phi_M) * H_a(k.psi_alpha - psi)
        - k.delta
        - k.delta_prime * H_M(k.m_alpha - phi_M)
    )


def growth_rate(alpha: str, state, p: ModelParams):
    """Net duplication/death rate of population ``alpha`` at ``state``."""
    y = as_state_array(state)
    return _scalar_or_array(_growth(alpha, y[..., 2], y.sum(axis=-1), p))


def growth_rate_at(alpha: str, phi_M, psi, p: ModelParams):
    """Growth rate as a function of matrix ratio and total occupied volume."""
    return _scalar_or_array(_growth(alpha, np.asarray(phi_M, float), np.asarray(psi, float), p))


def matrix_rate(state, p: ModelParams):
    """Net matrix production minus enzymatic degradation."""
    y = as_state_array(state)
    phi_M, psi = y[..., 2], y.sum(axis=-1)
    H_M = p.switch("M")(p.psi_M - psi)
    total = 0.0
    for i, alpha in enumerate(POPULATIONS):
        k = p.kinetics(alpha)
        total = total + (k.mu(phi_M) * H_M - k.nu_alpha * phi_M) * y[..., i]
    return _scalar_or_array(total)


def enzyme_concentration(state, p: ModelParams):
    y = as_state_array(state)
    return _scalar_or_array(p.tau * (p.pi_T * y[..., 0] + p.pi_H * y[..., 1]))


# ---------------------------------------------------------------------------
# validation


class Violation(NamedTuple):
    clause: str
    subject: str
    message: str


CLAUSES = {
    "threshold_range": "0 <= psi_alpha, m_alpha <= 1",
    "rate_positive": "delta_alpha, delta'_alpha, nu_alpha > 0",
    "rate_nonnegative": "gamma_alpha, mu_alpha >= 0 on [0, 1]",
    "gamma_origin": "gamma_alpha(0) = 0",
    "gamma_monotone": "gamma_alpha nondecreasing",
    "mu_monotone": "mu_alpha nonincreasing",
    "lipschitz": "declared Lipschitz constant bounds sampled slopes",
    "growth_bounds": "gamma(s) <= Lip(gamma) s and gamma(s) <= gamma(1)",
    "production_bounds": "mu(1) <= mu(s) <= mu(0)",
    "mollifier": "switch width > 0, H in [0, 1], nondecreasing, 0 on (-inf, 0], 1 on [eps, inf)",
    "mollifier_bound": "H(s - beta) <= Lip(H) |s| for beta >= 0",
    "physiological_production": "mu_alpha(psi_alpha) < nu_alpha psi_alpha",
    "enzyme_positive": "tau, pi_alpha, nu > 0",
    "degradation_consistency": "nu_alpha = nu tau pi_alpha",
    "mollifier_shape": "mollifier shape is 'linear' or 'smooth'",
}


def _check_rate(name: str, f: RateFunction, role: str, out: list[Violation], tol=1e-12):
    v = np.asarray(f(_SAMPLES))
    slopes = np.diff(v) / np.diff(_SAMPLES)
    add = lambda clause, msg: out.append(Violation(clause, name, msg))  # noqa: E731
    if np.any(v < -tol):
        add("rate_nonnegative", f"min value {v.min():.6g} < 0")
    if np.max(np.abs(slopes)) > f.lipschitz * (1 + 1e-9) + tol:
        add("lipschitz", f"sampled slope {np.max(np.abs(slopes)):.6g} exceeds declared {f.lipschitz:.6g}")
    if role == "gamma":
        if abs(v[0]) > tol:
            add("gamma_origin", f"gamma(0) = {v[0]:.6g}")
        if np.any(slopes < -tol):
            add("gamma_monotone", "gamma decreases somewhere on [0, 1]")
        if np.any(v > f.lipschitz * _SAMPLES + tol) or np.any(v > v[-1] + tol):
            add("growth_bounds", CLAUSES["growth_bounds"] + " fails on samples")
    else:
        if np.any(slopes > tol):
            add("mu_monotone", "mu increases somewhere on [0, 1]")
        if np.any(v < v[-1] - tol) or np.any(v > v[0] + tol):
            add("production_bounds", CLAUSES["production_bounds"] + " fails on samples")


def _check_mollifier(name: str, H: Mollifier, out: list[Violation]):
    if not H.width > 0:
        out.append(Violation("mollifier", name, f"width {H.width} must be > 0"))
        return
    s = np.linspace(-1.0, 2.0, 3001)
    h = np.asarray(H(s))
    ok = (
        np.all((h >= 0) & (h <= 1))
        and np.all(np.diff(h) >= 0)
        and np.all(h[s <= 0] == 0)
        and np.all(h[s >= H.width] == 1)
    )
    if not ok:
        out.append(Violation("mollifier", name, CLAUSES["mollifier"]))
    betas = np.linspace(0.0, 1.0, 51)[:, None]
    if np.any(np.asarray(H(s[None, :] - betas)) > H.lipschitz * np.abs(s)[None, :] + 1e-12):
        out.append(Violation("mollifier_bound", name, CLAUSES["mollifier_bound"]))


def validate_params(p: ModelParams) -> list[Violation]:
    """Check every structural assumption; returns all violations found (empty if valid)."""
    out: list[Violation] = []
    if p.mollifier not in MOLLIFIER_SHAPES:
        out.append(Violation("mollifier_shape", "mollifier", f"unknown shape {p.mollifier!r}"))
        return out
    if not 0 <= p.psi_M <= 1:
        out.append(Violation("threshold_range", "psi_M", f"psi_M = {p.psi_M} outside [0, 1]"))
    _check_mollifier("eps_M", p.switch("M"), out)
    for name, value in (("tau", p.tau), ("pi_T", p.pi_T), ("pi_H", p.pi_H), ("nu", p.nu)):
        if not value > 0:
            out.append(Violation("enzyme_positive", name, f"{name} = {value} must be > 0"))
    for alpha in POPULATIONS:
        k = p.kinetics(alpha)
        pre = f"kinetics_{alpha}"
        for fname in ("psi_alpha", "m_alpha"):
            value = getattr(k, fname)
            if not 0 <= value <= 1:
                out.append(Violation("threshold_range", f"{pre}.{fname}", f"{value} outside [0, 1]"))
        for fname in ("delta", "delta_prime", "nu_alpha"):
            value = getattr(k, fname)
            if not value > 0:
                out.append(Violation("rate_positive", f"{pre}.{fname}", f"{fname} = {value}; > 0 required"))
        _check_rate(f"{pre}.gamma", k.gamma, "gamma", out)
        _check_rate(f"{pre}.mu", k.mu, "mu", out)
        _check_mollifier(f"{pre}.eps_alpha", p.switch(alpha), out)
        mu_at = float(k.mu(k.psi_alpha))
        if not mu_at < k.nu_alpha * k.psi_alpha:
            out.append(
                Violation(
                    "physiological_production",
                    pre,
                    f"mu(psi_alpha) = {mu_at:.6g} >= nu_alpha psi_alpha = {k.nu_alpha * k.psi_alpha:.6g}",
                )
            )
        expected = p.nu * p.tau * p.pi(alpha)
        if not math.isclose(expected, k.nu_alpha, rel_tol=1e-9, abs_tol=1e-15):
            out.append(
                Violation(
                    "degradation_consistency",
                    f"{pre}.nu_alpha",
                    f"nu_alpha = {k.nu_alpha} but nu tau pi = {expected}",
                )
            )
    return out


class OrderingReport(NamedTuple):
    holds: bool
    margin: float
    phi_M: float
    psi: float


def check_gamma_ordering(p: ModelParams, grid_n: int = 101) -> OrderingReport:
    """Test ``Gamma_T > Gamma_H`` on a ``grid_n x grid_n`` lattice of (phi_M, psi) in [0, 1]^2."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    g = np.linspace(0.0, 1.0, grid_n)
    phi_M, psi = np.meshgrid(g, g, indexing="ij")
    diff = _growth("T", phi_M, psi, p) - _growth("H", phi_M, psi, p)
    i, j = np.unravel_index(np.argmin(diff), diff.shape)
    margin = float(diff[i, j])
    return OrderingReport(margin > 0, margin, float(g[i]), float(g[j]))
