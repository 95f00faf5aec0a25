"""Integrators for the spatially homogeneous system.

Two independent routes are provided:

* :func:`integrate_rk` -- fixed-step classical Runge-Kutta (production path);
* :func:`integrate_picard` -- fixed-point iteration of the mild formulation on
  the augmented state (cells, matrix, free space), restarted window by window.
  It serves as an oracle for the first route.

Both accept a single initial state or a batch of shape ``(n, 3)``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .model import (
    POPULATIONS,
    ModelParams,
    VolumeState,
    _growth,
    as_state_array,
)

logger = logging.getLogger(__name__)

CLAMP_TOL = 1e-12
INSTABILITY_TOL = 1e-6


class InstabilityError(RuntimeError):
    """A component left [-1e-6, 1 + 1e-6]; the step size is too large."""


class NonContractionError(ValueError):
    """The Picard window is too long for the fixed-point map to contract."""


class ConvergenceError(RuntimeError):
    pass


def rhs(state, p: ModelParams) -> np.ndarray:
    """Time derivative ``(Gamma_T phi_T, Gamma_H phi_H, Gamma_M)``."""
    y = as_state_array(state)
    phi_M = y[..., 2]
    psi = y.sum(axis=-1)
    H_M = p.switch("M")(p.psi_M - psi)
    out = np.empty(np.broadcast_shapes(y.shape), dtype=float)
    dM = 0.0
    for i, alpha in enumerate(POPULATIONS):
        k = p.kinetics(alpha)
        out[..., i] = _growth(alpha, phi_M, psi, p) * y[..., i]
        dM = dM + (k.mu(phi_M) * H_M - k.nu_alpha * phi_M) * y[..., i]
    out[..., 2] = dM
    return out


def augmented_rhs(Phi, p: ModelParams) -> np.ndarray:
    """Right-hand side on ``(phi_T, phi_H, phi_M, free)``; the last component balances the others."""
    Phi = np.asarray(Phi, dtype=float)
    out = np.empty_like(Phi)
    out[..., :3] = rhs(Phi[..., :3], p)
    out[..., 3] = -out[..., :3].sum(axis=-1)
    return out


@dataclass
class Trajectory:
    """Time-indexed states; ``states`` has shape ``(len(times), 3)`` or ``(len(times), n, 3)``."""

    times: np.ndarray
    states: np.ndarray
    method: str
    dt: float
    lam: float | None = None
    iterations: list[int] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def psi(self) -> np.ndarray:
        return self.states.sum(axis=-1)

    @property
    def final(self):
        last = self.states[-1]
        return VolumeState.from_array(last) if last.ndim == 1 else last

    def state(self, i: int) -> VolumeState:
        return VolumeState.from_array(self.states[i])

    def to_csv(self, path) -> Path:
        if self.states.ndim != 2:
            raise ValueError("only single trajectories can be exported")
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "phi_T", "phi_H", "phi_M", "psi"])
            for t, s in zip(self.times, self.states):
                w.writerow([f"{x:.17g}" for x in (t, s[0], s[1], s[2], s.sum())])
        return path

    @classmethod
    def from_csv(cls, path, method: str = "csv") -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.0
        return cls(times=data[:, 0], states=data[:, 1:4], method=method, dt=dt)


def _enforce_bounds(y: np.ndarray, t: float) -> np.ndarray:
    low = y.min()
    if low < -INSTABILITY_TOL or y.max() > 1 + INSTABILITY_TOL or y.sum(axis=-1).max() > 1 + INSTABILITY_TOL:
        raise InstabilityError(
            f"state left the admissible set at t={t:.6g} (min {low:.3g}, "
            f"max psi {y.sum(axis=-1).max():.6g}); reduce dt"
        )
    if low < 0:
        tiny = (y < 0) & (y >= -CLAMP_TOL)
        if tiny.any():
            logger.debug("clamping %d roundoff undershoots at t=%g", int(tiny.sum()), t)
            y = np.where(tiny, 0.0, y)
        if y.min() < 0:
            logger.warning("negative component %.3g at t=%g kept (above instability threshold)", y.min(), t)
    return y


def rk4_step(y: np.ndarray, p: ModelParams, h: float) -> np.ndarray:
    k1 = rhs(y, p)
    k2 = rhs(y + 0.5 * h * k1, p)
    k3 = rhs(y + 0.5 * h * k2, p)
    k4 = rhs(y + h * k3, p)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_times(t_end: float, dt: float) -> np.ndarray:
    n = max(1, math.ceil(t_end / dt - 1e-9))
    times = np.arange(n + 1) * dt
    times[-1] = t_end
    return times


def integrate_rk(initial, p: ModelParams, t_end: float, dt: float, record_every: int = 1) -> Trajectory:
    """Fixed-step RK4 from ``initial`` over ``[0, t_end]``.

    Roundoff undershoots down to -1e-12 are clamped to zero; anything beyond
    the 1e-6 band raises :class:`InstabilityError`.
    """
    if not (dt > 0 and t_end > 0):
        raise ValueError("dt and t_end must be positive")
    y = as_state_array(initial).copy()
    _enforce_bounds(y, 0.0)
    times = _step_times(t_end, dt)
    keep = [0]
    out = [y.copy()]
    for k in range(1, len(times)):
        y = _enforce_bounds(rk4_step(y, p, times[k] - times[k - 1]), times[k])
        if k % record_every == 0 or k == len(times) - 1:
            keep.append(k)
            out.append(y.copy())
    return Trajectory(times=times[keep], states=np.array(out), method="rk4", dt=dt)


# ---------------------------------------------------------------------------
# Picard fixed-point oracle


class PicardConstants(NamedTuple):
    lipschitz: float  # C: l1 Lipschitz constant of the shifted operator
    lam_bound: float  # lambda must exceed this for positivity of the map
    lam: float


def lipschitz_constant(p: ModelParams) -> float:
    """Computable over-estimate of the l1 Lipschitz constant of the rate map on the simplex.

    Per component, for states in the unit simplex::

        C_a = gamma_a(1) + delta_a + delta'_a + Lip(gamma_a)
              + gamma_a(1) Lip(H_a) + delta'_a Lip(H_M)              a = T, H
        C_M = sum_a (2 mu_a(0) + 2 nu_a + Lip(mu_a) + mu_a(0) Lip(H_M))

    The free-space component is minus the sum of the others, so the full
    augmented map has constant ``2 (C_T + C_H + C_M)``.
    """
    lip_M = p.switch("M").lipschitz
    total = 0.0
    for alpha in POPULATIONS:
        k = p.kinetics(alpha)
        g1 = float(k.gamma(1.0))
        mu0 = float(k.mu(0.0))
        total += g1 + k.delta + k.delta_prime + k.gamma.lipschitz
        total += g1 * p.switch(alpha).lipschitz + k.delta_prime * lip_M
        total += 2 * mu0 + 2 * k.nu_alpha + k.mu.lipschitz + mu0 * lip_M
    return 2.0 * total


def lambda_bound(p: ModelParams) -> float:
    """Lower bound on the exponential shift keeping the mild-form map nonnegative."""
    lip_M = p.switch("M").lipschitz
    cells = max(p.kinetics(a).delta + p.kinetics(a).delta_prime for a in POPULATIONS)
    matrix = sum(p.kinetics(a).nu_alpha for a in POPULATIONS)
    free = sum(
        float(p.kinetics(a).gamma(1.0)) * p.switch(a).lipschitz + float(p.kinetics(a).mu(0.0)) * lip_M
        for a in POPULATIONS
    )
    return max(cells, matrix, free)


def picard_constants(p: ModelParams, lam_margin: float = 1.0) -> PicardConstants:
    bound = lambda_bound(p)
    return PicardConstants(lipschitz_constant(p), bound, bound + lam_margin)


def _picard_window(Phi0, p, lam, h, m, tol, max_iter):
    growth = (1 + 0.5 * lam * h) / (1 - 0.5 * lam * h)
    # discrete exponential consistent with trapezoidal quadrature
    E = growth ** np.arange(m + 1)
    E = E.reshape((m + 1,) + (1,) * Phi0.ndim)
    Psi = Phi0[None] * E
    for it in range(1, max_iter + 1):
        F = augmented_rhs(Psi / E, p) * E + lam * Psi
        new = np.empty_like(Psi)
        new[0] = Phi0
        new[1:] = Phi0 + np.cumsum(0.5 * h * (F[1:] + F[:-1]), axis=0)
        change = np.abs(new - Psi).sum(axis=-1).max()
        Psi = new
        if change < tol:
            return Psi / E, it
    raise ConvergenceError(f"Picard iteration did not converge in {max_iter} sweeps (last change {change:.3g})")


def integrate_picard(
    initial,
    p: ModelParams,
    t_end: float,
    window: float | None = None,
    tol: float = 1e-12,
    subintervals: int = 64,
    max_iter: int = 500,
    lam_margin: float = 1.0,
) -> Trajectory:
    """Solve by successive approximation of the mild form on consecutive windows.

    The window defaults to ``0.5 / (C + lambda)``; a requested window with
    ``window * (C + lambda) >= 1`` raises :class:`NonContractionError`.
    """
    const = picard_constants(p, lam_margin)
    rate = const.lipschitz + const.lam
    if window is None:
        window = 0.5 / rate
    if window * rate >= 1:
        raise NonContractionError(
            f"window {window:.4g} gives contraction factor {window * rate:.4g} >= 1; "
            f"use a window below {1 / rate:.4g}"
        )
    y0 = as_state_array(initial)
    Phi = np.concatenate([y0, 1.0 - y0.sum(axis=-1, keepdims=True)], axis=-1)
    if Phi.min() < -INSTABILITY_TOL:
        raise ValueError("initial state is not admissible")

    times, states, iters = [np.array([0.0])], [Phi[None]], []
    t = 0.0
    while t < t_end - 1e-14:
        w = min(window, t_end - t)
        h = w / subintervals
        block, it = _picard_window(Phi, p, const.lam, h, subintervals, tol, max_iter)
        iters.append(it)
        times.append(t + h * np.arange(1, subintervals + 1))
        states.append(block[1:])
        Phi = block[-1]
        t += w
    times = np.concatenate(times)
    times[-1] = t_end
    aug = np.concatenate(states)
    return Trajectory(
        times=times,
        states=aug[..., :3].copy(),
        method="picard",
        dt=window / subintervals,
        lam=const.lam,
        iterations=iters,
        metadata={"augmented": aug, "C": const.lipschitz, "window": window, "lam_bound": const.lam_bound},
    )


# ---------------------------------------------------------------------------
# continuous dependence


class DependenceReport(NamedTuple):
    initial_distance: float
    sup_distance: float
    ratio: float
    bound: float
    passed: bool


def gronwall_bound(p: ModelParams, t: float, lam_margin: float = 1.0) -> float:
    """Explicit bound ``2 [1 + (C + lambda) t exp((C + lambda) t)]`` on the dependence ratio."""
    const = picard_constants(p, lam_margin)
    a = (const.lipschitz + const.lam) * t
    with np.errstate(over="ignore"):
        return float(2.0 * (1.0 + a * np.exp(a)))


def sup_distance(a: Trajectory, b: Trajectory) -> float:
    """``max_t ||a(t) - b(t)||_1`` over common nodes."""
    if len(a) != len(b) or not np.allclose(a.times, b.times):
        raise ValueError("trajectories must share time nodes")
    return float(np.abs(a.states - b.states).sum(axis=-1).max())


def continuous_dependence_check(init_a, init_b, p: ModelParams, t_end: float, dt: float = 1e-3) -> DependenceReport:
    ya, yb = as_state_array(init_a), as_state_array(init_b)
    d0 = float(np.abs(ya - yb).sum())
    traj = integrate_rk(np.stack([ya, yb]), p, t_end, dt)
    d = float(np.abs(traj.states[:, 0] - traj.states[:, 1]).sum(axis=-1).max())
    ratio = d / d0 if d0 > 0 else 0.0
    bound = gronwall_bound(p, t_end)
    return DependenceReport(d0, d, ratio, bound, ratio <= bound)
