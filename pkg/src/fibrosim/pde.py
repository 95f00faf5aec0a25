"""One-dimensional spatial model: pressure-driven cell transport over a rigid matrix.

Cells move down gradients of ``p = phi * Sigma(phi)`` (``phi`` the total cell
fraction), each population with speed factor ``(phi_alpha/phi - sigma/|grad p|)^+``;
the matrix does not move. Space is discretised by upwind finite volumes with
zero-flux ends and time by explicit Euler under a diffusive step limit.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .model import ModelParams
from .ode import rhs

CFL_FACTOR = 0.4
STATE_TOL = 1e-9


class CFLError(ValueError):
    pass


class FieldInvariantError(RuntimeError):
    pass


class NoCrossingError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError("n_cells must be >= 8")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass
class FieldState:
    grid: Grid1D
    phi_T: np.ndarray
    phi_H: np.ndarray
    phi_M: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("phi_T", "phi_H", "phi_M"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.n_cells,):
                raise ValueError(f"{name} must have shape ({self.grid.n_cells},)")
            setattr(self, name, arr)

    @classmethod
    def from_array(cls, grid: Grid1D, y: np.ndarray, t: float = 0.0) -> "FieldState":
        return cls(grid, y[:, 0].copy(), y[:, 1].copy(), y[:, 2].copy(), t)

    @classmethod
    def uniform(cls, grid: Grid1D, state: Sequence[float], t: float = 0.0) -> "FieldState":
        y = np.tile(np.asarray(state, dtype=float), (grid.n_cells, 1))
        return cls.from_array(grid, y, t)

    def as_array(self) -> np.ndarray:
        return np.stack([self.phi_T, self.phi_H, self.phi_M], axis=1)

    def field(self, name: str) -> np.ndarray:
        return {"T": self.phi_T, "H": self.phi_H, "M": self.phi_M}[name]

    def mass(self, name: str) -> float:
        return float(self.field(name).sum() * self.grid.dx)

    def check(self, tol: float = STATE_TOL) -> None:
        y = self.as_array()
        if y.min() < -tol or y.sum(axis=1).max() > 1 + tol:
            raise FieldInvariantError(
                f"volume ratios out of range at t={self.t:.6g}: min {y.min():.3g}, max psi {y.sum(axis=1).max():.6g}"
            )

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "phi_T", "phi_H", "phi_M"])
            for row in zip(self.grid.centers, self.phi_T, self.phi_H, self.phi_M):
                w.writerow([f"{v:.17g}" for v in row])
        return path


@dataclass(frozen=True)
class ConstitutiveLaw:
    """Pressure law ``Sigma(phi) = kappa (phi - phi0)^+`` plus motilities and stress thresholds."""

    kappa: float = 1.0
    phi0: float = 0.0
    K_T: float = 1.0
    K_H: float = 1.0
    sigma_T: float = 0.0
    sigma_H: float = 0.0

    def __post_init__(self):
        if self.kappa < 0 or min(self.K_T, self.K_H, self.sigma_T, self.sigma_H) < 0:
            raise ValueError("kappa, motilities and thresholds must be nonnegative")

    def sigma(self, phi):
        return self.kappa * np.maximum(np.asarray(phi, dtype=float) - self.phi0, 0.0)

    def pressure(self, phi):
        """``phi * Sigma(phi)``, the quantity whose gradient drives the cells."""
        phi = np.asarray(phi, dtype=float)
        return phi * self.sigma(phi)

    def dpressure(self, phi):
        phi = np.asarray(phi, dtype=float)
        return self.sigma(phi) + phi * self.kappa * (phi > self.phi0)

    def motility(self, alpha: str) -> float:
        return self.K_T if alpha == "T" else self.K_H

    def threshold(self, alpha: str) -> float:
        return self.sigma_T if alpha == "T" else self.sigma_H


def cell_fluxes(fields: FieldState, law: ConstitutiveLaw, alpha: str) -> np.ndarray:
    """Fluxes of population ``alpha`` at all ``n_cells + 1`` faces (zero at both ends)."""
    phi = fields.phi_T + fields.phi_H
    pr = law.pressure(phi)
    g = (pr[1:] - pr[:-1]) / fields.grid.dx
    right = g > 0
    absg = np.abs(g)
    up_phi = np.where(right, phi[1:], phi[:-1])
    active = (absg >= 1e-14) & (up_phi >= 1e-12)
    F = np.zeros(fields.grid.n_cells + 1)
    F[1:-1] = _population_flux(
        fields.field(alpha), phi, g, right, absg, active, up_phi, law.motility(alpha), law.threshold(alpha)
    )
    return F


def cell_flux(fields: FieldState, law: ConstitutiveLaw, alpha: str, i: int) -> float:
    """Flux at face ``i`` (between cells ``i-1`` and ``i``; faces 0 and n are the walls)."""
    return float(cell_fluxes(fields, law, alpha)[i])


def cfl_limit(fields: FieldState, law: ConstitutiveLaw, eps: float = 1e-12) -> float:
    phi = fields.phi_T + fields.phi_H
    stiffness = max(law.K_T, law.K_H) * float(np.max(law.dpressure(phi)))
    return CFL_FACTOR * fields.grid.dx**2 / (stiffness + eps)


def _population_flux(phi_a, phi, g, right, absg, active, up_phi, K, threshold):
    up_a = np.where(right, phi_a[1:], phi_a[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        speed = up_a / up_phi
        if threshold > 0:
            speed = np.maximum(speed - threshold / absg, 0.0)
    return np.where(active, -K * up_a * speed * g, 0.0)


def _update(y: np.ndarray, dx: float, p: ModelParams, law: ConstitutiveLaw, dt: float) -> np.ndarray:
    """Explicit Euler update of the raw ``(n, 3)`` array."""
    T, H = y[:, 0], y[:, 1]
    phi = T + H
    pr = law.pressure(phi)
    g = (pr[1:] - pr[:-1]) / dx
    # cells move toward lower pressure: upwind is the right cell when g > 0
    right = g > 0
    absg = np.abs(g)
    up_phi = np.where(right, phi[1:], phi[:-1])
    active = (absg >= 1e-14) & (up_phi >= 1e-12)
    new = y + dt * rhs(y, p)
    for i, phi_a, K, thr in ((0, T, law.K_T, law.sigma_T), (1, H, law.K_H, law.sigma_H)):
        F = _population_flux(phi_a, phi, g, right, absg, active, up_phi, K, thr)
        div = np.zeros(len(y))
        div[:-1] += F
        div[1:] -= F
        new[:, i] -= (dt / dx) * div
    return new


def step(fields: FieldState, p: ModelParams, law: ConstitutiveLaw, dt: float) -> FieldState:
    """One explicit Euler step of transport plus reactions."""
    limit = cfl_limit(fields, law)
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"dt={dt:.4g} exceeds the stable limit {limit:.4g}")
    new = _update(fields.as_array(), fields.grid.dx, p, law, dt)
    return FieldState.from_array(fields.grid, new, fields.t + dt)


def simulate(
    initial: FieldState,
    p: ModelParams,
    law: ConstitutiveLaw,
    t_end: float,
    output_every: float,
    callback=None,
) -> list[FieldState]:
    """Advance to ``t_end``, emitting a frame every ``output_every`` time units.

    The step is recomputed from the stable limit before every update and
    shortened to land on output times.
    """
    initial.check()
    frames = [initial]
    out_times = np.arange(1, int(np.floor(t_end / output_every + 1e-9)) + 1) * output_every
    if len(out_times) == 0 or out_times[-1] < t_end - 1e-12:
        out_times = np.append(out_times, t_end)
    grid, dx = initial.grid, initial.grid.dx
    y, t = initial.as_array(), initial.t
    K = max(law.K_T, law.K_H)
    for target in out_times:
        while t < target - 1e-12:
            limit = CFL_FACTOR * dx**2 / (K * float(np.max(law.dpressure(y[:, 0] + y[:, 1]))) + 1e-12)
            dt = min(limit, target - t)
            y = _update(y, dx, p, law, dt)
            t += dt
        fields = FieldState.from_array(grid, y, float(target))
        fields.check()
        frames.append(fields)
        if callback is not None:
            callback(fields)
    return frames


class WaveFit(NamedTuple):
    speed: float
    intercept: float
    r2: float
    times: np.ndarray
    positions: np.ndarray


def front_position(frame: FieldState, field: str, level: float) -> float:
    """Leftmost location where ``field`` crosses ``level``, by linear interpolation between cell centers."""
    v = frame.field(field) - level
    x = frame.grid.centers
    hits = np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) <= 0)
    hits = hits[(v[hits] != 0) | (v[hits + 1] != 0)]
    if len(hits) == 0:
        raise NoCrossingError(f"field {field} does not cross {level} at t={frame.t:.6g}")
    j = hits[0]
    if v[j] == v[j + 1]:
        return float(x[j])
    return float(x[j] + v[j] / (v[j] - v[j + 1]) * (x[j + 1] - x[j]))


def wave_speed(frames: Sequence[FieldState], field: str, level: float) -> WaveFit:
    """Least-squares speed of the ``level`` crossing over the given frames."""
    if len(frames) < 3:
        raise ValueError("need at least 3 frames")
    t = np.array([f.t for f in frames])
    pos = np.array([front_position(f, field, level) for f in frames])
    slope, intercept = np.polyfit(t, pos, 1)
    resid = pos - (slope * t + intercept)
    ss_tot = float(np.sum((pos - pos.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return WaveFit(float(slope), float(intercept), r2, t, pos)


def invasion_initial(
    p: ModelParams,
    grid: Grid1D | None = None,
    seed_fraction: float = 0.05,
    seed_level: float = 0.05,
) -> FieldState:
    """Healthy tissue at its equilibrium with a small tumor seed at the left end."""
    from .equilibria import nontrivial_equilibrium

    grid = Grid1D(0.0, 40.0, 400) if grid is None else grid
    eq = nontrivial_equilibrium("H", p).location
    fields = FieldState.uniform(grid, (0.0, eq.phi_H, eq.phi_M))
    seed = grid.centers < grid.x_min + seed_fraction * (grid.x_max - grid.x_min)
    fields.phi_T[seed] = seed_level
    return fields


def export_frames(frames: Sequence[FieldState], out_dir, params: dict | None = None, law: ConstitutiveLaw | None = None) -> Path:
    """Write one CSV per frame plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for k, f in enumerate(frames):
        name = f"frame_{k:05d}.csv"
        f.to_csv(out / name)
        names.append(name)
    g = frames[0].grid
    manifest = {
        "times": [float(f.t) for f in frames],
        "files": names,
        "grid": {"x_min": g.x_min, "x_max": g.x_max, "n_cells": g.n_cells},
        "law": asdict(law) if law is not None else None,
        "parameters": params or {},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path
