"""Single-population phase portraits: anoikis and crowding basins of extinction.

With only one cell population present the dynamics live in the
``(phi_M, phi_alpha)`` plane. Cells die out either when matrix is too scarce
(lower-left corner) or too dense (lower-right corner); the curves bounding
these regions are phase curves through the two zeros of
``Gamma_alpha(phi_M)`` on the cell-free axis.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .equilibria import NonexistenceError, NoRootError, _bisect, nontrivial_equilibrium
from .model import ModelParams, _growth, as_state_array
from .ode import rhs, rk4_step

EXTINCTION = "extinction"
NONTRIVIAL = "nontrivial"
UNDECIDED = "undecided"

START_OFFSET = 1e-6
SINGULAR_TOL = 1e-4


class AnchorMissingError(ValueError):
    pass


def _index(alpha: str) -> int:
    if alpha not in ("T", "H"):
        raise ValueError(f"population must be 'T' or 'H', got {alpha!r}")
    return 0 if alpha == "T" else 1


def embed(phi_M, phi_alpha, alpha: str) -> np.ndarray:
    """Full states ``(..., 3)`` with only population ``alpha`` present."""
    phi_M, phi_alpha = np.broadcast_arrays(np.asarray(phi_M, float), np.asarray(phi_alpha, float))
    out = np.zeros(phi_M.shape + (3,))
    out[..., _index(alpha)] = phi_alpha
    out[..., 2] = phi_M
    return out


def axis_rate(alpha: str, phi_M, p: ModelParams):
    """``Gamma_alpha`` on the cell-free axis, where ``psi = phi_M``."""
    phi_M = np.asarray(phi_M, dtype=float)
    return _growth(alpha, phi_M, phi_M, p)


class GammaRoots(NamedTuple):
    lower: float | None  # up-crossing: Gamma' > 0
    upper: float | None  # down-crossing: Gamma' < 0
    lower_slope: float | None
    upper_slope: float | None


def gamma_roots(alpha: str, p: ModelParams, scan: int = 10_000) -> GammaRoots:
    """Smaller (rising) and larger (falling) zero of ``Gamma_alpha`` on the cell-free axis.

    Either entry is ``None`` when the corresponding extinction basin does not
    exist in [0, 1].
    """
    xs = np.linspace(0.0, 1.0, scan + 1)
    v = axis_rate(alpha, xs, p)
    f = lambda s: float(axis_rate(alpha, s, p))  # noqa: E731
    ups, downs = [], []
    for i in range(scan):
        if v[i] < 0 <= v[i + 1] or v[i] <= 0 < v[i + 1]:
            ups.append(_bisect(f, xs[i], xs[i + 1]) if v[i + 1] != 0 else xs[i + 1])
        elif v[i] > 0 >= v[i + 1] or v[i] >= 0 > v[i + 1]:
            downs.append(_bisect(f, xs[i], xs[i + 1]) if v[i + 1] != 0 else xs[i + 1])
    lower = float(ups[0]) if ups else None
    upper = float(downs[-1]) if downs else None
    if lower is not None and upper is not None and upper < lower:
        upper = None
    h = 1e-7
    slope = lambda s: (f(min(s + h, 1.0)) - f(max(s - h, 0.0))) / (min(s + h, 1.0) - max(s - h, 0.0))  # noqa: E731
    return GammaRoots(
        lower,
        upper,
        None if lower is None else slope(lower),
        None if upper is None else slope(upper),
    )


# ---------------------------------------------------------------------------
# separatrices


@dataclass
class BasinBoundary:
    alpha: str
    anchor: str  # "lower" (anoikis corner) or "upper" (crowding corner)
    curve: np.ndarray  # (n, 2): columns phi_M, phi_alpha
    termination: str  # ceiling | singularity | left box
    direction: int

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phi_M", "phi_alpha"])
            for m, a in self.curve:
                w.writerow([f"{m:.17g}", f"{a:.17g}"])
        return path


def _slope(alpha: str, phi_M: float, phi_a: float, p: ModelParams) -> tuple[float, float]:
    """Numerator and denominator of ``d phi_alpha / d phi_M`` along single-population orbits."""
    k = p.kinetics(alpha)
    psi = phi_M + phi_a
    num = float(_growth(alpha, phi_M, psi, p))
    den = float(k.mu(phi_M) * p.switch("M")(p.psi_M - psi) - k.nu_alpha * phi_M)
    return num, den


def basin_boundary(
    alpha: str,
    anchor: str,
    p: ModelParams,
    step: float = 1e-3,
    direction: int | str = "auto",
    max_steps: int = 100_000,
) -> BasinBoundary:
    """Integrate the orbit equation ``d phi_alpha/d phi_M = Gamma_alpha / (mu_alpha H_M - nu_alpha phi_M)``
    by RK4 in ``phi_M``, starting at ``(root, 0)``.

    With ``direction="auto"`` the curve runs away from the matrix fixed point
    ``M_alpha``: to decreasing ``phi_M`` from the lower root and increasing
    ``phi_M`` from the upper root. These are the orbits that flow into the
    roots, i.e. the basin boundaries. Pass ``+1`` or ``-1`` to force a direction.
    """
    roots = gamma_roots(alpha, p)
    root = roots.lower if anchor == "lower" else roots.upper if anchor == "upper" else None
    if anchor not in ("lower", "upper"):
        raise ValueError("anchor must be 'lower' or 'upper'")
    if root is None:
        raise AnchorMissingError(f"no {anchor} root of Gamma_{alpha} in [0, 1]")
    if direction == "auto":
        direction = -1 if anchor == "lower" else 1
    direction = int(np.sign(direction))

    def f(m, a):
        num, den = _slope(alpha, m, a, p)
        return num / den

    m = root
    a = 0.0
    pts = [(m, a)]
    if abs(_slope(alpha, m, a, p)[1]) < SINGULAR_TOL:
        return BasinBoundary(alpha, anchor, np.array(pts), "singularity", direction)
    m = root + direction * START_OFFSET
    pts.append((m, a))
    reason = "max steps"
    for _ in range(max_steps):
        if abs(_slope(alpha, m, a, p)[1]) < SINGULAR_TOL:
            reason = "singularity"
            break
        h = direction * step
        target = m + h
        if target < 0 or target > 1:
            h = (0.0 if target < 0 else 1.0) - m
        if h == 0:
            reason = "left box"
            break
        k1 = f(m, a)
        k2 = f(m + h / 2, a + h / 2 * k1)
        k3 = f(m + h / 2, a + h / 2 * k2)
        k4 = f(m + h, a + h * k3)
        a_new = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        m_new = m + h
        if not 0 <= a_new <= 1:
            reason = "left box"
            break
        if a_new + m_new >= 1:
            reason = "ceiling"
            break
        m, a = m_new, a_new
        pts.append((m, a))
        if m in (0.0, 1.0):
            reason = "left box"
            break
    return BasinBoundary(alpha, anchor, np.array(pts), reason, direction)


# ---------------------------------------------------------------------------
# forward classification


def _target(alpha: str, p: ModelParams):
    try:
        return nontrivial_equilibrium(alpha, p).location.as_array()
    except (NonexistenceError, NoRootError, ZeroDivisionError):
        return None


def classify_states(
    states,
    alpha: str,
    p: ModelParams,
    t_max: float = 500.0,
    dt: float = 0.05,
    rhs_tol: float = 1e-8,
    extinct_tol: float = 1e-6,
    eq_tol: float = 1e-4,
    check_every: int = 20,
) -> np.ndarray:
    """Forward-integrate a batch of single-population states and tag each attractor."""
    y = np.array(as_state_array(states), dtype=float, ndmin=2)
    i = _index(alpha)
    target = _target(alpha, p)
    tags = np.full(len(y), UNDECIDED, dtype=object)
    active = np.ones(len(y), dtype=bool)
    t = 0.0

    def decide(final: bool):
        sub = y[active]
        phi_a = sub[:, i]
        rate = np.abs(rhs(sub, p)).sum(axis=-1)
        dying = _growth(alpha, sub[:, 2], sub.sum(axis=-1), p) < 0
        extinct = (phi_a == 0) | ((phi_a < extinct_tol) & (dying | final | (rate < rhs_tol)))
        near = np.zeros_like(extinct)
        if target is not None:
            near = np.abs(sub - target).max(axis=-1) < eq_tol
        settled = near & ((rate < rhs_tol) | final)
        idx = np.flatnonzero(active)
        tags[idx[extinct]] = EXTINCTION
        tags[idx[settled & ~extinct]] = NONTRIVIAL
        active[idx[extinct | settled | (rate < rhs_tol)]] = False

    decide(False)
    while active.any() and t < t_max - 1e-12:
        for _ in range(check_every):
            h = min(dt, t_max - t)
            if h <= 0:
                break
            y[active] = np.clip(rk4_step(y[active], p, h), 0.0, None)
            t += h
        decide(t >= t_max - 1e-12)
    return tags


def classify_initial(state, p: ModelParams, t_max: float = 500.0, dt: float = 0.05) -> str:
    """Attractor of a single-population initial state: extinction, nontrivial or undecided."""
    y = as_state_array(state)
    if y[0] > 0 and y[1] > 0:
        raise ValueError("exactly one of phi_T, phi_H may be nonzero")
    alpha = "T" if y[0] > 0 else "H"
    return str(classify_states(y, alpha, p, t_max=t_max, dt=dt)[0])


@dataclass
class BasinMap:
    alpha: str
    phi_M: np.ndarray
    phi_alpha: np.ndarray
    tags: np.ndarray

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phi_M", "phi_alpha", "tag"])
            for m, a, tag in zip(self.phi_M, self.phi_alpha, self.tags):
                w.writerow([f"{m:.17g}", f"{a:.17g}", tag])
        return path


def sweep_grid(alpha: str, p: ModelParams, n: int, t_max: float = 500.0, dt: float = 0.05) -> BasinMap:
    """Classify the ``n x n`` lattice of ``(phi_M, phi_alpha)`` in [0, 1]^2 with ``phi_M + phi_alpha <= 1``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    g = np.linspace(0.0, 1.0, n)
    M, A = np.meshgrid(g, g, indexing="ij")
    keep = M + A <= 1 + 1e-12
    M, A = M[keep], A[keep]
    tags = classify_states(embed(M, A, alpha), alpha, p, t_max=t_max, dt=dt)
    return BasinMap(alpha, M, A, tags)


class SeparatrixResult(NamedTuple):
    fraction: float
    pairs: int
    split: int


def separatrix_test(
    boundary: BasinBoundary,
    p: ModelParams,
    n_pairs: int = 100,
    distance: float = 0.02,
    t_max: float = 500.0,
    rng: np.random.Generator | None = None,
) -> SeparatrixResult:
    """Fraction of point pairs straddling ``boundary`` (offset by ``distance``
    along the normal) whose two points reach different attractors."""
    rng = np.random.default_rng(0) if rng is None else rng
    c = boundary.curve
    seg = np.diff(c, axis=0)
    length = np.hypot(seg[:, 0], seg[:, 1])
    normal = np.stack([-seg[:, 1], seg[:, 0]], axis=1) / np.where(length > 0, length, 1)[:, None]
    mid = 0.5 * (c[1:] + c[:-1])
    above, below = mid + distance * normal, mid - distance * normal
    # orient so that "above" has the larger phi_alpha
    flip = above[:, 1] < below[:, 1]
    above[flip], below[flip] = below[flip].copy(), above[flip].copy()

    def admissible(q):
        return (q[:, 0] >= 0) & (q[:, 1] >= 0) & (q.sum(axis=1) <= 1)

    ok = np.flatnonzero(admissible(above) & admissible(below) & (length > 0))
    if len(ok) == 0:
        return SeparatrixResult(float("nan"), 0, 0)
    pick = rng.choice(ok, size=n_pairs, replace=len(ok) < n_pairs)
    pts = np.concatenate([above[pick], below[pick]])
    tags = classify_states(embed(pts[:, 0], pts[:, 1], boundary.alpha), boundary.alpha, p, t_max=t_max)
    split = int(np.sum(tags[:n_pairs] != tags[n_pairs:]))
    return SeparatrixResult(split / n_pairs, n_pairs, split)
