"""``fibrosim`` command line: run presets or configured scenarios and write CSV/JSON artifacts."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import equilibria as eqm
from . import ode, pde, portrait
from .config import KINDS, PRESETS, ConfigError, Scenario, params_to_dict, parse_config, parse_value, preset_scenario
from .model import validate_params

log = logging.getLogger("fibrosim")


@dataclass
class RunResult:
    name: str
    status: int
    summary: str
    paths: list[Path] = field(default_factory=list)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _state_str(y) -> str:
    return f"phi_T = {_fmt(y[0])}, phi_H = {_fmt(y[1])}, phi_M = {_fmt(y[2])}"


def _alphas(s: Scenario) -> list[str]:
    alpha = s.setting("alpha")
    return ["T", "H"] if alpha in (None, "both") else [str(alpha)]


def _require_initial(s: Scenario):
    y = s.initial_state()
    if y is None:
        raise ConfigError(f"scenario {s.name!r} needs an initial state")
    return np.asarray(y, dtype=float)


def _run_ode(s, p, out):
    traj = ode.integrate_rk(_require_initial(s), p, float(s.setting("t_end", 100.0)), float(s.setting("dt", 1e-2)),
                            int(s.setting("record_every", 1)))
    path = traj.to_csv(out / "trajectory.csv")
    return f"t = {_fmt(traj.times[-1])}: {_state_str(traj.states[-1])}", [path]


def _run_picard(s, p, out):
    window = s.setting("window")
    traj = ode.integrate_picard(_require_initial(s), p, float(s.setting("t_end", 1.0)),
                                window=None if window is None else float(window), tol=float(s.setting("tol", 1e-12)))
    path = traj.to_csv(out / "trajectory.csv")
    return f"t = {_fmt(traj.times[-1])}: {_state_str(traj.states[-1])}", [path]


def _run_equilibria(s, p, out):
    reports, lines = [], []
    for alpha in _alphas(s):
        try:
            r = eqm.nontrivial_equilibrium(alpha, p)
        except (eqm.NonexistenceError, eqm.NoRootError) as exc:
            lines.append(f"equilibrium {alpha}: none ({exc})")
            continue
        loc = r.location
        phi_a = loc.phi_T if alpha == "T" else loc.phi_H
        lines.append(f"equilibrium {alpha} ({r.kind}): phi_M = {loc.phi_M:.10g}, phi_{alpha} = {phi_a:.10g}")
        lines.append(f"  verdict: {r.verdict}; restricted verdict: {r.restricted_verdict}")
        reports.append(r.to_dict())
    scan = eqm.mixed_equilibrium_scan(p, grid_n=int(s.setting("grid_n", 50)))
    lines.append(f"mixed equilibria: {'none found' if scan.passed else 'possible'} "
                 f"(min max rate {scan.min_max_rate:.3g})")
    path = out / "equilibria.json"
    payload = {"equilibria": reports, "mixed_scan": {"min_max_rate": scan.min_max_rate, "location": scan.location,
                                                     "passed": scan.passed}}
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return "\n".join(lines), [path]


def _run_portrait(s, p, out):
    paths, lines = [], []
    for alpha in _alphas(s):
        roots = portrait.gamma_roots(alpha, p)
        lines.append(f"Gamma_{alpha} roots on the cell-free axis: lower = {roots.lower}, upper = {roots.upper}")
        for anchor in ("lower", "upper"):
            try:
                b = portrait.basin_boundary(alpha, anchor, p)
            except portrait.AnchorMissingError:
                continue
            paths.append(b.to_csv(out / f"boundary_{alpha}_{anchor}.csv"))
    return "\n".join(lines), paths


def _run_sweep(s, p, out):
    paths, lines = [], []
    n = int(s.setting("grid_n", 50))
    for alpha in _alphas(s):
        m = portrait.sweep_grid(alpha, p, n, t_max=float(s.setting("t_max", 500.0)))
        paths.append(m.to_csv(out / f"basin_map_{alpha}.csv"))
        counts = {tag: int(np.sum(m.tags == tag)) for tag in (portrait.EXTINCTION, portrait.NONTRIVIAL,
                                                              portrait.UNDECIDED)}
        lines.append(f"sweep {alpha} ({n}x{n}): " + ", ".join(f"{k} {v}" for k, v in counts.items()))
    return "\n".join(lines), paths


def _law(s) -> pde.ConstitutiveLaw:
    kw = {k[4:]: float(v) for k, v in s.settings.items() if k.startswith("law.")}
    return pde.ConstitutiveLaw(**kw)


def _run_pde(s, p, out):
    grid = pde.Grid1D(float(s.setting("x_min", 0.0)), float(s.setting("x_max", 40.0)), int(s.setting("n_cells", 400)))
    law = _law(s)
    y0 = s.initial_state()
    initial = pde.invasion_initial(p, grid) if y0 is None else pde.FieldState.uniform(grid, y0)
    frames = pde.simulate(initial, p, law, float(s.setting("t_end", 400.0)), float(s.setting("output_every", 10.0)))
    manifest = pde.export_frames(frames, out / "frames", params_to_dict(p), law)
    summary = f"t = {_fmt(frames[-1].t)}: {len(frames)} frames"
    try:
        fit = pde.wave_speed(frames[len(frames) // 2:], "T", float(s.setting("level", 0.28)))
        summary += f", front speed {fit.speed:.6g} (R^2 {fit.r2:.6f})"
    except (pde.NoCrossingError, ValueError):
        summary += ", no tracked front"
    return summary, [manifest]


def _run_validate(s, p, out):
    bad = validate_params(p)
    if not bad:
        return "parameters satisfy all model assumptions", []
    lines = [f"{v.clause} ({v.subject}): {v.message}" for v in bad]
    raise ConfigError("; ".join(lines))


_RUNNERS = {
    "ode": _run_ode,
    "picard": _run_picard,
    "equilibria": _run_equilibria,
    "portrait": _run_portrait,
    "sweep": _run_sweep,
    "pde": _run_pde,
    "validate": _run_validate,
}


def default_out() -> Path:
    return Path(os.environ.get("FIBROSIM_OUT", "fibrosim_out"))


def run_scenario(s: Scenario, out_root=None) -> RunResult:
    """Run one scenario, write its artifacts under ``out_root/<name>`` and return its summary.

    Module errors are caught and reported as a nonzero status with the
    scenario name attached.
    """
    out = Path(s.output_dir) if s.output_dir else Path(out_root or default_out()) / s.name
    try:
        p = s.params()
        if s.kind != "validate":
            out.mkdir(parents=True, exist_ok=True)
        summary, paths = _RUNNERS[s.kind](s, p, out)
        return RunResult(s.name, 0, summary, paths)
    except (ValueError, RuntimeError, ZeroDivisionError, KeyError) as exc:
        return RunResult(s.name, 1, f"error in scenario {s.name!r} ({s.kind}): {exc}")


def _apply_flags(s: Scenario, args) -> Scenario:
    settings = dict(s.settings)
    for flag, key in (("t_end", "t_end"), ("dt", "dt"), ("grid_n", "grid_n"), ("alpha", "alpha")):
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    overrides = dict(s.overrides)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = parse_value(value)
    return replace(s, settings=settings, overrides=overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fibrosim", description="Tumor, healthy cell and matrix mixture simulations.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(KINDS) + "}")
    sub.required = True
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run {kind} scenarios")
        sp.add_argument("--config", type=Path, help="key-value or JSON scenario file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
        sp.add_argument("--out", type=Path, help="output directory (default $FIBROSIM_OUT or ./fibrosim_out)")
        sp.add_argument("--t-end", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--grid-n", type=int)
        sp.add_argument("--alpha", choices=["T", "H", "both"])
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="parameter override (repeatable)")
        sp.add_argument("--parallel", action="store_true", help="run scenarios in separate processes")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def _scenarios(args) -> list[Scenario]:
    if args.config:
        scenarios = [s for s in parse_config(args.config) if s.kind == args.command]
        if not scenarios:
            raise ConfigError(f"{args.config} has no scenarios of kind {args.command!r}")
        if args.preset:
            scenarios = [replace(s, preset=s.preset or args.preset) for s in scenarios]
    else:
        scenarios = [preset_scenario(args.preset or "P0", args.command)]
    return [_apply_flags(s, args) for s in scenarios]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scenarios = _scenarios(args)
    except (ConfigError, OSError) as exc:
        print(f"fibrosim: {exc}", file=sys.stderr)
        return 1
    out_root = args.out or default_out()
    if args.parallel and len(scenarios) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(run_scenario, scenarios, [out_root] * len(scenarios)))
    else:
        results = [run_scenario(s, out_root) for s in scenarios]
    status = 0
    for r in results:
        stream = sys.stdout if r.status == 0 else sys.stderr
        print(r.summary if len(results) == 1 else f"[{r.name}] {r.summary}", file=stream)
        status = max(status, r.status)
    return status


if __name__ == "__main__":
    sys.exit(main())
