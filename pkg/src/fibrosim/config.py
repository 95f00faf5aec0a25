"""Flat ``key = value`` configuration files, parameter serialization and built-in scenarios.

A configuration file holds any number of scenarios, each opened by a
``[name]`` header::

    # anoikis recovery
    [recovery]
    kind = ode
    initial = 0, 0.3, 0
    t_end = 200
    kinetics_H.delta = 0.1
    kinetics_H.mu.coeffs = 0.5, -0.5

Keys are model parameters (dotted for the per-population kinetics), run
settings (``t_end``, ``dt``, ``alpha`` ...), ``kind``, ``preset``,
``initial`` and ``output_dir``. Files ending in ``.json`` are read as
``{"scenarios": [{...}, ...]}`` with the same keys.
"""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .model import CellKinetics, ModelParams, RateFunction, default_params, validate_params

KINDS = ("ode", "picard", "equilibria", "portrait", "pde", "sweep", "validate")

SETTING_KEYS = {
    "t_end", "dt", "grid_n", "alpha", "window", "tol", "record_every", "t_max",
    "x_min", "x_max", "n_cells", "output_every", "level",
    "law.kappa", "law.phi0", "law.K_T", "law.K_H", "law.sigma_T", "law.sigma_H",
}
_KINETIC_FIELDS = {f.name for f in dataclasses.fields(CellKinetics)}
_TOP_FIELDS = {f.name for f in dataclasses.fields(ModelParams)} - {"kinetics_T", "kinetics_H"}
_SHARED = _KINETIC_FIELDS - {"gamma", "mu"}  # bare names set both populations
_INT = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path else ""
        where += f"{line}: " if line is not None else (": " if path else "")
        super().__init__(f"{where}{message}")
        self.line = line


# ---------------------------------------------------------------------------
# parameter (de)serialization


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(parse_value(t) for t in text.split(","))
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def params_to_dict(p: ModelParams) -> dict:
    """Flat mapping of every parameter, with dotted keys for per-population fields."""
    out = {}
    for alpha in ("T", "H"):
        k = p.kinetics(alpha)
        pre = f"kinetics_{alpha}"
        for name in ("gamma", "mu"):
            f = getattr(k, name)
            out[f"{pre}.{name}.family"] = f.family
            out[f"{pre}.{name}.coeffs"] = tuple(f.coeffs)
        for name in ("delta", "delta_prime", "psi_alpha", "m_alpha", "eps_alpha", "nu_alpha"):
            out[f"{pre}.{name}"] = float(getattr(k, name))
    for name in ("psi_M", "eps_M", "tau", "pi_T", "pi_H", "nu"):
        out[name] = float(getattr(p, name))
    out["mollifier"] = p.mollifier
    return out


def apply_overrides(p: ModelParams, overrides: dict) -> ModelParams:
    """Return ``p`` with flat dotted-key overrides applied (see :func:`params_to_dict`)."""
    top: dict = {}
    kin: dict = {"T": {}, "H": {}}
    rates: dict = {}
    for key, value in overrides.items():
        parts = key.split(".")
        if len(parts) == 1 and key in _TOP_FIELDS:
            top[key] = value if key == "mollifier" else float(value)
        elif len(parts) == 1 and key in _SHARED:
            for alpha in ("T", "H"):
                kin[alpha][key] = float(value)
        elif len(parts) >= 2 and parts[0] in ("kinetics_T", "kinetics_H") and parts[1] in _KINETIC_FIELDS:
            alpha = parts[0][-1]
            if parts[1] in ("gamma", "mu"):
                if len(parts) != 3 or parts[2] not in ("family", "coeffs"):
                    raise KeyError(key)
                rates.setdefault((alpha, parts[1]), {})[parts[2]] = value
            elif len(parts) == 2:
                kin[alpha][parts[1]] = float(value)
            else:
                raise KeyError(key)
        else:
            raise KeyError(key)
    for (alpha, name), spec in rates.items():
        old = getattr(p.kinetics(alpha), name)
        coeffs = spec.get("coeffs", old.coeffs)
        coeffs = coeffs if isinstance(coeffs, tuple) else (coeffs,)
        kin[alpha][name] = RateFunction(spec.get("family", old.family), tuple(float(c) for c in coeffs))
    for alpha in ("T", "H"):
        if kin[alpha]:
            top[f"kinetics_{alpha}"] = dataclasses.replace(p.kinetics(alpha), **kin[alpha])
    return dataclasses.replace(p, **top)


def write_params(p: ModelParams, path) -> Path:
    path = Path(path)
    lines = [f"{k} = {format_value(v)}" for k, v in params_to_dict(p).items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_params(path, base: ModelParams | None = None) -> ModelParams:
    values = {}
    for lineno, key, value in _lines(Path(path)):
        if key is None:
            raise ConfigError("section headers are not allowed in a parameter file", lineno, path)
        values[key] = value
    try:
        return apply_overrides(base or default_params(), values)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad parameter {exc}", None, path) from exc


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    name: str
    kind: str = "ode"
    preset: str | None = None
    overrides: dict = field(default_factory=dict)
    initial: tuple[float, float, float] | None = None
    settings: dict = field(default_factory=dict)
    output_dir: str | None = None

    def params(self) -> ModelParams:
        base = PRESETS[self.preset].params() if self.preset else default_params()
        return apply_overrides(base, self.overrides)

    def setting(self, key: str, default=None):
        if key in self.settings:
            return self.settings[key]
        if self.preset:
            return PRESETS[self.preset].setting(key, default)
        return default

    def initial_state(self):
        if self.initial is not None:
            return self.initial
        return PRESETS[self.preset].initial_state() if self.preset else None

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.preset:
            out["preset"] = self.preset
        if self.initial is not None:
            out["initial"] = tuple(self.initial)
        if self.output_dir:
            out["output_dir"] = self.output_dir
        out.update(self.settings)
        out.update(self.overrides)
        return out


def _lines(path: Path):
    """Yield ``(lineno, key, value)``; section headers come through as ``(lineno, None, name)``."""
    text = path.read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            yield lineno, None, line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"empty key or value in {raw.strip()!r}", lineno, path)
        yield lineno, key, parse_value(value)


_NUMERIC_KEYS = (
    {"initial"} | SETTING_KEYS | _SHARED | (_TOP_FIELDS - {"mollifier"})
    | {f"kinetics_{a}.{f}" for a in "TH" for f in _SHARED}
) - {"alpha"}
_PARAM_KEYS = set(params_to_dict(default_params())) | _SHARED


def _assign(s: Scenario, key: str, value, lineno=None, path=None):
    if (key in _NUMERIC_KEYS or key.endswith(".coeffs")) and not _is_number_like(value):
        raise ConfigError(f"{key} expects a number, got {value!r}", lineno, path)
    if key == "kind":
        if value not in KINDS:
            raise ConfigError(f"unknown kind {value!r}", lineno, path)
        s.kind = value
    elif key == "preset":
        if value not in PRESETS:
            raise ConfigError(f"unknown preset {value!r}", lineno, path)
        s.preset = value
    elif key == "initial":
        if not (isinstance(value, tuple) and len(value) == 3):
            raise ConfigError("initial needs three comma-separated values", lineno, path)
        s.initial = tuple(float(v) for v in value)
    elif key == "output_dir":
        s.output_dir = str(value)
    elif key in SETTING_KEYS:
        s.settings[key] = value
    elif key in _PARAM_KEYS:
        s.overrides[key] = value
    else:
        raise ConfigError(f"unknown key {key!r}", lineno, path)


def _is_number_like(value) -> bool:
    if isinstance(value, tuple):
        return all(_is_number_like(v) for v in value)
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _finish(s: Scenario, path=None) -> Scenario:
    try:
        p = s.params()
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"scenario {s.name!r}: bad parameter {exc}", None, path) from exc
    if s.kind != "validate":
        bad = validate_params(p)
        if bad:
            msg = "; ".join(f"{v.clause} ({v.subject}): {v.message}" for v in bad)
            raise ConfigError(f"scenario {s.name!r} violates model assumptions: {msg}", None, path)
    return s


def parse_config(path) -> list[Scenario]:
    """Read scenarios from a key-value or JSON file; each is validated against the model assumptions."""
    path = Path(path)
    if path.suffix == ".json":
        return _parse_json(path)
    scenarios: list[Scenario] = []
    current: Scenario | None = None
    for lineno, key, value in _lines(path):
        if key is None:
            if any(s.name == value for s in scenarios):
                raise ConfigError(f"duplicate scenario name {value!r}", lineno, path)
            current = Scenario(name=value)
            scenarios.append(current)
            continue
        if current is None:
            current = Scenario(name=path.stem)
            scenarios.append(current)
        _assign(current, key, value, lineno, path)
    return [_finish(s, path) for s in scenarios]


def _parse_json(path: Path) -> list[Scenario]:
    data = json.loads(path.read_text(encoding="utf-8"))
    entries = data.get("scenarios", []) if isinstance(data, dict) else data
    scenarios = []
    for entry in entries:
        entry = dict(entry)
        name = entry.pop("name", None) or f"scenario{len(scenarios)}"
        if any(s.name == name for s in scenarios):
            raise ConfigError(f"duplicate scenario name {name!r}", None, path)
        s = Scenario(name=name)
        for key, value in entry.items():
            if isinstance(value, list):
                value = tuple(value)
            _assign(s, key, value, None, path)
        scenarios.append(_finish(s, path))
    return scenarios


def write_config(scenarios, path) -> Path:
    path = Path(path)
    chunks = []
    for s in scenarios:
        lines = [f"[{s.name}]"] + [f"{k} = {format_value(v)}" for k, v in s.to_dict().items()]
        chunks.append("\n".join(lines))
    path.write_text("\n\n".join(chunks) + ("\n" if chunks else ""), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# built-in presets


class _Preset:
    def __init__(self, name, kind, params, initial=None, **settings):
        self.name, self.kind = name, kind
        self._params, self._initial, self._settings = params, initial, settings

    def params(self) -> ModelParams:
        return self._params()

    def initial_state(self):
        return self._initial() if callable(self._initial) else self._initial

    def setting(self, key, default=None):
        return self._settings.get(key, default)


def _healthy_plus_tumor():
    from .equilibria import nontrivial_equilibrium

    eq = nontrivial_equilibrium("H", default_params()).location
    return (0.01, eq.phi_H, eq.phi_M)


def _excess_production():
    p = default_params()
    return apply_overrides(p, {"kinetics_T.mu.coeffs": (0.8, -0.8)})


def _weak_degradation():
    p = default_params()
    return apply_overrides(p, {"pi_T": 0.5, "kinetics_T.nu_alpha": 0.75})


PRESETS = {
    "P0": _Preset("P0", "equilibria", default_params),
    "physiological": _Preset("physiological", "ode", default_params, (0.0, 0.3, 0.0), t_end=200.0, dt=0.01),
    "fibrotic": _Preset("fibrotic", "ode", default_params, _healthy_plus_tumor, t_end=500.0, dt=0.01),
    "invasion": _Preset(
        "invasion", "pde", default_params, None,
        x_min=0.0, x_max=40.0, n_cells=400, t_end=400.0, output_every=10.0, level=0.28,
    ),
    "excess-production": _Preset("excess-production", "ode", _excess_production, _healthy_plus_tumor,
                                 t_end=500.0, dt=0.01),
    "weak-degradation": _Preset("weak-degradation", "ode", _weak_degradation, _healthy_plus_tumor,
                                t_end=500.0, dt=0.01),
}


def preset_scenario(name: str, kind: str | None = None) -> Scenario:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return Scenario(name=name, kind=kind or PRESETS[name].kind, preset=name)
