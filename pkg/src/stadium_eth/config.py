"""Run configuration: TOML or JSON input, validation, presets and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["ConfigError", "DEFAULTS", "PRESETS", "RunConfig", "load_config", "config_hash"]


class ConfigError(ValueError):
    pass


# None means "derive at run time"; the derived value is recorded in reports.
DEFAULTS = {
    "seed": 12345,
    "output": "runs/desk",
    "geometry": {"l": 2.0, "h": 1.0, "scale": 1.0},
    "physics": {"hbar": 1.0, "m": 1.0},
    "solver": {
        "enabled": True,
        "k_min": 40.0,
        "k_max": 60.0,
        "half_width": 0.05,
        "margin": 10,
        "stride": 1,
        "residual_max": 1e-3,
        "singular_cutoff": 1e-8,
        "degeneracy_guard": 1e-6,
    },
    "semiclassics": {
        "Q": None,
        "domain_mode": "factorized",
        "abs_tol": 1e-10,
        "rel_tol": 1e-8,
        "e_min": None,
        "e_max": None,
        "e_center": None,
        "sweep_points": 201,
        "sweep_bandwidths": 5.0,
        "grid_points": 21,
    },
    "analysis": {
        "de_bin": None,
        "ebar_bin": None,
        "diag_bins": 4,
        "points_per_wavelength": 10.0,
        "n_boot": 1000,
        "n_ave": [1, 4, 16, 32],
        "berry_de_bin": None,
        "berry_separation_bins": 40,
        "min_bin_pairs": 20,
    },
}

PRESETS = {
    "desk": {},
    "paper-regime": {
        "output": "runs/paper-regime",
        "physics": {"hbar": 0.01},
        "solver": {"enabled": False},
        "semiclassics": {"e_min": 3.5610, "e_max": 5.7469, "e_center": 4.654},
    },
}

_TYPES = {
    "seed": int, "output": str,
    "geometry": {"l": float, "h": float, "scale": float},
    "physics": {"hbar": float, "m": float},
    "solver": {"enabled": bool, "k_min": float, "k_max": float, "half_width": float,
               "margin": int, "stride": int, "residual_max": float,
               "singular_cutoff": float, "degeneracy_guard": float},
    "semiclassics": {"Q": float, "domain_mode": str, "abs_tol": float, "rel_tol": float,
                     "e_min": float, "e_max": float, "e_center": float,
                     "sweep_points": int, "sweep_bandwidths": float, "grid_points": int},
    "analysis": {"de_bin": float, "ebar_bin": float, "diag_bins": int,
                 "points_per_wavelength": float, "n_boot": int, "n_ave": list,
                 "berry_de_bin": float, "berry_separation_bins": int, "min_bin_pairs": int},
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k!r} must be a table")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _coerce(d, types, path=""):
    for k, t in types.items():
        v = d[k]
        where = path + k
        if isinstance(t, dict):
            _coerce(v, t, where + ".")
            continue
        if v is None:
            continue
        if t is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{where!r} must be a number")
            v = float(v)
            if not math.isfinite(v):
                raise ConfigError(f"{where!r} must be finite")
        elif t is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{where!r} must be an integer")
        elif t is bool:
            if not isinstance(v, bool):
                raise ConfigError(f"{where!r} must be true or false")
        elif t is str:
            if not isinstance(v, str):
                raise ConfigError(f"{where!r} must be a string")
        elif t is list:
            if not (isinstance(v, list) and v and all(isinstance(x, int) and x >= 1 for x in v)):
                raise ConfigError(f"{where!r} must be a non-empty list of positive integers")
        d[k] = v


def _check(d):
    g, p, s, sc, a = d["geometry"], d["physics"], d["solver"], d["semiclassics"], d["analysis"]
    if not g["l"] > g["h"] > 0 or g["scale"] <= 0:
        raise ConfigError("geometry needs l > h > 0 and scale > 0")
    if p["hbar"] <= 0 or p["m"] <= 0:
        raise ConfigError("physics.hbar and physics.m must be positive")
    if not 0 < s["k_min"] < s["k_max"]:
        raise ConfigError("solver needs 0 < k_min < k_max")
    if not 0 < s["half_width"] < 1:
        raise ConfigError("solver.half_width must lie in (0, 1)")
    if s["stride"] < 1 or s["margin"] < 0:
        raise ConfigError("solver.stride must be >= 1 and solver.margin >= 0")
    if sc["domain_mode"] not in ("factorized", "coupled"):
        raise ConfigError("semiclassics.domain_mode must be 'factorized' or 'coupled'")
    if sc["Q"] is not None and sc["Q"] <= 0:
        raise ConfigError("semiclassics.Q must be positive")
    if sc["abs_tol"] <= 0 or sc["rel_tol"] <= 0:
        raise ConfigError("semiclassics tolerances must be positive")
    if (sc["e_min"] is None) != (sc["e_max"] is None):
        raise ConfigError("semiclassics.e_min and e_max must be given together")
    if sc["e_min"] is not None and not 0 < sc["e_min"] < sc["e_max"]:
        raise ConfigError("semiclassics needs 0 < e_min < e_max")
    if sc["sweep_points"] < 3 or sc["grid_points"] < 2:
        raise ConfigError("semiclassics sweep_points >= 3 and grid_points >= 2 required")
    for key in ("de_bin", "ebar_bin", "berry_de_bin"):
        if a[key] is not None and a[key] <= 0:
            raise ConfigError(f"analysis.{key} must be positive")
    if a["points_per_wavelength"] < 10:
        raise ConfigError("analysis.points_per_wavelength must be at least 10")
    if a["n_boot"] < 100 or a["diag_bins"] < 1:
        raise ConfigError("analysis.n_boot >= 100 and diag_bins >= 1 required")


class RunConfig:
    """Validated, fully-resolved configuration (defaults filled in)."""

    def __init__(self, data: dict):
        merged = _merge(DEFAULTS, data)
        _coerce(merged, _TYPES)
        _check(merged)
        self._d = merged

    def __getitem__(self, key):
        return self._d[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self._d == other._d

    def to_dict(self) -> dict:
        return copy.deepcopy(self._d)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(d)

    def with_preset(self, name: str) -> "RunConfig":
        return RunConfig(_merge(self._d, PRESETS[name]))

    @property
    def hash(self) -> str:
        return config_hash(self._d)


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str | None = None, preset: str | None = None) -> RunConfig:
    """Preset values first, then the file on top. ``.json`` files (including
    emitted run manifests with a ``config`` entry) and TOML are accepted."""
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    base = _merge(DEFAULTS, PRESETS[preset]) if preset else copy.deepcopy(DEFAULTS)
    if path is None:
        return RunConfig(base)
    try:
        if str(path).endswith(".json"):
            with open(path) as fh:
                data = json.load(fh)
            if isinstance(data, dict) and "config" in data and "config_hash" in data:
                data = data["config"]
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig(_merge(base, data))
