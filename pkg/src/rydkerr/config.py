"""Scenario configuration: TOML files, dotted overrides and built-in scenarios.

A scenario describes one physical system plus the products to compute.  The
system is given either by a ``[slab]`` shorthand (g, omega, xi, L/xi and
either delta or the peak phase) or by explicit ``[params]`` and ``[medium]``
tables.  ``[sweep]`` repeats every product over a list of values of one key.
"""

from __future__ import annotations

import copy
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ValidationError
from .medium import MediumProfile, PolaritonParams, slab_setup, slab_with_peak_phase

PRODUCTS = ("kernel", "kerr-scan", "field-out", "correlators", "wigner", "mass-validity")

DEFAULT_TOLERANCES = {
    "kernel_rtol": 1e-8,
    "map_tol": 1e-9,
    "wigner_tol": 1e-6,
    "moments_rtol": 1e-4,
}

_PI = math.pi

BUILTIN = {
    "fig2-left": {
        "name": "fig2-left",
        "outputs": ["kernel"],
        "slab": {"g": 1.0, "omega": 1.0, "xi": 1.0, "length_over_xi": 50.0, "delta": 100.0, "gamma": 0.1},
        "sweep": {"key": "slab.length_over_xi", "values": [2.0, 10.0, 50.0]},
    },
    "fig2-right": {
        "name": "fig2-right",
        "outputs": ["kerr-scan"],
        "slab": {"g": 1.0, "omega": 1.0, "xi": 1.0, "length_over_xi": 50.0, "phi0": 1.0, "gamma": 0.1},
        "kerr_scan": {"start": 3 * _PI / 300, "stop": 3 * _PI, "num": 300, "spacing": "linear"},
    },
    "fig3": {
        "name": "fig3",
        "outputs": ["wigner"],
        "slab": {"g": 1.0, "omega": 1.0, "xi": 1.0, "length_over_xi": 50.0, "phi0": _PI / 64, "gamma": 0.1},
        # xi_out = 2: probe width xi_out / 10, coherence length 100 probe widths
        "input": {"kind": "gaussian", "width": 20.0, "center": 0.0, "mean_photons": 1.0},
        "probe": {"width": 0.2, "center": 0.0, "photon_number": 1.0},
        "wigner": {"method": "narrow-probe", "n_max": 40, "num": 161},
        "sweep": {"key": "slab.phi0", "values": [_PI / 64, _PI]},
    },
}


def builtin(name):
    if name not in BUILTIN:
        raise ValidationError(f"unknown scenario {name!r}; choose from {sorted(BUILTIN)}", "scenario")
    return copy.deepcopy(BUILTIN[name])


def load_file(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}", "config") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}", "config") from exc


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def set_path(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        nxt = node.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ValidationError(f"cannot descend into non-table {k!r}", dotted)
        node = nxt
    node[keys[-1]] = value


def get_path(cfg, dotted, default=None):
    node = cfg
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            return default
        node = node[k]
    return node


def apply_overrides(cfg, overrides):
    """Apply ``key.sub=value`` strings; values are parsed as TOML literals when possible."""
    for item in overrides or ():
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not key=value", "--set")
        key, text = item.split("=", 1)
        set_path(cfg, key.strip(), _parse_value(text.strip()))
    return cfg


def load(path=None, scenario=None, overrides=()):
    if path is None and scenario is None:
        raise ValidationError("give --config or --scenario", "config")
    cfg = builtin(scenario) if scenario else {}
    if path is not None:
        _merge(cfg, load_file(path))
    cfg.setdefault("name", scenario or "custom")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(cfg.get("tolerances", {}))
    cfg["tolerances"] = tol
    return apply_overrides(cfg, overrides)


def _merge(dst, src):
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = copy.deepcopy(v)


def _number(table, key, path, default=None, positive=False):
    if key not in table:
        if default is None:
            raise ValidationError("missing required value", f"{path}.{key}")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"expected a number, got {val!r}", f"{path}.{key}")
    if positive and not val > 0:
        raise ValidationError(f"must be positive, got {val!r}", f"{path}.{key}")
    return float(val)


def build_system(cfg):
    """(PolaritonParams, MediumProfile) from the config."""
    if "slab" in cfg:
        s = cfg["slab"]
        g = _number(s, "g", "slab", 1.0, positive=True)
        omega = _number(s, "omega", "slab", 1.0, positive=True)
        xi = _number(s, "xi", "slab", 1.0, positive=True)
        if "length" in s:
            ratio = _number(s, "length", "slab", positive=True) / xi
        else:
            ratio = _number(s, "length_over_xi", "slab", positive=True)
        gamma = _number(s, "gamma", "slab", 0.1, positive=True)
        c = _number(s, "c", "slab", 1.0, positive=True)
        if ("phi0" in s) == ("delta" in s):
            raise ValidationError("give exactly one of phi0 / delta", "slab")
        if "phi0" in s:
            phi0 = _number(s, "phi0", "slab")
            if phi0 == 0:
                raise ValidationError("phi0 must be non-zero", "slab.phi0")
            return slab_with_peak_phase(phi0, g=g, omega=omega, length_over_xi=ratio, xi=xi, gamma=gamma, c=c)
        return slab_setup(g=g, omega=omega, length=ratio * xi, xi=xi, delta=_number(s, "delta", "slab"),
                          gamma=gamma, c=c)
    if "params" not in cfg or "medium" not in cfg:
        raise ValidationError("need a [slab] table or both [params] and [medium]", "config")
    p = cfg["params"]
    params = PolaritonParams(**{k: _number(p, k, "params") for k in ("omega", "delta", "gamma", "g0", "c6")},
                             c=_number(p, "c", "params", 1.0))
    m = cfg["medium"]
    kind = m.get("kind", "slab")
    if kind == "slab":
        medium = MediumProfile.slab(_number(m, "mean_density", "medium"), _number(m, "length", "medium"),
                                    _number(m, "center", "medium", 0.0))
    elif kind == "gaussian":
        medium = MediumProfile.gaussian(_number(m, "peak", "medium"), _number(m, "width", "medium"),
                                        _number(m, "center", "medium", 0.0), _number(m, "cutoff", "medium", 8.0))
    elif kind == "tabulated":
        if "file" not in m:
            raise ValidationError("tabulated medium needs a file", "medium.file")
        medium = MediumProfile.from_csv(m["file"])
    else:
        raise ValidationError(f"unknown medium kind {kind!r}", "medium.kind")
    return params, medium


def axis(spec, path):
    """A list of values, or {start, stop, num, spacing} with spacing linear|log."""
    import numpy as np

    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if not isinstance(spec, dict):
        raise ValidationError("expected a list or a {start, stop, num} table", path)
    start = _number(spec, "start", path)
    stop = _number(spec, "stop", path)
    num = int(_number(spec, "num", path, positive=True))
    spacing = spec.get("spacing", "linear")
    if spacing == "linear":
        return np.linspace(start, stop, num)
    if spacing == "log":
        if not (start > 0 and stop > 0):
            raise ValidationError("log spacing needs positive bounds", path)
        return np.geomspace(start, stop, num)
    raise ValidationError(f"unknown spacing {spacing!r}", f"{path}.spacing")


def expand_sweep(cfg):
    """[(tag, cfg)] with one entry per sweep value (a single untagged entry without a sweep)."""
    sweep = cfg.get("sweep")
    if not sweep:
        return [("", cfg)]
    key = sweep.get("key")
    values = sweep.get("values")
    if not isinstance(key, str) or not isinstance(values, list) or not values:
        raise ValidationError("sweep needs a key and a non-empty values list", "sweep")
    out = []
    for i, v in enumerate(values):
        sub = copy.deepcopy(cfg)
        del sub["sweep"]
        set_path(sub, key, v)
        out.append((f"{key.split('.')[-1]}-{i}", sub))
    return out
