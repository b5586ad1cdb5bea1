"""Flat dotted-key run configuration.

Files hold one ``section.sub.key = value`` per line; values are Python
literals.  Blank lines and ``#`` comments are ignored.
"""
import ast
import hashlib
import json
import math

import numpy as np

from .errors import ConfigInvalid

DEFAULTS = {
    "scenario.line.R": 0.32e-3,
    "scenario.line.L_S": 299.85e-9,
    "scenario.line.L_M": 59.97e-9,
    "scenario.line.C_K": 0.33e-9,
    "scenario.line.C_E": 0.033e-9,
    "scenario.line.G": 0.0,
    "scenario.line.length": 10e3,
    "scenario.line.segments": 100,
    "scenario.fault.position": 7.7e3,
    "scenario.fault.time": 0.2,
    "scenario.fault.rf": 1.0,
    "scenario.fault.phases": [0],
    "scenario.load.r3": 1e3,
    "scenario.source.amplitude": 5e3 * math.sqrt(2),
    "scenario.source.frequency": 50.0,
    "scenario.sim.dt": 1e-6,
    "scenario.sim.sample_dt": 2e-6,
    "scenario.sim.duration": 0.4,
    "localiser.beta": 0.01,
    "localiser.omega_band": 2 * math.pi * 1e4,
    "localiser.grid_points": 100,
    "localiser.delta": 10.0,
    "localiser.kappa": 1e-3,
    "localiser.activation_cutoff": 2 * math.pi * 2e3,
    "localiser.tail_guard": None,
    "localiser.known_impedance": True,
    "localiser.rf": None,
    "localiser.fault_time_bound": None,
    "localiser.inject_truth": True,
    "localiser.prefix": 0.0,
    "localiser.nu": 5.2e4,
    "localiser.tau": None,
    "io.out": "results",
    "sweep.rf": [float(x) for x in np.logspace(-1, 4, 15)],
}

PROFILES = {
    "desk": {},
    "paper": {"scenario.fault.time": 2.1, "scenario.sim.duration": 4.1},
}

_POSITIVE = {
    "scenario.line.length", "scenario.line.L_S", "scenario.line.C_E", "scenario.fault.position",
    "scenario.fault.time", "scenario.fault.rf", "scenario.load.r3", "scenario.source.frequency",
    "scenario.sim.dt", "scenario.sim.sample_dt", "scenario.sim.duration", "localiser.beta",
    "localiser.omega_band", "localiser.delta", "localiser.kappa", "localiser.nu",
}
_NONNEG = {"scenario.line.R", "scenario.line.L_M", "scenario.line.C_K", "scenario.line.G",
           "scenario.source.amplitude", "localiser.prefix"}
_INT = {"scenario.line.segments", "localiser.grid_points"}
_BOOL = {"localiser.known_impedance", "localiser.inject_truth"}
_OPT_POS = {"localiser.rf", "localiser.activation_cutoff", "localiser.tail_guard", "localiser.fault_time_bound", "localiser.tau"}


def parse_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{source}:{lineno}", "expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        try:
            out[key] = ast.literal_eval(val)
        except (ValueError, SyntaxError):
            raise ConfigInvalid(key, f"cannot parse value {val!r}") from None
    return out


def format_text(cfg):
    return "".join(f"{k} = {cfg[k]!r}\n" for k in sorted(cfg))


class RunConfig(dict):
    """Resolved configuration: defaults, then profile, then file, then overrides."""

    @property
    def hash(self):
        blob = json.dumps(self, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def section(self, prefix):
        p = prefix.rstrip(".") + "."
        return {k[len(p):]: v for k, v in self.items() if k.startswith(p)}

    @property
    def fault_time_bound(self):
        v = self["localiser.fault_time_bound"]
        return 0.75 * self["scenario.sim.duration"] if v is None else v

    @property
    def derived_delay_bound(self):
        """L n / nu: delay bound implied by the propagation-speed floor."""
        return self["scenario.line.length"] * 3 / self["localiser.nu"]

    @property
    def delay_bound(self):
        v = self["localiser.tau"]
        return self.derived_delay_bound if v is None else v

    @property
    def localiser_rf(self):
        v = self["localiser.rf"]
        return self["scenario.fault.rf"] if v is None else v


def _validate(cfg):
    for k, v in cfg.items():
        if k not in DEFAULTS:
            raise ConfigInvalid(k, "unknown key")
        if k in _BOOL:
            if not isinstance(v, bool):
                raise ConfigInvalid(k, "expected True or False")
            continue
        if k in _INT:
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigInvalid(k, "expected a positive integer")
            continue
        if k in _OPT_POS:
            if v is not None and not (_is_num(v) and v > 0):
                raise ConfigInvalid(k, "expected None or a positive number")
            continue
        if k in _POSITIVE and not (_is_num(v) and v > 0):
            raise ConfigInvalid(k, "expected a positive number")
        if k in _NONNEG and not (_is_num(v) and v >= 0):
            raise ConfigInvalid(k, "expected a non-negative number")
    rf = cfg["sweep.rf"]
    if not isinstance(rf, (list, tuple)) or not rf or not all(_is_num(x) and x > 0 for x in rf):
        raise ConfigInvalid("sweep.rf", "expected a non-empty list of positive numbers")
    if list(rf) != sorted(rf):
        raise ConfigInvalid("sweep.rf", "list must be sorted ascending")
    ph = cfg["scenario.fault.phases"]
    if not isinstance(ph, (list, tuple)) or not ph or any(
            not isinstance(x, int) or not 0 <= x < 3 for x in ph):
        raise ConfigInvalid("scenario.fault.phases", "expected a list of phase indices in 0..2")
    L = cfg["scenario.line.length"]
    if not 0 < cfg["scenario.fault.position"] < L:
        raise ConfigInvalid("scenario.fault.position", "must lie strictly inside the line")
    if not cfg["localiser.delta"] < L / 2:
        raise ConfigInvalid("localiser.delta", "must be smaller than half the line length")
    if not isinstance(cfg["io.out"], str):
        raise ConfigInvalid("io.out", "expected a path string")
    ratio = cfg["scenario.sim.sample_dt"] / cfg["scenario.sim.dt"]
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigInvalid("scenario.sim.sample_dt", "must be an integer multiple of scenario.sim.dt")
    if cfg["localiser.omega_band"] > math.pi / cfg["scenario.sim.sample_dt"] * (1 + 1e-12):
        raise ConfigInvalid("localiser.omega_band", "exceeds the Nyquist frequency")


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def load_config(path=None, profile="desk", overrides=None, text=None):
    if profile not in PROFILES:
        raise ConfigInvalid("profile", f"unknown profile {profile!r}")
    cfg = dict(DEFAULTS)
    cfg.update(PROFILES[profile])
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigInvalid(str(path), f"cannot read: {exc.strerror}") from None
    if text is not None:
        user = parse_text(text, str(path or "<config>"))
        for k in user:
            if k not in DEFAULTS:
                raise ConfigInvalid(k, "unknown key")
        cfg.update(user)
    if overrides:
        cfg.update(overrides)
    if isinstance(cfg["sweep.rf"], tuple):
        cfg["sweep.rf"] = list(cfg["sweep.rf"])
    _validate(cfg)
    return RunConfig(cfg)
