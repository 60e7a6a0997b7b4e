"""Flat key-value experiment configuration with preset overlays.

Configs are INI files with typed scalar values only (no expressions).  An
optional ``[experiment] preset = name`` line pulls in a bundle from
:mod:`ergoavg.presets`; explicit sections override the bundle key by key.
``echo`` serializes the fully resolved specification back to INI text with
round-trip float formatting, so re-running from an echo reproduces a run
bit for bit.
"""

import configparser
import io
from dataclasses import dataclass, field

import numpy as np

from . import presets
from .errors import ConfigurationError
from .measures import (
    ConvPower,
    SphereMeasure,
    interval_density,
    make_moment_curve,
    uniform_box,
)
from .multiflow import TorusMultiflow, TrigObservable

_SECTION_ORDER = (
    "flow",
    "measure",
    "observable",
    "schedule",
    "certificate",
    "general_position",
    "diagnostic",
    "scan",
    "iterate",
    "budgets",
    "run",
)

_KNOWN_KEYS = {
    "experiment": {"preset"},
    "flow": {"preset", "torus_dim", "time_dim"},  # plus rowN keys
    "measure": {
        "preset", "variant", "d", "n", "lo", "hi", "ambient", "radius",
        "center", "base_preset", "base_variant", "base_d", "base_lo",
        "base_hi", "base_ambient", "base_radius", "base_center",
    },
    "observable": {"preset", "real_valued"},  # plus modeN keys
    "schedule": {"kind", "values", "geometric"},
    "certificate": {"radius"},
    "general_position": {"trials", "threshold"},
    "diagnostic": {"sample_count", "cells_per_axis", "colatitude"},
    "scan": {"trials", "threshold"},
    "iterate": {"t", "n", "mc_count"},
    "budgets": {"mc_samples", "quadrature_resolution", "torus_grid", "threads"},
    "run": {"seed", "waive_ergodicity"},
}


@dataclass(frozen=True)
class Budgets:
    mc_samples: int = 10_000
    quadrature_resolution: int = 64
    torus_grid: int = 2**14
    threads: int = 1


@dataclass
class ResolvedExperiment:
    """Built objects plus the explicit spec they were built from."""

    spec: dict
    seed: int
    budgets: Budgets
    waive_ergodicity: bool = False
    flow: TorusMultiflow | None = None
    measure: object = None
    observable: TrigObservable | None = None
    schedule_kind: str | None = None
    schedule: list | None = None
    notes: str = ""
    extras: dict = field(default_factory=dict)


def load_config(path):
    """Read an INI config file into a {section: {key: str}} dict."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _merge(base, overlay):
    merged = {k: dict(v) for k, v in base.items() if k != "notes"}
    for section, values in overlay.items():
        merged.setdefault(section, {}).update(values)
    return merged


def _check_keys(raw):
    for section, values in raw.items():
        if section not in _KNOWN_KEYS:
            raise ConfigurationError(f"unknown config section [{section}]")
        known = _KNOWN_KEYS[section]
        for key in values:
            if key in known:
                continue
            if section == "flow" and key.startswith("row"):
                continue
            if section == "observable" and key.startswith("mode"):
                continue
            raise ConfigurationError(f"unknown key {key!r} in section [{section}]")


def _floats(text):
    try:
        return [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise ConfigurationError(f"expected numbers, got {text!r}") from exc


def _int(values, key, default=None):
    if key not in values:
        if default is None:
            raise ConfigurationError(f"missing integer key {key!r}")
        return default
    try:
        return int(values[key])
    except ValueError as exc:
        raise ConfigurationError(f"key {key!r} must be an integer") from exc


def _float(values, key, default=None):
    if key not in values:
        if default is None:
            raise ConfigurationError(f"missing float key {key!r}")
        return default
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigurationError(f"key {key!r} must be a number") from exc


def _bool(values, key, default=False):
    if key not in values:
        return default
    text = values[key].strip().lower()
    if text in ("true", "yes", "1", "on"):
        return True
    if text in ("false", "no", "0", "off"):
        return False
    raise ConfigurationError(f"key {key!r} must be a boolean")


# ---------------------------------------------------------------------------
# builders: section spec -> object + canonical spec
# ---------------------------------------------------------------------------

def _build_flow(values):
    if "preset" in values:
        fl = presets.flow(values["preset"])
    else:
        D = _int(values, "torus_dim")
        d = _int(values, "time_dim")
        rows = []
        for i in range(1, D + 1):
            key = f"row{i}"
            if key not in values:
                raise ConfigurationError(f"flow matrix missing {key!r}")
            row = _floats(values[key])
            if len(row) != d:
                raise ConfigurationError(f"{key!r} must have {d} entries")
            rows.append(row)
        fl = TorusMultiflow(D, d, np.asarray(rows))
    spec = {"torus_dim": str(fl.torus_dim), "time_dim": str(fl.time_dim)}
    for i, row in enumerate(fl.matrix, start=1):
        spec[f"row{i}"] = " ".join(repr(float(v)) for v in row)
    return fl, spec


def _measure_variant_spec(m, prefix=""):
    from .measures import AcDensity, CurveMeasure

    if isinstance(m, ConvPower):
        if prefix:
            raise ConfigurationError("convolution powers cannot be nested in config")
        inner = _measure_variant_spec(m.base, prefix="base_")
        return {"variant": "conv-power", "n": str(m.n), **inner}
    if isinstance(m, SphereMeasure):
        return {
            prefix + "variant": "sphere",
            prefix + "ambient": str(m.ambient_dim),
            prefix + "radius": repr(float(m.radius)),
            prefix + "center": " ".join(repr(float(v)) for v in m.center),
        }
    if isinstance(m, CurveMeasure):
        if not m.name.startswith("moment-curve-"):
            raise ConfigurationError(
                f"curve {m.name!r} is not a registry built-in and cannot be "
                "expressed in config"
            )
        return {
            prefix + "variant": "moment-curve",
            prefix + "d": str(m.dim),
        }
    if isinstance(m, AcDensity):
        if m.name == "interval-unit":
            return {prefix + "variant": "interval"}
        if m.name.startswith("uniform-box"):
            return {
                prefix + "variant": "uniform-box",
                prefix + "lo": " ".join(repr(float(v)) for v in m.support_box[:, 0]),
                prefix + "hi": " ".join(repr(float(v)) for v in m.support_box[:, 1]),
            }
        raise ConfigurationError(
            f"density {m.name!r} is not expressible in config; use a preset"
        )
    raise ConfigurationError(f"cannot serialize measure {m!r}")


def _build_measure_from_variant(values, prefix=""):
    variant = values.get(prefix + "variant")
    if variant == "interval":
        return interval_density()
    if variant == "uniform-box":
        return uniform_box(_floats(values[prefix + "lo"]), _floats(values[prefix + "hi"]))
    if variant == "moment-curve":
        return make_moment_curve(_int(values, prefix + "d"))
    if variant == "sphere":
        ambient = _int(values, prefix + "ambient", 3)
        radius = _float(values, prefix + "radius", 1.0)
        center = _floats(values.get(prefix + "center", " ".join(["0.0"] * ambient)))
        return SphereMeasure(ambient, np.asarray(center), radius)
    if variant == "conv-power" and not prefix:
        n = _int(values, "n")
        if "base_preset" in values:
            base = presets.measure(values["base_preset"], d=values.get("base_d"))
        else:
            base = _build_measure_from_variant(values, prefix="base_")
        return ConvPower(base, n)
    raise ConfigurationError(f"unknown measure variant {variant!r}")


def _build_measure(values):
    if "preset" in values:
        m = presets.measure(values["preset"], d=values.get("d"))
    else:
        m = _build_measure_from_variant(values)
    return m, _measure_variant_spec(m)


def _build_observable(values):
    if "preset" in values:
        obs = presets.observable(values["preset"])
    else:
        mode_keys = sorted(
            (k for k in values if k.startswith("mode")),
            key=lambda k: int(k[4:] or 0),
        )
        if not mode_keys:
            raise ConfigurationError("observable needs a preset or modeN lines")
        real_valued = _bool(values, "real_valued", False)
        modes, coeffs = [], []
        for key in mode_keys:
            nums = _floats(values[key])
            if len(nums) < 3:
                raise ConfigurationError(
                    f"{key!r} must list the frequency vector then re and im"
                )
            k = nums[:-2]
            if any(v != int(v) for v in k):
                raise ConfigurationError(f"{key!r} frequency entries must be integers")
            modes.append([int(v) for v in k])
            coeffs.append(complex(nums[-2], nums[-1]))
        obs = TrigObservable(np.array(modes), np.array(coeffs), real_valued=real_valued)
    spec = {"real_valued": "true" if obs.real_valued else "false"}
    for i, (k, c) in enumerate(zip(obs.modes, obs.coeffs), start=1):
        ints = " ".join(str(int(v)) for v in k)
        spec[f"mode{i}"] = f"{ints} {repr(float(c.real))} {repr(float(c.imag))}"
    return obs, spec


def _build_schedule(values):
    kind = values.get("kind", "time")
    if kind not in ("time", "radius"):
        raise ConfigurationError("schedule kind must be 'time' or 'radius'")
    if "values" in values:
        sched = _floats(values["values"])
    elif "geometric" in values:
        parts = _floats(values["geometric"])
        if len(parts) != 3:
            raise ConfigurationError("geometric schedule needs 'start stop count'")
        start, stop, count = parts
        sched = [float(v) for v in np.geomspace(start, stop, int(count))]
    else:
        raise ConfigurationError("schedule needs 'values' or 'geometric'")
    if len(sched) < 1 or any(b <= a for a, b in zip(sched, sched[1:])):
        raise ConfigurationError("schedule must be nonempty and strictly increasing")
    spec = {"kind": kind, "values": " ".join(repr(v) for v in sched)}
    return kind, sched, spec


def resolve(raw, overrides=None):
    """Apply preset overlay and CLI overrides, build objects, canonicalize.

    ``overrides`` may carry ``seed``, ``waive_ergodicity``, and budget
    fields; they take precedence over the config file.
    """
    raw = {k: dict(v) for k, v in raw.items()}
    notes = ""
    exp = raw.pop("experiment", None)
    if exp:
        bundle = presets.experiment(exp.get("preset", ""))
        notes = bundle.get("notes", "")
        raw = _merge(bundle, raw)
    _check_keys(raw)
    overrides = overrides or {}

    run = raw.get("run", {})
    if "seed" in overrides and overrides["seed"] is not None:
        seed = int(overrides["seed"])
    elif "seed" in run:
        seed = _int(run, "seed")
    else:
        raise ConfigurationError("a seed is mandatory ([run] seed = ... or --seed)")
    waive = _bool(run, "waive_ergodicity", False) or bool(
        overrides.get("waive_ergodicity")
    )

    b = raw.get("budgets", {})
    budgets = Budgets(
        mc_samples=int(overrides.get("mc_samples") or _int(b, "mc_samples", 10_000)),
        quadrature_resolution=int(
            overrides.get("quadrature_resolution")
            or _int(b, "quadrature_resolution", 64)
        ),
        torus_grid=int(overrides.get("torus_grid") or _int(b, "torus_grid", 2**14)),
        threads=int(overrides.get("threads") or _int(b, "threads", 1)),
    )

    spec = {}
    resolved = ResolvedExperiment(
        spec=spec, seed=seed, budgets=budgets, waive_ergodicity=waive, notes=notes
    )
    if "flow" in raw:
        resolved.flow, spec["flow"] = _build_flow(raw["flow"])
    if "measure" in raw:
        resolved.measure, spec["measure"] = _build_measure(raw["measure"])
    if "observable" in raw:
        resolved.observable, spec["observable"] = _build_observable(raw["observable"])
    if "schedule" in raw:
        resolved.schedule_kind, resolved.schedule, spec["schedule"] = _build_schedule(
            raw["schedule"]
        )
    for section in ("certificate", "general_position", "diagnostic", "scan", "iterate"):
        if section in raw:
            resolved.extras[section] = dict(raw[section])
            spec[section] = dict(raw[section])
    spec["budgets"] = {
        "mc_samples": str(budgets.mc_samples),
        "quadrature_resolution": str(budgets.quadrature_resolution),
        "torus_grid": str(budgets.torus_grid),
        "threads": str(budgets.threads),
    }
    spec["run"] = {
        "seed": str(seed),
        "waive_ergodicity": "true" if waive else "false",
    }
    return resolved


def echo(resolved):
    """Canonical INI text of the fully resolved spec (round-trips exactly)."""
    parser = configparser.ConfigParser(interpolation=None)
    for section in _SECTION_ORDER:
        if section in resolved.spec:
            parser[section] = resolved.spec[section]
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
