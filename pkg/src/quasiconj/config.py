"""Experiment configuration: TOML loading, schema checks, system building.

Configs are flat typed keys grouped in a few sections.  Unknown sections
or keys, wrong types, and out-of-range values are rejected with an error
message anchored to the offending line of the file.  All randomness in an
experiment flows from the single top-level seed (default 42).
"""

import math

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

import numpy as np

from .catalog import (make_linear_ph, make_perturbed, make_skew_product,
                      suspension_flow, time_t_map)
from .fields import trig_scalar, trig_vector


class ConfigError(ValueError):
    """Invalid configuration; message carries file and line when known."""


def _positive(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _int_list(x):
    return (isinstance(x, list) and len(x) > 0 and all(_is_int(v) for v in x))


def _number_list(x):
    return (isinstance(x, list) and len(x) > 0 and all(_number(v) for v in x))


def _int_matrix(x):
    return (isinstance(x, list) and len(x) > 0
            and all(_int_list(row) and len(row) == len(x[0]) for row in x))


def _str_list(x):
    return isinstance(x, list) and all(isinstance(v, str) for v in x)


# key -> (checker, default, description used in error messages)
_SCHEMA = {
    None: {
        "seed": (_is_int, 42, "an integer"),
    },
    "system": {
        "id": (lambda x: isinstance(x, str), None, "a string"),
        "kind": (lambda x: x in ("linear", "skew_product", "suspension_time1"),
                 None,
                 "one of 'linear', 'skew_product', 'suspension_time1'"),
        "matrix": (_int_matrix, None, "an integer matrix"),
        "fiber": (lambda x: x in ("constant", "cos_wave", "sin_wave"),
                  "constant", "one of 'constant', 'cos_wave', 'sin_wave'"),
        "fiber_shift": (_number, 0.0, "a number"),
        "fiber_amplitude": (_number, 0.0, "a number"),
        "fiber_axis": (_is_int, 0, "an integer"),
        "fiber_frequency": (lambda x: _is_int(x) and x >= 1, 1,
                            "a positive integer"),
        "time": (_positive, 1.0, "a positive number"),
    },
    "perturbation": {
        "kind": (lambda x: x in ("none", "trig_vector", "fiber_shift"),
                 "none", "one of 'none', 'trig_vector', 'fiber_shift'"),
        "amplitude": (lambda x: _number(x) and x >= 0, 0.0,
                      "a nonnegative number"),
        "component": (_is_int, None, "an integer"),
        "axis": (_is_int, 0, "an integer"),
        "frequency": (lambda x: _is_int(x) and x >= 1, 1,
                      "a positive integer"),
    },
    "solver": {
        "resolution": (lambda x: _int_list(x) and all(v >= 2 for v in x),
                       None, "a list of integers >= 2"),
        "epsilon": (lambda x: _number(x) and 0.0 < x < 0.5, 0.1,
                    "a number in (0, 0.5)"),
        "tolerance": (_positive, 1e-10, "a positive number"),
        "residual_tolerance": (_positive, 1e-6, "a positive number"),
        "max_iterations": (lambda x: _is_int(x) and x >= 1, 200,
                           "a positive integer"),
        "pairs": (lambda x: _is_int(x) and x >= 2, 200, "an integer >= 2"),
    },
    "entropy": {
        "r": (lambda x: _number(x) and 0.0 < x < 0.25, 0.1,
              "a number in (0, 0.25)"),
        "n_max": (lambda x: _is_int(x) and x >= 2, 12, "an integer >= 2"),
        "theta_list": (_number_list, [0.0, 0.02, 0.25], "a list of numbers"),
        "chi_tolerance": (_positive, 0.01, "a positive number"),
        "epsilon_list": (lambda x: _number_list(x) and all(v > 0 for v in x),
                         [0.1, 0.05], "a list of positive numbers"),
        "sample_budget": (lambda x: _is_int(x) and x >= 64, 16384,
                          "an integer >= 64"),
        "with_bowen": (lambda x: isinstance(x, bool), False, "a boolean"),
        "bowen_n": (lambda x: _is_int(x) and x >= 2, 10, "an integer >= 2"),
        "bowen_tolerance": (_positive, 0.05, "a positive number"),
        "n_curves": (lambda x: _is_int(x) and x >= 1, 4,
                     "a positive integer"),
        "window_fraction": (lambda x: _number(x) and 0.0 < x <= 0.5, 0.1,
                            "a number in (0, 0.5]"),
        "phases": (lambda x: _is_int(x) and x >= 1, 1, "a positive integer"),
        "ratio_tolerance": (_positive, 0.03, "a positive number"),
        "beta_list": (lambda x: _number_list(x) and all(v > 0 for v in x),
                      [0.1, 0.05, 0.01], "a list of positive numbers"),
    },
    "outputs": {
        "directory": (lambda x: isinstance(x, str) and x != "", "runs",
                      "a nonempty string"),
        "formats": (lambda x: _str_list(x)
                    and all(v in ("json", "csv") for v in x),
                    ["json", "csv"], "a list drawn from 'json', 'csv'"),
    },
}


def _find_line(text, section, key=None):
    """1-based line of a key inside its section, or of the section header."""
    lines = text.splitlines()
    if section is None:
        start, end = 0, len(lines)
        for i, ln in enumerate(lines):
            if ln.lstrip().startswith("["):
                end = i
                break
    else:
        start = None
        for i, ln in enumerate(lines):
            if ln.strip() == f"[{section}]":
                start = i
                break
        if start is None:
            return None
        if key is None:
            return start + 1
        end = len(lines)
        for i in range(start + 1, len(lines)):
            if lines[i].lstrip().startswith("["):
                end = i
                break
        start += 1
    for i in range(start, end):
        stripped = lines[i].lstrip()
        if stripped.startswith(key) and stripped[len(key):].lstrip().startswith("="):
            return i + 1
    return None


def _anchor(path, text, section, key=None):
    line = _find_line(text, section, key)
    return f"{path}:{line}" if line is not None else str(path)


def load_config(path):
    """Parse and validate a TOML experiment config; returns plain dicts."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc

    cfg = {}
    # top level: scalar keys and known sections only
    for key, val in data.items():
        if isinstance(val, dict):
            if key not in _SCHEMA or key is None:
                raise ConfigError(
                    f"{_anchor(path, text, key)}: unknown section [{key}]")
            continue
        if key not in _SCHEMA[None]:
            raise ConfigError(
                f"{_anchor(path, text, None, key)}: unknown key '{key}'")
    for section, keys in _SCHEMA.items():
        given = data if section is None else data.get(section, {})
        if section is not None:
            given = {k: v for k, v in given.items()} if isinstance(given, dict) else given
        out = {}
        for key, val in (given.items() if isinstance(given, dict) else ()):
            if section is None and isinstance(val, dict):
                continue
            if key not in keys:
                if section is None:
                    continue
                raise ConfigError(
                    f"{_anchor(path, text, section, key)}: "
                    f"unknown key '{key}' in [{section}]")
            checker, _, desc = keys[key]
            if not checker(val):
                raise ConfigError(
                    f"{_anchor(path, text, section, key)}: "
                    f"'{key}' must be {desc}")
            out[key] = val
        for key, (checker, default, desc) in keys.items():
            out.setdefault(key, default)
        cfg[section or "top"] = out

    if "system" in data:
        _check_system(cfg, path, text)
    cfg["_path"] = str(path)
    return cfg


def _check_system(cfg, path, text):
    sys_cfg = cfg["system"]
    pert = cfg["perturbation"]
    if sys_cfg["kind"] is None:
        raise ConfigError(
            f"{_anchor(path, text, 'system')}: [system] needs a 'kind'")
    if sys_cfg["matrix"] is None:
        raise ConfigError(
            f"{_anchor(path, text, 'system')}: [system] needs a 'matrix'")
    if sys_cfg["kind"] in ("skew_product", "suspension_time1"):
        m = sys_cfg["matrix"]
        if len(m) != 2 or len(m[0]) != 2:
            raise ConfigError(
                f"{_anchor(path, text, 'system', 'matrix')}: "
                f"'{sys_cfg['kind']}' needs a 2x2 matrix")
    if pert["kind"] == "fiber_shift" and sys_cfg["kind"] != "skew_product":
        raise ConfigError(
            f"{_anchor(path, text, 'perturbation', 'kind')}: "
            "'fiber_shift' perturbations need a skew_product system")
    if pert["kind"] != "none" and pert["amplitude"] == 0.0:
        raise ConfigError(
            f"{_anchor(path, text, 'perturbation')}: "
            "perturbation needs a nonzero 'amplitude'")


def build_system(cfg):
    """The base map f described by [system]; suspension kinds also return
    the flow: (f, flow_or_None)."""
    sys_cfg = cfg["system"]
    kind = sys_cfg["kind"]
    if kind == "linear":
        return make_linear_ph(sys_cfg["matrix"]), None
    if kind == "skew_product":
        if sys_cfg["fiber"] == "constant":
            fiber = sys_cfg["fiber_shift"]
        else:
            trig_kind = "cos" if sys_cfg["fiber"] == "cos_wave" else "sin"
            fiber = trig_scalar(2, sys_cfg["fiber_amplitude"],
                                sys_cfg["fiber_axis"],
                                frequency=sys_cfg["fiber_frequency"],
                                kind=trig_kind)
        return make_skew_product(sys_cfg["matrix"], fiber), None
    flow = suspension_flow(sys_cfg["matrix"])
    return time_t_map(flow, sys_cfg["time"]), flow


def build_pair(cfg):
    """(f, g, flow) for conjugacy experiments: g is the configured system
    with [perturbation] applied (fiber_shift adds to the fiber rotation;
    trig_vector is an analytic perturbation; none leaves it alone).  For
    suspension systems f is the time-1 map and g the configured time-t
    map, so 'time' states g's reparametrization."""
    g0, flow = build_system(cfg)
    f = time_t_map(flow, 1.0) if flow is not None else g0
    pert = cfg["perturbation"]
    if pert["kind"] == "none":
        return f, g0, flow
    if pert["kind"] == "fiber_shift":
        sys_cfg = cfg["system"]
        if sys_cfg["fiber"] == "constant":
            fiber = sys_cfg["fiber_shift"] + pert["amplitude"]
        else:
            raise ConfigError(
                "fiber_shift perturbation needs a constant fiber")
        return f, make_skew_product(sys_cfg["matrix"], fiber), flow
    comp = pert["component"]
    if comp is None:
        comp = g0.dim - 1
    field = trig_vector(g0.dim, comp, pert["axis"],
                        frequency=pert["frequency"])
    return f, make_perturbed(g0, field, pert["amplitude"]), flow


def system_id(cfg):
    """Short identifier used in result rows; [system] id wins if given."""
    sys_cfg = cfg["system"]
    if sys_cfg["id"]:
        return sys_cfg["id"]
    kind = sys_cfg["kind"]
    if kind == "suspension_time1":
        return f"suspension_t{sys_cfg['time']:g}"
    pert = cfg["perturbation"]
    if pert["kind"] != "none":
        return f"{kind}+{pert['kind']}{pert['amplitude']:g}"
    return kind


def expected_growth_rate(matrix):
    """log of the spectral radius; the volume-growth oracle for a linear
    base."""
    return float(math.log(max(abs(v) for v in np.linalg.eigvals(
        np.asarray(matrix, dtype=np.float64)))))
