"""Plain-text experiment configuration.

One ``key = value`` per line, ``#`` starts a comment. Scalars are numbers or
bare words; lists and matrices are bracketed, row-major::

    system = marginally_stable
    H = 2
    horizons = [2, 4, 6, 8, 10, 12]
    systems = [marginally_stable, stable]
    seeds = 20              # a count, or an explicit list like [0, 3, 7]
    A = [[1, 0.5, 0], [0, 1, 0.5], [0, 0, 0.9]]
"""

import json
import re
from dataclasses import fields, replace

import numpy as np

from hop.harness import ExperimentConfig
from hop.lin_core import is_positive_definite
from hop.system_sim import PRESETS, LtiSystem

MATRIX_KEYS = ("A", "B", "C", "Q", "R")
INT_KEYS = {"H", "T_init", "N_E", "kappa"}
FLOAT_KEYS = {"beta", "lam"}
LIST_KEYS = {"horizons", "systems", "seeds"}
KNOWN = {"system"} | INT_KEYS | FLOAT_KEYS | LIST_KEYS | set(MATRIX_KEYS)

_WORD = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None, source="<config>"):
        self.line = line
        self.key = key
        self.source = source
        where = source if line is None else f"{source}:{line}"
        label = f" [{key}]" if key else ""
        super().__init__(f"{where}:{label} {message}")


def _parse_value(raw):
    raw = raw.strip()
    if raw.startswith("["):
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            inner = raw.strip("[]").strip()
            items = [w.strip() for w in inner.split(",") if w.strip()]
            if all(_WORD.match(w) for w in items):
                return items
            raise
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if _WORD.match(raw):
            return raw
        raise


def parse_text(text, source="<config>"):
    """Parse config text into an :class:`ExperimentConfig`."""
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", lineno, source=source)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KNOWN:
            raise ConfigError(f"unknown key {key!r}", lineno, key, source)
        if key in values:
            raise ConfigError("duplicate key", lineno, key, source)
        try:
            values[key] = _parse_value(raw)
        except (json.JSONDecodeError, ValueError):
            raise ConfigError(f"cannot parse value {raw!r}", lineno, key, source) from None
        lines[key] = lineno
    return _build(values, lines, source)


def load(path):
    with open(path) as fh:
        return parse_text(fh.read(), source=str(path))


def _build(values, lines, source):
    def fail(key, msg):
        raise ConfigError(msg, lines.get(key), key, source)

    kw = {}
    for key in INT_KEYS & values.keys():
        v = values[key]
        if isinstance(v, bool) or not isinstance(v, int):
            fail(key, "must be an integer")
        kw[key] = v
    for key in FLOAT_KEYS & values.keys():
        v = values[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            fail(key, "must be a number")
        kw[key] = float(v)
    for key in ("H", "T_init", "N_E"):
        if key in kw and kw[key] < 1:
            fail(key, "must be >= 1")
    for key in ("beta", "lam"):
        if key in kw and kw[key] <= 0:
            fail(key, "must be positive")
    if "kappa" in kw and kw["kappa"] < 0:
        fail("kappa", "must be >= 0")

    if "seeds" in values:
        s = values["seeds"]
        if isinstance(s, int) and not isinstance(s, bool):
            if s < 1:
                fail("seeds", "count must be >= 1")
            kw["seeds"] = tuple(range(s))
        elif isinstance(s, list) and s and all(isinstance(x, int) and x >= 0 for x in s):
            kw["seeds"] = tuple(s)
        else:
            fail("seeds", "must be a positive count or a nonempty list of nonnegative integers")
    if "horizons" in values:
        h = values["horizons"]
        if not (isinstance(h, list) and h and all(isinstance(x, int) and x >= 1 for x in h)):
            fail("horizons", "must be a nonempty list of positive integers")
        kw["horizons"] = tuple(h)
    if "systems" in values:
        names = values["systems"]
        if isinstance(names, str):
            names = [names]
        if not (isinstance(names, list) and names and all(isinstance(x, str) for x in names)):
            fail("systems", "must be a list of system names")
        for name in names:
            if name not in PRESETS and name != "custom":
                fail("systems", f"unknown system {name!r}")
        kw["systems"] = tuple(names)

    system = values.get("system", "marginally_stable")
    if not isinstance(system, str) or (system not in PRESETS and system != "custom"):
        fail("system", f"unknown system {system!r}")
    kw["system"] = system

    given = [k for k in MATRIX_KEYS if k in values]
    if given or system == "custom":
        kw["custom"] = _matrices(values, system, given, fail)
        kw["system"] = "custom"

    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), source=source) from None


def _matrices(values, system, given, fail):
    if system == "custom":
        missing = [k for k in MATRIX_KEYS if k not in values]
        if missing:
            fail(missing[0], "custom system requires all of A, B, C, Q, R")
        base = {}
    else:
        preset = PRESETS[system]()
        base = {k: getattr(preset, k).tolist() for k in MATRIX_KEYS}
    mats = dict(base)
    for key in given:
        try:
            M = np.atleast_2d(np.asarray(values[key], dtype=float))
        except (TypeError, ValueError):
            fail(key, "must be a bracketed numeric matrix")
        if M.ndim != 2 or not np.all(np.isfinite(M)):
            fail(key, "must be a finite 2-D matrix")
        mats[key] = M.tolist()
    for key in ("Q", "R"):
        if not is_positive_definite(np.atleast_2d(np.asarray(mats[key], dtype=float))):
            fail(key, "must be symmetric positive definite")
    try:
        LtiSystem(**{k: mats[k] for k in MATRIX_KEYS})
    except ValueError as exc:
        bad = next((k for k in MATRIX_KEYS if f"{k} must" in str(exc)), given[0] if given else "A")
        fail(bad, str(exc))
    return mats


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def to_text(cfg):
    """Serialise ``cfg`` so that ``parse_text(to_text(cfg)) == cfg``."""
    out = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if f.name == "custom":
            continue
        if f.name in ("horizons", "systems") and not v:
            continue
        if f.name == "kappa" and v is None:
            continue
        out.append(f"{f.name} = {_fmt(list(v) if isinstance(v, tuple) else v)}")
    if cfg.custom:
        for k in MATRIX_KEYS:
            out.append(f"{k} = {_fmt([[float(x) for x in row] for row in cfg.custom[k]])}")
    return "\n".join(out) + "\n"


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
