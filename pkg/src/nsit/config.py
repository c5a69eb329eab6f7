"""Run configuration: INI parsing, validation and canonical serialization.

A config is an INI document with the sections ``[task]``, ``[params]``,
``[polarization]``, ``[env]``, ``[grid]``, ``[sweep]``, ``[integrator]`` and
``[output]``.  Every section and key is optional except where the task needs
it; unknown sections or keys are rejected.  Example::

    [task]
    name = sweep
    mode = exact

    [params]
    gamma_e = 1e3
    omega_c_rabi = 0.1

    [sweep]
    variable = J
    values = 1e-7, 5e-7, 1e-6
    kind = NSIA
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .analysis import MODES, SWEEP_VARS, FeatureKind
from .core import SystemParams
from .doppler import DopplerEnv
from .dynamics import PolarizationState, TrajectoryConfig
from .errors import InvalidParameters, ParseError, ValidationError

__all__ = ["RunConfig", "TASKS", "parse_config", "load_config", "to_text", "format_float"]

TASKS = ("spectrum", "sweep", "phase", "slopes", "oracle-check", "doppler-compare")
FORMATS = ("csv", "json")

_PARAM_KEYS = tuple(f.name for f in fields(SystemParams))
_POL_KEYS = ("p_a", "p_b", "j_full")
_ENV_KEYS = ("temperature", "atomic_mass", "omega_p_abs", "omega_c_abs")
_TASK_KEYS = ("name", "mode", "delta_e")
_GRID_KEYS = ("lo", "hi", "n_coarse", "n_feature", "span", "quad_order")
_SWEEP_KEYS = ("variable", "values", "range", "spacing", "kind")
_INTEGRATOR_KEYS = ("method", "tol_rel", "steady_eps", "max_steps", "substeps")
_OUTPUT_KEYS = ("stem", "format", "normalized")

_SCHEMA = {
    "task": _TASK_KEYS,
    "params": _PARAM_KEYS,
    "polarization": _POL_KEYS,
    "env": _ENV_KEYS,
    "grid": _GRID_KEYS,
    "sweep": _SWEEP_KEYS,
    "integrator": _INTEGRATOR_KEYS,
    "output": _OUTPUT_KEYS,
}


def format_float(x) -> str:
    """17 significant digits: enough for an exact double round-trip."""
    return format(float(x), ".17g")


def _format_complex(z) -> str:
    z = complex(z)
    if z.imag == 0:
        return format_float(z.real)
    return f"({format_float(z.real)}{'+' if z.imag >= 0 else '-'}{format_float(abs(z.imag))}j)"


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams = field(default_factory=SystemParams)
    task: str = "spectrum"
    mode: str = "exact"
    pol: PolarizationState | None = None
    env: DopplerEnv | None = None
    window: tuple | None = None
    n_coarse: int = 2001
    n_feature: int = 400
    span: float = 30.0
    quad_order: int = 64
    sweep_var: str | None = None
    sweep_values: tuple = ()
    feature_kind: str | None = None
    delta_e: tuple = ()
    integrator: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    output_stem: str | None = None
    format: str = "csv"
    normalized: bool = True

    @property
    def stem(self) -> str:
        return self.output_stem or self.task.replace("-", "_")


class _Doc:
    """configparser wrapper that remembers the line of every key."""

    _SECTION = re.compile(r"^\s*\[([^\]]+)\]")
    _KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")

    def __init__(self, text: str):
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        self.cp.optionxform = str
        try:
            self.cp.read_string(text)
        except configparser.MissingSectionHeaderError as exc:
            raise ParseError("key outside any section", line=exc.lineno) from None
        except configparser.DuplicateSectionError as exc:
            raise ParseError(f"duplicate section [{exc.section}]", line=exc.lineno) from None
        except configparser.DuplicateOptionError as exc:
            raise ParseError(f"duplicate key in [{exc.section}]", line=exc.lineno, key=exc.option) from None
        except configparser.ParsingError as exc:
            lineno = exc.errors[0][0] if exc.errors else None
            raise ParseError("malformed line", line=lineno) from None
        self.lines = {}
        section = None
        for i, raw in enumerate(text.splitlines(), start=1):
            m = self._SECTION.match(raw)
            if m:
                section = m.group(1).strip()
                self.lines[(section, None)] = i
                continue
            m = self._KEY.match(raw)
            if m and section is not None and not raw[:1].isspace():
                self.lines[(section, m.group(1).strip())] = i

    def check_schema(self):
        for section in self.cp.sections():
            if section not in _SCHEMA:
                raise ParseError(f"unknown section [{section}]", line=self.lines.get((section, None)))
            for key in self.cp[section]:
                if key not in _SCHEMA[section]:
                    raise ParseError(f"unknown key in [{section}]", line=self.lines.get((section, key)), key=key)

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def raw(self, section, key):
        return self.cp.get(section, key).strip()

    def get(self, section, key, conv, default=None):
        if not self.has(section, key):
            return default
        text = self.raw(section, key)
        try:
            return conv(text)
        except (ValueError, TypeError) as exc:
            raise ParseError(f"cannot parse {text!r}: {exc}", line=self.lines.get((section, key)), key=key) from None


def _float(text):
    v = float(text)
    return v


def _int(text):
    f = float(text)
    if not f.is_integer():
        raise ValueError("expected an integer")
    return int(f)


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _complex(text):
    return complex(text.replace(" ", ""))


def _floats(text):
    parts = [p for p in re.split(r"[,\s]+", text) if p]
    if not parts:
        raise ValueError("expected at least one number")
    return tuple(float(p) for p in parts)


def _expand_range(rng, spacing):
    if len(rng) != 3:
        raise ValueError("range takes lo, hi, n")
    lo, hi, n = rng
    if not float(n).is_integer() or n < 1:
        raise ValueError("range count must be a positive integer")
    n = int(n)
    if spacing == "log":
        if lo <= 0 or hi <= 0:
            raise ValueError("log range needs positive bounds")
        return tuple(np.geomspace(lo, hi, n).tolist())
    return tuple(np.linspace(lo, hi, n).tolist())


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config document.

    Raises :class:`ParseError` for syntax problems, unknown keys and
    unparseable values, and :class:`ValidationError` listing every violated
    constraint otherwise.
    """
    doc = _Doc(text)
    doc.check_schema()
    problems = []

    values = {}
    for key in _PARAM_KEYS:
        conv = _complex if key in ("omega_c_rabi", "omega_p_rabi") else _float
        v = doc.get("params", key, conv)
        if v is not None:
            values[key] = v
    params = SystemParams()
    try:
        params = SystemParams(**values)
    except InvalidParameters as exc:
        problems.extend(f"params: {p}" for p in exc.problems)

    pol = None
    if doc.cp.has_section("polarization"):
        kw = {k: doc.get("polarization", k, _float) for k in _POL_KEYS if doc.has("polarization", k)}
        try:
            pol = PolarizationState(**kw)
        except InvalidParameters as exc:
            problems.extend(f"polarization: {p}" for p in exc.problems)

    env = None
    if doc.cp.has_section("env"):
        kw = {k: doc.get("env", k, _float) for k in _ENV_KEYS if doc.has("env", k)}
        try:
            env = DopplerEnv(**kw)
        except InvalidParameters as exc:
            problems.extend(f"env: {p}" for p in exc.problems)

    task = doc.get("task", "name", str, "spectrum")
    if task not in TASKS:
        problems.append(f"task: name must be one of {', '.join(TASKS)} (got {task!r})")
    mode = doc.get("task", "mode", str, "exact")
    if mode not in MODES:
        problems.append(f"task: mode must be one of {', '.join(MODES)} (got {mode!r})")
    delta_e = doc.get("task", "delta_e", _floats, ())

    lo = doc.get("grid", "lo", _float)
    hi = doc.get("grid", "hi", _float)
    window = None
    if (lo is None) != (hi is None):
        problems.append("grid: lo and hi must be given together")
    elif lo is not None:
        window = (lo, hi)
        if not lo < hi:
            problems.append(f"grid: lo must be below hi (got {lo!r}, {hi!r})")
    n_coarse = doc.get("grid", "n_coarse", _int, 2001)
    n_feature = doc.get("grid", "n_feature", _int, 400)
    span = doc.get("grid", "span", _float, 30.0)
    quad_order = doc.get("grid", "quad_order", _int, 64)
    if n_coarse < 2:
        problems.append("grid: n_coarse must be >= 2")
    if n_feature < 200:
        problems.append("grid: n_feature must be >= 200")
    if not span > 0:
        problems.append("grid: span must be > 0")
    if quad_order < 8:
        problems.append("grid: quad_order must be >= 8")

    sweep_var = doc.get("sweep", "variable", str)
    spacing = doc.get("sweep", "spacing", str, "linear")
    if spacing not in ("linear", "log"):
        problems.append(f"sweep: spacing must be linear or log (got {spacing!r})")
    sweep_values = doc.get("sweep", "values", _floats, ())
    if doc.has("sweep", "range"):
        if sweep_values:
            problems.append("sweep: give either values or range, not both")
        else:
            try:
                sweep_values = _expand_range(doc.get("sweep", "range", _floats), spacing)
            except ValueError as exc:
                problems.append(f"sweep: {exc}")
    kind = doc.get("sweep", "kind", str)
    if kind is not None:
        try:
            kind = FeatureKind.parse(kind).value
        except ValueError as exc:
            problems.append(f"sweep: {exc}")
    if sweep_var is not None and sweep_var not in SWEEP_VARS:
        problems.append(f"sweep: variable must be one of {', '.join(SWEEP_VARS)} (got {sweep_var!r})")

    if task == "sweep":
        if sweep_var is None or not sweep_values:
            problems.append("sweep task requires [sweep] variable and values (or range)")
    if task in ("phase", "slopes") and sweep_var not in (None, "b_tilde"):
        problems.append(f"{task} task only sweeps b_tilde (got {sweep_var!r})")
    if task == "doppler-compare" and env is None:
        problems.append("doppler-compare task requires an [env] section")
    if mode == "doppler" and env is None:
        problems.append("doppler mode requires an [env] section")

    integ = TrajectoryConfig()
    kw = {}
    for key, conv in (("method", str), ("tol_rel", _float), ("steady_eps", _float),
                      ("max_steps", _int), ("substeps", _int)):
        v = doc.get("integrator", key, conv)
        if v is not None:
            kw[key] = v
    try:
        integ = TrajectoryConfig(**kw)
    except InvalidParameters as exc:
        problems.extend(f"integrator: {p}" for p in exc.problems)

    stem = doc.get("output", "stem", str)
    if stem is not None and not re.fullmatch(r"[A-Za-z0-9_.-]+", stem):
        problems.append(f"output: stem may only contain letters, digits, '_', '.' and '-' (got {stem!r})")
    fmt = doc.get("output", "format", str, "csv")
    if fmt not in FORMATS:
        problems.append(f"output: format must be csv or json (got {fmt!r})")
    normalized = doc.get("output", "normalized", _bool, True)

    for name, seq in (("sweep values", sweep_values), ("delta_e", delta_e)):
        if any(not math.isfinite(v) for v in seq):
            problems.append(f"{name} must be finite")

    if problems:
        raise ValidationError(problems)

    return RunConfig(
        params=params, task=task, mode=mode, pol=pol, env=env, window=window,
        n_coarse=n_coarse, n_feature=n_feature, span=span, quad_order=quad_order,
        sweep_var=sweep_var, sweep_values=tuple(sweep_values), feature_kind=kind,
        delta_e=tuple(delta_e), integrator=integ, output_stem=stem, format=fmt, normalized=normalized,
    )


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def to_text(cfg: RunConfig) -> str:
    """Canonical INI text with every field resolved; ``parse_config`` inverts it."""
    out = ["[task]", f"name = {cfg.task}", f"mode = {cfg.mode}"]
    if cfg.delta_e:
        out.append("delta_e = " + ", ".join(format_float(v) for v in cfg.delta_e))
    out += ["", "[params]"]
    for key in _PARAM_KEYS:
        v = getattr(cfg.params, key)
        out.append(f"{key} = {_format_complex(v) if isinstance(v, complex) else format_float(v)}")
    if cfg.pol is not None:
        out += ["", "[polarization]", f"p_a = {format_float(cfg.pol.p_a)}", f"p_b = {format_float(cfg.pol.p_b)}"]
        if cfg.pol.j_full is not None:
            out.append(f"j_full = {format_float(cfg.pol.j_full)}")
    if cfg.env is not None:
        out += ["", "[env]"] + [f"{k} = {format_float(getattr(cfg.env, k))}" for k in _ENV_KEYS]
    out += ["", "[grid]"]
    if cfg.window is not None:
        out += [f"lo = {format_float(cfg.window[0])}", f"hi = {format_float(cfg.window[1])}"]
    out += [
        f"n_coarse = {cfg.n_coarse}", f"n_feature = {cfg.n_feature}",
        f"span = {format_float(cfg.span)}", f"quad_order = {cfg.quad_order}",
    ]
    if cfg.sweep_var is not None or cfg.sweep_values or cfg.feature_kind is not None:
        out += ["", "[sweep]"]
        if cfg.sweep_var is not None:
            out.append(f"variable = {cfg.sweep_var}")
        if cfg.sweep_values:
            out.append("values = " + ", ".join(format_float(v) for v in cfg.sweep_values))
        if cfg.feature_kind is not None:
            out.append(f"kind = {cfg.feature_kind}")
    it = cfg.integrator
    out += [
        "", "[integrator]", f"method = {it.method}", f"tol_rel = {format_float(it.tol_rel)}",
        f"steady_eps = {format_float(it.steady_eps)}", f"max_steps = {it.max_steps}", f"substeps = {it.substeps}",
    ]
    out += ["", "[output]"]
    if cfg.output_stem is not None:
        out.append(f"stem = {cfg.output_stem}")
    out += [f"format = {cfg.format}", f"normalized = {'true' if cfg.normalized else 'false'}"]
    return "\n".join(out) + "\n"
