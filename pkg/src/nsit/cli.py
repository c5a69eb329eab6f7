"""Command-line front end.

    nsit run <config> [--out DIR] [--format csv|json] [--threads N]
    nsit validate <config>

Exit codes: 0 success, 2 config error, 3 computation error, 4 IO error.
Failures print one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    FeatureKind,
    group_velocity_ratio,
    eit_slope,
    feature_slope,
    measure_feature,
    reference_absorption,
    relative_phase,
    scan_spectrum,
    sweep_feature,
)
from .config import RunConfig, format_float, load_config, parse_config, to_text
from .core import steady_state
from .decomposition import background_width, eit_center, eit_width, nsit_center, nsit_width
from .doppler import doppler_width
from .dynamics import PolarizationState, effective_params, integrate_to_steady_state
from .errors import ConfigError, NsitError

__all__ = ["main", "run", "TaskResult", "config_from_output", "dumps"]

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 0, 2, 3, 4

_CONFIG_BEGIN = "# config begin"
_CONFIG_END = "# config end"


@dataclasses.dataclass
class TaskResult:
    columns: list
    rows: list
    grid_spec: list = dataclasses.field(default_factory=list)
    summary: dict = dataclasses.field(default_factory=dict)


# ----------------------------------------------------------------------------
# serialization


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v) if math.isfinite(v) else ""
    return str(v)


def dumps(obj) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, complex):
        return dumps({"re": obj.real, "im": obj.imag})
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in sorted(obj.items())) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _metadata(cfg: RunConfig, result: TaskResult) -> dict:
    params = {f.name: getattr(cfg.params, f.name) for f in dataclasses.fields(cfg.params)}
    return {
        "tool": "nsit",
        "version": __version__,
        "task": cfg.task,
        "params": params,
        "grid_spec": result.grid_spec,
        "summary": result.summary,
        "config": to_text(cfg),
    }


def write_output(cfg: RunConfig, result: TaskResult, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = _metadata(cfg, result)
    if cfg.format == "json":
        path = out_dir / f"{cfg.stem}.json"
        doc = {"metadata": meta, "columns": result.columns, "records": [dict(zip(result.columns, r)) for r in result.rows]}
        path.write_text(dumps(doc) + "\n", encoding="utf-8")
        return path
    path = out_dir / f"{cfg.stem}.csv"
    lines = [
        f"# nsit {__version__}",
        f"# task: {cfg.task}",
        f"# grid_spec: {dumps(result.grid_spec)}",
        f"# summary: {dumps(result.summary)}",
        _CONFIG_BEGIN,
    ]
    lines += [f"# {line}".rstrip() for line in meta["config"].splitlines()]
    lines.append(_CONFIG_END)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result.columns)
        writer.writerows([_cell(v) for v in row] for row in result.rows)
    return path


def config_from_output(path) -> RunConfig:
    """Re-parse the metadata block of a CSV or JSON output file."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return parse_config(json.loads(text)["metadata"]["config"])
    block, inside = [], False
    for line in text.splitlines():
        if line == _CONFIG_BEGIN:
            inside = True
        elif line == _CONFIG_END:
            break
        elif inside:
            block.append(line[2:] if line.startswith("# ") else line[1:])
    return parse_config("\n".join(block) + "\n")


# ----------------------------------------------------------------------------
# tasks


def _default_kind(cfg: RunConfig, params) -> FeatureKind:
    if cfg.feature_kind is not None:
        return FeatureKind.parse(cfg.feature_kind)
    return FeatureKind.NSIA if params.b_tilde == 0 else FeatureKind.NSIT


def _b_values(cfg: RunConfig):
    return list(cfg.sweep_values) if cfg.sweep_var == "b_tilde" else [cfg.params.b_tilde]


def _task_spectrum(cfg: RunConfig, params, threads) -> TaskResult:
    window = cfg.window or (-3 * params.gamma_e, 3 * params.gamma_e)
    spec = scan_spectrum(
        params, window, cfg.mode, cfg.normalized, env=cfg.env,
        n_coarse=cfg.n_coarse, n_feature=cfg.n_feature, span=cfg.span, quad_order=cfg.quad_order,
    )
    columns = ["delta_e_gamma0", "absorption_norm", "dispersion_norm"]
    cols = [spec.delta_e, spec.absorption, spec.dispersion]
    if spec.terms is not None:
        for name in ("chi1", "chi2", "chi3"):
            columns += [f"{name}_re", f"{name}_im"]
            cols += [spec.terms[name].real, spec.terms[name].imag]
    rows = [list(r) for r in zip(*(c.tolist() for c in cols))]
    summary = {"normalization": spec.normalization, "n_points": len(spec), "mode": cfg.mode}
    return TaskResult(columns, rows, spec.grid_spec, summary)


def _task_sweep(cfg: RunConfig, params, threads) -> TaskResult:
    kind = _default_kind(cfg, params)
    points = sweep_feature(params, cfg.sweep_var, cfg.sweep_values, kind, mode=cfg.mode, env=cfg.env,
                           threads=threads)
    columns = ["value", "kind", "center_gamma0", "fwhm_gamma0", "fwhm_hz", "amplitude", "baseline", "flags", "error"]
    rows = []
    for pt in points:
        f = pt.feature
        if f is None:
            rows.append([pt.value, kind.value, None, None, None, None, None, "", pt.error])
        else:
            rows.append([pt.value, f.kind.value, f.center, f.fwhm, f.fwhm_hz, f.amplitude, f.baseline,
                         "|".join(f.flags), ""])
    summary = {"variable": cfg.sweep_var, "requested_kind": kind.value,
               "failures": sum(1 for p in points if p.feature is None)}
    return TaskResult(columns, rows, [], summary)


def _task_phase(cfg: RunConfig, params, threads) -> TaskResult:
    rows = []
    for b in _b_values(cfg):
        p = params.replace(b_tilde=b)
        rows.append([b, p.zeeman_k, nsit_center(p), relative_phase(p)])
    return TaskResult(["b_tilde", "zeeman_k_gamma0", "delta_e_gamma0", "phi_rad"], rows)


def _task_slopes(cfg: RunConfig, params, threads) -> TaskResult:
    rows = []
    for b in _b_values(cfg):
        p = params.replace(b_tilde=b)
        s_eit = eit_slope(p, cfg.mode, cfg.env)
        s_feat = feature_slope(p, cfg.mode, cfg.env)
        ratio = group_velocity_ratio(p, cfg.mode, cfg.env) if b != 0 and p.j_exchange > 0 else None
        rows.append([b, p.zeeman_k, s_eit, s_feat, ratio])
    return TaskResult(["b_tilde", "zeeman_k_gamma0", "eit_slope", "feature_slope", "group_velocity_ratio"], rows)


def _task_oracle(cfg: RunConfig, params, threads, pol) -> TaskResult:
    base = cfg.params
    if cfg.delta_e:
        points = list(cfg.delta_e)
    else:
        points = [0.0, nsit_center(params), eit_center(params) + eit_width(params) / 2, background_width(params) / 2]
        if params.j_exchange > 0:
            points.append(nsit_center(params) + nsit_width(params) / 2)
    rows = []
    worst = 0.0
    for d in points:
        exact = steady_state(params, d).as_array()
        num = integrate_to_steady_state(base, pol, cfg.integrator, d)
        arr = num.as_array()
        rel = float(np.max(np.abs(arr - exact) / np.maximum(np.abs(exact), 1e-300)))
        worst = max(worst, rel)
        rows.append([d, rel, num.t_settle])
    print(f"max_rel_deviation = {format_float(worst)}")
    return TaskResult(["delta_e_gamma0", "rel_deviation", "t_settle_gamma0"], rows, [], {"max_rel_deviation": worst})


def _task_doppler(cfg: RunConfig, params, threads) -> TaskResult:
    env = cfg.env
    window = cfg.window or (-params.gamma_e, params.gamma_e)
    norm = reference_absorption(params)
    kw = dict(env=env, norm=norm, n_coarse=cfg.n_coarse, n_feature=cfg.n_feature, span=cfg.span,
              quad_order=cfg.quad_order)
    rest = scan_spectrum(params, window, "exact", True, **kw)
    moving = scan_spectrum(params, window, "doppler", True, **kw)
    rows = [list(r) for r in zip(rest.delta_e.tolist(), rest.absorption.tolist(), moving.absorption.tolist(),
                                 rest.dispersion.tolist(), moving.dispersion.tolist())]
    summary = {"doppler_width_hz": doppler_width(env)}
    if params.j_exchange > 0:
        kind = _default_kind(cfg, params)
        f0 = measure_feature(params, kind, "exact", norm=norm)
        fd = measure_feature(params, kind, "doppler", env, norm=norm)
        summary.update(fwhm_rest_hz=f0.fwhm_hz, fwhm_doppler_hz=fd.fwhm_hz,
                       fwhm_rel_change=abs(fd.fwhm - f0.fwhm) / f0.fwhm)
    print(dumps(summary))
    return TaskResult(
        ["delta_e_gamma0", "absorption_rest", "absorption_doppler", "dispersion_rest", "dispersion_doppler"],
        rows, rest.grid_spec, summary,
    )


def run(cfg: RunConfig, out_dir=".", threads: int | None = None) -> Path:
    """Execute ``cfg`` and write its output file; returns the path written."""
    pol = cfg.pol or PolarizationState()
    params = effective_params(cfg.params, pol)
    if cfg.task == "spectrum":
        result = _task_spectrum(cfg, params, threads)
    elif cfg.task == "sweep":
        result = _task_sweep(cfg, params, threads)
    elif cfg.task == "phase":
        result = _task_phase(cfg, params, threads)
    elif cfg.task == "slopes":
        result = _task_slopes(cfg, params, threads)
    elif cfg.task == "oracle-check":
        result = _task_oracle(cfg, params, threads, pol)
    elif cfg.task == "doppler-compare":
        result = _task_doppler(cfg, params, threads)
    else:  # parse_config rejects this already
        raise ConfigError(f"unknown task {cfg.task!r}")
    return write_output(cfg, result, Path(out_dir))


# ----------------------------------------------------------------------------
# entry point


def _fail(code: int, exc: BaseException, task=None) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if task is not None:
        err["task"] = task
    for attr in ("line", "key", "problems"):
        if getattr(exc, attr, None) is not None:
            err[attr] = getattr(exc, attr)
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("NSIT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"NSIT_THREADS must be an integer (got {env!r})") from None
        if n < 1:
            raise ConfigError("NSIT_THREADS must be >= 1")
        return n
    return None


def _parser():
    ap = argparse.ArgumentParser(prog="nsit", description="NSIT/NSIA susceptibility simulator")
    ap.add_argument("--version", action="version", version=f"nsit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a config and write its output")
    r.add_argument("config")
    r.add_argument("--out", default=".", help="output directory (default: current)")
    r.add_argument("--format", choices=("csv", "json"), help="override the config's output format")
    r.add_argument("--threads", type=int, help="worker threads for sweeps (fallback: NSIT_THREADS)")
    v = sub.add_parser("validate", help="parse a config and print its resolved form")
    v.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)

    if args.command == "validate":
        sys.stdout.write(to_text(cfg))
        return EXIT_OK

    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        threads = _threads(args.threads)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    if args.format:
        cfg = dataclasses.replace(cfg, format=args.format)
    try:
        path = run(cfg, args.out, threads)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc, cfg.task)
    except OSError as exc:
        return _fail(EXIT_IO, exc, cfg.task)
    except (NsitError, ArithmeticError, ValueError) as exc:
        return _fail(EXIT_COMPUTE, exc, cfg.task)
    print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
