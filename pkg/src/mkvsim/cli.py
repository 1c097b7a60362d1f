"""Command-line front end: ``mkvsim <command> --config run.json --key value ...``.

Every leaf key of the JSON config can be overridden with ``--key value``;
nested model parameters use dotted keys (``--params.sigma 0.3``). Values are
read as JSON when possible, otherwise as plain strings.

Exit codes: 0 ok, 2 bad configuration, 3 explosion, 4 Picard iteration not
converged, 5 I/O failure.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import subprocess
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import BUILTIN_MODELS, ConfigError, builtin_model, default_params, validate_assumptions
from .experiments import (
    chaos_experiment,
    model1_oracle,
    moment_curve,
    strong_order_experiment,
)
from .noise import NoisePlan
from .scheme import SCHEMES, ExplosionError, SimConfig, picard_iterate, simulate_interacting

__all__ = ["RunConfig", "COMMANDS", "COLUMNS", "parse_config", "run", "main"]

COMMANDS = ("simulate", "chaos", "order", "moments", "picard", "check", "oracle-compare")

COLUMNS = {
    "simulate": ("t", "mean", "second_moment", "w2_to_dirac0", "min", "max"),
    "chaos": ("parameter", "error", "stderr"),
    "order": ("parameter", "error", "stderr"),
    "moments": ("t", "p", "estimate", "bound_shape_value"),
    "picard": ("iteration", "distance"),
    "check": ("assumption", "status", "lhs", "rhs", "witness"),
    "oracle-compare": ("t", "oracle_mean", "empirical_mean", "oracle_var", "empirical_var"),
}

EXIT_OK, EXIT_CONFIG, EXIT_EXPLOSION, EXIT_NOT_CONVERGED, EXIT_IO = 0, 2, 3, 4, 5

MANIFEST_TAG = "mkvsim_manifest"


# ---------------------------------------------------------------------------
# key table


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _choice(options):
    def check(v):
        if not isinstance(v, str):
            return "expected a string"
        if v not in options:
            return f"must be one of {', '.join(options)}"
    return check


def _int(lo):
    def check(v):
        if not _is_int(v):
            return "expected an integer"
        if v < lo:
            return f"must be >= {lo}"
    return check


def _positive(v):
    if not _is_num(v):
        return "expected a number"
    if v <= 0:
        return "must be > 0"


def _unit_open(v):
    if not _is_num(v):
        return "expected a number"
    if not 0 < v < 1:
        return "must lie in the open range (0,1)"


def _optional(check):
    def wrapped(v):
        return None if v is None else check(v)
    return wrapped


def _list_of(check, min_len=1):
    def wrapped(v):
        if not isinstance(v, list) or len(v) < min_len:
            return f"expected a list of at least {min_len} values"
        for item in v:
            msg = check(item)
            if msg:
                return f"element {item!r}: {msg}"
    return wrapped


def _x0(v):
    if v is None or _is_num(v):
        return None
    if isinstance(v, list) and v and all(_is_num(a) for a in v):
        return None
    return "expected a number or a list of numbers"


def _p(v):
    vals = v if isinstance(v, list) else [v]
    if not vals:
        return "expected at least one order"
    for a in vals:
        if not _is_num(a):
            return "expected a number or a list of numbers"
        if a < 2:
            return "moment order must be >= 2"


def _obj(v):
    if not isinstance(v, dict):
        return "expected a JSON object"


def _str(v):
    if not isinstance(v, str) or not v:
        return "expected a non-empty string"


_KEYS = {
    "command": _choice(COMMANDS),
    "model": _choice(BUILTIN_MODELS),
    "params": _obj,
    "N": _int(1),
    "T": _positive,
    "delta": _unit_open,
    "h0": _positive,
    "scheme": _choice(SCHEMES),
    "record_stride": _int(1),
    "root_step": _optional(_positive),
    "x0": _x0,
    "seed": _int(0),
    "workers": _int(1),
    "out": _str,
    "format": _choice(("csv", "json")),
    "N_list": _list_of(_int(2), 2),
    "N_ref": _optional(_int(2)),
    "delta_list": _list_of(_unit_open, 2),
    "ref_factor": _int(4),
    "n_outer": _int(1),
    "reference": _choice(("auto", "oracle", "particles")),
    "p": _p,
    "max_iter": _int(1),
    "tol": _positive,
    "n_trials": _int(1),
    "radius": _positive,
    "constants": _obj,
}

_REQUIRED = ("command", "model")


def _default_workers() -> int:
    env = os.environ.get("MKV_SIM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("workers", f"MKV_SIM_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("workers", "MKV_SIM_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _defaults(command: str) -> dict:
    return {
        "params": {},
        "N": 1000,
        "T": 1.0,
        "delta": 0.01,
        "h0": 1.0,
        "scheme": "tamed_adaptive",
        "record_stride": 1,
        "root_step": None,
        "x0": None,
        "seed": 42,
        "workers": _default_workers(),
        "out": f"{command}.csv",
        "format": "csv",
        "N_list": [64, 256, 1024, 4096],
        "N_ref": None,
        "delta_list": [0.1, 0.05, 0.025, 0.0125],
        "ref_factor": 32,
        "n_outer": 1,
        "reference": "auto",
        "p": 2,
        "max_iter": 20,
        "tol": 1e-10,
        "n_trials": 1000,
        "radius": 10.0,
        "constants": {},
    }


@dataclass
class RunConfig:
    """Validated, fully resolved run description."""

    command: str
    model: str
    params: dict
    sim: SimConfig
    seed: int
    workers: int
    out: str
    format: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Flat config that :func:`parse_config` maps back to this object."""
        d = {
            "command": self.command,
            "model": self.model,
            "params": dict(self.params),
            "N": self.sim.n_particles,
            "T": self.sim.horizon,
            "delta": self.sim.delta,
            "h0": self.sim.h0,
            "scheme": self.sim.scheme,
            "record_stride": self.sim.record_stride,
            "root_step": self.sim.root_step,
            "x0": list(self.sim.x0) if self.sim.x0 is not None else None,
            "seed": self.seed,
            "workers": self.workers,
            "out": self.out,
            "format": self.format,
        }
        d.update(self.options)
        return d


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(cfg: dict, key: str, value) -> None:
    head, _, rest = key.partition(".")
    if not rest:
        cfg[key] = value
        return
    if head not in ("params", "constants"):
        raise ConfigError(key, "only params.* and constants.* take dotted keys")
    sub = cfg.setdefault(head, {})
    if not isinstance(sub, dict):
        raise ConfigError(head, "expected a JSON object")
    sub[rest] = value


def parse_config(data: bytes | str | dict | None = None, overrides=()) -> RunConfig:
    """Merge a JSON config with ``--key value`` overrides and validate it.

    ``data`` may also be a manifest written by :func:`run`, in which case its
    resolved config is used. ``overrides`` is a sequence of ``(key, value)``
    pairs with already-parsed values; they win over file values.
    """
    if data is None:
        raw = {}
    elif isinstance(data, dict):
        raw = json.loads(json.dumps(data))
    else:
        try:
            raw = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError("config", f"not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    if MANIFEST_TAG in raw:
        raw = raw.get("config")
        if not isinstance(raw, dict):
            raise ConfigError("config", "manifest has no config object")
    for key, value in overrides:
        _apply_override(raw, key, value)

    for key, value in raw.items():
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        msg = _KEYS[key](value)
        if msg:
            raise ConfigError(key, msg)
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(key, "missing required key")

    command = raw["command"]
    merged = _defaults(command)
    merged.update(raw)
    model_name = merged["model"]
    params = default_params(model_name)
    params.update(merged["params"])
    builtin_model(model_name, params)  # raises ConfigError on bad params

    sim = SimConfig(
        n_particles=merged["N"],
        horizon=float(merged["T"]),
        delta=float(merged["delta"]),
        h0=float(merged["h0"]),
        scheme=merged["scheme"],
        record_stride=merged["record_stride"],
        x0=merged["x0"],
        root_step=merged["root_step"],
    )
    base = ("command", "model", "params", "N", "T", "delta", "h0", "scheme", "record_stride",
            "root_step", "x0", "seed", "workers", "out", "format")
    options = {k: v for k, v in merged.items() if k not in base}
    if options["N_ref"] is None:
        options["N_ref"] = 16 * max(options["N_list"])
    return RunConfig(
        command=command,
        model=model_name,
        params=params,
        sim=sim,
        seed=merged["seed"],
        workers=merged["workers"],
        out=merged["out"],
        format=merged["format"],
        options=options,
    )


# ---------------------------------------------------------------------------
# dispatch


def _version() -> str:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+g{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def _render(columns, rows, fmt: str) -> str:
    if fmt == "json":
        records = [dict(zip(columns, _clean(list(r)))) for r in rows]
        return json.dumps(records, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def _model(cfg: RunConfig):
    model = builtin_model(cfg.model, cfg.params)
    overrides = cfg.options.get("constants") or {}
    if overrides:
        fields = set(asdict(model.constants))
        for key in overrides:
            if key not in fields:
                raise ConfigError(f"constants.{key}", "unknown model constant")
        model = replace(model, constants=replace(model.constants, **overrides))
    return model


def _simulate_rows(traj):
    rows = []
    for t, x in zip(traj.times, traj.positions):
        col = x[:, 0]
        sq = np.einsum("ij,ij->i", x, x)
        second = float(np.sum(sq) / sq.shape[0])
        rows.append((float(t), float(np.sum(col) / col.shape[0]), second, math.sqrt(second),
                     float(col.min()), float(col.max())))
    return rows


def _execute(cfg: RunConfig):
    """Return (rows, results dict, exit code)."""
    model = _model(cfg)
    opts = cfg.options
    plan = NoisePlan(cfg.seed, cfg.sim.n_particles, model.dim)
    cmd = cfg.command

    if cmd == "simulate":
        traj = simulate_interacting(cfg.sim, model, plan, cfg.workers)
        return _simulate_rows(traj), {"n_steps": traj.n_steps, "min_dt": traj.min_dt,
                                      "max_dt": traj.max_dt, "step_rule": traj.step_rule}, EXIT_OK

    if cmd == "moments":
        traj = simulate_interacting(cfg.sim, model, plan, cfg.workers)
        orders = opts["p"] if isinstance(opts["p"], list) else [opts["p"]]
        rows, cps = [], {}
        for p in orders:
            try:
                curve = moment_curve(traj, p, model)
            except ValueError as exc:
                raise ConfigError("p", str(exc)) from None
            rows.extend(curve.rows())
            cps[repr(float(p))] = curve.c_p
        return rows, {"c_p": cps, "gamma": model.constants.gamma}, EXIT_OK

    if cmd in ("chaos", "order"):
        if cmd == "chaos":
            fit = chaos_experiment(model, opts["N_list"], opts["N_ref"], cfg.sim, plan,
                                   n_outer=opts["n_outer"], workers=cfg.workers,
                                   reference=opts["reference"])
            params = fit.meta["N"]
        else:
            fit = strong_order_experiment(model, opts["delta_list"], cfg.sim, plan,
                                          ref_factor=opts["ref_factor"], n_outer=opts["n_outer"],
                                          workers=cfg.workers)
            params = [p for p, _ in fit.points]
        rows = [(p, e, s) for p, (_, e), s in zip(params, fit.points, fit.meta["stderr"])]
        results = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
                   "fit_abscissa": "phi(N)" if cmd == "chaos" else "delta"}
        results.update({k: v for k, v in fit.meta.items() if k != "stderr"})
        return rows, results, EXIT_OK

    if cmd == "picard":
        _, diag = picard_iterate(cfg.sim, model, plan, opts["max_iter"], opts["tol"], cfg.workers)
        rows = [(k + 1, d) for k, d in enumerate(diag.distances)]
        code = EXIT_OK if diag.converged else EXIT_NOT_CONVERGED
        return rows, {"status": diag.status, "iterations": diag.iterations}, code

    if cmd == "check":
        report = validate_assumptions(model, n_trials=opts["n_trials"], radius=opts["radius"], seed=cfg.seed)
        rows = [(r["assumption"], r["status"], r["lhs"], r["rhs"],
                 json.dumps(r["witness"], sort_keys=True) if r["witness"] else "")
                for r in report.rows()]
        return rows, {"violated": report.violated}, EXIT_OK

    if cmd == "oracle-compare":
        if cfg.model != "model1_lq":
            raise ConfigError("model", "oracle-compare needs model1_lq")
        traj = simulate_interacting(cfg.sim, model, plan, cfg.workers)
        oracle = model1_oracle(model, traj.common_times, traj.common_path)
        idx = np.searchsorted(traj.common_times, traj.times - 1e-9 * cfg.sim.root)
        rows = []
        for k, x in enumerate(traj.positions):
            col = x[:, 0]
            mean = float(np.sum(col) / col.shape[0])
            var = float(np.sum((col - mean) ** 2) / col.shape[0])
            rows.append((float(traj.times[k]), float(oracle.m[idx[k]]), mean, float(oracle.v[idx[k]]), var))
        return rows, {}, EXIT_OK

    raise ConfigError("command", f"unknown command {cmd!r}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run(config: RunConfig, stderr=None) -> int:
    """Execute ``config``; write the data file and its manifest. Returns the exit code."""
    stderr = stderr or sys.stderr
    try:
        rows, results, code = _execute(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    except ExplosionError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_EXPLOSION
    out = Path(config.out)
    manifest = {
        MANIFEST_TAG: 1,
        "version": _version(),
        "seed": config.seed,
        "command": config.command,
        "data_file": out.name,
        "columns": list(COLUMNS[config.command]),
        "config": config.to_dict(),
        "results": results,
    }
    try:
        if out.parent and not out.parent.exists():
            out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(_render(COLUMNS[config.command], rows, config.format), encoding="utf-8", newline="\n")
        _manifest_path(out).write_text(
            json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=stderr)
        return EXIT_IO
    if code == EXIT_NOT_CONVERGED:
        print("warning: picard iteration not converged", file=stderr)
    return code


USAGE = """usage: mkvsim [COMMAND] [--config PATH] [--KEY VALUE ...]

commands: {cmds}
common keys: model, params.<name>, N, T, delta, h0, scheme, record_stride,
             seed, workers, out, format
""".format(cmds=", ".join(COMMANDS))


def _split_args(argv):
    """Split argv into (config path, overrides). Values may start with '-'."""
    config_path = None
    overrides = []
    args = list(argv)
    if args and not args[0].startswith("-"):
        overrides.append(("command", args.pop(0)))
    i = 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(tok, "expected --key value")
        if i + 1 >= len(args):
            raise ConfigError(tok[2:], "missing value")
        key, value = tok[2:], args[i + 1]
        if key == "config":
            config_path = value
        else:
            overrides.append((key, _parse_value(value) if key not in ("out", "command", "model") else value))
        i += 2
    return config_path, overrides


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if any(a in ("-h", "--help") for a in argv):
        print(USAGE)
        return EXIT_OK
    try:
        config_path, overrides = _split_args(argv)
        data = None
        if config_path is not None:
            try:
                data = Path(config_path).read_bytes()
            except OSError as exc:
                print(f"error: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
        cfg = parse_config(data, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
