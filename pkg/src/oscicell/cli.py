"""Command-line entry point.

    oscicell <command> --config <file> [--set key=value ...] [--out <dir>]
                       [--seed <n>] [--threads <n>]

Commands: linstab-sweep, pde-run, modes-run, lgca-run, repro-fig7, repro-fig11.

The JSON config is merged over per-command defaults; ``--set`` overrides
single entries by dotted path (values parsed as JSON, else taken as
strings).  Unknown keys are rejected.  ``--threads`` falls back to the
OSCICELL_THREADS environment variable.  Every run writes ``manifest.json``
(the fully resolved config) before any data.

Exit status: 0 success, 1 invalid configuration, 2 runtime fault.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, lgca, linstab, modes, pde1d
from .output import write_csv, write_json, write_ndjson, write_ppm
from .params import DimensionlessParams, ModelParams, ParameterError, nondimensionalize

COMMANDS = ("linstab-sweep", "pde-run", "modes-run", "lgca-run", "repro-fig7", "repro-fig11")

FIG8_PARAMS = dict(J0=0.0, Dx=1.0, Dtheta=0.05, rho=1.0, L=10.0, Rbar=1.0, dim=1,
                   sigma_kind="Logistic", Rmax=30.0)
FIG7_POINTS = {"I": [-1.0, -1.0], "II": [0.4, -1.0], "III": [1.0, -1.0], "IV": [-1.0, 1.0],
               "V": [0.05, 1.0], "VI": [0.4, 1.0], "VII": [1.0, 1.0]}
FIG11_POINTS = {"incoherent": [-1.0, -1.0], "global_sync": [-1.0, 1.0],
                "local_sync_clusters": [1.0, 1.0], "aggregated_global_sync": [0.1, 10.0],
                "aggregated_phase_wave": [2.0, -0.1]}

_PDE_RUN = {"grid": {"Nx": 200, "Ntheta": 128}, "T_final": 100.0, "cadence": 1.0,
            "cfl_safety": 0.4, "face_velocity": "mean", "ic": {"kind": "random", "eps": 0.01},
            "snapshots": False}

DEFAULTS = {
    "linstab-sweep": {"dim": 1, "J0_star": 0.0, "Dtheta_star": 0.0, "L_over_rho": None,
                      "K_range": [-3.0, 3.0, 61], "J_range": [-3.0, 3.0, 61]},
    "pde-run": {"params": ModelParams().to_dict(), **copy.deepcopy(_PDE_RUN)},
    "modes-run": {"M": 32, "K": -1.0, "Dtheta": 0.05, "rho": 1.0, "dim": 1, "T": 5.0,
                  "dt": 1e-3, "cadence": 0.1, "saturation": 0.1,
                  "coefficients": [[1.0, 0.0], [0.25, 0.0]], "full_state": False},
    "lgca-run": {"width": 50, "height": 50, "confluency": 0.4, "J0": 0.0, "J": 1.0, "K": 1.0,
                 "omega": 0.0, "n_substeps": 10, "steps": 2000, "cadence": 10,
                 "frame_every": 0, "order": list(lgca.STEP_ORDER)},
    "repro-fig7": {"params": dict(FIG8_PARAMS), **copy.deepcopy(_PDE_RUN),
                   "points": copy.deepcopy(FIG7_POINTS)},
    "repro-fig11": {"width": 50, "height": 50, "confluency": 0.4, "J0": 0.0, "omega": 0.0,
                    "n_substeps": 10, "steps": 2000, "cadence": 10,
                    "points": copy.deepcopy(FIG11_POINTS)},
}
# sub-tables whose keys are user-chosen (run names) or validated elsewhere
_OPEN = {"points", "params", "ic"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

def _merge(base, user, path=""):
    out = copy.deepcopy(base)
    for key, value in user.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key not in _OPEN:
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        elif isinstance(base[key], dict) and key in ("params", "ic"):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = {**base[key], **value}
        else:
            out[key] = value
    return out


def _apply_set(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {key!r} crosses a non-object value")
    node[parts[-1]] = value


def resolve_config(command, config_text=None, sets=(), seed=None):
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    user = {}
    if config_text is not None:
        try:
            user = json.loads(config_text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    user = copy.deepcopy(user)
    file_seed = user.pop("seed", 0)
    for s in sets:
        _apply_set(user, s)
    if "seed" in user:
        file_seed = user.pop("seed")
    cfg = _merge(DEFAULTS[command], user)
    cfg["seed"] = int(seed if seed is not None else file_seed)
    _validate(command, cfg)
    return cfg


def _grid(spec, name):
    if not (isinstance(spec, list) and len(spec) == 3):
        raise ConfigError(f"{name} must be [start, stop, count]")
    lo, hi, n = spec
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"{name} count must be a positive integer")
    return np.linspace(float(lo), float(hi), n)


def _validate(command, cfg):
    """Build every typed object once so bad values fail before any output."""
    try:
        if command == "linstab-sweep":
            DimensionlessParams(J0_star=cfg["J0_star"], Dtheta_star=cfg["Dtheta_star"], dim=cfg["dim"])
            _grid(cfg["K_range"], "K_range")
            _grid(cfg["J_range"], "J_range")
        elif command in ("pde-run", "repro-fig7"):
            p = ModelParams.from_dict(cfg["params"])
            if p.dim != 1:
                raise ConfigError("the PDE solver is one-dimensional (params.dim = 1)")
            if cfg["face_velocity"] not in ("mean", "donor"):
                raise ConfigError("face_velocity must be 'mean' or 'donor'")
            for key in ("T_final", "cadence", "cfl_safety"):
                if not cfg[key] > 0:
                    raise ConfigError(f"{key} must be > 0")
            pde1d.kernel_weights(cfg["grid"]["Nx"], p.L, p.rho)
        elif command == "modes-run":
            if not isinstance(cfg["M"], int) or cfg["M"] < 2:
                raise ConfigError("M must be an integer >= 2")
            if len(cfg["coefficients"]) > cfg["M"] + 1:
                raise ConfigError("more coefficients than M + 1")
        elif command in ("lgca-run", "repro-fig11"):
            lgca.LGCAParams(J0=cfg["J0"], omega=cfg["omega"], n_substeps=cfg["n_substeps"])
            if not (0 < cfg["confluency"] <= 1):
                raise ConfigError("confluency must lie in (0, 1]")
            if command == "lgca-run":
                lgca.LGCAParams(J=cfg["J"], K=cfg["K"], order=tuple(cfg["order"]))
        if "points" in cfg:
            for name, pt in cfg["points"].items():
                if not (isinstance(pt, list) and len(pt) == 2):
                    raise ConfigError(f"point {name!r} must be [J, K]")
    except (ParameterError, pde1d.GeometryError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- pipelines

def _pde_job(args):
    pdict, cfg, seed, tag = args
    p = ModelParams.from_dict(pdict)
    res = pde1d.run(p, Nx=cfg["grid"]["Nx"], Ntheta=cfg["grid"]["Ntheta"], T_final=cfg["T_final"],
                    ic=cfg["ic"], seed=seed, cadence=cfg["cadence"], cfl_safety=cfg["cfl_safety"],
                    face_velocity=cfg["face_velocity"], keep_fields=cfg["snapshots"])
    return tag, res


def _diag_rows(traj):
    return [[d.t, d.r, d.mass, d.aggregation_index] for d in traj]


DIAG_HEADER = ["t", "r", "mass", "aggregation_index"]


def _map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_linstab_sweep(cfg, out, threads):
    K = _grid(cfg["K_range"], "K_range")
    J = _grid(cfg["J_range"], "J_range")
    L = linstab.Continuum if cfg["L_over_rho"] is None else float(cfg["L_over_rho"])
    rows = linstab.sweep_phase_diagram(cfg["dim"], cfg["J0_star"], K, J, cfg["Dtheta_star"], L, threads)
    write_csv(out / "sweep.csv", list(linstab.SWEEP_HEADER),
              [[r.K_star, r.J_star, r.lambda1, r.lambda2, r.k2, r.onset_class] for r in rows])
    write_csv(out / "boundary.csv", ["K_star", "f_boundary", "J_crit"], linstab.boundary_curves(cfg["dim"], K))


def cmd_pde_run(cfg, out, threads):
    _, res = _pde_job((cfg["params"], cfg, cfg["seed"], "run"))
    write_csv(out / "diagnostics.csv", DIAG_HEADER, _diag_rows(res.trajectory))
    write_ndjson(out / "final_field.ndjson", [res.field.to_record()])
    if cfg["snapshots"]:
        write_ndjson(out / "snapshots.ndjson", [f.to_record() for f in res.snapshots])


def cmd_repro_fig7(cfg, out, threads):
    jobs = []
    for i, (name, (J, K)) in enumerate(cfg["points"].items()):
        p = ModelParams.from_dict({**cfg["params"], "J": float(J), "K": float(K)})
        jobs.append((p.to_dict(), cfg, cfg["seed"] ^ i, name))
    results = _map(_pde_job, jobs, threads)
    summary = []
    for (pdict, _, _, name), (_, res) in zip(jobs, results):
        write_csv(out / f"diagnostics_{name}.csv", DIAG_HEADER, _diag_rows(res.trajectory))
        q = nondimensionalize(ModelParams.from_dict(pdict))
        try:
            onset = linstab.classify_onset(q).onset_class.value
        except linstab.MarginalCase:
            onset = "BOUNDARY"
        d = res.trajectory[-1]
        summary.append([name, q.J_star, q.K_star, onset, d.r, d.aggregation_index])
    write_csv(out / "summary.csv", ["point", "J_star", "K_star", "onset_class", "r", "aggregation_index"],
              summary)


def _initial_modes(cfg):
    A = np.zeros(cfg["M"] + 1, dtype=complex)
    for j, c in enumerate(cfg["coefficients"]):
        A[j] = complex(*c) if isinstance(c, list) else complex(c)
    measure = 2 * cfg["rho"] if cfg["dim"] == 1 else math.pi * cfg["rho"] ** 2
    return modes.ModeVector(A, measure, cfg["K"], cfg["Dtheta"])


def cmd_modes_run(cfg, out, threads):
    traj = modes.integrate_modes(_initial_modes(cfg), cfg["T"], cfg["dt"], cfg["cadence"], cfg["saturation"])
    write_csv(out / "modes.csv", modes.csv_header(), modes.trajectory_rows(traj))
    if cfg["full_state"]:
        write_ndjson(out / "modes_state.ndjson", modes.state_records(traj))
    if traj.halted:
        print(f"integration halted early ({traj.halted}) at t={traj.times[-1]:.6g}", file=sys.stderr)


def _lgca_job(args):
    cfg, J, K, order, seed, tag = args
    lat = lgca.init_random(cfg["width"], cfg["height"], cfg["confluency"], seed)
    params = lgca.LGCAParams(J0=cfg["J0"], J=float(J), K=float(K), omega=cfg["omega"],
                             n_substeps=cfg["n_substeps"], order=tuple(order))
    every = cfg.get("frame_every", 0)
    frames = []

    def grab(l):
        if every and l.step_count % every == 0:
            frames.append((l.step_count, lgca.render_ppm(l)))

    grab(lat)
    lat, rows = lgca.run(lat, params, cfg["steps"], cfg["cadence"], callback=grab)
    if not frames or frames[-1][0] != lat.step_count:
        frames.append((lat.step_count, lgca.render_ppm(lat)))
    return tag, lat, rows, frames


def _write_lgca(out, tag, lat, rows, frames):
    suffix = "" if tag is None else f"_{tag}"
    write_csv(out / f"metrics{suffix}.csv", lgca.METRICS_HEADER, lgca.metrics_rows(rows))
    for step, img in frames:
        write_ppm(out / "frames" / f"frame{suffix}_{step:06d}.ppm", img)
    write_ndjson(out / f"snapshot{suffix}.ndjson", [lgca.snapshot_record(lat)])


def cmd_lgca_run(cfg, out, threads):
    _, lat, rows, frames = _lgca_job((cfg, cfg["J"], cfg["K"], cfg["order"], cfg["seed"], None))
    _write_lgca(out, None, lat, rows, frames)


def cmd_repro_fig11(cfg, out, threads):
    jobs = [(cfg, J, K, lgca.STEP_ORDER, cfg["seed"] ^ i, name)
            for i, (name, (J, K)) in enumerate(cfg["points"].items())]
    summary = []
    for tag, lat, rows, frames in _map(_lgca_job, jobs, threads):
        _write_lgca(out, tag, lat, rows, frames)
        m = rows[-1]
        summary.append([tag, m.step, m.r, m.r_local, m.N])
    write_csv(out / "summary.csv", ["point", "step", "r", "r_local", "N"], summary)


PIPELINES = {"linstab-sweep": cmd_linstab_sweep, "pde-run": cmd_pde_run, "modes-run": cmd_modes_run,
             "lgca-run": cmd_lgca_run, "repro-fig7": cmd_repro_fig7, "repro-fig11": cmd_repro_fig11}

RUNTIME_FAULTS = (pde1d.RunAborted, pde1d.PositivityFault, pde1d.DegenerateFieldError,
                  modes.BlowUpError, lgca.DegenerateLatticeError, FloatingPointError)


# ---------------------------------------------------------------- entry

def build_parser():
    ap = argparse.ArgumentParser(prog="oscicell", description="Adhesive oscillator cell models.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file (defaults used when omitted)")
    ap.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry by dotted path; repeatable")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--seed", type=int, help="64-bit base seed (overrides config)")
    ap.add_argument("--threads", type=int, help="worker count (default: $OSCICELL_THREADS or 1)")
    return ap


def _threads(arg):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("OSCICELL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"OSCICELL_THREADS must be an integer, got {env!r}") from None
    return 1


def dispatch(command, config_text=None, sets=(), out="out", seed=None, threads=None, stderr=None):
    """Run one command; returns the exit status."""
    stderr = stderr or sys.stderr
    out = Path(out)
    try:
        n_threads = _threads(threads)
        cfg = resolve_config(command, config_text, sets, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.txt").write_text(f"{exc}\n")
        except OSError:
            pass
        return 1
    manifest = {"command": command, "config": cfg, "threads": n_threads, "version": __version__,
                "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    try:
        write_json(out / "manifest.json", manifest)
        PIPELINES[command](cfg, out, n_threads)
    except RUNTIME_FAULTS as exc:
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=stderr)
        return 2
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    text = None
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"error: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
            return 1
    return dispatch(args.command, text, args.sets, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
