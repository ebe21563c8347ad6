"""Command-line entry point.

Commands: ``train``, ``ensemble``, ``fv-reference``, ``check-lemmas`` and
``dump-profile``.  Outputs go to ``--out`` or to a fresh timestamped
directory under ``$WPINN_OUTPUT_ROOT`` (default ``./wpinn-runs``).

Exit status: 0 on success, 2 for usage or configuration errors, 1 for
failures at run time.
"""
from __future__ import annotations

import argparse
import configparser
import datetime
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff_net import load_params
from .errors import ConfigurationError, WPINNError
from .oracles import PRESET_IDS, fv_solve, get_preset, relative_errors
from .reporting import PROFILE_COLUMNS, fmt, profile_dump, report_ensemble, summarize, write_rows
from .training import (HYPERPARAMETER_GRIDS, TrainedModel, TrainingConfig, collocation_for, config_grid,
                       run_ensemble, save_model, train_one)

OUTPUT_ROOT_ENV = "WPINN_OUTPUT_ROOT"

# config-file sections and the keys each accepts
SECTIONS = {
    "network": ("hidden_layers_theta", "width_theta", "hidden_layers_eta", "width_eta",
                "activation_theta", "activation_eta"),
    "training": ("lam", "tau_theta", "tau_eta", "n_max", "n_min", "epochs", "reset_frequency", "optimizer",
                 "denominator_floor", "residual", "lambda_placement", "abs_eta", "ramp_width", "precision", "seed"),
    "entropy": ("c_count", "c_widen"),
    "sampling": ("counts", "sampler", "collocation_seed"),
}
_INT_KEYS = {"hidden_layers_theta", "width_theta", "hidden_layers_eta", "width_eta", "n_max", "n_min", "epochs",
             "seed", "c_count", "collocation_seed"}
_FLOAT_KEYS = {"lam", "tau_theta", "tau_eta", "reset_frequency", "denominator_floor", "abs_eta", "c_widen"}
_OPTIONAL_KEYS = {"ramp_width", "sampler", "counts"}


class UsageError(WPINNError):
    pass


def _coerce(key, text):
    text = text.strip()
    if key in _OPTIONAL_KEYS and text.lower() in ("", "none", "default"):
        return None
    try:
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS or key == "ramp_width":
            return float(text)
        if key == "counts":
            parts = [int(p) for p in text.replace(",", " ").split()]
            if len(parts) != 3:
                raise ValueError("counts needs three integers M_int M_sb M_tb")
            return tuple(parts)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {text!r} ({exc})") from None
    return text


def _key_of(name):
    """Resolve ``key`` or ``section.key`` to a config field name."""
    if "." in name:
        section, key = name.split(".", 1)
        if section not in SECTIONS or key not in SECTIONS[section]:
            raise ConfigurationError(f"unknown config key {name!r}")
        return key
    for keys in SECTIONS.values():
        if name in keys:
            return name
    raise ConfigurationError(f"unknown config key {name!r}")


def read_config_file(path):
    """Parse an INI-style config into field overrides; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigurationError(f"{path}: unknown key {key!r} in [{section}]")
            out[key] = _coerce(key, value)
    return out


def parse_overrides(pairs):
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigurationError(f"override {pair!r} is not key=value")
        name, value = pair.split("=", 1)
        key = _key_of(name.strip())
        out[key] = _coerce(key, value)
    return out


def resolve_config(preset, args, extra=None) -> TrainingConfig:
    """Preset defaults, then the config file, then ``--set`` pairs, then dedicated flags."""
    kw = {"epochs": preset.epochs}
    if preset.id == "sine":
        kw["activation_eta"] = "sin"
    if getattr(args, "config", None):
        kw.update(read_config_file(args.config))
    kw.update(parse_overrides(getattr(args, "set", None)))
    kw.update({k: v for k, v in (extra or {}).items() if v is not None})
    try:
        return TrainingConfig(**kw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def output_dir(args, command, preset_id=None):
    if getattr(args, "out", None):
        d = Path(args.out)
    else:
        stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "wpinn-runs"))
        d = root / "-".join(p for p in (command, preset_id, stamp) if p)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_manifest(d, command, argv, **payload):
    manifest = {"command": command, "argv": list(argv), "git_describe": git_describe(),
                "python": sys.version.split()[0], "numpy": np.__version__, **payload}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _metrics_csv(path, rows):
    write_rows(path, ("name", "value"), rows)


# -- commands ---------------------------------------------------------------------

def cmd_train(args, argv):
    preset = get_preset(args.preset)
    cfg = resolve_config(preset, args, {"epochs": args.epochs, "seed": args.seed})
    d = output_dir(args, "train", preset.id)
    write_manifest(d, "train", argv, preset=preset.id, config=cfg.to_dict(),
                   seeds={"parameters": cfg.seed, "collocation": cfg.collocation_seed})
    collocation = collocation_for(preset, cfg)
    if args.dump_collocation:
        collocation.to_csv(d / "collocation.csv")
    every = max(1, cfg.epochs // 20)

    def progress(e, jp, ju):
        if args.verbose and (e % every == 0 or e == cfg.epochs):
            print(f"epoch {e}: J_pde={jp:.4g} J_u={ju:.4g}", flush=True)

    model = train_one(cfg, preset, collocation, progress)
    save_model(model, d)
    rows = [("c_star", model.c_star), ("training_error", model.final_training_error)]
    if not args.no_errors:
        e_t, e = relative_errors(model.predict, preset)
        rows += [("E_r_T", e_t), ("E_r", e)]
    _metrics_csv(d / "metrics.csv", rows)
    for name, v in rows:
        print(f"{name} = {v:.6g}")
    print(f"wrote {d}")
    return 0


def cmd_ensemble(args, argv):
    preset = get_preset(args.preset)
    base = resolve_config(preset, args, {"epochs": args.epochs})
    grid = args.grid or preset.grid
    configs = {"single": base} if grid == "single" else config_grid(base, grid)
    n_theta = args.n_theta or preset.n_theta
    threads = args.threads or max(1, min(os.cpu_count() or 1, n_theta))
    d = output_dir(args, "ensemble", preset.id)
    labels = list(configs)
    write_manifest(d, "ensemble", argv, preset=preset.id, grid=grid, n_theta=n_theta, base_seed=args.base_seed,
                   threads=threads, configs={lab: cfg.to_dict() for lab, cfg in configs.items()})

    def on_run(label, out):
        status = "diverged" if out.diverged else f"criterion {out.model.final_training_error:.4g}"
        print(f"[{labels.index(label)}] {label} run {out.index}: {status}", flush=True)

    start = time.perf_counter()
    selection = run_ensemble(configs, n_theta, preset, args.base_seed, threads, on_run)
    wall = time.perf_counter() - start
    sel_rows = []
    for k, label in enumerate(labels):
        res = selection.results[label]
        for out in res.runs:
            if not out.diverged:
                save_model(out.model, d / "runs" / f"config{k:03d}" / f"run{out.index:02d}")
        sel_rows.append((k, label, res.mean_criterion, len(res.models), res.n_diverged))
    write_rows(d / "selection.csv", ("config_index", "label", "mean_criterion", "n_ok", "n_diverged"), sel_rows)
    best = selection.best
    report = report_ensemble(best, preset, wall_time=wall)
    report.runs_to_csv(d / "runs.csv")
    table = summarize([report])
    table.to_csv(d / "summary.csv")
    times = [0.0, preset.T / 2, preset.T]
    write_rows(d / "profile.csv", PROFILE_COLUMNS, profile_dump(best, preset, times, args.n_x))
    print(f"selected: {selection.best_label}")
    print(table.to_text())
    print(f"wrote {d}")
    return 0


def cmd_fv_reference(args, argv):
    preset = get_preset(args.preset)
    t_end = preset.T if args.t_end is None else args.t_end
    if not 0 <= t_end:
        raise ConfigurationError("--t-end must be nonnegative")
    d = output_dir(args, "fv-reference", preset.id)
    write_manifest(d, "fv-reference", argv, preset=preset.id, cells=args.cells, t_end=t_end, cfl=args.cfl)
    grid = fv_solve(preset, args.cells, args.cfl, t_end)
    a, b = preset.domain
    tt = np.array([grid.time])
    # the two face nodes carry the Dirichlet data, the rest are cell averages
    xs = np.concatenate([[a], grid.x, [b]])
    us = np.concatenate([preset.boundary(np.array([a]), tt), grid.u, preset.boundary(np.array([b]), tt)])
    write_rows(d / "profile.csv", ("t", "x", "u"), [(float(grid.time), float(x), float(u)) for x, u in zip(xs, us)])
    print(f"{args.cells} cells, {grid.steps} steps to t={grid.time:.6g}, mass {fmt(grid.mass)}")
    print(f"wrote {d / 'profile.csv'}")
    return 0


def cmd_check_lemmas(args, argv):
    from .checks import run_lemma_checks
    results = run_lemma_checks()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _load_run(run_dir, preset):
    run_dir = Path(run_dir)
    theta = load_params(run_dir / "theta.bin")
    return TrainedModel(theta, theta, float("nan"), float("nan"), None, 0, None, preset.id)


def cmd_dump_profile(args, argv):
    preset = get_preset(args.preset)
    runs = []
    for r in args.runs:
        r = Path(r)
        found = sorted(p.parent for p in r.rglob("theta.bin")) if r.is_dir() else []
        if not found:
            raise ConfigurationError(f"no checkpoints (theta.bin) under {r}")
        runs.extend(found)
    models = [_load_run(r, preset) for r in runs]
    times = args.times if args.times else [0.0, preset.T / 2, preset.T]
    d = output_dir(args, "dump-profile", preset.id)
    write_manifest(d, "dump-profile", argv, preset=preset.id, runs=[str(r) for r in runs], times=times, n_x=args.n_x)
    rows = profile_dump(models, preset, times, args.n_x)
    write_rows(d / "profile.csv", PROFILE_COLUMNS, rows)
    print(f"{len(models)} run(s), {len(rows)} rows")
    print(f"wrote {d / 'profile.csv'}")
    return 0


# -- parser -------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="wpinn", description="Weak PINNs with entropy residuals for Burgers' equation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--preset", required=True, choices=PRESET_IDS)
        sp.add_argument("--out", help="output directory (default: timestamped under $%s)" % OUTPUT_ROOT_ENV)
        if config:
            sp.add_argument("--config", help="INI file with [network] [training] [entropy] [sampling] sections")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    sp = sub.add_parser("train", help="one training run")
    common(sp)
    sp.add_argument("--epochs", type=_nonneg_int)
    sp.add_argument("--seed", type=_nonneg_int)
    sp.add_argument("--dump-collocation", action="store_true")
    sp.add_argument("--no-errors", action="store_true", help="skip the error evaluation against the reference")
    sp.add_argument("--verbose", "-v", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("ensemble", help="retrain over a hyperparameter grid and select")
    common(sp)
    sp.add_argument("--grid", choices=[*HYPERPARAMETER_GRIDS, "single"])
    sp.add_argument("--n-theta", type=_positive_int)
    sp.add_argument("--epochs", type=_nonneg_int)
    sp.add_argument("--base-seed", type=_nonneg_int, default=0)
    sp.add_argument("--threads", type=_positive_int)
    sp.add_argument("--n-x", type=_positive_int, default=201)
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("fv-reference", help="Godunov reference solution")
    common(sp, config=False)
    sp.add_argument("--cells", type=_positive_int, default=2 ** 14)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--cfl", type=float, default=0.5)
    sp.set_defaults(func=cmd_fv_reference)

    sp = sub.add_parser("check-lemmas", help="numerical property sweeps")
    sp.set_defaults(func=cmd_check_lemmas)

    sp = sub.add_parser("dump-profile", help="solution profiles of trained runs")
    common(sp, config=False)
    sp.add_argument("runs", nargs="+", help="run directories (searched recursively for theta.bin)")
    sp.add_argument("--times", type=float, nargs="+")
    sp.add_argument("--n-x", type=_positive_int, default=201)
    sp.set_defaults(func=cmd_dump_profile)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except ConfigurationError as exc:
        print(f"wpinn: error: {exc}", file=sys.stderr)
        return 2
    except (WPINNError, OSError, ArithmeticError) as exc:
        print(f"wpinn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
