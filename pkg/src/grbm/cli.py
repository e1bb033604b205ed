"""Command-line interface.

Subcommands: ``train``, ``sample``, ``eval``, ``density``, ``gradcheck``,
``oraclecheck``.  Options come from a flat ``key=value`` config file (with
``#`` comments) and/or command-line flags; precedence is flags > config >
defaults, and unknown config keys are rejected.

Exit codes: 0 success, 1 usage/config error, 2 numerical check failure,
3 training abort.
"""

from __future__ import annotations

import os

# Cap BLAS parallelism before numpy spins up its thread pools.  Has no
# effect if numpy was already imported by the embedding process.
_threads = os.environ.get("GRBM_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import sys

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import checks, data as data_mod, evaluate, learning, model, samplers
from .exceptions import ConfigError, FormatError, TrainingAbort

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2
EXIT_TRAINING_ABORT = 3


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class Key:
    cast: Callable[[str], object]
    default: object = None
    required: bool = False
    help: str = ""


KEYS: dict[str, Key] = {
    "seed": Key(int, 0, help="master seed; every output is a pure function of it"),
    "out": Key(str, "out", help="output directory"),
    "data": Key(
        str,
        required=True,
        help="dataset: gmm:iso, gmm:aniso, or a path (IDX, .csv, raw tensor)",
    ),
    "data_n": Key(int, 1000, help="sample count for synthetic gmm:* datasets"),
    "labels": Key(str, help="optional IDX label file"),
    "shape": Key(str, help="image shape like 28x28 or 32x32x3"),
    "standardize": Key(
        _parse_bool, help="standardize inputs (default: files yes, gmm no)"
    ),
    "epochs": Key(int, 100),
    "batch_size": Key(int, 100),
    "hidden": Key(int, 256),
    "cd_steps": Key(int, 100),
    "sampler": Key(str, "gibbs_langevin"),
    "alpha0": Key(float, 0.1, help="initial Langevin step size"),
    "adjust_step": Key(int, 0, help="steps without Metropolis adjustment (>= steps disables)"),
    "inner_steps": Key(int, 5),
    "anneal_inner": Key(_parse_bool, True),
    "learning_rate": Key(float, 0.01),
    "clip_norm": Key(float, 10.0),
    "lr_anneal": Key(_parse_bool, True),
    "weight_scale": Key(float, 0.01),
    "step_scale": Key(str, "mean_var", help="sigma-bar convention: mean_var or mean_std"),
    "checkpoint": Key(str, required=True),
    "count": Key(int, 64, help="number of chains / generated samples"),
    "steps": Key(int, 100, help="sampler steps per chain"),
    "samples": Key(str, help="tensor file of pre-generated samples"),
    "bandwidth": Key(float, help="MMD kernel bandwidth (default: median heuristic)"),
    "gmm": Key(str, help="mode-recovery reference: iso or aniso"),
    "x_min": Key(float, -4.0),
    "x_max": Key(float, 4.0),
    "y_min": Key(float, -4.0),
    "y_max": Key(float, 4.0),
    "resolution": Key(int, 100),
    "n_visible": Key(int, 4),
    "n_hidden": Key(int, 6),
    "instances": Key(int, 50, help="random instances per gradient check"),
    "tv_tol": Key(float, 0.05),
}

COMMAND_KEYS: dict[str, tuple[str, ...]] = {
    "train": (
        "seed", "out", "data", "data_n", "labels", "shape", "standardize",
        "epochs", "batch_size", "hidden", "cd_steps", "sampler", "alpha0",
        "adjust_step", "inner_steps", "anneal_inner", "learning_rate",
        "clip_norm", "lr_anneal", "weight_scale", "step_scale",
    ),
    "sample": (
        "seed", "out", "checkpoint", "count", "steps", "sampler", "alpha0",
        "adjust_step", "inner_steps", "anneal_inner", "shape",
    ),
    "eval": (
        "seed", "out", "checkpoint", "data", "data_n", "labels", "shape",
        "samples", "count", "steps", "sampler", "alpha0", "adjust_step",
        "inner_steps", "anneal_inner", "bandwidth", "gmm",
    ),
    "density": (
        "out", "checkpoint", "x_min", "x_max", "y_min", "y_max", "resolution",
    ),
    "gradcheck": ("seed", "n_visible", "n_hidden", "instances", "checkpoint"),
    "oraclecheck": ("seed", "tv_tol"),
}

# Keys that are mandatory only for some commands.
_REQUIRED: dict[str, tuple[str, ...]] = {
    "train": ("data",),
    "sample": ("checkpoint",),
    "eval": ("checkpoint", "data"),
    "density": ("checkpoint",),
    "gradcheck": (),
    "oraclecheck": (),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat key=value lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw_line!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def dump_config(values: dict) -> str:
    """Serialize a resolved config so that re-parsing reproduces it."""
    lines = []
    for key in sorted(values):
        value = values[key]
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def resolve_config(command: str, config_path, flags: dict) -> dict:
    """Merge flags > config file > defaults for one command, with validation."""
    allowed = COMMAND_KEYS[command]
    raw: dict[str, str] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        raw = parse_config_text(path.read_text())
        for key in raw:
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r} for command {command}")
    resolved = {}
    for key in allowed:
        spec = KEYS[key]
        if flags.get(key) is not None:
            resolved[key] = flags[key]
        elif key in raw:
            try:
                resolved[key] = spec.cast(raw[key])
            except ConfigError:
                raise
            except ValueError as err:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r}") from err
        else:
            resolved[key] = spec.default
    for key in _REQUIRED[command]:
        if resolved.get(key) is None:
            raise ConfigError(f"command {command} requires {key!r}")
    return resolved


def _parse_shape(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        dims = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad shape {text!r}; expected e.g. 28x28 or 32x32x3")
    if len(dims) not in (2, 3) or any(d < 1 for d in dims):
        raise ConfigError(f"bad shape {text!r}")
    return dims


def _gmm_spec(name: str) -> data_mod.GmmSpec:
    iso, aniso = data_mod.default_gmm_specs()
    if name == "iso":
        return iso
    if name == "aniso":
        return aniso
    raise ConfigError(f"unknown gmm spec {name!r}; choose iso or aniso")


def _load_dataset(cfg: dict, seed: int) -> data_mod.Dataset:
    """Load or synthesize the dataset named by cfg['data'], standardized as asked."""
    source = cfg["data"]
    shape = _parse_shape(cfg.get("shape"))
    if source.startswith("gmm:"):
        spec = _gmm_spec(source.split(":", 1)[1])
        raw = data_mod.gmm_sample(spec, cfg["data_n"], np.random.default_rng(seed))
        do_std = cfg.get("standardize")
        do_std = False if do_std is None else do_std
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"dataset path does not exist: {path}")
        with open(path, "rb") as f:
            head = f.read(4)
        if head == b"\x00\x00\x08\x03":
            raw = data_mod.load_idx(path, cfg.get("labels"))
        elif path.suffix == ".csv":
            raw = data_mod.Dataset(data_mod.load_csv(path))
        else:
            raw = data_mod.Dataset(data_mod.load_tensor(path))
        do_std = cfg.get("standardize")
        do_std = True if do_std is None else do_std
    if do_std:
        return data_mod.standardize(raw, image_shape=shape)
    return raw


def _sampler_config(cfg: dict, params, steps_key: str = "steps") -> samplers.SamplerConfig:
    steps = cfg[steps_key]
    return samplers.SamplerConfig(
        total_steps=steps,
        burn_in=steps - 1,
        alpha0=learning.effective_alpha0(cfg["alpha0"], params),
        adjust_step=cfg["adjust_step"],
        inner_steps=cfg["inner_steps"],
        anneal_inner=cfg["anneal_inner"],
    )


def cmd_train(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    dataset = _load_dataset(cfg, seed)
    params0 = learning.default_init(
        dataset, cfg["hidden"], np.random.default_rng(seed + 1), cfg["weight_scale"]
    )
    config = learning.TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        cd_steps=cfg["cd_steps"],
        sampler_kind=cfg["sampler"],
        learning_rate=cfg["learning_rate"],
        adjust_step=cfg["adjust_step"],
        inner_steps=cfg["inner_steps"],
        alpha0=cfg["alpha0"],
        anneal_inner=cfg["anneal_inner"],
        clip_norm=cfg["clip_norm"],
        lr_anneal=cfg["lr_anneal"],
        seed=seed + 2,
        step_scale=cfg["step_scale"],
    )

    def report(epoch, params, row):
        print(
            f"epoch {epoch:5d}  lr {row.lr:.5f}  E+ {row.mean_pos_energy:10.3f}  "
            f"E- {row.mean_neg_energy:10.3f}  |g| {row.grad_norm_preclip:8.3f}  "
            f"acc {row.accept_rate:.3f}  logvar {row.mean_log_sigma2:7.3f}"
        )

    params, log = learning.train(params0, dataset, config, callbacks=[report])
    has_stats = bool(np.any(dataset.standardize_std != 1.0)) or bool(
        np.any(dataset.standardize_mean != 0.0)
    )
    ckpt = out_dir / "checkpoint.grbm"
    model.save_checkpoint(
        ckpt,
        params,
        standardize_mean=dataset.standardize_mean if has_stats else None,
        standardize_std=dataset.standardize_std if has_stats else None,
    )
    log.write_csv(out_dir / "training_log.csv")
    (out_dir / "train_config.cfg").write_text(dump_config(cfg))
    print(f"checkpoint: {ckpt}")
    print(f"training log: {out_dir / 'training_log.csv'}")
    return EXIT_OK


def _load_checkpoint(cfg: dict):
    path = Path(cfg["checkpoint"])
    if not path.exists():
        raise ConfigError(f"checkpoint does not exist: {path}")
    return model.load_checkpoint(path)


def cmd_sample(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    params, mean, std = _load_checkpoint(cfg)
    config = _sampler_config(cfg, params)
    finals, accept_rate = samplers.sample_chains(
        params, config, cfg["count"], cfg["seed"], kind=cfg["sampler"]
    )
    if mean is not None:
        finals = finals * std + mean
    tensor_path = out_dir / "samples.f64"
    data_mod.save_tensor(tensor_path, finals)
    print(f"samples: {tensor_path} shape {finals.shape} accept_rate {accept_rate:.3f}")
    shape = _parse_shape(cfg.get("shape"))
    if shape is not None and len(shape) == 2:
        sheet = evaluate.tile_images(finals, shape)
        evaluate.write_pgm(out_dir / "contact_sheet.pgm", sheet)
        print(f"contact sheet: {out_dir / 'contact_sheet.pgm'}")
    if params.n_visible == 2:
        data_mod.save_csv(out_dir / "samples.csv", finals)
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    params, ck_mean, ck_std = _load_checkpoint(cfg)
    seed = cfg["seed"]

    raw_cfg = dict(cfg)
    raw_cfg["standardize"] = False
    reference_raw = _load_dataset(raw_cfg, seed).samples
    if ck_mean is not None:
        reference = (reference_raw - ck_mean) / ck_std
    else:
        reference = reference_raw

    if cfg.get("samples") is not None:
        samples_raw = data_mod.load_tensor(cfg["samples"])
    else:
        config = _sampler_config(cfg, params)
        finals, _ = samplers.sample_chains(
            params, config, cfg["count"], seed + 1, kind=cfg["sampler"]
        )
        samples_raw = finals * ck_std + ck_mean if ck_mean is not None else finals
    samples_model = (
        (samples_raw - ck_mean) / ck_std if ck_mean is not None else samples_raw
    )

    report: dict[str, object] = {
        "n_visible": params.n_visible,
        "n_hidden": params.n_hidden,
        "reconstruction_error": evaluate.reconstruction_error(params, reference),
    }
    est = evaluate.mmd(samples_model, reference, bandwidth=cfg.get("bandwidth"))
    report["mmd"] = {
        "value": est.value,
        "raw": est.raw,
        "bandwidth": est.bandwidth,
    }
    if params.n_hidden <= model.EXACT_MAX_HIDDEN:
        report["exact_log_likelihood"] = model.exact_log_likelihood(params, reference)
    gmm_name = cfg.get("gmm")
    if gmm_name is None and str(cfg["data"]).startswith("gmm:"):
        gmm_name = str(cfg["data"]).split(":", 1)[1]
    if gmm_name is not None and params.n_visible == 2:
        mode_report = evaluate.mode_recovery(samples_raw, _gmm_spec(gmm_name))
        report["mode_recovery"] = {
            "recovered_count": mode_report.recovered_count,
            "fractions": [float(f) for f in mode_report.fractions],
        }
    text = json.dumps(report, indent=2)
    (out_dir / "eval_report.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_density(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    params, _, _ = _load_checkpoint(cfg)
    grid = evaluate.density_grid(
        params,
        (cfg["x_min"], cfg["x_max"]),
        (cfg["y_min"], cfg["y_max"]),
        cfg["resolution"],
    )
    evaluate.save_grid_csv(out_dir / "density.csv", grid)
    evaluate.save_grid_pgm(out_dir / "density.pgm", grid)
    print(f"density grid: {out_dir / 'density.csv'} ({grid.resolution}x{grid.resolution})")
    return EXIT_OK


def cmd_gradcheck(cfg: dict) -> int:
    rng = np.random.default_rng(cfg["seed"])
    if cfg.get("checkpoint") is not None:
        params, _, _ = _load_checkpoint(cfg)
        n, m = params.n_visible, params.n_hidden
    else:
        params = None
        n, m = cfg["n_visible"], cfg["n_hidden"]
    if n > 8 or m > 10:
        raise ConfigError(f"gradcheck enforces N <= 8 and M <= 10, got N={n}, M={m}")
    results = checks.run_gradient_checks(
        rng,
        n_instances=cfg["instances"],
        n_visible=n,
        n_hidden=m,
        params_override=params,
    )
    ok = True
    for res in results:
        print(res.line())
        ok = ok and res.passed
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_oraclecheck(cfg: dict) -> int:
    results = checks.run_oracle_checks(seed=cfg["seed"], tv_tol=cfg["tv_tol"])
    ok = True
    for res in results:
        print(res.line())
        ok = ok and res.passed
    return EXIT_OK if ok else EXIT_CHECK_FAILED


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "density": cmd_density,
    "gradcheck": cmd_gradcheck,
    "oraclecheck": cmd_oraclecheck,
}


class _Parser(argparse.ArgumentParser):
    # Raise instead of sys.exit(2) so usage errors map to exit code 1.
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grbm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, keys in COMMAND_KEYS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="key=value config file")
        for key in keys:
            spec = KEYS[key]
            p.add_argument(
                f"--{key.replace('_', '-')}",
                dest=key,
                type=spec.cast,
                default=None,
                help=spec.help or None,
            )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        cfg = resolve_config(args.command, args.config, flags)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, FormatError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingAbort as err:
        print(f"training aborted: {err}", file=sys.stderr)
        return EXIT_TRAINING_ABORT


if __name__ == "__main__":
    sys.exit(main())
