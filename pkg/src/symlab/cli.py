"""Command-line entry point: ``symlab <command> [--config PATH] [--seed N] [--workers N] [--out DIR]``.

Each command merges its defaults with the JSON config (unknown keys are
rejected) and command-line overrides, then writes its artifacts plus
``resolved_config.json`` into ``--out``.

Exit codes: 0 success, 2 usage, 3 format, 4 numerical.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .exceptions import FormatError, InvalidArgumentError, NumericalDomainError, TrainingDivergedError

log = logging.getLogger("symlab")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


DEFAULTS = {
    "ising": {"L": 5, "count": 1000, "J": 1.0, "fields": [0.0, 0.45], "mirrored": False},
    "expand": {"input": None, "output": "expanded.bin", "factor": 2, "fill": 0.5,
               "first_kernel_size": None},
    "enumerate": {"preset": "convnet", "runs": None, "tol": 1e-9},
    "replica": {"preset": "desk", "archs": None, "dataset": {}, "seed_offset": 0,
                "train": {}, "reduce_dim": 100, "bins": 50, "sigma_bins": 2.0, "cache": True},
    "qcd": {"mode": "eos", "T_min": 0.1, "T_max": 0.5, "n": 20,
            "masses": {"g": 0.6, "ud": 0.3, "s": 0.4}, "n_nodes": 50,
            "target": None, "t_c": 0.155, "epochs": 1500, "lr": 0.01},
}


def resolve_config(command, path, overrides):
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        unknown = set(user) - set(cfg) - {"seed", "workers"}
        if unknown:
            raise UsageError(f"unknown config keys for '{command}': {sorted(unknown)}")
        cfg.update(user)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _workers(arg, configured):
    if arg is not None:
        return arg
    if configured is not None:
        return configured
    env = os.environ.get("SYMLAB_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"SYMLAB_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("SYMLAB_WORKERS must be >= 1")
        return n
    return 1


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- commands


def cmd_ising(cfg, out):
    from .ising import IsingParams, energy_landscape
    from .numerics.random import Prng

    if cfg["L"] < 2:
        raise UsageError(f"L must be >= 2, got {cfg['L']}")
    written = []
    for h in cfg["fields"]:
        # same stream for every field so the landscapes score identical lattices
        prng = Prng(cfg["seed"]).substream("ising")
        land = energy_landscape(cfg["L"], cfg["count"], IsingParams(cfg["J"], h), prng, cfg["mirrored"])
        path = out / f"ising_h{h:g}.csv"
        land.write_csv(path)
        written.append(path)
    return written


def cmd_expand(cfg, out):
    from .expansion import ExpansionConfig, ExpansionFactorWarning, Fill, expand_image, validate_factor
    from .numerics import read_tensor, write_tensor
    from .numerics.random import Prng

    if cfg["input"] is None:
        raise UsageError("expand needs an input tensor (--input or config 'input')")
    if not isinstance(cfg["factor"], int) or cfg["factor"] < 1:
        raise UsageError(f"factor must be an integer >= 1, got {cfg['factor']!r}")
    ecfg = ExpansionConfig(cfg["factor"], Fill.parse(cfg["fill"]), cfg["first_kernel_size"])
    if ecfg.first_kernel_size is not None and validate_factor(ecfg) == "warning":
        print(
            f"symlab: {ExpansionFactorWarning.__name__}: expansion factor {ecfg.factor}"
            f" exceeds first kernel size {ecfg.first_kernel_size}",
            file=sys.stderr,
        )
    img = read_tensor(cfg["input"])
    expanded = expand_image(img, ecfg, Prng(cfg["seed"]).substream("expand_fill"))
    path = out / cfg["output"]
    write_tensor(path, expanded, extra={"factor": ecfg.factor, "fill": str(cfg["fill"])})
    return [path]


ENUMERATE_PRESETS = {
    "scalar": [
        {"name": "scalar_raw", "family": "scalar_net", "variant": "raw"},
        {"name": "scalar_expanded", "family": "scalar_net", "variant": "expanded"},
    ],
    "scalar_bias": [
        {"name": "scalar_raw", "family": "scalar_net", "variant": "raw"},
        {"name": "scalar_raw_bias", "family": "scalar_net", "variant": "raw", "bias": "enumerated_first_layer"},
    ],
    "convnet": [
        {"name": f"convnet_{v}", "family": "convnet2x2", "variant": v}
        for v in ("baseline", "dropout", "batchnorm", "equivariant", "wrong_equivariant")
    ],
}


def cmd_enumerate(cfg, out):
    from .landscape import TinyNetSpec, compare_landscapes, enumerate_landscape, write_profile

    runs = cfg["runs"]
    if runs is None:
        if cfg["preset"] not in ENUMERATE_PRESETS:
            raise UsageError(f"unknown enumerate preset {cfg['preset']!r}")
        runs = ENUMERATE_PRESETS[cfg["preset"]]
    landscapes, written = [], []
    for i, run in enumerate(runs):
        run = dict(run)
        name = run.pop("name", f"run{i}")
        try:
            spec = TinyNetSpec.from_dict(run)
        except TypeError as exc:
            raise UsageError(f"run {name}: {exc}") from None
        land = enumerate_landscape(spec, tol=cfg["tol"], workers=cfg["workers"], seed=cfg["seed"])
        land.write_csv(out / f"{name}.csv")
        write_profile(out / f"{name}.profile.json", land)
        written += [out / f"{name}.csv", out / f"{name}.profile.json"]
        landscapes.append((name, land))
    if len(landscapes) >= 2:
        base_name, base = landscapes[0]
        comparison = {
            f"{base_name}__vs__{name}": compare_landscapes(base, land)
            for name, land in landscapes[1:]
            if land.meta["dataset_id"] == base.meta["dataset_id"]
        }
        _write_json(out / "comparison.json", comparison)
        written.append(out / "comparison.json")
    return written


def cmd_replica(cfg, out):
    from .autodiff.optim import TrainConfig
    from .replica import ARCHITECTURES, DatasetSpec, ReplicaRunSpec, comparison_table, compare_architectures

    archs = cfg["archs"] or list(ARCHITECTURES)
    try:
        dataset = DatasetSpec(**cfg["dataset"])
    except TypeError as exc:
        raise UsageError(f"dataset: {exc}") from None
    specs = []
    for arch in archs:
        base = ReplicaRunSpec.preset(
            arch, cfg["preset"], dataset, seed_offset=cfg["seed_offset"] + cfg["seed"],
            reduce_dim=cfg["reduce_dim"], bins=cfg["bins"], sigma_bins=cfg["sigma_bins"],
        )
        if cfg["train"]:
            try:
                train = TrainConfig(**{**base.train.to_dict(), **cfg["train"]})
            except TypeError as exc:
                raise UsageError(f"train: {exc}") from None
            base = ReplicaRunSpec(base.arch, base.dataset, base.seeds, train,
                                  base.reduce_dim, base.bins, base.sigma_bins)
        specs.append(base)
    cache = out / "cache" if cfg["cache"] else None
    reports = compare_architectures(specs, workers=cfg["workers"], cache_dir=cache)
    written = []
    for rep in reports:
        path = out / f"report_{rep.arch}.json"
        rep.write_json(path)
        written.append(path)
    _write_json(out / "comparison.json", comparison_table(reports))
    written.append(out / "comparison.json")
    return written


def cmd_qcd(cfg, out):
    from .autodiff.optim import TrainConfig
    from .numerics import gauss_legendre
    from .qcd import EosTable, eos_table, fit_report, synthetic_target

    rule = gauss_legendre(cfg["n_nodes"])
    if cfg["mode"] == "eos":
        grid = np.linspace(cfg["T_min"], cfg["T_max"], cfg["n"])
        table = eos_table(grid, cfg["masses"], rule)
        table.write_csv(out / "eos.csv")
        return [out / "eos.csv"]
    if cfg["mode"] == "fit":
        if cfg["target"] is None:
            target = synthetic_target(cfg["n"], cfg["T_min"], cfg["T_max"], cfg["masses"], rule)
        else:
            if not Path(cfg["target"]).exists():
                raise FileNotFoundError(cfg["target"])
            target = EosTable.read_csv(cfg["target"])
        train = TrainConfig(optimizer="adam", lr=cfg["lr"], epochs=cfg["epochs"], batch_size=64, seed=cfg["seed"])
        _write_json(out / "fit_report.json", fit_report(target, train, cfg["t_c"], rule))
        return [out / "fit_report.json"]
    raise UsageError(f"qcd mode must be 'eos' or 'fit', got {cfg['mode']!r}")


COMMANDS = {
    "ising": cmd_ising,
    "expand": cmd_expand,
    "enumerate": cmd_enumerate,
    "replica": cmd_replica,
    "qcd": cmd_qcd,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config")
    common.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    common.add_argument("--workers", type=int, default=None, help="worker threads (default $SYMLAB_WORKERS or 1)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="symlab", description="Symmetry-breaking numerical experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("ising", parents=[common], help="Ising energy landscapes with and without field")
    p.add_argument("--L", type=int, dest="L")
    p.add_argument("--count", type=int)
    p.add_argument("--mirrored", action="store_true", default=None)
    p = sub.add_parser("expand", parents=[common], help="expand an image tensor file")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--factor", "-K", type=int)
    p.add_argument("--fill")
    p.add_argument("--first-kernel", type=int, dest="first_kernel_size")
    p = sub.add_parser("enumerate", parents=[common], help="exhaustive +/-1 loss landscapes")
    p.add_argument("--preset", choices=sorted(ENUMERATE_PRESETS))
    p = sub.add_parser("replica", parents=[common], help="replica-distance symmetry metric")
    p.add_argument("--paper", action="store_const", const="paper", dest="preset",
                   help="use R=200 replicas and 200 epochs")
    p.add_argument("--arch", action="append", dest="archs")
    p = sub.add_parser("qcd", parents=[common], help="quasi-particle equation of state")
    p.add_argument("mode", nargs="?", choices=("eos", "fit"))
    p.add_argument("--target")
    p.add_argument("--epochs", type=int)
    return parser


GLOBAL_FLAGS = ("config", "out", "verbose", "command")


def run(argv=None):
    """Parse ``argv``, run one command, and return ``(exit_code, written_paths)``."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        overrides = {k: v for k, v in vars(args).items() if k not in GLOBAL_FLAGS}
        cfg = resolve_config(args.command, args.config, overrides)
        cfg["workers"] = _workers(args.workers, cfg.get("workers"))
        if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
            raise UsageError(f"workers must be an integer >= 1, got {cfg['workers']!r}")
        cfg.setdefault("seed", 0)
        if cfg["seed"] is None:
            cfg["seed"] = 0
        if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
            raise UsageError(f"seed must be a non-negative integer, got {cfg['seed']!r}")
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "resolved_config.json", {"command": args.command, **cfg})
        written = COMMANDS[args.command](cfg, out)
        for path in written:
            log.info("wrote %s", path)
        return EXIT_OK, written
    except UsageError as exc:
        print(f"symlab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE, []
    except FileNotFoundError as exc:
        print(f"symlab: file not found: {exc}", file=sys.stderr)
        return EXIT_USAGE, []
    except FormatError as exc:
        print(f"symlab: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT, []
    except (NumericalDomainError, TrainingDivergedError) as exc:
        print(f"symlab: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL, []
    except InvalidArgumentError as exc:
        print(f"symlab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE, []


def main(argv=None):
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
