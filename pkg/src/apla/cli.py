"""Command-line front end: ``apla {classify,simulate,sweep,chain}``.

Exit codes: 0 success, 1 classification negative, 2 input error, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from apla.chain import (
    ClassificationError,
    EstimationError,
    chain_report,
    cross_validate,
    estimate_phat,
    stationary_distribution,
    write_chain_json,
)
from apla.dynamics import ConfigError, SimConfig
from apla.game import GameFormatError, check_coordination, load_game
from apla.simulate import (
    StepSizeWarning,
    read_occupation_csv,
    run,
    sweep,
    write_occupation_csv,
)

log = logging.getLogger("apla")

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_ESTIMATION = 0, 1, 2, 3

# flag name -> SimConfig field
SIM_FLAGS = {
    "seed": "seed", "horizon": "horizon", "lambda": "lam", "h": "h",
    "epsilon": "epsilon", "nu": "nu", "delta": "delta",
}


class InputError(Exception):
    pass


@dataclass
class RunSpec:
    command: str
    game_path: Path
    sim: SimConfig
    output_dir: Path
    overrides: dict[str, str] = field(default_factory=dict)
    threads: int = 1
    strict: bool = False
    force: bool = False
    # command-specific settings from the config file and flags
    extra: dict = field(default_factory=dict)


def _coerce(name: str, value):
    types = {f.name: f.type for f in fields(SimConfig)}
    kind = types[name]
    if kind in ("int", int):
        return int(value)
    if kind in ("float", float):
        return float(value)
    return value


def _sim_key(key: str) -> str:
    key = key.replace("-", "_")
    if key == "lambda":
        return "lam"
    if key not in {f.name for f in fields(SimConfig)}:
        raise InputError(f"unknown sim setting {key!r}")
    return key


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None
    data["_dir"] = str(Path(path).resolve().parent)
    return data


def build_spec(args: argparse.Namespace) -> RunSpec:
    cfg = load_config(Path(args.config) if args.config else None)
    sim_values = {}
    for k, v in cfg.get("sim", {}).items():
        if k == "init_strategies":
            sim_values["init_strategies"] = tuple(tuple(float(p) for p in s) for s in v)
        else:
            key = _sim_key(k)
            sim_values[key] = _coerce(key, v)
    for flag, key in SIM_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            sim_values[key] = _coerce(key, v)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
        key = _sim_key(k.strip())
        sim_values[key] = _coerce(key, v.strip())
    try:
        sim = SimConfig(**sim_values)
    except (ConfigError, TypeError, ValueError) as exc:
        raise InputError(f"invalid simulation settings: {exc}") from None

    game_path = args.game or cfg.get("game")
    if game_path is None:
        raise InputError("no game given (use --game or a top-level 'game' key in the config)")
    game_path = Path(game_path)
    if not args.game and not game_path.is_absolute():
        game_path = Path(cfg["_dir"]) / game_path
    if not game_path.exists():
        raise InputError(f"game file not found: {game_path}")

    extra = {k: v for k, v in cfg.items() if k not in ("sim", "game", "_dir")}
    return RunSpec(
        command=args.command,
        game_path=game_path,
        sim=sim,
        output_dir=Path(args.out),
        overrides=overrides,
        threads=args.threads or os.cpu_count() or 1,
        strict=args.strict,
        force=args.force,
        extra=extra,
    )


def _meta(spec: RunSpec) -> dict:
    return {"command": spec.command, "game": str(spec.game_path), "config": spec.sim.to_dict(), "seed": spec.sim.seed}


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_classify(spec: RunSpec) -> int:
    game = load_game(spec.game_path)
    report = check_coordination(game)
    out = report.to_dict(game)
    out["game"] = str(spec.game_path)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    _write_json(spec.output_dir / "classification.json", out)
    print(f"coordination: {report.is_coordination}")
    print(f"nash: {out['nash']}")
    print(f"payoff-dominant: {out['payoff_dominant']}")
    if out["violations"]:
        print(f"violations: {out['violations']}")
    return EXIT_OK if report.is_coordination else EXIT_NEGATIVE


def _require_coordination(game, spec: RunSpec):
    report = check_coordination(game)
    if not report.is_coordination and not spec.force:
        print("game is not a coordination game (use --force to run anyway)", file=sys.stderr)
        return report, EXIT_NEGATIVE
    return report, None


def cmd_simulate(spec: RunSpec) -> int:
    game = load_game(spec.game_path)
    report, code = _require_coordination(game, spec)
    if code is not None:
        return code
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", StepSizeWarning)
        stats, traj = run(game, spec.sim, strict=spec.strict)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    meta = _meta(spec)
    traj.write_csv(spec.output_dir / "trajectory.csv", meta)
    write_occupation_csv(stats, spec.output_dir / "occupation.csv", meta)
    dom = stats.dominant()
    summary = dict(meta)
    summary.update({
        "dominant_state": game.label(dom),
        "dominant_occupation": stats.occupation(dom),
        "payoff_dominant": [game.label(p) for p in report.payoff_dominant_set],
        "payoff_dominant_occupation": stats.occupation_of(report.payoff_dominant_set),
        "elsewhere": stats.elsewhere,
        "window": list(stats.window),
    })
    _write_json(spec.output_dir / "summary.json", summary)
    print(f"dominant state: {summary['dominant_state']} (occupation {summary['dominant_occupation']:.4f})")
    return EXIT_OK


def _grid(value, name: str) -> list[float]:
    if value is None:
        return []
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return [float(v) for v in value]
    except ValueError:
        raise InputError(f"bad {name} grid: {value!r}") from None


def cmd_sweep(spec: RunSpec) -> int:
    game = load_game(spec.game_path)
    report, code = _require_coordination(game, spec)
    if code is not None:
        return code
    conf = spec.extra.get("sweep", {})
    lambdas = _grid(spec.extra.get("lambdas") or conf.get("lambdas"), "lambda")
    hs = _grid(spec.extra.get("hs") or conf.get("hs"), "h")
    replicates = int(spec.extra.get("replicates") or conf.get("replicates", 10))
    if not lambdas or not hs:
        raise InputError("sweep grid is empty: give --lambdas and --hs (or a [sweep] section)")
    result = sweep(game, spec.sim, lambdas, hs, replicates, threads=spec.threads)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    meta = _meta(spec)
    meta["grid"] = {"lambdas": lambdas, "hs": hs, "replicates": replicates}
    result.write_csv(spec.output_dir / "sweep.csv", meta)
    rows = result.summary()
    _write_json(spec.output_dir / "sweep_summary.json", dict(meta, cells=rows,
                target=[game.label(p) for p in result.target]))
    print(f"payoff-dominant occupation {[game.label(p) for p in result.target]}")
    print(f"{'lambda':>8} {'h':>8} {'mean':>8} {'std':>8}")
    for r in rows:
        print(f"{r['lambda']:>8g} {r['h']:>8g} {r['mean']:>8.4f} {r['std']:>8.4f}")
    return EXIT_OK


def cmd_chain(spec: RunSpec) -> int:
    game = load_game(spec.game_path)
    report, code = _require_coordination(game, spec)
    if code is not None:
        return code
    conf = spec.extra.get("chain", {})
    episodes = int(spec.extra.get("episodes") or conf.get("episodes", 10_000))
    cap = spec.extra.get("episode_cap") or conf.get("episode_cap")
    chain = estimate_phat(game, spec.sim, episodes, None if cap is None else int(cap), threads=spec.threads)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    extra = {"game": str(spec.game_path), "seed": spec.sim.seed, "episode_cap": cap}
    if (chain.resolved == 0).any():
        write_chain_json(chain_report(chain, None, spec.sim, extra), spec.output_dir / "chain.json")
        print(f"estimation failed: unresolved rows, escapes per row {chain.escapes.tolist()}", file=sys.stderr)
        return EXIT_ESTIMATION
    result = stationary_distribution(chain)
    occ_path = spec.extra.get("occupation")
    if occ_path:
        cv = cross_validate(game, chain, result, read_occupation_csv(occ_path))
        extra["cross_validation"] = cv.to_dict()
    write_chain_json(chain_report(chain, result, spec.sim, extra), spec.output_dir / "chain.json")
    print("pi: " + ", ".join(f"{lab}={p:.4f}" for lab, p in zip(chain.labels, result.pi)))
    if not result.unique:
        print("note: estimated chain is reducible; pi is the average from a uniform start")
    if occ_path:
        print(f"discrepancy vs occupation: {extra['cross_validation']['discrepancy']:.4f}")
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "simulate": cmd_simulate, "sweep": cmd_sweep, "chain": cmd_chain}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--game", help="game JSON file")
    common.add_argument("--config", help="TOML config with a [sim] section")
    common.add_argument("--seed", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--lambda", dest="lambda", type=float)
    common.add_argument("--h", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--nu", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--strict", action="store_true", help="fail when the step-size condition fails")
    common.add_argument("--force", action="store_true", help="run even if the game is not a coordination game")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a [sim] setting")

    parser = argparse.ArgumentParser(prog="apla", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("classify", parents=[common], help="classify a game")
    sub.add_parser("simulate", parents=[common], help="run one long simulation")
    p = sub.add_parser("sweep", parents=[common], help="grid over lambda and h")
    p.add_argument("--lambdas", help="comma-separated lambda values")
    p.add_argument("--hs", help="comma-separated h values")
    p.add_argument("--replicates", type=int)
    p = sub.add_parser("chain", parents=[common], help="estimate the Nash-state chain")
    p.add_argument("--episodes", type=int)
    p.add_argument("--episode-cap", dest="episode_cap", type=int)
    p.add_argument("--occupation", help="occupation.csv from a simulate run to compare against")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = build_spec(args)
        for key in ("lambdas", "hs", "replicates", "episodes", "episode_cap", "occupation"):
            v = getattr(args, key, None)
            if v is not None:
                spec.extra[key] = v
        return COMMANDS[spec.command](spec)
    except (InputError, GameFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ClassificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
