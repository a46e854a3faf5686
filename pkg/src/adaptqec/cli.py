"""Command-line entry point.

Exit codes: 0 success, 1 usage error (the config schema is printed), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from adaptqec.estimator import (
    EstimationError,
    MomentAccumulator,
    class_probabilities,
    estimate_all,
    estimates_from_json,
    estimates_to_json,
    rates_to_classes,
)
from adaptqec.experiments import (
    ExperimentConfig,
    ExperimentError,
    exp_convergence,
    exp_fluctuation,
    topology,
)
from adaptqec.graph import GraphError, write_dem
from adaptqec.matching import MatchingError, decode
from adaptqec.noise import NoiseError, read_syndrome, sample_trial, true_probabilities, write_syndrome
from adaptqec.posterior import PosteriorError
from adaptqec.weights import DIJKSTRA, EXACT, StationaryWeights, WeightError

CONFIG_SCHEMA = """\
config (JSON object, all keys optional):
  d              odd code distance >= 3                     (3)
  lag            detector lag, 1 or 2                       (1)
  rounds_test    cycles per test run                        (100)
  schedule       {type: constant|sinusoid, gamma0, amplitude, omega, phase,
                  targets: ancilla|data|all}               ({type: constant, gamma0: 0.005})
  n_train        training lengths for exp-convergence      ([100, 316, 1000, 3162, 10000, 31623])
  window         window lengths for exp-fluctuation         ([500, 2000, 16000])
  repetitions    training stages per point                  (400)
  trials         test runs per test set                     (2000)
  z              significance threshold for clamping        (0.0)
  backend        exact | dijkstra                           (exact)
  seed           master seed                                (0)
  checkpoints    cycles at which fidelity is sampled        ([10, 20, ..., 100])
  eval_points    evaluation times per noise period          (20)
"""

RUNTIME_ERRORS = (ExperimentError, EstimationError, WeightError, MatchingError, GraphError,
                  NoiseError, PosteriorError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adaptqec", description="Adaptive matching decoder for the repetition code.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--backend", choices=[EXACT, DIJKSTRA], help="weight backend")
        return p

    p = common(sub.add_parser("simulate", help="sample one syndrome history"))
    p.add_argument("--rounds", type=int, help="cycles to simulate (default: rounds_test)")
    p.add_argument("--t-offset", type=int, default=0)

    p = common(sub.add_parser("estimate", help="estimate edge-class probabilities from a syndrome file"))
    p.add_argument("syndrome", help="syndrome file written by 'simulate'")

    p = common(sub.add_parser("decode", help="decode a syndrome file"))
    p.add_argument("syndrome", help="syndrome file written by 'simulate'")
    p.add_argument("--estimates", help="estimates JSON; default uses the configured noise")

    p = common(sub.add_parser("exp-convergence", help="relative decoder error against training length"))
    p.add_argument("--repetitions", type=int)

    p = common(sub.add_parser("exp-fluctuation", help="sliding-window decoders under drifting noise"))
    p.add_argument("--repetitions", type=int)
    p.add_argument("--window", type=int, action="append", help="window length (repeatable)")

    p = common(sub.add_parser("dump-dem", help="write the detector error model of the configured noise"))
    p.add_argument("--rounds", type=int, help="cycles (default: rounds_test)")
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config is None:
        raw = {}
    else:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
    for key in ("seed", "backend", "repetitions"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "window", None):
        raw["window"] = args.window
    try:
        return ExperimentConfig.from_json(json.dumps(raw))
    except (ExperimentError, TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _read_record(path: str):
    with open(path) as fh:
        return read_syndrome(fh)


def cmd_simulate(cfg: ExperimentConfig, args) -> None:
    rounds = args.rounds or cfg.rounds_test
    record = sample_trial(cfg.build_schedule(), rounds, cfg.lag, cfg.seed, args.t_offset)
    if args.out is None:
        write_syndrome(record, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            write_syndrome(record, fh)


def cmd_estimate(cfg: ExperimentConfig, args) -> None:
    record = _read_record(args.syndrome)
    acc = MomentAccumulator(record.d, record.lag).add(record.bits)
    estimates = estimate_all(acc, topology(record.d, record.lag), cfg.z)
    _emit(estimates_to_json(estimates) + "\n", args.out)


def cmd_decode(cfg: ExperimentConfig, args) -> None:
    record = _read_record(args.syndrome)
    if args.estimates:
        probs = class_probabilities(estimates_from_json(Path(args.estimates).read_text()))
    else:
        probs = rates_to_classes(record.d, cfg.build_schedule().table(1, record.t_offset)[0])
    weights = StationaryWeights(probs, record.d, record.lag, max(record.rounds, 1), cfg.backend)
    result = decode(record, weights, cfg.unreachable_weight)
    payload = {
        "predicted_logical": result.predicted_logical,
        "true_logical": record.true_logical,
        "success": result.predicted_logical == record.true_logical,
        "pairs": sorted(sorted([list(u), list(v)]) for u, v in result.matching.pairs),
        "to_boundary": sorted(list(u) for u in result.matching.to_boundary),
        "total_weight": result.matching.total_weight,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)


def cmd_exp_convergence(cfg: ExperimentConfig, args) -> None:
    _emit(exp_convergence(cfg).to_csv(), args.out)


def cmd_exp_fluctuation(cfg: ExperimentConfig, args) -> None:
    _emit(exp_fluctuation(cfg).to_csv(), args.out)


def cmd_dump_dem(cfg: ExperimentConfig, args) -> None:
    model = true_probabilities(cfg.build_schedule(), args.rounds or cfg.rounds_test, cfg.lag)
    if args.out is None:
        write_dem(model, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            write_dem(model, fh)


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "decode": cmd_decode,
    "exp-convergence": cmd_exp_convergence,
    "exp-fluctuation": cmd_exp_fluctuation,
    "dump-dem": cmd_dump_dem,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
    except UsageError as exc:
        print(f"error: {exc}\n", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr)
        print(CONFIG_SCHEMA, file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](cfg, args)
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
