"""Batch experiment command line.

Three subcommands: `solve` (one-shot equilibrium computation on a matrix
game), `learn` (iterative algorithms producing a learning-curve CSV and a
final-artifact JSON), and `validate` (game-file invariant checks). Every run
requires an explicit seed, merges an optional JSON config file with command
line flags (flags win), and writes a manifest with sha256 digests of each
output file. Given the same config, outputs are byte-identical across runs.

Exit codes: 0 success, 2 config or parse error, 3 precondition violation,
4 numerical fault.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    DynamicsParams,
    fixed_point_check,
    integrate_replicator,
    write_trajectory_csv,
)
from .equilibrium import (
    EGALITARIAN,
    PLUTOCRATIC,
    UTILITARIAN,
    ce_check,
    correlated_eq_solve,
    epsilon_nash_check,
    minimax_solve,
    support_enumeration_nash,
)
from .errors import GameFormatError, NumericalError, SpecError
from .games import (
    MatrixGame,
    StochasticGame,
    check_game_dict,
    classic_game,
    load_game,
    random_game,
)
from .learners import (
    CONSTANT,
    EXTERNAL,
    INTERNAL,
    ONE_OVER_VISITS,
    LearningSchedule,
    correlated_q_train,
    fictitious_play,
    minimax_q_train,
    regret_matching_play,
    shapley_value_iteration,
)
from .merl import MerlConfig, merl_train, write_merl_csv
from .output import RunManifest, write_csv, write_json
from .shaping import LOLA, NAIVE, LolaConfig, iterated_game, train_shapers, write_shaping_csv

SOLVE_METHODS = ("minimax", "nash-enum", "ce")
LEARN_METHODS = ("minimax-q", "ce-q", "regret", "fp", "replicator", "lola", "merl")
OBJECTIVE_ALIASES = {
    "utilitarian": UTILITARIAN,
    "egalitarian": EGALITARIAN,
    "plutocratic": PLUTOCRATIC,
    UTILITARIAN: UTILITARIAN,
    EGALITARIAN: EGALITARIAN,
    PLUTOCRATIC: PLUTOCRATIC,
}
DEFAULT_STEPS = {
    "minimax-q": 10000,
    "ce-q": 5000,
    "regret": 10000,
    "fp": 1000,
    "replicator": 1000,
    "lola": 500,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtmarl",
        description="Seeded game-theoretic experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="one-shot equilibrium computation")
    solve.add_argument("method", choices=SOLVE_METHODS)
    _common_flags(solve)
    solve.add_argument("--objective", help="CE objective (utilitarian/egalitarian/plutocratic)")
    solve.add_argument("--eps", type=float, help="verification tolerance (default 1e-9)")

    learn = sub.add_parser("learn", help="iterative algorithms with curve output")
    learn.add_argument("method", choices=LEARN_METHODS)
    _common_flags(learn)
    learn.add_argument("--steps", type=int, help="iteration budget")
    learn.add_argument("--record-every", type=int, help="curve sampling period")
    learn.add_argument("--objective", help="CE objective for ce-q")
    learn.add_argument("--mode", choices=(EXTERNAL, INTERNAL), help="regret mode")
    learn.add_argument("--x0", help="comma-separated initial mixture for replicator")
    learn.add_argument("--dt", type=float, help="replicator step size")
    learn.add_argument("--integrator", choices=("rk4", "euler"), help="replicator method")
    learn.add_argument("--alpha0", type=float, help="initial learning rate")
    learn.add_argument("--alpha-decay", choices=(CONSTANT, ONE_OVER_VISITS))
    learn.add_argument("--epsilon0", type=float, help="initial exploration rate")
    learn.add_argument("--epsilon-decay", choices=(CONSTANT, ONE_OVER_VISITS))
    learn.add_argument("--episode-length", type=int, help="steps between state resets")
    learn.add_argument("--oracle", action="store_true", default=None,
                       help="minimax-q: report sup-norm error vs value iteration")
    learn.add_argument("--alpha", type=float, help="lola step size")
    learn.add_argument("--beta", type=float, help="lola shaping coefficient")
    learn.add_argument("--gamma", type=float, help="discount for lola/merl")
    learn.add_argument("--learner", choices=(LOLA, NAIVE))
    learn.add_argument("--agents", type=int, help="merl team size")
    learn.add_argument("--population", type=int, help="merl population size")
    learn.add_argument("--generations", type=int, help="merl generation budget")
    learn.add_argument("--horizon", type=int, help="merl episode length")

    validate = sub.add_parser("validate", help="check a game file's invariants")
    validate.add_argument("path")
    return parser


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--game", help="game source: classic:NAME, random:SPEC, or a file path")
    sub.add_argument("--config", help="JSON config file; explicit flags override it")
    sub.add_argument("--seed", type=int, help="run seed (mandatory)")
    sub.add_argument("--out", help="output directory (default $GTMARL_OUT or .)")


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "validate":
            return _run_validate(args.path)
        if args.command == "solve":
            return _run_solve(args)
        return _run_learn(args)
    except GameFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


# --- config plumbing ---------------------------------------------------------

def _merged_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config is not None:
        path = Path(args.config)
        try:
            cfg = json.loads(path.read_text())
        except OSError as exc:
            raise GameFormatError(f"cannot read config file {args.config!r}: {exc}")
        except json.JSONDecodeError as exc:
            raise GameFormatError(f"config file {args.config!r} is not valid JSON: {exc}")
        if not isinstance(cfg, dict):
            raise GameFormatError("config file must hold a JSON object")
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    cfg.setdefault("method", getattr(args, "method", None))
    return cfg


def _get(cfg: dict, key: str, cast, default):
    if key not in cfg or cfg[key] is None:
        return default
    try:
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise GameFormatError(f"config field {key!r}: {exc}")


def _require_seed(cfg: dict) -> int:
    if cfg.get("seed") is None:
        raise GameFormatError("a seed is required: pass --seed or set \"seed\" in the config")
    return _get(cfg, "seed", int, 0)


def _out_dir(cfg: dict) -> Path:
    out = cfg.get("out") or os.environ.get("GTMARL_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    cfg["out"] = str(path)
    return path


def _objective(cfg: dict, default: str = UTILITARIAN) -> str:
    name = str(cfg.get("objective") or default)
    if name not in OBJECTIVE_ALIASES:
        raise GameFormatError(
            f"unknown objective {name!r}; choose from {sorted(set(OBJECTIVE_ALIASES))}"
        )
    return OBJECTIVE_ALIASES[name]


def _parse_action_shape(text: str) -> tuple[int, ...]:
    try:
        shape = tuple(int(part) for part in text.split("x"))
    except ValueError:
        raise GameFormatError(f"bad action shape {text!r}; expected e.g. 2x2")
    if not shape or any(k < 1 for k in shape):
        raise GameFormatError(f"bad action shape {text!r}; entries must be positive")
    return shape


def _game_from_source(source: str, seed: int | None):
    """classic:NAME, random:[zs-]matrix:AxB, random:[zs-]stoch:S:AxB:GAMMA,
    or a JSON game file path."""
    if source.startswith("classic:"):
        return classic_game(source[len("classic:"):])
    if source.startswith("random:"):
        if seed is None:
            raise GameFormatError("random game sources require a seed")
        parts = source.split(":")[1:]
        kind = parts[0] if parts else ""
        zero_sum = kind.startswith("zs-")
        kind = kind[3:] if zero_sum else kind
        if kind == "matrix" and len(parts) == 2:
            return random_game(seed, _parse_action_shape(parts[1]), zero_sum=zero_sum)
        if kind == "stoch" and len(parts) == 4:
            try:
                num_states = int(parts[1])
                discount = float(parts[3])
            except ValueError:
                raise GameFormatError(f"bad random game spec {source!r}")
            return random_game(
                seed,
                _parse_action_shape(parts[2]),
                zero_sum=zero_sum,
                num_states=num_states,
                discount=discount,
            )
        raise GameFormatError(
            f"bad random game spec {source!r}; expected random:[zs-]matrix:AxB "
            "or random:[zs-]stoch:S:AxB:GAMMA"
        )
    path = Path(source)
    if not path.exists():
        raise GameFormatError(f"game file {source!r} not found")
    return load_game(path)


def _load_game(cfg: dict, seed: int | None):
    source = cfg.get("game")
    if not source:
        raise GameFormatError("a game source is required: pass --game or set \"game\" in the config")
    return _game_from_source(str(source), seed)


def _require_matrix(game) -> MatrixGame:
    if not isinstance(game, MatrixGame):
        raise SpecError("this command expects a matrix game source")
    return game


def _require_stochastic_game(game) -> StochasticGame:
    if not isinstance(game, StochasticGame):
        raise SpecError("this command expects a stochastic game source")
    return game


def _finish(out: Path, stem: str, cfg: dict, files: list, started: float) -> int:
    manifest = RunManifest(
        config=cfg,
        version=__version__,
        wall_time_s=time.perf_counter() - started,
    )
    for path in files:
        manifest.add(path)
    manifest.write(out / f"{stem}_manifest.json")
    for path in files:
        print(path)
    return 0


# --- solve -------------------------------------------------------------------

def _run_solve(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    cfg = _merged_config(args)
    seed = _require_seed(cfg)
    eps = _get(cfg, "eps", float, 1e-9)
    out = _out_dir(cfg)
    game = _require_matrix(_load_game(cfg, seed))
    method = args.method
    stem = method.replace("-", "_")

    if method == "minimax":
        sol = minimax_solve(game)
        report = epsilon_nash_check(game, sol.strategies, eps)
        solution = {
            "method": method,
            "value": sol.value,
            "row_strategy": sol.strategies.mixtures[0],
            "col_strategy": sol.strategies.mixtures[1],
        }
        verification = {
            "passed": report.passed,
            "eps": report.eps,
            "best_response_gains": report.gains,
        }
    elif method == "nash-enum":
        profiles = support_enumeration_nash(game)
        reports = [epsilon_nash_check(game, p, eps) for p in profiles]
        solution = {
            "method": method,
            "count": len(profiles),
            "equilibria": [list(p.mixtures) for p in profiles],
        }
        verification = {
            "passed": all(r.passed for r in reports),
            "eps": eps,
            "best_response_gains": [r.gains for r in reports],
        }
    else:
        objective = _objective(cfg)
        policy = correlated_eq_solve(game, objective)
        report = ce_check(game, policy, eps)
        welfare = [float(policy.probs @ game.payoff_flat(i)) for i in range(game.num_agents)]
        solution = {
            "method": method,
            "objective": objective,
            "distribution": policy.probs,
            "welfare_per_agent": welfare,
            "welfare_total": float(sum(welfare)),
        }
        verification = {
            "passed": report.passed,
            "eps": eps,
            "max_violation": report.max_violation,
            "violations": report.violations,
        }

    solution_path = out / f"{stem}_solution.json"
    report_path = out / f"{stem}_report.json"
    write_json(solution_path, solution)
    write_json(report_path, verification)
    return _finish(out, stem, cfg, [solution_path, report_path], started)


# --- learn -------------------------------------------------------------------

def _schedule(cfg: dict, steps: int, seed: int) -> LearningSchedule:
    return LearningSchedule(
        alpha0=_get(cfg, "alpha0", float, 1.0),
        alpha_decay=str(cfg.get("alpha_decay") or ONE_OVER_VISITS),
        epsilon0=_get(cfg, "epsilon0", float, 0.2),
        epsilon_decay=str(cfg.get("epsilon_decay") or CONSTANT),
        max_steps=steps,
        seed=seed,
        episode_length=_get(cfg, "episode_length", int, None),
    )


def _parse_x0(raw, size: int) -> np.ndarray:
    if raw is None:
        return np.full(size, 1.0 / size)
    if isinstance(raw, str):
        try:
            values = [float(part) for part in raw.split(",")]
        except ValueError:
            raise GameFormatError(f"bad x0 {raw!r}; expected comma-separated numbers")
    elif isinstance(raw, (list, tuple)):
        values = [float(v) for v in raw]
    else:
        raise GameFormatError("x0 must be a string or a list of numbers")
    return np.asarray(values)


def _run_learn(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    cfg = _merged_config(args)
    seed = _require_seed(cfg)
    out = _out_dir(cfg)
    method = args.method
    stem = method.replace("-", "_")
    steps = _get(cfg, "steps", int, DEFAULT_STEPS.get(method, 1000))
    record_every = _get(cfg, "record_every", int, max(1, steps // 100))
    curve_path = out / f"{stem}_curve.csv"
    result_path = out / f"{stem}_result.json"

    if method == "minimax-q":
        game = _require_stochastic_game(_load_game(cfg, seed))
        oracle = None
        if cfg.get("oracle"):
            oracle = shapley_value_iteration(game).values
        res = minimax_q_train(game, _schedule(cfg, steps, seed), record_every, oracle)
        if oracle is not None:
            header = ["step", "mean_reward", "sup_value_error"]
            rows = res.curve
        else:
            header = ["step", "mean_reward"]
            rows = [row[:2] for row in res.curve]
        write_csv(curve_path, header, rows)
        result = {
            "values": res.values,
            "policies": res.policies,
            "opponent_policies": res.opponent_policies,
            "q": res.q.tables[0],
        }
        if oracle is not None:
            result["oracle_values"] = oracle
            result["sup_value_error"] = float(np.max(np.abs(res.values - oracle)))
    elif method == "ce-q":
        game = _require_stochastic_game(_load_game(cfg, seed))
        objective = _objective(cfg)
        res = correlated_q_train(game, objective, _schedule(cfg, steps, seed), record_every)
        header = ["step"] + [f"mean_reward_{i + 1}" for i in range(game.num_agents)]
        write_csv(curve_path, header, res.curve)
        result = {
            "objective": objective,
            "stage_policies": res.stage_policies,
            "q": list(res.q.tables),
        }
    elif method == "regret":
        game = _require_matrix(_load_game(cfg, seed))
        mode = str(cfg.get("mode") or EXTERNAL)
        res = regret_matching_play(game, steps, mode, seed, record_every)
        write_csv(curve_path, ["step", "max_avg_positive_regret"], res.curve)
        report = ce_check(game, res.empirical, _get(cfg, "eps", float, 0.05))
        result = {
            "mode": mode,
            "empirical": res.empirical,
            "ce_check_passed": report.passed,
            "ce_max_violation": report.max_violation,
        }
    elif method == "fp":
        game = _require_matrix(_load_game(cfg, seed))
        res = fictitious_play(game, steps)
        rows = [(t + 1, res.exploitability[t]) for t in range(steps)]
        write_csv(curve_path, ["step", "exploitability"], rows)
        result = {
            "empirical": list(res.empirical),
            "final_exploitability": float(res.exploitability[-1]),
        }
    elif method == "replicator":
        game = _require_matrix(_load_game(cfg, seed))
        matrix = game.payoffs[0]
        x0 = _parse_x0(cfg.get("x0"), game.actions[0])
        params = DynamicsParams(
            dt=_get(cfg, "dt", float, 0.01),
            steps=steps,
        )
        trajectory = integrate_replicator(
            matrix, x0, params, method=str(cfg.get("integrator") or "rk4")
        )
        write_trajectory_csv(curve_path, trajectory, params.dt)
        result = {
            "final": trajectory[-1],
            "fixed_point": fixed_point_check(matrix, trajectory[-1], 1e-6),
        }
    elif method == "lola":
        game = _require_matrix(_load_game(cfg, seed))
        gamma = _get(cfg, "gamma", float, 0.96)
        config = LolaConfig(
            alpha=_get(cfg, "alpha", float, 1.0),
            beta=_get(cfg, "beta", float, 1.0),
            gamma=gamma,
            steps=steps,
            seed=seed,
        )
        trajectory = train_shapers(
            iterated_game(game, gamma), config, str(cfg.get("learner") or LOLA)
        )
        write_shaping_csv(curve_path, trajectory)
        result = {
            "theta1": trajectory.thetas1[-1],
            "theta2": trajectory.thetas2[-1],
            "values": trajectory.values[-1],
        }
    else:
        config = MerlConfig(
            num_agents=_get(cfg, "agents", int, 3),
            population=_get(cfg, "population", int, 10),
            elite_count=_get(cfg, "elite_count", int, 2),
            generations=_get(cfg, "generations", int, 50),
            horizon=_get(cfg, "horizon", int, 25),
            epsilon_meet=_get(cfg, "epsilon_meet", float, 0.5),
            init_range=_get(cfg, "init_range", float, 3.0),
            buffer_capacity=_get(cfg, "buffer_capacity", int, 20000),
            batch_size=_get(cfg, "batch_size", int, 64),
            pg_updates=_get(cfg, "pg_updates", int, 10),
            alpha_q=_get(cfg, "alpha_q", float, 5e-3),
            alpha_pi=_get(cfg, "alpha_pi", float, 5e-3),
            tau=_get(cfg, "tau", float, 0.05),
            gamma=_get(cfg, "gamma", float, 0.95),
            mutation_sigma=_get(cfg, "mutation_sigma", float, 0.1),
            migration_period=_get(cfg, "migration_period", int, 5),
            eval_episodes=_get(cfg, "eval_episodes", int, 5),
            seed=seed,
        )
        res = merl_train(config)
        echo = {k: v for k, v in cfg.items() if k != "out"}
        write_merl_csv(curve_path, res, json.dumps(echo, sort_keys=True))
        result = {
            "best_fitness": res.best_fitness,
            "best_genome": res.best_genome,
            "pg_genome": res.pg_genome,
            "generations": config.generations,
        }

    write_json(result_path, result)
    return _finish(out, stem, cfg, [curve_path, result_path], started)


# --- validate ----------------------------------------------------------------

def _run_validate(path: str) -> int:
    target = Path(path)
    try:
        text = target.read_text()
    except OSError as exc:
        raise GameFormatError(f"cannot read game file {path!r}: {exc}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFormatError(f"game file {path!r} is not valid JSON: {exc}")
    violations = check_game_dict(doc)
    for line in violations:
        print(line)
    return 2 if violations else 0


if __name__ == "__main__":
    sys.exit(main())
