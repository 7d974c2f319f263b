"""Command-line entry point: ``divzero <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import evaluation as ev
from .games import get_game
from .league import Matchmaker, build_graph
from .oracle import get_solver
from .persistence import (GRAPH_COLUMNS, PAYOFF_COLUMNS, ConfigError, graph_rows,
                          load_checkpoint, payoff_rows, read_train_config, write_csv,
                          write_manifest)
from .search import SearchConfig
from .training import train_loop

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
SUMMARY_COLUMNS = ("dataset", "column", "mean", "std", "n_seeds")
MATCH_SUMMARY_COLUMNS = ("column", "winrate", "elo", "note")


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    seed = int(np.random.SeedSequence().entropy % (2 ** 31))
    print(f"seed: {seed} (random)")
    return seed


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ---------------------------------------------------------------

def cmd_train(args) -> int:
    if not args.config:
        raise UsageError("train needs --config")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = int(args.seed)
    if args.workers is not None:
        overrides["workers"] = int(args.workers)
    config = read_train_config(args.config, overrides)
    if config.puzzle_file and not Path(config.puzzle_file).is_file():
        raise ConfigError(f"puzzle_file: not found: {config.puzzle_file}")
    if config.p_std < 1.0 and not config.puzzle_file:
        raise ConfigError("p_std: values below 1 need a puzzle_file")
    out = _out_dir(args)

    def progress(row):
        print(f"step {row['step']:>7d}  games {row['games']:>6d}  loss {row['loss']:.4f}  "
              f"|r_d| {row['mean_abs_rd']:.4f}  psi-dist {row['psi_mean_dist']:.4f}")

    result = train_loop(config, out_dir=out, progress=progress)
    outputs = ["metrics.csv"] + [str(Path(p).relative_to(out)) for p in result.checkpoints]
    write_manifest(out, "train", config.seed, config.to_dict(),
                   {"config": str(args.config)}, outputs)
    print(f"trained {config.total_steps} steps over {result.games} games -> {out}")
    return EXIT_OK


def cmd_eval_puzzles(args) -> int:
    if not args.checkpoint or not args.puzzles:
        raise UsageError("eval-puzzles needs --checkpoint and --puzzles")
    rules = [r.strip() for r in args.rule.split(",")]
    for r in rules:
        if r not in {x.value for x in ev.SelectionRule}:
            raise UsageError(f"unknown rule {r!r}")
    ckpt = load_checkpoint(args.checkpoint)
    puzzles = ev.read_puzzles(args.puzzles)
    if not puzzles:
        print(f"error: no puzzles in {args.puzzles}", file=sys.stderr)
        return EXIT_RUNTIME
    game = get_game(ckpt.game, ckpt.config.history_length)
    if puzzles[0].position.game != game.name:
        raise UsageError(f"puzzles are for {puzzles[0].position.game}, checkpoint for {game.name}")
    seed = _seed(args)
    out = _out_dir(args)
    dataset = Path(args.puzzles).stem
    team = ckpt.team if args.diversity else None
    cfg = SearchConfig(n_simulations=args.simulations, diversity=args.diversity)
    rows, per_seed = [], []
    for k in range(args.eval_seeds):
        outcomes = [ev.evaluate_puzzle(p, ckpt.evaluator, team, game, cfg, seed + k, rules)
                    for p in puzzles]
        per_seed.append(ev.solve_rates(outcomes))
        for o in outcomes:
            for j, s in enumerate(o.player_scores):
                rows.append((dataset, o.puzzle_id, j, "player", seed + k, float(s)))
            for rule in rules:
                rows.append((dataset, o.puzzle_id, o.selected[rule], rule, seed + k,
                             float(o.subadditive[rule])))
            rows.append((dataset, o.puzzle_id, -1, "max_over_latents", seed + k,
                         float(o.max_over_latents)))
    write_csv(out / "puzzles.csv", ev.PUZZLE_COLUMNS, rows)
    summary = []
    for col in per_seed[0]:
        vals = np.array([r[col] for r in per_seed])
        summary.append((dataset, col, float(vals.mean()), float(vals.std()), len(vals)))
        print(f"{col:>18s}: {vals.mean():.4f} +- {vals.std():.4f}")
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    write_manifest(out, "eval-puzzles", seed,
                   {"rules": rules, "simulations": args.simulations,
                    "eval_seeds": args.eval_seeds, "diversity": args.diversity},
                   {"checkpoint": str(args.checkpoint), "puzzles": str(args.puzzles)},
                   ["puzzles.csv", "summary.csv"])
    return EXIT_OK


def cmd_match(args) -> int:
    if not args.checkpoint or not args.opponent:
        raise UsageError("match needs --checkpoint and --opponent")
    a = load_checkpoint(args.checkpoint)
    b = load_checkpoint(args.opponent)
    if a.game != b.game:
        print(f"error: incompatible games {a.game} vs {b.game}", file=sys.stderr)
        return EXIT_RUNTIME
    seed = _seed(args)
    out = _out_dir(args)
    game = get_game(a.game)
    openings = ev.generate_openings(game, args.openings, args.plies, seed, get_solver(game))
    records = ev.play_match(a.evaluator, b.evaluator, openings, args.simulations, args.seeds,
                            game, team=a.team if args.diversity else None,
                            opponent_team=b.team if args.diversity else None)
    write_csv(out / "matches.csv", ev.MATCH_COLUMNS,
              ((r.opening, r.color, r.seed, r.player, r.score) for r in records))
    table, _, _, players = ev.score_table(records)
    summary = []

    def add(column, mean_score, note=""):
        w = (mean_score + 1.0) / 2.0
        summary.append((column, w, ev.elo_or_inf(w), note))

    add("player_0", float(table[:, :, players.index(0)].mean()))
    if args.seeds >= 2:
        add("subadditive", ev.leave_one_out_selection(table, "max").score)
        add("subadditive_gap", ev.leave_one_out_selection(table, "gap").score)
    else:
        summary.append(("subadditive", "", "", "unavailable: needs at least 2 seeds"))
    add("max_over_latents", float(table.max(axis=2).mean()))
    write_csv(out / "summary.csv", MATCH_SUMMARY_COLUMNS, summary)
    for row in summary:
        print("  ".join(str(x) for x in row))
    write_manifest(out, "match", seed,
                   {"openings": len(openings), "plies": args.plies, "seeds": args.seeds,
                    "simulations": args.simulations, "diversity": args.diversity},
                   {"checkpoint": str(args.checkpoint), "opponent": str(args.opponent)},
                   ["matches.csv", "summary.csv"])
    return EXIT_OK


def cmd_gen_puzzles(args) -> int:
    if not args.game:
        raise UsageError("gen-puzzles needs --game")
    game = get_game(args.game)
    baseline = None
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        if ckpt.game != game.name:
            raise UsageError(f"baseline is for {ckpt.game}, not {game.name}")
        baseline = ckpt.evaluator
    if args.hardness and baseline is None:
        raise UsageError("--hardness needs a baseline --checkpoint")
    kinds = tuple(ev.PuzzleKind(k.strip()) for k in args.kinds.split(","))
    seed = 0 if args.seed is None else int(args.seed)
    criteria = ev.PuzzleCriteria(kinds=kinds, min_depth=args.min_depth, max_depth=args.max_depth,
                                 max_steps=args.max_steps, hardness=args.hardness,
                                 limit=args.limit, sample=args.sample, seed=seed)
    out = _out_dir(args)
    puzzles = ev.generate_puzzles(game, get_solver(game), baseline, criteria)
    ev.write_puzzles(out / "puzzles.txt", game, puzzles)
    counts = {k.value: sum(p.kind is k for p in puzzles) for k in ev.PuzzleKind}
    for k, n in counts.items():
        print(f"{k}: {n}")
    write_manifest(out, "gen-puzzles", seed,
                   {"game": game.name, "kinds": [k.value for k in kinds],
                    "min_depth": args.min_depth, "max_depth": args.max_depth,
                    "max_steps": args.max_steps, "hardness": args.hardness,
                    "limit": args.limit, "sample": args.sample, "counts": counts},
                   {"checkpoint": str(args.checkpoint) if args.checkpoint else None},
                   ["puzzles.txt"])
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.checkpoint:
        raise UsageError("report needs --checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    seed = _seed(args)
    out = _out_dir(args)
    game = get_game(ckpt.game)
    rep = ev.occupancy_report(ckpt.evaluator, game, args.games, args.simulations,
                              ckpt.team if args.diversity else None, seed)
    n, d = rep.mean.shape
    write_csv(out / "occupancy.csv", ("player", "feature", "value"),
              ((j, f, float(rep.mean[j, f])) for j in range(n) for f in range(d)))
    write_csv(out / "occupancy_std.csv", ("feature", "std"),
              ((f, float(rep.std[f])) for f in range(d)))
    write_csv(out / "occupancy_centered.csv", ("player", "feature", "value"),
              ((j, f, float(rep.centered[j, f])) for j in range(n) for f in range(d)))
    write_csv(out / "psi.csv", ("player", "feature", "value"),
              ((j, f, float(ckpt.team.psi[j, f])) for j in range(n) for f in range(d)))
    write_csv(out / "payoffs.csv", PAYOFF_COLUMNS, payoff_rows(ckpt.payoffs))
    graphs = build_graph(Matchmaker(ckpt.config.matchmaker), ckpt.payoffs, n)
    write_csv(out / "graphs.csv", GRAPH_COLUMNS, graph_rows(graphs))
    outputs = ["occupancy.csv", "occupancy_std.csv", "occupancy_centered.csv", "psi.csv",
               "payoffs.csv", "graphs.csv"]
    write_manifest(out, "report", seed, {"games": args.games, "simulations": args.simulations},
                   {"checkpoint": str(args.checkpoint)}, outputs)
    print(f"wrote {len(outputs)} tables to {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    if not args.position:
        raise UsageError("solve needs --position")
    name = args.position.split(" ", 1)[0]
    try:
        game = get_game(name)
        state = game.parse(args.position)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad position {args.position!r}: {exc}")
    value, moves = get_solver(game).solve(state)
    print(f"value {value:+d}  optimal {sorted(moves)}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval-puzzles": cmd_eval_puzzles, "match": cmd_match,
            "gen-puzzles": cmd_gen_puzzles, "report": cmd_report, "solve": cmd_solve}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="master seed (random and logged if omitted)")
    common.add_argument("--workers", type=int, help="self-play worker processes")
    common.add_argument("--checkpoint", help="checkpoint or run directory")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="divzero", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="run self-play training")

    p = sub.add_parser("eval-puzzles", parents=[common], help="score a team on puzzles")
    p.add_argument("--puzzles", help="puzzle file")
    p.add_argument("--rule", default="visit,value,lcb,gap", help="comma-separated rules")
    p.add_argument("--simulations", type=int, default=200)
    p.add_argument("--eval-seeds", type=int, default=3)
    p.add_argument("--no-diversity", dest="diversity", action="store_false",
                   help="search with the outcome value only")

    p = sub.add_parser("match", parents=[common], help="team vs opponent over openings")
    p.add_argument("--opponent", help="opponent checkpoint")
    p.add_argument("--openings", type=int, default=20)
    p.add_argument("--plies", type=int, default=2)
    p.add_argument("--seeds", type=int, default=2)
    p.add_argument("--simulations", type=int, default=100)
    p.add_argument("--no-diversity", dest="diversity", action="store_false")

    p = sub.add_parser("gen-puzzles", parents=[common], help="oracle puzzle generation")
    p.add_argument("--game", choices=["tictactoe", "connect4"])
    p.add_argument("--kinds", default="unique,multi,value")
    p.add_argument("--min-depth", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=3)
    p.add_argument("--hardness", action="store_true",
                   help="keep puzzles the baseline's greedy prior move fails")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--sample", type=int, default=None,
                   help="subsample candidate positions before solving")

    p = sub.add_parser("report", parents=[common], help="occupancy and league tables")
    p.add_argument("--games", type=int, default=10)
    p.add_argument("--simulations", type=int, default=50)
    p.add_argument("--no-diversity", dest="diversity", action="store_false")

    p = sub.add_parser("solve", parents=[common], help="exact value of a position")
    p.add_argument("--position", help='e.g. "tictactoe XX.OO.... X"')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
