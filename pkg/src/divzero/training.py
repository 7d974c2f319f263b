"""Actor-learner self-play loop for a latent-conditioned team.

Each iteration draws ``games_per_iteration`` matchups, plays them against a
frozen snapshot of (parameters, team state, interaction graphs), and then lets
the single learner fold the results in order: experience filtering, occupancy
update, payoff bookkeeping, replay storage and ``updates_per_iteration``
gradient steps. Randomness is split per purpose and per game from one seed,
so a run is reproducible regardless of how many worker processes play games.
"""
from __future__ import annotations

import csv
import dataclasses
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import league
from .diversity import (Step, TeamState, Trajectory, intrinsic_direction, intrinsic_value_target,
                        update_occupancy)
from .evaluator import TrainTarget, make_evaluator
from .games import P1, Game, GameState, get_game
from .search import SearchConfig, run_search, select_action
from .validation import check_positive_int, check_probability, check_rng

SPLIT_MODES = ("none", "random", "family")
METRIC_COLUMNS = ("step", "games", "loss", "value_loss", "intrinsic_loss", "policy_loss",
                  "l2", "mean_abs_rd", "psi_min_dist", "psi_mean_dist")

# rng stream ids (SeedSequence spawn keys)
_GAME_STREAM, _STORE_STREAM, _BATCH_STREAM = 1, 2, 3


@dataclass(frozen=True)
class TrainConfig:
    game: str = "tictactoe"
    backend: str = "tabular"
    hidden: Tuple[int, ...] = (64, 64)
    n_players: int = 5
    total_steps: int = 50_000
    games_per_iteration: int = 1
    updates_per_iteration: int = 1
    batch_size: int = 256
    replay_capacity: int = 100_000
    keep_probability: float = 1.0
    learning_rate: float = 0.01
    momentum: float = 0.9
    l2: float = 1e-4
    intrinsic_weight: float = 1.0
    n_simulations: int = 100
    c_base: float = 19652.0
    c_init: float = 1.25
    root_noise: bool = False
    temperature_cutoff: Optional[int] = None  # None -> game default
    diversity: bool = True
    lam: float = 0.7
    ell0: Optional[float] = None  # None -> 0.3 * sqrt(D)
    beta: float = 0.99
    n_td: int = 4
    matchmaker: str = "psro_nash"
    graph_refresh: int = 256
    p_std: float = 1.0
    puzzle_file: Optional[str] = None
    include_intermediate: bool = False
    split: str = "none"
    test_fraction: float = 0.2
    history_length: int = 0
    history_dropout: float = 0.0
    explore: bool = False
    explore_steps: int = 15
    explore_temperature: float = 10.0
    checkpoint_every: int = 0
    log_every: int = 100
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.game not in ("tictactoe", "connect4"):
            raise ValueError(f"game: unknown game {self.game!r}")
        if self.backend not in ("tabular", "mlp"):
            raise ValueError(f"backend: expected 'tabular' or 'mlp', got {self.backend!r}")
        for name in ("n_players", "total_steps", "games_per_iteration", "batch_size",
                     "replay_capacity", "n_simulations", "graph_refresh", "log_every", "workers"):
            check_positive_int(getattr(self, name), name)
        check_positive_int(self.updates_per_iteration, "updates_per_iteration", allow_zero=True)
        check_positive_int(self.checkpoint_every, "checkpoint_every", allow_zero=True)
        check_positive_int(self.history_length, "history_length", allow_zero=True)
        check_positive_int(self.explore_steps, "explore_steps", allow_zero=True)
        for name in ("keep_probability", "lam", "beta", "p_std", "history_dropout",
                     "test_fraction"):
            check_probability(getattr(self, name), name)
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay_capacity must be at least batch_size")
        if self.n_td <= 0 or self.n_td % 2:
            raise ValueError(f"n_td must be a positive even integer, got {self.n_td}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.explore_temperature <= 0:
            raise ValueError("explore_temperature must be positive")
        league.Matchmaker(self.matchmaker)
        if self.split not in SPLIT_MODES:
            raise ValueError(f"split: expected one of {SPLIT_MODES}, got {self.split!r}")
        if self.temperature_cutoff is not None:
            check_positive_int(self.temperature_cutoff, "temperature_cutoff", allow_zero=True)
        if self.ell0 is not None and self.ell0 <= 0:
            raise ValueError("ell0 must be positive")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def search_config(self) -> SearchConfig:
        return SearchConfig(n_simulations=self.n_simulations, c_base=self.c_base,
                            c_init=self.c_init, diversity=self.diversity,
                            root_noise=self.root_noise)

    def cutoff(self, game: Game) -> int:
        if self.temperature_cutoff is None:
            return game.spec.temperature_cutoff
        return self.temperature_cutoff


class ReplayBuffer:
    """Bounded FIFO of ``(state, TrainTarget)`` pairs."""

    def __init__(self, capacity: int):
        self.capacity = check_positive_int(capacity, "capacity")
        self._items: deque = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def add(self, state: GameState, target: TrainTarget) -> None:
        self._items.append((state, target))

    def sample(self, batch_size: int, rng) -> List[Tuple[GameState, TrainTarget]]:
        """Uniform sample with replacement."""
        if not self._items:
            raise ValueError("cannot sample from an empty replay buffer")
        rng = check_rng(rng)
        idx = rng.integers(len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


# -- start positions ------------------------------------------------------

def split_positions(positions: Sequence[GameState], mode: str, game: Game,
                    test_fraction: float = 0.2, seed: int = 0
                    ) -> Tuple[List[GameState], List[GameState]]:
    """Train/test split of a position pool.

    ``random`` shuffles positions; ``family`` holds out whole position
    families (``game.family_key``), taking families in a seeded order until the
    test share reaches ``test_fraction``.
    """
    positions = list(positions)
    if mode == "none":
        return positions, []
    rng = np.random.default_rng(seed)
    if mode == "random":
        order = rng.permutation(len(positions))
        n_test = int(round(test_fraction * len(positions)))
        test_idx = set(order[:n_test].tolist())
    elif mode == "family":
        fams = sorted({game.family_key(s) for s in positions})
        fams = [fams[k] for k in rng.permutation(len(fams))]
        target = test_fraction * len(positions)
        held, count = set(), 0
        for f in fams:
            if count >= target:
                break
            held.add(f)
            count += sum(1 for s in positions if game.family_key(s) == f)
        test_idx = {k for k, s in enumerate(positions) if game.family_key(s) in held}
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    train = [s for k, s in enumerate(positions) if k not in test_idx]
    test = [s for k, s in enumerate(positions) if k in test_idx]
    return train, test


class StartSampler:
    """Standard start with probability ``p_std``, else a uniform pool position."""

    def __init__(self, game: Game, p_std: float = 1.0, pool: Sequence[GameState] = (),
                 intermediates: Sequence[Sequence[GameState]] = (),
                 include_intermediate: bool = False):
        self.game = game
        self.p_std = check_probability(p_std, "p_std")
        eligible = list(pool)
        if include_intermediate:
            for line in intermediates:
                eligible.extend(line)
        seen, self.pool = set(), []
        for s in eligible:
            if game.is_terminal(s) or s.key() in seen:
                continue
            seen.add(s.key())
            self.pool.append(s)
        if self.p_std < 1.0 and not self.pool:
            raise ValueError("empty start-position pool with p_std < 1")

    def sample(self, rng) -> GameState:
        rng = check_rng(rng)
        if self.p_std >= 1.0 or rng.random() < self.p_std:
            return self.game.initial_state()
        return self.pool[int(rng.integers(len(self.pool)))]


def start_position(sampler: StartSampler, rng) -> GameState:
    return sampler.sample(rng)


# -- self-play --------------------------------------------------------------

def self_play_game(matchup: league.Matchup, evaluator, team: Optional[TeamState],
                   config: TrainConfig, rng, game: Game,
                   start: Optional[GameState] = None) -> Trajectory:
    """Play one game; each side searches with its own latent only."""
    rng = check_rng(rng)
    state = game.initial_state() if start is None else start
    sconf = config.search_config()
    cutoff = config.cutoff(game)
    diverse = config.diversity and team is not None and team.n_players > 1
    directions = {}
    traj = Trajectory()
    ply = 0
    while not game.is_terminal(state):
        latent = matchup.first_mover if state.to_move == P1 else matchup.second_mover
        res = run_search(state, latent, evaluator, team if diverse else None, sconf, rng, game)
        counts = res.counts(game.spec.n_actions)
        if config.explore and ply < config.explore_steps:
            move = select_action(counts, ply, config.explore_steps, rng,
                                 temperature=config.explore_temperature)
        else:
            move = select_action(counts, ply, cutoff, rng)
        phi = game.feature_map(state, move)
        r_d = 0.0
        if diverse:
            if latent not in directions:
                directions[latent] = intrinsic_direction(team, latent)
            r_d = float(phi @ directions[latent])
        traj.steps.append(Step(state, move, latent, state.to_move, phi, r_d, res.pi,
                               res.root_value))
        state = game.apply_move(state, move)
        ply += 1
    traj.outcome = game.terminal_outcome(state)
    traj.final_state = state
    return traj


def make_targets(trajectory: Trajectory, keep: Sequence[int], n_td: int,
                 vd_fn: Callable[[Step], float]) -> List[Tuple[GameState, TrainTarget]]:
    """Targets for the steps indexed by ``keep``: z from the mover's side, TD z_d."""
    steps = trajectory.steps
    rewards = [s.r_d for s in steps]
    out = []
    for t in keep:
        s = steps[t]
        z = float(trajectory.outcome if s.side == P1 else -trajectory.outcome)
        z_d = intrinsic_value_target(rewards, t, n_td, lambda k, s=s: vd_fn(steps[k], s.latent))
        out.append((s.state, TrainTarget(np.asarray(s.pi, dtype=np.float64), z, float(z_d),
                                         s.latent)))
    return out


def store_transitions(buffer: ReplayBuffer, trajectory: Trajectory, keep_probability: float,
                      rng, n_td: int = 4, evaluator=None,
                      steps: Optional[Sequence[Step]] = None) -> int:
    """Store each eligible step independently with ``keep_probability``.

    ``steps`` restricts storage to a filtered subset (default: all steps).
    Intrinsic bootstraps come from ``evaluator`` (zero when it is None).
    Returns the number stored.
    """
    check_probability(keep_probability, "keep_probability")
    rng = check_rng(rng)
    allowed = None if steps is None else {id(s) for s in steps}
    candidates = [t for t, s in enumerate(trajectory.steps)
                  if allowed is None or id(s) in allowed]
    keep = [t for t in candidates if rng.random() < keep_probability]

    def vd_fn(step: Step, latent: int) -> float:
        return 0.0 if evaluator is None else float(evaluator.evaluate(step.state, latent).v_d)

    for state, target in make_targets(trajectory, keep, n_td, vd_fn):
        buffer.add(state, target)
    return len(keep)


# -- the loop -------------------------------------------------------------

@dataclass
class TrainResult:
    config: TrainConfig
    evaluator: object
    team: TeamState
    payoffs: league.PayoffTable
    graphs: Tuple[np.ndarray, np.ndarray]
    metrics: List[dict] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    games: int = 0


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _play_one(args):
    """Worker entry: (game index, snapshot pieces) -> (matchup, start, trajectory)."""
    g, config, evaluator, team, graphs, sampler = args
    game = get_game(config.game, config.history_length)
    rng = _stream(config.seed, _GAME_STREAM, g)
    matchup = league.sample_matchup(config.matchmaker, graphs, config.n_players, rng)
    start = sampler.sample(rng)
    traj = self_play_game(matchup, evaluator, team, config, rng, game, start)
    return matchup, traj


def load_start_pool(config: TrainConfig, game: Game):
    """Train-side start positions (and intermediate lines) from ``config.puzzle_file``."""
    if not config.puzzle_file:
        return [], []
    from .evaluation import read_puzzles
    puzzles = read_puzzles(config.puzzle_file)
    positions = [p.position for p in puzzles]
    train, _ = split_positions(positions, config.split, game, config.test_fraction,
                               config.seed)
    keys = {s.key() for s in train}
    lines = [p.main_line(game) for p in puzzles if p.position.key() in keys]
    return train, lines


def pairwise_distances(psi: np.ndarray) -> np.ndarray:
    n = len(psi)
    return np.array([np.linalg.norm(psi[a] - psi[b]) for a in range(n) for b in range(a + 1, n)])


def train_loop(config: TrainConfig, out_dir=None, evaluator=None,
               progress: Optional[Callable[[dict], None]] = None,
               start_pool: Optional[Sequence[GameState]] = None,
               start_lines: Sequence[Sequence[GameState]] = ()) -> TrainResult:
    """Run training to ``config.total_steps`` gradient updates.

    Start positions come from ``start_pool`` when given (already split),
    otherwise from ``config.puzzle_file``. With ``out_dir`` set, checkpoints
    (every ``checkpoint_every`` steps and at the end) and ``metrics.csv`` are
    written there.
    """
    game = get_game(config.game, config.history_length)
    if evaluator is None:
        kw = dict(l2=config.l2, intrinsic_weight=config.intrinsic_weight,
                  momentum=config.momentum, history_length=config.history_length)
        if config.backend == "mlp":
            kw.update(hidden=tuple(config.hidden), random_state=config.seed)
        evaluator = make_evaluator(config.backend, config.game, config.n_players, **kw)
    team = TeamState.create(config.n_players, game.spec.feature_dim, config.lam, config.ell0,
                            config.beta)
    payoffs = league.PayoffTable(config.n_players)
    graphs = league.build_graph(config.matchmaker, payoffs, config.n_players)
    if start_pool is None:
        pool, lines = load_start_pool(config, game)
    else:
        pool, lines = list(start_pool), list(start_lines)
    sampler = StartSampler(game, config.p_std, pool, lines, config.include_intermediate)
    buffer = ReplayBuffer(config.replay_capacity)
    batch_rng = _stream(config.seed, _BATCH_STREAM)
    result = TrainResult(config, evaluator, team, payoffs, graphs)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    step = games = 0
    since_refresh = 0
    recent_rd: deque = deque(maxlen=256)
    executor = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        while step < config.total_steps:
            snap_eval = evaluator.snapshot() if executor else evaluator
            snap_team = team.snapshot()
            jobs = [(games + k, config, snap_eval, snap_team, graphs, sampler)
                    for k in range(config.games_per_iteration)]
            played = list(executor.map(_play_one, jobs)) if executor else map(_play_one, jobs)
            for k, (matchup, traj) in enumerate(played):
                g = games + k
                kept = league.filter_experience(matchup, traj.steps)
                if kept:
                    update_occupancy(team, Trajectory(kept, traj.outcome), matchup.exploiter)
                league.record_result(payoffs, matchup, int(traj.outcome))
                recent_rd.extend(abs(s.r_d) for s in kept)
                store_transitions(buffer, traj, config.keep_probability,
                                  _stream(config.seed, _STORE_STREAM, g), config.n_td,
                                  evaluator, kept)
            games += config.games_per_iteration
            since_refresh += config.games_per_iteration
            if since_refresh >= config.graph_refresh:
                graphs = league.build_graph(config.matchmaker, payoffs, config.n_players)
                since_refresh = 0
            if not len(buffer):
                continue
            for _ in range(config.updates_per_iteration):
                if step >= config.total_steps:
                    break
                batch = buffer.sample(config.batch_size, batch_rng)
                step += 1
                if step % config.log_every == 0 or step == config.total_steps:
                    row = _metrics_row(evaluator, batch, step, games, recent_rd, team)
                    result.metrics.append(row)
                    if progress is not None:
                        progress(row)
                evaluator.update(batch, config.learning_rate, config.history_dropout, batch_rng)
                if out is not None and config.checkpoint_every and \
                        step % config.checkpoint_every == 0 and step < config.total_steps:
                    result.checkpoints.append(str(_checkpoint(out, step, result, games)))
    finally:
        if executor is not None:
            executor.shutdown()
    result.graphs = graphs
    result.games = games
    if out is not None:
        result.checkpoints.append(str(_checkpoint(out, step, result, games)))
        write_metrics(out / "metrics.csv", result.metrics)
    return result


def _metrics_row(evaluator, batch, step, games, recent_rd, team) -> dict:
    terms = evaluator.loss_terms(batch)
    dists = pairwise_distances(team.psi)
    return {"step": step, "games": games, "loss": terms["total"],
            "value_loss": terms["value"], "intrinsic_loss": terms["intrinsic"],
            "policy_loss": terms["policy"], "l2": terms["l2"],
            "mean_abs_rd": float(np.mean(recent_rd)) if recent_rd else 0.0,
            "psi_min_dist": float(dists.min()) if len(dists) else 0.0,
            "psi_mean_dist": float(dists.mean()) if len(dists) else 0.0}


def write_metrics(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([r["step"], r["games"]] + [repr(float(r[c])) for c in METRIC_COLUMNS[2:]])


def _checkpoint(out: Path, step: int, result: TrainResult, games: int) -> Path:
    from .persistence import save_checkpoint
    return save_checkpoint(out / "checkpoints" / f"step_{step:07d}", result.config,
                           result.evaluator, result.team, result.payoffs, result.graphs,
                           step, games)


def smoothed(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing moving average (shorter windows at the start)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


__all__ = ["TrainConfig", "ReplayBuffer", "StartSampler", "split_positions", "start_position",
           "self_play_game", "make_targets", "store_transitions", "train_loop", "TrainResult",
           "write_metrics", "pairwise_distances", "smoothed", "METRIC_COLUMNS",
           "load_start_pool"]
