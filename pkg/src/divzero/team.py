"""Estimator-style wrapper around training and team-level play."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluation import PlayerSearchStats, evaluate_puzzle, solve_rates, subadditive_select
from .games import GameState, get_game
from .search import SearchConfig, run_search
from .training import TrainConfig, train_loop


class DiverseTeam(BaseEstimator):
    """A latent-conditioned team trained by self-play.

    ``fit`` runs the training loop (``X``, if given, is a pool of start
    positions mixed in with probability ``1 - p_std``); ``predict`` returns
    the team's move for each position after every player searches and one is
    picked by ``selection_rule``; ``score`` is the mean sub-additive puzzle
    score. Settings not exposed here go through ``config_overrides``.
    """

    def __init__(self, game: str = "tictactoe", n_players: int = 5, backend: str = "tabular",
                 total_steps: int = 50_000, batch_size: int = 256, n_simulations: int = 100,
                 learning_rate: float = 0.01, lam: float = 0.7, diversity: bool = True,
                 matchmaker: str = "psro_nash", p_std: float = 1.0,
                 eval_simulations: int = 200, selection_rule: str = "gap",
                 config_overrides: Optional[dict] = None, random_state: int = 0):
        self.game = game
        self.n_players = n_players
        self.backend = backend
        self.total_steps = total_steps
        self.batch_size = batch_size
        self.n_simulations = n_simulations
        self.learning_rate = learning_rate
        self.lam = lam
        self.diversity = diversity
        self.matchmaker = matchmaker
        self.p_std = p_std
        self.eval_simulations = eval_simulations
        self.selection_rule = selection_rule
        self.config_overrides = config_overrides
        self.random_state = random_state

    def make_config(self) -> TrainConfig:
        kw = dict(game=self.game, n_players=self.n_players, backend=self.backend,
                  total_steps=self.total_steps, batch_size=self.batch_size,
                  n_simulations=self.n_simulations, learning_rate=self.learning_rate,
                  lam=self.lam, diversity=self.diversity, matchmaker=self.matchmaker,
                  p_std=self.p_std, seed=int(self.random_state))
        kw.update(self.config_overrides or {})
        return TrainConfig(**kw)

    def _check_positions(self, X) -> list:
        game = get_game(self.game)
        X = list(X)
        for s in X:
            if not isinstance(s, GameState) or s.game != game.name:
                raise ValueError(f"expected {game.name} positions, got {s!r}")
        return X

    def fit(self, X: Optional[Sequence[GameState]] = None, y=None, out_dir=None):
        config = self.make_config()
        pool = None if X is None else self._check_positions(X)
        res = train_loop(config, out_dir=out_dir, start_pool=pool)
        self.config_ = config
        self.evaluator_ = res.evaluator
        self.team_ = res.team
        self.payoffs_ = res.payoffs
        self.graphs_ = res.graphs
        self.metrics_ = res.metrics
        return self

    def _search_config(self) -> SearchConfig:
        return SearchConfig(n_simulations=self.eval_simulations, diversity=self.diversity)

    def player_stats(self, state: GameState, seed: int = 0):
        check_is_fitted(self, "evaluator_")
        game = get_game(self.game)
        seqs = np.random.SeedSequence(seed).spawn(self.n_players)
        return [PlayerSearchStats.from_result(
            run_search(state, j, self.evaluator_, self.team_, self._search_config(),
                       np.random.default_rng(seqs[j]), game))
            for j in range(self.n_players)]

    def predict(self, X: Sequence[GameState], seed: int = 0) -> np.ndarray:
        X = self._check_positions(X)
        return np.array([subadditive_select(self.player_stats(s, seed), self.selection_rule)[1]
                         for s in X], dtype=np.int64)

    def evaluate_puzzles(self, puzzles, seed: int = 0) -> list:
        check_is_fitted(self, "evaluator_")
        game = get_game(self.game)
        return [evaluate_puzzle(p, self.evaluator_, self.team_, game, self._search_config(),
                                seed) for p in puzzles]

    def score(self, puzzles, y=None, seed: int = 0) -> float:
        outcomes = self.evaluate_puzzles(puzzles, seed)
        return solve_rates(outcomes)[self.selection_rule] if outcomes else 0.0


__all__ = ["DiverseTeam"]
