"""Behavioural diversity: expected features, the team utility and intrinsic rewards.

Each player ``i`` keeps ``psi[i]``, an exponential moving average of the mean
successor-board features over its own moves in completed games. Diversity is
measured against the nearest other player ``j*``; at distance ``d`` the
per-player utility term is ``0.5 d^2 - 0.2 d^5 / ell0^3``, whose gradient in
``psi[i]`` is ``(1 - (d / ell0)^3) (psi[i] - psi[j*])``. That gradient, dotted
with a move's features, is the move's intrinsic reward.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .validation import check_probability


@dataclass
class Step:
    """One move of a game record."""

    state: object
    move: int
    latent: int
    side: int
    phi: np.ndarray
    r_d: float = 0.0
    pi: Optional[np.ndarray] = None
    root_value: float = 0.0


@dataclass
class Trajectory:
    steps: List[Step] = field(default_factory=list)
    outcome: Optional[int] = None  # from P1's perspective
    final_state: object = None

    def __len__(self):
        return len(self.steps)

    def by_latent(self, latent: int) -> List[Step]:
        return [s for s in self.steps if s.latent == latent]


@dataclass
class TeamState:
    n_players: int
    feature_dim: int
    lambdas: np.ndarray
    psi: np.ndarray
    ell0: float
    beta: float = 0.99

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=np.float64)
        self.psi = np.asarray(self.psi, dtype=np.float64)
        if self.lambdas.shape != (self.n_players,):
            raise ValueError("need one lambda per player")
        if self.lambdas[0] != 1.0:
            raise ValueError("player 0 must have lambda = 1")
        if np.any(self.lambdas < 0) or np.any(self.lambdas > 1):
            raise ValueError("lambdas must lie in [0, 1]")
        if self.psi.shape != (self.n_players, self.feature_dim):
            raise ValueError(f"psi must have shape ({self.n_players}, {self.feature_dim})")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi entries must be finite")
        if self.ell0 <= 0:
            raise ValueError("ell0 must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

    @classmethod
    def create(cls, n_players: int, feature_dim: int, lam: float = 0.7,
               ell0: Optional[float] = None, beta: float = 0.99) -> "TeamState":
        check_probability(lam, "lambda")
        lambdas = np.full(n_players, float(lam))
        lambdas[0] = 1.0
        if ell0 is None:
            ell0 = default_ell0(feature_dim)
        return cls(n_players, feature_dim, lambdas, np.zeros((n_players, feature_dim)),
                   float(ell0), beta)

    def snapshot(self) -> "TeamState":
        return copy.deepcopy(self)


def default_ell0(feature_dim: int) -> float:
    return 0.3 * float(np.sqrt(feature_dim))


def update_occupancy(team: TeamState, trajectory: Trajectory, player: int) -> np.ndarray:
    """EMA update of ``psi[player]`` from the player's own moves; no-op if it never moved."""
    own = [s.phi for s in trajectory.steps if s.latent == player]
    if not own:
        return team.psi[player]
    mean_phi = np.mean(own, axis=0)
    team.psi[player] = team.beta * team.psi[player] + (1.0 - team.beta) * mean_phi
    return team.psi[player]


def nearest_rival(i: int, team: TeamState) -> int:
    """Index of the closest other player in feature space (lowest index on ties)."""
    if team.n_players < 2:
        raise ValueError("a team of one has no rival")
    d2 = np.sum((team.psi - team.psi[i]) ** 2, axis=1)
    d2[i] = np.inf
    return int(np.argmin(d2))


def pair_utility(d: float, ell0: float) -> float:
    return 0.5 * d ** 2 - 0.2 * d ** 5 / ell0 ** 3


def diversity_utility(team: TeamState) -> float:
    total = 0.0
    for i in range(team.n_players):
        j = nearest_rival(i, team)
        d = float(np.linalg.norm(team.psi[i] - team.psi[j]))
        total += (1.0 - team.lambdas[i]) * pair_utility(d, team.ell0)
    return total


def intrinsic_reward(phi, psi_i, psi_j, ell0: float) -> float:
    diff = np.asarray(psi_i, dtype=np.float64) - np.asarray(psi_j, dtype=np.float64)
    d = float(np.linalg.norm(diff))
    return float((1.0 - (d / ell0) ** 3) * np.dot(phi, diff))


def intrinsic_direction(team: TeamState, i: int) -> np.ndarray:
    """``w`` such that player i's intrinsic reward for features phi is ``phi . w``."""
    j = nearest_rival(i, team)
    diff = team.psi[i] - team.psi[j]
    d = float(np.linalg.norm(diff))
    return (1.0 - (d / team.ell0) ** 3) * diff


def combined_reward(r_d: float, r_e: float, lam: float) -> float:
    check_probability(lam, "lambda")
    return (1.0 - lam) * r_d + lam * r_e


def intrinsic_value_target(rewards: Sequence[float], t: int, n_td: int,
                           vd_bootstrap) -> float:
    """TD target for the intrinsic value at step ``t`` of a game.

    ``rewards[k]`` is the intrinsic reward of the move at step ``k`` (the
    player's own moves are every other step). The target sums the player's
    rewards at ``t, t+2, ..., t+n_td-2`` and bootstraps ``vd_bootstrap(t+n_td)``;
    if the game ends inside the window the sum truncates and the bootstrap is 0.
    """
    if n_td <= 0 or n_td % 2:
        raise ValueError(f"N_TD must be a positive even integer, got {n_td}")
    T = len(rewards)
    total = 0.0
    for k in range(n_td // 2):
        step = t + 2 * k
        if step >= T:
            return total
        total += rewards[step]
    if t + n_td >= T:
        return total
    return total + float(vd_bootstrap(t + n_td))
