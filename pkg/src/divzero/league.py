"""Matchmaking for a team trained concurrently: payoffs, interaction graphs, Nash.

A matchup is drawn as ``i ~ uniform``, ``color ~ uniform{first, second}``,
``j ~ graph[color][i]``. Graph rows are opponent mixtures; the PSRO family
restricts player ``i`` to opponents ``0..i`` (itself included).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .validation import check_rng

FIRST, SECOND = 0, 1
WIN, DRAW, LOSS = 0, 1, 2


class Matchmaker(str, enum.Enum):
    SELFPLAY = "selfplay"
    UNIFORM = "uniform"
    PSRO_NASH = "psro_nash"
    PSRO_RECTIFIED = "psro_rectified"
    FICTITIOUS_PLAY = "fictitious_play"
    PSRO_CYCLE = "psro_cycle"


LOWER_TRIANGULAR = (Matchmaker.PSRO_NASH, Matchmaker.PSRO_RECTIFIED, Matchmaker.FICTITIOUS_PLAY)


@dataclass(frozen=True)
class Matchup:
    exploiter: int
    exploitee: int
    color: int  # exploiter's color: FIRST moves first (P1), SECOND moves second

    @property
    def first_mover(self) -> int:
        return self.exploiter if self.color == FIRST else self.exploitee

    @property
    def second_mover(self) -> int:
        return self.exploitee if self.color == FIRST else self.exploiter


class PayoffTable:
    """Win/draw/loss counts of exploiter ``i`` vs ``j``, one matrix per exploiter color."""

    def __init__(self, n_players: int):
        self.n_players = n_players
        self.counts = np.zeros((2, n_players, n_players, 3), dtype=np.int64)

    def games(self, color: int, i: int, j: int) -> int:
        return int(self.counts[color, i, j].sum())

    def cell(self, color: int, i: int, j: int) -> Tuple[int, int, int, int]:
        w, d, l = (int(x) for x in self.counts[color, i, j])
        return w, d, l, w + d + l

    def winrate(self, color: int, i: int, j: int) -> float:
        w, d, _, n = self.cell(color, i, j)
        return (w + 0.5 * d) / n if n else 0.5

    def first_vs_second(self) -> Tuple[np.ndarray, np.ndarray]:
        """Pooled (wins - losses, games) for row player moving first vs column moving second."""
        c = self.counts
        wins = c[FIRST, :, :, WIN] + c[SECOND, :, :, LOSS].T
        losses = c[FIRST, :, :, LOSS] + c[SECOND, :, :, WIN].T
        games = c[FIRST].sum(axis=-1) + c[SECOND].sum(axis=-1).T
        return (wins - losses).astype(np.float64), games.astype(np.float64)

    def first_mover_payoff(self) -> np.ndarray:
        """Mean score of row-as-first-mover vs column-as-second; empty cells count as draws."""
        net, games = self.first_vs_second()
        return np.divide(net, games, out=np.zeros_like(net), where=games > 0)

    def pooled_payoff(self) -> np.ndarray:
        """Mean score of i vs j over both colors (i's perspective)."""
        c = self.counts
        net = (c[..., WIN] - c[..., LOSS]).sum(axis=0).astype(np.float64)
        games = c.sum(axis=(0, -1)).astype(np.float64)
        return np.divide(net, games, out=np.zeros_like(net), where=games > 0)

    def copy(self) -> "PayoffTable":
        out = PayoffTable(self.n_players)
        out.counts = self.counts.copy()
        return out


def record_result(table: PayoffTable, matchup: Matchup, outcome: int) -> None:
    """``outcome`` is +1/0/-1 from the first mover's perspective."""
    if outcome not in (-1, 0, 1):
        raise ValueError(f"outcome must be -1, 0 or 1, got {outcome!r}")
    mine = outcome if matchup.color == FIRST else -outcome
    idx = WIN if mine > 0 else DRAW if mine == 0 else LOSS
    table.counts[matchup.color, matchup.exploiter, matchup.exploitee, idx] += 1


def solve_nash(A) -> Tuple[np.ndarray, np.ndarray, float]:
    """Row mixture, column mixture and value of the zero-sum game (row maximises)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise ValueError("payoff must be a non-empty matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("payoff matrix has non-finite entries")
    m, n = A.shape
    if np.all(A == A.flat[0]):
        return np.full(m, 1.0 / m), np.full(n, 1.0 / n), float(A.flat[0])
    p, v_row = _maximin(A)
    q, v_col = _maximin(-A.T)
    return p, q, 0.5 * (v_row - v_col)


_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _maximin(A: np.ndarray) -> Tuple[np.ndarray, float]:
    m, n = A.shape
    # variables: p (m), v ; minimise -v  s.t.  v - (A^T p)_j <= 0,  sum p = 1
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A.T, np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0], bounds=bounds,
                  method="highs", options=_LP_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"Nash LP failed: {res.message}")
    p = np.clip(res.x[:m], 0.0, None)
    p /= p.sum()
    return p, float(np.min(p @ A))


def exploitability(A, p, q) -> float:
    """Largest unilateral gain available to either side."""
    A = np.asarray(A, dtype=np.float64)
    value = float(p @ A @ q)
    return max(float(np.max(A @ q)) - value, value - float(np.min(p @ A)))


def build_graph(kind, table: PayoffTable, n_players: int) -> Tuple[np.ndarray, np.ndarray]:
    """Interaction graphs (exploiter moving first, exploiter moving second)."""
    kind = Matchmaker(kind)
    if n_players < 1:
        raise ValueError("empty population")
    N = n_players
    if kind is Matchmaker.SELFPLAY:
        g = np.eye(N)
        return g, g.copy()
    if kind is Matchmaker.UNIFORM:
        g = np.full((N, N), 1.0 / N)
        return g, g.copy()
    if kind is Matchmaker.FICTITIOUS_PLAY:
        g = np.zeros((N, N))
        for i in range(N):
            g[i, :i + 1] = 1.0 / (i + 1)
        return g, g.copy()

    M = table.first_mover_payoff()
    graphs = np.zeros((2, N, N))

    def nash_rows(i, k):
        # k = size of the sub-population {0..k-1}; returns (mix vs second movers, vs first)
        p, q, _ = solve_nash(M[:k, :k])
        return q, p

    if kind in (Matchmaker.PSRO_NASH, Matchmaker.PSRO_RECTIFIED):
        pooled = table.pooled_payoff()
        for i in range(N):
            vs_second, vs_first = nash_rows(i, i + 1)
            for color, mix in ((FIRST, vs_second), (SECOND, vs_first)):
                row = np.zeros(N)
                row[:i + 1] = mix
                if kind is Matchmaker.PSRO_RECTIFIED:
                    beaten_by = pooled[i, :] < 0
                    beaten_by[i] = False
                    row[beaten_by] = 0.0
                    if row.sum() <= 0:
                        row[i] = 1.0
                graphs[color, i] = row / row.sum()
    elif kind is Matchmaker.PSRO_CYCLE:
        for i in range(N - 1):
            graphs[:, i, (i + 1) % (N - 1)] = 1.0
        vs_second, vs_first = nash_rows(N - 1, N)
        graphs[FIRST, N - 1] = vs_second
        graphs[SECOND, N - 1] = vs_first
    return graphs[FIRST], graphs[SECOND]


def check_graph(graph, kind=None, atol: float = 1e-9) -> np.ndarray:
    g = np.asarray(graph, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("interaction graph must be square")
    if np.any(g < 0) or np.any(np.abs(g.sum(axis=1) - 1.0) > atol):
        raise ValueError("interaction graph rows must be non-negative and sum to 1")
    if kind is not None and Matchmaker(kind) in LOWER_TRIANGULAR and np.any(np.triu(g, 1) != 0):
        raise ValueError(f"{Matchmaker(kind).value} graph must be lower triangular")
    return g


def sample_matchup(kind, graphs: Sequence[np.ndarray], n_players: int, rng) -> Matchup:
    rng = check_rng(rng)
    kind = Matchmaker(kind)
    i = int(rng.integers(n_players))
    color = int(rng.integers(2))
    if kind is Matchmaker.SELFPLAY:
        return Matchup(i, i, color)
    row = np.asarray(graphs[color][i], dtype=np.float64)
    if row.shape != (n_players,) or np.any(row < 0) or abs(row.sum() - 1.0) > 1e-9:
        raise ValueError(f"malformed interaction-graph row for player {i}: {row}")
    j = int(rng.choice(n_players, p=row / row.sum()))
    return Matchup(i, j, color)


def filter_experience(matchup: Matchup, steps):
    """Keep the exploiter's transitions; self-play keeps both sides."""
    if matchup.exploiter == matchup.exploitee:
        return list(steps)
    return [s for s in steps if s.latent == matchup.exploiter]
