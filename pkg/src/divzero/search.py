"""PUCT Monte-Carlo tree search with optional diversity-aware value backup.

Values on edges are stored from the perspective of the player to move at the
edge's parent node and change sign every ply during backup.

With diversity enabled, a simulation's backed-up value (from the searching
player's side) is::

    lam * v_leaf + (1 - lam) * (sum of own-turn edge rewards + v_d_leaf)

where edge rewards on the opponent's turns are zero and ``v_d_leaf`` is only
bootstrapped at leaves where the searching player is to move. The searching
player's latent conditions every evaluator query in the tree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .games import Game, GameState, P1
from .validation import check_rng


@dataclass
class NodeStats:
    N: int = 0
    W: float = 0.0
    Q: float = 0.0
    P: float = 0.0


@dataclass(frozen=True)
class SearchConfig:
    n_simulations: int = 100
    c_base: float = 19652.0
    c_init: float = 1.25
    diversity: bool = False
    root_noise: bool = False
    dirichlet_alpha: float = 0.3
    noise_fraction: float = 0.25
    trace: bool = False

    def __post_init__(self):
        if self.n_simulations < 1:
            raise ValueError("n_simulations must be at least 1")
        if self.c_base <= 0 or self.c_init < 0:
            raise ValueError("c_base must be positive and c_init non-negative")


@dataclass
class SearchResult:
    pi: np.ndarray
    moves: List[int]
    N: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    root_value: float
    latent: int
    root: "Node" = field(repr=False, default=None)
    trace: Optional[list] = field(repr=False, default=None)

    def counts(self, n_actions: int) -> np.ndarray:
        out = np.zeros(n_actions)
        out[self.moves] = self.N
        return out

    def best_move(self) -> int:
        """Most-visited move, lowest id on ties."""
        return self.moves[int(np.argmax(self.N))]


class Node:
    __slots__ = ("state", "to_move", "moves", "P", "N", "W", "Q", "children", "reward",
                 "terminal", "v", "v_d")

    def __init__(self, state: GameState):
        self.state = state
        self.to_move = state.to_move
        self.moves: List[int] = []
        self.P: List[float] = []
        self.N: List[int] = []
        self.W: List[float] = []
        self.Q: List[float] = []
        self.children: List[Optional["Node"]] = []
        self.reward: List[float] = []
        self.terminal = False
        self.v = 0.0
        self.v_d = 0.0

    @property
    def visits(self) -> int:
        return sum(self.N)

    def stats(self, move: int) -> NodeStats:
        i = self.moves.index(move)
        return NodeStats(self.N[i], self.W[i], self.Q[i], self.P[i])

    def expand(self, moves: Sequence[int], priors: Sequence[float]):
        self.moves = list(moves)
        self.P = [float(p) for p in priors]
        k = len(self.moves)
        self.N = [0] * k
        self.W = [0.0] * k
        self.Q = [0.0] * k
        self.children = [None] * k
        self.reward = [0.0] * k


def exploration_rate(parent_visits: int, config: SearchConfig = SearchConfig()) -> float:
    return math.log((1 + parent_visits + config.c_base) / config.c_base) + config.c_init


def _argmax_puct(Q, P, N, parent_visits, c_base, c_init, rng) -> int:
    c = math.log((1 + parent_visits + c_base) / c_base) + c_init
    scale = c * math.sqrt(parent_visits)
    best = -math.inf
    ties: List[int] = []
    for i in range(len(Q)):
        s = Q[i] + scale * P[i] / (1 + N[i])
        if s > best:
            best = s
            ties = [i]
        elif s == best:
            ties.append(i)
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def puct_scores(stats: Sequence[NodeStats], parent_visits: int,
                config: SearchConfig = SearchConfig()) -> List[float]:
    c = exploration_rate(parent_visits, config)
    root_n = math.sqrt(parent_visits)
    return [s.Q + c * s.P * root_n / (1 + s.N) for s in stats]


def puct_select(moves: Sequence[int], stats: Sequence[NodeStats], parent_visits: int,
                config: SearchConfig = SearchConfig(), rng=None) -> int:
    """Move maximising Q + U; exact ties are broken uniformly at random."""
    rng = check_rng(rng)
    i = _argmax_puct([s.Q for s in stats], [s.P for s in stats], [s.N for s in stats],
                     parent_visits, config.c_base, config.c_init, rng)
    return moves[i]


def backup(path: Sequence[Tuple[Node, int]], value: float) -> None:
    """Propagate ``value`` up ``path`` (root first).

    ``value`` is from the perspective of the player who chose the last edge on
    the path; it flips sign at each earlier ply.
    """
    for node, i in reversed(path):
        n = node.N[i] + 1
        node.N[i] = n
        w = node.W[i] + value
        node.W[i] = w
        node.Q[i] = w / n
        value = -value


def audit_tree(root: Node) -> int:
    """Check Q = W/N (and Q = 0 when unvisited) on every edge; returns edges checked."""
    checked = 0
    stack = [root]
    while stack:
        node = stack.pop()
        for i in range(len(node.moves)):
            n, w, q = node.N[i], node.W[i], node.Q[i]
            expected = w / n if n else 0.0
            if q != expected:
                raise AssertionError(f"edge {node.moves[i]}: Q={q} but W/N={expected}")
            checked += 1
            if node.children[i] is not None:
                stack.append(node.children[i])
    return checked


def _intrinsic_weights(team, latent: int) -> Optional[np.ndarray]:
    """Vector w with r_d(s, a) = phi(s, a) . w for the searching player, or None."""
    if team is None or team.n_players < 2:
        return None
    from .diversity import intrinsic_direction
    return intrinsic_direction(team, latent)


def run_search(state: GameState, latent: int, evaluator, team, config: SearchConfig,
               rng, game: Game) -> SearchResult:
    """Run ``config.n_simulations`` simulations from ``state``.

    The root is expanded before the first simulation and every simulation
    traverses at least one root edge, so root visit counts sum to exactly
    ``n_simulations``.
    """
    rng = check_rng(rng)
    if game.is_terminal(state):
        raise ValueError("cannot search from a terminal state")
    root_mover = state.to_move
    diverse = bool(config.diversity) and team is not None
    lam = float(team.lambdas[latent]) if diverse else 1.0
    w = _intrinsic_weights(team, latent) if diverse else None
    cells = game.cells

    def edge_reward(child_board) -> float:
        total = 0.0
        for c, v in enumerate(child_board):
            if v:
                total += w[c if v == 1 else cells + c]
        return total

    root = Node(state)
    out = evaluator.evaluate(state, latent)
    moves = game.legal_moves(state)
    priors = out.p[moves]
    if config.root_noise:
        noise = rng.dirichlet([config.dirichlet_alpha] * len(moves))
        priors = (1 - config.noise_fraction) * priors + config.noise_fraction * noise
    root.expand(moves, priors)
    root.v, root.v_d = out.v, out.v_d

    c_base, c_init = config.c_base, config.c_init
    trace = [] if config.trace else None
    root_visits = 0
    for _ in range(config.n_simulations):
        node = root
        parent_visits = root_visits
        path = []
        r_sum = 0.0
        while True:
            i = _argmax_puct(node.Q, node.P, node.N, parent_visits, c_base, c_init, rng)
            path.append((node, i))
            child = node.children[i]
            fresh = child is None
            if fresh:
                child = Node(game.apply_move(node.state, node.moves[i]))
                node.children[i] = child
                if w is not None and node.to_move == root_mover:
                    node.reward[i] = edge_reward(child.state.board)
                z = game.terminal_outcome(child.state)
                if z is not None:
                    child.terminal = True
                    child.v = float(z if child.to_move == P1 else -z)
                else:
                    ev = evaluator.evaluate(child.state, latent)
                    cm = game.legal_moves(child.state)
                    child.expand(cm, ev.p[cm])
                    child.v, child.v_d = ev.v, ev.v_d
            if diverse:
                r_sum += node.reward[i]
            if fresh or child.terminal:
                break
            parent_visits = node.N[i] - 1  # = sum of the child's edge visits
            node = child

        sign = 1.0 if child.to_move == root_mover else -1.0
        if diverse:
            boot = child.v_d if (sign > 0 and not child.terminal) else 0.0
            g = lam * sign * child.v + (1.0 - lam) * (r_sum + boot)
        else:
            g = sign * child.v
        last = path[-1][0]
        backup(path, g if last.to_move == root_mover else -g)
        root_visits += 1
        if trace is not None:
            trace.append(([n.moves[j] for n, j in path], g, r_sum))

    N = np.array(root.N, dtype=np.int64)
    Q = np.array(root.Q)
    P = np.array(root.P)
    total = int(N.sum())
    U = exploration_rate(total, config) * P * math.sqrt(total) / (1 + N)
    pi = np.zeros(game.spec.n_actions)
    pi[root.moves] = N / total
    root_value = float((N * Q).sum() / total)
    return SearchResult(pi, list(root.moves), N, Q, U, root_value, latent, root, trace)


def select_action(counts, move_number: int, cutoff: int, rng, temperature: float = 1.0,
                  greedy: bool = False) -> int:
    """Sample proportional to N^(1/temperature) before ``cutoff``, else argmax N.

    Greedy ties are broken uniformly at random.
    """
    rng = check_rng(rng)
    counts = np.asarray(counts, dtype=np.float64)
    if not greedy and move_number < cutoff:
        weights = counts ** (1.0 / temperature) if temperature != 1.0 else counts
        total = weights.sum()
        if total > 0:
            return int(rng.choice(len(counts), p=weights / total))
    best = np.flatnonzero(counts == counts.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])
