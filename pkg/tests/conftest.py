"""Shared fixtures and independent reference implementations used as test oracles."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import pytest

from divzero.games import P1, get_game


@pytest.fixture
def ttt():
    return get_game("tictactoe")


@pytest.fixture
def c4():
    return get_game("connect4")


def play(game, moves, state=None):
    state = game.initial_state() if state is None else state
    for m in moves:
        state = game.apply_move(state, m)
    return state


def reachable(game, max_depth=None):
    """All reachable states (terminal included), breadth first."""
    start = game.initial_state()
    seen = {start.key(): start}
    frontier = [start]
    depth = 0
    while frontier and (max_depth is None or depth < max_depth):
        nxt = []
        for s in frontier:
            for m in game.legal_moves(s):
                c = game.apply_move(s, m)
                if c.key() not in seen:
                    seen[c.key()] = c
                    nxt.append(c)
        frontier = nxt
        depth += 1
    return list(seen.values())


def brute_value(game, state) -> int:
    """Plain memoised negamax without pruning: value for the side to move."""

    @lru_cache(maxsize=None)
    def neg(board, to_move):
        z = game.board_outcome(board)
        if z is not None:
            return z if to_move == P1 else -z
        s = _state(board, to_move)
        return max(-neg(game.apply_move(s, m).board, 1 - to_move) for m in game.legal_moves(s))

    def _state(board, to_move):
        from divzero.games import GameState
        return GameState(game.name, board, to_move, sum(v != 0 for v in board), ())

    return neg(state.board, state.to_move)


def fictitious_play_value(A, tol=1e-5, max_iter=20_000_000):
    """Fictitious-play bracket of the value of a zero-sum game (row maximises).

    Returns (lower, upper) bounds from the empirical mixtures; the game value
    lies in between.
    """
    return _fp(np.ascontiguousarray(A, dtype=np.float64), tol, max_iter)


try:
    from numba import njit
except ImportError:  # pragma: no cover - pure Python fallback
    def njit(f=None, **kw):
        return f if f is not None else (lambda g: g)


@njit(cache=True)
def _fp(A, tol, max_iter):
    m, n = A.shape
    row_pay = np.zeros(m)  # cumulative payoff of each row vs column history
    col_pay = np.zeros(n)  # cumulative payoff each column concedes vs row history
    i, j = 0, 0
    lo, hi = -1e300, 1e300
    for t in range(1, max_iter + 1):
        for a in range(m):
            row_pay[a] += A[a, j]
        for b in range(n):
            col_pay[b] += A[i, b]
        i = int(np.argmax(row_pay))
        j = int(np.argmin(col_pay))
        hi = min(hi, row_pay[i] / t)
        lo = max(lo, col_pay[j] / t)
        if hi - lo < tol:
            break
    return lo, hi


# -- reference vanilla search -------------------------------------------------

class RefNode:
    def __init__(self, state):
        self.state = state
        self.moves, self.P, self.N, self.W, self.Q, self.kids = [], [], [], [], [], []
        self.value = 0.0
        self.terminal = False


def reference_search(state, latent, evaluator, n_sims, rng, game, c_base=19652.0, c_init=1.25):
    """Textbook two-player PUCT search with values from the mover's side.

    Written independently of ``divzero.search``; the arithmetic order of the
    selection score and the tie-breaking draws follow the documented rule so
    results can be compared bit for bit.
    """
    root = RefNode(state)
    out = evaluator.evaluate(state, latent)
    root.moves = game.legal_moves(state)
    k = len(root.moves)
    root.P = [float(p) for p in out.p[root.moves]]
    root.N, root.W, root.Q, root.kids = [0] * k, [0.0] * k, [0.0] * k, [None] * k

    def select(node, parent_n):
        c = math.log((1 + parent_n + c_base) / c_base) + c_init
        scale = c * math.sqrt(parent_n)
        scores = [node.Q[a] + scale * node.P[a] / (1 + node.N[a]) for a in range(len(node.moves))]
        best = max(scores)
        ties = [a for a, s in enumerate(scores) if s == best]
        return ties[0] if len(ties) == 1 else ties[int(rng.integers(len(ties)))]

    for sim in range(n_sims):
        node, parent_n, path = root, sim, []
        while True:
            a = select(node, parent_n)
            path.append((node, a))
            child = node.kids[a]
            new = child is None
            if new:
                child = RefNode(game.apply_move(node.state, node.moves[a]))
                node.kids[a] = child
                z = game.terminal_outcome(child.state)
                if z is not None:
                    child.terminal = True
                    child.value = float(z if child.state.to_move == P1 else -z)
                else:
                    e = evaluator.evaluate(child.state, latent)
                    child.moves = game.legal_moves(child.state)
                    m = len(child.moves)
                    child.P = [float(p) for p in e.p[child.moves]]
                    child.N, child.W, child.Q = [0] * m, [0.0] * m, [0.0] * m
                    child.kids = [None] * m
                    child.value = e.v
            if new or child.terminal:
                break
            parent_n = sum(child.N)
            node = child
        # child.value is from the leaf mover's side; the edge into it belongs to the other player
        v = -child.value
        for node, a in reversed(path):
            node.N[a] += 1
            node.W[a] += v
            node.Q[a] = node.W[a] / node.N[a]
            v = -v
    return root


# -- acceptance report ---------------------------------------------------------

CRITERIA = {}


def report_criterion(number, passed, detail):
    """Record and print one acceptance line; the session summary repeats them in order."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
