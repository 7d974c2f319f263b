"""Exact game-theoretic values by alpha-beta negamax over bitboards.

The transposition table stores (lower, upper) bounds so repeated queries on
overlapping positions stay cheap. Optimal-move sets are computed by solving
every child exactly, so ties are reported, never broken.
"""
from __future__ import annotations

import sys
from typing import Dict, FrozenSet, List, Tuple

from .games import EMPTY, O, P1, X, Game, GameState


class MinimaxSolver:
    """Solver for one game. The table is per instance; give each worker its own."""

    def __init__(self, game: Game):
        self.game = game
        self.cells = game.cells
        self.line_masks = [sum(1 << i for i in line) for line in game.lines]
        self.full = (1 << self.cells) - 1
        self.table: Dict[int, Tuple[int, int]] = {}
        # move -> list of cells (drop order for gravity games, one cell otherwise)
        self.move_cells: List[List[int]] = []
        spec = game.spec
        if game.name == "connect4":
            for c in range(spec.cols):
                self.move_cells.append([r * spec.cols + c for r in range(spec.rows)])
            centre = (spec.cols - 1) / 2
            self.order = sorted(range(spec.cols), key=lambda c: (abs(c - centre), c))
        else:
            self.move_cells = [[i] for i in range(self.cells)]
            self.order = sorted(range(self.cells), key=lambda i: (-self._line_count(i), i))
        sys.setrecursionlimit(max(sys.getrecursionlimit(), 10_000))

    def _line_count(self, cell):
        return sum(1 for m in self.line_masks if m >> cell & 1)

    # -- bit helpers ----------------------------------------------------
    def _bits(self, board) -> Tuple[int, int]:
        xb = ob = 0
        for i, v in enumerate(board):
            if v == X:
                xb |= 1 << i
            elif v == O:
                ob |= 1 << i
        return xb, ob

    def _has_line(self, bits: int) -> bool:
        for m in self.line_masks:
            if bits & m == m:
                return True
        return False

    def _children(self, me: int, them: int):
        occ = me | them
        for move in self.order:
            for cell in self.move_cells[move]:
                bit = 1 << cell
                if not occ & bit:
                    yield move, me | bit
                    break

    # -- search ---------------------------------------------------------
    def _ab(self, me: int, them: int, alpha: int, beta: int) -> int:
        """Value for the side owning ``me`` (to move); ``them`` just moved."""
        if self._has_line(them):
            return -1
        if self._has_line(me):
            return 1
        if (me | them) == self.full:
            return 0
        key = me | (them << self.cells)
        entry = self.table.get(key)
        lo, hi = (-1, 1) if entry is None else entry
        if lo == hi or lo >= beta:
            return lo
        if hi <= alpha:
            return hi
        alpha0, beta0 = max(alpha, lo), min(beta, hi)
        alpha, beta = alpha0, beta0
        children = list(self._children(me, them))
        for _, nxt in children:
            if self._has_line(nxt):
                self.table[key] = (1, 1)
                return 1
        best = -2
        for _, nxt in children:
            v = -self._ab(them, nxt, -beta, -alpha)
            if v > best:
                best = v
                if best > alpha:
                    alpha = best
                    if alpha >= beta:
                        break
        if best <= alpha0:
            hi = min(hi, best)
        elif best >= beta0:
            lo = max(lo, best)
        else:
            lo = hi = best
        self.table[key] = (lo, hi)
        return best

    def _state_bits(self, state: GameState):
        xb, ob = self._bits(state.board)
        return (xb, ob) if state.to_move == P1 else (ob, xb)

    def value(self, state: GameState) -> int:
        """Value in {-1, 0, +1} for the player to move."""
        me, them = self._state_bits(state)
        return self._ab(me, them, -1, 1)

    def move_values(self, state: GameState) -> Dict[int, int]:
        """Value (for the player to move at ``state``) of each legal move."""
        if self.game.is_terminal(state):
            return {}
        me, them = self._state_bits(state)
        return {m: -self._ab(them, nxt, -1, 1) for m, nxt in self._children(me, them)}

    def solve(self, state: GameState) -> Tuple[int, FrozenSet[int]]:
        """(value for the mover, set of all value-preserving moves)."""
        if self.game.is_terminal(state):
            return self.value(state), frozenset()
        mv = self.move_values(state)
        best = max(mv.values())
        return best, frozenset(m for m, v in mv.items() if v == best)


_SOLVERS: Dict[str, MinimaxSolver] = {}


def get_solver(game: Game) -> MinimaxSolver:
    if game.name not in _SOLVERS:
        _SOLVERS[game.name] = MinimaxSolver(game)
    return _SOLVERS[game.name]


def minimax_solve(state: GameState, game: Game) -> Tuple[int, FrozenSet[int]]:
    return get_solver(game).solve(state)
