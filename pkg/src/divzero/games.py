"""Small two-player zero-sum games with exact ground truth.

Two games are bundled: tic-tac-toe (3x3, three in a row) and connect-four on a
5-wide by 4-tall board (four in a row). Both are solvable exhaustively, which is
what makes oracle-checked search and puzzle generation possible.

Boards are flat tuples of cell codes (``EMPTY``, ``X``, ``O``) indexed
``row * cols + col``. For connect-four row 0 is the bottom row.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

EMPTY, X, O = 0, 1, 2
P1, P2 = 0, 1

CELL_CHARS = {EMPTY: ".", X: "X", O: "O"}
CHAR_CELLS = {c: v for v, c in CELL_CHARS.items()}
PLAYER_CHARS = {P1: "X", P2: "O"}

Board = Tuple[int, ...]


class IllegalMoveError(ValueError):
    """Raised when a move is not legal in the given state."""


@dataclass(frozen=True)
class GameSpec:
    name: str
    rows: int
    cols: int
    connect: int
    n_actions: int
    feature_dim: int
    max_length: int
    temperature_cutoff: int
    history_length: int = 0


@dataclass(frozen=True)
class GameState:
    """Immutable position. ``history`` holds prior boards, most recent first."""

    game: str
    board: Board
    to_move: int
    move_count: int = 0
    history: Tuple[Board, ...] = field(default=(), compare=False)

    def key(self) -> Tuple[Board, int]:
        return self.board, self.to_move


def _lines(rows: int, cols: int, k: int):
    out = []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                end_r, end_c = r + dr * (k - 1), c + dc * (k - 1)
                if 0 <= end_r < rows and 0 <= end_c < cols:
                    out.append(tuple((r + dr * i) * cols + c + dc * i for i in range(k)))
    return tuple(out)


class Game:
    """Shared machinery for k-in-a-row games on a rectangular grid."""

    spec: GameSpec

    def __init__(self, spec: GameSpec):
        self.spec = spec
        self.lines = _lines(spec.rows, spec.cols, spec.connect)
        self.cells = spec.rows * spec.cols
        self._outcome_cache: Dict[Board, Optional[int]] = {}

    # -- subclass hooks -------------------------------------------------
    def target_cell(self, board: Board, move: int) -> Optional[int]:
        raise NotImplementedError

    def _legal(self, board: Board):
        raise NotImplementedError

    # -- core rules -----------------------------------------------------
    @property
    def name(self) -> str:
        return self.spec.name

    def initial_state(self) -> GameState:
        return GameState(self.name, (EMPTY,) * self.cells, P1, 0, ())

    def legal_moves(self, state: GameState):
        if self.terminal_outcome(state) is not None:
            return []
        return self._legal(state.board)

    def apply_move(self, state: GameState, move: int) -> GameState:
        if self.terminal_outcome(state) is not None:
            raise IllegalMoveError(f"game over, cannot play {move}")
        cell = self.target_cell(state.board, move)
        if cell is None:
            raise IllegalMoveError(f"illegal move {move} in {self.serialize(state)}")
        board = list(state.board)
        board[cell] = X if state.to_move == P1 else O
        h = self.spec.history_length
        history = ((state.board,) + state.history)[:h] if h else ()
        return GameState(self.name, tuple(board), 1 - state.to_move,
                         state.move_count + 1, history)

    def terminal_outcome(self, state: GameState) -> Optional[int]:
        """Outcome from P1's perspective, or None for a non-terminal state."""
        return self.board_outcome(state.board)

    def board_outcome(self, board: Board) -> Optional[int]:
        cache = self._outcome_cache
        if board in cache:
            return cache[board]
        result = None
        for line in self.lines:
            first = board[line[0]]
            if first == EMPTY:
                continue
            if all(board[i] == first for i in line[1:]):
                result = 1 if first == X else -1
                break
        if result is None and EMPTY not in board:
            result = 0
        cache[board] = result
        return result

    def is_terminal(self, state: GameState) -> bool:
        return self.board_outcome(state.board) is not None

    # -- encodings ------------------------------------------------------
    def feature_map(self, state: GameState, move: int) -> np.ndarray:
        """Per-cell occupancy of the successor board, X block then O block."""
        nxt = self.apply_move(state, move)
        return self.board_features(nxt.board)

    def board_features(self, board: Board) -> np.ndarray:
        b = np.asarray(board)
        return np.concatenate([(b == X), (b == O)]).astype(np.float64)

    def n_planes(self, n_players: int) -> int:
        return 3 + 2 * self.spec.history_length + n_players

    def encode_planes(self, state: GameState, latent: int, n_players: int) -> np.ndarray:
        """Input stack: X, O, side-to-move, history pairs, then one-hot latent planes."""
        if n_players < 1:
            raise ValueError("n_players must be positive")
        if not 0 <= latent < n_players:
            raise ValueError(f"latent {latent} out of range for {n_players} players")
        rows, cols = self.spec.rows, self.spec.cols
        h = self.spec.history_length
        planes = np.zeros((3 + 2 * h + n_players, rows, cols))
        b = np.asarray(state.board).reshape(rows, cols)
        planes[0] = b == X
        planes[1] = b == O
        planes[2] = 1.0 if state.to_move == P1 else 0.0
        for k, past in enumerate(state.history[:h]):
            pb = np.asarray(past).reshape(rows, cols)
            planes[3 + 2 * k] = pb == X
            planes[4 + 2 * k] = pb == O
        planes[3 + 2 * h + latent] = 1.0
        return planes

    def history_plane_slice(self) -> slice:
        return slice(3, 3 + 2 * self.spec.history_length)

    # -- text format ----------------------------------------------------
    def serialize(self, state: GameState) -> str:
        cells = "".join(CELL_CHARS[v] for v in state.board)
        return f"{self.name} {cells} {PLAYER_CHARS[state.to_move]}"

    def parse(self, line: str) -> GameState:
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"bad position line: {line!r}")
        name, cells, mover = parts
        if name != self.name:
            raise ValueError(f"position is for game {name!r}, not {self.name!r}")
        if len(cells) != self.cells or any(c not in CHAR_CELLS for c in cells):
            raise ValueError(f"bad cell string {cells!r}")
        if mover not in ("X", "O"):
            raise ValueError(f"bad player-to-move {mover!r}")
        board = tuple(CHAR_CELLS[c] for c in cells)
        return GameState(self.name, board, P1 if mover == "X" else P2,
                         sum(v != EMPTY for v in board), ())

    # -- misc -----------------------------------------------------------
    def family_key(self, state: GameState) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class TicTacToe(Game):
    def __init__(self, history_length: int = 0):
        super().__init__(GameSpec("tictactoe", 3, 3, 3, 9, 18, 9, 6, history_length))

    def target_cell(self, board, move):
        if isinstance(move, (int, np.integer)) and 0 <= move < 9 and board[move] == EMPTY:
            return int(move)
        return None

    def _legal(self, board):
        return [i for i, v in enumerate(board) if v == EMPTY]

    def family_key(self, state):
        return CELL_CHARS[state.board[4]]


class ConnectFour(Game):
    """Connect-four on a ``cols`` x ``rows`` board with gravity; moves are columns."""

    def __init__(self, cols: int = 5, rows: int = 4, history_length: int = 0):
        cells = cols * rows
        super().__init__(GameSpec("connect4", rows, cols, 4, cols, 2 * cells, cells, 8,
                                  history_length))

    def target_cell(self, board, move):
        cols = self.spec.cols
        if not (isinstance(move, (int, np.integer)) and 0 <= move < cols):
            return None
        for r in range(self.spec.rows):
            cell = r * cols + int(move)
            if board[cell] == EMPTY:
                return cell
        return None

    def _legal(self, board):
        top = (self.spec.rows - 1) * self.spec.cols
        return [c for c in range(self.spec.cols) if board[top + c] == EMPTY]

    def family_key(self, state):
        # bottom-row cells never change once filled, so positions with different
        # full bottom rows can never transpose into each other
        return "".join(CELL_CHARS[v] for v in state.board[:self.spec.cols])


_GAMES = {"tictactoe": TicTacToe, "connect4": ConnectFour}
_INSTANCES: Dict[Tuple[str, int], Game] = {}


def get_game(name: str, history_length: int = 0) -> Game:
    """Shared game instance (keeps the outcome cache warm across modules)."""
    key = (name, history_length)
    if key not in _INSTANCES:
        try:
            cls = _GAMES[name]
        except KeyError:
            raise ValueError(f"unknown game {name!r}; choose from {sorted(_GAMES)}") from None
        _INSTANCES[key] = cls(history_length=history_length)
    return _INSTANCES[key]

