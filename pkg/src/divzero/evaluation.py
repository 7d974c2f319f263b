"""Puzzles, team-level move selection, matches, Elo and occupancy reports.

Puzzle kinds
------------
``unique``   one acceptable move per step (several acceptable moves form an
             "or" list); stored opponent replies form an "and" list that the
             solver must handle in full. Solved iff every step is acceptable.
``multi``    every legal move carries a score in [0, 1000]; the chosen move
             earns ``score / 1000``.
``value``    a true value in {0, 0.5, 1} for the side to move and a threshold;
             solved iff the post-search value of the chosen move, mapped by
             ``(q + 1) / 2``, lies within the threshold.

Puzzle file: ``#``-comments, then one tab-separated line per puzzle::

    id <TAB> position <TAB> kind <TAB> solution

where ``solution`` is the unique-solution grammar below, ``move:score,...``
for ``multi`` and ``true_value;threshold`` for ``value``::

    sol   := alt ("|" alt)*
    alt   := MOVE ["{" reply ("," reply)* "}"]
    reply := MOVE ":" "(" sol ")"
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .games import EMPTY, Game, GameState, get_game
from .oracle import MinimaxSolver, get_solver
from .search import SearchConfig, SearchResult, run_search

BEST_SCORE = 1000
OPENING_GAP = 2 / 500
PUZZLE_COLUMNS = ("dataset", "puzzle_id", "player", "rule", "seed", "score")
MATCH_COLUMNS = ("opening", "color", "seed", "player", "score")


class PuzzleKind(str, enum.Enum):
    UNIQUE_MULTI_STEP = "unique"
    MULTI_CHOICE_SCORED = "multi"
    VALUE_THRESHOLD = "value"


class PuzzleKindError(ValueError):
    """A response or rule does not fit the puzzle's kind."""


# A unique solution maps each acceptable move to None (puzzle ends) or to the
# opponent replies that must all be answered, each with its own sub-solution.
Solution = Dict[int, Optional[Dict[int, "Solution"]]]


@dataclass
class Puzzle:
    position: GameState
    kind: PuzzleKind
    solution: Optional[Solution] = None
    scores: Optional[Dict[int, int]] = None
    true_value: Optional[float] = None
    threshold: float = 0.25
    puzzle_id: str = ""

    def __post_init__(self):
        self.kind = PuzzleKind(self.kind)
        if self.kind is PuzzleKind.UNIQUE_MULTI_STEP and not self.solution:
            raise ValueError("unique puzzle needs a solution")
        if self.kind is PuzzleKind.MULTI_CHOICE_SCORED:
            if not self.scores or max(self.scores.values()) != BEST_SCORE:
                raise ValueError("multi-choice puzzle needs scores with best = 1000")
            if any(not 0 <= v <= BEST_SCORE for v in self.scores.values()):
                raise ValueError("multi-choice scores must lie in [0, 1000]")
        if self.kind is PuzzleKind.VALUE_THRESHOLD:
            if self.true_value not in (0.0, 0.5, 1.0):
                raise ValueError("true value must be 0, 0.5 or 1")
            if not self.threshold > 0:
                raise ValueError("threshold must be positive")

    def main_line(self, game: Game) -> List[GameState]:
        """Positions along the first acceptable line (puzzle position first)."""
        line = [self.position]
        if self.kind is not PuzzleKind.UNIQUE_MULTI_STEP:
            return line
        state, sol = self.position, self.solution
        while sol:
            move = min(sol)
            replies = sol[move]
            if not replies:
                break
            reply = min(replies)
            state = game.apply_move(game.apply_move(state, move), reply)
            line.append(state)
            sol = replies[reply]
        return line


# -- solution grammar -------------------------------------------------------

def format_solution(sol: Solution) -> str:
    alts = []
    for move in sorted(sol):
        replies = sol[move]
        if replies:
            inner = ",".join(f"{r}:({format_solution(replies[r])})" for r in sorted(replies))
            alts.append(f"{move}{{{inner}}}")
        else:
            alts.append(str(move))
    return "|".join(alts)


def parse_solution(text: str) -> Solution:
    pos = 0

    def number() -> int:
        nonlocal pos
        start = pos
        while pos < len(text) and text[pos].isdigit():
            pos += 1
        if start == pos:
            raise ValueError(f"expected a move at offset {start} in {text!r}")
        return int(text[start:pos])

    def expect(ch: str):
        nonlocal pos
        if pos >= len(text) or text[pos] != ch:
            raise ValueError(f"expected {ch!r} at offset {pos} in {text!r}")
        pos += 1

    def sol() -> Solution:
        nonlocal pos
        out: Solution = {}
        while True:
            move = number()
            replies = None
            if pos < len(text) and text[pos] == "{":
                pos += 1
                replies = {}
                while True:
                    r = number()
                    expect(":")
                    expect("(")
                    replies[r] = sol()
                    expect(")")
                    if pos < len(text) and text[pos] == ",":
                        pos += 1
                        continue
                    break
                expect("}")
            out[move] = replies
            if pos < len(text) and text[pos] == "|":
                pos += 1
                continue
            return out

    result = sol()
    if pos != len(text):
        raise ValueError(f"trailing text at offset {pos} in {text!r}")
    return result


def format_puzzle(game: Game, puzzle: Puzzle) -> str:
    if puzzle.kind is PuzzleKind.UNIQUE_MULTI_STEP:
        spec = format_solution(puzzle.solution)
    elif puzzle.kind is PuzzleKind.MULTI_CHOICE_SCORED:
        spec = ",".join(f"{m}:{s}" for m, s in sorted(puzzle.scores.items()))
    else:
        spec = f"{puzzle.true_value!r};{puzzle.threshold!r}"
    return "\t".join([puzzle.puzzle_id, game.serialize(puzzle.position), puzzle.kind.value, spec])


def parse_puzzle(line: str) -> Tuple[Game, Puzzle]:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise ValueError(f"puzzle line needs 4 tab-separated fields: {line!r}")
    pid, pos, kind, spec = parts
    game = get_game(pos.split(" ", 1)[0])
    state = game.parse(pos)
    kind = PuzzleKind(kind)
    if kind is PuzzleKind.UNIQUE_MULTI_STEP:
        return game, Puzzle(state, kind, solution=parse_solution(spec), puzzle_id=pid)
    if kind is PuzzleKind.MULTI_CHOICE_SCORED:
        scores = {int(m): int(s) for m, s in (kv.split(":") for kv in spec.split(","))}
        return game, Puzzle(state, kind, scores=scores, puzzle_id=pid)
    tv, th = spec.split(";")
    return game, Puzzle(state, kind, true_value=float(tv), threshold=float(th), puzzle_id=pid)


def write_puzzles(path, game: Game, puzzles: Sequence[Puzzle]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# puzzles v1 game={game.name} count={len(puzzles)}\n")
        fh.write("# id\tposition\tkind\tsolution\n")
        for p in puzzles:
            fh.write(format_puzzle(game, p) + "\n")


def read_puzzles(path) -> List[Puzzle]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                out.append(parse_puzzle(line)[1])
    return out


# -- generation -----------------------------------------------------------

def reachable_positions(game: Game, min_depth: int = 0, max_depth: Optional[int] = None
                        ) -> List[GameState]:
    """Non-terminal reachable positions by depth, each depth sorted by serialization."""
    max_depth = game.spec.max_length if max_depth is None else max_depth
    layer = {game.initial_state().key(): game.initial_state()}
    out = []
    for depth in range(max_depth + 1):
        if depth >= min_depth:
            live = [s for s in layer.values() if not game.is_terminal(s)]
            out.extend(sorted(live, key=game.serialize))
        if depth == max_depth:
            break
        nxt = {}
        for s in layer.values():
            for m in game.legal_moves(s):
                c = game.apply_move(s, m)
                nxt.setdefault(c.key(), c)
        layer = nxt
    return out


def optimal_moves(solver: MinimaxSolver, state: GameState) -> Tuple[int, Dict[int, int], list]:
    mv = solver.move_values(state)
    best = max(mv.values())
    return best, mv, sorted(m for m, v in mv.items() if v == best)


def _unique_solution(game: Game, solver: MinimaxSolver, state: GameState,
                     max_steps: int) -> Optional[Solution]:
    """Chain unique optimal moves along oracle play; None if the first is not unique."""
    if game.is_terminal(state) or len(game.legal_moves(state)) < 2:
        return None
    _, _, opt = optimal_moves(solver, state)
    if len(opt) != 1:
        return None
    move = opt[0]
    after = game.apply_move(state, move)
    if max_steps <= 1 or game.is_terminal(after):
        return {move: None}
    # stored reply: the opponent's lowest-id optimal move
    reply = optimal_moves(solver, after)[2][0]
    nxt = game.apply_move(after, reply)
    sub = _unique_solution(game, solver, nxt, max_steps - 1)
    return {move: {reply: sub}} if sub else {move: None}


def open_line_balance(game: Game, state: GameState) -> int:
    """Lines still open for the mover minus those open for the opponent (pieces >= 1)."""
    me = 1 if state.to_move == 0 else 2
    board = state.board
    bal = 0
    for line in game.lines:
        vals = {board[c] for c in line} - {EMPTY}
        if vals == {me}:
            bal += 1
        elif len(vals) == 1:
            bal -= 1
    return bal


@dataclass
class PuzzleCriteria:
    kinds: Tuple[PuzzleKind, ...] = tuple(PuzzleKind)
    min_depth: int = 0
    max_depth: Optional[int] = None
    max_steps: int = 3
    hardness: bool = False
    lopsided: int = 2
    threshold: float = 0.25
    limit: Optional[int] = None
    sample: Optional[int] = None  # subsample candidate positions before solving
    seed: int = 0


def generate_puzzles(game: Game, solver: Optional[MinimaxSolver] = None, baseline=None,
                     criteria: PuzzleCriteria = PuzzleCriteria()) -> List[Puzzle]:
    """Deterministic oracle puzzles over reachable positions.

    With ``criteria.hardness`` (needs ``baseline``), ``unique`` and ``multi``
    puzzles are kept only when the baseline's greedy prior move (latent 0) is
    not an acceptable answer.
    """
    solver = solver or get_solver(game)
    if criteria.hardness and baseline is None:
        raise ValueError("the hardness filter needs a baseline evaluator")
    kinds = {PuzzleKind(k) for k in criteria.kinds}
    positions = reachable_positions(game, criteria.min_depth, criteria.max_depth)
    if criteria.sample is not None and criteria.sample < len(positions):
        idx = np.sort(np.random.default_rng(criteria.seed).choice(
            len(positions), criteria.sample, replace=False))
        positions = [positions[k] for k in idx]
    out: List[Puzzle] = []
    for state in positions:
        moves = game.legal_moves(state)
        if len(moves) < 2:
            continue
        best, mv, opt = optimal_moves(solver, state)
        prior_move = None
        if baseline is not None:
            prior_move = int(np.argmax(baseline.evaluate(state, 0).p))
        if PuzzleKind.UNIQUE_MULTI_STEP in kinds and len(opt) == 1:
            sol = _unique_solution(game, solver, state, criteria.max_steps)
            if sol and not (criteria.hardness and prior_move in sol):
                out.append(Puzzle(state, PuzzleKind.UNIQUE_MULTI_STEP, solution=sol))
        if PuzzleKind.MULTI_CHOICE_SCORED in kinds and 2 <= len(opt) < len(moves):
            scores = {m: BEST_SCORE if mv[m] == best else 0 for m in moves}
            if not (criteria.hardness and scores[prior_move] == BEST_SCORE):
                out.append(Puzzle(state, PuzzleKind.MULTI_CHOICE_SCORED, scores=scores))
        if PuzzleKind.VALUE_THRESHOLD in kinds and best == 0 and \
                abs(open_line_balance(game, state)) >= criteria.lopsided:
            out.append(Puzzle(state, PuzzleKind.VALUE_THRESHOLD, true_value=0.5,
                              threshold=criteria.threshold))
    if criteria.limit is not None and len(out) > criteria.limit:
        idx = np.sort(np.random.default_rng(criteria.seed + 1).choice(
            len(out), criteria.limit, replace=False))
        out = [out[k] for k in idx]
    for k, p in enumerate(out):
        p.puzzle_id = f"{game.name}-{k:05d}"
    return out


# -- scoring --------------------------------------------------------------

def score_unique(puzzle: Puzzle, policy: Callable[[GameState], int], game: Game) -> float:
    def solved(state: GameState, sol: Solution) -> bool:
        move = policy(state)
        if move not in sol:
            return False
        replies = sol[move]
        if not replies:
            return True
        after = game.apply_move(state, move)
        return all(solved(game.apply_move(after, r), sub) for r, sub in replies.items())
    return 1.0 if solved(puzzle.position, puzzle.solution) else 0.0


def score_puzzle(puzzle: Puzzle, response, game: Optional[Game] = None) -> float:
    """Score in [0, 1].

    ``response`` is a policy ``state -> move`` (or a move list for a single
    line) for ``unique``, a move for ``multi`` and a predicted value in [0, 1]
    for ``value``.
    """
    kind = puzzle.kind
    if kind is PuzzleKind.UNIQUE_MULTI_STEP:
        if isinstance(response, (list, tuple)):
            seq = list(response)
            lookup = {}
            state, sol = puzzle.position, puzzle.solution
            for k, m in enumerate(seq):
                lookup[state.key()] = m
                if sol is None or m not in sol or not sol[m]:
                    break
                if len(sol[m]) != 1:
                    raise PuzzleKindError("a move list cannot answer several replies")
                (reply, sol), = sol[m].items()
                state = game.apply_move(game.apply_move(state, m), reply)
            response = lambda s: lookup.get(s.key(), -1)  # noqa: E731
        elif not callable(response):
            raise PuzzleKindError("unique puzzles need a policy or a move list")
        if game is None:
            raise ValueError("scoring a unique puzzle needs the game")
        return score_unique(puzzle, response, game)
    if kind is PuzzleKind.MULTI_CHOICE_SCORED:
        if callable(response) or isinstance(response, (list, tuple, float)):
            raise PuzzleKindError("multi-choice puzzles take a single move")
        return puzzle.scores.get(int(response), 0) / BEST_SCORE
    if callable(response) or isinstance(response, (list, tuple)):
        raise PuzzleKindError("value puzzles take a predicted value")
    return 1.0 if abs(float(response) - puzzle.true_value) <= puzzle.threshold + 1e-12 else 0.0


# -- team-level selection -------------------------------------------------

class SelectionRule(str, enum.Enum):
    VISIT = "visit"
    VALUE = "value"
    LCB = "lcb"
    GAP = "gap"


@dataclass
class PlayerSearchStats:
    """Root statistics of one player's search (same move order for all players)."""

    moves: Sequence[int]
    N: np.ndarray
    Q: np.ndarray
    U: np.ndarray

    @classmethod
    def from_result(cls, res: SearchResult) -> "PlayerSearchStats":
        return cls(list(res.moves), np.asarray(res.N), np.asarray(res.Q), np.asarray(res.U))

    def _visited(self) -> np.ndarray:
        v = np.asarray(self.N) > 0
        return v if v.any() else np.ones(len(self.N), dtype=bool)

    @property
    def value(self) -> float:
        """V = max Q over visited moves."""
        return float(np.max(np.asarray(self.Q)[self._visited()]))

    @property
    def lcb(self) -> float:
        return float(np.max((np.asarray(self.Q) - np.asarray(self.U))[self._visited()]))

    def best_move(self) -> int:
        return int(self.moves[int(np.argmax(self.N))])


def subadditive_select(stats: Sequence[PlayerSearchStats], rule="gap",
                       gap: Optional[float] = None) -> Tuple[int, int]:
    """Pick a player from per-player root statistics; returns (player, its argmax-N move).

    ``gap`` overrides the GAP width (default: largest U over players and moves).
    Ties go to the smaller player index.
    """
    if len(stats) == 0:
        raise ValueError("need statistics for at least one player")
    rule = SelectionRule(rule)
    if rule is SelectionRule.VISIT:
        j = int(np.argmax([np.max(s.N) for s in stats]))
    elif rule is SelectionRule.VALUE:
        j = int(np.argmax([s.value for s in stats]))
    elif rule is SelectionRule.LCB:
        j = int(np.argmax([s.lcb for s in stats]))
    else:
        V = np.array([s.value for s in stats])
        width = max(float(np.max(s.U)) for s in stats) if gap is None else gap
        cand = np.flatnonzero(V >= V.max() - width)
        j = int(cand[np.argmin(V[cand])])
    return j, stats[j].best_move()


def max_over_latents(scores: Sequence[float]) -> float:
    if len(scores) == 0:
        raise ValueError("need at least one score")
    return float(max(scores))


# -- puzzle evaluation ----------------------------------------------------

@dataclass
class PuzzleOutcome:
    puzzle_id: str
    kind: PuzzleKind
    seed: int
    player_scores: List[float]
    selected: Dict[str, int]
    subadditive: Dict[str, float]

    @property
    def max_over_latents(self) -> float:
        return max_over_latents(self.player_scores)


def _searcher(evaluator, team, config: SearchConfig, game: Game, seed_seq):
    cache: Dict[tuple, SearchResult] = {}

    def search(state: GameState, latent: int) -> SearchResult:
        key = (state.key(), latent)
        if key not in cache:
            rng = np.random.default_rng(seed_seq.spawn(1)[0])
            cache[key] = run_search(state, latent, evaluator, team, config, rng, game)
        return cache[key]
    return search


def evaluate_puzzle(puzzle: Puzzle, evaluator, team, game: Game, config: SearchConfig,
                    seed: int = 0, rules: Sequence = tuple(SelectionRule),
                    players: Optional[Sequence[int]] = None) -> PuzzleOutcome:
    """Each player solves the puzzle with its own searches; rules select a player at the root."""
    players = list(range(evaluator.n_players)) if players is None else list(players)
    root_seq = np.random.SeedSequence(seed)
    scores, stats = [], []
    for j in players:
        search = _searcher(evaluator, team, config, game, root_seq.spawn(1)[0])
        root = search(puzzle.position, j)
        stats.append(PlayerSearchStats.from_result(root))
        if puzzle.kind is PuzzleKind.UNIQUE_MULTI_STEP:
            s = score_puzzle(puzzle, lambda st, j=j, search=search: search(st, j).best_move(),
                             game)
        elif puzzle.kind is PuzzleKind.MULTI_CHOICE_SCORED:
            s = score_puzzle(puzzle, root.best_move())
        else:
            q = float(root.Q[int(np.argmax(root.N))])
            s = score_puzzle(puzzle, (q + 1.0) / 2.0)
        scores.append(s)
    selected, sub = {}, {}
    for rule in rules:
        rule = SelectionRule(rule)
        k, _ = subadditive_select(stats, rule)
        selected[rule.value] = players[k]
        sub[rule.value] = scores[k]
    return PuzzleOutcome(puzzle.puzzle_id, puzzle.kind, seed, scores, selected, sub)


def solve_rates(outcomes: Sequence[PuzzleOutcome]) -> Dict[str, float]:
    """Mean score per player column, per rule and for max-over-latents."""
    if not outcomes:
        return {}
    out = {}
    n_players = len(outcomes[0].player_scores)
    for j in range(n_players):
        out[f"player_{j}"] = float(np.mean([o.player_scores[j] for o in outcomes]))
    for rule in outcomes[0].subadditive:
        out[rule] = float(np.mean([o.subadditive[rule] for o in outcomes]))
    out["max_over_latents"] = float(np.mean([o.max_over_latents for o in outcomes]))
    return out


# -- matches --------------------------------------------------------------

@dataclass(frozen=True)
class MatchRecord:
    opening: int
    color: int  # 0: the team player moves first from the opening
    seed: int
    player: int
    score: int  # from the team player's side


def generate_openings(game: Game, n: int, plies: int = 2, seed: int = 0,
                      solver: Optional[MinimaxSolver] = None,
                      max_tries: int = 100_000) -> List[GameState]:
    """``n`` distinct positions after ``plies`` random moves with oracle value 0.

    A drawn value means neither side is already lost. Fewer than ``n`` are
    returned when the game has fewer such positions.
    """
    solver = solver or get_solver(game)
    rng = np.random.default_rng(seed)
    seen, out = set(), []
    for _ in range(max_tries):
        if len(out) >= n:
            break
        s = game.initial_state()
        for _ in range(plies):
            if game.is_terminal(s):
                break
            moves = game.legal_moves(s)
            s = game.apply_move(s, moves[int(rng.integers(len(moves)))])
        if game.is_terminal(s) or s.key() in seen:
            continue
        seen.add(s.key())
        if solver.value(s) == 0:
            out.append(s)
    return out


def play_game(game: Game, start: GameState, agents: Sequence[Callable[[GameState], int]]) -> int:
    """Play to the end; ``agents[0]`` moves for the first player (P1). Returns P1's outcome."""
    state = start
    while not game.is_terminal(state):
        state = game.apply_move(state, agents[state.to_move](state))
    return game.terminal_outcome(state)


def search_agent(evaluator, latent: int, team, config: SearchConfig, game: Game, rng):
    """Greedy agent: argmax-visit move of a fresh search at every turn."""
    def act(state: GameState) -> int:
        return run_search(state, latent, evaluator, team, config, rng, game).best_move()
    return act


def play_match(team_eval, opponent_eval, openings: Sequence[GameState], n_simulations: int,
               n_seeds: int, game: Game, team=None, opponent_team=None,
               players: Optional[Sequence[int]] = None, opponent_latent: int = 0,
               c_base: float = 19652.0, c_init: float = 1.25) -> List[MatchRecord]:
    """Every team player meets the opponent from each opening with both colors and seeds."""
    players = list(range(team_eval.n_players)) if players is None else list(players)
    cfg = SearchConfig(n_simulations=n_simulations, c_base=c_base, c_init=c_init,
                       diversity=team is not None)
    ocfg = SearchConfig(n_simulations=n_simulations, c_base=c_base, c_init=c_init,
                        diversity=opponent_team is not None)
    records = []
    for o, opening in enumerate(openings):
        for seed in range(n_seeds):
            for p in players:
                for color in (0, 1):
                    rng = np.random.default_rng([seed, o, p, color])
                    me = search_agent(team_eval, p, team, cfg, game, rng)
                    opp = search_agent(opponent_eval, opponent_latent, opponent_team, ocfg,
                                       game, rng)
                    # color 0: team player is the side to move at the opening
                    mover = opening.to_move
                    agents = [None, None]
                    agents[mover] = me if color == 0 else opp
                    agents[1 - mover] = opp if color == 0 else me
                    z = play_game(game, opening, agents)
                    mine = mover if color == 0 else 1 - mover
                    records.append(MatchRecord(o, color, seed, p, int(z if mine == 0 else -z)))
    return records


def winrate(scores: Sequence[float]) -> float:
    """Map mean score in [-1, 1] to a win rate with draws worth half."""
    return (float(np.mean(scores)) + 1.0) / 2.0


def winrate_to_elo(w: float) -> float:
    if not 0.0 < w < 1.0:
        raise ValueError(f"win rate {w!r} is outside (0, 1): Elo difference is infinite")
    return 400.0 * math.log10(w / (1.0 - w))


def elo_or_inf(w: float) -> float:
    if w <= 0.0:
        return -math.inf
    if w >= 1.0:
        return math.inf
    return winrate_to_elo(w)


def score_table(records: Sequence[MatchRecord]) -> Tuple[np.ndarray, list, list, list]:
    """Array [opening, seed, player] of mean scores over colors, with the axis labels."""
    openings = sorted({r.opening for r in records})
    seeds = sorted({r.seed for r in records})
    players = sorted({r.player for r in records})
    oi = {o: k for k, o in enumerate(openings)}
    si = {s: k for k, s in enumerate(seeds)}
    pi = {p: k for k, p in enumerate(players)}
    total = np.zeros((len(openings), len(seeds), len(players)))
    count = np.zeros_like(total)
    for r in records:
        total[oi[r.opening], si[r.seed], pi[r.player]] += r.score
        count[oi[r.opening], si[r.seed], pi[r.player]] += 1
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0), \
        openings, seeds, players


@dataclass
class LeaveOneOutResult:
    score: float
    choices: Dict[Tuple[int, int], int] = field(default_factory=dict)  # (seed, opening)


def leave_one_out_selection(table: np.ndarray, rule: str = "max",
                            gap: float = OPENING_GAP) -> LeaveOneOutResult:
    """Per-opening player choice from the other seeds, scored on the held-out seed.

    ``table`` is [opening, seed, player]. ``rule='gap'`` keeps players within
    ``gap`` of the best mean and picks the lowest of them.
    """
    table = np.asarray(table, dtype=np.float64)
    n_open, n_seeds, _ = table.shape
    if n_seeds < 2:
        raise ValueError("leave-one-out selection needs at least 2 seeds")
    if rule not in ("max", "gap"):
        raise ValueError(f"unknown rule {rule!r}")
    choices, scores = {}, []
    for s in range(n_seeds):
        others = np.delete(table, s, axis=1).mean(axis=1)  # [opening, player]
        for o in range(n_open):
            m = others[o]
            if rule == "max":
                j = int(np.argmax(m))
            else:
                cand = np.flatnonzero(m >= m.max() - gap)
                j = int(cand[np.argmin(m[cand])])
            choices[(s, o)] = j
            scores.append(table[o, s, j])
    return LeaveOneOutResult(float(np.mean(scores)), choices)


# -- occupancy reports -----------------------------------------------------

@dataclass
class OccupancyReport:
    mean: np.ndarray  # [player, feature]
    std: np.ndarray  # [feature]
    centered: np.ndarray  # [player, feature]


def occupancy_report(evaluator, game: Game, n_games: int, n_simulations: int = 50,
                     team=None, seed: int = 0) -> OccupancyReport:
    """Mean successor features per player over greedy self-play games."""
    cfg = SearchConfig(n_simulations=n_simulations, diversity=team is not None)
    n = evaluator.n_players
    mean = np.zeros((n, game.spec.feature_dim))
    for j in range(n):
        feats = []
        for g in range(n_games):
            rng = np.random.default_rng([seed, j, g])
            agent = search_agent(evaluator, j, team, cfg, game, rng)
            state = game.initial_state()
            while not game.is_terminal(state):
                move = agent(state)
                feats.append(game.feature_map(state, move))
                state = game.apply_move(state, move)
        mean[j] = np.mean(feats, axis=0)
    centered = mean - mean.mean(axis=0, keepdims=True)
    return OccupancyReport(mean, mean.std(axis=0), centered)

