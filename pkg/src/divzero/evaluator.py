"""Latent-conditioned evaluator: policy prior, outcome value and intrinsic value.

Two interchangeable backends share one interface:

* :class:`TabularEvaluator` keeps one parameter row per (position, latent).
  Unseen keys evaluate to a uniform prior with zero values, so every quantity
  is exact and inspectable on tic-tac-toe.
* :class:`MLPEvaluator` is a small fully connected net over the flattened
  input planes with a shared tanh torso and three heads (softmax policy, tanh
  value, linear intrinsic value).

Both minimise the batch mean of ``(z - v)^2 + w_d (z_d - v_d)^2 - pi . log p``
plus an L2 penalty, using SGD with momentum.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from ._npz import load_npz, save_npz
from .games import Game, GameState, get_game
from .validation import check_latent, check_probability, check_rng

FORMAT_VERSION = 1
LOG_FLOOR = 1e-12
_CACHE_LIMIT = 250_000


class NonFiniteGradientError(FloatingPointError):
    """A gradient step produced NaN/inf; the step is rejected."""


@dataclass
class EvalOutput:
    p: np.ndarray
    v: float
    v_d: float


@dataclass(frozen=True)
class TrainTarget:
    pi: np.ndarray
    z: float
    z_d: float
    latent: int


Batch = Sequence[Tuple[GameState, TrainTarget]]


def _legal_mask(game: Game, state: GameState) -> np.ndarray:
    mask = np.zeros(game.spec.n_actions, dtype=bool)
    mask[game.legal_moves(state)] = True
    return mask


def _masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.where(mask, np.exp(z - m), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    return np.divide(e, s, out=np.zeros_like(e), where=s > 0)


def apply_history_dropout(planes: np.ndarray, history_slice: slice, probability: float,
                          rng) -> np.ndarray:
    """Zero each history plane pair independently with ``probability``.

    ``planes`` is one encoded input stack (C, rows, cols); the current board,
    side-to-move and latent planes are never touched.
    """
    check_probability(probability, "history dropout probability")
    start, stop = history_slice.start, history_slice.stop
    if stop <= start or probability == 0.0:
        return planes
    rng = check_rng(rng)
    out = planes.copy()
    n_hist = (stop - start) // 2
    drop = rng.random(n_hist) < probability
    for k in np.flatnonzero(drop):
        out[start + 2 * k: start + 2 * k + 2] = 0.0
    return out


class _Evaluator(BaseEstimator):
    """Shared plumbing: caching, loss bookkeeping, checkpoints."""

    backend = ""

    def _game(self) -> Game:
        return get_game(self.game, self.history_length)

    def _cache(self) -> dict:
        cache = self.__dict__.get("_eval_cache")
        if cache is None or len(cache) > _CACHE_LIMIT:
            cache = {}
            self.__dict__["_eval_cache"] = cache
        return cache

    def _invalidate(self):
        self.__dict__["_eval_cache"] = {}

    def evaluate(self, state: GameState, latent: int) -> EvalOutput:
        """Prior over all moves (zero off the legal set), value and intrinsic value."""
        key = (state.board, state.to_move, state.history, latent)
        cache = self._cache()
        hit = cache.get(key)
        if hit is None:
            check_latent(latent, self.n_players)
            hit = self._evaluate(state, latent)
            cache[key] = hit
        return hit

    def loss(self, batch: Batch) -> float:
        return self.loss_terms(batch)["total"]

    def loss_terms(self, batch: Batch) -> Dict[str, float]:
        if len(batch) == 0:
            raise ValueError("loss needs a non-empty batch")
        p, v, vd = self._forward_batch(batch)
        pi = np.stack([t.pi for _, t in batch])
        z = np.array([t.z for _, t in batch])
        zd = np.array([t.z_d for _, t in batch])
        value = float(np.mean((z - v) ** 2))
        intrinsic = float(np.mean((zd - vd) ** 2))
        policy = float(np.mean(-(pi * np.log(np.maximum(p, LOG_FLOOR))).sum(axis=1)))
        l2 = self.l2 * self._sq_norm(batch)
        total = value + self.intrinsic_weight * intrinsic + policy + l2
        return {"total": total, "value": value, "intrinsic": intrinsic, "policy": policy, "l2": l2}

    def update(self, batch: Batch, learning_rate: float, history_dropout: float = 0.0,
               rng=None) -> "_Evaluator":
        """One SGD-with-momentum step on the batch loss. Returns ``self``."""
        if not learning_rate >= 0:
            raise ValueError(f"learning rate must be non-negative, got {learning_rate!r}")
        if len(batch) == 0:
            raise ValueError("update needs a non-empty batch")
        grads = self._gradients(batch, history_dropout, rng)
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(
                    f"non-finite gradient for {name!r} (max |g| = {np.nanmax(np.abs(g))!r}); "
                    "step rejected")
        self._apply(grads, learning_rate)
        self._invalidate()
        return self

    # sklearn-style aliases
    def partial_fit(self, X: Sequence[GameState], y: Sequence[TrainTarget], learning_rate=0.01):
        return self.update(list(zip(X, y)), learning_rate)

    def fit(self, X: Sequence[GameState], y: Sequence[TrainTarget], learning_rate=0.01,
            n_steps: int = 100):
        batch = list(zip(X, y))
        for _ in range(n_steps):
            self.update(batch, learning_rate)
        return self

    def predict(self, X: Sequence[GameState], latent: int = 0) -> np.ndarray:
        """Greedy prior move for each position."""
        return np.array([int(np.argmax(self.evaluate(s, latent).p)) for s in X])

    def snapshot(self) -> "_Evaluator":
        """Independent copy for read-only use by searches."""
        clone = copy.deepcopy(self)
        clone._invalidate()
        return clone

    # -- persistence ----------------------------------------------------
    def _meta(self) -> dict:
        return {"format_version": FORMAT_VERSION, "backend": self.backend,
                "params": self.get_params()}

    def save(self, path) -> None:
        arrays = self._arrays()
        arrays["__meta__"] = np.array(json.dumps(self._meta(), sort_keys=True))
        save_npz(path, arrays)

    @staticmethod
    def load(path) -> "_Evaluator":
        data = load_npz(path)
        meta = json.loads(str(data.pop("__meta__")))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format_version')!r}")
        cls = {"tabular": TabularEvaluator, "mlp": MLPEvaluator}[meta["backend"]]
        params = meta["params"]
        if "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        est = cls(**params)
        est._restore(data)
        return est


class TabularEvaluator(_Evaluator):
    """One (logits, value pre-activation, intrinsic value) row per (position, latent)."""

    backend = "tabular"

    def __init__(self, game: str = "tictactoe", n_players: int = 1, l2: float = 1e-4,
                 intrinsic_weight: float = 1.0, momentum: float = 0.9,
                 history_length: int = 0):
        self.game = game
        self.n_players = n_players
        self.l2 = l2
        self.intrinsic_weight = intrinsic_weight
        self.momentum = momentum
        self.history_length = history_length

    @property
    def table_(self) -> Dict[tuple, np.ndarray]:
        if "_table" not in self.__dict__:
            self.__dict__["_table"] = {}
            self.__dict__["_velocity"] = {}
        return self.__dict__["_table"]

    @property
    def velocity_(self) -> Dict[tuple, np.ndarray]:
        self.table_
        return self.__dict__["_velocity"]

    def _evaluate(self, state, latent):
        game = self._game()
        mask = _legal_mask(game, state)
        row = self.table_.get((state.board, state.to_move, latent))
        if row is None:
            n = mask.sum()
            p = mask / n if n else mask.astype(np.float64)
            return EvalOutput(p, 0.0, 0.0)
        A = game.spec.n_actions
        p = _masked_softmax(row[:A], mask)
        return EvalOutput(p, float(np.tanh(row[A])), float(row[A + 1]))

    def _forward_batch(self, batch):
        outs = [self.evaluate(s, t.latent) for s, t in batch]
        return (np.stack([o.p for o in outs]), np.array([o.v for o in outs]),
                np.array([o.v_d for o in outs]))

    def _sq_norm(self, batch):
        keys = {(s.board, s.to_move, t.latent) for s, t in batch}
        return float(sum(np.sum(self.table_[k] ** 2) for k in keys if k in self.table_))

    def _gradients(self, batch, history_dropout, rng):
        game = self._game()
        A = game.spec.n_actions
        B = len(batch)
        grads: Dict[tuple, np.ndarray] = {}
        for s, t in batch:
            key = (s.board, s.to_move, t.latent)
            row = self.table_.get(key)
            if row is None:
                row = np.zeros(A + 2)
            mask = _legal_mask(game, s)
            p = _masked_softmax(row[:A], mask)
            v = np.tanh(row[A])
            g = np.zeros(A + 2)
            g[:A] = np.where(mask, p - t.pi, 0.0)
            g[A] = 2.0 * (v - t.z) * (1.0 - v * v)
            g[A + 1] = 2.0 * self.intrinsic_weight * (row[A + 1] - t.z_d)
            g /= B
            if key in grads:
                grads[key] += g
            else:
                grads[key] = g
        for key, g in grads.items():
            row = self.table_.get(key)
            if row is not None:
                g += 2.0 * self.l2 * row
        return grads

    def _apply(self, grads, lr):
        table, vel = self.table_, self.velocity_
        A = self._game().spec.n_actions
        for key, g in grads.items():
            buf = vel.get(key)
            buf = g.copy() if buf is None else self.momentum * buf + g
            vel[key] = buf
            row = table.get(key)
            if row is None:
                row = np.zeros(A + 2)
            table[key] = row - lr * buf

    def _sorted_keys(self):
        return sorted(self.table_, key=lambda k: (k[2], k[1], k[0]))

    def _arrays(self):
        keys = self._sorted_keys()
        A = self._game().spec.n_actions
        cells = self._game().cells
        boards = np.array([k[0] for k in keys], dtype=np.int8).reshape(len(keys), cells)
        return {
            "boards": boards,
            "to_move": np.array([k[1] for k in keys], dtype=np.int8),
            "latents": np.array([k[2] for k in keys], dtype=np.int16),
            "rows": np.array([self.table_[k] for k in keys]).reshape(len(keys), A + 2),
            "velocity": np.array([self.velocity_.get(k, np.zeros(A + 2)) for k in keys]
                                 ).reshape(len(keys), A + 2),
        }

    def _restore(self, data):
        table, vel = self.table_, self.velocity_
        for b, tm, lat, row, buf in zip(data["boards"], data["to_move"], data["latents"],
                                        data["rows"], data["velocity"]):
            key = (tuple(int(x) for x in b), int(tm), int(lat))
            table[key] = row.copy()
            vel[key] = buf.copy()


class MLPEvaluator(_Evaluator):
    """Shared tanh torso over flattened planes; policy, value and intrinsic heads."""

    backend = "mlp"
    _ORDER = ("W1", "b1", "W2", "b2", "Wp", "bp", "wv", "bv", "wd", "bd")

    def __init__(self, game: str = "tictactoe", n_players: int = 1, hidden=(64, 64),
                 l2: float = 1e-4, intrinsic_weight: float = 1.0, momentum: float = 0.9,
                 history_length: int = 0, random_state: int = 0):
        self.game = game
        self.n_players = n_players
        self.hidden = hidden
        self.l2 = l2
        self.intrinsic_weight = intrinsic_weight
        self.momentum = momentum
        self.history_length = history_length
        self.random_state = random_state

    @property
    def params_(self) -> Dict[str, np.ndarray]:
        if "_params" not in self.__dict__:
            self.__dict__["_params"] = self._init_params()
            self.__dict__["_velocity"] = {k: np.zeros_like(v) for k, v in self._params.items()}
        return self.__dict__["_params"]

    @property
    def velocity_(self):
        self.params_
        return self.__dict__["_velocity"]

    def input_dim(self) -> int:
        game = self._game()
        return game.n_planes(self.n_players) * game.cells

    def _init_params(self):
        rng = np.random.default_rng(self.random_state)
        h1, h2 = self.hidden
        d = self.input_dim()
        A = self._game().spec.n_actions

        def dense(n_in, n_out, scale=1.0):
            return rng.normal(0.0, scale / np.sqrt(n_in), size=(n_in, n_out))

        return {
            "W1": dense(d, h1), "b1": np.zeros(h1),
            "W2": dense(h1, h2), "b2": np.zeros(h2),
            "Wp": dense(h2, A, 0.1), "bp": np.zeros(A),
            "wv": dense(h2, 1, 0.1)[:, 0], "bv": np.zeros(1),
            "wd": dense(h2, 1, 0.1)[:, 0], "bd": np.zeros(1),
        }

    def set_flat_params(self, flat: np.ndarray):
        """Overwrite all parameters from one flat vector (layout of :meth:`flat_params`)."""
        params = self.params_
        i = 0
        for name in self._ORDER:
            n = params[name].size
            params[name] = flat[i:i + n].reshape(params[name].shape).astype(np.float64)
            i += n
        self._invalidate()

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params_[k].ravel() for k in self._ORDER])

    def _encode(self, state, latent):
        return self._game().encode_planes(state, latent, self.n_players).ravel()

    def _forward(self, X, mask):
        P = self.params_
        h1 = np.tanh(X @ P["W1"] + P["b1"])
        h2 = np.tanh(h1 @ P["W2"] + P["b2"])
        logits = h2 @ P["Wp"] + P["bp"]
        p = _masked_softmax(logits, mask)
        v = np.tanh(h2 @ P["wv"] + P["bv"][0])
        vd = h2 @ P["wd"] + P["bd"][0]
        return h1, h2, p, v, vd

    def _evaluate(self, state, latent):
        mask = _legal_mask(self._game(), state)
        _, _, p, v, vd = self._forward(self._encode(state, latent)[None, :], mask[None, :])
        return EvalOutput(p[0], float(v[0]), float(vd[0]))

    def _inputs(self, batch, history_dropout=0.0, rng=None):
        game = self._game()
        rows = []
        hist = game.history_plane_slice()
        for s, t in batch:
            planes = game.encode_planes(s, t.latent, self.n_players)
            if history_dropout > 0.0:
                planes = apply_history_dropout(planes, hist, history_dropout, rng)
            rows.append(planes.ravel())
        X = np.stack(rows)
        mask = np.stack([_legal_mask(game, s) for s, _ in batch])
        return X, mask

    def _forward_batch(self, batch):
        X, mask = self._inputs(batch)
        _, _, p, v, vd = self._forward(X, mask)
        return p, v, vd

    def _sq_norm(self, batch):
        return float(sum(np.sum(v ** 2) for v in self.params_.values()))

    def _gradients(self, batch, history_dropout=0.0, rng=None):
        if history_dropout > 0.0:
            rng = check_rng(rng)
        X, mask = self._inputs(batch, history_dropout, rng)
        P = self.params_
        B = X.shape[0]
        h1, h2, p, v, vd = self._forward(X, mask)
        pi = np.stack([t.pi for _, t in batch])
        z = np.array([t.z for _, t in batch])
        zd = np.array([t.z_d for _, t in batch])

        d_logits = np.where(mask, p - pi, 0.0) / B
        d_u = 2.0 * (v - z) * (1.0 - v * v) / B
        d_vd = 2.0 * self.intrinsic_weight * (vd - zd) / B

        g = {}
        g["Wp"] = h2.T @ d_logits
        g["bp"] = d_logits.sum(axis=0)
        g["wv"] = h2.T @ d_u
        g["bv"] = np.array([d_u.sum()])
        g["wd"] = h2.T @ d_vd
        g["bd"] = np.array([d_vd.sum()])
        d_h2 = d_logits @ P["Wp"].T + np.outer(d_u, P["wv"]) + np.outer(d_vd, P["wd"])
        d_a2 = d_h2 * (1.0 - h2 * h2)
        g["W2"] = h1.T @ d_a2
        g["b2"] = d_a2.sum(axis=0)
        d_a1 = (d_a2 @ P["W2"].T) * (1.0 - h1 * h1)
        g["W1"] = X.T @ d_a1
        g["b1"] = d_a1.sum(axis=0)
        for k in g:
            g[k] = g[k] + 2.0 * self.l2 * P[k]
        return g

    def gradient(self, batch) -> np.ndarray:
        """Flat loss gradient (same layout as :meth:`flat_params`)."""
        g = self._gradients(batch)
        return np.concatenate([g[k].ravel() for k in self._ORDER])

    def _apply(self, grads, lr):
        P, V = self.params_, self.velocity_
        for k, g in grads.items():
            V[k] = self.momentum * V[k] + g
            P[k] = P[k] - lr * V[k]

    def _arrays(self):
        out = {k: v for k, v in self.params_.items()}
        out.update({"velocity_" + k: v for k, v in self.velocity_.items()})
        return out

    def _restore(self, data):
        self.__dict__["_params"] = {k: data[k].copy() for k in self._ORDER}
        self.__dict__["_velocity"] = {k: data["velocity_" + k].copy() for k in self._ORDER}


def load_evaluator(path) -> _Evaluator:
    return _Evaluator.load(path)


def make_evaluator(backend: str, game: str, n_players: int, **kwargs) -> _Evaluator:
    if backend == "tabular":
        kwargs.pop("hidden", None)
        kwargs.pop("random_state", None)
        return TabularEvaluator(game=game, n_players=n_players, **kwargs)
    if backend == "mlp":
        return MLPEvaluator(game=game, n_players=n_players, **kwargs)
    raise ValueError(f"unknown evaluator backend {backend!r}")

