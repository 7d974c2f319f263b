import math

import numpy as np
import pytest

from divzero.evaluator import (MLPEvaluator, NonFiniteGradientError, TabularEvaluator, TrainTarget,
                               apply_history_dropout, load_evaluator)
from divzero.games import get_game

from conftest import play, reachable


def _target(pi, z=0.0, z_d=0.0, latent=0, n=9):
    vec = np.zeros(n)
    for m, w in pi.items():
        vec[m] = w
    return TrainTarget(vec, z, z_d, latent)


def _random_batch(game, rng, n, n_players=1):
    states = [s for s in reachable(game, 5) if not game.is_terminal(s)]
    out = []
    for k in rng.choice(len(states), n, replace=False):
        s = states[k]
        legal = game.legal_moves(s)
        pi = np.zeros(game.spec.n_actions)
        pi[legal] = rng.dirichlet(np.ones(len(legal)))
        out.append((s, TrainTarget(pi, float(rng.choice([-1, 0, 1])), float(rng.normal()),
                                   int(rng.integers(n_players)))))
    return out


def test_fresh_tabular_is_uniform(ttt):
    ev = TabularEvaluator()
    s = play(ttt, [4])
    out = ev.evaluate(s, 0)
    assert np.allclose(out.p[ttt.legal_moves(s)], 1 / 8) and out.p[4] == 0
    assert out.v == 0.0 and out.v_d == 0.0
    again = ev.evaluate(s, 0)
    assert np.array_equal(out.p, again.p) and out.v == again.v


def test_loss_by_substitution(ttt):
    s = play(ttt, [0, 1, 2, 4, 3, 5, 7])  # two legal moves left: 6 and 8
    assert ttt.legal_moves(s) == [6, 8]
    ev = TabularEvaluator(l2=0.0)
    batch = [(s, _target({6: 0.5, 8: 0.5}, z=1.0))]
    assert ev.loss(batch) == pytest.approx(1.0 + math.log(2), abs=1e-12)
    assert ev.loss(batch * 2) == pytest.approx(ev.loss(batch), abs=1e-15)


def test_perfect_fit_has_zero_loss(ttt):
    s = play(ttt, [0, 1, 2, 4, 3, 5, 7])
    ev = TabularEvaluator(l2=0.0)
    row = np.zeros(11)
    row[6], row[8] = 60.0, -60.0
    row[9] = np.arctanh(0.5)
    row[10] = -0.25
    ev.table_[(s.board, s.to_move, 0)] = row
    batch = [(s, _target({6: 1.0}, z=0.5, z_d=-0.25))]
    assert ev.loss(batch) == pytest.approx(0.0, abs=1e-12)


def test_learning_rate_zero_leaves_params(ttt):
    rng = np.random.default_rng(0)
    batch = _random_batch(ttt, rng, 8)
    mlp = MLPEvaluator(hidden=(8, 8))
    before = mlp.flat_params().copy()
    mlp.update(batch, 0.0)
    assert np.array_equal(before, mlp.flat_params())
    tab = TabularEvaluator()
    tab.update(batch, 0.0)
    assert all(np.all(r == 0) for r in tab.table_.values())


def test_single_sample_convergence_mlp(ttt):
    s = play(ttt, [4, 0])
    batch = [(s, _target({8: 1.0}, z=1.0, z_d=0.3))]
    # plain gradient descent (no momentum) so the loss sequence must be monotone
    ev = MLPEvaluator(hidden=(16, 16), l2=0.0, momentum=0.0, random_state=1)
    losses = []
    for _ in range(5000):
        losses.append(ev.loss(batch))
        ev.update(batch, 5e-2)
        if losses[-1] < 1e-3:
            break
    assert losses[-1] < 1e-3
    assert np.all(np.diff(losses) <= 1e-12)


def test_mlp_gradient_matches_finite_differences():
    game = get_game("tictactoe")
    rng = np.random.default_rng(0)
    batch = _random_batch(game, rng, 4, n_players=2)
    ev = MLPEvaluator(n_players=2, hidden=(2, 2), random_state=0)
    theta0 = ev.flat_params().copy()
    for _ in range(10):
        theta = theta0 + rng.normal(0, 0.5, size=theta0.size)
        ev.set_flat_params(theta)
        g = ev.gradient(batch)
        num = np.zeros_like(theta)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = 1e-5
            ev.set_flat_params(theta + e)
            up = ev.loss(batch)
            ev.set_flat_params(theta - e)
            num[k] = (up - ev.loss(batch)) / 2e-5
        ev.set_flat_params(theta)
        assert np.linalg.norm(g - num) <= 1e-4 * max(np.linalg.norm(num), 1e-8)


def test_tabular_gradient_matches_finite_differences(ttt):
    rng = np.random.default_rng(1)
    batch = _random_batch(ttt, rng, 6)
    ev = TabularEvaluator(l2=1e-3)
    for s, t in batch:
        ev.table_[(s.board, s.to_move, t.latent)] = rng.normal(size=11)
    grads = ev._gradients(batch, 0.0, None)
    for key, g in grads.items():
        for k in range(11):
            row = ev.table_[key]
            old = row[k]
            row[k] = old + 1e-6
            ev._invalidate()
            up = ev.loss(batch)
            row[k] = old - 1e-6
            ev._invalidate()
            down = ev.loss(batch)
            row[k] = old
            ev._invalidate()
            num = (up - down) / 2e-6
            if np.isfinite(num) and k not in _illegal(key):
                assert g[k] == pytest.approx(num, rel=1e-5, abs=1e-8)


def _illegal(key):
    board = key[0]
    return {c for c in range(9) if board[c] != 0}


def test_non_finite_gradient_is_rejected(ttt):
    rng = np.random.default_rng(2)
    batch = _random_batch(ttt, rng, 3)
    ev = MLPEvaluator(hidden=(4, 4))
    ev.params_["W2"][0, 0] = np.nan
    before = ev.flat_params().copy()
    with pytest.raises(NonFiniteGradientError):
        ev.update(batch, 0.1)
    assert np.array_equal(before, ev.flat_params(), equal_nan=True)


def test_policy_is_a_distribution_everywhere(ttt):
    rng = np.random.default_rng(3)
    ev = MLPEvaluator(n_players=3, hidden=(8, 8), random_state=3)
    ev.update(_random_batch(ttt, rng, 16, n_players=3), 0.5)
    for s in reachable(ttt, 4):
        if ttt.is_terminal(s):
            continue
        for j in range(3):
            p = ev.evaluate(s, j).p
            assert abs(p.sum() - 1) <= 1e-6 and np.all(p >= 0)
            assert np.all(p[[m for m in range(9) if m not in ttt.legal_moves(s)]] == 0)


def test_latents_diverge_after_training(ttt):
    s = play(ttt, [4])
    batch = [(s, _target({0: 1.0}, z=1.0, latent=0)), (s, _target({8: 1.0}, z=-1.0, latent=1))]
    for ev in (TabularEvaluator(n_players=2), MLPEvaluator(n_players=2, hidden=(8, 8))):
        for _ in range(50):
            ev.update(batch, 0.1)
        a, b = ev.evaluate(s, 0), ev.evaluate(s, 1)
        assert a.p[0] > b.p[0] and b.p[8] > a.p[8] and a.v > b.v


@pytest.mark.parametrize("backend", ["tabular", "mlp"])
def test_checkpoint_round_trip_bitwise(tmp_path, ttt, backend):
    rng = np.random.default_rng(4)
    ev = TabularEvaluator(n_players=3) if backend == "tabular" else \
        MLPEvaluator(n_players=3, hidden=(8, 8), random_state=4)
    for _ in range(20):
        ev.update(_random_batch(ttt, rng, 16, n_players=3), 0.1)
    path = tmp_path / "ev.npz"
    ev.save(path)
    back = load_evaluator(path)
    assert back.get_params() == ev.get_params()
    states = [s for s in reachable(ttt, 5) if not ttt.is_terminal(s)]
    for k in rng.choice(len(states), 100, replace=False):
        j = int(rng.integers(3))
        a, b = ev.evaluate(states[k], j), back.evaluate(states[k], j)
        assert np.array_equal(a.p, b.p) and a.v == b.v and a.v_d == b.v_d
    ev.save(tmp_path / "again.npz")
    assert (tmp_path / "again.npz").read_bytes() == path.read_bytes()


def test_history_dropout_rates():
    game = get_game("tictactoe", history_length=4)
    s = play(game, [4, 0, 8, 2])
    planes = game.encode_planes(s, 0, 2)
    hist = game.history_plane_slice()
    rng = np.random.default_rng(5)
    assert apply_history_dropout(planes, hist, 0.0, rng) is planes
    out = apply_history_dropout(planes, hist, 1.0, rng)
    assert np.all(out[hist] == 0)
    assert np.array_equal(out[:hist.start], planes[:hist.start])
    assert np.array_equal(out[hist.stop:], planes[hist.stop:])
    ones = np.ones_like(planes)
    zeroed = total = 0
    for _ in range(2500):  # 4 history entries each -> 10000 entries
        o = apply_history_dropout(ones, hist, 0.2, rng)[hist]
        zeroed += int(np.sum(o.reshape(4, 2, -1).max(axis=(1, 2)) == 0))
        total += 4
    sigma = math.sqrt(total * 0.2 * 0.8)
    assert abs(zeroed - 0.2 * total) <= 3 * sigma


def test_estimator_surface(ttt):
    ev = TabularEvaluator(n_players=2)
    s = play(ttt, [4])
    y = [_target({0: 1.0}, z=1.0, latent=0)]
    ev.fit([s], y, learning_rate=0.5, n_steps=20)
    assert ev.predict([s], latent=0)[0] == 0
    assert ev.get_params()["n_players"] == 2
    with pytest.raises(ValueError):
        ev.evaluate(s, 2)
