"""Config files, checkpoint directories, manifests and CSV exports.

Checkpoint directory layout::

    step_0001000/
        config.ini      training configuration ([train] section)
        evaluator.npz   evaluator parameters (see ``_Evaluator.save``)
        team.json       lambdas, ell0, beta, step and game counters
        psi.csv         player, f0..f{D-1}
        payoffs.csv     color, i, j, wins, draws, losses, games
        graphs.csv      color, i, j, weight

Every CSV starts with a fixed header row; ``CSV_SCHEMA_VERSION`` is written
into ``team.json`` and each run manifest. Floats are written with ``repr`` so
a reload is exact.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .diversity import TeamState
from .evaluator import load_evaluator
from .league import PayoffTable

CSV_SCHEMA_VERSION = 1
PAYOFF_COLUMNS = ("color", "i", "j", "wins", "draws", "losses", "games")
GRAPH_COLUMNS = ("color", "i", "j", "weight")


class ConfigError(ValueError):
    """Invalid or unreadable configuration file."""


# -- config files ---------------------------------------------------------

def _field_types(cls) -> Dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _parse_value(name: str, raw: str, hint):
    raw = raw.strip()
    optional = typing.get_origin(hint) is typing.Union and type(None) in typing.get_args(hint)
    if optional:
        if raw.lower() in ("", "none"):
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    try:
        if hint is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if typing.get_origin(hint) is tuple:
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {getattr(hint, '__name__', hint)}")


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value).lower() if isinstance(value, bool) else str(value)


def read_train_config(path, overrides: Optional[dict] = None):
    """Parse and fully validate the ``[train]`` section of an INI file."""
    from .training import TrainConfig
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "train" not in parser:
        raise ConfigError(f"{path}: missing [train] section")
    types = _field_types(TrainConfig)
    values = {}
    for key, raw in parser["train"].items():
        if key not in types:
            raise ConfigError(f"{key}: unknown setting")
        values[key] = _parse_value(key, raw, types[key])
    values.update(overrides or {})
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def write_train_config(path, config) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser["train"] = {k: _format_value(v) for k, v in dataclasses.asdict(config).items()}
    with open(path, "w") as fh:
        parser.write(fh)


# -- CSV helpers ----------------------------------------------------------

def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                        for x in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def payoff_rows(table: PayoffTable):
    for color in range(2):
        for i in range(table.n_players):
            for j in range(table.n_players):
                w, d, l, n = table.cell(color, i, j)
                yield color, i, j, w, d, l, n


def graph_rows(graphs: Sequence[np.ndarray]):
    for color, g in enumerate(graphs):
        for i in range(g.shape[0]):
            for j in range(g.shape[1]):
                yield color, i, j, float(g[i, j])


# -- checkpoints ----------------------------------------------------------

@dataclass
class Checkpoint:
    path: Path
    config: object
    evaluator: object
    team: TeamState
    payoffs: PayoffTable
    graphs: Tuple[np.ndarray, np.ndarray]
    step: int
    games: int

    @property
    def game(self) -> str:
        return self.config.game


def save_checkpoint(path, config, evaluator, team: TeamState, payoffs: PayoffTable,
                    graphs, step: int, games: int) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_train_config(path / "config.ini", config)
    evaluator.save(path / "evaluator.npz")
    meta = {"csv_schema_version": CSV_SCHEMA_VERSION, "step": int(step), "games": int(games),
            "n_players": team.n_players, "feature_dim": team.feature_dim,
            "lambdas": [float(x) for x in team.lambdas], "ell0": float(team.ell0),
            "beta": float(team.beta)}
    (path / "team.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    header = ["player"] + [f"f{k}" for k in range(team.feature_dim)]
    write_csv(path / "psi.csv", header,
              ([i] + [float(x) for x in team.psi[i]] for i in range(team.n_players)))
    write_csv(path / "payoffs.csv", PAYOFF_COLUMNS, payoff_rows(payoffs))
    write_csv(path / "graphs.csv", GRAPH_COLUMNS, graph_rows(graphs))
    return path


def resolve_checkpoint(path) -> Path:
    """Accept a checkpoint dir or a run dir (latest checkpoint is used)."""
    path = Path(path)
    if (path / "evaluator.npz").is_file():
        return path
    ckpts = sorted((path / "checkpoints").glob("step_*")) if (path / "checkpoints").is_dir() \
        else []
    if not ckpts:
        raise FileNotFoundError(f"no checkpoint found at {path}")
    return ckpts[-1]


def load_checkpoint(path) -> Checkpoint:
    path = resolve_checkpoint(path)
    config = read_train_config(path / "config.ini")
    evaluator = load_evaluator(path / "evaluator.npz")
    meta = json.loads((path / "team.json").read_text())
    _, rows = read_csv(path / "psi.csv")
    psi = np.array([[float(x) for x in r[1:]] for r in rows], dtype=np.float64)
    team = TeamState(meta["n_players"], meta["feature_dim"], meta["lambdas"], psi,
                     meta["ell0"], meta["beta"])
    payoffs = PayoffTable(meta["n_players"])
    for r in read_csv(path / "payoffs.csv")[1]:
        color, i, j, w, d, l, _ = (int(x) for x in r)
        payoffs.counts[color, i, j] = (w, d, l)
    n = meta["n_players"]
    graphs = np.zeros((2, n, n))
    for r in read_csv(path / "graphs.csv")[1]:
        graphs[int(r[0]), int(r[1]), int(r[2])] = float(r[3])
    return Checkpoint(path, config, evaluator, team, payoffs, (graphs[0], graphs[1]),
                      meta["step"], meta["games"])


# -- manifests -------------------------------------------------------------

def write_manifest(out_dir, command: str, seed: int, config: Optional[dict] = None,
                   inputs: Optional[dict] = None, outputs: Sequence[str] = ()) -> Path:
    """One manifest per run; no timestamps so reruns are byte-identical."""
    out_dir = Path(out_dir)
    manifest = {"command": command, "seed": seed, "version": __version__,
                "csv_schema_version": CSV_SCHEMA_VERSION, "config": config or {},
                "inputs": inputs or {}, "outputs": sorted(outputs)}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
