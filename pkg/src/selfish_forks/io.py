"""JSON documents: strategy files, analysis results and simulation reports.

A strategy file looks like::

    {"format": "selfish-forks-strategy", "encoding_version": 1,
     "params": {"p": 0.3, "gamma": 0.5, "d": 2, "f": 1, "l": 4},
     "state_count": 148,
     "actions": {"T:M;O:H;C:0|0": "mine", ...}}

Every document is written with sorted keys and a trailing newline so
that identical inputs produce identical bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .encoding import ENCODING_VERSION
from .errors import StrategyMismatchError, ValidationError

STRATEGY_FORMAT = "selfish-forks-strategy"
PARAM_KEYS = ("p", "gamma", "d", "f", "l")


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc


@dataclass(frozen=True)
class StrategyFile:
    params: dict
    state_count: int
    actions: dict = field(repr=False)
    encoding_version: int = ENCODING_VERSION

    def to_dict(self) -> dict:
        return {
            "format": STRATEGY_FORMAT,
            "encoding_version": self.encoding_version,
            "params": dict(self.params),
            "state_count": self.state_count,
            "actions": dict(self.actions),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StrategyFile":
        if doc.get("format") != STRATEGY_FORMAT:
            raise ValidationError("not a strategy document")
        if doc.get("encoding_version") != ENCODING_VERSION:
            raise StrategyMismatchError(
                f"strategy uses state encoding version {doc.get('encoding_version')}, "
                f"expected {ENCODING_VERSION}"
            )
        try:
            params = {k: doc["params"][k] for k in PARAM_KEYS}
            sf = cls(params, int(doc["state_count"]), dict(doc["actions"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"incomplete strategy document: {exc}") from exc
        if len(sf.actions) != sf.state_count:
            raise StrategyMismatchError(
                f"strategy header declares {sf.state_count} states but lists {len(sf.actions)}"
            )
        return sf

    def check_params(self, params) -> None:
        mine = {k: getattr(params, k) for k in PARAM_KEYS}
        if mine != self.params:
            raise StrategyMismatchError(f"strategy was computed for {self.params}, not {mine}")


def strategy_file(model, strategy) -> StrategyFile:
    """Export a solved strategy of an :class:`~selfish_forks.model.AttackModel`."""
    actions = model.strategy_to_map(strategy)
    return StrategyFile(model.params.to_dict(), model.state_count, actions)


def write_strategy_file(path, model, strategy) -> StrategyFile:
    sf = strategy_file(model, strategy)
    write_json(path, sf.to_dict())
    return sf


def read_strategy_file(path) -> StrategyFile:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"strategy file {path} not found")
    return StrategyFile.from_dict(read_json(p))


def analysis_document(report, params, wall_time_s: float) -> dict:
    return {
        "params": params.to_dict(),
        "errev_lower": report.errev_lower,
        "epsilon": report.epsilon,
        "state_count": report.state_count,
        "solver_calls": report.solver_calls,
        "beta_trace": [[b, g] for b, g in report.beta_trace],
        "wall_time_s": wall_time_s,
    }
