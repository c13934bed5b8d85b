"""Timestamped session records and their on-disk forms (JSON lines + trial CSV).

A :class:`SessionLog` holds one record per decode tick plus one record per
reaching trial.  JSON floats use Python's shortest round-trip repr, so values
reload bit-exactly; that property is what the replay check relies on.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

_LOG_VERSION = 1


@dataclass
class TickRecord:
    t: float                 # seconds since session start
    instructed: int          # instructed state label
    decoded: int             # argmax of gamma
    gamma: np.ndarray
    posterior: np.ndarray
    y_hat: np.ndarray
    y_opt: np.ndarray
    coords: np.ndarray       # effector vector after this tick's step
    target: object           # 3-list, float (angle) or None during idle
    control_weight: float    # omega_c applied this tick (1.0 = unassisted)


@dataclass
class TrialRecord:
    task_index: int
    state: int
    state_name: str
    target: object
    t_start: float
    t_end: float
    hit: bool
    path_length: float
    straight_distance: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def r_ratio(self) -> float | None:
        if self.straight_distance <= 0.0:
            return None
        return self.path_length / self.straight_distance


@dataclass
class SessionLog:
    tick_s: float
    state_names: tuple
    ticks: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    # -- array views ------------------------------------------------------

    def instructed(self) -> np.ndarray:
        return np.array([r.instructed for r in self.ticks], dtype=np.intp)

    def decoded(self) -> np.ndarray:
        return np.array([r.decoded for r in self.ticks], dtype=np.intp)

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.ticks])

    def y_hat(self) -> np.ndarray:
        return np.array([r.y_hat for r in self.ticks])

    def y_opt(self) -> np.ndarray:
        return np.array([r.y_opt for r in self.ticks])

    def control_weights(self) -> np.ndarray:
        return np.array([r.control_weight for r in self.ticks])

    @property
    def duration_s(self) -> float:
        return len(self.ticks) * self.tick_s

    # -- persistence ----------------------------------------------------------

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            header = {
                "type": "header",
                "version": _LOG_VERSION,
                "tick_s": self.tick_s,
                "states": list(self.state_names),
                "meta": _jsonable(self.meta),
            }
            fh.write(json.dumps(header) + "\n")
            for r in self.ticks:
                fh.write(
                    json.dumps(
                        {
                            "type": "tick",
                            "t": r.t,
                            "instructed": r.instructed,
                            "decoded": r.decoded,
                            "gamma": r.gamma.tolist(),
                            "posterior": r.posterior.tolist(),
                            "y_hat": r.y_hat.tolist(),
                            "y_opt": r.y_opt.tolist(),
                            "coords": r.coords.tolist(),
                            "target": _jsonable(r.target),
                            "control_weight": r.control_weight,
                        }
                    )
                    + "\n"
                )
            for r in self.trials:
                fh.write(
                    json.dumps(
                        {
                            "type": "trial",
                            "task_index": r.task_index,
                            "state": r.state,
                            "state_name": r.state_name,
                            "target": _jsonable(r.target),
                            "t_start": r.t_start,
                            "t_end": r.t_end,
                            "hit": r.hit,
                            "path_length": r.path_length,
                            "straight_distance": r.straight_distance,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load_jsonl(cls, path) -> "SessionLog":
        log = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                kind = doc.pop("type")
                if kind == "header":
                    if doc["version"] != _LOG_VERSION:
                        raise ValueError(f"unsupported log version {doc['version']}")
                    log = cls(
                        tick_s=doc["tick_s"],
                        state_names=tuple(doc["states"]),
                        meta=doc.get("meta", {}),
                    )
                elif kind == "tick":
                    if log is None:
                        raise ValueError("tick record before header")
                    log.ticks.append(
                        TickRecord(
                            t=doc["t"],
                            instructed=doc["instructed"],
                            decoded=doc["decoded"],
                            gamma=np.array(doc["gamma"]),
                            posterior=np.array(doc["posterior"]),
                            y_hat=np.array(doc["y_hat"]),
                            y_opt=np.array(doc["y_opt"]),
                            coords=np.array(doc["coords"]),
                            target=doc["target"],
                            control_weight=doc["control_weight"],
                        )
                    )
                elif kind == "trial":
                    if log is None:
                        raise ValueError("trial record before header")
                    log.trials.append(TrialRecord(**doc))
                else:
                    raise ValueError(f"unknown record type {kind!r}")
        if log is None:
            raise ValueError("log file has no header line")
        return log

    def save_trials_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "task_index", "state", "state_name", "target", "hit",
                    "duration_s", "path_length", "straight_distance", "r_ratio",
                ]
            )
            for r in self.trials:
                ratio = r.r_ratio
                writer.writerow(
                    [
                        r.task_index, r.state, r.state_name,
                        json.dumps(_jsonable(r.target)), int(r.hit),
                        f"{r.duration:.6g}", f"{r.path_length:.9g}",
                        f"{r.straight_distance:.9g}",
                        "" if ratio is None else f"{ratio:.9g}",
                    ]
                )


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value
