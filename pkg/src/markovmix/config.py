"""Session configuration: schema, validation, presets.

Configs are human-readable JSON; ``load_config`` reports problems with the
JSON-path of the offending field.  ``standard_benchmark`` is the fixed
desk-scale 3-state setup the test suite and demos run on.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .features import ControlLayout, FeatureConfig
from .simulator import EffectorConfig, SessionSettings


class ConfigError(ValueError):
    """Invalid configuration; the message names the JSON path."""


@dataclass(frozen=True)
class DecoderParams:
    max_factors: int = 8
    expert_forgetting: float = 1.0
    gating_forgetting: float = 1.0
    dynamic_gating: bool = True
    block_len: int = 150


@dataclass(frozen=True)
class GeneratorParams:
    base_level: float = 0.15
    signature_gain: float = 2.0
    coupling_base: float = 0.9
    coupling_gain: float = 0.45
    noise: float = 0.35
    phase_seed: int = 1234


@dataclass(frozen=True)
class SchedulePreset:
    cycles: int = 2
    trials_per_task: int = 3
    idle_s: float = 12.0


@dataclass(frozen=True)
class Phase:
    kind: str                      # "train" | "test"
    sessions: int = 1
    assist: float | None = None    # control weight during training sessions


@dataclass(frozen=True)
class SessionConfig:
    seed: int = 0
    features: FeatureConfig = field(default_factory=FeatureConfig)
    layout: ControlLayout = field(default_factory=ControlLayout.hands3)
    decoder: DecoderParams = field(default_factory=DecoderParams)
    effector: dict = field(default_factory=dict)   # EffectorConfig overrides
    generator: GeneratorParams = field(default_factory=GeneratorParams)
    schedule: SchedulePreset = field(default_factory=SchedulePreset)
    phases: tuple = (Phase("train", 6, assist=0.7), Phase("test", 4))
    trial_timeout_s: float = 8.0

    def effector_config(self) -> EffectorConfig:
        return EffectorConfig(layout=self.layout, **self.effector)

    def settings(self, assist: float | None = None) -> SessionSettings:
        return SessionSettings(
            feature_cfg=self.features,
            effector_cfg=self.effector_config(),
            block_len=self.decoder.block_len,
            trial_timeout_s=self.trial_timeout_s,
            assist_weight=assist,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "features": {
                "rate": self.features.rate,
                "channels": self.features.n_channels,
                "freqs": list(self.features.freqs),
                "epoch_s": self.features.epoch_s,
                "slide_s": self.features.slide_s,
                "time_points": self.features.n_time_points,
                "cycles": self.features.n_cycles,
            },
            "layout": {
                "names": list(self.layout.state_names),
                "kinds": list(self.layout.kinds),
                "masks": [list(m) for m in self.layout.masks],
            },
            "decoder": asdict(self.decoder),
            "effector": dict(self.effector),
            "generator": asdict(self.generator),
            "schedule": asdict(self.schedule),
            "phases": [
                {"kind": p.kind, "sessions": p.sessions, "assist": p.assist}
                for p in self.phases
            ],
            "trial_timeout_s": self.trial_timeout_s,
        }


def standard_benchmark(
    seed: int = 7,
    noise: float = 0.35,
    dynamic_gating: bool = True,
    train_sessions: int = 6,
    test_sessions: int = 4,
    assist: float | None = 0.7,
) -> SessionConfig:
    """The fixed desk-scale 3-state benchmark (separable signatures).

    Training phases use the maximal 30% support blend so cold-start trials
    complete and the class composition stays balanced.
    """
    return SessionConfig(
        seed=seed,
        generator=GeneratorParams(noise=noise),
        decoder=DecoderParams(dynamic_gating=dynamic_gating),
        phases=(
            Phase("train", train_sessions, assist=assist),
            Phase("test", test_sessions),
        ),
    )


# ---------------------------------------------------------------------------
# JSON loading with located errors
# ---------------------------------------------------------------------------

_LAYOUT_PRESETS = {
    "hands3": ControlLayout.hands3,
    "hands_wrists5": ControlLayout.hands_wrists5,
}

_FEATURE_PRESETS = {
    "desk": FeatureConfig,
    "paper": FeatureConfig.paper,
}


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _get(doc: dict, path: str, key: str, kind, default):
    value = doc.get(key, default)
    if value is None and default is None:
        return None
    _expect(isinstance(value, kind), f"{path}.{key}", f"expected {kind}")
    return value


def _check_keys(doc: dict, path: str, allowed: set) -> None:
    extra = set(doc) - allowed
    _expect(not extra, path, f"unknown keys {sorted(extra)}")


def _parse_features(doc, path: str) -> FeatureConfig:
    if "preset" in doc:
        _check_keys(doc, path, {"preset"})
        _expect(doc["preset"] in _FEATURE_PRESETS, f"{path}.preset",
                f"one of {sorted(_FEATURE_PRESETS)}")
        return _FEATURE_PRESETS[doc["preset"]]()
    _check_keys(
        doc, path,
        {"rate", "channels", "freqs", "epoch_s", "slide_s", "time_points", "cycles"},
    )
    base = FeatureConfig()
    try:
        return FeatureConfig(
            rate=float(_get(doc, path, "rate", (int, float), base.rate)),
            n_channels=int(_get(doc, path, "channels", int, base.n_channels)),
            freqs=tuple(float(f) for f in _get(doc, path, "freqs", list, list(base.freqs))),
            epoch_s=float(_get(doc, path, "epoch_s", (int, float), base.epoch_s)),
            slide_s=float(_get(doc, path, "slide_s", (int, float), base.slide_s)),
            n_time_points=int(_get(doc, path, "time_points", int, base.n_time_points)),
            n_cycles=float(_get(doc, path, "cycles", (int, float), base.n_cycles)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_layout(doc, path: str) -> ControlLayout:
    if isinstance(doc, str):
        _expect(doc in _LAYOUT_PRESETS, path, f"one of {sorted(_LAYOUT_PRESETS)}")
        return _LAYOUT_PRESETS[doc]()
    _expect(isinstance(doc, dict), path, "expected preset name or object")
    _check_keys(doc, path, {"names", "kinds", "masks"})
    try:
        return ControlLayout(
            state_names=tuple(doc["names"]),
            kinds=tuple(doc["kinds"]),
            masks=tuple(tuple(int(i) for i in m) for m in doc["masks"]),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_phases(docs, path: str) -> tuple:
    _expect(isinstance(docs, list) and docs, path, "expected a non-empty list")
    phases = []
    for i, doc in enumerate(docs):
        p = f"{path}[{i}]"
        _expect(isinstance(doc, dict), p, "expected an object")
        _check_keys(doc, p, {"kind", "sessions", "assist"})
        kind = _get(doc, p, "kind", str, None)
        _expect(kind in ("train", "test"), f"{p}.kind", "must be 'train' or 'test'")
        sessions = _get(doc, p, "sessions", int, 1)
        _expect(sessions >= 1, f"{p}.sessions", "must be >= 1")
        assist = doc.get("assist")
        if assist is not None:
            _expect(isinstance(assist, (int, float)), f"{p}.assist", "expected a number")
            _expect(0.7 <= assist <= 1.0, f"{p}.assist",
                    "control weight must lie in [0.7, 1.0] (30% support cap)")
            _expect(kind == "train", f"{p}.assist", "assist only applies to training phases")
        phases.append(Phase(kind=kind, sessions=int(sessions), assist=assist))
    return tuple(phases)


def parse_config(doc: dict, path: str = "config") -> SessionConfig:
    _expect(isinstance(doc, dict), path, "expected a JSON object")
    _check_keys(
        doc, path,
        {"seed", "features", "layout", "decoder", "effector", "generator",
         "schedule", "phases", "trial_timeout_s"},
    )
    features = _parse_features(doc.get("features", {"preset": "desk"}), f"{path}.features")
    layout = _parse_layout(doc.get("layout", "hands3"), f"{path}.layout")

    dec_doc = doc.get("decoder", {})
    _check_keys(dec_doc, f"{path}.decoder",
                {"max_factors", "expert_forgetting", "gating_forgetting",
                 "dynamic_gating", "block_len"})
    dp = DecoderParams()
    decoder = DecoderParams(
        max_factors=int(_get(dec_doc, f"{path}.decoder", "max_factors", int, dp.max_factors)),
        expert_forgetting=float(_get(dec_doc, f"{path}.decoder", "expert_forgetting",
                                     (int, float), dp.expert_forgetting)),
        gating_forgetting=float(_get(dec_doc, f"{path}.decoder", "gating_forgetting",
                                     (int, float), dp.gating_forgetting)),
        dynamic_gating=bool(_get(dec_doc, f"{path}.decoder", "dynamic_gating", bool,
                                 dp.dynamic_gating)),
        block_len=int(_get(dec_doc, f"{path}.decoder", "block_len", int, dp.block_len)),
    )
    _expect(decoder.max_factors >= 1, f"{path}.decoder.max_factors", "must be >= 1")
    _expect(0.0 <= decoder.expert_forgetting <= 1.0,
            f"{path}.decoder.expert_forgetting", "must lie in [0, 1]")
    _expect(0.0 <= decoder.gating_forgetting <= 1.0,
            f"{path}.decoder.gating_forgetting", "must lie in [0, 1]")
    _expect(decoder.block_len >= 1, f"{path}.decoder.block_len", "must be >= 1")

    eff_doc = doc.get("effector", {})
    _check_keys(eff_doc, f"{path}.effector",
                {"workspace_half", "max_step", "max_angle_step", "hit_radius", "hit_angle"})
    for key in eff_doc:
        _expect(isinstance(eff_doc[key], (int, float)) and eff_doc[key] > 0,
                f"{path}.effector.{key}", "must be a positive number")

    gen_doc = doc.get("generator", {})
    _check_keys(gen_doc, f"{path}.generator",
                {"base_level", "signature_gain", "coupling_base", "coupling_gain",
                 "noise", "phase_seed"})
    gp = GeneratorParams()
    generator = GeneratorParams(
        base_level=float(_get(gen_doc, f"{path}.generator", "base_level", (int, float), gp.base_level)),
        signature_gain=float(_get(gen_doc, f"{path}.generator", "signature_gain", (int, float), gp.signature_gain)),
        coupling_base=float(_get(gen_doc, f"{path}.generator", "coupling_base", (int, float), gp.coupling_base)),
        coupling_gain=float(_get(gen_doc, f"{path}.generator", "coupling_gain", (int, float), gp.coupling_gain)),
        noise=float(_get(gen_doc, f"{path}.generator", "noise", (int, float), gp.noise)),
        phase_seed=int(_get(gen_doc, f"{path}.generator", "phase_seed", int, gp.phase_seed)),
    )
    _expect(generator.noise >= 0.0, f"{path}.generator.noise", "must be >= 0")

    sch_doc = doc.get("schedule", {})
    _check_keys(sch_doc, f"{path}.schedule", {"cycles", "trials_per_task", "idle_s"})
    sp = SchedulePreset()
    schedule = SchedulePreset(
        cycles=int(_get(sch_doc, f"{path}.schedule", "cycles", int, sp.cycles)),
        trials_per_task=int(_get(sch_doc, f"{path}.schedule", "trials_per_task", int, sp.trials_per_task)),
        idle_s=float(_get(sch_doc, f"{path}.schedule", "idle_s", (int, float), sp.idle_s)),
    )
    _expect(schedule.cycles >= 1, f"{path}.schedule.cycles", "must be >= 1")
    _expect(schedule.trials_per_task >= 1, f"{path}.schedule.trials_per_task", "must be >= 1")

    phases = _parse_phases(doc.get("phases", [{"kind": "train", "sessions": 6},
                                               {"kind": "test", "sessions": 4}]),
                           f"{path}.phases")
    timeout = _get(doc, path, "trial_timeout_s", (int, float), 12.0)
    _expect(timeout > 0, f"{path}.trial_timeout_s", "must be positive")

    return SessionConfig(
        seed=int(_get(doc, path, "seed", int, 0)),
        features=features,
        layout=layout,
        decoder=decoder,
        effector=dict(eff_doc),
        generator=generator,
        schedule=schedule,
        phases=phases,
        trial_timeout_s=float(timeout),
    )


def load_config(path) -> SessionConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(doc)


def save_config(cfg: SessionConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")
